//! Proper scoring rules for plug-in Poisson forecasts. Every rule is
//! oriented so that lower is better; the spherical score is negated.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Fixed upper summation index for `sum_k f(k)^2`; `None` uses
    /// `max(y, ceil(mu + 10 sqrt(mu) + 20))`.
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub dawid_sebastiani: f64,
    pub logarithmic: f64,
    pub brier: f64,
    pub spherical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub dawid_sebastiani: f64,
    pub logarithmic: f64,
    pub brier: f64,
    pub spherical: f64,
    pub rmse: f64,
    pub cells: usize,
}

impl ScoreReport {
    /// Rule value by name (`dawid_sebastiani`, `logarithmic`, `brier`,
    /// `spherical`, `rmse`).
    pub fn rule(&self, name: &str) -> Option<f64> {
        Some(match name {
            "dawid_sebastiani" => self.dawid_sebastiani,
            "logarithmic" => self.logarithmic,
            "brier" => self.brier,
            "spherical" => self.spherical,
            "rmse" => self.rmse,
            _ => return None,
        })
    }
}

pub const RULES: [&str; 5] = ["dawid_sebastiani", "logarithmic", "brier", "spherical", "rmse"];

#[inline]
fn ln_pmf(k: f64, mu: f64) -> f64 {
    if k == 0.0 {
        -mu
    } else {
        k * mu.ln() - mu - ln_gamma(k + 1.0)
    }
}

pub fn truncation_point(y: f64, mu: f64) -> usize {
    let auto = (mu + 10.0 * mu.sqrt() + 20.0).ceil() as usize;
    auto.max(y as usize)
}

/// `sum_{k <= k_max} f(k)^2` for the Poisson(mu) pmf.
pub fn sum_squared_pmf(mu: f64, k_max: usize) -> f64 {
    (0..=k_max).map(|k| (2.0 * ln_pmf(k as f64, mu)).exp()).sum()
}

pub fn score_cell(y: f64, mu: f64) -> Result<CellScores> {
    score_cell_with(y, mu, &ScoringOptions::default())
}

pub fn score_cell_with(y: f64, mu: f64, opts: &ScoringOptions) -> Result<CellScores> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::NonPositiveRate { index: 0, value: mu });
    }
    if !(y >= 0.0 && y.fract() == 0.0) {
        return Err(Error::InvalidArgument(format!("observed value {y} is not a count")));
    }
    let k_max = opts.truncation.unwrap_or_else(|| truncation_point(y, mu));
    let sq = sum_squared_pmf(mu, k_max);
    let lf = ln_pmf(y, mu);
    let f = lf.exp();
    Ok(CellScores {
        dawid_sebastiani: (y - mu).powi(2) / mu + mu.ln(),
        logarithmic: -lf,
        brier: -2.0 * f + sq,
        spherical: -f / sq.sqrt(),
    })
}

/// Mean of each rule over paired cells, plus RMSE of the point forecast.
pub fn score_forecast(y: &[f64], mu: &[f64]) -> Result<ScoreReport> {
    score_forecast_with(y, mu, &ScoringOptions::default())
}

pub fn score_forecast_with(y: &[f64], mu: &[f64], opts: &ScoringOptions) -> Result<ScoreReport> {
    if y.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!("{} observations for {} forecasts", y.len(), mu.len())));
    }
    if y.is_empty() {
        return Err(Error::EmptyCells);
    }
    let mut acc = [0.0f64; 5];
    for (index, (&yv, &m)) in y.iter().zip(mu).enumerate() {
        let s = score_cell_with(yv, m, opts).map_err(|e| match e {
            Error::NonPositiveRate { value, .. } => Error::NonPositiveRate { index, value },
            other => other,
        })?;
        acc[0] += s.dawid_sebastiani;
        acc[1] += s.logarithmic;
        acc[2] += s.brier;
        acc[3] += s.spherical;
        acc[4] += (yv - m).powi(2);
    }
    let n = y.len() as f64;
    Ok(ScoreReport {
        dawid_sebastiani: acc[0] / n,
        logarithmic: acc[1] / n,
        brier: acc[2] / n,
        spherical: acc[3] / n,
        rmse: (acc[4] / n).sqrt(),
        cells: y.len(),
    })
}
