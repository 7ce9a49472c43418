//! Out-of-sample comparison of the influence model against a plain Poisson
//! GLM on the direct design.
//!
//! A split holds out whole modeled periods. Each model is fit on the rest
//! and the held-out periods are forecast in time order. A forecast's lag
//! slice is the observed sociomatrix when that slice was a training
//! response (or the initial slice), and `log(mu_hat + 1)` of the previous
//! forecast otherwise. Lag-derived direct columns are rebuilt from the same
//! slice. Exogenous covariates of held-out periods are taken as known.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::dot;
use crate::error::{Error, Result};
use crate::glm::{GlmOptions, PoissonRegression};
use crate::io::config::CvSettings;
use crate::io::input_error;
use crate::io::schema::CV_SCHEMA;
use crate::scoring::{score_forecast_with, ScoreReport, ScoringOptions, RULES};
use crate::sir::{fit_sir, linear_predictor_period, ParameterSet, SirData, SirOptions};
use crate::tensor::{flatten, log1p_slice, Mask};

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Sir(SirOptions),
    /// Poisson regression on the direct design alone.
    PlainGlm(GlmOptions),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Sir(_) => "sir",
            Model::PlainGlm(_) => "glm",
        }
    }

    pub fn fit(&self, data: &SirData, mask: &Mask) -> Result<Fitted> {
        match self {
            Model::Sir(opts) => Ok(Fitted::Sir(fit_sir(data, mask, opts)?.params)),
            Model::PlainGlm(opts) => {
                let (index, y) = flatten(data.response(), mask)?;
                let q = data.q();
                let x = DMatrix::from_fn(index.len(), q, |r, k| {
                    let c = index.cells()[r];
                    data.direct().row(c.t, c.i, c.j)[k]
                });
                let fit = PoissonRegression::new(&x, &y)
                    .names(data.direct().names())
                    .options(*opts)
                    .fit()?;
                Ok(Fitted::Glm(fit.coefficients))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Sir(ParameterSet),
    Glm(Vec<f64>),
}

impl Fitted {
    /// Rates for modeled period `t` given its lag slice `x = log(y + 1)`;
    /// the diagonal is `NaN`.
    pub fn rates(&self, data: &SirData, t: usize, x: &[f64]) -> Vec<f64> {
        let n = data.n();
        let z = data.direct();
        let rows = z.period_rows_with_lag(t, x);
        let eta = match self {
            Fitted::Sir(params) => linear_predictor_period(params, &rows, data.sender(), data.receiver(), x, t),
            Fitted::Glm(coef) => {
                let q = z.q();
                (0..n * n)
                    .map(|c| if c / n == c % n { f64::NAN } else { dot(&rows[c * q..(c + 1) * q], coef) })
                    .collect()
            }
        };
        eta.into_iter().map(f64::exp).collect()
    }
}

/// Forecasts every held-out period, in time order.
pub fn forecast_held_out(fitted: &Fitted, data: &SirData, held_out: &BTreeSet<usize>) -> BTreeMap<usize, Vec<f64>> {
    let n = data.n();
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &t in held_out {
        // slice t is the response of modeled period t - 1
        let x = match t.checked_sub(1).and_then(|prev| out.get(&prev)) {
            Some(prev_mu) => log1p_slice(n, prev_mu),
            None => data.predictor().slice(t).to_vec(),
        };
        let mu = fitted.rates(data, t, &x);
        out.insert(t, mu);
    }
    out
}

/// Held-out period sets, one per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl CvPlan {
    /// `k` folds of `m` modeled periods each, from a seeded shuffle.
    /// Disjoint folds need `k * m <= modeled`; with `overlap` each fold is
    /// drawn independently.
    pub fn new(modeled: usize, k: usize, m: usize, seed: u64, overlap: bool) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InfeasiblePlan("k and m must be positive".into()));
        }
        if m >= modeled {
            return Err(Error::InfeasiblePlan(format!(
                "holding out {m} of {modeled} periods leaves nothing to fit"
            )));
        }
        if !overlap && k * m > modeled {
            return Err(Error::InfeasiblePlan(format!(
                "{k} disjoint folds of {m} periods need {} periods, have {modeled}",
                k * m
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<usize> = (0..modeled).collect();
        let folds = if overlap {
            (0..k)
                .map(|_| {
                    let mut f: Vec<usize> = all.choose_multiple(&mut rng, m).copied().collect();
                    f.sort_unstable();
                    f
                })
                .collect()
        } else {
            all.shuffle(&mut rng);
            all.chunks_exact(m)
                .take(k)
                .map(|c| {
                    let mut f = c.to_vec();
                    f.sort_unstable();
                    f
                })
                .collect()
        };
        Ok(Self { seed, folds })
    }

    pub fn from_settings(modeled: usize, s: &CvSettings) -> Result<Self> {
        Self::new(modeled, s.k, s.m, s.seed, s.overlap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// Fold number, or the horizon for temporal holdout.
    pub label: usize,
    /// Response-period labels of the held-out slices.
    pub held_out: Vec<String>,
    pub cells: usize,
    pub scores: BTreeMap<String, ScoreReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub model: String,
    pub fold: usize,
    pub rule: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema: String,
    /// `cv` or `holdout`.
    pub kind: String,
    pub seed: Option<u64>,
    pub folds: Vec<FoldReport>,
    /// Per model, per rule: mean and range across folds.
    pub summary: BTreeMap<String, BTreeMap<String, RuleSummary>>,
    /// Scores computed elsewhere (for example a tree-ensemble baseline).
    pub external: Vec<ExternalScore>,
}

impl ComparisonReport {
    fn assemble(kind: &str, seed: Option<u64>, folds: Vec<FoldReport>) -> Self {
        let mut summary: BTreeMap<String, BTreeMap<String, RuleSummary>> = BTreeMap::new();
        let models: BTreeSet<&String> = folds.iter().flat_map(|f| f.scores.keys()).collect();
        for model in models {
            let mut rules = BTreeMap::new();
            for rule in RULES {
                let vals: Vec<f64> = folds
                    .iter()
                    .filter_map(|f| f.scores.get(model).and_then(|s| s.rule(rule)))
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                rules.insert(
                    rule.to_string(),
                    RuleSummary {
                        mean: vals.iter().sum::<f64>() / vals.len() as f64,
                        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    },
                );
            }
            summary.insert(model.clone(), rules);
        }
        Self {
            schema: CV_SCHEMA.into(),
            kind: kind.into(),
            seed,
            folds,
            summary,
            external: Vec::new(),
        }
    }

    /// Folds where `model` scores strictly lower than `other` on `rule`.
    pub fn wins(&self, model: &str, other: &str, rule: &str) -> usize {
        self.folds
            .iter()
            .filter(|f| match (f.scores.get(model), f.scores.get(other)) {
                (Some(a), Some(b)) => a.rule(rule) < b.rule(rule),
                _ => false,
            })
            .count()
    }

    /// Merges `model,fold,rule,value` rows.
    pub fn attach_external<R: Read>(&mut self, reader: R, origin: &str) -> Result<()> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        crate::io::events::check_header(rdr.headers()?, &["model", "fold", "rule", "value"], origin)?;
        for (k, rec) in rdr.deserialize::<ExternalScore>().enumerate() {
            let line = k + 2;
            let r = rec.map_err(|e| input_error(origin, line, e.to_string()))?;
            if !RULES.contains(&r.rule.as_str()) {
                return Err(input_error(origin, line, format!("unknown rule '{}'", r.rule)));
            }
            self.external.push(r);
        }
        Ok(())
    }
}

/// Fits every model with `held_out` masked and scores the forecasts on
/// the held-out cells.
pub fn evaluate_split(
    models: &[Model],
    data: &SirData,
    held_out: &BTreeSet<usize>,
    scoring: &ScoringOptions,
) -> Result<(usize, BTreeMap<String, ScoreReport>)> {
    let mask = Mask::periods(held_out.iter().copied());
    let n = data.n();
    let mut truth = Vec::new();
    for &t in held_out {
        let y = data.response().slice(t + 1);
        truth.extend((0..n * n).filter(|c| c / n != c % n).map(|c| y[c]));
    }
    let mut scores = BTreeMap::new();
    for model in models {
        let fitted = model.fit(data, &mask)?;
        let forecasts = forecast_held_out(&fitted, data, held_out);
        let mu: Vec<f64> = forecasts
            .values()
            .flat_map(|m| m.iter().copied().enumerate().filter(|(c, _)| c / n != c % n).map(|(_, v)| v))
            .collect();
        scores.insert(model.name().to_string(), score_forecast_with(&truth, &mu, scoring)?);
    }
    Ok((truth.len(), scores))
}

fn run_splits(
    kind: &str,
    seed: Option<u64>,
    splits: Vec<(usize, BTreeSet<usize>)>,
    models: &[Model],
    data: &SirData,
    scoring: &ScoringOptions,
) -> Result<ComparisonReport> {
    let labels = data.response().period_labels();
    let folds = splits
        .into_par_iter()
        .map(|(label, held_out)| {
            let (cells, scores) = evaluate_split(models, data, &held_out, scoring)?;
            log::info!("{kind} split {label} done");
            Ok(FoldReport {
                label,
                held_out: held_out.iter().map(|t| labels[t + 1].clone()).collect(),
                cells,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport::assemble(kind, seed, folds))
}

/// Cross-validation over the folds of `plan`.
pub fn run_cv(models: &[Model], data: &SirData, plan: &CvPlan, scoring: &ScoringOptions) -> Result<ComparisonReport> {
    let splits = plan
        .folds
        .iter()
        .enumerate()
        .map(|(k, f)| (k, f.iter().copied().collect()))
        .collect();
    run_splits("cv", Some(plan.seed), splits, models, data, scoring)
}

/// Trains on all but the last `x` modeled periods and forecasts those `x`
/// by iterated one-step prediction, for each horizon `x`.
pub fn run_temporal_holdout(
    models: &[Model],
    data: &SirData,
    horizons: &[usize],
    scoring: &ScoringOptions,
) -> Result<ComparisonReport> {
    let modeled = data.modeled_periods();
    let mut splits = Vec::with_capacity(horizons.len());
    for &x in horizons {
        if x == 0 || x >= modeled {
            return Err(Error::InfeasiblePlan(format!(
                "horizon {x} must be in 1..{modeled}"
            )));
        }
        splits.push((x, (modeled - x..modeled).collect()));
    }
    run_splits("holdout", None, splits, models, data, scoring)
}

/// The influence model and the plain GLM baseline.
pub fn standard_models(sir: &SirOptions) -> Vec<Model> {
    vec![Model::Sir(sir.clone()), Model::PlainGlm(sir.glm)]
}
