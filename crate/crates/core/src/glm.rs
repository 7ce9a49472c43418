//! Poisson log-link regression by iteratively weighted least squares.
//!
//! Each weighted least-squares solve goes through a Householder QR of the
//! column-equilibrated weighted design. A step that would lower the
//! log-likelihood is halved until it does not.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Relative size below which an equilibrated QR pivot counts as zero.
const RANK_TOL: f64 = 1e-9;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    /// Relative deviance change that ends the iteration.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    /// `X^T diag(mu) X` at the optimum.
    pub fisher_info: DMatrix<f64>,
    pub deviance: f64,
    /// Full log-likelihood including `-log(y!)`.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fitted: Vec<f64>,
}

/// `sum(y log(mu) - mu - log(y!))`.
pub fn loglik_poisson(mu: &[f64], y: &[f64]) -> Result<f64> {
    if mu.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rates for {} counts", mu.len(), y.len())));
    }
    let mut ll = 0.0;
    for (index, (&m, &v)) in mu.iter().zip(y).enumerate() {
        if !(m > 0.0) {
            return Err(Error::NonPositiveRate { index, value: m });
        }
        ll += cell_loglik(v, m);
    }
    Ok(ll)
}

#[inline]
pub(crate) fn cell_loglik(y: f64, mu: f64) -> f64 {
    let lf = if y > 1.0 { ln_gamma(y + 1.0) } else { 0.0 };
    if y == 0.0 {
        -mu
    } else {
        y * mu.ln() - mu - lf
    }
}

fn deviance(mu: &[f64], y: &[f64]) -> f64 {
    2.0 * mu
        .iter()
        .zip(y)
        .map(|(&m, &v)| if v > 0.0 { v * (v / m).ln() - (v - m) } else { m })
        .sum::<f64>()
}

/// Builder for one Poisson regression fit.
pub struct PoissonRegression<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    offset: Option<&'a [f64]>,
    init: Option<&'a [f64]>,
    names: Option<&'a [String]>,
    options: GlmOptions,
}

impl<'a> PoissonRegression<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a [f64]) -> Self {
        Self {
            x,
            y,
            offset: None,
            init: None,
            names: None,
            options: GlmOptions::default(),
        }
    }

    pub fn offset(mut self, offset: &'a [f64]) -> Self {
        self.offset = Some(offset);
        self
    }

    /// Warm start; otherwise the first step uses `log(y + 0.5)` as the
    /// working response.
    pub fn init(mut self, init: &'a [f64]) -> Self {
        self.init = Some(init);
        self
    }

    /// Column names used in singular-design errors.
    pub fn names(mut self, names: &'a [String]) -> Self {
        self.names = Some(names);
        self
    }

    pub fn options(mut self, options: GlmOptions) -> Self {
        self.options = options;
        self
    }

    pub fn fit(self) -> Result<GlmFit> {
        Iwls::new(self)?.run()
    }
}

/// Shorthand for `PoissonRegression::new(x, y)` with optional offset and start.
pub fn fit_poisson(
    x: &DMatrix<f64>,
    y: &[f64],
    offset: Option<&[f64]>,
    init: Option<&[f64]>,
) -> Result<GlmFit> {
    let mut reg = PoissonRegression::new(x, y);
    if let Some(o) = offset {
        reg = reg.offset(o);
    }
    if let Some(b) = init {
        reg = reg.init(b);
    }
    reg.fit()
}

struct State {
    beta: DVector<f64>,
    eta: DVector<f64>,
    mu: Vec<f64>,
    loglik: f64,
}

struct Iwls<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    offset: DVector<f64>,
    init: Option<&'a [f64]>,
    names: Vec<String>,
    options: GlmOptions,
}

impl<'a> Iwls<'a> {
    fn new(reg: PoissonRegression<'a>) -> Result<Self> {
        let (nobs, d) = reg.x.shape();
        if reg.y.len() != nobs {
            return Err(Error::DimensionMismatch(format!("{nobs} design rows for {} responses", reg.y.len())));
        }
        if nobs < d {
            return Err(Error::InvalidArgument(format!("{nobs} observations for {d} coefficients")));
        }
        if let Some((row, v)) = reg.y.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0 && v.fract() == 0.0)) {
            return Err(Error::InvalidArgument(format!("response {row} = {v} is not a nonnegative count")));
        }
        if reg.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design contains non-finite values".into()));
        }
        let offset = match reg.offset {
            Some(o) if o.len() != nobs => {
                return Err(Error::DimensionMismatch(format!("offset length {} vs {nobs}", o.len())))
            }
            Some(o) => DVector::from_column_slice(o),
            None => DVector::zeros(nobs),
        };
        if let Some(b) = reg.init {
            if b.len() != d {
                return Err(Error::DimensionMismatch(format!("initial coefficients {} vs {d}", b.len())));
            }
        }
        let names = match reg.names {
            Some(n) if n.len() == d => n.to_vec(),
            _ => (0..d).map(|k| format!("x{k}")).collect(),
        };
        Ok(Self {
            x: reg.x,
            y: reg.y,
            offset,
            init: reg.init,
            names,
            options: reg.options,
        })
    }

    fn evaluate(&self, beta: DVector<f64>) -> Option<State> {
        let eta = self.x * &beta + &self.offset;
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        if mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return None;
        }
        let loglik = self.y.iter().zip(&mu).map(|(&y, &m)| cell_loglik(y, m)).sum::<f64>();
        loglik.is_finite().then_some(State { beta, eta, mu, loglik })
    }

    /// Weighted least squares of `z` on `X` with weights `w`.
    fn wls(&self, w: &[f64], z: &[f64]) -> Result<DVector<f64>> {
        let (nobs, d) = self.x.shape();
        let mut xw = self.x.clone();
        let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        for k in 0..d {
            let mut col = xw.column_mut(k);
            for r in 0..nobs {
                col[r] *= sw[r];
            }
        }
        let scale: Vec<f64> = (0..d).map(|k| xw.column(k).norm()).collect();
        for (k, &s) in scale.iter().enumerate() {
            if s > 0.0 {
                xw.column_mut(k).unscale_mut(s);
            }
        }
        let mut rhs = DVector::from_iterator(nobs, z.iter().zip(&sw).map(|(z, s)| z * s));
        let qr = xw.qr();
        let r = qr.r();
        let singular: Vec<String> = (0..d)
            .filter(|&k| scale[k] == 0.0 || r[(k, k)].abs() < RANK_TOL)
            .map(|k| self.names[k].clone())
            .collect();
        if !singular.is_empty() {
            return Err(Error::SingularDesign { columns: singular });
        }
        qr.q_tr_mul(&mut rhs);
        let top = rhs.rows(0, d).into_owned();
        let sol = r
            .solve_upper_triangular(&top)
            .ok_or_else(|| Error::SingularDesign { columns: self.names.clone() })?;
        Ok(DVector::from_iterator(d, sol.iter().zip(&scale).map(|(b, s)| b / s)))
    }

    fn working(&self, state: &State) -> (Vec<f64>, Vec<f64>) {
        let z = (0..self.y.len())
            .map(|r| state.eta[r] - self.offset[r] + (self.y[r] - state.mu[r]) / state.mu[r])
            .collect();
        (state.mu.clone(), z)
    }

    fn run(self) -> Result<GlmFit> {
        if self.y.iter().all(|&v| v == 0.0) {
            return Err(Error::BoundaryMle(
                "all responses are zero; fitted rates tend to zero".into(),
            ));
        }
        let mut state = match self.init {
            Some(b) => self
                .evaluate(DVector::from_column_slice(b))
                .ok_or_else(|| Error::Divergence("initial coefficients overflow the rate".into()))?,
            None => {
                let mu0: Vec<f64> = self.y.iter().map(|v| v + 0.5).collect();
                let z: Vec<f64> = (0..self.y.len())
                    .map(|r| mu0[r].ln() - self.offset[r] + (self.y[r] - mu0[r]) / mu0[r])
                    .collect();
                let beta = self.wls(&mu0, &z)?;
                self.evaluate(beta)
                    .ok_or_else(|| Error::Divergence("starting fit overflows the rate".into()))?
            }
        };
        let mut dev = deviance(&state.mu, self.y);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.options.max_iter {
            iterations += 1;
            let (w, z) = self.working(&state);
            let candidate = self.wls(&w, &z)?;
            let step = &candidate - &state.beta;
            let mut accepted = None;
            let mut any_finite = false;
            let mut factor = 1.0;
            for _ in 0..MAX_HALVINGS {
                if let Some(trial) = self.evaluate(&state.beta + &step * factor) {
                    any_finite = true;
                    if trial.loglik >= state.loglik {
                        accepted = Some(trial);
                        break;
                    }
                }
                factor *= 0.5;
            }
            let Some(next) = accepted else {
                if !any_finite {
                    return Err(Error::Divergence(format!(
                        "rates overflow at iteration {iterations} even after step halving"
                    )));
                }
                // no ascent direction left at working precision
                converged = true;
                break;
            };
            state = next;
            let dev_new = deviance(&state.mu, self.y);
            let change = (dev_new - dev).abs() / (dev_new.abs() + 0.1);
            dev = dev_new;
            if change < self.options.tol {
                converged = true;
                break;
            }
        }
        let d = self.x.ncols();
        let mut xw = self.x.clone();
        for k in 0..d {
            let mut col = xw.column_mut(k);
            for (r, m) in state.mu.iter().enumerate() {
                col[r] *= m;
            }
        }
        let fisher_info = self.x.transpose() * xw;
        Ok(GlmFit {
            coefficients: state.beta.iter().copied().collect(),
            fisher_info,
            deviance: dev,
            loglik: state.loglik,
            iterations,
            converged,
            fitted: state.mu,
        })
    }
}

/// Score `X^T (y - mu)` of the Poisson log-likelihood.
pub fn poisson_score(x: &DMatrix<f64>, y: &[f64], mu: &[f64]) -> DVector<f64> {
    let resid = DVector::from_iterator(y.len(), y.iter().zip(mu).map(|(a, b)| a - b));
    x.transpose() * resid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn ll_at(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> f64 {
        let eta = x * DVector::from_column_slice(beta);
        let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
        loglik_poisson(&mu, y).unwrap()
    }

    #[test]
    fn loglik_spot_values() {
        assert_eq!(loglik_poisson(&[1.0], &[0.0]).unwrap(), -1.0);
        assert_eq!(loglik_poisson(&[1.0], &[1.0]).unwrap(), -1.0);
        let expected = 2.0 * 3f64.ln() - 3.0 - 2f64.ln();
        assert!((loglik_poisson(&[3.0], &[2.0]).unwrap() - expected).abs() < 1e-14);
        assert!((expected + 1.496).abs() < 1e-3);
        assert!(matches!(loglik_poisson(&[0.0], &[1.0]), Err(Error::NonPositiveRate { .. })));
    }

    #[test]
    fn intercept_only_is_log_mean() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let fit = fit_poisson(&x, &[1.0, 2.0, 3.0], None, None).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-10);
        // one-dimensional golden-section search on the log-likelihood
        let (mut lo, mut hi) = (-2.0f64, 3.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if ll_at(&x, &[1.0, 2.0, 3.0], &[a]) > ll_at(&x, &[1.0, 2.0, 3.0], &[b]) {
                hi = b;
            } else {
                lo = a;
            }
        }
        assert!((fit.coefficients[0] - 0.5 * (lo + hi)).abs() < 1e-7);
        assert!((fit.fisher_info[(0, 0)] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn group_ratio_slope() {
        // group 0 mean 2, group 1 mean 4
        let y = [1.0, 3.0, 2.0, 4.0, 5.0, 3.0];
        let x = DMatrix::from_fn(6, 2, |r, c| if c == 0 || r >= 3 { 1.0 } else { 0.0 });
        let fit = fit_poisson(&x, &y, None, None).unwrap();
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-9);
        assert!((fit.coefficients[1] - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn all_zero_response_is_boundary() {
        let x = DMatrix::from_element(4, 1, 1.0);
        assert!(matches!(fit_poisson(&x, &[0.0; 4], None, None), Err(Error::BoundaryMle(_))));
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = DMatrix::from_fn(5, 3, |r, c| match c {
            0 => 1.0,
            1 => r as f64,
            _ => 2.0 * r as f64 + 1.0,
        });
        let names = vec!["int".to_string(), "a".into(), "b".into()];
        let err = PoissonRegression::new(&x, &[1.0, 2.0, 1.0, 3.0, 4.0]).names(&names).fit().unwrap_err();
        match err {
            Error::SingularDesign { columns } => assert_eq!(columns, vec!["b".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        let zero_col = DMatrix::from_fn(4, 2, |_, c| if c == 0 { 1.0 } else { 0.0 });
        assert!(matches!(
            fit_poisson(&zero_col, &[1.0, 0.0, 2.0, 1.0], None, None),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn rejects_non_counts() {
        let x = DMatrix::from_element(2, 1, 1.0);
        assert!(fit_poisson(&x, &[1.5, 2.0], None, None).is_err());
        assert!(fit_poisson(&x, &[-1.0, 2.0], None, None).is_err());
    }

    fn simulated(seed: u64, nobs: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(nobs, 3, |_, c| if c == 0 { 1.0 } else { rng.random_range(-1.0..1.0) });
        let offset: Vec<f64> = (0..nobs).map(|_| rng.random_range(-0.2..0.2)).collect();
        let truth = DVector::from_vec(vec![0.5, 0.8, -0.4]);
        let eta = &x * &truth;
        let y = (0..nobs)
            .map(|r| Poisson::new((eta[r] + offset[r]).exp()).unwrap().sample(&mut rng))
            .collect();
        (x, y, offset)
    }

    #[test]
    fn score_equations_hold_with_offset() {
        let (x, y, offset) = simulated(4, 400);
        let fit = fit_poisson(&x, &y, Some(&offset), None).unwrap();
        assert!(fit.converged);
        let s = poisson_score(&x, &y, &fit.fitted);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(s.norm() < 1e-8 * ynorm, "score {} vs {}", s.norm(), ynorm);
        assert!(fit.deviance >= 0.0);
        let fi = &fit.fisher_info;
        assert!((fi - fi.transpose()).amax() < 1e-9);
        assert!(fi.clone().symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn analytic_score_matches_finite_differences() {
        let (x, y, _) = simulated(9, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let eta = &x * DVector::from_column_slice(&b);
            let mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
            let s = poisson_score(&x, &y, &mu);
            for k in 0..3 {
                let h = 1e-5;
                let mut bp = b.clone();
                let mut bm = b.clone();
                bp[k] += h;
                bm[k] -= h;
                let fd = (ll_at(&x, &y, &bp) - ll_at(&x, &y, &bm)) / (2.0 * h);
                let rel = (fd - s[k]).abs() / s[k].abs().max(1.0);
                assert!(rel < 1e-6, "coordinate {k}: fd {fd} analytic {}", s[k]);
            }
        }
    }

    #[test]
    fn warm_start_never_lowers_loglik() {
        let (x, y, _) = simulated(21, 300);
        let start = [2.0, -1.0, 1.0];
        let ll0 = ll_at(&x, &y, &start);
        let fit = PoissonRegression::new(&x, &y)
            .init(&start)
            .options(GlmOptions { tol: 1e-10, max_iter: 1 })
            .fit()
            .unwrap();
        assert!(fit.loglik >= ll0);
        let full = fit_poisson(&x, &y, None, Some(&start)).unwrap();
        assert!(full.loglik >= fit.loglik);
    }
}
