//! Alternating conditional maximum likelihood for the social influence
//! regression `log mu_ijt = theta . z_ijt + alpha^T Xt_ijt beta`.
//!
//! For fixed `beta` the model is a Poisson GLM in `(theta, alpha)` with
//! regressors `[z | Xt beta]`; for fixed `alpha` it is a GLM in
//! `(theta, beta)` with regressors `[z | Xt^T alpha]`. Each half-step is
//! warm-started at the current point, so the joint log-likelihood never
//! decreases.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{collapse_alpha, collapse_beta, collapse_beta_period, dot, CollapsedBlock, DirectDesign, InfluenceDesign};
use crate::error::{Error, Result};
use crate::glm::{cell_loglik, GlmFit, GlmOptions, PoissonRegression};
use crate::tensor::{flatten, lag_log_transform, DyadTensor, Mask, ObservationIndex, PredictorTensor, RateTensor};

/// `|alpha_1|` below this cannot be normalized to one.
pub const IDENTIFIABILITY_FLOOR: f64 = 1e-8;

/// Response, lagged predictor and designs, aligned on modeled periods.
#[derive(Debug, Clone)]
pub struct SirData {
    y: DyadTensor,
    x: PredictorTensor,
    z: DirectDesign,
    ws: InfluenceDesign,
    wr: InfluenceDesign,
}

impl SirData {
    pub fn new(y: DyadTensor, z: DirectDesign, ws: InfluenceDesign, wr: InfluenceDesign) -> Result<Self> {
        if !y.is_integral() {
            return Err(Error::InvalidTensor("Poisson response must hold whole counts".into()));
        }
        let x = lag_log_transform(&y)?;
        let (n, periods) = (y.n(), y.modeled_periods());
        if z.n() != n || z.periods() != periods {
            return Err(Error::DimensionMismatch(format!(
                "direct design is {}x{} over {} periods, response needs {n}x{n} over {periods}",
                z.n(),
                z.n(),
                z.periods()
            )));
        }
        for (w, side) in [(&ws, "sender"), (&wr, "receiver")] {
            if w.n() != n || w.periods() != periods {
                return Err(Error::DimensionMismatch(format!(
                    "{side} design is {}x{} over {} periods, response needs {n}x{n} over {periods}",
                    w.n(),
                    w.n(),
                    w.periods()
                )));
            }
        }
        if ws.p() != wr.p() {
            return Err(Error::DimensionMismatch(format!(
                "sender design has {} covariates, receiver {}",
                ws.p(),
                wr.p()
            )));
        }
        Ok(Self { y, x, z, ws, wr })
    }

    /// One influence design used on both sides.
    pub fn shared(y: DyadTensor, z: DirectDesign, w: InfluenceDesign) -> Result<Self> {
        Self::new(y, z, w.clone(), w)
    }

    pub fn response(&self) -> &DyadTensor {
        &self.y
    }

    pub fn predictor(&self) -> &PredictorTensor {
        &self.x
    }

    pub fn direct(&self) -> &DirectDesign {
        &self.z
    }

    pub fn sender(&self) -> &InfluenceDesign {
        &self.ws
    }

    pub fn receiver(&self) -> &InfluenceDesign {
        &self.wr
    }

    pub fn n(&self) -> usize {
        self.y.n()
    }

    pub fn modeled_periods(&self) -> usize {
        self.y.modeled_periods()
    }

    pub fn q(&self) -> usize {
        self.z.q()
    }

    pub fn p(&self) -> usize {
        self.ws.p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParameterSet {
    fn check(&self, data: &SirData) -> Result<()> {
        if self.theta.len() != data.q() || self.alpha.len() != data.p() || self.beta.len() != data.p() {
            return Err(Error::DimensionMismatch(format!(
                "parameters ({}, {}, {}) vs q = {}, p = {}",
                self.theta.len(),
                self.alpha.len(),
                self.beta.len(),
                data.q(),
                data.p()
            )));
        }
        Ok(())
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        let pairs = self
            .theta
            .iter()
            .zip(&other.theta)
            .chain(self.alpha.iter().zip(&other.alpha))
            .chain(self.beta.iter().zip(&other.beta));
        pairs.map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Rescales so that `alpha_1 = 1`: `(theta, alpha / c, beta * c)` with
/// `c = alpha_1`. The fitted rates are unchanged.
pub fn canonicalize(params: &ParameterSet) -> Result<ParameterSet> {
    let c = *params
        .alpha
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty alpha".into()))?;
    if c.abs() < IDENTIFIABILITY_FLOOR || !c.is_finite() {
        return Err(Error::NonIdentifiable { value: c });
    }
    Ok(ParameterSet {
        theta: params.theta.clone(),
        alpha: params.alpha.iter().map(|a| a / c).collect(),
        beta: params.beta.iter().map(|b| b * c).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirOptions {
    /// Relative change in joint log-likelihood between outer iterations.
    pub tol: f64,
    pub max_outer: usize,
    /// Starting `beta`; defaults to `(1, ..., 1) / sqrt(p)`.
    pub init_beta: Option<Vec<f64>>,
    /// Additional starts with `beta` drawn uniformly from the unit sphere.
    pub multi_start: usize,
    pub seed: u64,
    pub glm: GlmOptions,
}

impl Default for SirOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_outer: 100,
            init_beta: None,
            multi_start: 0,
            seed: 0,
            glm: GlmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub init_beta: Vec<f64>,
    pub loglik: Option<f64>,
    pub params: Option<ParameterSet>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SirFit {
    /// Canonical parameters (`alpha_1 = 1`).
    pub params: ParameterSet,
    /// Parameters as they left the alternating loop.
    pub raw_params: ParameterSet,
    /// Joint log-likelihood after every half-step.
    pub loglik_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Final GLM fits of the `(theta, alpha)` and `(theta, beta)` half-steps.
    pub half_step_fits: [GlmFit; 2],
    /// Set when a collapsed influence block was identically zero, so the
    /// influence term could not enter the likelihood.
    pub influence_degenerate: bool,
    pub starts: Vec<StartSummary>,
    /// Largest coordinate gap between the best start's canonical estimate
    /// and any other successful start.
    pub start_disagreement: f64,
    pub observations: usize,
}

impl SirFit {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

struct Run {
    params: ParameterSet,
    trace: Vec<f64>,
    outer: usize,
    converged: bool,
    fits: [GlmFit; 2],
    degenerate: bool,
}

/// Regression rows `[z | collapsed]` over observed cells.
fn half_step_design(data: &SirData, index: &ObservationIndex, block: Option<&CollapsedBlock>) -> DMatrix<f64> {
    let q = data.q();
    let p = block.map_or(0, |b| b.p());
    let cells = index.cells();
    let mut x = DMatrix::zeros(cells.len(), q + p);
    for (r, c) in cells.iter().enumerate() {
        for (k, v) in data.z.row(c.t, c.i, c.j).iter().enumerate() {
            x[(r, k)] = *v;
        }
        if let Some(b) = block {
            for (k, v) in b.get(c.t, c.i, c.j).iter().enumerate() {
                x[(r, q + k)] = *v;
            }
        }
    }
    x
}

fn block_vanishes(block: &CollapsedBlock, index: &ObservationIndex) -> bool {
    block.is_identically_zero() || index.cells().iter().all(|c| block.get(c.t, c.i, c.j).iter().all(|&v| v == 0.0))
}

struct HalfStep<'a> {
    data: &'a SirData,
    index: &'a ObservationIndex,
    response: &'a [f64],
    names: Vec<String>,
    glm: GlmOptions,
}

impl HalfStep<'_> {
    /// Fits `[z | block]`, or `z` alone when the block vanishes. Returns the
    /// fit and the influence coefficients (if estimated).
    fn fit(&self, block: &CollapsedBlock, theta: Option<&[f64]>, coef: Option<&[f64]>) -> Result<(GlmFit, Option<Vec<f64>>)> {
        let q = self.data.q();
        if block_vanishes(block, self.index) {
            let x = half_step_design(self.data, self.index, None);
            let mut reg = PoissonRegression::new(&x, self.response).names(&self.names[..q]).options(self.glm);
            if let Some(th) = theta {
                reg = reg.init(th);
            }
            return Ok((reg.fit()?, None));
        }
        let x = half_step_design(self.data, self.index, Some(block));
        let init: Option<Vec<f64>> = theta.zip(coef).map(|(t, c)| t.iter().chain(c).copied().collect());
        let mut reg = PoissonRegression::new(&x, self.response).names(&self.names).options(self.glm);
        if let Some(b) = init.as_deref() {
            reg = reg.init(b);
        }
        let fit = reg.fit()?;
        let infl = fit.coefficients[q..].to_vec();
        Ok((fit, Some(infl)))
    }
}

fn run_from(data: &SirData, index: &ObservationIndex, response: &[f64], start: &[f64], opts: &SirOptions) -> Result<Run> {
    let (q, p) = (data.q(), data.p());
    let mut names: Vec<String> = data.z.names().to_vec();
    names.extend(data.ws.names().iter().map(|s| format!("influence:{s}")));
    let step = HalfStep {
        data,
        index,
        response,
        names,
        glm: opts.glm,
    };
    let mut beta = start.to_vec();
    let mut alpha: Option<Vec<f64>> = None;
    let mut theta: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut degenerate = false;
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut outer = 0;
    let mut fits: Option<[GlmFit; 2]> = None;
    while outer < opts.max_outer {
        outer += 1;
        let v = collapse_beta(&data.x, &data.ws, &data.wr, &beta)?;
        let (fit1, a) = step
            .fit(&v, theta.as_deref(), alpha.as_deref())
            .map_err(|e| e.in_half_step(1, outer))?;
        theta = Some(fit1.coefficients[..q].to_vec());
        match a {
            Some(a) => alpha = Some(a),
            None => degenerate = true,
        }
        trace.push(fit1.loglik);

        let alpha_now = alpha.clone().unwrap_or_else(|| unit(p));
        let u = collapse_alpha(&data.x, &data.ws, &data.wr, &alpha_now)?;
        let (fit2, b) = step
            .fit(&u, theta.as_deref(), Some(&beta))
            .map_err(|e| e.in_half_step(2, outer))?;
        theta = Some(fit2.coefficients[..q].to_vec());
        match b {
            Some(b) => beta = b,
            None => degenerate = true,
        }
        let ll = fit2.loglik;
        trace.push(ll);
        fits = Some([fit1, fit2]);
        if let Some(prev) = previous {
            if (ll - prev).abs() <= opts.tol * prev.abs() {
                converged = true;
                break;
            }
        }
        previous = Some(ll);
    }
    let fits = fits.ok_or_else(|| Error::InvalidArgument("max_outer must be at least 1".into()))?;
    Ok(Run {
        params: ParameterSet {
            theta: theta.expect("set by the first half-step"),
            alpha: alpha.unwrap_or_else(|| unit(p)),
            beta,
        },
        trace,
        outer,
        converged,
        fits,
        degenerate,
    })
}

fn unit(p: usize) -> Vec<f64> {
    let mut e = vec![0.0; p];
    e[0] = 1.0;
    e
}

fn start_values(p: usize, opts: &SirOptions) -> Result<Vec<Vec<f64>>> {
    let first = match &opts.init_beta {
        Some(b) if b.len() != p => {
            return Err(Error::DimensionMismatch(format!("init_beta has {} entries, p = {p}", b.len())))
        }
        Some(b) if b.iter().all(|&v| v == 0.0) => {
            return Err(Error::InvalidArgument(
                "init_beta = 0 zeroes the collapsed design; alpha would be inestimable".into(),
            ))
        }
        Some(b) => b.clone(),
        None => vec![1.0 / (p as f64).sqrt(); p],
    };
    let mut starts = vec![first];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.multi_start {
        let draw: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = draw.iter().map(|v| v * v).sum::<f64>().sqrt();
        starts.push(draw.iter().map(|v| v / norm).collect());
    }
    Ok(starts)
}

/// Fits the model on all unmasked cells.
pub fn fit_sir(data: &SirData, mask: &Mask, opts: &SirOptions) -> Result<SirFit> {
    let (index, response) = flatten(&data.y, mask)?;
    let (q, p) = (data.q(), data.p());
    if index.len() < q + p + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} observations after masking, need at least {}",
            index.len(),
            q + p + 1
        )));
    }
    let starts = start_values(p, opts)?;
    let mut best: Option<(usize, Run)> = None;
    let mut first_error = None;
    let mut summaries = Vec::with_capacity(starts.len());
    for (k, start) in starts.iter().enumerate() {
        match run_from(data, &index, &response, start, opts) {
            Ok(run) => {
                let ll = *run.trace.last().expect("non-empty trace");
                summaries.push(StartSummary {
                    init_beta: start.clone(),
                    loglik: Some(ll),
                    params: canonicalize(&run.params).ok(),
                    error: None,
                });
                let better = best.as_ref().is_none_or(|(_, b)| ll > *b.trace.last().expect("non-empty"));
                if better {
                    best = Some((k, run));
                }
            }
            Err(e) => {
                log::warn!("start {k} failed: {e}");
                summaries.push(StartSummary {
                    init_beta: start.clone(),
                    loglik: None,
                    params: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((best_k, run)) = best else {
        return Err(first_error.expect("at least one start ran"));
    };
    let params = canonicalize(&run.params)?;
    let start_disagreement = summaries
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != best_k)
        .filter_map(|(_, s)| s.params.as_ref())
        .map(|other| other.max_abs_diff(&params))
        .fold(0.0, f64::max);
    if summaries.len() > 1 && start_disagreement > 1e-4 {
        log::warn!("multi-start canonical estimates disagree by up to {start_disagreement:.3e}");
    }
    if run.degenerate {
        log::warn!("collapsed influence design vanished on the observed cells; influence term not estimated");
    }
    Ok(SirFit {
        params,
        raw_params: run.params,
        loglik_trace: run.trace,
        outer_iterations: run.outer,
        converged: run.converged,
        half_step_fits: run.fits,
        influence_degenerate: run.degenerate,
        starts: summaries,
        start_disagreement,
        observations: index.len(),
    })
}

/// Linear predictor `theta . z + alpha . (Xt beta)` for one period, given
/// its direct-design rows and predictor slice.
pub(crate) fn linear_predictor_period(
    params: &ParameterSet,
    z_rows: &[f64],
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    x: &[f64],
    t: usize,
) -> Vec<f64> {
    let n = ws.n();
    let (q, p) = (params.theta.len(), params.alpha.len());
    let mut v = vec![0.0; n * n * p];
    collapse_beta_period(x, ws, wr, &params.beta, t, &mut v);
    let mut eta = vec![f64::NAN; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = i * n + j;
            eta[c] = dot(&z_rows[c * q..(c + 1) * q], &params.theta) + dot(&v[c * p..(c + 1) * p], &params.alpha);
        }
    }
    eta
}

/// Fitted rates `exp(theta . z + alpha^T Xt beta)` on every unmasked
/// off-diagonal cell; other cells are `NaN`.
pub fn predict_mu(params: &ParameterSet, data: &SirData, mask: &Mask) -> Result<RateTensor> {
    params.check(data)?;
    mask.check(data.n(), data.modeled_periods())?;
    let n = data.n();
    let mut out = RateTensor::empty(n, data.modeled_periods());
    for t in 0..data.modeled_periods() {
        let rows = data.z.period_rows(t);
        let eta = linear_predictor_period(params, rows, &data.ws, &data.wr, data.x.slice(t), t);
        let slice = out.slice_mut(t);
        for i in 0..n {
            for j in 0..n {
                if mask.is_observed(t, i, j) {
                    slice[i * n + j] = eta[i * n + j].exp();
                }
            }
        }
    }
    Ok(out)
}

/// Joint Poisson log-likelihood of `params` over unmasked cells.
pub fn sir_loglik(params: &ParameterSet, data: &SirData, mask: &Mask) -> Result<f64> {
    let mu = predict_mu(params, data, mask)?;
    let (index, response) = flatten(&data.y, mask)?;
    Ok(index
        .cells()
        .iter()
        .zip(&response)
        .map(|(c, &y)| cell_loglik(y, mu.get(c.t, c.i, c.j).expect("observed cell")))
        .sum())
}
