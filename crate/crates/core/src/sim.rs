//! Synthetic panels drawn from the model itself.
//!
//! Each period draws `y_t ~ Poisson(exp(theta . z_t + A_t X_{t-1} B_t^T))`
//! cellwise, with `X_{t-1} = log(y_{t-1} + 1)` and `A_t`, `B_t` the
//! influence matrices of the sender and receiver designs. The chain starts
//! from an all-zero network and the first `burn_in` periods are dropped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{dot, ColumnKind, DirectDesign, InfluenceDesign};
use crate::error::{Error, Result};
use crate::io::period::YearMonth;
use crate::sir::{ParameterSet, SirData};
use crate::tensor::{cell, default_actor_labels, log1p_slice, DyadTensor};

pub const DEFAULT_GUARD: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateProcess {
    Intercept,
    LaggedResponse,
    LaggedReciprocal,
    Constant { value: f64 },
    /// One on self pairs `(i, i)`, zero elsewhere.
    SelfIndicator,
    /// i.i.d. `N(0, scale^2)` per pair, frozen over time.
    Normal { scale: f64 },
    /// Stationary AR(1) per pair with innovation sd `scale`.
    Ar1 { phi: f64, scale: f64 },
}

impl CovariateProcess {
    fn column_kind(&self) -> ColumnKind {
        match self {
            CovariateProcess::Intercept => ColumnKind::Intercept,
            CovariateProcess::LaggedResponse => ColumnKind::LaggedResponse,
            CovariateProcess::LaggedReciprocal => ColumnKind::LaggedReciprocal,
            _ => ColumnKind::Covariate,
        }
    }

    fn is_lag(&self) -> bool {
        matches!(self, CovariateProcess::LaggedResponse | CovariateProcess::LaggedReciprocal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Retained periods `T`.
    pub periods: usize,
    /// True parameters; `alpha[0]` must be one.
    pub truth: ParameterSet,
    pub direct: Vec<CovariateProcess>,
    pub influence: Vec<CovariateProcess>,
    /// Separate receiver design; the sender design is shared when absent.
    #[serde(default)]
    pub receiver_influence: Option<Vec<CovariateProcess>>,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_start")]
    pub start_period: String,
    #[serde(default = "default_guard")]
    pub guard: f64,
}

fn default_burn_in() -> usize {
    20
}

fn default_start() -> String {
    "2000-01".into()
}

fn default_guard() -> f64 {
    DEFAULT_GUARD
}

impl SimConfig {
    /// Intercept plus one static normal covariate; influence through a self
    /// indicator and one static normal pair covariate, shared by both sides.
    pub fn standard(n: usize, periods: usize, truth: ParameterSet, seed: u64) -> Self {
        Self {
            n,
            periods,
            truth,
            direct: vec![CovariateProcess::Intercept, CovariateProcess::Normal { scale: 1.0 }],
            influence: vec![CovariateProcess::SelfIndicator, CovariateProcess::Normal { scale: 1.0 }],
            receiver_influence: None,
            seed,
            burn_in: default_burn_in(),
            start_period: default_start(),
            guard: DEFAULT_GUARD,
        }
    }

    pub fn direct_names(&self) -> Vec<String> {
        let mut k = 0;
        self.direct
            .iter()
            .map(|c| match c {
                CovariateProcess::Intercept => "intercept".to_string(),
                CovariateProcess::LaggedResponse => "lag_y".to_string(),
                CovariateProcess::LaggedReciprocal => "recip_y".to_string(),
                _ => {
                    k += 1;
                    format!("z{k}")
                }
            })
            .collect()
    }

    pub fn influence_names(&self, receiver: bool) -> Vec<String> {
        let prefix = if receiver && self.receiver_influence.is_some() { "wr" } else { "w" };
        (1..=self.truth.alpha.len()).map(|k| format!("{prefix}{k}")).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.periods < 2 {
            return Err(Error::Config("simulation needs n >= 2 and at least 2 periods".into()));
        }
        if self.burn_in < 1 {
            return Err(Error::Config("burn_in must be at least 1".into()));
        }
        let (q, p) = (self.direct.len(), self.influence.len());
        if self.truth.theta.len() != q || self.truth.alpha.len() != p || self.truth.beta.len() != p {
            return Err(Error::Config(format!(
                "truth has ({}, {}, {}) coefficients for q = {q}, p = {p}",
                self.truth.theta.len(),
                self.truth.alpha.len(),
                self.truth.beta.len()
            )));
        }
        if p == 0 {
            return Err(Error::Config("at least one influence covariate is required".into()));
        }
        if self.truth.alpha[0] != 1.0 {
            return Err(Error::Config("true alpha must be canonical (alpha_1 = 1)".into()));
        }
        if let Some(r) = &self.receiver_influence {
            if r.len() != p {
                return Err(Error::Config("receiver design must have as many covariates as the sender design".into()));
            }
        }
        let all_influence = self.influence.iter().chain(self.receiver_influence.iter().flatten());
        if all_influence.clone().any(|c| c.is_lag() || *c == CovariateProcess::Intercept) {
            return Err(Error::Config("intercept and lag processes are direct-only".into()));
        }
        for c in self.direct.iter().chain(all_influence) {
            if let CovariateProcess::Ar1 { phi, .. } = c {
                if phi.abs() >= 1.0 {
                    return Err(Error::Config(format!("AR(1) coefficient {phi} is not stationary")));
                }
            }
        }
        YearMonth::parse(&self.start_period).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// Exogenous covariate values for every simulated step, `n x n` per step.
struct Paths {
    n: usize,
    /// One per process; `None` for lag-derived columns.
    values: Vec<Option<Vec<f64>>>,
}

impl Paths {
    fn draw(processes: &[CovariateProcess], n: usize, steps: usize, rng: &mut ChaCha8Rng) -> Self {
        let nn = n * n;
        let values = processes
            .iter()
            .map(|proc| {
                let path = match *proc {
                    CovariateProcess::LaggedResponse | CovariateProcess::LaggedReciprocal => return None,
                    CovariateProcess::Intercept => vec![1.0; nn * steps],
                    CovariateProcess::Constant { value } => vec![value; nn * steps],
                    CovariateProcess::SelfIndicator => {
                        let slice: Vec<f64> = (0..nn).map(|c| if c / n == c % n { 1.0 } else { 0.0 }).collect();
                        slice.repeat(steps)
                    }
                    CovariateProcess::Normal { scale } => {
                        let slice: Vec<f64> = (0..nn).map(|_| scale * normal(rng)).collect();
                        slice.repeat(steps)
                    }
                    CovariateProcess::Ar1 { phi, scale } => {
                        let sd0 = scale / (1.0 - phi * phi).sqrt();
                        let mut path = Vec::with_capacity(nn * steps);
                        let mut cur: Vec<f64> = (0..nn).map(|_| sd0 * normal(rng)).collect();
                        for _ in 0..steps {
                            path.extend_from_slice(&cur);
                            for v in cur.iter_mut() {
                                *v = phi * *v + scale * normal(rng);
                            }
                        }
                        path
                    }
                };
                Some(path)
            })
            .collect();
        Self { n, values }
    }

    fn get(&self, k: usize, s: usize, i: usize, j: usize) -> Option<f64> {
        self.values[k].as_ref().map(|v| v[cell(self.n, s, i, j)])
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub y: DyadTensor,
    pub z: DirectDesign,
    pub ws: InfluenceDesign,
    pub wr: InfluenceDesign,
    /// Largest linear predictor encountered, burn-in included.
    pub max_eta: f64,
}

impl Simulation {
    pub fn into_data(self) -> Result<SirData> {
        SirData::new(self.y, self.z, self.ws, self.wr)
    }
}

enum Outcome {
    Done(Box<Simulation>),
    Exploded { eta: f64, period: usize, max_eta: f64 },
}

fn generate(config: &SimConfig, periods: usize) -> Result<Outcome> {
    config.validate()?;
    let n = config.n;
    let nn = n * n;
    let total = config.burn_in + periods;
    let steps = total - 1;
    let (q, p) = (config.direct.len(), config.influence.len());
    let mut cov_rng = ChaCha8Rng::seed_from_u64(config.seed);
    cov_rng.set_stream(0);
    let z_paths = Paths::draw(&config.direct, n, steps, &mut cov_rng);
    let ws_paths = Paths::draw(&config.influence, n, steps, &mut cov_rng);
    let wr_paths = config
        .receiver_influence
        .as_ref()
        .map(|r| Paths::draw(r, n, steps, &mut cov_rng));
    let wr_ref = wr_paths.as_ref().unwrap_or(&ws_paths);
    let mut draw_rng = ChaCha8Rng::seed_from_u64(config.seed);
    draw_rng.set_stream(1);

    let truth = &config.truth;
    let keep_from = config.burn_in;
    let mut y_all = vec![0.0; nn * total];
    let mut z_vals = Vec::with_capacity(nn * (periods - 1) * q);
    let mut ws_vals = Vec::with_capacity(nn * (periods - 1) * p);
    let mut wr_vals = Vec::with_capacity(nn * (periods - 1) * p);
    let mut max_eta = f64::NEG_INFINITY;
    let mut a = vec![0.0; nn];
    let mut b = vec![0.0; nn];
    let mut zrow = vec![0.0; q];
    let mut wrow = vec![0.0; p];
    for s in 0..steps {
        let x = log1p_slice(n, &y_all[s * nn..(s + 1) * nn]);
        for (paths, coef, out) in [(&ws_paths, &truth.alpha, &mut a), (wr_ref, &truth.beta, &mut b)] {
            for i in 0..n {
                for i2 in 0..n {
                    for (k, w) in wrow.iter_mut().enumerate() {
                        *w = paths.get(k, s, i, i2).expect("influence covariates are exogenous");
                    }
                    out[i * n + i2] = dot(&wrow, coef);
                }
            }
        }
        // m = A X B^T
        let mut ax = vec![0.0; nn];
        for i in 0..n {
            for i2 in 0..n {
                let av = a[i * n + i2];
                if av != 0.0 {
                    for j2 in 0..n {
                        ax[i * n + j2] += av * x[i2 * n + j2];
                    }
                }
            }
        }
        let retained = s >= keep_from;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for (k, proc) in config.direct.iter().enumerate() {
                    zrow[k] = match proc {
                        CovariateProcess::LaggedResponse => x[i * n + j],
                        CovariateProcess::LaggedReciprocal => x[j * n + i],
                        _ => z_paths.get(k, s, i, j).expect("exogenous"),
                    };
                }
                let bilinear = dot(&ax[i * n..(i + 1) * n], &b[j * n..(j + 1) * n]);
                let eta = dot(&zrow, &truth.theta) + bilinear;
                max_eta = max_eta.max(eta);
                if !(eta <= config.guard) {
                    return Ok(Outcome::Exploded { eta, period: s + 1, max_eta });
                }
                let mu = eta.exp();
                let draw: f64 = Poisson::new(mu).map_err(|e| Error::Config(e.to_string()))?.sample(&mut draw_rng);
                y_all[(s + 1) * nn + i * n + j] = draw;
                if retained {
                    z_vals.extend_from_slice(&zrow);
                }
            }
        }
        if retained {
            for (paths, out) in [(&ws_paths, &mut ws_vals), (wr_ref, &mut wr_vals)] {
                for i in 0..n {
                    for i2 in 0..n {
                        for k in 0..p {
                            out.push(paths.get(k, s, i, i2).expect("exogenous"));
                        }
                    }
                }
            }
        }
    }
    // z_vals holds off-diagonal rows only; expand to the full grid
    let mut z_full = vec![0.0; nn * (periods - 1) * q];
    let mut it = z_vals.chunks_exact(q);
    for t in 0..periods - 1 {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let row = it.next().expect("one row per off-diagonal cell");
                    z_full[cell(n, t, i, j) * q..(cell(n, t, i, j) + 1) * q].copy_from_slice(row);
                }
            }
        }
    }
    let start = YearMonth::parse(&config.start_period).map_err(|e| Error::Config(e.to_string()))?;
    let labels: Vec<String> = (0..periods).map(|t| start.plus(t).to_string()).collect();
    let y = DyadTensor::new(y_all[keep_from * nn..].to_vec(), default_actor_labels(n), labels)?;
    let columns = config.direct_names().into_iter().zip(config.direct.iter().map(|c| c.column_kind())).collect();
    let z = DirectDesign::new(n, periods - 1, columns, z_full)?;
    let ws = InfluenceDesign::new(n, periods - 1, config.influence_names(false), ws_vals)?;
    let wr = InfluenceDesign::new(n, periods - 1, config.influence_names(true), wr_vals)?;
    Ok(Outcome::Done(Box::new(Simulation { y, z, ws, wr, max_eta })))
}

pub fn simulate(config: &SimConfig) -> Result<Simulation> {
    match generate(config, config.periods)? {
        Outcome::Done(sim) => Ok(*sim),
        Outcome::Exploded { eta, period, .. } => Err(Error::Unstable {
            eta,
            guard: config.guard,
            period,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub max_eta: f64,
    pub stable: bool,
    /// Step at which the guard was crossed, if it was.
    pub exploded_at: Option<usize>,
    pub pilot_periods: usize,
}

/// Pilot run over at least 200 retained periods; flags configurations whose
/// linear predictor crosses the guard.
pub fn stability_check(config: &SimConfig) -> Result<StabilityReport> {
    let pilot_periods = config.periods.max(200);
    Ok(match generate(config, pilot_periods)? {
        Outcome::Done(sim) => StabilityReport {
            max_eta: sim.max_eta,
            stable: true,
            exploded_at: None,
            pilot_periods,
        },
        Outcome::Exploded { period, max_eta, .. } => StabilityReport {
            max_eta,
            stable: false,
            exploded_at: Some(period),
            pilot_periods,
        },
    })
}
