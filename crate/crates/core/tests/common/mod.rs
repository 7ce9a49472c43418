#![allow(dead_code)]

use sirnet::sim::{simulate, CovariateProcess, SimConfig};
use sirnet::{DirectDesign, InfluenceDesign, ParameterSet, PredictorTensor, SirData, SirFit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// q = 2, p = 2 truth used across the suites: intercept plus one static
/// normal direct covariate; self indicator plus one static normal pair
/// covariate on both sides.
pub fn moderate_truth() -> ParameterSet {
    ParameterSet {
        theta: vec![-0.3, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.4, 0.15],
    }
}

pub fn simulate_data(n: usize, periods: usize, truth: ParameterSet, seed: u64) -> SirData {
    simulate(&SimConfig::standard(n, periods, truth, seed))
        .expect("stable configuration")
        .into_data()
        .expect("valid data")
}

/// Truth and design that stay well inside the stability guard at n = 10:
/// the pair covariate has scale 0.5 and the self channel is damped.
pub fn stable_config(n: usize, periods: usize, seed: u64) -> SimConfig {
    let truth = ParameterSet {
        theta: vec![-0.3, 0.25],
        alpha: vec![1.0, 0.3],
        beta: vec![0.3, 0.15],
    };
    let mut cfg = SimConfig::standard(n, periods, truth, seed);
    cfg.influence[1] = CovariateProcess::Normal { scale: 0.5 };
    cfg
}

/// Influence as in [`moderate_truth`] with the lagged response added to
/// the direct design, so the plain GLM baseline also carries dynamics.
pub fn dynamic_config(n: usize, periods: usize, seed: u64) -> SimConfig {
    let truth = ParameterSet {
        theta: vec![-0.3, 0.2, 0.25],
        ..moderate_truth()
    };
    let mut cfg = SimConfig::standard(n, periods, truth, seed);
    cfg.direct = vec![
        CovariateProcess::Intercept,
        CovariateProcess::LaggedResponse,
        CovariateProcess::Normal { scale: 1.0 },
    ];
    cfg
}

pub fn assert_monotone(fit: &SirFit) {
    for w in fit.loglik_trace.windows(2) {
        let tol = 1e-9 * w[0].abs().max(1.0);
        assert!(w[1] >= w[0] - tol, "trace decreased: {} -> {}", w[0], w[1]);
    }
}

pub fn trace_is_monotone(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0))
}

/// Random predictor and influence designs, diagonal of x zero.
pub fn random_designs(n: usize, periods: usize, p: usize, seed: u64) -> (PredictorTensor, InfluenceDesign, InfluenceDesign) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * n * periods).map(|_| rng.random_range(0.0..3.0)).collect();
    let x = PredictorTensor::from_values(n, periods, x).unwrap();
    let names: Vec<String> = (0..p).map(|k| format!("w{k}")).collect();
    let mut draw = |_: usize, _: usize, _: usize, _: usize| rng.random_range(-1.0..1.0);
    let ws = InfluenceDesign::from_fn(n, periods, names.clone(), &mut draw).unwrap();
    let wr = InfluenceDesign::from_fn(n, periods, names, &mut draw).unwrap();
    (x, ws, wr)
}

#[allow(clippy::needless_range_loop)]
/// Brute-force `Xt_ijt = sum_{i' != j'} x_{i'j't} w_{ii't} w_{jj't}^T`.
pub fn brute_collapsed(
    x: &PredictorTensor,
    ws: &InfluenceDesign,
    wr: &InfluenceDesign,
    i: usize,
    j: usize,
    t: usize,
) -> Vec<Vec<f64>> {
    let (n, p) = (x.n(), ws.p());
    let mut m = vec![vec![0.0; p]; p];
    for i2 in 0..n {
        for j2 in 0..n {
            if i2 == j2 {
                continue;
            }
            let xv = x.get(t, i2, j2);
            for k in 0..p {
                for l in 0..p {
                    m[k][l] += xv * ws.get(t, i, i2)[k] * wr.get(t, j, j2)[l];
                }
            }
        }
    }
    m
}

pub fn intercept_only(n: usize, periods: usize) -> DirectDesign {
    DirectDesign::intercept_only(n, periods)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-300))
        .fold(0.0, f64::max)
}
