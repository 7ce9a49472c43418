mod common;

use proptest::prelude::*;
use sirnet::tensor::unflatten;
use sirnet::{
    canonicalize, collapse_alpha, collapse_beta, collapse_full, flatten, lag_log_transform, predict_mu, DyadTensor,
    Mask, ParameterSet, SirData,
};

use common::{brute_collapsed, random_designs};

fn tensor_strategy() -> impl Strategy<Value = DyadTensor> {
    (2usize..5, 2usize..5).prop_flat_map(|(n, periods)| {
        prop::collection::vec(0u32..20, n * n * periods).prop_map(move |v| {
            DyadTensor::new(
                v.into_iter().map(f64::from).collect(),
                sirnet::tensor::default_actor_labels(n),
                sirnet::tensor::default_period_labels(periods),
            )
            .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flatten_unflatten_round_trip(y in tensor_strategy()) {
        let (index, response) = flatten(&y, &Mask::none()).unwrap();
        prop_assert_eq!(index.len(), y.n() * (y.n() - 1) * y.modeled_periods());
        let back = unflatten(&index, &response, y.slice(0), y.actor_labels().to_vec(), y.period_labels().to_vec()).unwrap();
        for t in 0..y.periods() {
            for i in 0..y.n() {
                for j in 0..y.n() {
                    prop_assert_eq!(back.get(t, i, j), y.get(t, i, j));
                }
            }
        }
        prop_assert_eq!(back.actor_labels(), y.actor_labels());
    }

    #[test]
    fn masked_periods_drop_rows(y in tensor_strategy(), pick in 0usize..8) {
        let t = pick % y.modeled_periods();
        let (index, _) = flatten(&y, &Mask::periods([t])).unwrap();
        prop_assert_eq!(index.len(), y.n() * (y.n() - 1) * (y.modeled_periods() - 1));
        prop_assert!(index.cells().iter().all(|c| c.t != t && c.i != c.j));
    }

    #[test]
    fn lag_log_monotone_and_zero_fixed(a in 0u32..1000, b in 0u32..1000) {
        let mk = |v: u32| DyadTensor::from_fn(2, 2, |_, _, _| f64::from(v)).unwrap();
        let (xa, xb) = (lag_log_transform(&mk(a)).unwrap(), lag_log_transform(&mk(b)).unwrap());
        if a <= b {
            prop_assert!(xa.get(0, 0, 1) <= xb.get(0, 0, 1));
        }
        prop_assert_eq!(lag_log_transform(&mk(0)).unwrap().get(0, 1, 0), 0.0);
        prop_assert_eq!(xa.get(0, 1, 1), 0.0);
    }

    #[test]
    fn collapse_is_linear_in_beta(seed in any::<u64>(), n in 2usize..6, p in 1usize..4, c in -5.0f64..5.0) {
        let (x, ws, wr) = random_designs(n, 2, p, seed);
        let beta: Vec<f64> = (0..p).map(|k| 0.3 * k as f64 - 0.2).collect();
        let scaled: Vec<f64> = beta.iter().map(|b| c * b).collect();
        let v = collapse_beta(&x, &ws, &wr, &beta).unwrap();
        let vc = collapse_beta(&x, &ws, &wr, &scaled).unwrap();
        for t in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    for (a, b) in v.get(t, i, j).iter().zip(vc.get(t, i, j)) {
                        prop_assert!((c * a - b).abs() <= 1e-10 * (1.0 + b.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn collapse_routes_agree(seed in any::<u64>(), n in 2usize..6, p in 1usize..4) {
        let (x, ws, wr) = random_designs(n, 2, p, seed);
        let alpha: Vec<f64> = (0..p).map(|k| 1.0 - 0.4 * k as f64).collect();
        let beta: Vec<f64> = (0..p).map(|k| 0.5 + 0.2 * k as f64).collect();
        let v = collapse_beta(&x, &ws, &wr, &beta).unwrap();
        let u = collapse_alpha(&x, &ws, &wr, &alpha).unwrap();
        for t in 0..2 {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    let full = collapse_full(&x, &ws, &wr, i, j, t).unwrap();
                    let brute = brute_collapsed(&x, &ws, &wr, i, j, t);
                    let mut bilinear = 0.0;
                    for k in 0..p {
                        for l in 0..p {
                            prop_assert!((full[(k, l)] - brute[k][l]).abs() < 1e-10);
                            bilinear += alpha[k] * full[(k, l)] * beta[l];
                        }
                    }
                    let via_beta: f64 = alpha.iter().zip(v.get(t, i, j)).map(|(a, b)| a * b).sum();
                    let via_alpha: f64 = beta.iter().zip(u.get(t, i, j)).map(|(a, b)| a * b).sum();
                    prop_assert!((bilinear - via_beta).abs() < 1e-10);
                    prop_assert!((bilinear - via_alpha).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rates_invariant_to_rescaling(seed in any::<u64>(), c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]) {
        let (n, periods, p) = (4, 3, 2);
        let (_, ws, wr) = random_designs(n, periods - 1, p, seed);
        let y = DyadTensor::from_fn(n, periods, |t, i, j| ((seed as usize + t * 5 + i * 3 + j) % 4) as f64).unwrap();
        let data = SirData::new(y, common::intercept_only(n, periods - 1), ws, wr).unwrap();
        let params = ParameterSet { theta: vec![-0.2], alpha: vec![0.7, -0.3], beta: vec![0.2, 0.4] };
        let scaled = ParameterSet {
            theta: params.theta.clone(),
            alpha: params.alpha.iter().map(|a| a / c).collect(),
            beta: params.beta.iter().map(|b| b * c).collect(),
        };
        let a = predict_mu(&params, &data, &Mask::none()).unwrap();
        let b = predict_mu(&scaled, &data, &Mask::none()).unwrap();
        for t in 0..periods - 1 {
            let rel = common::max_rel_diff(
                &a.slice(t).iter().copied().filter(|v| !v.is_nan()).collect::<Vec<_>>(),
                &b.slice(t).iter().copied().filter(|v| !v.is_nan()).collect::<Vec<_>>(),
            );
            prop_assert!(rel < 1e-12, "relative difference {rel}");
        }
        let ca = canonicalize(&params).unwrap();
        let cb = canonicalize(&scaled).unwrap();
        prop_assert!(common::max_rel_diff(&ca.beta, &cb.beta) < 1e-12);
        prop_assert_eq!(canonicalize(&ca).unwrap(), ca);
    }

    #[test]
    fn scores_finite_and_log_nonnegative(y in 0u32..200, mu in 1e-3f64..300.0) {
        let s = sirnet::score_cell(f64::from(y), mu).unwrap();
        prop_assert!(s.dawid_sebastiani.is_finite() && s.brier.is_finite() && s.spherical.is_finite());
        prop_assert!(s.logarithmic >= 0.0);
        prop_assert!(s.spherical <= 0.0 && s.spherical >= -1.0);
        prop_assert!(s.brier >= -1.0 - 1e-12 && s.brier <= 1.0);
    }
}
