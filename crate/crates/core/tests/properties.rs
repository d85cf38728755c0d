//! Randomized invariants over the public API.

use std::path::Path;

use proptest::prelude::*;

use sfw3d::fft::Fft3;
use sfw3d::forward::{ForwardModel, Psf};
use sfw3d::harness::bench::{quartiles, trial_seed};
use sfw3d::harness::match_atoms;
use sfw3d::solvers::lasso::{kkt_violation, solve_system, LassoSystem};
use sfw3d::solvers::LassoOptions;
use sfw3d::{AtomParams, GridGeometry, Volume, WeightedMeasure};

fn dims() -> impl Strategy<Value = [usize; 3]> {
    [1usize..7, 1usize..7, 1usize..7]
}

fn volume(dims: [usize; 3], lo: f64, hi: f64) -> impl Strategy<Value = Volume> {
    let geom = GridGeometry::new(dims).unwrap();
    prop::collection::vec(lo..hi, geom.len()).prop_map(move |d| Volume::from_vec(geom, d).unwrap())
}

fn theta(n: f64) -> impl Strategy<Value = AtomParams> {
    ([0.0..n, 0.0..n, 0.0..n], 1.0..3.0f64, 1.2..3.0f64).prop_map(|(p, s, d)| AtomParams::new(p, s, d))
}

fn measure(n: f64, max_atoms: usize) -> impl Strategy<Value = WeightedMeasure> {
    prop::collection::vec((theta(n), 0.0..4.0f64), 0..max_atoms).prop_map(|atoms| {
        let (t, w): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
        WeightedMeasure::from_parts(&t, &w).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_bytes_round_trip(v in dims().prop_flat_map(|d| volume(d, -1e6, 1e6))) {
        let back = Volume::from_bytes(&v.to_bytes(), Path::new("mem")).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_volume_bytes_are_rejected(v in dims().prop_flat_map(|d| volume(d, -1.0, 1.0)), cut in 1usize..9) {
        let bytes = v.to_bytes();
        prop_assert!(Volume::from_bytes(&bytes[..bytes.len() - cut], Path::new("mem")).is_err());
    }

    #[test]
    fn measure_text_round_trip(mu in measure(50.0, 6)) {
        prop_assert_eq!(WeightedMeasure::parse_text(&mu.to_text(), Path::new("mem")).unwrap(), mu);
    }

    #[test]
    fn pruning_keeps_exactly_the_heavier_atoms(mu in measure(20.0, 8), tol in 0.0..3.0f64) {
        let pruned = mu.prune_zero_weights(tol);
        let expected: Vec<_> = mu.atoms().iter().filter(|a| a.weight > tol).copied().collect();
        prop_assert_eq!(pruned.atoms(), &expected[..]);
    }

    #[test]
    fn correlation_is_the_adjoint_of_convolution(
        (x, z, k) in dims().prop_flat_map(|d| (volume(d, -1.0, 1.0), volume(d, -1.0, 1.0), volume(d, 0.01, 1.0)))
    ) {
        let fft = Fft3::new(x.geometry());
        let psf = Psf::new(k, &fft).unwrap();
        let lhs = psf.convolve(&x, &fft).unwrap().dot(&z);
        let rhs = x.dot(&psf.correlate(&z, &fft).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn forward_is_linear_in_the_weights(mu in measure(11.0, 4), c in 0.0..5.0f64) {
        let model = ForwardModel::new(Volume::from_fn(GridGeometry::cube(12).unwrap(), |i, j, k| {
            if i + j + k == 0 { 1.0 } else if i + j + k == 1 { 0.25 } else { 0.0 }
        })).unwrap();
        let scaled = WeightedMeasure::from_parts(&mu.thetas(), &mu.weights().iter().map(|w| c * w).collect::<Vec<_>>()).unwrap();
        let mut expected = model.forward(&mu).unwrap();
        expected.scale(c);
        let got = model.forward(&scaled).unwrap();
        prop_assert!(got.sub(&expected).linf_and_l2_norms().0 <= 1e-12 * (1.0 + expected.linf_and_l2_norms().0));
    }

    #[test]
    fn criterion_is_bounded_below_by_the_penalty(mu in measure(11.0, 4), lambda in 0.01..2.0f64) {
        let model = ForwardModel::new(Volume::from_fn(GridGeometry::cube(12).unwrap(), |i, j, k| {
            if i + j + k == 0 { 1.0 } else { 0.0 }
        })).unwrap();
        let y = Volume::zeros(GridGeometry::cube(12).unwrap());
        let c = model.criterion(&y, &mu, lambda).unwrap();
        prop_assert!(c >= lambda * mu.total_mass() - 1e-12);
        prop_assert_eq!(model.criterion(&y, &WeightedMeasure::empty(), lambda).unwrap(), 0.0);
    }

    #[test]
    fn matching_partitions_both_measures(est in measure(20.0, 6), truth in measure(20.0, 6), radius in 0.0..10.0f64) {
        let r = match_atoms(&est, &truth, radius);
        prop_assert_eq!(r.pairs.len() + r.missed.len(), truth.len());
        prop_assert_eq!(r.pairs.len() + r.spurious.len(), est.len());
        prop_assert!(r.pairs.iter().all(|p| p.position_error <= radius));
        let mut used: Vec<_> = r.pairs.iter().map(|p| p.estimate_index).chain(r.spurious.iter().copied()).collect();
        used.sort();
        prop_assert_eq!(used, (0..est.len()).collect::<Vec<_>>());
    }

    #[test]
    fn quartiles_are_ordered_and_inside_the_range(v in prop::collection::vec(-1e3..1e3f64, 1..40)) {
        let (q1, m, q3) = quartiles(&v);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= q1 && q1 <= m && m <= q3 && q3 <= hi);
    }

    #[test]
    fn trial_seeds_depend_on_every_coordinate(s in any::<u64>(), n in 1usize..500, k in 1usize..20, r in 0usize..100) {
        let base = trial_seed(s, n, k, r);
        prop_assert_eq!(base, trial_seed(s, n, k, r));
        prop_assert_ne!(base, trial_seed(s, n + 1, k, r));
        prop_assert_ne!(base, trial_seed(s, n, k + 1, r));
        prop_assert_ne!(base, trial_seed(s, n, k, r + 1));
    }

    #[test]
    fn lasso_meets_kkt_on_random_gram_systems(
        rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 8), 1..5),
        target in prop::collection::vec(-2.0..2.0f64, 8),
        lambda in 0.01..1.0f64,
    ) {
        let n = rows.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        // Ridge keeps the Gram matrix well conditioned.
        let gram: Vec<f64> = (0..n * n)
            .map(|ij| dot(&rows[ij / n], &rows[ij % n]) + if ij / n == ij % n { 0.1 } else { 0.0 })
            .collect();
        let correlation: Vec<f64> = rows.iter().map(|r| dot(r, &target)).collect();
        let sys = LassoSystem { gram: gram.clone(), correlation: correlation.clone(), n };
        let out = solve_system(&sys, lambda, &vec![0.0; n], &LassoOptions::default()).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.weights.iter().all(|&w| w >= 0.0));
        let grad: Vec<f64> = (0..n)
            .map(|i| dot(&gram[i * n..(i + 1) * n], &out.weights) - correlation[i] + lambda)
            .collect();
        prop_assert!(kkt_violation(&out.weights, &grad) <= 1e-8);
    }
}
