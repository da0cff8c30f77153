mod common;

use common::*;
use proptest::prelude::*;
use qvarlab::bounds::{tri_bounds, Cell};
use qvarlab::linalg::cholesky_with_jitter;
use qvarlab::*;

fn tri_spec() -> impl Strategy<Value = ProcessSpec> {
    (0.05f64..0.95, 0.05f64..0.95).prop_map(|(h, k)| ProcessSpec::tri_fbm(h, k).unwrap())
}

fn nth_spec() -> impl Strategy<Value = ProcessSpec> {
    (1u32..=3, 0.05f64..0.95).prop_map(|(order, frac)| ProcessSpec::nth_fbm(order as f64 - 1.0 + frac, order).unwrap())
}

fn any_spec() -> impl Strategy<Value = ProcessSpec> {
    prop_oneof![tri_spec(), nth_spec()]
}

fn oracle_cov(spec: &ProcessSpec, s: f64, t: f64) -> f64 {
    match spec.kind() {
        ProcessKind::TriFbm => tri_cov(spec.h(), spec.k().unwrap(), s, t),
        ProcessKind::NthFbm => nth_cov(spec.h(), spec.order().unwrap(), s, t),
    }
}

/// Natural magnitude of `C` near `(s, t)`, used as an absolute error scale.
fn scale(spec: &ProcessSpec, s: f64, t: f64) -> f64 {
    let v = |x: f64| oracle_cov(spec, x, x).abs();
    v(s).max(v(t)).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn covariance_is_exactly_symmetric(spec in any_spec(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        prop_assert_eq!(spec.covariance(s, t).unwrap(), spec.covariance(t, s).unwrap());
    }

    #[test]
    fn covariance_matches_reference(spec in any_spec(), s in 0.01f64..3.0, t in 0.01f64..3.0) {
        let got = spec.covariance(s, t).unwrap();
        let want = oracle_cov(&spec, s, t);
        prop_assert!((got - want).abs() <= 1e-12 * scale(&spec, s, t), "{} vs {}", got, want);
    }

    #[test]
    fn covariance_vanishes_at_origin(spec in any_spec(), t in 0.0f64..5.0) {
        prop_assert_eq!(spec.covariance(0.0, t).unwrap(), 0.0);
    }

    #[test]
    fn self_similarity(spec in any_spec(), s in 0.05f64..2.0, t in 0.05f64..2.0, c in 0.1f64..10.0) {
        let g = spec.self_similarity();
        let lhs = spec.covariance(c * s, c * t).unwrap();
        let rhs = c.powf(2.0 * g) * spec.covariance(s, t).unwrap();
        let tol = 1e-10 * c.powf(2.0 * g) * scale(&spec, s, t);
        prop_assert!((lhs - rhs).abs() <= tol, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn structure_identity(spec in any_spec(), s in 0.0f64..3.0, t in 0.0f64..3.0) {
        let psi = spec.structure_function(s, t).unwrap();
        let c = |a, b| oracle_cov(&spec, a, b);
        let direct = c(s, s) + c(t, t) - 2.0 * c(s, t);
        prop_assert!((psi - direct).abs() <= 1e-11 * scale(&spec, s, t), "{} vs {}", psi, direct);
        prop_assert!(psi >= 0.0);
    }

    #[test]
    fn mixed_partial_against_finite_differences(h in 0.1f64..0.9, k in 0.1f64..0.9, s in 0.2f64..2.0, t in 0.2f64..2.0) {
        let d = 1e-4;
        let c = |a, b| tri_cov(h, k, a, b);
        let fd = (c(s + d, t + d) - c(s + d, t - d) - c(s - d, t + d) + c(s - d, t - d)) / (4.0 * d * d);
        let exact = mixed_partial_cov_tri(h, k, s, t).unwrap();
        prop_assert!(rel_err(exact, fd) < 1e-4, "{} vs {}", exact, fd);
        prop_assert!(exact > 0.0);
    }

    #[test]
    fn phi_matches_four_point_reference(spec in any_spec(), m in 0u32..6, n in 0u32..6, jr in 0.0f64..1.0, kr in 0.0f64..1.0, horizon in 0.5f64..3.0) {
        let j = 1 + (jr * (1u64 << m) as f64) as u64 % (1u64 << m);
        let k = 1 + (kr * (1u64 << n) as f64) as u64 % (1u64 << n);
        let got = phi(&spec, m, n, j, k, horizon).unwrap();
        let (dm, dn) = (horizon / (1u64 << m) as f64, horizon / (1u64 << n) as f64);
        let want = four_point(|a, b| oracle_cov(&spec, a, b), (j - 1) as f64 * dm, j as f64 * dm, (k - 1) as f64 * dn, k as f64 * dn);
        let tol = 1e-11 * scale(&spec, horizon, horizon);
        prop_assert!((got - want).abs() <= tol, "{} vs {}", got, want);
    }

    #[test]
    fn refinement_identity(spec in any_spec(), m in 0u32..7, n in 0u32..7, jr in 0.0f64..1.0, kr in 0.0f64..1.0) {
        let j = 1 + (jr * (1u64 << m) as f64) as u64 % (1u64 << m);
        let k = 1 + (kr * (1u64 << n) as f64) as u64 % (1u64 << n);
        let coarse = phi(&spec, m, n, j, k, 1.0).unwrap();
        let fine = phi(&spec, m + 1, n, 2 * j - 1, k, 1.0).unwrap() + phi(&spec, m + 1, n, 2 * j, k, 1.0).unwrap();
        let size = (phi(&spec, m, m, j, j, 1.0).unwrap() * phi(&spec, n, n, k, k, 1.0).unwrap()).sqrt();
        prop_assert!((coarse - fine).abs() <= 1e-10 * size.max(1e-300), "{} vs {}", coarse, fine);
    }

    #[test]
    fn cauchy_schwarz(spec in any_spec(), m in 0u32..8, n in 0u32..8, jr in 0.0f64..1.0, kr in 0.0f64..1.0) {
        let j = 1 + (jr * (1u64 << m) as f64) as u64 % (1u64 << m);
        let k = 1 + (kr * (1u64 << n) as f64) as u64 % (1u64 << n);
        let x = phi(&spec, m, n, j, k, 1.0).unwrap();
        let a = phi(&spec, m, m, j, j, 1.0).unwrap();
        let b = phi(&spec, n, n, k, k, 1.0).unwrap();
        prop_assert!(x * x <= a * b * (1.0 + 1e-9), "{}^2 > {} * {}", x, a, b);
    }

    #[test]
    fn increment_matrix_is_symmetric_and_factorizable(spec in any_spec(), n in 0u32..7) {
        let mat = phi_matrix(&spec, n, n, 1.0, &Guards::default()).unwrap();
        let d = mat.rows();
        for j in 1..=d {
            for k in 1..=d {
                prop_assert_eq!(mat.entry(j, k), mat.entry(k, j));
            }
        }
        let f = cholesky_with_jitter(mat.as_slice(), d).unwrap();
        prop_assert!(f.jitter() <= 1e-10 * mat.trace());
    }

    #[test]
    fn weighted_qv_scales_with_alpha(xs in proptest::collection::vec(-2.0f64..2.0, 16), alpha in -2.0f64..2.0) {
        let base = weighted_qv(&xs, 0.0, 4).unwrap();
        let w = weighted_qv(&xs, alpha, 4).unwrap();
        prop_assert!((w - (4.0 * alpha).exp2() * base).abs() <= 1e-12 * w.abs().max(1e-300));
    }

    #[test]
    fn bounds_are_nonnegative(h in 0.05f64..0.95, k in 0.05f64..0.95, m in 1u32..10, n in 1u32..10, j in 1u64..64, kk in 1u64..64) {
        let b = tri_bounds(h, k, Cell { m, n, j, k: kk }).unwrap();
        for (_, v) in b.applicable() {
            prop_assert!(v >= 0.0 && v.is_finite());
        }
    }
}

#[test]
fn double_sequence_diagonal_is_half_variance() {
    let guards = Guards::default();
    for spec in [ProcessSpec::tri_fbm(0.7, 0.3).unwrap(), ProcessSpec::nth_fbm(1.4, 2).unwrap()] {
        let table = double_sequence(&spec, 6, WeightScheme::UnitWeight, 1.0, &guards).unwrap();
        for n in 0..=6 {
            let var = exact_moments(&spec, n, 1.0, 1.0, &guards).unwrap().variance.unwrap();
            let a = table.get(n, n).unwrap();
            assert!(rel_err(a, 0.5 * var) < 1e-12, "{spec} n={n}: {a} vs {}", 0.5 * var);
            for m in 0..=6 {
                assert_eq!(table.get(m, n), table.get(n, m));
            }
        }
    }
}

#[test]
fn exact_mean_matches_reference_sum() {
    let guards = Guards::default();
    for spec in [ProcessSpec::tri_fbm(0.3, 0.6).unwrap(), ProcessSpec::nth_fbm(2.2, 3).unwrap()] {
        for n in [0u32, 3, 7] {
            let dt = 2.0 / (1u64 << n) as f64;
            let want: f64 = (1..=(1u64 << n))
                .map(|k| {
                    let (a, b) = ((k - 1) as f64 * dt, k as f64 * dt);
                    four_point(|x, y| oracle_cov(&spec, x, y), a, b, a, b)
                })
                .sum();
            let got = exact_moments(&spec, n, 0.0, 2.0, &guards).unwrap().mean;
            assert!(rel_err(got, want) < 1e-9, "{spec} n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn guards_limit_exact_moments() {
    let spec = ProcessSpec::tri_fbm(0.5, 0.5).unwrap();
    let guards = Guards {
        mean_level: 6,
        variance_level: 4,
        ..Guards::default()
    };
    assert!(exact_moments(&spec, 5, 1.0, 1.0, &guards).unwrap().is_mean_only());
    assert!(!exact_moments(&spec, 4, 1.0, 1.0, &guards).unwrap().is_mean_only());
    assert!(matches!(
        exact_moments(&spec, 7, 1.0, 1.0, &guards),
        Err(Error::GuardExceeded { .. })
    ));
}

#[test]
fn tri_fbm_unit_variance_example() {
    for k in [0.2, 0.5, 0.9] {
        let spec = ProcessSpec::tri_fbm(0.6, k).unwrap();
        let v = spec.covariance(1.0, 1.0).unwrap();
        assert!((v - (2.0 - k.exp2())).abs() < 1e-15);
    }
}

fn proxies(h: f64, k: f64, levels: std::ops::RangeInclusive<u32>) -> Vec<f64> {
    let spec = ProcessSpec::tri_fbm(h, k).unwrap();
    levels
        .map(|n| estimate_hk_exact_proxy(&spec, n, 1.0, &Guards::default()).unwrap().value)
        .collect()
}

#[test]
fn exact_proxy_example_at_quarter() {
    let p = proxies(0.5, 0.5, 16..=16)[0];
    assert!((p - 0.25).abs() <= 0.08, "{p}");
}

#[test]
fn exact_proxy_tail_is_monotone_for_small_hk() {
    for (h, k) in [(0.4, 0.5), (0.5, 0.5), (0.6, 0.5)] {
        let hk = h * k;
        let v = proxies(h, k, 8..=20);
        let gap: Vec<f64> = v.iter().map(|p| (p - hk).abs()).collect();
        assert!(gap.windows(2).all(|w| w[1] < w[0]), "HK={hk}: {v:?}");
        let steps: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(steps.windows(2).all(|w| w[1] < w[0]), "HK={hk}: {steps:?}");
    }
}
