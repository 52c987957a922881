use std::f64::consts::PI;

use poreuq::density::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Normal::new(0.0, 1.0).unwrap().sample_iter(&mut rng).take(n).collect()
}

fn naive_1d(xs: &[f64], h: f64, v: f64) -> f64 {
    xs.iter().map(|x| (-(v - x).powi(2) / (2.0 * h * h)).exp()).sum::<f64>() / (xs.len() as f64 * (2.0 * PI).sqrt() * h)
}

#[test]
fn isj_on_standard_normal() {
    let xs = normals(10_000, 1);
    let b = isj_bandwidth(&xs).unwrap();
    let reference = 1.06 * 10_000f64.powf(-0.2);
    assert!((b.h - reference).abs() < 0.25 * reference, "{b:?}");
    assert!(!b.fallback);
}

#[test]
fn isj_scale_equivariance() {
    let xs = normals(5000, 2);
    let h = isj_bandwidth(&xs).unwrap().h;
    for c in [0.01, 3.0, 250.0] {
        let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let hc = isj_bandwidth(&scaled).unwrap().h;
        assert!((hc / (c * h) - 1.0).abs() < 0.01, "c = {c}");
    }
}

#[test]
fn isj_is_narrower_than_reference_on_bimodal() {
    let xs: Vec<f64> = normals(10_000, 3)
        .iter()
        .enumerate()
        .map(|(k, x)| if k % 2 == 0 { x - 3.0 } else { x + 3.0 })
        .collect();
    assert!(isj_bandwidth(&xs).unwrap().h < normal_reference(&xs));
}

#[test]
fn isj_rejects_degenerate_samples() {
    assert!(isj_bandwidth(&[1.0; 100]).is_err());
    assert!(isj_bandwidth(&normals(10, 0)).is_err());
}

#[test]
fn pointwise_oracles() {
    let g = kde_1d(&[0.0], 1.0, &linspace(-4.0, 4.0, 129)).unwrap();
    assert!((g.eval_1d(0.0) - 0.39894).abs() < 1e-5);
    assert!((g.eval_1d(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-12);
    let g = kde_1d(&[-1.0, 1.0], 1.0, &linspace(-4.0, 4.0, 129)).unwrap();
    assert!((g.eval_1d(0.0) - 0.24197).abs() < 1e-5);
    let axis = linspace(-4.0, 4.0, 129);
    let g = kde_2d(&[0.0], &[0.0], 1.0, 1.0, &axis, &axis).unwrap();
    assert!((g.eval_2d(0.0, 0.0) - 0.15915).abs() < 1e-5);
    assert!((g.eval_2d(0.0, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-12);
    assert!(kde_2d(&[0.0, 1.0], &[0.0], 1.0, 1.0, &axis, &axis).is_err());
}

#[test]
fn grid_integrals_on_padded_axes() {
    for seed in 0..5 {
        let xs = normals(2000, seed);
        let ys: Vec<f64> = normals(2000, seed + 100).iter().zip(&xs).map(|(e, x)| x * x + 0.3 * e).collect();
        let (hx, hy) = (isj_bandwidth(&xs).unwrap().h, isj_bandwidth(&ys).unwrap().h);
        let g1 = kde_1d(&xs, hx, &padded_axis(&xs, hx, DEFAULT_GRID)).unwrap();
        assert!((0.97..=1.01).contains(&g1.integral()), "{}", g1.integral());
        let g2 = kde_2d(&xs, &ys, hx, hy, &padded_axis(&xs, hx, DEFAULT_GRID), &padded_axis(&ys, hy, DEFAULT_GRID)).unwrap();
        assert!((0.95..=1.02).contains(&g2.integral()), "{}", g2.integral());
        assert!(g2.values.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn independent_samples_factor() {
    let n = 20_000;
    let (xs, ys) = (normals(n, 7), normals(n, 8));
    let h = 0.3;
    let axis = linspace(-2.0, 2.0, 33);
    let gx = kde_1d(&xs, h, &axis).unwrap();
    let gy = kde_1d(&ys, h, &axis).unwrap();
    let g = kde_2d(&xs, &ys, h, h, &axis, &axis).unwrap();
    for (i, &u) in axis.iter().enumerate() {
        for (j, &v) in axis.iter().enumerate() {
            let f = g.values[i * axis.len() + j];
            // pointwise standard error of a Gaussian product-kernel estimate
            let se = (f / (n as f64 * 4.0 * PI * h * h)).sqrt();
            let outer = gx.eval_1d(u) * gy.eval_1d(v);
            assert!((f - outer).abs() < 3.0 * se, "({u}, {v}): {f} vs {outer}");
        }
    }
}

#[test]
fn trapezoid_marginals_match_1d() {
    let xs = normals(5000, 9);
    let ys: Vec<f64> = normals(5000, 10).iter().zip(&xs).map(|(e, x)| 0.6 * x + 0.8 * e).collect();
    let (hx, hy) = (0.25, 0.3);
    let (ax, ay) = (padded_axis(&xs, hx, 128), padded_axis(&ys, hy, 128));
    let g = kde_2d(&xs, &ys, hx, hy, &ax, &ay).unwrap();
    let fx = kde_1d(&xs, hx, &ax).unwrap();
    let fy = kde_1d(&ys, hy, &ay).unwrap();
    let sup = |a: &[f64], b: &[f64]| {
        let peak = b.iter().cloned().fold(0.0, f64::max);
        a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) / peak
    };
    assert!(sup(&g.marginal_x(), &fx.values) < 0.05);
    assert!(sup(&g.marginal_y(), &fy.values) < 0.05);
}

#[test]
fn matches_naive_sum() {
    let xs = normals(3000, 11);
    let axis = linspace(-5.0, 5.0, 101);
    let g = kde_1d(&xs, 0.2, &axis).unwrap();
    for (k, &v) in axis.iter().enumerate() {
        let want = naive_1d(&xs, 0.2, v);
        assert!((g.values[k] - want).abs() <= 1e-6 * want.max(1e-300), "{v}");
    }
    let ys = normals(3000, 12);
    let g2 = kde_2d(&xs, &ys, 0.3, 0.4, &axis, &axis).unwrap();
    for &(i, j) in &[(50, 50), (10, 70), (33, 41), (99, 1)] {
        let (u, v) = (axis[i], axis[j]);
        let want = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (-(u - x).powi(2) / 0.18 - (v - y).powi(2) / 0.32).exp())
            .sum::<f64>()
            / (3000.0 * 2.0 * PI * 0.3 * 0.4);
        assert!((g2.values[i * 101 + j] - want).abs() <= 1e-6 * want.max(1e-300));
    }
}

#[test]
fn csv_layouts() {
    let g = kde_1d(&[0.0], 1.0, &linspace(-1.0, 1.0, 3)).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    let a = linspace(-1.0, 1.0, 3);
    let g = kde_2d(&[0.0], &[0.0], 1.0, 1.0, &a, &a).unwrap();
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn permutation_invariant(xs in prop::collection::vec(-3.0..3.0f64, 2..200), rot in 0usize..200) {
        let axis = linspace(-4.0, 4.0, 64);
        let mut ys = xs.clone();
        ys.rotate_left(rot % xs.len());
        ys.reverse();
        let a = kde_1d(&xs, 0.4, &axis).unwrap();
        let b = kde_1d(&ys, 0.4, &axis).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            prop_assert!((u - v).abs() <= 1e-12 * u.max(1e-300));
        }
    }

    #[test]
    fn peak_decreases_with_bandwidth(xs in prop::collection::vec(-3.0..3.0f64, 1..100), h in 0.05..2.0f64) {
        let axis = linspace(-10.0, 10.0, 401);
        let peak = |h: f64| kde_1d(&xs, h, &axis).unwrap().values.iter().cloned().fold(0.0, f64::max);
        prop_assert!(peak(1.5 * h) <= peak(h) * (1.0 + 1e-9));
    }

    #[test]
    fn density_is_nonnegative(xs in prop::collection::vec(-1e3..1e3f64, 1..50), h in 1e-2..10.0f64) {
        let axis = linspace(-1.1e3, 1.1e3, 64);
        prop_assert!(kde_1d(&xs, h, &axis).unwrap().values.iter().all(|&v| v >= 0.0));
    }
}
