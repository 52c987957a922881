use std::f64::consts::PI;

use poreuq::bayesnet::{ModelKind, PriorModel};
use poreuq::geometry::*;
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn closed_form_bounds() {
    assert!(close(nanotube_length_bound(10.0, 4.0).unwrap(), 20.0 - 384f64.sqrt(), 1e-12));
    assert!(close(nanotube_length_bound(10.0, 4.0).unwrap(), 0.4041, 1e-4));
    assert!(nanotube_length_bound(10.0, 1e-9).unwrap() < 1e-12);
    assert!(close(nanotube_length_bound(10.0, 20.0 - 1e-12).unwrap(), 20.0, 1e-4));
    assert!(nanotube_length_bound(10.0, 20.0).is_err());

    assert!(close(goiter_diameter_bound(10.0, 1.0).unwrap(), 39f64.sqrt(), 1e-12));
    assert!(close(goiter_diameter_bound(10.0, 20.0).unwrap(), 20.0, 1e-12));
    assert!(close(goiter_diameter_bound(60.0, 60.0).unwrap(), 103.923, 1e-3));
    assert!(goiter_diameter_bound(10.0, 40.0).is_err());

    assert!(close(nanotube_diameter_bound(10.0, PI / 2.0 - 1e-9), 0.0, 1e-7));
    let (a, b) = cell_dimensions(&PoreParams::new(10.0, 1e-12, 1e-12, 0.0)).unwrap();
    assert!(close(a, 10.0, 1e-9) && close(b, 20.0, 1e-9));
}

#[test]
fn invalid_params_are_typed_errors() {
    assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 19.0, 10.0), 64).is_err());
    assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 4.0, 0.1), 64).is_err());
    assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 4.0, 10.0), 8).is_err());
    assert!(geometric_effectives(&PoreParams::new(-1.0, 0.5, 4.0, 10.0)).is_err());
}

#[test]
fn full_disk_limit() {
    let r = 10.0;
    let p = PoreParams::new(r, 1e-7, 1e-6, 1e-6);
    let (_, geff) = geometric_effectives(&p).unwrap();
    assert!(close(geff, 2.0 / r, 1e-5), "{geff}");
}

#[test]
fn all_fluid_mask() {
    let m = PoreMask::from_predicate(32, 32, (-1.0, 1.0), (0.0, 2.0), 0.0, |_, _| true);
    assert_eq!(m.porosity, 1.0);
    assert_eq!(m.interface_length, 0.0);
}

#[test]
fn porosity_between_resolutions() {
    let model = PriorModel::new(ModelKind::P1, HyperRanges::physical());
    for p in &model.sample(20, 3).unwrap().theta {
        let a = rasterize_pore(p, 128).unwrap().porosity;
        let b = rasterize_pore(p, 256).unwrap().porosity;
        assert!((a - b).abs() < 1.0 / 128.0);
    }
}

#[test]
fn rasterized_geff_matches_analytic() {
    for preset in [HyperRanges::narrow(), HyperRanges::physical()] {
        let model = PriorModel::new(ModelKind::P1, preset);
        for p in &model.sample(10, 9).unwrap().theta {
            let (_, geff) = geometric_effectives(p).unwrap();
            let m = rasterize_pore(p, 512).unwrap();
            let raster = m.interface_length / m.fluid_area();
            assert!((raster - geff).abs() < 0.02 * geff);
        }
    }
}

#[test]
fn porosity_in_unit_interval_over_physical_prior() {
    let model = PriorModel::new(ModelKind::P1, HyperRanges::physical());
    let batch = model.sample(100_000, 21).unwrap();
    for p in &batch.theta {
        let (phi, geff) = geometric_effectives(p).unwrap();
        assert!(phi > 0.0 && phi < 1.0 && geff > 0.0, "{p:?}");
    }
}

/// Least-squares slope of ln(RMS porosity error) against ln(h), pooled over
/// a fixed ensemble of parameter sets.
fn porosity_slope(ranges: HyperRanges) -> f64 {
    let batch = PriorModel::new(ModelKind::P1, ranges).sample(32, 5).unwrap();
    let res = [64usize, 128, 256, 512];
    let pts: Vec<(f64, f64)> = res
        .iter()
        .map(|&r| {
            let ms = batch
                .theta
                .iter()
                .map(|p| {
                    let (phi, _) = geometric_effectives(p).unwrap();
                    (rasterize_pore(p, r).unwrap().porosity - phi).powi(2)
                })
                .sum::<f64>()
                / batch.len() as f64;
            ((1.0 / r as f64).ln(), 0.5 * ms.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>()
}

#[test]
fn porosity_converges_at_first_order() {
    for ranges in [HyperRanges::narrow(), HyperRanges::physical()] {
        let s = porosity_slope(ranges);
        assert!((s - 1.0).abs() <= 0.3, "slope {s}");
    }
}

fn valid_params() -> impl Strategy<Value = PoreParams> {
    (10.0..60.0f64, 0.05..1.25f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(r, t, u, v)| {
        let dmax = (2.0 * r * t.cos()).min(60.0);
        let d = 1.0 + u * (dmax - 1.0) * 0.999;
        let lmin = nanotube_length_bound(r, d).unwrap().max(1.0);
        PoreParams::new(r, t, d, lmin + 1e-6 + v * 59.0)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn valid_params_satisfy_bounds(p in valid_params()) {
        prop_assert!(p.is_valid());
        prop_assert!(nanotube_length_bound(p.r, p.d).unwrap() < p.l);
        prop_assert!(p.d < nanotube_diameter_bound(p.r, p.theta));
        let (a, b) = cell_dimensions(&p).unwrap();
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(close(a, p.r * p.theta.cos(), 1e-12));
    }

    #[test]
    fn rasterization_is_deterministic(p in valid_params()) {
        let m1 = rasterize_pore(&p, 48).unwrap();
        let m2 = rasterize_pore(&p, 48).unwrap();
        prop_assert_eq!(m1.cells, m2.cells);
        prop_assert_eq!(m1.porosity.to_bits(), m2.porosity.to_bits());
        prop_assert_eq!(m1.cut.ax, m2.cut.ax);
    }

    #[test]
    fn geometric_effectives_ignore_resolution(p in valid_params()) {
        // analytic values come straight from the parameters
        let (phi, geff) = geometric_effectives(&p).unwrap();
        prop_assert!(phi > 0.0 && phi < 1.0 && geff > 0.0);
        let m = rasterize_pore(&p, 32).unwrap();
        prop_assert_eq!(m.interface_length, rasterize_pore(&p, 64).unwrap().interface_length);
        prop_assert!((m.porosity - phi).abs() < 0.1);
    }

    #[test]
    fn mask_agrees_with_geometry(p in valid_params(), i in 0usize..40, j in 0usize..40) {
        let g = UnitCellGeometry::new(&p).unwrap();
        let m = rasterize_pore(&p, 40).unwrap();
        let (x, y) = m.cell_center(i, j);
        prop_assert_eq!(m.is_fluid(i, j), g.contains(x, y));
    }
}
