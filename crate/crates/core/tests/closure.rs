use poreuq::bayesnet::{ModelKind, PriorModel};
use poreuq::closure::*;
use poreuq::geometry::*;
use poreuq::linsolve::{pcr, LinePreconditioner, StencilMatrix};
use proptest::prelude::*;

fn tensor(mask: &PoreMask) -> EffectiveTensor {
    let d = DiffusivityField::default();
    let chi = solve_closure(mask, &d, 1e-10).unwrap();
    effective_tensor(&chi, mask, &d)
}

#[test]
fn straight_channel_oracle() {
    // half the cell is a grid-aligned channel along x
    let m = PoreMask::from_predicate(256, 256, (0.0, 2.0), (0.0, 2.0), 4.0, |_, y| (0.5..1.5).contains(&y));
    assert!((m.porosity - 0.5).abs() < 1e-12);
    let d = DiffusivityField::default();
    let chi = solve_closure(&m, &d, 1e-10).unwrap();
    assert!(chi.chi[0].iter().all(|v| v.abs() < 1e-12));
    let t = effective_tensor(&chi, &m, &d);
    assert!((t.dl() - 0.5).abs() < 0.01, "{t:?}");
    assert!(t.dt().abs() < 0.01, "{t:?}");

    let rot = PoreMask::from_predicate(256, 256, (0.0, 2.0), (0.0, 2.0), 4.0, |x, _| (0.5..1.5).contains(&x));
    let t = tensor(&rot);
    assert!(t.dl().abs() < 0.01 && (t.dt() - 0.5).abs() < 0.01, "{t:?}");
}

#[test]
fn tube_ratio_scales_channel() {
    let m = PoreMask::from_fn(64, 64, (0.0, 2.0), (0.0, 2.0), 4.0, |_, y| {
        if (0.5..1.5).contains(&y) {
            Cell::Tube
        } else {
            Cell::Solid
        }
    });
    let d = DiffusivityField::with_ratio(0.25);
    let chi = solve_closure(&m, &d, 1e-10).unwrap();
    assert!((effective_tensor(&chi, &m, &d).dl() - 0.125).abs() < 1e-9);
    assert!(DiffusivityField::with_ratio(0.0).validate().is_err());
}

fn laplacian(n: usize) -> StencilMatrix {
    // 2-D Dirichlet Laplacian, neighbors in W, E, S, N order
    let idx = |i: usize, j: usize| (j * n + i) as u32;
    let mut nbr: [Vec<u32>; 4] = Default::default();
    let mut coef: [Vec<f64>; 4] = Default::default();
    for j in 0..n {
        for i in 0..n {
            let p = idx(i, j);
            let cand = [
                (i > 0).then(|| idx(i - 1, j)),
                (i + 1 < n).then(|| idx(i + 1, j)),
                (j > 0).then(|| idx(i, j - 1)),
                (j + 1 < n).then(|| idx(i, j + 1)),
            ];
            for (k, c) in cand.into_iter().enumerate() {
                nbr[k].push(c.unwrap_or(p));
                coef[k].push(if c.is_some() { 1.0 } else { 0.0 });
            }
        }
    }
    StencilMatrix {
        diag: vec![4.0; n * n],
        nbr,
        coef,
    }
}

#[test]
fn pcr_residual_and_history() {
    let n = 48;
    let a = laplacian(n);
    let b: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
    let rows: Vec<Vec<u32>> = (0..n).map(|j| (0..n).map(|i| (j * n + i) as u32).collect()).collect();
    let line = LinePreconditioner::new(&a, &rows, |p, q| if q == p + 1 { 1.0 } else { 0.0 });
    for m in [LinePreconditioner::jacobi(&a), line] {
        let tol = 1e-9;
        let (x, rep) = pcr(&a, &m, &b, tol, 10_000).unwrap();
        let mut ax = vec![0.0; b.len()];
        a.apply(&x, &mut ax);
        let res = ax.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res / bn <= 2.0 * tol, "{}", res / bn);
        assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
    let capped = pcr(&a, &LinePreconditioner::jacobi(&a), &b, 1e-14, 3);
    assert!(matches!(capped, Err(poreuq::Error::NonConvergence { iterations: 3, .. })));
}

fn props(p: &PoreParams, res: usize) -> EffectiveProps {
    forward_model(p, &DiffusivityField::default(), res, 1e-8).unwrap()
}

#[test]
fn transverse_diffusivity_grows_with_throat() {
    let dts: Vec<f64> = [4.0, 6.0, 8.0, 10.0, 12.0]
        .iter()
        .map(|&d| props(&PoreParams::new(30.0, 0.3, d, 10.0), 96).dt)
        .collect();
    assert!(dts.windows(2).all(|w| w[1] > w[0]), "{dts:?}");
}

#[test]
fn closure_solves_are_deterministic() {
    let p = PoreParams::new(25.0, 0.4, 8.0, 12.0);
    let mask = rasterize_pore(&p, 96).unwrap();
    let d = DiffusivityField::default();
    let a = solve_closure(&mask, &d, 1e-8).unwrap();
    let b = solve_closure(&mask, &d, 1e-8).unwrap();
    assert_eq!(a.chi, b.chi);
    for r in &a.reports {
        assert!(r.relative_residual <= 1e-8);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
    assert_eq!(props(&p, 96), props(&p, 96));
}

#[test]
fn tensor_is_nearly_diagonal() {
    let model = PriorModel::new(ModelKind::P1, HyperRanges::physical());
    for p in &model.sample(4, 12).unwrap().theta {
        let mask = rasterize_pore(p, 256).unwrap();
        let t = tensor(&mask);
        assert!(t.d[0][1].abs() < 5e-3 && t.d[1][0].abs() < 5e-3, "{p:?}: {t:?}");
    }
}

#[test]
fn choked_tube_limits_transverse_transport() {
    let e = props(&PoreParams::new(60.0, 0.1, 1.0, 60.0), 256);
    println!("choked: dl {} dt {}", e.dl, e.dt);
    assert!(e.dt < 0.1 * e.dl, "{e:?}");
}

fn ensemble() -> Vec<PoreParams> {
    let mut v = PriorModel::new(ModelKind::P1, HyperRanges::narrow()).sample(6, 31).unwrap().theta;
    v.extend(PriorModel::new(ModelKind::P1, HyperRanges::physical()).sample(6, 31).unwrap().theta);
    v
}

/// RMS differences `|D_h - D_{h/2}|` over 64 -> 128 -> 256 -> 512, for DL
/// then DT.
fn refinement_gaps(sets: &[PoreParams]) -> [[f64; 3]; 2] {
    let d: Vec<[EffectiveProps; 4]> = sets.iter().map(|p| [64, 128, 256, 512].map(|r| props(p, r))).collect();
    let rms = |f: fn(&EffectiveProps) -> f64, a: usize| {
        (d.iter().map(|x| (f(&x[a]) - f(&x[a + 1])).powi(2)).sum::<f64>() / d.len() as f64).sqrt()
    };
    let fs: [fn(&EffectiveProps) -> f64; 2] = [|e| e.dl, |e| e.dt];
    fs.map(|f| [0, 1, 2].map(|a| rms(f, a)))
}

fn ratios(g: &[f64; 3]) -> [f64; 2] {
    [g[0] / g[1], g[1] / g[2]]
}

#[test]
fn mesh_convergence_over_ensemble() {
    let gaps = refinement_gaps(&ensemble());
    println!("ensemble refinement gaps {gaps:?}");
    for g in &gaps {
        assert!(g[1] < g[0] && g[2] < g[1], "{gaps:?}");
        // 256 -> 512 is in the asymptotic range for both coefficients
        let r = ratios(g)[1];
        assert!((1.5..=4.0).contains(&r), "{r}");
    }
    let dl = ratios(&gaps[0])[0];
    assert!((1.5..=4.0).contains(&dl), "{dl}");
}

#[test]
#[ignore = "DT is pre-asymptotic at 64 cells; its 64/128/256 ratio is about 1.1"]
fn richardson_from_coarsest_level() {
    for g in refinement_gaps(&ensemble()) {
        for r in ratios(&g) {
            assert!((1.5..=4.0).contains(&r), "{g:?}");
        }
    }
}

#[test]
#[ignore = "individual parameter sets converge erratically on a staircase boundary"]
fn richardson_per_set() {
    for p in ensemble() {
        for g in refinement_gaps(&[p]) {
            assert!(ratios(&g).iter().all(|r| (1.5..=4.0).contains(r)), "{p:?}: {g:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn coefficients_are_bounded(z in prop::array::uniform4(0.0..1.0f64), phys in any::<bool>()) {
        let ranges = if phys { HyperRanges::physical() } else { HyperRanges::narrow() };
        let p = PriorModel::new(ModelKind::P1, ranges).rosenblatt_inverse(&z).unwrap();
        let e = props(&p, 48);
        prop_assert!(e.dl >= 0.0 && e.dl <= 1.0, "{:?}", e);
        prop_assert!(e.dt >= 0.0 && e.dt <= 1.0, "{:?}", e);
        prop_assert!(e.porosity > 0.0 && e.porosity < 1.0);
    }
}
