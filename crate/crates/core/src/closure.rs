//! Cell-problem solve and effective Darcy-scale coefficients.
//!
//! Cell-centered finite volumes on the fluid cells of a [`PoreMask`]. Faces
//! between fluid cells use the harmonic mean of the two diffusivities.
//! Fluid-solid faces carry the prescribed flux `n . grad(chi_j) = -n_j`.
//! On the cell edges, `chi_1` is pinned to zero at `xi1 = ±a` and `chi_2` at
//! `xi2 = 0, b`; the remaining edges are zero-flux. A fully periodic variant
//! is available through [`BoundaryMode::Periodic`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometric_effectives, rasterize_pore, Cell, PoreMask, PoreParams};
use crate::linsolve::{pcr, LinePreconditioner, SolveReport, StencilMatrix};

/// Mesopore diffusivity and the nanotube-to-mesopore ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusivityField {
    pub mesopore: f64,
    pub tube_ratio: f64,
}

impl Default for DiffusivityField {
    fn default() -> Self {
        Self {
            mesopore: 1.0,
            tube_ratio: 1.0,
        }
    }
}

impl DiffusivityField {
    pub fn with_ratio(tube_ratio: f64) -> Self {
        Self {
            mesopore: 1.0,
            tube_ratio,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mesopore > 0.0 && self.tube_ratio > 0.0) {
            return Err(Error::InvalidArgument(
                "diffusivities must be strictly positive".into(),
            ));
        }
        Ok(())
    }

    fn of(&self, c: Cell) -> f64 {
        match c {
            Cell::Solid => 0.0,
            Cell::Mesopore => self.mesopore,
            Cell::Tube => self.mesopore * self.tube_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Dirichlet/zero-flux pattern on the cell edges.
    #[default]
    Mixed,
    /// Periodic in both directions.
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureOptions {
    pub tol: f64,
    pub mode: BoundaryMode,
    /// Iteration cap; `None` means ten times the unknown count.
    pub max_iter: Option<usize>,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            mode: BoundaryMode::Mixed,
            max_iter: None,
        }
    }
}

/// Closure fields on the full grid (zero on solid cells).
#[derive(Debug, Clone)]
pub struct ClosureField {
    pub nx: usize,
    pub ny: usize,
    pub mode: BoundaryMode,
    pub chi: [Vec<f64>; 2],
    pub reports: [SolveReport; 2],
}

impl ClosureField {
    /// Dense `ny x nx` grid of one component, top row first.
    pub fn write_csv<W: std::io::Write>(&self, component: usize, mut w: W) -> std::io::Result<()> {
        for j in (0..self.ny).rev() {
            let row: Vec<String> = self.chi[component][j * self.nx..(j + 1) * self.nx]
                .iter()
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Direction of a cell face. `E`/`N` point in `+xi1`/`+xi2`.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    E,
    W,
    N,
    S,
}

const DIRS: [Dir; 4] = [Dir::E, Dir::W, Dir::N, Dir::S];

impl Dir {
    /// Axis (0 = xi1, 1 = xi2) and sign of the outward normal.
    fn axis_sign(self) -> (usize, f64) {
        match self {
            Dir::E => (0, 1.0),
            Dir::W => (0, -1.0),
            Dir::N => (1, 1.0),
            Dir::S => (1, -1.0),
        }
    }
}

/// What lies across one face of an active cell.
#[derive(Clone, Copy, PartialEq)]
enum Face {
    Fluid(usize),
    Wall,
    Edge,
}

/// Neighbor kind and open face length across face `dir` of cell `(i, j)`.
fn face(mask: &PoreMask, mode: BoundaryMode, i: usize, j: usize, dir: Dir) -> (Face, f64) {
    let (nx, ny) = (mask.nx, mask.ny);
    let periodic = mode == BoundaryMode::Periodic;
    let (nb, frac, len) = match dir {
        Dir::E => {
            let f = if i + 1 == nx && periodic {
                mask.aperture_x(nx, j).min(mask.aperture_x(0, j))
            } else {
                mask.aperture_x(i + 1, j)
            };
            let nb = if i + 1 < nx { Some((i + 1, j)) } else { periodic.then_some((0, j)) };
            (nb, f, mask.hy)
        }
        Dir::W => {
            let f = if i == 0 && periodic {
                mask.aperture_x(nx, j).min(mask.aperture_x(0, j))
            } else {
                mask.aperture_x(i, j)
            };
            let nb = if i > 0 { Some((i - 1, j)) } else { periodic.then_some((nx - 1, j)) };
            (nb, f, mask.hy)
        }
        Dir::N => {
            let f = if j + 1 == ny && periodic {
                mask.aperture_y(i, ny).min(mask.aperture_y(i, 0))
            } else {
                mask.aperture_y(i, j + 1)
            };
            let nb = if j + 1 < ny { Some((i, j + 1)) } else { periodic.then_some((i, 0)) };
            (nb, f, mask.hx)
        }
        Dir::S => {
            let f = if j == 0 && periodic {
                mask.aperture_y(i, ny).min(mask.aperture_y(i, 0))
            } else {
                mask.aperture_y(i, j)
            };
            let nb = if j > 0 { Some((i, j - 1)) } else { periodic.then_some((i, ny - 1)) };
            (nb, f, mask.hx)
        }
    };
    if frac <= 0.0 {
        return (Face::Wall, 0.0);
    }
    match nb {
        None => (Face::Edge, frac * len),
        Some((a, b)) => {
            let k = mask.idx(a, b);
            if mask.cut.material[k] == Cell::Solid {
                (Face::Wall, 0.0)
            } else {
                (Face::Fluid(k), frac * len)
            }
        }
    }
}

/// Number of fluid components connected through open faces.
pub fn fluid_components(mask: &PoreMask, mode: BoundaryMode) -> usize {
    let active = |k: usize| mask.cut.material[k] != Cell::Solid;
    let mut seen = vec![false; mask.cells.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..mask.cells.len() {
        if seen[start] || !active(start) {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = (k % mask.nx, k / mask.nx);
            for dir in DIRS {
                if let (Face::Fluid(q), _) = face(mask, mode, i, j, dir) {
                    if !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    count
}

struct Assembly {
    /// Grid index of each unknown.
    cell_of: Vec<usize>,
    /// Unknown index of each grid cell (`u32::MAX` if inactive).
    unknown_of: Vec<u32>,
    diff: Vec<f64>,
}

impl Assembly {
    fn new(mask: &PoreMask, dfield: &DiffusivityField) -> Self {
        let mut cell_of = Vec::new();
        let mut unknown_of = vec![u32::MAX; mask.cells.len()];
        let mut diff = vec![0.0; mask.cells.len()];
        for (k, &c) in mask.cut.material.iter().enumerate() {
            diff[k] = dfield.of(c);
            if c != Cell::Solid {
                unknown_of[k] = cell_of.len() as u32;
                cell_of.push(k);
            }
        }
        Self {
            cell_of,
            unknown_of,
            diff,
        }
    }

    /// Operator, right-hand side and whether any Dirichlet face was seen,
    /// for component `comp`.
    ///
    /// The wall flux of a cell is `-D_P int_wall n_comp ds`, and the wall
    /// normal integral equals the imbalance of the open face lengths.
    fn system(&self, mask: &PoreMask, mode: BoundaryMode, comp: usize) -> (StencilMatrix, Vec<f64>, bool) {
        let n = self.cell_of.len();
        let mut a = StencilMatrix {
            diag: vec![0.0; n],
            nbr: std::array::from_fn(|_| (0..n as u32).collect()),
            coef: std::array::from_fn(|_| vec![0.0; n]),
        };
        let mut rhs = vec![0.0; n];
        let mut pinned = false;
        for (p, &k) in self.cell_of.iter().enumerate() {
            let (i, j) = (k % mask.nx, k / mask.nx);
            let dp = self.diff[k];
            let mut wall_normal = 0.0;
            for (slot, dir) in DIRS.into_iter().enumerate() {
                let (axis, sign) = dir.axis_sign();
                let dist = if axis == 0 { mask.hx } else { mask.hy };
                let (kind, open) = face(mask, mode, i, j, dir);
                if axis == comp {
                    wall_normal -= sign * open;
                }
                match kind {
                    Face::Fluid(q) => {
                        let dq = self.diff[q];
                        let c = 2.0 * dp * dq / (dp + dq) * open / dist;
                        a.diag[p] += c;
                        a.nbr[slot][p] = self.unknown_of[q];
                        a.coef[slot][p] = c;
                    }
                    Face::Wall => {}
                    Face::Edge => {
                        if axis == comp {
                            a.diag[p] += 2.0 * dp * open / dist;
                            pinned = true;
                        }
                    }
                }
            }
            rhs[p] = -dp * wall_normal;
        }
        (a, rhs, pinned)
    }

    /// Line segments along the more strongly coupled axis.
    fn segments(&self, mask: &PoreMask) -> (Vec<Vec<u32>>, usize) {
        let rows = mask.hy >= mask.hx;
        let mut segs = Vec::new();
        let (outer, inner) = if rows { (mask.ny, mask.nx) } else { (mask.nx, mask.ny) };
        for o in 0..outer {
            let mut cur = Vec::new();
            for t in 0..inner {
                let k = if rows { mask.idx(t, o) } else { mask.idx(o, t) };
                let u = self.unknown_of[k];
                if u == u32::MAX {
                    if !cur.is_empty() {
                        segs.push(std::mem::take(&mut cur));
                    }
                } else {
                    cur.push(u);
                }
            }
            if !cur.is_empty() {
                segs.push(cur);
            }
        }
        (segs, if rows { 0 } else { 2 })
    }
}

/// Solves both closure components with the mixed boundary pattern.
pub fn solve_closure(mask: &PoreMask, dfield: &DiffusivityField, tol: f64) -> Result<ClosureField> {
    solve_closure_with(
        mask,
        dfield,
        &ClosureOptions {
            tol,
            ..Default::default()
        },
    )
}

pub fn solve_closure_with(
    mask: &PoreMask,
    dfield: &DiffusivityField,
    opts: &ClosureOptions,
) -> Result<ClosureField> {
    dfield.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let comps = fluid_components(mask, opts.mode);
    if comps == 0 {
        return Err(Error::Degenerate("mask has no fluid cells".into()));
    }
    if comps > 1 {
        return Err(Error::DisconnectedPore { components: comps });
    }
    let asm = Assembly::new(mask, dfield);
    let n = asm.cell_of.len();
    let max_iter = opts.max_iter.unwrap_or(10 * n);
    let (segs, slot) = asm.segments(mask);

    let solve = |comp: usize| -> Result<(Vec<f64>, SolveReport)> {
        let (a, mut rhs, pinned) = asm.system(mask, opts.mode, comp);
        if !pinned {
            let mean = rhs.iter().sum::<f64>() / n as f64;
            rhs.iter_mut().for_each(|v| *v -= mean);
        }
        // Forward neighbor along the line lives in `slot` (E or N).
        let m = LinePreconditioner::new(&a, &segs, |p, q| {
            if a.nbr[slot][p as usize] == q {
                a.coef[slot][p as usize]
            } else {
                0.0
            }
        });
        let (mut x, rep) = pcr(&a, &m, &rhs, opts.tol, max_iter)?;
        if !pinned {
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
        }
        let mut full = vec![0.0; mask.cells.len()];
        for (p, &k) in asm.cell_of.iter().enumerate() {
            full[k] = x[p];
        }
        Ok((full, rep))
    };
    let (c1, r1) = solve(0)?;
    let (c2, r2) = solve(1)?;
    Ok(ClosureField {
        nx: mask.nx,
        ny: mask.ny,
        mode: opts.mode,
        chi: [c1, c2],
        reports: [r1, r2],
    })
}

/// Full 2x2 effective diffusion tensor; `d[i][j]` integrates
/// `D (delta_ij + d chi_j / d xi_i)` over the pore.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTensor {
    pub d: [[f64; 2]; 2],
}

impl EffectiveTensor {
    pub fn dl(&self) -> f64 {
        self.d[0][0]
    }

    pub fn dt(&self) -> f64 {
        self.d[1][1]
    }
}

/// Effective tensor, normalized by the cell area.
///
/// Per cell, the gradient integral is rewritten with the divergence theorem
/// as open-face terms plus a wall term. On the wall `chi_j` is extrapolated
/// from the cell center along the normal using `d chi_j / dn = -n_j`, which
/// leaves `-int_wall ((xi - xi_P) . n) n_i n_j ds`.
pub fn effective_tensor(chi: &ClosureField, mask: &PoreMask, dfield: &DiffusivityField) -> EffectiveTensor {
    let (meso, tube) = mask.cut.area;
    let bulk = dfield.mesopore * meso + dfield.mesopore * dfield.tube_ratio * tube;
    let mut d = [[bulk, 0.0], [0.0, bulk]];
    for j in 0..mask.ny {
        for i in 0..mask.nx {
            let k = mask.idx(i, j);
            let c = mask.cut.material[k];
            if c == Cell::Solid {
                continue;
            }
            let dp = dfield.of(c);
            let m = mask.cut.wall_moment[k];
            let moment = [[m[0], m[1]], [m[1], m[2]]];
            for (cj, field) in chi.chi.iter().enumerate() {
                let xp = field[k];
                for dir in DIRS {
                    let (axis, sign) = dir.axis_sign();
                    let (kind, open) = face(mask, chi.mode, i, j, dir);
                    let xf = match kind {
                        Face::Fluid(q) => {
                            let dq = dfield.of(mask.cut.material[q]);
                            (dp * xp + dq * field[q]) / (dp + dq)
                        }
                        Face::Wall => xp,
                        Face::Edge if axis == cj => 0.0,
                        Face::Edge => xp,
                    };
                    d[axis][cj] += dp * sign * open * (xf - xp);
                }
                for (ci, row) in d.iter_mut().enumerate() {
                    row[cj] -= dp * moment[ci][cj];
                }
            }
        }
    }
    let area = mask.domain_area();
    for row in d.iter_mut() {
        for v in row.iter_mut() {
            *v /= area;
        }
    }
    EffectiveTensor { d }
}

/// Darcy-scale coefficients of one pore realization. `dl` and `dt` are
/// relative to the mesopore diffusivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveProps {
    pub dl: f64,
    pub dt: f64,
    pub geff: f64,
    pub porosity: f64,
}

/// Rasterize, solve, integrate.
pub fn forward_model(
    params: &PoreParams,
    dfield: &DiffusivityField,
    resolution: usize,
    tol: f64,
) -> Result<EffectiveProps> {
    let (porosity, geff) = geometric_effectives(params)?;
    let mask = rasterize_pore(params, resolution)?;
    let chi = solve_closure(&mask, dfield, tol)?;
    let t = effective_tensor(&chi, &mask, dfield);
    Ok(EffectiveProps {
        dl: t.dl() / dfield.mesopore,
        dt: t.dt() / dfield.mesopore,
        geff,
        porosity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_fluid(n: usize) -> PoreMask {
        PoreMask::from_predicate(n, n, (-1.0, 1.0), (0.0, 2.0), 0.0, |_, _| true)
    }

    #[test]
    fn all_fluid_gives_identity() {
        let m = all_fluid(32);
        let d = DiffusivityField::default();
        let chi = solve_closure(&m, &d, 1e-10).unwrap();
        assert!(chi.chi.iter().flatten().all(|&v| v == 0.0));
        let t = effective_tensor(&chi, &m, &d);
        assert!((t.dl() - 1.0).abs() < 1e-12 && (t.dt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_is_rejected() {
        let m = PoreMask::from_predicate(32, 32, (0.0, 1.0), (0.0, 1.0), 0.0, |x, _| !(0.4..0.6).contains(&x));
        assert!(matches!(
            solve_closure(&m, &DiffusivityField::default(), 1e-8),
            Err(Error::DisconnectedPore { components: 2 })
        ));
        // Periodic wrap joins the two strips.
        assert_eq!(fluid_components(&m, BoundaryMode::Periodic), 1);
    }
}
