//! Unit-cell geometry of the hierarchical pore network.
//!
//! The cell spans `[-a, a] x [0, b]`. Two mesopore half-disks of radius `R`
//! sit at `(0, 0)` and `(0, b)`, clipped at `xi1 = ±a`, and a nanotube of
//! width `d` joins them along the vertical axis.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One realization of the pore-scale features. Lengths in nm, angle in rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoreParams {
    pub r: f64,
    pub theta: f64,
    pub d: f64,
    pub l: f64,
}

/// Which of the four pore parameters a value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    R,
    Theta,
    D,
    L,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::R, Param::Theta, Param::D, Param::L];

    pub fn name(self) -> &'static str {
        match self {
            Param::R => "R",
            Param::Theta => "theta",
            Param::D => "d",
            Param::L => "l",
        }
    }

    /// Column of the parameter in `(R, theta, d, l)` order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Param> {
        match s {
            "R" | "r" => Some(Param::R),
            "theta" => Some(Param::Theta),
            "d" => Some(Param::D),
            "l" => Some(Param::L),
            _ => None,
        }
    }
}

impl PoreParams {
    pub fn new(r: f64, theta: f64, d: f64, l: f64) -> Self {
        Self { r, theta, d, l }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.r, self.theta, self.d, self.l]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn get(&self, p: Param) -> f64 {
        self.as_array()[p.index()]
    }

    /// Checks positivity and both unit-cell constraints.
    pub fn validate(&self) -> Result<()> {
        let Self { r, theta, d, l } = *self;
        if !(r > 0.0 && d > 0.0 && l > 0.0) || !r.is_finite() || !l.is_finite() {
            return Err(Error::Constraint(format!(
                "R, d, l must be positive and finite (R={r}, d={d}, l={l})"
            )));
        }
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::Constraint(format!("theta={theta} outside (0, pi/2)")));
        }
        let dmax = nanotube_diameter_bound(r, theta);
        if d >= dmax {
            return Err(Error::Constraint(format!(
                "d={d} does not fit in the cell width 2R cos(theta)={dmax}"
            )));
        }
        let lmin = nanotube_length_bound(r, d)?;
        if l <= lmin {
            return Err(Error::Constraint(format!(
                "l={l} below the nanotube length bound {lmin}"
            )));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }
}

/// Closed interval `[lo, hi]` for one hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Lower and upper hyperparameter bounds for each pore parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperRanges {
    pub r: Bounds,
    pub theta: Bounds,
    pub d: Bounds,
    pub l: Bounds,
}

impl HyperRanges {
    /// Narrow ranges, on which the cell constraints never bind.
    pub fn narrow() -> Self {
        Self {
            r: Bounds::new(10.0, 60.0),
            theta: Bounds::new(0.07, 0.7),
            d: Bounds::new(4.0, 8.0),
            l: Bounds::new(8.0, 18.0),
        }
    }

    /// Physical ranges.
    pub fn physical() -> Self {
        use std::f64::consts::PI;
        Self {
            r: Bounds::new(10.0, 60.0),
            theta: Bounds::new(0.05 * PI, 0.4 * PI),
            d: Bounds::new(5.0, 60.0),
            l: Bounds::new(1.0, 60.0),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "narrow" => Some(Self::narrow()),
            "physical" => Some(Self::physical()),
            _ => None,
        }
    }

    pub fn get(&self, p: Param) -> Bounds {
        match p {
            Param::R => self.r,
            Param::Theta => self.theta,
            Param::D => self.d,
            Param::L => self.l,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let b = self.get(p);
            if !(b.lo > 0.0 && b.lo < b.hi && b.hi.is_finite()) {
                return Err(Error::Config(format!(
                    "range for {} must satisfy 0 < lo < hi (got [{}, {}])",
                    p.name(),
                    b.lo,
                    b.hi
                )));
            }
        }
        if self.theta.hi >= FRAC_PI_2 {
            return Err(Error::Config("theta upper bound must be below pi/2".into()));
        }
        Ok(())
    }
}

/// Half-width `a` and height `b` of the unit cell.
pub fn cell_dimensions(p: &PoreParams) -> Result<(f64, f64)> {
    if p.d >= 2.0 * p.r {
        return Err(Error::Domain(format!("d={} >= 2R={}", p.d, 2.0 * p.r)));
    }
    let a = p.r * p.theta.cos();
    let b = 2.0 * p.r * (1.0 - p.d * p.d / (4.0 * p.r * p.r)).sqrt() + p.l;
    Ok((a, b))
}

/// Strict upper bound on the nanotube diameter.
pub fn nanotube_diameter_bound(r: f64, theta: f64) -> f64 {
    2.0 * r * theta.cos()
}

/// Strict lower bound on the nanotube length.
pub fn nanotube_length_bound(r: f64, d: f64) -> Result<f64> {
    if !(d < 2.0 * r) {
        return Err(Error::Domain(format!("d={d} >= 2R={}", 2.0 * r)));
    }
    Ok(2.0 * r - (4.0 * r * r - d * d).sqrt())
}

/// Upper bound on `d` that keeps the tube from bulging past the mesopores.
pub fn goiter_diameter_bound(r: f64, l: f64) -> Result<f64> {
    if !(l < 4.0 * r) {
        return Err(Error::Domain(format!("l={l} >= 4R={}", 4.0 * r)));
    }
    Ok((4.0 * l * r - l * l).sqrt())
}

/// Goiter bound extended past `l = 2R`, where it reaches the mesopore
/// diameter and stays there.
pub fn goiter_cap(r: f64, l: f64) -> f64 {
    if l < 2.0 * r {
        (4.0 * l * r - l * l).sqrt()
    } else {
        2.0 * r
    }
}

/// Pore region of one unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCellGeometry {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub d: f64,
    /// Height at which the tube walls meet the mesopore arcs.
    pub s: f64,
}

impl UnitCellGeometry {
    pub fn new(p: &PoreParams) -> Result<Self> {
        p.validate()?;
        let (a, b) = cell_dimensions(p)?;
        let s = (p.r * p.r - p.d * p.d / 4.0).sqrt();
        Ok(Self { a, b, r: p.r, d: p.d, s })
    }

    pub fn in_mesopore(&self, x: f64, y: f64) -> bool {
        if x.abs() > self.a || y < 0.0 || y > self.b {
            return false;
        }
        let r2 = self.r * self.r;
        x * x + y * y <= r2 || x * x + (y - self.b) * (y - self.b) <= r2
    }

    pub fn in_tube(&self, x: f64, y: f64) -> bool {
        x.abs() <= 0.5 * self.d && y >= self.s && y <= self.b - self.s
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.in_mesopore(x, y) || self.in_tube(x, y)
    }

    fn alpha(&self) -> f64 {
        (0.5 * self.d / self.r).asin()
    }

    fn theta(&self) -> f64 {
        (self.a / self.r).acos()
    }

    pub fn pore_area(&self) -> f64 {
        let r2 = self.r * self.r;
        let th = self.theta();
        let al = self.alpha();
        let half = r2 * (th.sin() * th.cos() + FRAC_PI_2 - th);
        let cap = r2 * (al - al.sin() * al.cos());
        let l = self.b - 2.0 * self.s;
        2.0 * half + self.d * l - 2.0 * cap
    }

    pub fn interface_length(&self) -> f64 {
        let l = self.b - 2.0 * self.s;
        2.0 * self.r * (std::f64::consts::PI - 2.0 * self.theta() - 2.0 * self.alpha()) + 2.0 * l
    }

    pub fn cell_area(&self) -> f64 {
        2.0 * self.a * self.b
    }
}

/// Material tag of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Cell {
    Solid = 0,
    Mesopore = 1,
    Tube = 2,
}

/// Sub-cell geometry used by the finite-volume solver.
///
/// Face apertures are open fractions in `[0, 1]`. Vertical faces are stored
/// `(nx + 1) x ny` with face `i` west of cell `i`; horizontal faces `nx x
/// (ny + 1)` with face `j` south of row `j`.
#[derive(Debug, Clone)]
pub struct CutCells {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
    /// Material of every cell with an open face (`Solid` otherwise).
    pub material: Vec<Cell>,
    /// `int_{wall in cell} ((xi - xi_P) . n) n_i n_j ds` as `(xx, xy, yy)`.
    pub wall_moment: Vec<[f64; 3]>,
    /// Fluid area in mesopores and in the tube.
    pub area: (f64, f64),
}

/// Rasterized pore indicator on an `nx x ny` cell-centered grid.
///
/// Cells are stored row-major with `x` fastest: `idx = j * nx + i`.
#[derive(Debug, Clone)]
pub struct PoreMask {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub y0: f64,
    /// Cell-center classification.
    pub cells: Vec<Cell>,
    pub porosity: f64,
    pub interface_length: f64,
    pub cut: CutCells,
}

impl PoreMask {
    /// Builds a mask over `[x0, x1] x [y0, y1]` from a cell classifier
    /// evaluated at cell centers. The solver sees the resulting staircase.
    pub fn from_fn<F>(
        nx: usize,
        ny: usize,
        (x0, x1): (f64, f64),
        (y0, y1): (f64, f64),
        interface_length: f64,
        classify: F,
    ) -> Self
    where
        F: Fn(f64, f64) -> Cell,
    {
        let hx = (x1 - x0) / nx as f64;
        let hy = (y1 - y0) / ny as f64;
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = y0 + (j as f64 + 0.5) * hy;
            for i in 0..nx {
                let x = x0 + (i as f64 + 0.5) * hx;
                cells.push(classify(x, y));
            }
        }
        let fluid = cells.iter().filter(|&&c| c != Cell::Solid).count();
        let cut = staircase(nx, ny, hx, hy, &cells);
        Self {
            nx,
            ny,
            hx,
            hy,
            x0,
            y0,
            porosity: fluid as f64 / (nx * ny) as f64,
            cells,
            interface_length,
            cut,
        }
    }

    /// Mask from a boolean fluid predicate; every fluid cell is mesopore.
    pub fn from_predicate<F>(
        nx: usize,
        ny: usize,
        xr: (f64, f64),
        yr: (f64, f64),
        interface_length: f64,
        fluid: F,
    ) -> Self
    where
        F: Fn(f64, f64) -> bool,
    {
        Self::from_fn(nx, ny, xr, yr, interface_length, |x, y| {
            if fluid(x, y) {
                Cell::Mesopore
            } else {
                Cell::Solid
            }
        })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn is_fluid(&self, i: usize, j: usize) -> bool {
        self.cells[self.idx(i, j)] != Cell::Solid
    }

    pub fn fluid_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != Cell::Solid).count()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    pub fn domain_area(&self) -> f64 {
        self.nx as f64 * self.hx * self.ny as f64 * self.hy
    }

    /// Fluid area counted from the cell-center mask.
    pub fn fluid_area(&self) -> f64 {
        self.fluid_count() as f64 * self.hx * self.hy
    }

    /// Open fraction of the west face of cell `(i, j)`; `i == nx` is the
    /// east edge.
    #[inline]
    pub fn aperture_x(&self, i: usize, j: usize) -> f64 {
        self.cut.ax[j * (self.nx + 1) + i]
    }

    /// Open fraction of the south face of cell `(i, j)`; `j == ny` is the
    /// north edge.
    #[inline]
    pub fn aperture_y(&self, i: usize, j: usize) -> f64 {
        self.cut.ay[j * self.nx + i]
    }
}

fn staircase(nx: usize, ny: usize, hx: f64, hy: f64, cells: &[Cell]) -> CutCells {
    let fluid = |i: usize, j: usize| cells[j * nx + i] != Cell::Solid;
    let mut ax = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        for i in 0..=nx {
            let w = i > 0 && fluid(i - 1, j);
            let e = i < nx && fluid(i, j);
            let open = if i == 0 || i == nx { w || e } else { w && e };
            ax[j * (nx + 1) + i] = open as u8 as f64;
        }
    }
    let mut ay = vec![0.0; nx * (ny + 1)];
    for j in 0..=ny {
        for i in 0..nx {
            let s = j > 0 && fluid(i, j - 1);
            let n = j < ny && fluid(i, j);
            let open = if j == 0 || j == ny { s || n } else { s && n };
            ay[j * nx + i] = open as u8 as f64;
        }
    }
    let mut wall_moment = vec![[0.0; 3]; nx * ny];
    let (mut meso, mut tube) = (0.0, 0.0);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            match cells[k] {
                Cell::Solid => continue,
                Cell::Mesopore => meso += hx * hy,
                Cell::Tube => tube += hx * hy,
            }
            let walls_x = [(i > 0 && !fluid(i - 1, j)), (i + 1 < nx && !fluid(i + 1, j))];
            let walls_y = [(j > 0 && !fluid(i, j - 1)), (j + 1 < ny && !fluid(i, j + 1))];
            let nwx = walls_x.iter().filter(|w| **w).count() as f64;
            let nwy = walls_y.iter().filter(|w| **w).count() as f64;
            wall_moment[k] = [nwx * 0.5 * hx * hy, 0.0, nwy * 0.5 * hy * hx];
        }
    }
    CutCells {
        ax,
        ay,
        material: cells.to_vec(),
        wall_moment,
        area: (meso, tube),
    }
}

/// Total length of the union of closed intervals intersected with `[lo, hi]`.
fn covered_length(mut iv: Vec<(f64, f64)>, lo: f64, hi: f64) -> f64 {
    iv.retain(|(a, b)| b > a);
    iv.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            continue;
        }
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

impl UnitCellGeometry {
    /// Fluid `y`-intervals along the vertical line at `x`.
    fn column_intervals(&self, x: f64) -> Vec<(f64, f64)> {
        let mut iv = Vec::with_capacity(3);
        if x.abs() <= self.a && x.abs() < self.r {
            let c = (self.r * self.r - x * x).sqrt();
            iv.push((0.0, c.min(self.b)));
            iv.push(((self.b - c).max(0.0), self.b));
        }
        if x.abs() < 0.5 * self.d {
            iv.push((self.s, self.b - self.s));
        }
        iv
    }

    /// Fluid `x`-intervals along the horizontal line at `y`.
    fn row_intervals(&self, y: f64) -> Vec<(f64, f64)> {
        let mut iv = Vec::with_capacity(3);
        for dy in [y, self.b - y] {
            if (0.0..=self.r).contains(&dy) {
                let c = (self.r * self.r - dy * dy).sqrt().min(self.a);
                iv.push((-c, c));
            }
        }
        if y > self.s && y < self.b - self.s {
            let h = 0.5 * self.d;
            iv.push((-h, h));
        }
        iv
    }

    /// Cut-cell apertures and wall moments on the `n x n` grid.
    fn cut_cells(&self, nx: usize, ny: usize) -> CutCells {
        let (x0, hx, hy) = (-self.a, 2.0 * self.a / nx as f64, self.b / ny as f64);
        let xf = |i: usize| x0 + i as f64 * hx;
        let yf = |j: usize| j as f64 * hy;
        let mut ax = vec![0.0; (nx + 1) * ny];
        for i in 0..=nx {
            let iv = self.column_intervals(xf(i));
            for j in 0..ny {
                ax[j * (nx + 1) + i] = clean(covered_length(iv.clone(), yf(j), yf(j + 1)) / hy);
            }
        }
        let mut ay = vec![0.0; nx * (ny + 1)];
        for j in 0..=ny {
            let iv = self.row_intervals(yf(j));
            for i in 0..nx {
                ay[j * nx + i] = clean(covered_length(iv.clone(), xf(i), xf(i + 1)) / hx);
            }
        }
        let mut material = vec![Cell::Solid; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let open = ax[j * (nx + 1) + i] > 0.0
                    || ax[j * (nx + 1) + i + 1] > 0.0
                    || ay[j * nx + i] > 0.0
                    || ay[(j + 1) * nx + i] > 0.0;
                if open {
                    let (x, y) = (x0 + (i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
                    let in_tube_band = y > self.s && y < self.b - self.s && x.abs() < 0.5 * self.d + hx;
                    material[j * nx + i] = if !self.in_mesopore(x, y) && in_tube_band {
                        Cell::Tube
                    } else {
                        Cell::Mesopore
                    };
                }
            }
        }

        let mut wall_moment = vec![[0.0; 3]; nx * ny];
        let cell_of = |x: f64, y: f64| -> usize {
            let i = (((x - x0) / hx).floor().max(0.0) as usize).min(nx - 1);
            let j = ((y / hy).floor().max(0.0) as usize).min(ny - 1);
            j * nx + i
        };
        let nudge = 1e-9 * hx.min(hy);

        // Mesopore arcs, outward normal radial.
        let th = (self.a / self.r).acos();
        let al = (0.5 * self.d / self.r).asin();
        let hp = std::f64::consts::FRAC_PI_2;
        let pi = std::f64::consts::PI;
        let arcs = [
            (0.0, th, hp - al),
            (0.0, hp + al, pi - th),
            (self.b, -hp + al, -th),
            (self.b, -pi + th, -hp - al),
        ];
        for (cy, p0, p1) in arcs {
            let mut cuts = vec![p0, p1];
            for i in 0..=nx {
                let c = xf(i) / self.r;
                if c.abs() <= 1.0 {
                    let t = c.acos();
                    cuts.extend([t, -t]);
                }
            }
            for j in 0..=ny {
                let s = (yf(j) - cy) / self.r;
                if s.abs() <= 1.0 {
                    let t = s.asin();
                    cuts.extend([t, pi - t, -pi - t]);
                }
            }
            cuts.retain(|t| *t >= p0 && *t <= p1);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let (t0, t1) = (w[0], w[1]);
                if t1 <= t0 {
                    continue;
                }
                let (mid, half) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
                // Assign the whole piece to the cell holding its midpoint.
                let (mx, my) = (self.r * mid.cos(), cy + self.r * mid.sin());
                let k = cell_of(mx - nudge * mid.cos(), my - nudge * mid.sin());
                let (i, j) = (k % nx, k / nx);
                let (cx, ccy) = (x0 + (i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
                for (g, wg) in GL4 {
                    let t = mid + half * g;
                    let (n1, n2) = (t.cos(), t.sin());
                    let (x, y) = (self.r * n1, cy + self.r * n2);
                    let dn = (x - cx) * n1 + (y - ccy) * n2;
                    let wt = wg * half * self.r;
                    let m = &mut wall_moment[k];
                    m[0] += wt * dn * n1 * n1;
                    m[1] += wt * dn * n1 * n2;
                    m[2] += wt * dn * n2 * n2;
                }
            }
        }
        let mut add = |x: f64, y: f64, nx_: f64, ny_: f64, w: f64| {
            let k = cell_of(x - nudge * nx_, y - nudge * ny_);
            let (i, j) = (k % nx, k / nx);
            let (cx, cy) = (x0 + (i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy);
            let dn = (x - cx) * nx_ + (y - cy) * ny_;
            let m = &mut wall_moment[k];
            m[0] += w * dn * nx_ * nx_;
            m[1] += w * dn * nx_ * ny_;
            m[2] += w * dn * ny_ * ny_;
        };

        // Tube walls at x = ±d/2; the normal has no y part so the midpoint
        // rule is exact on each piece.
        for sign in [1.0, -1.0] {
            let x = sign * 0.5 * self.d;
            let mut cuts = vec![self.s, self.b - self.s];
            cuts.extend((0..=ny).map(yf).filter(|&y| y > self.s && y < self.b - self.s));
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    add(x, 0.5 * (w[0] + w[1]), sign, 0.0, w[1] - w[0]);
                }
            }
        }

        let r2 = self.r * self.r;
        let cap = r2 * (al - al.sin() * al.cos());
        let meso = 2.0 * r2 * (th.sin() * th.cos() + hp - th);
        let tube = self.d * (self.b - 2.0 * self.s) - 2.0 * cap;
        CutCells {
            ax,
            ay,
            material,
            wall_moment,
            area: (meso, tube),
        }
    }
}

/// Drops apertures that are round-off.
fn clean(f: f64) -> f64 {
    if f < 1e-12 {
        0.0
    } else {
        f.min(1.0)
    }
}

/// Rasterizes the unit cell at `resolution` cells per axis.
///
/// The cell-center indicator defines `cells` and `porosity`; the solver uses
/// the exact face apertures in `cut`.
pub fn rasterize_pore(p: &PoreParams, resolution: usize) -> Result<PoreMask> {
    if resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} < 16"
        )));
    }
    let g = UnitCellGeometry::new(p)?;
    let mut mask = PoreMask::from_fn(
        resolution,
        resolution,
        (-g.a, g.a),
        (0.0, g.b),
        g.interface_length(),
        |x, y| {
            if g.in_mesopore(x, y) {
                Cell::Mesopore
            } else if g.in_tube(x, y) {
                Cell::Tube
            } else {
                Cell::Solid
            }
        },
    );
    mask.cut = g.cut_cells(resolution, resolution);
    Ok(mask)
}

/// Analytic porosity and interface-per-pore-area `geff` (1/nm).
pub fn geometric_effectives(p: &PoreParams) -> Result<(f64, f64)> {
    let g = UnitCellGeometry::new(p)?;
    let area = g.pore_area();
    Ok((area / g.cell_area(), g.interface_length() / area))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_dimensions_examples() {
        let (a, b) = cell_dimensions(&PoreParams::new(10.0, 0.07, 4.0, 8.0)).unwrap();
        assert!((a - 9.9755).abs() < 1e-4 && (b - 27.5959).abs() < 1e-4);
        let (a, b) = cell_dimensions(&PoreParams::new(60.0, 0.7, 8.0, 18.0)).unwrap();
        assert!((a - 45.890_531_237).abs() < 1e-8 && (b - 137.733_036_377).abs() < 1e-8);
        assert!(cell_dimensions(&PoreParams::new(10.0, 0.1, 20.0, 1.0)).is_err());
    }

    #[test]
    fn bounds_examples() {
        assert!((nanotube_diameter_bound(60.0, 0.7) - 91.781_062_474).abs() < 1e-8);
        assert!((nanotube_diameter_bound(10.0, 0.0) - 20.0).abs() < 1e-12);
        assert!((nanotube_length_bound(10.0, 4.0).unwrap() - 0.4041).abs() < 1e-4);
        assert!(nanotube_length_bound(10.0, 20.0).is_err());
        assert!((goiter_diameter_bound(10.0, 1.0).unwrap() - 39f64.sqrt()).abs() < 1e-12);
        assert!((goiter_diameter_bound(10.0, 20.0).unwrap() - 20.0).abs() < 1e-12);
        assert!((goiter_diameter_bound(60.0, 60.0).unwrap() - 103.923).abs() < 1e-3);
        assert!(goiter_diameter_bound(10.0, 40.0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 18.0, 5.0), 64).is_err());
        assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 4.0, 0.1), 64).is_err());
        assert!(rasterize_pore(&PoreParams::new(10.0, 0.5, 4.0, 8.0), 8).is_err());
    }
}
