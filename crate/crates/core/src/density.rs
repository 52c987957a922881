//! Gaussian kernel density estimates on regular grids.
//!
//! Kernel rows are evaluated exactly (no binning). Along a uniform axis the
//! Gaussian factors as a product of geometric ratios, so each sample costs a
//! handful of `exp` calls regardless of the grid size. Two-dimensional
//! estimates are accumulated as `K1^T K2` with a dense matrix product.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::par;

/// Grid points per axis.
pub const DEFAULT_GRID: usize = 128;

/// Bins used by the bandwidth selector.
const ISJ_BINS: usize = 1 << 14;

/// Samples per chunk when accumulating kernel sums.
const CHUNK: usize = 4096;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub h: f64,
    /// True when the fixed-point search failed and the normal reference rule
    /// was used instead.
    pub fallback: bool,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `1.06 sigma N^(-1/5)`.
pub fn normal_reference(xs: &[f64]) -> f64 {
    let (_, sd) = mean_std(xs);
    1.06 * sd * (xs.len() as f64).powf(-0.2)
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// DCT-II of `data` scaled as `a_0 = sum(x)`, `a_k = 2 sum x_m cos(pi k (2m+1) / 2n)`.
fn dct2(data: &[f64]) -> Vec<f64> {
    let n = data.len();
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(n);
    buf.extend(data.iter().step_by(2).map(|&x| Complex::new(x, 0.0)));
    buf.extend(data.iter().skip(1).step_by(2).rev().map(|&x| Complex::new(x, 0.0)));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(k, c)| {
            let w = Complex::from_polar(if k == 0 { 1.0 } else { 2.0 }, -std::f64::consts::PI * k as f64 / (2.0 * n as f64));
            (w * c).re
        })
        .collect()
}

struct FixedPoint {
    n: f64,
    i: Vec<f64>,
    a2: Vec<f64>,
}

impl FixedPoint {
    fn functional(&self, s: i32, t: f64) -> f64 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let sum: f64 = self
            .i
            .iter()
            .zip(&self.a2)
            .map(|(&i, &a)| i.powi(s) * a * (-i * pi2 * t).exp())
            .sum();
        2.0 * std::f64::consts::PI.powi(2 * s) * sum
    }

    fn eval(&self, t: f64) -> f64 {
        const L: i32 = 7;
        let mut f = self.functional(L, t);
        for s in (2..L).rev() {
            let k0 = (1..2 * s).step_by(2).map(f64::from).product::<f64>() * INV_SQRT_2PI;
            let c = (1.0 + 0.5f64.powf(s as f64 + 0.5)) / 3.0;
            let time = (2.0 * c * k0 / self.n / f).powf(2.0 / (3.0 + 2.0 * s as f64));
            f = self.functional(s, time);
        }
        t - (2.0 * self.n * std::f64::consts::PI.sqrt() * f).powf(-0.4)
    }
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Improved Sheather-Jones (diffusion plug-in) bandwidth.
pub fn isj_bandwidth(xs: &[f64]) -> Result<Bandwidth> {
    if xs.len() < 64 {
        return Err(Error::Degenerate(format!(
            "bandwidth selection needs >= 64 samples, got {}",
            xs.len()
        )));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let (lo, hi) = min_max(xs);
    if !(hi > lo) {
        return Err(Error::Degenerate("zero variance".into()));
    }
    let range = hi - lo;
    let min = lo - range / 10.0;
    let span = range * 1.2;
    let dx = span / (ISJ_BINS - 1) as f64;
    let mut hist = vec![0.0; ISJ_BINS];
    for &x in xs {
        let k = (((x - min) / dx).floor() as usize).min(ISJ_BINS - 1);
        hist[k] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    hist.iter_mut().for_each(|v| *v /= total);

    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let unique = sorted.len() as f64;

    let a = dct2(&hist);
    let fp = FixedPoint {
        n: unique,
        i: (1..ISJ_BINS).map(|k| (k * k) as f64).collect(),
        a2: a[1..].iter().map(|v| (v / 2.0) * (v / 2.0)).collect(),
    };
    let nn = unique.clamp(50.0, 1050.0);
    let mut tol = 1e-12 + 0.01 * (nn - 50.0) / 1000.0;
    let f0 = fp.eval(0.0);
    loop {
        let ft = fp.eval(tol);
        if f0.is_finite() && ft.is_finite() && (f0 < 0.0) != (ft < 0.0) {
            let t = bisect(|t| fp.eval(t), 0.0, tol);
            let h = t.sqrt() * span;
            if h.is_finite() && h > 0.0 {
                return Ok(Bandwidth { h, fallback: false });
            }
            break;
        }
        if tol >= 0.1 {
            break;
        }
        tol = (tol * 2.0).min(0.1);
    }
    log::warn!("bandwidth fixed point did not bracket; using the normal reference rule");
    Ok(Bandwidth {
        h: normal_reference(xs),
        fallback: true,
    })
}

/// `n` equally spaced points from `min - 3h` to `max + 3h`.
pub fn padded_axis(xs: &[f64], h: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = min_max(xs);
    linspace(lo - 3.0 * h, hi + 3.0 * h, n)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|k| a + step * k as f64).collect()
}

/// Uniform axis description, checked once per estimate.
#[derive(Clone, Copy)]
struct Axis {
    start: f64,
    step: f64,
    n: usize,
}

impl Axis {
    fn new(grid: &[f64]) -> Result<Self> {
        let n = grid.len();
        if n < 2 {
            return Err(Error::InvalidArgument("grid needs at least two points".into()));
        }
        let step = (grid[n - 1] - grid[0]) / (n - 1) as f64;
        if !(step > 0.0) {
            return Err(Error::InvalidArgument("grid must be increasing".into()));
        }
        let tol = 1e-9 * step;
        if grid.iter().enumerate().any(|(k, &g)| (g - (grid[0] + step * k as f64)).abs() > tol * (k as f64 + 1.0)) {
            return Err(Error::InvalidArgument("grid must be uniformly spaced".into()));
        }
        Ok(Self {
            start: grid[0],
            step,
            n,
        })
    }

    /// Writes `exp(-(g_m - x)^2 / 2h^2)` for every grid point into `out`.
    ///
    /// Starts at the grid point nearest `x` and walks outward, multiplying by
    /// successive ratios, which are themselves geometric in `exp(-delta^2)`.
    fn kernel_row(&self, x: f64, h: f64, out: &mut [f64]) {
        let delta = self.step / h;
        let decay = (-delta * delta).exp();
        let m0 = ((x - self.start) / self.step).round().clamp(0.0, (self.n - 1) as f64) as usize;
        let u0 = (self.start + self.step * m0 as f64 - x) / h;
        let k0 = (-0.5 * u0 * u0).exp();
        out[m0] = k0;

        let mut k = k0;
        let mut q = (-u0 * delta - 0.5 * delta * delta).exp();
        for v in out[m0 + 1..].iter_mut() {
            k *= q;
            q *= decay;
            *v = k;
        }
        let mut k = k0;
        let mut q = (u0 * delta - 0.5 * delta * delta).exp();
        for v in out[..m0].iter_mut().rev() {
            k *= q;
            q *= decay;
            *v = k;
        }
    }
}

/// KDE evaluated on a regular 1-D or 2-D grid.
///
/// For 2-D grids `values[i * ny + j]` is the density at `(x[i], y[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub values: Vec<f64>,
    pub h: (f64, Option<f64>),
    pub n_samples: usize,
}

fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    let n = axis.len();
    let (a, b) = (axis[0], axis[n - 1]);
    if !(v >= a && v <= b) {
        return None;
    }
    let step = (b - a) / (n - 1) as f64;
    let pos = (v - a) / step;
    let k = (pos.floor() as usize).min(n - 2);
    Some((k, pos - k as f64))
}

fn trapz_weights(n: usize, step: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k == 0 || k == n - 1 { 0.5 * step } else { step })
}

impl DensityGrid {
    pub fn dim(&self) -> usize {
        if self.y.is_some() {
            2
        } else {
            1
        }
    }

    /// Linear interpolation; zero outside the grid.
    pub fn eval_1d(&self, v: f64) -> f64 {
        match locate(&self.x, v) {
            Some((k, t)) => self.values[k] * (1.0 - t) + self.values[k + 1] * t,
            None => 0.0,
        }
    }

    /// Bilinear interpolation; zero outside the grid.
    pub fn eval_2d(&self, u: f64, v: f64) -> f64 {
        let y = self.y.as_ref().expect("eval_2d on a 1-D grid");
        let ny = y.len();
        let (Some((i, s)), Some((j, t))) = (locate(&self.x, u), locate(y, v)) else {
            return 0.0;
        };
        let f = |i: usize, j: usize| self.values[i * ny + j];
        (1.0 - s) * ((1.0 - t) * f(i, j) + t * f(i, j + 1))
            + s * ((1.0 - t) * f(i + 1, j) + t * f(i + 1, j + 1))
    }

    /// Trapezoid-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        let sx = self.x[1] - self.x[0];
        match &self.y {
            None => trapz_weights(self.x.len(), sx)
                .zip(&self.values)
                .map(|(w, v)| w * v)
                .sum(),
            Some(y) => {
                let sy = y[1] - y[0];
                let wy: Vec<f64> = trapz_weights(y.len(), sy).collect();
                trapz_weights(self.x.len(), sx)
                    .enumerate()
                    .map(|(i, wx)| {
                        wx * self.values[i * y.len()..(i + 1) * y.len()]
                            .iter()
                            .zip(&wy)
                            .map(|(v, w)| v * w)
                            .sum::<f64>()
                    })
                    .sum()
            }
        }
    }

    /// Trapezoid integral over `y` for each `x` (2-D only).
    pub fn marginal_x(&self) -> Vec<f64> {
        let y = self.y.as_ref().expect("marginal of a 1-D grid");
        let wy: Vec<f64> = trapz_weights(y.len(), y[1] - y[0]).collect();
        self.values
            .chunks(y.len())
            .map(|row| row.iter().zip(&wy).map(|(v, w)| v * w).sum())
            .collect()
    }

    /// Trapezoid integral over `x` for each `y` (2-D only).
    pub fn marginal_y(&self) -> Vec<f64> {
        let y = self.y.as_ref().expect("marginal of a 1-D grid");
        let ny = y.len();
        let mut out = vec![0.0; ny];
        for (w, row) in trapz_weights(self.x.len(), self.x[1] - self.x[0]).zip(self.values.chunks(ny)) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        out
    }

    /// 1-D: `x,density` rows. 2-D: first header row holds the `y` axis, each
    /// following row starts with its `x` value.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        match &self.y {
            None => {
                writeln!(w, "x,density")?;
                for (x, v) in self.x.iter().zip(&self.values) {
                    writeln!(w, "{x},{v}")?;
                }
            }
            Some(y) => {
                let head: Vec<String> = y.iter().map(|v| v.to_string()).collect();
                writeln!(w, "x\\y,{}", head.join(","))?;
                for (x, row) in self.x.iter().zip(self.values.chunks(y.len())) {
                    let r: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{x},{}", r.join(","))?;
                }
            }
        }
        Ok(())
    }
}

/// Gaussian KDE with bandwidth `h` on `grid` (uniformly spaced).
pub fn kde_1d(xs: &[f64], h: f64, grid: &[f64]) -> Result<DensityGrid> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    if xs.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let axis = Axis::new(grid)?;
    let n = grid.len();
    let partials = par::map_chunks(xs.len(), CHUNK, |range| {
        let mut acc = vec![0.0; n];
        let mut row = vec![0.0; n];
        for &x in &xs[range] {
            axis.kernel_row(x, h, &mut row);
            acc.iter_mut().zip(&row).for_each(|(a, r)| *a += r);
        }
        acc
    });
    let mut values = vec![0.0; n];
    for p in partials {
        values.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
    }
    let scale = INV_SQRT_2PI / (xs.len() as f64 * h);
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(DensityGrid {
        x: grid.to_vec(),
        y: None,
        values,
        h: (h, None),
        n_samples: xs.len(),
    })
}

/// Product-kernel Gaussian KDE normalized by `1 / (N 2 pi h1 h2)`.
pub fn kde_2d(
    xs: &[f64],
    ys: &[f64],
    h1: f64,
    h2: f64,
    gx: &[f64],
    gy: &[f64],
) -> Result<DensityGrid> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(format!(
            "{} x-samples vs {} y-samples",
            xs.len(),
            ys.len()
        )));
    }
    if !(h1 > 0.0 && h2 > 0.0) {
        return Err(Error::InvalidArgument("bandwidths must be positive".into()));
    }
    if xs.is_empty() {
        return Err(Error::Degenerate("no samples".into()));
    }
    let (ax, ay) = (Axis::new(gx)?, Axis::new(gy)?);
    let (nx, ny) = (gx.len(), gy.len());
    let partials = par::map_chunks(xs.len(), CHUNK, |range| {
        let m = range.len();
        let mut k1 = vec![0.0; m * nx];
        let mut k2 = vec![0.0; m * ny];
        for (r, k) in range.enumerate() {
            ax.kernel_row(xs[k], h1, &mut k1[r * nx..(r + 1) * nx]);
            ay.kernel_row(ys[k], h2, &mut k2[r * ny..(r + 1) * ny]);
        }
        let mut c = vec![0.0; nx * ny];
        // c (nx x ny) = k1^T (nx x m) * k2 (m x ny)
        unsafe {
            matrixmultiply::dgemm(
                nx,
                m,
                ny,
                1.0,
                k1.as_ptr(),
                1,
                nx as isize,
                k2.as_ptr(),
                ny as isize,
                1,
                0.0,
                c.as_mut_ptr(),
                ny as isize,
                1,
            );
        }
        c
    });
    let mut values = vec![0.0; nx * ny];
    for p in partials {
        values.iter_mut().zip(&p).for_each(|(a, v)| *a += v);
    }
    let scale = 1.0 / (xs.len() as f64 * 2.0 * std::f64::consts::PI * h1 * h2);
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(DensityGrid {
        x: gx.to_vec(),
        y: Some(gy.to_vec()),
        values,
        h: (h1, Some(h2)),
        n_samples: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_row_matches_direct() {
        let grid = linspace(-3.0, 5.0, 128);
        let ax = Axis::new(&grid).unwrap();
        let mut row = vec![0.0; 128];
        for &(x, h) in &[(0.3, 0.2), (-2.9, 1.7), (4.99, 0.05), (7.0, 0.5)] {
            ax.kernel_row(x, h, &mut row);
            for (g, v) in grid.iter().zip(&row) {
                let e = (-0.5 * ((g - x) / h).powi(2)).exp();
                assert!((v - e).abs() <= 1e-12 * e.max(1e-300) + 1e-300, "{x} {h} {g}: {v} vs {e}");
            }
        }
    }

    #[test]
    fn dct_matches_definition() {
        let data: Vec<f64> = (0..16).map(|k| ((k * 7 % 5) as f64).sin()).collect();
        let a = dct2(&data);
        let n = data.len() as f64;
        for (k, &ak) in a.iter().enumerate() {
            let s: f64 = data
                .iter()
                .enumerate()
                .map(|(m, &x)| x * (std::f64::consts::PI * k as f64 * (2 * m + 1) as f64 / (2.0 * n)).cos())
                .sum();
            let expect = if k == 0 { s } else { 2.0 * s };
            assert!((ak - expect).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn single_sample_peaks() {
        let g = linspace(-4.0, 4.0, 129);
        let k = kde_1d(&[0.0], 1.0, &g).unwrap();
        assert!((k.values[64] - 0.398_942_280_4).abs() < 1e-9);
        let k2 = kde_2d(&[0.0], &[0.0], 1.0, 1.0, &g, &g).unwrap();
        assert!((k2.values[64 * 129 + 64] - 0.159_154_943_1).abs() < 1e-9);
    }

    #[test]
    fn rejects_mismatch_and_small_samples() {
        let g = linspace(0.0, 1.0, 8);
        assert!(matches!(
            kde_2d(&[0.0, 1.0], &[0.0], 1.0, 1.0, &g, &g),
            Err(Error::LengthMismatch(_))
        ));
        assert!(isj_bandwidth(&[1.0; 10]).is_err());
        assert!(isj_bandwidth(&[1.0; 100]).is_err());
    }
}
