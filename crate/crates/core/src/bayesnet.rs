//! Prior models over the pore parameters and their Rosenblatt transforms.
//!
//! * `P0`: independent uniforms on the hyper-ranges.
//! * `P1`: `R`, `theta` uniform; `d | R, theta` uniform below
//!   `min(2R cos(theta), d+)`; `l | R, d` uniform above the length bound.
//! * `P2`: `R`, `theta`, `l` uniform; `d | R, theta, l` uniform below the
//!   goiter bound as well. Coordinates are ordered `(R, theta, l, d)`.

use serde::{Deserialize, Serialize};

use crate::density::{self, DensityGrid};
use crate::error::{Error, Result};
use crate::geometry::{goiter_cap, nanotube_length_bound, Bounds, HyperRanges, Param, PoreParams};
use crate::par;
use crate::rng::StreamFactory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    P0,
    P1,
    P2,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::P0 => "p0",
            ModelKind::P1 => "p1",
            ModelKind::P2 => "p2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p0" => Some(ModelKind::P0),
            "p1" => Some(ModelKind::P1),
            "p2" => Some(ModelKind::P2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub kind: ModelKind,
    pub ranges: HyperRanges,
}

/// Decorrelated coordinates in `[0, 1]^4`.
pub type ZVector = [f64; 4];

const EDGE_TOL: f64 = 1e-12;

fn affine(z: f64, lo: f64, hi: f64) -> f64 {
    z * (hi - lo) + lo
}

fn cdf(x: f64, lo: f64, hi: f64, name: &str) -> Result<f64> {
    let z = (x - lo) / (hi - lo);
    if !(-EDGE_TOL..=1.0 + EDGE_TOL).contains(&z) {
        return Err(Error::OutOfSupport(format!(
            "{name}={x} outside [{lo}, {hi}]"
        )));
    }
    Ok(z.clamp(0.0, 1.0))
}

fn interval(param: &'static str, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if hi <= lo {
        return Err(Error::EmptySupport {
            param,
            lower: lo,
            upper: hi,
        });
    }
    Ok((lo, hi))
}

impl PriorModel {
    pub fn new(kind: ModelKind, ranges: HyperRanges) -> Self {
        Self { kind, ranges }
    }

    /// Support of `d` given the parents sampled before it.
    fn d_interval(&self, r: f64, theta: f64, l: Option<f64>) -> Result<(f64, f64)> {
        let h = &self.ranges;
        let mut hi = (2.0 * r * theta.cos()).min(h.d.hi);
        if let Some(l) = l {
            hi = hi.min(goiter_cap(r, l));
        }
        interval("d", h.d.lo, hi)
    }

    /// Support of `l` given `R` and `d` under P1.
    fn l_interval(&self, r: f64, d: f64) -> Result<(f64, f64)> {
        let h = &self.ranges;
        let lo = h.l.lo.max(nanotube_length_bound(r, d)?);
        interval("l", lo, h.l.hi)
    }

    /// Maps `z` in `[0,1]^4` to pore parameters.
    pub fn rosenblatt_inverse(&self, z: &ZVector) -> Result<PoreParams> {
        let h = &self.ranges;
        let r = affine(z[0], h.r.lo, h.r.hi);
        let theta = affine(z[1], h.theta.lo, h.theta.hi);
        match self.kind {
            ModelKind::P0 => Ok(PoreParams::new(
                r,
                theta,
                affine(z[2], h.d.lo, h.d.hi),
                affine(z[3], h.l.lo, h.l.hi),
            )),
            ModelKind::P1 => {
                let (dlo, dhi) = self.d_interval(r, theta, None)?;
                let d = affine(z[2], dlo, dhi);
                let (llo, lhi) = self.l_interval(r, d)?;
                Ok(PoreParams::new(r, theta, d, affine(z[3], llo, lhi)))
            }
            ModelKind::P2 => {
                let l = affine(z[2], h.l.lo, h.l.hi);
                let (dlo, dhi) = self.d_interval(r, theta, Some(l))?;
                Ok(PoreParams::new(r, theta, affine(z[3], dlo, dhi), l))
            }
        }
    }

    /// Maps pore parameters back to `[0,1]^4` via the conditional CDFs.
    pub fn rosenblatt_forward(&self, p: &PoreParams) -> Result<ZVector> {
        let h = &self.ranges;
        let z1 = cdf(p.r, h.r.lo, h.r.hi, "R")?;
        let z2 = cdf(p.theta, h.theta.lo, h.theta.hi, "theta")?;
        match self.kind {
            ModelKind::P0 => Ok([
                z1,
                z2,
                cdf(p.d, h.d.lo, h.d.hi, "d")?,
                cdf(p.l, h.l.lo, h.l.hi, "l")?,
            ]),
            ModelKind::P1 => {
                let (dlo, dhi) = self.d_interval(p.r, p.theta, None)?;
                let (llo, lhi) = self.l_interval(p.r, p.d)?;
                Ok([z1, z2, cdf(p.d, dlo, dhi, "d")?, cdf(p.l, llo, lhi, "l")?])
            }
            ModelKind::P2 => {
                let z3 = cdf(p.l, h.l.lo, h.l.hi, "l")?;
                let (dlo, dhi) = self.d_interval(p.r, p.theta, Some(p.l))?;
                Ok([z1, z2, z3, cdf(p.d, dlo, dhi, "d")?])
            }
        }
    }

    /// Parameter driven by each coordinate of `z`.
    pub fn z_order(&self) -> [Param; 4] {
        match self.kind {
            ModelKind::P2 => [Param::R, Param::Theta, Param::L, Param::D],
            _ => Param::ALL,
        }
    }

    /// Whether `param` has an unconditioned uniform prior under this model.
    pub fn is_root(&self, param: Param) -> bool {
        match self.kind {
            ModelKind::P0 => true,
            ModelKind::P1 => matches!(param, Param::R | Param::Theta),
            ModelKind::P2 => matches!(param, Param::R | Param::Theta | Param::L),
        }
    }

    /// Draws `n` samples. Sample `k` uses counter stream `k` under `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let streams = StreamFactory::new(seed);
        let rows = par::map_indexed(n, |k| {
            let z = streams.uniforms::<4>(k as u64);
            self.rosenblatt_inverse(&z).map(|t| (z, t))
        });
        let mut z = Vec::with_capacity(n);
        let mut theta = Vec::with_capacity(n);
        for row in rows {
            let (zk, tk) = row?;
            z.push(zk);
            theta.push(tk);
        }
        let valid: Vec<bool> = theta.iter().map(|t| t.is_valid()).collect();
        let bad = valid.iter().filter(|v| !**v).count();
        if bad > 0 {
            log::warn!(
                "{bad} of {n} {} samples violate the unit-cell constraints",
                self.kind.name()
            );
        }
        Ok(SampleBatch {
            seed,
            z,
            theta,
            valid,
        })
    }
}

/// Draws `n` samples from `model`; see [`PriorModel::sample`].
pub fn sample_parameters(model: &PriorModel, n: usize, seed: u64) -> Result<SampleBatch> {
    model.sample(n, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub z: Vec<ZVector>,
    pub theta: Vec<PoreParams>,
    /// Per-sample unit-cell constraint check.
    pub valid: Vec<bool>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn column(&self, p: Param) -> Vec<f64> {
        self.theta.iter().map(|t| t.get(p)).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,z1,z2,z3,z4,R,theta,d,l,valid")?;
        for (k, ((z, t), v)) in self.z.iter().zip(&self.theta).zip(&self.valid).enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{},{},{},{},{},{}",
                z[0], z[1], z[2], z[3], t.r, t.theta, t.d, t.l, *v as u8
            )?;
        }
        Ok(())
    }
}

/// Pearson correlation matrix of the four parameter columns.
pub fn empirical_correlation(batch: &SampleBatch) -> Result<[[f64; 4]; 4]> {
    let rows: Vec<[f64; 4]> = batch.theta.iter().map(|t| t.as_array()).collect();
    correlation_matrix(&rows)
}

/// Pearson correlation of `K` columns given as rows.
pub fn correlation_matrix<const K: usize>(rows: &[[f64; K]]) -> Result<[[f64; K]; K]> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Degenerate("need at least two rows".into()));
    }
    let mut mean = [0.0; K];
    for r in rows {
        for c in 0..K {
            mean[c] += r[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = [[0.0; K]; K];
    for r in rows {
        for a in 0..K {
            let da = r[a] - mean[a];
            for b in a..K {
                cov[a][b] += da * (r[b] - mean[b]);
            }
        }
    }
    let sd: Vec<f64> = (0..K).map(|c| cov[c][c].sqrt()).collect();
    if let Some(c) = sd.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate(format!("column {c} has zero variance")));
    }
    let mut out = [[0.0; K]; K];
    for a in 0..K {
        out[a][a] = 1.0;
        for b in a + 1..K {
            let v = (cov[a][b] / (sd[a] * sd[b])).clamp(-1.0, 1.0);
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    Ok(out)
}

/// Marginal density of one parameter under a prior model.
#[derive(Debug, Clone)]
pub enum Marginal {
    Uniform(Bounds),
    Kde { support: Bounds, grid: DensityGrid },
}

impl Marginal {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Marginal::Uniform(b) => {
                if b.contains(x) {
                    1.0 / b.width()
                } else {
                    0.0
                }
            }
            Marginal::Kde { support, grid } => {
                if support.contains(x) {
                    grid.eval_1d(x)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Number of prior draws behind a KDE marginal.
pub const MARGINAL_SAMPLES: usize = 100_000;

/// Exact uniform density for root parameters; a KDE of `n` prior draws for
/// conditioned ones.
pub fn build_marginal(model: &PriorModel, param: Param, n: usize, seed: u64) -> Result<Marginal> {
    let support = model.ranges.get(param);
    if model.is_root(param) {
        return Ok(Marginal::Uniform(support));
    }
    let batch = model.sample(n, seed)?;
    let xs = batch.column(param);
    let h = density::isj_bandwidth(&xs)?;
    let grid = density::kde_1d(&xs, h.h, &density::padded_axis(&xs, h.h, density::DEFAULT_GRID))?;
    Ok(Marginal::Kde { support, grid })
}

/// Marginal density of `param` at `value`, built from
/// [`MARGINAL_SAMPLES`] draws when `param` is conditioned.
pub fn marginal_density(model: &PriorModel, param: Param, value: f64) -> Result<f64> {
    Ok(build_marginal(model, param, MARGINAL_SAMPLES, 0)?.eval(value))
}
