//! Two-sample Cramér test with half-distance kernel and permutation
//! critical values.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::rng::StreamFactory;

/// Row-major point cloud of dimension `dim`.
#[derive(Debug, Clone, Copy)]
pub struct Points<'a> {
    pub dim: usize,
    pub data: &'a [f64],
}

impl<'a> Points<'a> {
    pub fn univariate(data: &'a [f64]) -> Self {
        Self { dim: 1, data }
    }

    pub fn new(dim: usize, data: &'a [f64]) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn point(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// `sum_{i<j} |a_i - a_j|` for sorted `a`.
fn sorted_pair_sum(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .enumerate()
        .map(|(k, v)| v * (2.0 * k as f64 - n + 1.0))
        .sum()
}

/// `sum_{i<j} ||p_i - p_j||` by rows, reduced in row order.
fn pair_sum(p: &Points<'_>) -> f64 {
    let n = p.len();
    par::map_chunks(n, 64, |rows| {
        rows.map(|i| (i + 1..n).map(|j| dist(p.point(i), p.point(j))).sum::<f64>())
            .sum::<f64>()
    })
    .into_iter()
    .sum()
}

fn combine(m: usize, n: usize, sx: f64, sy: f64, pooled: f64) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let cross = pooled - (sx + sy);
    mf * nf / (mf + nf) * (cross / (mf * nf) - sx / (mf * mf) - sy / (nf * nf))
}

fn check(x: &Points<'_>, y: &Points<'_>) -> Result<()> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch(format!(
            "samples of dimension {} and {}",
            x.dim, y.dim
        )));
    }
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidArgument("each sample needs at least two points".into()));
    }
    Ok(())
}

fn sorted_points(p: &Points<'_>) -> Vec<Vec<f64>> {
    let mut v: Vec<Vec<f64>> = (0..p.len()).map(|i| p.point(i).to_vec()).collect();
    v.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(u, w)| u.total_cmp(w))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    v
}

fn same_multiset(x: &Points<'_>, y: &Points<'_>) -> bool {
    x.len() == y.len() && sorted_points(x) == sorted_points(y)
}

/// Pooled sample prepared once for repeated relabeling.
struct Pooled {
    dim: usize,
    data: Vec<f64>,
    m: usize,
    /// Pair sum over the whole pooled sample.
    total: f64,
}

impl Pooled {
    fn new(x: &Points<'_>, y: &Points<'_>) -> Self {
        let mut data = [x.data, y.data].concat();
        if x.dim == 1 {
            data.sort_by(f64::total_cmp);
        }
        let total = if x.dim == 1 {
            sorted_pair_sum(&data)
        } else {
            pair_sum(&Points { dim: x.dim, data: &data })
        };
        Self {
            dim: x.dim,
            data,
            m: x.len(),
            total,
        }
    }

    fn n(&self) -> usize {
        self.data.len() / self.dim - self.m
    }

    /// Statistic when `in_x[k]` marks the pooled points belonging to `x`.
    fn statistic(&self, in_x: &[bool]) -> f64 {
        let (m, n) = (self.m, self.n());
        let (sx, sy) = if self.dim == 1 {
            // data is sorted, so each sub-sample is visited in sorted order
            let (mut sx, mut sy) = (0.0, 0.0);
            let (mut cx, mut cy) = (0usize, 0usize);
            for (v, &lab) in self.data.iter().zip(in_x) {
                if lab {
                    sx += v * (2.0 * cx as f64 - m as f64 + 1.0);
                    cx += 1;
                } else {
                    sy += v * (2.0 * cy as f64 - n as f64 + 1.0);
                    cy += 1;
                }
            }
            (sx, sy)
        } else {
            let (mut xs, mut ys) = (Vec::with_capacity(m * self.dim), Vec::with_capacity(n * self.dim));
            for (p, &lab) in self.data.chunks(self.dim).zip(in_x) {
                if lab {
                    xs.extend_from_slice(p);
                } else {
                    ys.extend_from_slice(p);
                }
            }
            (
                pair_sum(&Points { dim: self.dim, data: &xs }),
                pair_sum(&Points { dim: self.dim, data: &ys }),
            )
        };
        combine(m, n, sx, sy, self.total)
    }

    fn original_labels(&self, x: &Points<'_>) -> Vec<bool> {
        if self.dim != 1 {
            let mut v = vec![false; self.data.len() / self.dim];
            v[..self.m].iter_mut().for_each(|b| *b = true);
            return v;
        }
        // stable assignment of tied values: x copies first
        let mut xs = x.data.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut labels = Vec::with_capacity(self.data.len());
        let mut k = 0;
        for v in &self.data {
            if k < xs.len() && xs[k] == *v {
                labels.push(true);
                k += 1;
            } else {
                labels.push(false);
            }
        }
        labels
    }
}

/// `T = mn/(m+n) [ 2/(mn) sum phi(x,y) - 1/m^2 sum phi(x,x') - 1/n^2 sum phi(y,y') ]`
/// with `phi = |.| / 2`. Zero for identical multisets.
pub fn cramer_statistic(x: Points<'_>, y: Points<'_>) -> Result<f64> {
    check(&x, &y)?;
    if same_multiset(&x, &y) {
        return Ok(0.0);
    }
    let pooled = Pooled::new(&x, &y);
    Ok(pooled.statistic(&pooled.original_labels(&x)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CramerResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub confidence: f64,
    pub decision: Decision,
    pub resamples: usize,
    pub seed: u64,
}

/// Permutation test. `p = (1 + #{T_b >= T}) / (B + 1)` and the critical
/// value is the order statistic for which `T > crit` exactly when
/// `p < 1 - confidence`.
pub fn cramer_test(
    x: Points<'_>,
    y: Points<'_>,
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<CramerResult> {
    check(&x, &y)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} outside (0, 1)")));
    }
    if resamples < 200 {
        return Err(Error::InvalidArgument(format!("B = {resamples} is below 200")));
    }
    let pooled = Pooled::new(&x, &y);
    let base = pooled.original_labels(&x);
    let statistic = if same_multiset(&x, &y) { 0.0 } else { pooled.statistic(&base) };
    let streams = StreamFactory::new(seed);
    let mut reps = par::map_indexed(resamples, |b| {
        let mut labels = base.clone();
        labels.shuffle(&mut streams.get(b as u64));
        pooled.statistic(&labels)
    });
    let exceed = reps.iter().filter(|&&t| t >= statistic).count();
    let p_value = (1 + exceed) as f64 / (resamples + 1) as f64;
    reps.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    // largest count of exceedances that still rejects
    let k = (alpha * (resamples + 1) as f64).ceil() as i64 - 2;
    let critical_value = if k < 0 {
        f64::INFINITY
    } else {
        reps[resamples - 1 - k as usize]
    };
    let decision = if p_value < alpha { Decision::Reject } else { Decision::Accept };
    debug_assert_eq!(decision == Decision::Reject, statistic > critical_value);
    Ok(CramerResult {
        statistic,
        critical_value,
        p_value,
        confidence,
        decision,
        resamples,
        seed,
    })
}
