//! Mutual-information sensitivity indices with plug-in kernel densities.
//!
//! For an input `T` and output `G` the index is `I(T; G)`, written as the
//! expectation of `rho ln rho` under the product of the marginals, where
//! `rho = f_TG / (f_T f_G)`. Densities come from KDEs of prior draws pushed
//! through a surrogate.

use serde::Serialize;

use crate::bayesnet::{PriorModel, SampleBatch};
use crate::density::{self, DensityGrid};
use crate::error::{Error, Result};
use crate::geometry::{Bounds, Param};
use crate::par;
use crate::rng::{derive_seed, StreamFactory};
use crate::surrogate::{PcSurrogate, Qoi};

/// Where the two 1-D densities in the ratio come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MarginalMode {
    /// Both marginals integrated out of the joint grid. The ratio is then
    /// exactly 1 wherever the joint factorizes on the grid.
    Kde,
    /// Separate 1-D KDEs, except exact uniform densities for root inputs.
    Mixed,
    /// Separate 1-D KDE for the output, uniform density over the hyper-range
    /// for the input.
    HyperRangeUniform,
}

impl MarginalMode {
    pub fn name(self) -> &'static str {
        match self {
            MarginalMode::Kde => "kde",
            MarginalMode::Mixed => "mixed",
            MarginalMode::HyperRangeUniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kde" => Some(MarginalMode::Kde),
            "mixed" => Some(MarginalMode::Mixed),
            "uniform" | "hyper-range" => Some(MarginalMode::HyperRangeUniform),
            _ => None,
        }
    }
}

/// Measure the Monte Carlo points are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EvalMeasure {
    /// Input and output indices drawn independently.
    Product,
    /// The first `m_mc` joint draws reused as they are.
    JointPairs,
}

#[derive(Debug, Clone)]
pub struct MiOptions {
    pub n_kde: usize,
    pub m_mc: usize,
    pub grid: usize,
    pub marginals: MarginalMode,
    pub measure: EvalMeasure,
}

impl Default for MiOptions {
    fn default() -> Self {
        Self {
            n_kde: 1_000_000,
            m_mc: 10_000,
            grid: density::DEFAULT_GRID,
            marginals: MarginalMode::Kde,
            measure: EvalMeasure::Product,
        }
    }
}

impl MiOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_kde < 100_000 {
            return Err(Error::InvalidArgument(format!("n_kde = {} is below 1e5", self.n_kde)));
        }
        self.validate_counts()
    }

    fn validate_counts(&self) -> Result<()> {
        if self.m_mc < 1000 {
            return Err(Error::InvalidArgument(format!("m_mc = {} is below 1e3", self.m_mc)));
        }
        if self.grid < 8 {
            return Err(Error::InvalidArgument(format!("grid = {} is too coarse", self.grid)));
        }
        if self.measure == EvalMeasure::JointPairs && self.m_mc > self.n_kde {
            return Err(Error::InvalidArgument("joint-pair reuse needs m_mc <= n_kde".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MiEstimate {
    pub param: Param,
    pub qoi: Qoi,
    pub s_hat: f64,
    pub std_error: f64,
    pub m: usize,
    /// Running mean after each Monte Carlo point; the last entry is `s_hat`.
    pub trace: Vec<f64>,
    /// Fraction of evaluation points that fell off the grid.
    pub out_of_grid: f64,
}

impl MiEstimate {
    /// Running mean after `m` points (1-based).
    pub fn running_mean(&self, m: usize) -> f64 {
        self.trace[m.clamp(1, self.trace.len()) - 1]
    }
}

/// Estimator output before it is tagged with a parameter and QoI.
#[derive(Debug, Clone)]
pub struct MiRaw {
    pub s_hat: f64,
    pub std_error: f64,
    pub trace: Vec<f64>,
    pub out_of_grid: f64,
}

/// 1-D density used in the denominator.
enum Denominator {
    Grid(DensityGrid),
    Uniform(Bounds),
}

impl Denominator {
    fn eval(&self, v: f64) -> f64 {
        match self {
            Denominator::Grid(g) => g.eval_1d(v),
            Denominator::Uniform(b) => {
                if b.contains(v) {
                    1.0 / b.width()
                } else {
                    0.0
                }
            }
        }
    }
}

fn marginal_grid(joint: &DensityGrid, along_x: bool) -> DensityGrid {
    let (axis, values, h) = if along_x {
        (joint.x.clone(), joint.marginal_x(), joint.h.0)
    } else {
        (joint.y.clone().unwrap_or_default(), joint.marginal_y(), joint.h.1.unwrap_or(joint.h.0))
    };
    DensityGrid {
        x: axis,
        y: None,
        values,
        h: (h, None),
        n_samples: joint.n_samples,
    }
}

/// Smallest bandwidth, as a multiple of the grid spacing, that the grid
/// can represent. Narrower kernels fall between nodes and the grid values
/// alias, which inflates the estimate.
pub const MIN_BANDWIDTH_CELLS: f64 = 1.0;

/// ISJ bandwidth, raised where needed so that `h >= MIN_BANDWIDTH_CELLS`
/// spacings of the padded `grid`-point axis.
pub fn grid_bandwidth(xs: &[f64], grid: usize) -> Result<f64> {
    let h = density::isj_bandwidth(xs)?;
    if h.fallback {
        log::warn!("bandwidth selector fell back to the normal reference rule");
    }
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // spacing is (range + 6h) / (grid - 1); solve h = c * spacing for h
    let c = MIN_BANDWIDTH_CELLS;
    let floor = c * (hi - lo) / (grid as f64 - 1.0 - 6.0 * c);
    Ok(h.h.max(floor))
}

fn kde_own(xs: &[f64], grid: usize) -> Result<DensityGrid> {
    let h = grid_bandwidth(xs, grid)?;
    density::kde_1d(xs, h, &density::padded_axis(xs, h, grid))
}

/// Joint KDE of `(input, output)` draws on a `grid x grid` lattice.
pub fn joint_density(input: &[f64], output: &[f64], grid: usize) -> Result<DensityGrid> {
    let h1 = grid_bandwidth(input, grid)?;
    let h2 = grid_bandwidth(output, grid)?;
    density::kde_2d(
        input,
        output,
        h1,
        h2,
        &density::padded_axis(input, h1, grid),
        &density::padded_axis(output, h2, grid),
    )
}

/// Plug-in estimate of `I(input; output)` from paired draws.
///
/// `input_support` is the exact uniform support of the input, used by the
/// non-KDE marginal modes when the input is a root of the prior.
pub fn mi_from_samples(
    input: &[f64],
    output: &[f64],
    opts: &MiOptions,
    seed: u64,
    input_support: Option<Bounds>,
) -> Result<MiRaw> {
    if input.len() != output.len() {
        return Err(Error::LengthMismatch(format!(
            "{} inputs vs {} outputs",
            input.len(),
            output.len()
        )));
    }
    opts.validate_counts()?;
    let joint = joint_density(input, output, opts.grid)?;
    mi_with_joint(input, output, &joint, opts, seed, input_support)
}

fn mi_with_joint(
    input: &[f64],
    output: &[f64],
    joint: &DensityGrid,
    opts: &MiOptions,
    seed: u64,
    input_support: Option<Bounds>,
) -> Result<MiRaw> {
    let n = input.len();
    let (f_in, f_out) = match opts.marginals {
        MarginalMode::Kde => (
            Denominator::Grid(marginal_grid(joint, true)),
            Denominator::Grid(marginal_grid(joint, false)),
        ),
        MarginalMode::Mixed => (
            match input_support {
                Some(b) => Denominator::Uniform(b),
                None => Denominator::Grid(kde_own(input, opts.grid)?),
            },
            Denominator::Grid(kde_own(output, opts.grid)?),
        ),
        MarginalMode::HyperRangeUniform => {
            let b = input_support.unwrap_or_else(|| {
                let (lo, hi) = input
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                Bounds::new(lo, hi)
            });
            (Denominator::Uniform(b), Denominator::Grid(kde_own(output, opts.grid)?))
        }
    };

    let streams = StreamFactory::new(derive_seed(seed, "mi-eval"));
    let m = opts.m_mc;
    let terms: Vec<(f64, bool)> = par::map_indexed(m, |j| {
        let (a, b) = match opts.measure {
            EvalMeasure::Product => {
                let [u, v] = streams.uniforms::<2>(j as u64);
                (((u * n as f64) as usize).min(n - 1), ((v * n as f64) as usize).min(n - 1))
            }
            EvalMeasure::JointPairs => (j, j),
        };
        let (t, g) = (input[a], output[b]);
        let num = joint.eval_2d(t, g);
        let den = f_in.eval(t) * f_out.eval(g);
        if num > 0.0 && den > 0.0 {
            let rho = num / den;
            (rho * rho.ln(), false)
        } else {
            // 0/0 and off-grid points contribute nothing
            (0.0, den <= 0.0)
        }
    });

    let mut trace = Vec::with_capacity(m);
    let mut sum = 0.0;
    let mut off = 0usize;
    for (k, &(x, o)) in terms.iter().enumerate() {
        sum += x;
        off += o as usize;
        trace.push(sum / (k + 1) as f64);
    }
    let mean = sum / m as f64;
    let var = terms.iter().map(|&(x, _)| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    let std_error = (var / m as f64).sqrt();
    let out_of_grid = off as f64 / m as f64;
    if off > 0 {
        log::info!("{:.3}% of evaluation points fell off the grid", 100.0 * out_of_grid);
    }
    let tail = trace[m - m / 10 - 1];
    if (tail - mean).abs() > 2.0 * std_error {
        log::warn!(
            "running mean drifted by {:.3e} over the last decile (2 se = {:.3e})",
            (tail - mean).abs(),
            2.0 * std_error
        );
    }
    if !mean.is_finite() {
        return Err(Error::Degenerate("non-finite mutual information estimate".into()));
    }
    Ok(MiRaw {
        s_hat: mean,
        std_error,
        trace,
        out_of_grid,
    })
}

/// Joint prior draws and their surrogate outputs.
pub struct MiSamples {
    pub batch: SampleBatch,
    pub outputs: Vec<(Qoi, Vec<f64>)>,
}

/// Draws `n_kde` prior samples and pushes them through every surrogate.
pub fn draw_mi_samples(
    surrogates: &[PcSurrogate],
    model: &PriorModel,
    n_kde: usize,
    seed: u64,
) -> Result<MiSamples> {
    let batch = model.sample(n_kde, derive_seed(seed, "mi-kde"))?;
    let outputs = surrogates
        .iter()
        .map(|s| (s.qoi, s.eval_many(&batch.z)))
        .collect();
    Ok(MiSamples { batch, outputs })
}

fn support_for(model: &PriorModel, param: Param, mode: MarginalMode) -> Option<Bounds> {
    match mode {
        MarginalMode::HyperRangeUniform => Some(model.ranges.get(param)),
        _ if model.is_root(param) => Some(model.ranges.get(param)),
        _ => None,
    }
}

/// Index of one input for one surrogate.
pub fn mi_index(
    surrogate: &PcSurrogate,
    model: &PriorModel,
    param: Param,
    n_kde: usize,
    m_mc: usize,
    seed: u64,
) -> Result<MiEstimate> {
    let opts = MiOptions {
        n_kde,
        m_mc,
        ..MiOptions::default()
    };
    mi_index_with(surrogate, model, param, &opts, seed)
}

pub fn mi_index_with(
    surrogate: &PcSurrogate,
    model: &PriorModel,
    param: Param,
    opts: &MiOptions,
    seed: u64,
) -> Result<MiEstimate> {
    opts.validate()?;
    let samples = draw_mi_samples(std::slice::from_ref(surrogate), model, opts.n_kde, seed)?;
    let mut all = mi_table(&samples, model, &[param], opts, seed)?;
    Ok(all.remove(0))
}

/// Every `(param, qoi)` index over shared draws, params varying fastest.
pub fn mi_table(
    samples: &MiSamples,
    model: &PriorModel,
    params: &[Param],
    opts: &MiOptions,
    seed: u64,
) -> Result<Vec<MiEstimate>> {
    opts.validate_counts()?;
    let inputs: Vec<Vec<f64>> = params.iter().map(|&p| samples.batch.column(p)).collect();
    let mut out = Vec::new();
    for (qoi, g) in &samples.outputs {
        for (k, &param) in params.iter().enumerate() {
            let tag = format!("{}/{}", param.name(), qoi.name());
            let raw = mi_from_samples(
                &inputs[k],
                g,
                opts,
                derive_seed(seed, &tag),
                support_for(model, param, opts.marginals),
            )?;
            out.push(MiEstimate {
                param,
                qoi: *qoi,
                s_hat: raw.s_hat,
                std_error: raw.std_error,
                m: opts.m_mc,
                trace: raw.trace,
                out_of_grid: raw.out_of_grid,
            });
        }
    }
    Ok(out)
}

/// Normalized index for every input of one QoI.
#[derive(Debug, Clone, Serialize)]
pub struct RankingRow {
    pub qoi: Qoi,
    pub params: Vec<Param>,
    pub r_hat: Vec<f64>,
    /// Ranking with the index at `S - 2 se` (floored at 0), others fixed.
    pub r_low: Vec<f64>,
    /// Ranking with the index at `S + 2 se`, others fixed.
    pub r_high: Vec<f64>,
}

impl RankingRow {
    /// Input with the largest share.
    pub fn top(&self) -> Param {
        let k = self
            .r_hat
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        self.params[k]
    }

    pub fn get(&self, p: Param) -> Option<f64> {
        self.params.iter().position(|&q| q == p).map(|k| self.r_hat[k])
    }
}

/// `r_i = S_i / sum_j S_j` with negative estimates floored at zero.
pub fn rank_effects(estimates: &[MiEstimate]) -> Result<RankingRow> {
    if estimates.len() < 2 {
        return Err(Error::InvalidArgument("ranking needs at least two estimates".into()));
    }
    let qoi = estimates[0].qoi;
    if estimates.iter().any(|e| e.qoi != qoi) {
        return Err(Error::InvalidArgument("estimates mix quantities of interest".into()));
    }
    let s: Vec<f64> = estimates.iter().map(|e| e.s_hat.max(0.0)).collect();
    let total: f64 = s.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all sensitivity indices are zero".into()));
    }
    let share = |k: usize, v: f64| {
        let rest = total - s[k];
        if v + rest > 0.0 {
            v / (v + rest)
        } else {
            0.0
        }
    };
    let r_hat = s.iter().map(|v| v / total).collect();
    let r_low = (0..s.len())
        .map(|k| share(k, (s[k] - 2.0 * estimates[k].std_error).max(0.0)))
        .collect();
    let r_high = (0..s.len())
        .map(|k| share(k, s[k] + 2.0 * estimates[k].std_error))
        .collect();
    Ok(RankingRow {
        qoi,
        params: estimates.iter().map(|e| e.param).collect(),
        r_hat,
        r_low,
        r_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(param: Param, s: f64) -> MiEstimate {
        MiEstimate {
            param,
            qoi: Qoi::Dl,
            s_hat: s,
            std_error: 0.001,
            m: 1,
            trace: vec![s],
            out_of_grid: 0.0,
        }
    }

    #[test]
    fn equal_and_single() {
        let eq: Vec<_> = Param::ALL.iter().map(|&p| est(p, 0.3)).collect();
        let r = rank_effects(&eq).unwrap();
        assert!(r.r_hat.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let one: Vec<_> = Param::ALL
            .iter()
            .map(|&p| est(p, if p == Param::D { 0.2 } else { -1e-4 }))
            .collect();
        let r = rank_effects(&one).unwrap();
        assert_eq!(r.get(Param::D), Some(1.0));
        assert_eq!(r.top(), Param::D);
    }

    #[test]
    fn all_zero_is_an_error() {
        let z: Vec<_> = Param::ALL.iter().map(|&p| est(p, 0.0)).collect();
        assert!(rank_effects(&z).is_err());
    }
}
