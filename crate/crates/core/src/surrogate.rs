//! Tensor-product Legendre chaos surrogates over `Z in [0,1]^4`.
//!
//! The basis factors are `psi_k(z) = sqrt(2k+1) P_k(2z - 1)`, orthonormal
//! under the uniform measure. Multi-indices run over the full tensor grid
//! `alpha_i <= kappa_i` with the first coordinate varying fastest, so the
//! coefficient vector is a dense tensor and evaluation is a sequence of
//! one-dimensional contractions.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bayesnet::{PriorModel, SampleBatch, ZVector};
use crate::closure::{forward_model, DiffusivityField, EffectiveProps};
use crate::error::{Error, Result};
use crate::geometry::{geometric_effectives, PoreParams};
use crate::par;

pub const DIM: usize = 4;

/// Ratio of smallest to largest singular value below which a design is
/// treated as rank deficient.
const RANK_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Qoi {
    #[serde(rename = "DL")]
    Dl,
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "geff")]
    Geff,
}

impl Qoi {
    pub const ALL: [Qoi; 3] = [Qoi::Dl, Qoi::Dt, Qoi::Geff];

    pub fn name(self) -> &'static str {
        match self {
            Qoi::Dl => "DL",
            Qoi::Dt => "DT",
            Qoi::Geff => "geff",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DL" | "dl" => Some(Qoi::Dl),
            "DT" | "dt" => Some(Qoi::Dt),
            "geff" => Some(Qoi::Geff),
            _ => None,
        }
    }

    pub fn of(self, p: &EffectiveProps) -> f64 {
        match self {
            Qoi::Dl => p.dl,
            Qoi::Dt => p.dt,
            Qoi::Geff => p.geff,
        }
    }
}

/// Orthonormal shifted Legendre values `psi_0..=psi_kmax` at `z`.
pub fn legendre_row(z: f64, kmax: usize, out: &mut [f64]) {
    let x = 2.0 * z - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    out[0] = 1.0;
    if kmax >= 1 {
        out[1] = 3f64.sqrt() * x;
    }
    for k in 1..kmax {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        out[k + 1] = (2.0 * kf + 3.0).sqrt() * p2;
        p0 = p1;
        p1 = p2;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PcBasis {
    pub orders: [usize; DIM],
}

impl Default for PcBasis {
    fn default() -> Self {
        Self { orders: [4; DIM] }
    }
}

impl PcBasis {
    pub fn new(orders: [usize; DIM]) -> Self {
        Self { orders }
    }

    pub fn len(&self) -> usize {
        self.orders.iter().map(|k| k + 1).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of term `t` (first coordinate fastest).
    pub fn multi_index(&self, mut t: usize) -> [usize; DIM] {
        let mut a = [0; DIM];
        for (i, k) in self.orders.iter().enumerate() {
            a[i] = t % (k + 1);
            t /= k + 1;
        }
        a
    }

    pub fn term_index(&self, a: &[usize; DIM]) -> usize {
        let mut t = 0;
        for i in (0..DIM).rev() {
            t = t * (self.orders[i] + 1) + a[i];
        }
        t
    }

    fn tables(&self, z: &ZVector) -> [[f64; 16]; DIM] {
        let mut tab = [[0.0; 16]; DIM];
        for i in 0..DIM {
            legendre_row(z[i], self.orders[i], &mut tab[i]);
        }
        tab
    }

    /// All basis values at `z`.
    pub fn eval(&self, z: &ZVector) -> Vec<f64> {
        let tab = self.tables(z);
        let mut out = vec![1.0];
        for i in 0..DIM {
            let k = self.orders[i] + 1;
            let mut next = Vec::with_capacity(out.len() * k);
            for &t in &tab[i][..k] {
                next.extend(out.iter().map(|v| v * t));
            }
            out = next;
        }
        // `next` is built with the new coordinate outermost, which matches
        // the first-fastest layout.
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.orders.iter().any(|&k| k > 15) {
            return Err(Error::InvalidArgument("polynomial order above 15".into()));
        }
        Ok(())
    }
}

/// Basis values at `z`.
pub fn basis_eval(basis: &PcBasis, z: &ZVector) -> Vec<f64> {
    basis.eval(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_train: usize,
    /// `||y - Phi c||_2`.
    pub residual_norm: f64,
    /// `||y - Phi c||_2 / ||y||_2`.
    pub relative_residual: f64,
    /// 2-norm condition number of the design matrix.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcSurrogate {
    pub qoi: Qoi,
    pub basis: PcBasis,
    pub coefficients: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl PcSurrogate {
    pub fn from_coefficients(qoi: Qoi, basis: PcBasis, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} basis terms",
                coefficients.len(),
                basis.len()
            )));
        }
        Ok(Self {
            qoi,
            basis,
            coefficients,
            diagnostics: FitDiagnostics {
                n_train: 0,
                residual_norm: 0.0,
                relative_residual: 0.0,
                condition: 1.0,
            },
        })
    }

    /// Contracts the coefficient tensor one coordinate at a time.
    pub fn eval(&self, z: &ZVector) -> f64 {
        let tab = self.basis.tables(z);
        let contract = |src: &[f64], i: usize| -> Vec<f64> {
            let k = self.basis.orders[i] + 1;
            src.chunks_exact(k)
                .map(|c| c.iter().zip(&tab[i][..k]).map(|(a, b)| a * b).sum())
                .collect()
        };
        let mut cur = contract(&self.coefficients, 0);
        for i in 1..DIM {
            cur = contract(&cur, i);
        }
        cur[0]
    }

    /// Evaluates many points; order-preserving and parallel.
    pub fn eval_many(&self, zs: &[ZVector]) -> Vec<f64> {
        par::map_slice(zs, |z| self.eval(z))
    }

    pub fn mean(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn variance(&self) -> f64 {
        self.coefficients[1..].iter().map(|c| c * c).sum()
    }

    /// Versioned text form; floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = self.basis.orders;
        let d = &self.diagnostics;
        let _ = writeln!(s, "poreuq-pce 1");
        let _ = writeln!(s, "qoi {}", self.qoi.name());
        let _ = writeln!(s, "orders {} {} {} {}", o[0], o[1], o[2], o[3]);
        let _ = writeln!(s, "terms {}", self.coefficients.len());
        let _ = writeln!(s, "n_train {}", d.n_train);
        let _ = writeln!(s, "residual_norm {:?}", d.residual_norm);
        let _ = writeln!(s, "relative_residual {:?}", d.relative_residual);
        let _ = writeln!(s, "condition {:?}", d.condition);
        for (t, c) in self.coefficients.iter().enumerate() {
            let a = self.basis.multi_index(t);
            let _ = writeln!(s, "{} {} {} {} {:?}", a[0], a[1], a[2], a[3], c);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("surrogate file: {m}"));
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };
        let version = field("poreuq-pce")?;
        if version != "1" {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let qoi = Qoi::parse(&field("qoi")?).ok_or_else(|| bad("unknown qoi"))?;
        let orders: Vec<usize> = field("orders")?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| bad("orders")))
            .collect::<Result<_>>()?;
        let orders: [usize; DIM] = orders.try_into().map_err(|_| bad("orders"))?;
        let terms: usize = field("terms")?.parse().map_err(|_| bad("terms"))?;
        let num = |s: String| s.parse::<f64>().map_err(|_| bad("number"));
        let n_train: usize = field("n_train")?.parse().map_err(|_| bad("n_train"))?;
        let residual_norm = num(field("residual_norm")?)?;
        let relative_residual = num(field("relative_residual")?)?;
        let condition = num(field("condition")?)?;
        let basis = PcBasis::new(orders);
        basis.validate()?;
        if terms != basis.len() {
            return Err(bad("term count does not match orders"));
        }
        let mut coefficients = vec![0.0; terms];
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != DIM + 1 {
                return Err(bad("coefficient row"));
            }
            let mut a = [0; DIM];
            for i in 0..DIM {
                a[i] = parts[i].parse().map_err(|_| bad("multi-index"))?;
                if a[i] > orders[i] {
                    return Err(bad("multi-index exceeds order"));
                }
            }
            coefficients[basis.term_index(&a)] = parts[DIM].parse().map_err(|_| bad("coefficient"))?;
            seen += 1;
        }
        if seen != terms {
            return Err(bad("wrong number of coefficient rows"));
        }
        Ok(Self {
            qoi,
            basis,
            coefficients,
            diagnostics: FitDiagnostics {
                n_train,
                residual_norm,
                relative_residual,
                condition,
            },
        })
    }

    pub fn write_coefficients_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "term,a1,a2,a3,a4,coefficient")?;
        for (t, c) in self.coefficients.iter().enumerate() {
            let a = self.basis.multi_index(t);
            writeln!(w, "{t},{},{},{},{},{c}", a[0], a[1], a[2], a[3])?;
        }
        Ok(())
    }
}

/// Value of the surrogate at `z`.
pub fn pce_eval(s: &PcSurrogate, z: &ZVector) -> f64 {
    s.eval(z)
}

/// Least-squares coefficients for several responses sharing one design.
pub fn fit_least_squares(
    basis: &PcBasis,
    zs: &[ZVector],
    responses: &[(Qoi, &[f64])],
) -> Result<Vec<PcSurrogate>> {
    basis.validate()?;
    let (m, p) = (zs.len(), basis.len());
    if m < p {
        return Err(Error::InvalidArgument(format!(
            "{m} training points for {p} basis terms"
        )));
    }
    for (q, y) in responses {
        if y.len() != m {
            return Err(Error::LengthMismatch(format!(
                "{} responses for {} {m} training points",
                y.len(),
                q.name()
            )));
        }
    }
    let rows = par::map_slice(zs, |z| basis.eval(z));
    let phi = DMatrix::from_fn(m, p, |i, j| rows[i][j]);
    let qr = phi.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = smax / smin;
    if !(smin > RANK_RTOL * smax) {
        return Err(Error::RankDeficient { condition });
    }
    let qt = qr.q().transpose();
    responses
        .iter()
        .map(|(qoi, y)| {
            let y = DVector::from_column_slice(y);
            let rhs = &qt * &y;
            let c = r
                .solve_upper_triangular(&rhs)
                .ok_or(Error::RankDeficient { condition })?;
            let resid = (&y - &phi * &c).norm();
            let ynorm = y.norm();
            Ok(PcSurrogate {
                qoi: *qoi,
                basis: basis.clone(),
                coefficients: c.iter().copied().collect(),
                diagnostics: FitDiagnostics {
                    n_train: m,
                    residual_norm: resid,
                    relative_residual: if ynorm > 0.0 { resid / ynorm } else { resid },
                    condition,
                },
            })
        })
        .collect()
}

/// Forward-model settings for training solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub resolution: usize,
    pub tol: f64,
    pub diffusivity: DiffusivityField,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            tol: 1e-8,
            diffusivity: DiffusivityField::default(),
        }
    }
}

impl SolverConfig {
    pub fn solve(&self, p: &PoreParams) -> Result<EffectiveProps> {
        forward_model(p, &self.diffusivity, self.resolution, self.tol)
    }
}

/// Evaluates `eval` on every training sample, attaching sample indices to
/// failures.
pub fn training_responses<F>(batch: &SampleBatch, eval: F) -> Vec<Result<EffectiveProps>>
where
    F: Fn(usize, &PoreParams) -> Result<EffectiveProps> + Sync + Send,
{
    par::map_indexed(batch.len(), |k| {
        eval(k, &batch.theta[k]).map_err(|e| Error::ForwardFailure {
            index: k,
            source: Box::new(e),
        })
    })
}

/// Samples `n_train` points from `model`, runs the forward model and fits a
/// surrogate of `qoi`. `geff` training skips the closure solve.
pub fn pce_fit(
    model: &PriorModel,
    qoi: Qoi,
    n_train: usize,
    seed: u64,
    solver: &SolverConfig,
    basis: &PcBasis,
) -> Result<PcSurrogate> {
    let batch = model.sample(n_train, seed)?;
    let responses = training_responses(&batch, |_, p| match qoi {
        Qoi::Geff => {
            let (porosity, geff) = geometric_effectives(p)?;
            Ok(EffectiveProps {
                dl: f64::NAN,
                dt: f64::NAN,
                geff,
                porosity,
            })
        }
        _ => solver.solve(p),
    });
    let y = responses
        .into_iter()
        .map(|r| r.map(|p| qoi.of(&p)))
        .collect::<Result<Vec<f64>>>()?;
    let mut fits = fit_least_squares(basis, &batch.z, &[(qoi, &y)])?;
    Ok(fits.remove(0))
}

/// First-order Sobol' indices over the `Z` coordinates.
pub fn sobol_first_order(s: &PcSurrogate) -> Result<[f64; DIM]> {
    let var = s.variance();
    if !(var > 0.0) {
        return Err(Error::ZeroVariance(format!(
            "{} surrogate has no non-constant terms",
            s.qoi.name()
        )));
    }
    let mut out = [0.0; DIM];
    for (t, c) in s.coefficients.iter().enumerate().skip(1) {
        let a = s.basis.multi_index(t);
        let active: Vec<usize> = (0..DIM).filter(|&i| a[i] > 0).collect();
        if let [i] = active[..] {
            out[i] += c * c;
        }
    }
    out.iter_mut().for_each(|v| *v /= var);
    Ok(out)
}
