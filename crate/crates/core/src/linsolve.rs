//! Five-point symmetric operators on masked grids and a preconditioned
//! conjugate residual solver.

use crate::error::{Error, Result};

/// Symmetric positive (semi)definite operator in five-point form:
/// `(A x)_p = diag_p x_p - sum_k coef[k]_p x_{nbr[k]_p}`.
///
/// Missing neighbors point back at `p` with a zero coefficient.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    pub diag: Vec<f64>,
    pub nbr: [Vec<u32>; 4],
    pub coef: [Vec<f64>; 4],
}

impl StencilMatrix {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [n0, n1, n2, n3] = &self.nbr;
        let [c0, c1, c2, c3] = &self.coef;
        for p in 0..self.diag.len() {
            y[p] = self.diag[p] * x[p]
                - c0[p] * x[n0[p] as usize]
                - c1[p] * x[n1[p] as usize]
                - c2[p] * x[n2[p] as usize]
                - c3[p] * x[n3[p] as usize];
        }
    }
}

/// Block-Jacobi preconditioner whose blocks are tridiagonal line segments.
#[derive(Debug, Clone)]
pub struct LinePreconditioner {
    order: Vec<u32>,
    seg_start: Vec<usize>,
    /// Sub-diagonal coupling to the previous unknown of the segment.
    lower: Vec<f64>,
    cprime: Vec<f64>,
    inv_den: Vec<f64>,
}

impl LinePreconditioner {
    /// `segments` lists unknowns along each line; `coupling(p, q)` is the
    /// positive off-diagonal weight between consecutive unknowns.
    pub fn new<F>(a: &StencilMatrix, segments: &[Vec<u32>], coupling: F) -> Self
    where
        F: Fn(u32, u32) -> f64,
    {
        let n: usize = segments.iter().map(Vec::len).sum();
        let mut order = Vec::with_capacity(n);
        let mut seg_start = Vec::with_capacity(segments.len() + 1);
        let mut lower = Vec::with_capacity(n);
        let mut cprime = Vec::with_capacity(n);
        let mut inv_den = Vec::with_capacity(n);
        for seg in segments {
            seg_start.push(order.len());
            let mut prev_c = 0.0;
            for (k, &p) in seg.iter().enumerate() {
                let sub = if k == 0 { 0.0 } else { -coupling(seg[k - 1], p) };
                let sup = if k + 1 < seg.len() { -coupling(p, seg[k + 1]) } else { 0.0 };
                let den = a.diag[p as usize] - sub * prev_c;
                let inv = 1.0 / den;
                prev_c = sup * inv;
                order.push(p);
                lower.push(sub);
                cprime.push(prev_c);
                inv_den.push(inv);
            }
        }
        seg_start.push(order.len());
        Self {
            order,
            seg_start,
            lower,
            cprime,
            inv_den,
        }
    }

    /// Plain Jacobi (every unknown is its own segment).
    pub fn jacobi(a: &StencilMatrix) -> Self {
        let segs: Vec<Vec<u32>> = (0..a.len() as u32).map(|p| vec![p]).collect();
        Self::new(a, &segs, |_, _| 0.0)
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64], work: &mut [f64]) {
        for s in 0..self.seg_start.len() - 1 {
            let (lo, hi) = (self.seg_start[s], self.seg_start[s + 1]);
            let mut prev = 0.0;
            for k in lo..hi {
                let v = (r[self.order[k] as usize] - self.lower[k] * prev) * self.inv_den[k];
                work[k] = v;
                prev = v;
            }
            let mut next = 0.0;
            for k in (lo..hi).rev() {
                let v = work[k] - self.cprime[k] * next;
                z[self.order[k] as usize] = v;
                next = v;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub relative_residual: f64,
    /// `r^T M^-1 r` at every iteration, starting with the initial residual.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate residual iteration from `x = 0`.
///
/// Minimizes `r^T M^-1 r` over the Krylov space, so the recorded history is
/// nonincreasing. Stops when `||r||_2 <= tol ||b||_2`.
pub fn pcr(
    a: &StencilMatrix,
    m: &LinePreconditioner,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                relative_residual: 0.0,
                history: vec![0.0],
            },
        ));
    }
    let mut work = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z, &mut work);
    let mut az = vec![0.0; n];
    a.apply(&z, &mut az);
    let mut p = z.clone();
    let mut ap = az.clone();
    let mut q = vec![0.0; n];
    let mut zaz = dot(&z, &az);
    let mut history = vec![dot(&r, &z)];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        m.apply(&ap, &mut q, &mut work);
        let denom = dot(&ap, &q);
        if !(denom > 0.0) || !zaz.is_finite() {
            break;
        }
        let alpha = zaz / denom;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            z[k] -= alpha * q[k];
        }
        history.push(dot(&r, &z));
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    relative_residual: rel,
                    history,
                },
            ));
        }
        a.apply(&z, &mut az);
        let zaz_new = dot(&z, &az);
        let beta = zaz_new / zaz;
        zaz = zaz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
            ap[k] = az[k] + beta * ap[k];
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter.min(history.len() - 1),
        residual: rel,
    })
}
