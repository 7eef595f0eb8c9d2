//! Restarted GMRES with an incomplete-LU preconditioner.
//!
//! The sparse systems in this crate are nonsymmetric M-matrices (shifted or
//! singular with a known constant kernel).  ILU(0) on the same pattern is an
//! effective preconditioner for all of them.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Zero-fill incomplete LU factorization, stored on the pattern of the input.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let indptr = a.indptr().to_vec();
        let indices = a.indices().to_vec();
        let mut data = a.data().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for p in indptr[i]..indptr[i + 1] {
                if indices[p] == i {
                    diag_pos[i] = p;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::InvalidInput(format!("row {i} has no diagonal entry")));
            }
        }
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (indptr[i], indptr[i + 1]);
            for p in start..end {
                marker[indices[p]] = p;
            }
            for p in start..end {
                let k = indices[p];
                if k >= i {
                    break;
                }
                let pivot = data[diag_pos[k]];
                if pivot == 0.0 {
                    return Err(Error::NoConvergence {
                        stage: "ilu0",
                        iterations: k,
                        residual: f64::INFINITY,
                    });
                }
                let lik = data[p] / pivot;
                data[p] = lik;
                for q in diag_pos[k] + 1..indptr[k + 1] {
                    let m = marker[indices[q]];
                    if m != usize::MAX {
                        data[m] -= lik * data[q];
                    }
                }
            }
            for p in start..end {
                marker[indices[p]] = usize::MAX;
            }
        }
        let lu = CsrMatrix::from_raw(n, indptr, indices, data);
        Ok(Ilu0 { lu, diag_pos })
    }

    /// Solves `L U z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let (indptr, indices, data) = (self.lu.indptr(), self.lu.indices(), self.lu.data());
        for i in 0..n {
            let mut s = r[i];
            for p in indptr[i]..self.diag_pos[i] {
                s -= data[p] * z[indices[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag_pos[i] + 1..indptr[i + 1] {
                s -= data[p] * z[indices[p]];
            }
            z[i] = s / data[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol·‖b‖`.
    pub tol: f64,
    /// Cap on the total number of Arnoldi steps.
    pub max_iter: usize,
    pub restart: usize,
    /// Residual accepted when restarts stagnate at the rounding floor.
    pub floor: f64,
    pub stage: &'static str,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-12,
            max_iter: 20_000,
            restart: 60,
            floor: 1e-12,
            stage: "gmres",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES.  `x` holds the initial guess on
/// entry and the solution on exit.  If `project` is given it is applied to
/// the iterate after every restart cycle; it must map solutions to
/// solutions (e.g. removing a kernel component).
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    pc: &Ilu0,
    opts: &SolveOptions,
    project: Option<&dyn Fn(&mut [f64])>,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            residual: 0.0,
        });
    }
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut hess = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
    let mut g = vec![0.0; m + 1];
    let mut total = 0usize;

    let residual = |x: &[f64], r: &mut [f64]| {
        a.matvec(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm(r)
    };

    let mut rnorm = residual(x, &mut r);
    let mut stalled = 0;
    let a_norm = a.norm_inf();
    loop {
        if rnorm <= opts.tol * bnorm {
            return Ok(SolveStats {
                iterations: total,
                residual: rnorm / bnorm,
            });
        }
        if total >= opts.max_iter {
            return Err(Error::NoConvergence {
                stage: opts.stage,
                iterations: total,
                residual: rnorm / bnorm,
            });
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / rnorm).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = rnorm;
        let mut k_used = 0;
        for j in 0..m {
            pc.apply(&basis[j], &mut z);
            a.matvec(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &basis[i]);
                hess[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis[i]) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            hess[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let denom = hess[j][j].hypot(hess[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hess[j][j] / denom;
                sn[j] = hess[j + 1][j] / denom;
            }
            hess[j][j] = denom;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k_used = j + 1;
            total += 1;
            let converged = g[j + 1].abs() <= 0.5 * opts.tol * bnorm;
            if converged || hn == 0.0 || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // Back substitution for the least-squares coefficients.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= hess[i][l] * y[l];
            }
            y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (yi, vi) in y.iter().zip(&basis) {
            for (wk, vk) in w.iter_mut().zip(vi) {
                *wk += yi * vk;
            }
        }
        pc.apply(&w, &mut z);
        for (xk, zk) in x.iter_mut().zip(&z) {
            *xk += zk;
        }
        if let Some(p) = project {
            p(x);
        }
        let previous = rnorm;
        rnorm = residual(x, &mut r);
        stalled = if rnorm > 0.5 * previous { stalled + 1 } else { 0 };
        if stalled >= 3 {
            // Backward-stable floor: nothing better is attainable in f64.
            let rounding = 1e3 * f64::EPSILON * a_norm * norm(x);
            if rnorm <= opts.floor * bnorm || (rnorm <= rounding && rnorm <= 1e-6 * bnorm) {
                return Ok(SolveStats {
                    iterations: total,
                    residual: rnorm / bnorm,
                });
            }
            return Err(Error::NoConvergence {
                stage: opts.stage,
                iterations: total,
                residual: rnorm / bnorm,
            });
        }
    }
}

/// Factorizes `a` and solves `a x = b` from the initial guess `x`.
pub fn solve(a: &CsrMatrix, b: &[f64], x: &mut [f64], opts: &SolveOptions) -> Result<SolveStats> {
    let pc = Ilu0::new(a)?;
    gmres(a, b, x, &pc, opts, None)
}
