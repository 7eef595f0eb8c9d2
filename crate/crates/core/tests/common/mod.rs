//! Dense reference solvers shared by the integration tests.  They use
//! nalgebra's Schur, SVD and LU factorizations and share no code with the
//! sparse iterative solvers under test.
#![allow(dead_code)]

use homog::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let rows = a.to_dense();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| rows[i][j])
}

/// Principal eigenpair of `A x = λ R x` from the full spectrum of `R⁻¹A`:
/// the eigenvalue of least real part, and the positive null vector of
/// `A − λR` (max-norm 1) from the SVD.
pub fn dense_principal(a: &CsrMatrix, r: &[f64]) -> (f64, Vec<f64>) {
    let n = r.len();
    let m = dense(a);
    let scaled = DMatrix::from_fn(n, n, |i, j| m[(i, j)] / r[i]);
    let spectrum = scaled.clone().schur().complex_eigenvalues();
    let lambda = spectrum
        .iter()
        .min_by(|x, y| x.re.total_cmp(&y.re))
        .map(|z| {
            assert!(z.im.abs() < 1e-8, "principal eigenvalue must be real, got {z}");
            z.re
        })
        .unwrap();
    (lambda, null_vector(&(m - DMatrix::from_diagonal(&DVector::from_column_slice(r)) * lambda)))
}

/// Right singular vector of the smallest singular value, positive and
/// max-normalized.
pub fn null_vector(m: &DMatrix<f64>) -> Vec<f64> {
    let svd = m.clone().svd(false, true);
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .unwrap()
        .0;
    let v: Vec<f64> = svd.v_t.unwrap().row(k).iter().copied().collect();
    let peak = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
    v.iter().map(|x| x / peak).collect()
}

/// Solves the singular system `K ω = f` with the gauge `Σ ω = 0` through the
/// bordered matrix `[K 1; 1ᵀ 0]` and dense LU.
pub fn bordered_solve(k: &CsrMatrix, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let m = dense(k);
    let big = DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => m[(i, j)],
        (false, false) => 0.0,
        _ => 1.0,
    });
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from_slice(f);
    let x = big.lu().solve(&rhs).expect("bordered matrix is nonsingular");
    x.rows(0, n).iter().copied().collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Composite Simpson rule for `∫_0^y f` with `steps` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, y: f64, steps: usize) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let h = y / steps as f64;
    let mut s = f(0.0) + f(y);
    for i in 1..steps {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

/// Modified Bessel function `I0` by its power series.
pub fn bessel_i0(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= (x / 2.0) * (x / 2.0) / (k as f64 * k as f64);
        sum += term;
    }
    sum
}
