//! Principal eigenpair of the periodic spectral cell problem and its adjoint.
//!
//! The discrete operator `A` is an irreducible Z-matrix and `R` a positive
//! diagonal, so `(A + sR)^{-1} R` is entrywise positive whenever `A + sR` is
//! a nonsingular M-matrix.  Power iteration on it converges to the Perron
//! eigenvector.  The shift starts at a diagonal-dominance bound and is then
//! tightened using Collatz–Wielandt bounds of the current iterate, which stay
//! on the safe side of the Perron eigenvalue.

use crate::error::{Error, Result};
use crate::grid::{assemble_system, assemble_with, cell_integrate, SampledFields};
use crate::krylov::{gmres, Ilu0, SolveOptions};
use crate::sparse::{CsrMatrix, Stencil};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `A φ = λ R φ` on the cell grid.
#[derive(Debug, Clone)]
pub struct PrimalSystem {
    pub a: CsrMatrix,
    /// Diagonal of `R` (the densities, species-major).
    pub r: Vec<f64>,
    pub stencil: Stencil,
}

pub fn assemble_primal(fields: &SampledFields) -> Result<PrimalSystem> {
    let (a, stencil) = assemble_system(fields, 1.0, 1.0)?;
    Ok(PrimalSystem {
        a,
        r: fields.rho.concat(),
        stencil,
    })
}

/// Reassembles with a stencil recorded earlier (e.g. in an eigen artifact).
pub fn assemble_primal_with(fields: &SampledFields, stencil: Stencil) -> PrimalSystem {
    PrimalSystem {
        a: assemble_with(fields, 1.0, 1.0, stencil),
        r: fields.rho.concat(),
        stencil,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-11,
            max_iter: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub lambda: f64,
    /// Positive eigenvector with max-norm 1.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖Ax − λRx‖∞ / (‖x‖∞ (‖A‖∞ + |λ| ‖R‖∞))`.
    pub residual: f64,
    /// Rayleigh quotient after every iteration.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Scaled eigen-residual of `(lambda, x)` for `A x = λ R x`.
pub fn eigen_residual(a: &CsrMatrix, r: &[f64], lambda: f64, x: &[f64]) -> f64 {
    let ax = a.mul(x);
    let res = ax
        .iter()
        .zip(r.iter().zip(x))
        .fold(0.0f64, |m, (axi, (ri, xi))| m.max((axi - lambda * ri * xi).abs()));
    let scale = max_abs(x) * (a.norm_inf() + lambda.abs() * max_abs(r));
    if scale == 0.0 {
        res
    } else {
        res / scale
    }
}

/// Shift-and-invert power iteration for the Perron eigenpair of `A x = λ R x`.
pub fn solve_principal(a: &CsrMatrix, r: &[f64], opts: &EigenOptions) -> Result<PowerResult> {
    power_iteration(a, r, opts, opts.seed)
}

/// Same iteration applied to the exact transpose `Aᵀ`.
pub fn solve_adjoint(a: &CsrMatrix, r: &[f64], opts: &EigenOptions) -> Result<PowerResult> {
    power_iteration(&a.transpose(), r, opts, opts.seed.wrapping_add(0x9e37_79b9_7f4a_7c15))
}

const POLISH_SWEEPS: usize = 2;

fn power_iteration(a: &CsrMatrix, r: &[f64], opts: &EigenOptions, seed: u64) -> Result<PowerResult> {
    let n = r.len();
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {} must be positive", opts.tol)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    // Strict diagonal dominance of A + sR.
    let mut shift = 1.0
        + (0..n)
            .map(|i| a.row(i).1.iter().map(|v| v.abs()).sum::<f64>() / r[i])
            .fold(0.0, f64::max);
    let mut factored: Option<(f64, CsrMatrix, Ilu0)> = None;
    let inner = SolveOptions {
        tol: 1e-12,
        max_iter: 20_000,
        restart: 80,
        floor: 1e-9,
        stage: "eigen inner solve",
    };
    let a_norm = a.norm_inf();
    let r_norm = max_abs(r);
    let mut history = Vec::new();
    let mut previous = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut y = vec![0.0; n];
    let mut polish = 0;
    for it in 1..=opts.max_iter {
        if factored.as_ref().is_none_or(|(s, _, _)| *s != shift) {
            let shifted = a.add_diagonal(&r.iter().map(|ri| shift * ri).collect::<Vec<_>>());
            let ilu = Ilu0::new(&shifted)?;
            factored = Some((shift, shifted, ilu));
        }
        let (_, shifted, ilu) = factored.as_ref().expect("factorization cached");
        let rhs: Vec<f64> = r.iter().zip(&x).map(|(ri, xi)| ri * xi).collect();
        let guess = if previous.is_finite() { 1.0 / (previous + shift) } else { 0.0 };
        y.iter_mut().zip(&x).for_each(|(yi, xi)| *yi = guess * xi);
        gmres(shifted, &rhs, &mut y, ilu, &inner, None)?;
        let sign = if y[0] < 0.0 { -1.0 } else { 1.0 };
        let norm = max_abs(&y);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NoConvergence {
                stage: "power iteration",
                iterations: it,
                residual,
            });
        }
        let mut change = 0.0f64;
        for (xi, yi) in x.iter_mut().zip(&y) {
            let next = sign * yi / norm;
            change = change.max((next - *xi).abs());
            *xi = next;
        }
        let ax = a.mul(&x);
        let rx: Vec<f64> = r.iter().zip(&x).map(|(ri, xi)| ri * xi).collect();
        let rq = dot(&x, &ax) / dot(&x, &rx);
        history.push(rq);
        residual = ax
            .iter()
            .zip(&rx)
            .fold(0.0f64, |m, (p, q)| m.max((p - rq * q).abs()))
            / (max_abs(&x) * (a_norm + rq.abs() * r_norm));
        let settled = (rq - previous).abs() < opts.tol * rq.abs().max(1.0);
        if settled && change < opts.tol && residual < 10.0 * opts.tol {
            polish += 1;
        }
        // A few extra sweeps after the criteria are first met push the
        // eigenvector error well below the tolerance at negligible cost.
        if polish > POLISH_SWEEPS {
            // The flat index is reported; callers that know the species
            // layout split it.
            if let Some((i, &v)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::PositivityFailure {
                    species: 0,
                    node: i,
                    value: v,
                });
            }
            return Ok(PowerResult {
                lambda: rq,
                vector: x,
                iterations: it,
                residual,
                history,
            });
        }
        previous = rq;
        if x.iter().all(|&v| v > 0.0) {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let q = ax[i] / rx[i];
                lo = lo.min(q);
                hi = hi.max(q);
            }
            let gap = (hi - lo).max(1e-2 * (1.0 + lo.abs()));
            let candidate = -lo + gap;
            if candidate < shift {
                shift = candidate;
            }
        }
    }
    Err(Error::NoConvergence {
        stage: "power iteration",
        iterations: opts.max_iter,
        residual,
    })
}

/// Principal eigenpair with positive primal and adjoint fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenpair {
    /// Two-sided quotient `⟨φ*, Aφ⟩ / ⟨φ*, Rφ⟩`.
    pub lambda: f64,
    pub lambda_primal: f64,
    pub lambda_adjoint: f64,
    /// `phi[α][node]`
    pub phi: Vec<Vec<f64>>,
    pub phi_star: Vec<Vec<f64>>,
    pub residual: f64,
    pub residual_primal: f64,
    pub residual_adjoint: f64,
    pub iterations_primal: usize,
    pub iterations_adjoint: usize,
    pub stencil: Stencil,
    pub dimension: usize,
    pub n: usize,
    pub options: EigenOptions,
}

impl Eigenpair {
    pub fn species(&self) -> usize {
        self.phi.len()
    }

    pub fn phi_flat(&self) -> Vec<f64> {
        self.phi.concat()
    }

    pub fn phi_star_flat(&self) -> Vec<f64> {
        self.phi_star.concat()
    }
}

fn split(v: &[f64], species: usize) -> Vec<Vec<f64>> {
    let len = v.len() / species;
    v.chunks(len).map(|c| c.to_vec()).collect()
}

/// Rescales `phi_star` so that `Σ_α ∫ ρ_α φ_α φ*_α = 1`; `phi` keeps max-norm 1.
pub fn normalize(
    phi: &mut [Vec<f64>],
    phi_star: &mut [Vec<f64>],
    rho: &[Vec<f64>],
    grid: &crate::grid::PeriodicGrid,
) -> Result<()> {
    let m = phi.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        phi.iter_mut().flatten().for_each(|v| *v /= m);
    }
    let integral: f64 = (0..phi.len())
        .map(|a| {
            let w: Vec<f64> = (0..phi[a].len()).map(|p| rho[a][p] * phi[a][p] * phi_star[a][p]).collect();
            cell_integrate(grid, &w)
        })
        .sum();
    if !(integral > 0.0) || !integral.is_finite() {
        return Err(Error::DegenerateNormalization(integral));
    }
    phi_star.iter_mut().flatten().for_each(|v| *v /= integral);
    Ok(())
}

fn check_positive(v: &[Vec<f64>]) -> Result<()> {
    for (a, field) in v.iter().enumerate() {
        if let Some((node, &value)) = field.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
            return Err(Error::PositivityFailure {
                species: a,
                node,
                value,
            });
        }
    }
    Ok(())
}

/// Assembles the cell operator and computes the normalized principal
/// eigenpair together with its adjoint.
pub fn compute_eigenpair(fields: &SampledFields, opts: &EigenOptions) -> Result<(PrimalSystem, Eigenpair)> {
    let sys = assemble_primal(fields)?;
    let pair = eigenpair_of(&sys, fields, opts)?;
    Ok((sys, pair))
}

/// Eigenpair of an already assembled system.
pub fn eigenpair_of(sys: &PrimalSystem, fields: &SampledFields, opts: &EigenOptions) -> Result<Eigenpair> {
    let ns = fields.species;
    let block = fields.grid.len();
    let primal = solve_principal(&sys.a, &sys.r, opts).map_err(|e| relabel(e, block))?;
    let adjoint = solve_adjoint(&sys.a, &sys.r, opts).map_err(|e| relabel(e, block))?;
    let mut phi = split(&primal.vector, ns);
    let mut phi_star = split(&adjoint.vector, ns);
    check_positive(&phi)?;
    check_positive(&phi_star)?;
    normalize(&mut phi, &mut phi_star, &fields.rho, &fields.grid)?;
    let pf = phi.concat();
    let ps = phi_star.concat();
    let lambda = dot(&ps, &sys.a.mul(&pf)) / dot(&ps, &sys.r.iter().zip(&pf).map(|(r, p)| r * p).collect::<Vec<_>>());
    let residual_primal = eigen_residual(&sys.a, &sys.r, lambda, &pf);
    let residual_adjoint = eigen_residual(&sys.a.transpose(), &sys.r, lambda, &ps);
    Ok(Eigenpair {
        lambda,
        lambda_primal: primal.lambda,
        lambda_adjoint: adjoint.lambda,
        phi,
        phi_star,
        residual: residual_primal.max(residual_adjoint),
        residual_primal,
        residual_adjoint,
        iterations_primal: primal.iterations,
        iterations_adjoint: adjoint.iterations,
        stencil: sys.stencil,
        dimension: fields.grid.d,
        n: fields.grid.n,
        options: *opts,
    })
}

fn relabel(e: Error, block: usize) -> Error {
    match e {
        Error::PositivityFailure { node, value, .. } => Error::PositivityFailure {
            species: node / block,
            node: node % block,
            value,
        },
        other => other,
    }
}
