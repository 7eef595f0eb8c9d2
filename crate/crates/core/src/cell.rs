//! Corrector cell problems, effective drift and dispersion tensor.

use crate::error::{Error, Result};
use crate::factorize::{
    divergence_residual, factorized_fields, DivergenceResidual, FactorizedFields, FactorizedOperator,
};
use crate::grid::{build_grid, cell_integrate, sample_fields, PeriodicGrid, SampledFields};
use crate::krylov::{gmres, Ilu0, SolveOptions};
use crate::problem::ProblemSpec;
use crate::sparse::Stencil;
use crate::spectral::{compute_eigenpair, EigenOptions, Eigenpair, PrimalSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `b* = Σ_α ∫ b̃_α`, componentwise; `b_tilde` is `[α][k][node]`.
pub fn drift(b_tilde: &[Vec<Vec<f64>>], grid: &PeriodicGrid) -> Vec<f64> {
    (0..grid.d)
        .map(|k| b_tilde.iter().map(|ba| cell_integrate(grid, &ba[k])).sum())
        .collect()
}

/// Right-hand side of corrector `i`: `φφ*ρ b*_i − Ã y_i` (species-major).
pub fn corrector_rhs(op: &FactorizedOperator, b_star: &[f64], axis: usize) -> Vec<f64> {
    let ay = op.apply_coordinate(axis);
    op.mass
        .iter()
        .zip(&ay)
        .map(|(m, a)| m * b_star[axis] - a)
        .collect()
}

/// `Σ_α ∫ f_α` for a species-major field.
pub fn fredholm_residual(rhs: &[f64], grid: &PeriodicGrid) -> f64 {
    cell_integrate(grid, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSet {
    /// `omega[i][α][node]`
    pub omega: Vec<Vec<Vec<f64>>>,
    /// `Σ_α ∫ ω_{i,α}` after solving (zero up to rounding).
    pub gauge: Vec<f64>,
    /// `‖Ãω_i − f_i‖∞` relative to the size of the terms forming `f_i`
    /// (`max |φφ*ρ b*_i| + |Ãy_i|`), which stays meaningful when `f_i`
    /// cancels to rounding level.
    pub residual: Vec<f64>,
    pub fredholm: Vec<f64>,
    pub iterations: Vec<usize>,
}

impl CorrectorSet {
    pub fn flat(&self, i: usize) -> Vec<f64> {
        self.omega[i].concat()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random initial guess.
    pub seed: u64,
}

impl Default for CorrectorOptions {
    fn default() -> Self {
        CorrectorOptions {
            tol: 1e-12,
            max_iter: 20_000,
            seed: 0,
        }
    }
}

const COMPATIBILITY_TOL: f64 = 1e-10;

/// Solves `Ã ω_i = f_i` in the quotient by constants, with gauge
/// `Σ_α Σ_nodes ω_{i,α} = 0`.
pub fn solve_correctors(op: &FactorizedOperator, b_star: &[f64], opts: &CorrectorOptions) -> Result<CorrectorSet> {
    let size = op.size();
    let len = op.grid.len();
    let diag_scale = op.matrix.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let regularized = op.matrix.add_diagonal(&vec![1e-6 * diag_scale.max(1e-300); size]);
    let pc = Ilu0::new(&regularized)?;
    let project = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
    };
    let solve_opts = SolveOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        restart: 80,
        floor: 1e-10,
        stage: "corrector solve",
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut set = CorrectorSet {
        omega: Vec::new(),
        gauge: Vec::new(),
        residual: Vec::new(),
        fredholm: Vec::new(),
        iterations: Vec::new(),
    };
    for i in 0..op.grid.d {
        let f = corrector_rhs(op, b_star, i);
        let ay = op.apply_coordinate(i);
        let scale = op
            .mass
            .iter()
            .zip(&ay)
            .fold(0.0f64, |m, (w, a)| m.max((w * b_star[i]).abs() + a.abs()));
        let fh = fredholm_residual(&f, &op.grid);
        if fh.abs() >= COMPATIBILITY_TOL {
            return Err(Error::CompatibilityViolation { residual: fh });
        }
        let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x: Vec<f64> = (0..size).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut iterations = 0;
        let residual = if fmax == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            0.0
        } else {
            // Remove the incompatible rounding component so the system is consistent.
            let mean = f.iter().sum::<f64>() / size as f64;
            let fc: Vec<f64> = f.iter().map(|v| v - mean).collect();
            let stats = gmres(&op.matrix, &fc, &mut x, &pc, &solve_opts, Some(&project))?;
            iterations = stats.iterations;
            project(&mut x);
            let ax = op.matrix.mul(&x);
            ax.iter().zip(&f).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())) / scale.max(fmax)
        };
        set.gauge.push(cell_integrate(&op.grid, &x));
        set.omega.push(x.chunks(len).map(|c| c.to_vec()).collect());
        set.residual.push(residual);
        set.fredholm.push(fh);
        set.iterations.push(iterations);
    }
    Ok(set)
}

/// Dispersion tensor with both assembly routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// Authoritative tensor (symmetrized), row-major `d×d`.
    pub matrix: Vec<Vec<f64>>,
    /// Diffusion-edge part of the tensor.
    pub diffusion_part: Vec<Vec<f64>>,
    /// Coupling-edge part of the tensor.
    pub coupling_part: Vec<Vec<f64>>,
    /// Tensor assembled through the symmetrized cross-check route.
    pub cross_check: Vec<Vec<f64>>,
    /// Largest entry of `|matrix − matrixᵀ|` before symmetrization.
    pub asymmetry: f64,
    pub min_eigenvalue: f64,
}

pub(crate) fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    match m.len() {
        1 => m[0][0],
        _ => {
            let (a, b, c) = (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]);
            0.5 * (a + c) - (0.25 * (a - c).powi(2) + b * b).sqrt()
        }
    }
}

/// `𝒟_ij = Σ_α∫D̃(∇ω_i+e_i)·(∇ω_j+e_j) − ½ΣΣ∫φ*_αφ_βΠ_αβ(ω_iα−ω_iβ)(ω_jα−ω_jβ)`
/// in its discrete edge form, plus the symmetrized cross-check.
pub fn dispersion(op: &FactorizedOperator, correctors: &CorrectorSet, b_star: &[f64]) -> Result<Dispersion> {
    let d = op.grid.d;
    let vol = op.grid.cell_volume();
    let omega: Vec<Vec<f64>> = (0..d).map(|i| correctors.flat(i)).collect();
    let zero = vec![0.0; op.size()];
    let conv: Vec<Vec<f64>> = (0..d).map(|i| op.skew_coordinate(i)).collect();
    let g: Vec<Vec<f64>> = (0..d)
        .map(|i| op.mass.iter().zip(&conv[i]).map(|(m, c)| m * b_star[i] - c).collect())
        .collect();
    let mut raw = vec![vec![0.0; d]; d];
    let mut diffusion_part = vec![vec![0.0; d]; d];
    let mut coupling_part = vec![vec![0.0; d]; d];
    let mut cross_check = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            let (s, c) = op.edge_form(&omega[i], Some(i), &omega[j], Some(j));
            raw[i][j] = s + c;
            diffusion_part[i][j] = s;
            coupling_part[i][j] = c;
            let yy = op.edge_form(&zero, Some(i), &zero, Some(j));
            let wy = op.edge_form(&omega[i], None, &zero, Some(j));
            let yw = op.edge_form(&omega[j], None, &zero, Some(i));
            let wg: f64 = omega[i].iter().zip(&g[j]).map(|(a, b)| a * b).sum();
            let gw: f64 = omega[j].iter().zip(&g[i]).map(|(a, b)| a * b).sum();
            cross_check[i][j] = yy.0 + yy.1 + 0.5 * (wy.0 + wy.1 + yw.0 + yw.1) + 0.5 * vol * (wg + gw);
        }
    }
    let mut asymmetry = 0.0f64;
    let mut matrix = raw.clone();
    for i in 0..d {
        for j in 0..d {
            asymmetry = asymmetry.max((raw[i][j] - raw[j][i]).abs());
            matrix[i][j] = 0.5 * (raw[i][j] + raw[j][i]);
            diffusion_part[i][j] = 0.5 * (diffusion_part[i][j] + diffusion_part[j][i]);
            coupling_part[i][j] = 0.5 * (coupling_part[i][j] + coupling_part[j][i]);
        }
    }
    let min_eig = min_eigenvalue(&matrix);
    if !(min_eig > 0.0) {
        return Err(Error::SpdViolation {
            min_eigenvalue: min_eig,
        });
    }
    Ok(Dispersion {
        matrix,
        diffusion_part,
        coupling_part,
        cross_check,
        asymmetry,
        min_eigenvalue: min_eig,
    })
}

/// `∫ ρ_α φ*_α` per species.
pub fn init_weights(fields: &SampledFields, pair: &Eigenpair) -> Vec<f64> {
    (0..fields.species)
        .map(|a| {
            let w: Vec<f64> = fields.rho[a].iter().zip(&pair.phi_star[a]).map(|(r, p)| r * p).collect();
            cell_integrate(&fields.grid, &w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub normalization: f64,
    pub eigen_residual: f64,
    pub lambda_gap: f64,
    pub fredholm_residual: Vec<f64>,
    pub corrector_residual: Vec<f64>,
    pub spd_margin: f64,
    pub dispersion_asymmetry: f64,
    pub dispersion_route_gap: f64,
    pub divergence_residual: Vec<f64>,
    pub divergence_residual_summed: f64,
    /// `b*` from the pointwise convection field minus the discrete drift.
    pub pointwise_drift_gap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dimension: usize,
    pub n: usize,
    pub stencil: Stencil,
    pub eigen: EigenOptions,
    pub corrector: CorrectorOptions,
}

/// Everything the homogenized equation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveModel {
    pub b_star: Vec<f64>,
    /// Row-major `d×d`.
    pub dispersion: Vec<Vec<f64>>,
    pub lambda: f64,
    pub init_weights: Vec<f64>,
    pub diagnostics: CellDiagnostics,
    pub provenance: Provenance,
}

/// Intermediate products of the cell stage, kept for diagnostics.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub fields: SampledFields,
    pub system: PrimalSystem,
    pub eigenpair: Eigenpair,
    pub operator: FactorizedOperator,
    pub factorized: FactorizedFields,
    pub correctors: CorrectorSet,
    pub dispersion: Dispersion,
    pub divergence: DivergenceResidual,
    pub model: EffectiveModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellOptions {
    pub eigen: EigenOptions,
    pub corrector: CorrectorOptions,
}

/// Runs eigen → factorization → correctors → effective coefficients on a
/// cell grid of `n` points per axis.
pub fn solve_cell(spec: &ProblemSpec, n: usize, opts: &CellOptions) -> Result<CellSolution> {
    let grid = build_grid(spec.dimension, n)?;
    let fields = sample_fields(spec, &grid)?;
    let (system, eigenpair) = compute_eigenpair(&fields, &opts.eigen)?;
    cell_from_eigenpair(fields, system, eigenpair, &opts.corrector, &opts.eigen)
}

/// Cell stage starting from a computed eigenpair.
pub fn cell_from_eigenpair(
    fields: SampledFields,
    system: PrimalSystem,
    eigenpair: Eigenpair,
    corrector_opts: &CorrectorOptions,
    eigen_opts: &EigenOptions,
) -> Result<CellSolution> {
    let grid = fields.grid;
    let operator = FactorizedOperator::from_eigenpair(&system.a, &system.r, &eigenpair, grid);
    let factorized = factorized_fields(&eigenpair, &fields, &operator);
    let b_star = drift(&factorized.b_tilde_discrete, &grid);
    let pointwise = drift(&factorized.b_tilde, &grid);
    let correctors = solve_correctors(&operator, &b_star, corrector_opts)?;
    let disp = dispersion(&operator, &correctors, &b_star)?;
    let divergence = divergence_residual(&factorized.b_tilde, &eigenpair, &fields);
    let weights = init_weights(&fields, &eigenpair);
    let normalization: f64 = (0..fields.species)
        .map(|a| {
            let w: Vec<f64> = (0..grid.len())
                .map(|p| fields.rho[a][p] * eigenpair.phi[a][p] * eigenpair.phi_star[a][p])
                .collect();
            cell_integrate(&grid, &w)
        })
        .sum();
    let route_gap = disp
        .matrix
        .iter()
        .flatten()
        .zip(disp.cross_check.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let model = EffectiveModel {
        b_star: b_star.clone(),
        dispersion: disp.matrix.clone(),
        lambda: eigenpair.lambda,
        init_weights: weights,
        diagnostics: CellDiagnostics {
            normalization,
            eigen_residual: eigenpair.residual,
            lambda_gap: (eigenpair.lambda_primal - eigenpair.lambda_adjoint).abs(),
            fredholm_residual: correctors.fredholm.clone(),
            corrector_residual: correctors.residual.clone(),
            spd_margin: disp.min_eigenvalue,
            dispersion_asymmetry: disp.asymmetry,
            dispersion_route_gap: route_gap,
            divergence_residual: divergence.per_species.clone(),
            divergence_residual_summed: divergence.summed,
            pointwise_drift_gap: pointwise.iter().zip(&b_star).map(|(p, q)| p - q).collect(),
        },
        provenance: Provenance {
            dimension: grid.d,
            n: grid.n,
            stencil: eigenpair.stencil,
            eigen: *eigen_opts,
            corrector: *corrector_opts,
        },
    };
    Ok(CellSolution {
        fields,
        system,
        eigenpair,
        operator,
        factorized,
        correctors,
        dispersion: disp,
        divergence,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn report_models() {
        for (name, spec) in fixtures::named() {
            let n = if spec.dimension == 2 { 32 } else { 64 };
            let sol = solve_cell(&spec, n, &CellOptions::default()).unwrap();
            eprintln!("{name}: {:?}", sol.model);
        }
    }
}
