//! Fine-scale truth against the homogenized reconstruction: moving-frame
//! errors, order fits, the species-difference contraction and a two-scale
//! pairing diagnostic.

use crate::cell::{solve_cell, CellDiagnostics, CellOptions, CellSolution};
use crate::effective::{drift_offset, homogenized_initial, reconstruct, solve_homogenized, HomogenizedSolution};
use crate::error::{Error, Result};
use crate::fine::{solve_factorized, solve_fine, worst_energy_increase, FineOptions, Trajectory};
use crate::grid::PeriodicGrid;
use crate::problem::ProblemSpec;
use crate::sparse::Stencil;
use crate::spectral::Eigenpair;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

/// Errors below this are treated as solver noise when fitting orders.
pub const NOISE_FLOOR: f64 = 1e-6;

/// Drifts and eigenvalues below this are rounding noise and not perturbed.
pub const NEGLIGIBLE: f64 = 1e-10;

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Per-species `‖u − u_approx‖ / ‖u_approx‖` at snapshot `t`.
pub fn moving_frame_error(
    traj: &Trajectory,
    hom: &HomogenizedSolution,
    pair: &Eigenpair,
    b_star: &[f64],
    lambda: f64,
    eps: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let u = traj.snapshot(t)?;
    if u.first().map_or(0, |f| f.len()) != hom.grid.len() {
        return Err(Error::ResolutionMismatch(
            "trajectory and homogenized solution live on different grids".into(),
        ));
    }
    let approx = reconstruct(hom, pair, lambda, b_star, eps, t)?;
    Ok(u.iter()
        .zip(&approx)
        .map(|(ua, wa)| {
            let diff: Vec<f64> = ua.iter().zip(wa).map(|(x, y)| x - y).collect();
            l2(&diff) / l2(wa)
        })
        .collect())
}

/// Separable test function `ψ(x) χ(x/ε)` for the two-scale pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMode {
    /// Macro wave vector `k`: `ψ(x) = cos(2π k·x / L)`.
    pub macro_wave: Vec<i64>,
    /// Cell wave vector `κ`: `χ(y) = cos(2π κ·y)`.
    pub cell_wave: Vec<i64>,
    pub species: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingPoint {
    pub t: f64,
    pub value: f64,
    /// `∫ v ψ dx · ∫ χ dy` with `v` the homogenized limit (`None` without one).
    pub predicted: Option<f64>,
}

/// `∫ u(t,x) ψ(x − b*t/ε) χ(x/ε) dx` over the trajectory snapshots.
pub fn two_scale_pairing(
    traj: &Trajectory,
    grid: &PeriodicGrid,
    mode: &TestMode,
    b_star: &[f64],
    limit: Option<&HomogenizedSolution>,
) -> Vec<PairingPoint> {
    let eps = traj.eps;
    let wave = |w: &[i64], i: usize| w.get(i).copied().unwrap_or(0) as f64;
    let cell_mean = if mode.cell_wave.iter().all(|&k| k == 0) { 1.0 } else { 0.0 };
    traj.times
        .iter()
        .zip(&traj.fields)
        .map(|(&t, fields)| {
            let shift = drift_offset(b_star, eps, t);
            let psi = |x: &[f64], s: &[f64]| {
                let ph: f64 = (0..grid.d).map(|i| wave(&mode.macro_wave, i) * (x[i] - s[i])).sum();
                (TAU * ph / grid.length).cos()
            };
            let mut value = 0.0;
            for (p, u) in fields[mode.species].iter().enumerate() {
                let x = grid.position(p);
                let chi: f64 = (0..grid.d).map(|i| wave(&mode.cell_wave, i) * x[i] / eps).sum();
                value += u * psi(&x, &shift) * (TAU * chi).cos();
            }
            value *= grid.cell_volume();
            let predicted = limit.map(|h| {
                let v = h.evaluate(t, &vec![0.0; grid.d]);
                let zero = vec![0.0; grid.d];
                let s: f64 = v.iter().enumerate().map(|(p, vx)| vx * psi(&grid.position(p), &zero)).sum();
                s * grid.cell_volume() * cell_mean
            });
            PairingPoint { t, value, predicted }
        })
        .collect()
}

/// Least-squares slope of `log e` against `log ε`.
pub fn fit_order(eps: &[f64], errors: &[f64]) -> Option<f64> {
    if eps.len() < 2 || errors.iter().any(|&e| !(e > NOISE_FLOOR)) {
        return None;
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// Observed order between consecutive `ε` values.
pub fn pair_orders(eps: &[f64], errors: &[f64]) -> Vec<f64> {
    eps.windows(2)
        .zip(errors.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect()
}

/// Strictly decreasing, apart from at most one increase of under 5 %.
pub fn nearly_monotone(errors: &[f64]) -> bool {
    let ups: Vec<f64> = errors.windows(2).filter(|w| w[1] >= w[0]).map(|w| w[1] / w[0]).collect();
    ups.is_empty() || (ups.len() == 1 && ups[0] < 1.05)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Box points per axis.
    pub m: usize,
    pub box_length: f64,
    pub final_time: f64,
    /// `dt = ε² / dt_divisor`.
    pub dt_divisor: f64,
    pub fine_tol: f64,
    pub cell: CellOptions,
    /// Relative size of the drift and eigenvalue perturbations.
    pub perturbation: f64,
}

impl StudyConfig {
    pub fn for_spec(spec: &ProblemSpec) -> Self {
        StudyConfig {
            m: if spec.dimension == 1 { 512 } else { 64 },
            box_length: 1.0,
            final_time: spec.final_time,
            dt_divisor: 20.0,
            fine_tol: 1e-12,
            cell: CellOptions::default(),
            perturbation: 0.1,
        }
    }

    pub fn grid(&self, d: usize) -> Result<PeriodicGrid> {
        PeriodicGrid::new(d, self.m, self.box_length)
    }

    /// Cell resolution for `ε`: one cell node per box node.
    pub fn cell_resolution(&self, eps: f64) -> usize {
        (eps * self.m as f64 / self.box_length).round() as usize
    }

    fn fine_options(&self, eps: f64) -> FineOptions {
        FineOptions {
            dt: eps * eps / self.dt_divisor,
            tol: self.fine_tol,
            ..FineOptions::standard(eps, self.final_time)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointError {
    pub t: f64,
    pub per_species: Vec<f64>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Falsification {
    /// Error at `T` with `b*` scaled by `1 + perturbation` (`None` if `b* = 0`).
    pub drift_perturbed: Option<f64>,
    /// Error at `T` with `λ` scaled by `1 + perturbation` (`None` if `λ = 0`).
    pub lambda_perturbed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub eps: f64,
    pub cell_n: usize,
    pub stencil: Stencil,
    pub lambda: f64,
    pub b_star: Vec<f64>,
    pub dispersion: Vec<Vec<f64>>,
    pub init_weights: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub errors: Vec<CheckpointError>,
    /// Max over species at `T`.
    pub final_error: f64,
    pub falsification: Falsification,
    pub difference_integral: f64,
    pub worst_energy_increase: f64,
    pub min_fine: f64,
    pub min_factorized: f64,
    /// Fraction of the homogenized mass within `L/8` of the box edge at `T`
    /// in the drifting frame.
    pub edge_fraction: f64,
    /// Pairing of `v_ε` with `κ = 1` (tends to zero).
    pub oscillating_pairing: f64,
    /// Pairing of `v_ε` with `κ = 0` against its limit.
    pub mean_pairing: f64,
    pub mean_pairing_limit: f64,
    /// `‖u_ε(T)‖_{L²}` per species, reported without any asserted rate.
    pub fine_norm: Vec<f64>,
    pub diagnostics: CellDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub config: StudyConfig,
    pub eps_list: Vec<f64>,
    pub runs: Vec<EpsRun>,
    /// Least-squares order of the final-time error (`None` below the noise floor).
    pub observed_order: Option<f64>,
    pub pair_orders: Vec<f64>,
    pub monotone: bool,
    pub strictly_monotone: bool,
    /// Successive ratios of the species-difference integral.
    pub difference_ratios: Vec<f64>,
}

impl ConvergenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per `ε`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "eps,cell_n,lambda,b_star,dispersion,final_error,drift_perturbed,lambda_perturbed,difference_integral,worst_energy_increase,min_fine,min_factorized\n",
        );
        let opt = |o: Option<f64>| o.map_or(String::new(), |v| format!("{v:?}"));
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{:?},{},{:?},{},{},{:?},{},{},{:?},{:?},{:?},{:?}",
                r.eps,
                r.cell_n,
                r.lambda,
                join(&r.b_star),
                join(&r.dispersion.concat()),
                r.final_error,
                opt(r.falsification.drift_perturbed),
                opt(r.falsification.lambda_perturbed),
                r.difference_integral,
                r.worst_energy_increase,
                r.min_fine,
                r.min_factorized
            );
        }
        s
    }
}

fn max_error(
    traj: &Trajectory,
    hom: &HomogenizedSolution,
    pair: &Eigenpair,
    b_star: &[f64],
    lambda: f64,
    t: f64,
) -> Result<f64> {
    Ok(moving_frame_error(traj, hom, pair, b_star, lambda, traj.eps, t)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Whole pipeline at one `ε`.
pub fn run_eps(spec: &ProblemSpec, eps: f64, config: &StudyConfig) -> Result<EpsRun> {
    let grid = config.grid(spec.dimension)?;
    let cell: CellSolution = solve_cell(spec, config.cell_resolution(eps), &config.cell)?;
    let model = &cell.model;
    let pair = &cell.eigenpair;
    let opts = config.fine_options(eps);
    let fine = solve_fine(spec, eps, &grid, &opts)?;
    let fact = solve_factorized(spec, pair, eps, &grid, &opts)?;
    let v0 = homogenized_initial(&spec.initial_data, &model.init_weights, &grid);
    let hom = solve_homogenized(&v0, &grid, &model.dispersion, &fine.times)?;
    let (b, lambda) = (&model.b_star, model.lambda);

    let mut errors = Vec::new();
    for &t in &fine.times[1..] {
        let per_species = moving_frame_error(&fine, &hom, pair, b, lambda, eps, t)?;
        let max = per_species.iter().copied().fold(0.0, f64::max);
        errors.push(CheckpointError { t, per_species, max });
    }
    let t_end = *fine.times.last().expect("final snapshot");
    let final_error = errors.last().map_or(0.0, |e| e.max);
    let scale = 1.0 + config.perturbation;
    let falsification = Falsification {
        drift_perturbed: if b.iter().any(|&x| x.abs() > NEGLIGIBLE) {
            let bp: Vec<f64> = b.iter().map(|x| x * scale).collect();
            Some(max_error(&fine, &hom, pair, &bp, lambda, t_end)?)
        } else {
            None
        },
        lambda_perturbed: if lambda.abs() > NEGLIGIBLE {
            Some(max_error(&fine, &hom, pair, b, lambda * scale, t_end)?)
        } else {
            None
        },
    };
    let oscillating = TestMode {
        macro_wave: vec![1; spec.dimension],
        cell_wave: vec![1; spec.dimension],
        species: 0,
    };
    let mean = TestMode {
        cell_wave: vec![0; spec.dimension],
        ..oscillating.clone()
    };
    let osc = two_scale_pairing(&fact, &grid, &oscillating, b, None);
    let avg = two_scale_pairing(&fact, &grid, &mean, b, Some(&hom));
    let last = |p: &[PairingPoint]| p.last().cloned().expect("final snapshot");
    Ok(EpsRun {
        eps,
        cell_n: pair.n,
        stencil: fine.stencil,
        lambda,
        b_star: b.clone(),
        dispersion: model.dispersion.clone(),
        init_weights: model.init_weights.clone(),
        dt: fine.dt,
        steps: fine.steps,
        errors,
        final_error,
        falsification,
        difference_integral: fact.difference_integral,
        worst_energy_increase: worst_energy_increase(&fact.energy),
        min_fine: fine.min_value,
        min_factorized: fact.min_value,
        edge_fraction: hom.edge_fraction(t_end, &drift_offset(b, eps, t_end)),
        oscillating_pairing: last(&osc).value,
        mean_pairing: last(&avg).value,
        mean_pairing_limit: last(&avg).predicted.unwrap_or(f64::NAN),
        fine_norm: fine.final_fields().iter().map(|u| l2(u) * grid.cell_volume().sqrt()).collect(),
        diagnostics: model.diagnostics.clone(),
    })
}

/// Runs [`run_eps`] for every `ε` on up to `workers` threads and assembles
/// the report.  Results do not depend on `workers`.
pub fn convergence_study(
    label: &str,
    spec: &ProblemSpec,
    eps_list: &[f64],
    config: &StudyConfig,
    workers: usize,
) -> Result<ConvergenceReport> {
    if eps_list.len() < 3 || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput(
            "the study needs at least three strictly decreasing eps values".into(),
        ));
    }
    let workers = workers.clamp(1, eps_list.len());
    let mut slots: Vec<Option<Result<EpsRun>>> = (0..eps_list.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in slots.chunks_mut(eps_list.len().div_ceil(workers)).enumerate() {
            let start = w * eps_list.len().div_ceil(workers);
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_eps(spec, eps_list[start + i], config));
                }
            });
        }
    });
    let runs = slots
        .into_iter()
        .map(|s| s.expect("every slot is filled"))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
    let diffs: Vec<f64> = runs.iter().map(|r| r.difference_integral).collect();
    Ok(ConvergenceReport {
        label: label.to_string(),
        config: config.clone(),
        eps_list: eps_list.to_vec(),
        observed_order: fit_order(eps_list, &errors),
        pair_orders: pair_orders(eps_list, &errors),
        monotone: nearly_monotone(&errors),
        strictly_monotone: errors.windows(2).all(|w| w[1] < w[0]),
        difference_ratios: diffs.windows(2).map(|w| w[0] / w[1]).collect(),
        runs,
    })
}
