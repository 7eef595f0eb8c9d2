//! Implicit-Euler solution of the ε-scaled system on the periodic box, in
//! the original unknowns `u` and in the factorized unknowns `v`.

use crate::error::{Error, Result};
use crate::factorize::{nested_map, tile, FactorizedOperator};
use crate::grid::{assemble_system, sample_scaled, PeriodicGrid};
use crate::krylov::{gmres, Ilu0, SolveOptions};
use crate::problem::ProblemSpec;
use crate::sparse::{CsrMatrix, Stencil};
use crate::spectral::Eigenpair;
use serde::{Deserialize, Serialize};

/// Most negative value tolerated before a positivity failure is raised.
pub const POSITIVITY_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineOptions {
    /// Requested step; the actual step is `T / ceil(T / dt)`.
    pub dt: f64,
    pub final_time: f64,
    /// Additional snapshot instants in `(0, T)`, rounded to the nearest step.
    pub checkpoints: Vec<f64>,
    pub tol: f64,
}

impl FineOptions {
    /// `dt = ε²/20`, snapshots at `T/3`, `2T/3` and `T`.
    pub fn standard(eps: f64, final_time: f64) -> Self {
        FineOptions {
            dt: eps * eps / 20.0,
            final_time,
            checkpoints: vec![final_time / 3.0, 2.0 * final_time / 3.0],
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub eps: f64,
    pub dt: f64,
    pub steps: usize,
    pub factorized: bool,
    pub stencil: Stencil,
    /// Snapshot instants, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// `fields[snapshot][α][node]`.
    pub fields: Vec<Vec<Vec<f64>>>,
    /// `(t, E(t))` at `t = 0` and after every step; the weight is `φφ*ρ` for
    /// factorized runs and `ρ` otherwise.
    pub energy: Vec<(f64, f64)>,
    /// `∫₀ᵀ Σ_{α,β} ‖v_α − v_β‖² dt` (factorized runs only).
    pub difference_integral: f64,
    pub min_value: f64,
    pub krylov_iterations: usize,
}

impl Trajectory {
    pub fn snapshot(&self, t: f64) -> Result<&Vec<Vec<f64>>> {
        let (i, closest) = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, &s)| (i, s))
            .unwrap_or((0, f64::NAN));
        if (closest - t).abs() > 1e-12 * t.abs().max(1.0) {
            return Err(Error::TimeMismatch { requested: t, closest });
        }
        Ok(&self.fields[i])
    }

    pub fn final_fields(&self) -> &Vec<Vec<f64>> {
        self.fields.last().expect("trajectory has at least the initial snapshot")
    }
}

/// `½ Σ_α h^d Σ_nodes m_α v_α²` with `m = φφ*ρ` laid out species-major.
pub fn energy(v: &[Vec<f64>], mass: &[f64], grid: &PeriodicGrid) -> f64 {
    let len = grid.len();
    let mut s = 0.0;
    for (a, va) in v.iter().enumerate() {
        for (p, x) in va.iter().enumerate() {
            s += mass[a * len + p] * x * x;
        }
    }
    0.5 * grid.cell_volume() * s
}

/// `Σ_{α≠β} ‖v_α − v_β‖²_{L²}` over ordered pairs.
pub fn species_spread(v: &[Vec<f64>], grid: &PeriodicGrid) -> f64 {
    let mut s = 0.0;
    for a in 0..v.len() {
        for b in 0..v.len() {
            if a != b {
                s += v[a].iter().zip(&v[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
        }
    }
    grid.cell_volume() * s
}

fn macro_nodes_per_period(grid: &PeriodicGrid, eps: f64) -> Result<usize> {
    let ratio = eps / grid.h;
    let q = ratio.round();
    if (ratio - q).abs() > 1e-9 * ratio || q < 4.0 {
        return Err(Error::ResolutionMismatch(format!(
            "eps/dx = {ratio}; at least 4 whole macro nodes per period are required"
        )));
    }
    Ok(q as usize)
}

/// Initial data `u_in` sampled on the box, `[α][node]`.
pub fn initial_fields(spec: &ProblemSpec, grid: &PeriodicGrid) -> Vec<Vec<f64>> {
    spec.initial_data
        .iter()
        .map(|u| (0..grid.len()).map(|p| u.eval(&grid.position(p), grid.length)).collect())
        .collect()
}

/// `A_ε = ε⁻¹ b(x/ε)·∇ − div(D(x/ε)∇) + ε⁻² Π(x/ε)` on the box.
pub fn assemble_fine(spec: &ProblemSpec, eps: f64, grid: &PeriodicGrid) -> Result<(CsrMatrix, Vec<f64>, Stencil)> {
    macro_nodes_per_period(grid, eps)?;
    let fields = sample_scaled(spec, grid, eps)?;
    let (a, stencil) = assemble_system(&fields, 1.0 / eps, 1.0 / (eps * eps))?;
    Ok((a, fields.rho.concat(), stencil))
}

struct Stepper {
    m: usize,
    dt: f64,
    snapshot_steps: Vec<usize>,
}

impl Stepper {
    fn new(opts: &FineOptions) -> Result<Self> {
        if !(opts.dt > 0.0) || !(opts.final_time > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt = {} and T = {} must be positive",
                opts.dt, opts.final_time
            )));
        }
        let m = ((opts.final_time / opts.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = opts.final_time / m as f64;
        let mut snapshot_steps: Vec<usize> = opts
            .checkpoints
            .iter()
            .map(|t| (t / dt).round() as usize)
            .filter(|&k| k > 0 && k < m)
            .collect();
        snapshot_steps.push(m);
        snapshot_steps.sort_unstable();
        snapshot_steps.dedup();
        Ok(Stepper { m, dt, snapshot_steps })
    }
}

fn split(x: &[f64], species: usize) -> Vec<Vec<f64>> {
    x.chunks(x.len() / species).map(|c| c.to_vec()).collect()
}

/// Runs `(W/dt + K) x^{k+1} = (W/dt) x^k`; `observe` sees every new iterate.
fn integrate(
    k: &CsrMatrix,
    weight: &[f64],
    x0: Vec<f64>,
    species: usize,
    opts: &FineOptions,
    stage: &'static str,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<(Stepper, Vec<f64>, Vec<Vec<Vec<f64>>>, (f64, usize), usize)> {
    let stepper = Stepper::new(opts)?;
    let dt = stepper.dt;
    let system = k.add_diagonal(&weight.iter().map(|w| w / dt).collect::<Vec<_>>());
    let pc = Ilu0::new(&system)?;
    let solve = SolveOptions {
        tol: opts.tol,
        floor: opts.tol * 1e2,
        restart: 40,
        stage,
        ..SolveOptions::default()
    };
    let mut x = x0;
    let mut times = vec![0.0];
    let mut fields = vec![split(&x, species)];
    let mut min_value = (f64::INFINITY, 0);
    track_min(&x, &mut min_value);
    let mut iterations = 0;
    let mut next = 0;
    for step in 1..=stepper.m {
        let rhs: Vec<f64> = x.iter().zip(weight).map(|(v, w)| v * w / dt).collect();
        let mut y = x.clone();
        let stats = gmres(&system, &rhs, &mut y, &pc, &solve, None).map_err(|e| match e {
            Error::NoConvergence { residual, .. } => Error::NoConvergence {
                stage,
                iterations: step,
                residual,
            },
            e => e,
        })?;
        iterations += stats.iterations;
        x = y;
        track_min(&x, &mut min_value);
        let t = step as f64 * dt;
        observe(t, &x);
        if stepper.snapshot_steps.get(next) == Some(&step) {
            times.push(t);
            fields.push(split(&x, species));
            next += 1;
        }
    }
    Ok((stepper, times, fields, min_value, iterations))
}

fn track_min(x: &[f64], min: &mut (f64, usize)) {
    for (i, &v) in x.iter().enumerate() {
        if v < min.0 {
            *min = (v, i);
        }
    }
}

/// Fails if nonnegative data went below [`POSITIVITY_FLOOR`].
fn check_positivity(x0: &[f64], min: (f64, usize), len: usize) -> Result<f64> {
    if x0.iter().all(|&v| v >= 0.0) && min.0 < POSITIVITY_FLOOR {
        return Err(Error::PositivityFailure {
            species: min.1 / len,
            node: min.1 % len,
            value: min.0,
        });
    }
    Ok(min.0)
}

/// Direct solution for `u_ε` on the box.
pub fn solve_fine(spec: &ProblemSpec, eps: f64, grid: &PeriodicGrid, opts: &FineOptions) -> Result<Trajectory> {
    let (a, rho, stencil) = assemble_fine(spec, eps, grid)?;
    let u0 = initial_fields(spec, grid).concat();
    let species = spec.species;
    let mut trace = vec![(0.0, energy(&split(&u0, species), &rho, grid))];
    let (stepper, times, fields, min_value, iterations) =
        integrate(&a, &rho, u0.clone(), species, opts, "fine", |t, x| {
            trace.push((t, energy(&split(x, species), &rho, grid)));
        })?;
    let min_value = check_positivity(&u0, min_value, grid.len())?;
    Ok(Trajectory {
        eps,
        dt: stepper.dt,
        steps: stepper.m,
        factorized: false,
        stencil,
        times,
        fields,
        energy: trace,
        difference_integral: 0.0,
        min_value,
        krylov_iterations: iterations,
    })
}

/// Factorized operator `ε⁻² Ã` on the box for an eigenpair computed on a cell
/// grid with exactly `ε/dx` nodes per axis, so that the tiled eigenvector is
/// an exact discrete eigenvector of the box operator.
pub fn factorized_box_operator(
    spec: &ProblemSpec,
    pair: &Eigenpair,
    eps: f64,
    grid: &PeriodicGrid,
) -> Result<(FactorizedOperator, Stencil)> {
    let q = macro_nodes_per_period(grid, eps)?;
    if pair.n != q {
        return Err(Error::ResolutionMismatch(format!(
            "eigenpair was computed on {} cell nodes but the box has {q} nodes per period",
            pair.n
        )));
    }
    let (a, rho, stencil) = assemble_fine(spec, eps, grid)?;
    if stencil != pair.stencil {
        return Err(Error::ResolutionMismatch(format!(
            "box operator uses the {stencil} stencil, the eigenpair the {} stencil",
            pair.stencil
        )));
    }
    let map = nested_map(grid, pair.n, eps)?;
    let phi = tile(&pair.phi, &map).concat();
    let phi_star = tile(&pair.phi_star, &map).concat();
    Ok((FactorizedOperator::new(&a, &rho, &phi, &phi_star, *grid, spec.species), stencil))
}

/// Solution for `v_ε` of the factorized system, with energy trace and
/// species-difference integral.
pub fn solve_factorized(
    spec: &ProblemSpec,
    pair: &Eigenpair,
    eps: f64,
    grid: &PeriodicGrid,
    opts: &FineOptions,
) -> Result<Trajectory> {
    let (op, stencil) = factorized_box_operator(spec, pair, eps, grid)?;
    let map = nested_map(grid, pair.n, eps)?;
    let u0 = initial_fields(spec, grid);
    let v0: Vec<f64> = u0
        .iter()
        .zip(&pair.phi)
        .flat_map(|(u, phi)| u.iter().zip(&map).map(move |(x, &c)| x / phi[c]).collect::<Vec<_>>())
        .collect();
    let species = spec.species;
    let mut trace = vec![(0.0, energy(&split(&v0, species), &op.mass, grid))];
    let mut spread = 0.0;
    let mut last_t = 0.0;
    let (stepper, times, fields, min_value, iterations) =
        integrate(&op.matrix, &op.mass, v0.clone(), species, opts, "factorized", |t, x| {
            let v = split(x, species);
            trace.push((t, energy(&v, &op.mass, grid)));
            spread += (t - last_t) * species_spread(&v, grid);
            last_t = t;
        })?;
    let min_value = check_positivity(&v0, min_value, grid.len())?;
    Ok(Trajectory {
        eps,
        dt: stepper.dt,
        steps: stepper.m,
        factorized: true,
        stencil,
        times,
        fields,
        energy: trace,
        difference_integral: spread,
        min_value,
        krylov_iterations: iterations,
    })
}

/// Largest relative energy increase between consecutive steps (≤ 0 when the
/// trace is non-increasing).
pub fn worst_energy_increase(trace: &[(f64, f64)]) -> f64 {
    trace
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / w[0].1.abs().max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::Fourier;
    use crate::factorize::unfactor;
    use crate::fixtures;
    use crate::spectral::{compute_eigenpair, EigenOptions};

    fn box_grid(m: usize) -> PeriodicGrid {
        PeriodicGrid::new(1, m, 1.0).unwrap()
    }

    #[test]
    fn step_rounding() {
        let s = Stepper::new(&FineOptions {
            dt: 0.003,
            final_time: 0.01,
            checkpoints: vec![0.005],
            tol: 1e-12,
        })
        .unwrap();
        assert_eq!(s.m, 4);
        assert_eq!(s.dt, 0.0025);
        assert_eq!(s.snapshot_steps, vec![2, 4]);
        let exact = Stepper::new(&FineOptions::standard(0.125, 0.01)).unwrap();
        assert_eq!(exact.m, 13);
    }

    #[test]
    fn energy_examples() {
        let g = box_grid(16);
        let mass = vec![1.0; 16];
        assert_eq!(energy(&[vec![0.0; 16]], &mass, &g), 0.0);
        assert!((energy(&[vec![1.0; 16]], &mass, &g) - 0.5).abs() < 1e-15);
        let v: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let w: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        assert!((energy(&[w], &mass, &g) - 4.0 * energy(&[v], &mass, &g)).abs() < 1e-12);
    }

    #[test]
    fn constant_decoupled_matches_fourier() {
        let spec = fixtures::constant_decoupled();
        let eps = 0.125;
        let g = box_grid(64);
        let opts = FineOptions {
            dt: 1e-5,
            final_time: 0.01,
            checkpoints: vec![],
            tol: 1e-12,
        };
        let traj = solve_fine(&spec, eps, &g, &opts).unwrap();
        // Oracles: the same semi-discrete system diagonalized by the DFT,
        // whose Laplacian symbol is (2 − 2cos(2πk h))/h², propagated once by
        // the implicit-Euler amplification factor and once exactly in time.
        let u0 = initial_fields(&spec, &g);
        let f = Fourier::new(&g);
        let hat = f.forward(&u0[0]);
        let t = traj.times[1];
        let h = g.h;
        let evolve = |amp: &dyn Fn(f64) -> f64| {
            let z: Vec<_> = hat
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let symbol = (2.0 - 2.0 * (std::f64::consts::TAU * f.wave(i) * h).cos()) / (h * h);
                    z * amp(symbol + 2.0 / (eps * eps))
                })
                .collect();
            f.inverse(&z)
        };
        let stepped = evolve(&|s| (1.0 + s * traj.dt).powi(-(traj.steps as i32)));
        let exact = evolve(&|s| (-s * t).exp());
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap(&traj.fields[1][0], &stepped) < 1e-10);
        // First-order time error: (a²dt·T/2)·e^{−aT} with a = 2/ε².
        assert!(gap(&traj.fields[1][0], &exact) < 3e-4);
    }

    #[test]
    fn factorized_equals_fine_on_sin_convection() {
        let spec = fixtures::sin_convection();
        let eps = 0.125;
        let g = box_grid(256);
        let q = 32;
        let fields = crate::grid::sample_fields(&spec, &crate::grid::build_grid(1, q).unwrap()).unwrap();
        let (_, pair) = compute_eigenpair(&fields, &EigenOptions::default()).unwrap();
        let opts = FineOptions::standard(eps, 0.01);
        let u = solve_fine(&spec, eps, &g, &opts).unwrap();
        let v = solve_factorized(&spec, &pair, eps, &g, &opts).unwrap();
        let back = unfactor(v.final_fields(), &pair, &g, eps, 0.01).unwrap();
        let num: f64 = back[0].iter().zip(&u.final_fields()[0]).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = u.final_fields()[0].iter().map(|a| a * a).sum();
        assert!((num / den).sqrt() < 1e-5);
        assert!(worst_energy_increase(&v.energy) <= 1e-12);
        assert!(v.min_value >= POSITIVITY_FLOOR);
    }

    #[test]
    fn constant_state_is_stationary() {
        let mut spec = fixtures::constant_pair();
        for u in &mut spec.initial_data {
            *u = crate::problem::InitialProfile::Constant { value: 1.0 };
        }
        let eps = 0.125;
        let g = box_grid(64);
        let fields = crate::grid::sample_fields(&spec, &crate::grid::build_grid(1, 8).unwrap()).unwrap();
        let (_, pair) = compute_eigenpair(&fields, &EigenOptions::default()).unwrap();
        let v = solve_factorized(&spec, &pair, eps, &g, &FineOptions::standard(eps, 0.01)).unwrap();
        let v0 = &v.fields[0];
        for (a, b) in v.final_fields().iter().flatten().zip(v0.iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn resolution_rules() {
        let spec = fixtures::sin_convection();
        let g = box_grid(64);
        assert!(matches!(assemble_fine(&spec, 0.03, &g), Err(Error::ResolutionMismatch(_))));
        assert!(matches!(assemble_fine(&spec, 2.0 / 64.0, &g), Err(Error::ResolutionMismatch(_))));
    }
}
