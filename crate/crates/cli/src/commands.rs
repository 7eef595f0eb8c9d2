//! One function per subcommand.

use crate::artifacts::{read, read_json, sha256_hex, CliError, CliResult, Manifest, Outputs};
use crate::{CellArgs, Common, EigenArgs, HomogenizeArgs, SimulateArgs, ValidateArgs};
use homog::cell::{cell_from_eigenpair, CellOptions, CellSolution, EffectiveModel};
use homog::effective::{homogenized_initial, reconstruct, reconstruct_with_corrector, solve_homogenized};
use homog::fine::{solve_factorized, solve_fine, FineOptions, Trajectory};
use homog::grid::{build_grid, sample_fields, PeriodicGrid};
use homog::problem::ProblemSpec;
use homog::spectral::{assemble_primal_with, compute_eigenpair, Eigenpair};
use homog::validate::{convergence_study, StudyConfig};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
pub struct EigenArtifact {
    pub problem_sha256: String,
    pub eigenpair: Eigenpair,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EffectiveArtifact {
    pub problem_sha256: String,
    #[serde(flatten)]
    pub model: EffectiveModel,
}

struct Problem {
    spec: ProblemSpec,
    digest: String,
}

fn load_problem(path: &Path) -> CliResult<Problem> {
    let bytes = read(path)?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::BadArtifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(Problem {
        spec: ProblemSpec::from_json(&text)?,
        digest: sha256_hex(&bytes),
    })
}

fn cell_options(c: &Common) -> CellOptions {
    let mut opts = CellOptions::default();
    opts.eigen.seed = c.seed;
    opts.corrector.seed = c.seed;
    if let Some(t) = c.eigen_tol {
        opts.eigen.tol = t;
    }
    if let Some(t) = c.corrector_tol {
        opts.corrector.tol = t;
    }
    opts
}

fn default_cell_n(d: usize) -> usize {
    if d == 1 {
        64
    } else {
        32
    }
}

fn default_box_m(d: usize) -> usize {
    if d == 1 {
        512
    } else {
        64
    }
}

fn load_eigen(path: &Path, problem: &Problem, manifest: &mut Manifest) -> CliResult<Eigenpair> {
    let (artifact, digest): (EigenArtifact, String) = read_json(path)?;
    if artifact.problem_sha256 != problem.digest {
        return Err(CliError::BadArtifact {
            path: path.to_path_buf(),
            message: "eigen artifact was computed for a different problem file".into(),
        });
    }
    manifest.inputs.insert("eigen".into(), digest);
    Ok(artifact.eigenpair)
}

/// Cell stage from a stored eigenpair, reusing its stencil and options.
fn cell_from_stored(spec: &ProblemSpec, pair: Eigenpair, opts: &CellOptions) -> CliResult<CellSolution> {
    let grid = build_grid(spec.dimension, pair.n)?;
    let fields = sample_fields(spec, &grid)?;
    let system = assemble_primal_with(&fields, pair.stencil);
    let eigen_opts = pair.options;
    Ok(cell_from_eigenpair(fields, system, pair, &opts.corrector, &eigen_opts)?)
}

fn fmt_row(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

pub fn eigen(args: &EigenArgs, mut manifest: Manifest) -> CliResult<()> {
    let problem = load_problem(&args.common.problem)?;
    manifest.inputs.insert("problem".into(), problem.digest.clone());
    let n = args.n.unwrap_or(default_cell_n(problem.spec.dimension));
    let grid = build_grid(problem.spec.dimension, n)?;
    let fields = sample_fields(&problem.spec, &grid)?;
    let (_, pair) = compute_eigenpair(&fields, &cell_options(&args.common).eigen)?;
    let mut out = Outputs::open(&args.common.out)?;
    out.write_json(
        "eigen.json",
        &EigenArtifact {
            problem_sha256: problem.digest,
            eigenpair: pair,
        },
    )?;
    out.finish(manifest)
}

pub fn cell(args: &CellArgs, mut manifest: Manifest) -> CliResult<()> {
    let problem = load_problem(&args.common.problem)?;
    manifest.inputs.insert("problem".into(), problem.digest.clone());
    let opts = cell_options(&args.common);
    let sol = match &args.eigen {
        Some(path) => {
            let pair = load_eigen(path, &problem, &mut manifest)?;
            cell_from_stored(&problem.spec, pair, &opts)?
        }
        None => {
            let n = args.n.unwrap_or(default_cell_n(problem.spec.dimension));
            homog::cell::solve_cell(&problem.spec, n, &opts)?
        }
    };
    let mut out = Outputs::open(&args.common.out)?;
    out.write_json(
        "effective.json",
        &EffectiveArtifact {
            problem_sha256: problem.digest,
            model: sol.model,
        },
    )?;
    out.finish(manifest)
}

fn box_grid(spec: &ProblemSpec, b: &crate::BoxArgs) -> CliResult<PeriodicGrid> {
    Ok(PeriodicGrid::new(
        spec.dimension,
        b.m.unwrap_or(default_box_m(spec.dimension)),
        b.box_length,
    )?)
}

fn field_rows(csv: &mut String, t: f64, fields: &[Vec<f64>]) {
    for (a, f) in fields.iter().enumerate() {
        for (p, v) in f.iter().enumerate() {
            let _ = writeln!(csv, "{t:?},{p},{a},{v:?}");
        }
    }
}

pub fn homogenize(args: &HomogenizeArgs, mut manifest: Manifest) -> CliResult<()> {
    let problem = load_problem(&args.common.problem)?;
    manifest.inputs.insert("problem".into(), problem.digest.clone());
    let (effective, digest): (EffectiveArtifact, String) = read_json(&args.effective)?;
    manifest.inputs.insert("effective".into(), digest);
    let spec = &problem.spec;
    let grid = box_grid(spec, &args.domain)?;
    let t_end = args.domain.final_time.unwrap_or(spec.final_time);
    let k = args.snapshots.max(1);
    let times: Vec<f64> = (0..k)
        .map(|i| if k == 1 { t_end } else { t_end * i as f64 / (k - 1) as f64 })
        .collect();
    let model = &effective.model;
    let v0 = homogenized_initial(&spec.initial_data, &model.init_weights, &grid);
    let hom = solve_homogenized(&v0, &grid, &model.dispersion, &times)?;

    let mut csv = String::new();
    let _ = writeln!(csv, "# dispersion={:?} box={} m={}", model.dispersion, grid.length, grid.n);
    let coords: Vec<String> = (0..grid.d).map(|i| format!("x{i}")).collect();
    let _ = writeln!(csv, "t,{},v", coords.join(","));
    for (t, v) in times.iter().zip(&hom.fields) {
        for (p, value) in v.iter().enumerate() {
            let _ = writeln!(csv, "{t:?},{},{value:?}", fmt_row(&grid.position(p)));
        }
    }
    let mut out = Outputs::open(&args.common.out)?;
    out.write("homog.csv", csv.as_bytes())?;

    if let Some(eps) = args.eps {
        let path = args.eigen.as_ref().ok_or_else(|| {
            CliError::Core(homog::Error::InvalidInput("--eps requires --eigen".into()))
        })?;
        let pair = load_eigen(path, &problem, &mut manifest)?;
        let mut csv = String::new();
        let _ = writeln!(
            csv,
            "# eps={eps} lambda={} b_star={:?} with_corrector={}",
            model.lambda, model.b_star, args.with_corrector
        );
        csv.push_str("t,node,species,value\n");
        let correctors = if args.with_corrector {
            Some(cell_from_stored(spec, pair.clone(), &cell_options(&args.common))?.correctors)
        } else {
            None
        };
        for &t in &times {
            let u = match &correctors {
                Some(c) => reconstruct_with_corrector(&hom, &pair, c, model.lambda, &model.b_star, eps, t)?,
                None => reconstruct(&hom, &pair, model.lambda, &model.b_star, eps, t)?,
            };
            field_rows(&mut csv, t, &u);
        }
        out.write(&format!("reconstruct_{eps}.csv"), csv.as_bytes())?;
    }
    out.finish(manifest)
}

fn write_trajectory(out: &mut Outputs, traj: &Trajectory, opts: &FineOptions) -> CliResult<()> {
    let eps = traj.eps;
    let header = format!(
        "# eps={eps} dt={:?} steps={} stencil={} factorized={} tol={:?}\n",
        traj.dt, traj.steps, traj.stencil, traj.factorized, opts.tol
    );
    let mut csv = header.clone();
    csv.push_str("t,node,species,value\n");
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        field_rows(&mut csv, *t, f);
    }
    out.write(&format!("traj_{eps}.csv"), csv.as_bytes())?;
    let mut csv = header;
    csv.push_str("t,energy\n");
    for (t, e) in &traj.energy {
        let _ = writeln!(csv, "{t:?},{e:?}");
    }
    out.write(&format!("energy_{eps}.csv"), csv.as_bytes())
}

pub fn simulate(args: &SimulateArgs, mut manifest: Manifest) -> CliResult<()> {
    let problem = load_problem(&args.common.problem)?;
    manifest.inputs.insert("problem".into(), problem.digest.clone());
    let spec = &problem.spec;
    let grid = box_grid(spec, &args.domain)?;
    let eps = args.eps;
    let t_end = args.domain.final_time.unwrap_or(spec.final_time);
    let opts = FineOptions {
        dt: args.dt.unwrap_or(eps * eps / 20.0),
        ..FineOptions::standard(eps, t_end)
    };
    let traj = if args.factorized {
        let pair = match &args.eigen {
            Some(path) => load_eigen(path, &problem, &mut manifest)?,
            None => {
                let q = (eps / grid.h).round() as usize;
                let fields = sample_fields(spec, &build_grid(spec.dimension, q)?)?;
                compute_eigenpair(&fields, &cell_options(&args.common).eigen)?.1
            }
        };
        solve_factorized(spec, &pair, eps, &grid, &opts)?
    } else {
        solve_fine(spec, eps, &grid, &opts)?
    };
    let mut out = Outputs::open(&args.common.out)?;
    write_trajectory(&mut out, &traj, &opts)?;
    out.finish(manifest)
}

pub fn validate(args: &ValidateArgs, mut manifest: Manifest) -> CliResult<()> {
    let problem = load_problem(&args.common.problem)?;
    manifest.inputs.insert("problem".into(), problem.digest.clone());
    let spec = &problem.spec;
    let mut config = StudyConfig::for_spec(spec);
    config.box_length = args.domain.box_length;
    if let Some(m) = args.domain.m {
        config.m = m;
    }
    if let Some(t) = args.domain.final_time {
        config.final_time = t;
    }
    config.dt_divisor = args.dt_divisor;
    config.cell = cell_options(&args.common);
    let eps = args.eps.clone().unwrap_or_else(|| spec.epsilons.clone());
    let label = args
        .common
        .problem
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = convergence_study(&label, spec, &eps, &config, args.workers)?;
    let mut out = Outputs::open(&args.common.out)?;
    out.write("report.json", (report.to_json() + "\n").as_bytes())?;
    out.write("report.csv", report.to_csv().as_bytes())?;
    out.finish(manifest)
}
