//! Reference problems used by the tests, the guide and the shipped JSON files.

use crate::fourier::FourierField;
use crate::problem::{InitialProfile, ProblemSpec};

const EPSILONS: [f64; 3] = [0.125, 0.0625, 0.03125];

fn c(v: f64) -> FourierField {
    FourierField::constant(v)
}

fn bump(d: usize) -> InitialProfile {
    InitialProfile::Gaussian {
        center: vec![0.5; d],
        width: 0.1,
        amplitude: 1.0,
    }
}

fn isotropic(d: usize, value: FourierField) -> Vec<Vec<FourierField>> {
    (0..d)
        .map(|k| {
            (0..d)
                .map(|l| if k == l { value.clone() } else { c(0.0) })
                .collect()
        })
        .collect()
}

fn single(
    rho: FourierField,
    b: FourierField,
    diffusion: FourierField,
    pi: FourierField,
) -> ProblemSpec {
    ProblemSpec {
        dimension: 1,
        species: 1,
        rho: vec![rho],
        b: vec![vec![b]],
        diffusion: vec![isotropic(1, diffusion)],
        pi: vec![vec![pi]],
        initial_data: vec![bump(1)],
        final_time: 0.01,
        epsilons: EPSILONS.to_vec(),
    }
}

/// One species, `ρ = 1`, `b = 0`, `D = 1`, `Π = 2`.
pub fn constant_decoupled() -> ProblemSpec {
    single(c(1.0), c(0.0), c(1.0), c(2.0))
}

/// One species with constant velocity `b0`, constant diffusion `d0` and no reaction.
pub fn constant_drift(b0: f64, d0: f64) -> ProblemSpec {
    single(c(1.0), c(b0), c(d0), c(0.0))
}

/// One species advected by the divergence-free cell velocity `sin(2πy)`.
pub fn sin_convection() -> ProblemSpec {
    single(
        c(1.0),
        FourierField::zero().with_mode(&[1], 0.0, 1.0),
        c(1.0),
        c(0.0),
    )
}

/// Two species, `ρ = (1, 1)`, `b = 0`, `D = (1, 3)`, `Π = [[1, -1], [-1, 1]]`.
pub fn constant_pair() -> ProblemSpec {
    ProblemSpec {
        dimension: 1,
        species: 2,
        rho: vec![c(1.0), c(1.0)],
        b: vec![vec![c(0.0)], vec![c(0.0)]],
        diffusion: vec![isotropic(1, c(1.0)), isotropic(1, c(3.0))],
        pi: vec![vec![c(1.0), c(-1.0)], vec![c(-1.0), c(1.0)]],
        initial_data: vec![bump(1), bump(1)],
        final_time: 0.01,
        epsilons: EPSILONS.to_vec(),
    }
}

/// Two cooperative species with oscillating coupling, species-dependent
/// density and diffusion, and a net drift.
///
/// The coupling off-diagonals are `-1 ± 0.5 sin(2πy)`; the diagonal carries a
/// small row-sum imbalance so that the principal eigenvalue is nonzero.
pub fn two_species() -> ProblemSpec {
    ProblemSpec {
        dimension: 1,
        species: 2,
        rho: vec![c(1.0), c(1.5).with_mode(&[1], 0.25, 0.0)],
        b: vec![
            vec![c(0.3).with_mode(&[1], 0.0, 1.0)],
            vec![c(0.1).with_mode(&[1], 0.5, 0.0)],
        ],
        diffusion: vec![
            isotropic(1, c(1.0)),
            isotropic(1, c(0.5).with_mode(&[1], 0.2, 0.0)),
        ],
        pi: vec![
            vec![c(1.05), c(-1.0).with_mode(&[1], 0.0, 0.5)],
            vec![c(-1.0).with_mode(&[1], 0.0, -0.5), c(1.0)],
        ],
        initial_data: vec![bump(1), bump(1)],
        final_time: 0.01,
        epsilons: EPSILONS.to_vec(),
    }
}

/// Two-dimensional single-species problem with full-tensor diffusion and a
/// cellular velocity field.
pub fn cellular_2d() -> ProblemSpec {
    // b = (sin 2πy1 cos 2πy2, -cos 2πy1 sin 2πy2) + (0.2, 0): divergence free.
    let b0 = c(0.2)
        .with_mode(&[1, 1], 0.0, 0.5)
        .with_mode(&[1, -1], 0.0, 0.5);
    let b1 = FourierField::zero()
        .with_mode(&[1, 1], 0.0, -0.5)
        .with_mode(&[-1, 1], 0.0, -0.5);
    let d01 = c(0.2);
    ProblemSpec {
        dimension: 2,
        species: 1,
        rho: vec![c(1.0)],
        b: vec![vec![b0, b1]],
        diffusion: vec![vec![
            vec![c(1.0).with_mode(&[1, 0], 0.2, 0.0), d01.clone()],
            vec![d01, c(0.8)],
        ]],
        pi: vec![vec![c(0.0)]],
        initial_data: vec![bump(2)],
        final_time: 0.01,
        epsilons: EPSILONS.to_vec(),
    }
}

/// Every shipped fixture, keyed by its file stem.
pub fn named() -> Vec<(&'static str, ProblemSpec)> {
    vec![
        ("constant_decoupled", constant_decoupled()),
        ("constant_pair", constant_pair()),
        ("constant_drift", constant_drift(0.5, 0.7)),
        ("sin_convection", sin_convection()),
        ("two_species", two_species()),
        ("cellular_2d", cellular_2d()),
    ]
}

pub fn all() -> Vec<ProblemSpec> {
    named().into_iter().map(|(_, s)| s).collect()
}
