//! Scalar homogenized equation on a periodic box and reconstruction of the
//! fine-scale approximation `φ(x/ε) e^{−λt/ε²} v(t, x − b*t/ε)`.
//!
//! Time propagation is exact in Fourier space, and the drift offset is
//! applied as a Fourier phase shift, so no interpolation enters.

use crate::cell::CorrectorSet;
use crate::error::{Error, Result};
use crate::factorize::nested_map;
use crate::grid::PeriodicGrid;
use crate::problem::InitialProfile;
use crate::spectral::Eigenpair;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;
use std::sync::Arc;

/// `v0 = Σ_α w_α u_in,α` sampled on the box grid.
pub fn homogenized_initial(u_in: &[InitialProfile], weights: &[f64], grid: &PeriodicGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|p| {
            let x = grid.position(p);
            u_in.iter()
                .zip(weights)
                .map(|(u, w)| w * u.eval(&x, grid.length))
                .sum()
        })
        .collect()
}

/// Forward/inverse DFT on a 1D or 2D periodic grid.
#[derive(Clone)]
pub struct Fourier {
    grid: PeriodicGrid,
    forward: Arc<dyn rustfft::Fft<f64>>,
    inverse: Arc<dyn rustfft::Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: &PeriodicGrid) -> Self {
        let mut planner = FftPlanner::new();
        Fourier {
            grid: *grid,
            forward: planner.plan_fft_forward(grid.n),
            inverse: planner.plan_fft_inverse(grid.n),
        }
    }

    /// Signed integer wave number of index `i`.
    pub fn wave(&self, i: usize) -> f64 {
        let n = self.grid.n;
        if i <= n / 2 {
            i as f64
        } else {
            i as f64 - n as f64
        }
    }

    /// Wave vector of a flat spectral index.
    pub fn wave_vector(&self, idx: usize) -> [f64; 2] {
        let c = self.grid.coords(idx);
        [self.wave(c[0]), if self.grid.d == 2 { self.wave(c[1]) } else { 0.0 }]
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn rustfft::Fft<f64>>) {
        let n = self.grid.n;
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        if self.grid.d == 2 {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            for c in 0..n {
                for r in 0..n {
                    col[r] = data[c + n * r];
                }
                fft.process(&mut col);
                for r in 0..n {
                    data[c + n * r] = col[r];
                }
            }
        }
    }

    pub fn forward(&self, v: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform, real part, normalized.
    pub fn inverse(&self, hat: &[Complex64]) -> Vec<f64> {
        let mut data = hat.to_vec();
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }
}

/// Solution of `∂_t v = div(𝒟∇v)` on the box, stored spectrally.
#[derive(Debug, Clone)]
pub struct HomogenizedSolution {
    pub grid: PeriodicGrid,
    pub dispersion: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// Snapshots `v(t, ·)` at `times`.
    pub fields: Vec<Vec<f64>>,
    v0_hat: Vec<Complex64>,
    fourier: Fourier,
}

fn quadratic(d: &[Vec<f64>], k: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            s += d[i][j] * k[i] * k[j];
        }
    }
    s
}

pub fn solve_homogenized(
    v0: &[f64],
    grid: &PeriodicGrid,
    dispersion: &[Vec<f64>],
    times: &[f64],
) -> Result<HomogenizedSolution> {
    let min_eig = crate::cell::min_eigenvalue(dispersion);
    if !(min_eig > 0.0) {
        return Err(Error::SpdViolation {
            min_eigenvalue: min_eig,
        });
    }
    let fourier = Fourier::new(grid);
    let mut sol = HomogenizedSolution {
        grid: *grid,
        dispersion: dispersion.to_vec(),
        times: times.to_vec(),
        fields: Vec::new(),
        v0_hat: fourier.forward(v0),
        fourier,
    };
    let zero = vec![0.0; grid.d];
    sol.fields = times.iter().map(|&t| sol.evaluate(t, &zero)).collect();
    Ok(sol)
}

impl HomogenizedSolution {
    fn propagated(&self, t: f64, shift: &[f64]) -> Vec<Complex64> {
        let c = TAU / self.grid.length;
        self.v0_hat
            .iter()
            .enumerate()
            .map(|(idx, z)| {
                let k = self.fourier.wave_vector(idx);
                let decay = (-c * c * quadratic(&self.dispersion, k) * t).exp();
                let phase: f64 = -c * (0..self.grid.d).map(|i| k[i] * shift[i]).sum::<f64>();
                z * decay * Complex64::from_polar(1.0, phase)
            })
            .collect()
    }

    /// `v(t, x − shift)` on the box nodes.
    pub fn evaluate(&self, t: f64, shift: &[f64]) -> Vec<f64> {
        self.fourier.inverse(&self.propagated(t, shift))
    }

    /// `∇v(t, x − shift)`, spectrally, `[k][node]`.
    pub fn gradient(&self, t: f64, shift: &[f64]) -> Vec<Vec<f64>> {
        let hat = self.propagated(t, shift);
        let c = TAU / self.grid.length;
        (0..self.grid.d)
            .map(|axis| {
                let n = self.grid.n;
                let g: Vec<Complex64> = hat
                    .iter()
                    .enumerate()
                    .map(|(idx, z)| {
                        let coord = self.grid.coords(idx)[axis];
                        // The Nyquist mode has no well-defined real derivative.
                        if 2 * coord == n {
                            return Complex64::new(0.0, 0.0);
                        }
                        z * Complex64::new(0.0, c * self.fourier.wave_vector(idx)[axis])
                    })
                    .collect();
                self.fourier.inverse(&g)
            })
            .collect()
    }

    /// `∫ v dx`, constant in time.
    pub fn mass(&self) -> f64 {
        self.v0_hat[0].re * self.grid.cell_volume()
    }

    /// Fraction of `∫|v|` lying within `L/8` of the box boundary at time `t`
    /// in the frame shifted by `shift`; small values mean the periodic box
    /// is a faithful surrogate for the whole space.
    pub fn edge_fraction(&self, t: f64, shift: &[f64]) -> f64 {
        let v = self.evaluate(t, shift);
        let band = self.grid.length / 8.0;
        let total: f64 = v.iter().map(|x| x.abs()).sum();
        let near: f64 = v
            .iter()
            .enumerate()
            .filter(|(p, _)| {
                self.grid
                    .position(*p)
                    .iter()
                    .any(|&x| x < band || x >= self.grid.length - band)
            })
            .map(|(_, x)| x.abs())
            .sum();
        if total == 0.0 {
            0.0
        } else {
            near / total
        }
    }
}

/// Drift offset `b* t / ε`.
pub fn drift_offset(b_star: &[f64], eps: f64, t: f64) -> Vec<f64> {
    b_star.iter().map(|b| b * t / eps).collect()
}

/// `u_α(t,x) ≈ φ_α(x/ε) e^{−λt/ε²} v(t, x − b*t/ε)`.
pub fn reconstruct(
    hom: &HomogenizedSolution,
    pair: &Eigenpair,
    lambda: f64,
    b_star: &[f64],
    eps: f64,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let map = nested_map(&hom.grid, pair.n, eps)?;
    let v = hom.evaluate(t, &drift_offset(b_star, eps, t));
    let decay = (-lambda * t / (eps * eps)).exp();
    Ok(pair
        .phi
        .iter()
        .map(|phi| map.iter().zip(&v).map(|(&c, vx)| phi[c] * decay * vx).collect())
        .collect())
}

/// As [`reconstruct`] with the first-order term `ε Σ_i ω_{i,α}(x/ε) ∂_i v`.
pub fn reconstruct_with_corrector(
    hom: &HomogenizedSolution,
    pair: &Eigenpair,
    correctors: &CorrectorSet,
    lambda: f64,
    b_star: &[f64],
    eps: f64,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let map = nested_map(&hom.grid, pair.n, eps)?;
    let shift = drift_offset(b_star, eps, t);
    let v = hom.evaluate(t, &shift);
    let grad = hom.gradient(t, &shift);
    let decay = (-lambda * t / (eps * eps)).exp();
    Ok((0..pair.species())
        .map(|a| {
            (0..hom.grid.len())
                .map(|p| {
                    let c = map[p];
                    let mut w = v[p];
                    for (i, gi) in grad.iter().enumerate() {
                        w += eps * correctors.omega[i][a][c] * gi[p];
                    }
                    pair.phi[a][c] * decay * w
                })
                .collect()
        })
        .collect())
}
