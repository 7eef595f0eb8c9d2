//! Uniform periodic grids, coefficient sampling, quadrature and assembly of
//! the convection–diffusion–reaction operators.
//!
//! Nodes sit at `x_i = i·h`, `i = 0..n`, on every axis; node `(i0, i1)` has
//! flat index `i0 + n·i1`.  Unknowns of a system are ordered species-major:
//! row `α·n^d + node`.

use crate::error::{Error, HypothesisViolation, Result};
use crate::problem::ProblemSpec;
use crate::sparse::{CsrMatrix, Stencil};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid {
    pub d: usize,
    pub n: usize,
    /// Spacing `length / n`.
    pub h: f64,
    /// Edge of the periodic box; 1 for the unit cell.
    pub length: f64,
}

/// Unit-cell grid `[0,1)^d` with `n` points per axis.
pub fn build_grid(d: usize, n: usize) -> Result<PeriodicGrid> {
    PeriodicGrid::new(d, n, 1.0)
}

impl PeriodicGrid {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidGrid(format!("unsupported dimension {d}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution {n} must be a power of two and at least 8"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        Ok(PeriodicGrid {
            d,
            n,
            h: length / n as f64,
            length,
        })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer coordinates of a flat node index.
    pub fn coords(&self, node: usize) -> [usize; 2] {
        [node % self.n, if self.d == 2 { node / self.n } else { 0 }]
    }

    pub fn index(&self, c: [usize; 2]) -> usize {
        c[0] + if self.d == 2 { self.n * c[1] } else { 0 }
    }

    pub fn position(&self, node: usize) -> Vec<f64> {
        let c = self.coords(node);
        (0..self.d).map(|k| c[k] as f64 * self.h).collect()
    }

    /// Node reached from `node` by the integer offset `step` (wrap-around).
    pub fn shift(&self, node: usize, step: [isize; 2]) -> usize {
        let c = self.coords(node);
        let n = self.n as isize;
        let mut out = [0usize; 2];
        for k in 0..self.d {
            out[k] = (c[k] as isize + step[k]).rem_euclid(n) as usize;
        }
        self.index(out)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.d as i32)
    }

    /// Signed periodic offset from node `p` to node `q` along `axis`, in
    /// grid units, taken in `(-n/2, n/2]`.
    pub fn offset(&self, p: usize, q: usize, axis: usize) -> isize {
        let n = self.n as isize;
        let diff = self.coords(q)[axis] as isize - self.coords(p)[axis] as isize;
        let w = diff.rem_euclid(n);
        if w > n / 2 {
            w - n
        } else {
            w
        }
    }
}

/// Rectangle-rule quadrature `h^d Σ field`; exact for every Fourier mode
/// resolved by the grid.
pub fn cell_integrate(grid: &PeriodicGrid, field: &[f64]) -> f64 {
    grid.cell_volume() * field.iter().sum::<f64>()
}

/// Node-wise coefficient arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFields {
    pub grid: PeriodicGrid,
    pub species: usize,
    /// `rho[α][node]`
    pub rho: Vec<Vec<f64>>,
    /// `b[α][k][node]`
    pub b: Vec<Vec<Vec<f64>>>,
    /// `diffusion[α][k][l][node]`
    pub diffusion: Vec<Vec<Vec<Vec<f64>>>>,
    /// `pi[α][β][node]`
    pub pi: Vec<Vec<Vec<f64>>>,
}

/// Samples the coefficients on the unit-cell grid and checks the structural
/// hypotheses node by node.
pub fn sample_fields(spec: &ProblemSpec, grid: &PeriodicGrid) -> Result<SampledFields> {
    sample_scaled(spec, grid, 1.0)
}

/// Samples `coefficient(x / eps)` on an arbitrary periodic grid.
pub fn sample_scaled(spec: &ProblemSpec, grid: &PeriodicGrid, eps: f64) -> Result<SampledFields> {
    spec.check_shape()?;
    if spec.dimension != grid.d {
        return Err(Error::InvalidGrid(format!(
            "problem dimension {} does not match grid dimension {}",
            spec.dimension, grid.d
        )));
    }
    let (nsp, d, len) = (spec.species, grid.d, grid.len());
    let ys: Vec<Vec<f64>> = (0..len)
        .map(|p| grid.position(p).into_iter().map(|x| x / eps).collect())
        .collect();
    let sample = |f: &crate::fourier::FourierField| -> Vec<f64> { ys.iter().map(|y| f.eval(y)).collect() };
    let fields = SampledFields {
        grid: *grid,
        species: nsp,
        rho: spec.rho.iter().map(sample).collect(),
        b: spec.b.iter().map(|ba| ba.iter().map(sample).collect()).collect(),
        diffusion: spec
            .diffusion
            .iter()
            .map(|da| da.iter().map(|row| row.iter().map(sample).collect()).collect())
            .collect(),
        pi: spec.pi.iter().map(|row| row.iter().map(sample).collect()).collect(),
    };
    check_hypotheses(&fields, d)?;
    // Irreducibility depends on which couplings are identically zero, which
    // is a property of the series rather than of its samples.
    let linked: Vec<Vec<bool>> = (0..nsp)
        .map(|a| (0..nsp).map(|b| a != b && !spec.pi[a][b].is_zero()).collect())
        .collect();
    check_irreducible(&linked)?;
    Ok(fields)
}

fn check_hypotheses(f: &SampledFields, d: usize) -> Result<()> {
    for a in 0..f.species {
        for (node, &r) in f.rho[a].iter().enumerate() {
            if !(r > 0.0) {
                return Err(HypothesisViolation::Density {
                    species: a,
                    node,
                    value: r,
                }
                .into());
            }
        }
        for node in 0..f.grid.len() {
            let dm = |k: usize, l: usize| f.diffusion[a][k][l][node];
            let (min_eig, asym) = if d == 1 {
                (dm(0, 0), 0.0)
            } else {
                let asym = (dm(0, 1) - dm(1, 0)).abs();
                let off = 0.5 * (dm(0, 1) + dm(1, 0));
                let mean = 0.5 * (dm(0, 0) + dm(1, 1));
                let rad = (0.25 * (dm(0, 0) - dm(1, 1)).powi(2) + off * off).sqrt();
                (mean - rad, asym)
            };
            let scale = (0..d).map(|k| dm(k, k).abs()).fold(1.0, f64::max);
            if !(min_eig > 0.0) || asym > 1e-12 * scale {
                return Err(HypothesisViolation::Diffusion {
                    species: a,
                    node,
                    min_eigenvalue: min_eig,
                    asymmetry: asym,
                }
                .into());
            }
        }
        for b in 0..f.species {
            if a == b {
                continue;
            }
            if let Some((node, &v)) = f.pi[a][b].iter().enumerate().find(|(_, &v)| v > 0.0) {
                return Err(HypothesisViolation::Cooperativity {
                    alpha: a,
                    beta: b,
                    node,
                    value: v,
                }
                .into());
            }
        }
    }
    Ok(())
}

/// Strong connectivity of the directed coupling graph.
pub(crate) fn check_irreducible(linked: &[Vec<bool>]) -> Result<()> {
    let n = linked.len();
    let reach = |forward: bool| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                let edge = if forward { linked[a][b] } else { linked[b][a] };
                if edge && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen
    };
    for forward in [true, false] {
        let seen = reach(forward);
        let isolated: Vec<usize> = (0..n).filter(|&b| !seen[b]).collect();
        if !isolated.is_empty() {
            return Err(HypothesisViolation::Irreducibility { from: 0, isolated }.into());
        }
    }
    Ok(())
}

/// Flux-form diffusion directions: the coordinate axes plus, in 2D, the two
/// diagonals that absorb the off-diagonal tensor entry.
fn diffusion_directions(d: usize) -> Vec<[isize; 2]> {
    if d == 1 {
        vec![[1, 0]]
    } else {
        vec![[1, 0], [0, 1], [1, 1], [1, -1]]
    }
}

/// Node-wise coefficient of the diffusion tensor along direction `dir`.
fn directional_coefficient(f: &SampledFields, a: usize, dir: usize, node: usize) -> f64 {
    let dm = |k: usize, l: usize| f.diffusion[a][k][l][node];
    if f.grid.d == 1 {
        return dm(0, 0);
    }
    let off = dm(0, 1);
    match dir {
        0 => dm(0, 0) - off.abs(),
        1 => dm(1, 1) - off.abs(),
        2 => off.max(0.0),
        _ => (-off).max(0.0),
    }
}

/// Triplets of `convection_scale·b_α·∇ − div(D_α∇)` for species `a`, placed
/// at block offset `a·n^d`.
fn cd_triplets(
    f: &SampledFields,
    a: usize,
    convection_scale: f64,
    stencil: Stencil,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let g = &f.grid;
    let base = a * g.len();
    let ih2 = 1.0 / (g.h * g.h);
    let dirs = diffusion_directions(g.d);
    for p in 0..g.len() {
        let row = base + p;
        out.push((row, row, 0.0));
        for (k, dir) in dirs.iter().enumerate() {
            let back = [-dir[0], -dir[1]];
            let qp = g.shift(p, *dir);
            let qm = g.shift(p, back);
            let cp = 0.5 * (directional_coefficient(f, a, k, p) + directional_coefficient(f, a, k, qp));
            let cm = 0.5 * (directional_coefficient(f, a, k, p) + directional_coefficient(f, a, k, qm));
            if cp == 0.0 && cm == 0.0 {
                continue;
            }
            out.push((row, row, (cp + cm) * ih2));
            out.push((row, base + qp, -cp * ih2));
            out.push((row, base + qm, -cm * ih2));
        }
        for k in 0..g.d {
            let v = convection_scale * f.b[a][k][p];
            if v == 0.0 {
                continue;
            }
            let mut e = [0isize; 2];
            e[k] = 1;
            let qp = g.shift(p, e);
            let qm = g.shift(p, [-e[0], -e[1]]);
            match stencil {
                Stencil::Central => {
                    let c = v / (2.0 * g.h);
                    out.push((row, base + qp, c));
                    out.push((row, base + qm, -c));
                }
                Stencil::Upwind => {
                    let c = v / g.h;
                    if v > 0.0 {
                        out.push((row, row, c));
                        out.push((row, base + qm, -c));
                    } else {
                        out.push((row, base + qp, c));
                        out.push((row, row, -c));
                    }
                }
            }
        }
    }
}

/// Discrete `φ ↦ convection_scale·b_α·∇φ − div(D_α∇φ)` on the grid.
pub fn assemble_cd_block(
    fields: &SampledFields,
    species: usize,
    convection_scale: f64,
    stencil: Stencil,
) -> CsrMatrix {
    let mut t = Vec::new();
    cd_triplets(fields, species, convection_scale, stencil, &mut t);
    let n = fields.grid.len();
    let shifted: Vec<_> = t.into_iter().map(|(r, c, v)| (r - species * n, c - species * n, v)).collect();
    CsrMatrix::from_triplets(n, n, &shifted)
}

/// Full system `convection_scale·b·∇ − div(D∇) + reaction_scale·Π` with the
/// requested stencil.
pub fn assemble_with(
    fields: &SampledFields,
    convection_scale: f64,
    reaction_scale: f64,
    stencil: Stencil,
) -> CsrMatrix {
    let n = fields.grid.len();
    let size = fields.species * n;
    let mut t = Vec::new();
    for a in 0..fields.species {
        cd_triplets(fields, a, convection_scale, stencil, &mut t);
        for b in 0..fields.species {
            for p in 0..n {
                let v = reaction_scale * fields.pi[a][b][p];
                if v != 0.0 || a == b {
                    t.push((a * n + p, b * n + p, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(size, size, &t)
}

/// Assembles with central convection, falling back to upwind if that leaves
/// a positive off-diagonal entry.  Fails if even the upwind operator is not a
/// Z-matrix (possible only for strongly anisotropic 2D tensors).
pub fn assemble_system(
    fields: &SampledFields,
    convection_scale: f64,
    reaction_scale: f64,
) -> Result<(CsrMatrix, Stencil)> {
    let central = assemble_with(fields, convection_scale, reaction_scale, Stencil::Central);
    if central.max_off_diagonal() <= 0.0 {
        return Ok((central, Stencil::Central));
    }
    let upwind = assemble_with(fields, convection_scale, reaction_scale, Stencil::Upwind);
    let worst = upwind.max_off_diagonal();
    if worst > 0.0 {
        return Err(Error::MonotonicityFailure { value: worst });
    }
    Ok((upwind, Stencil::Upwind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::fourier::FourierField;
    use std::f64::consts::TAU;

    #[test]
    fn grid_sizes() {
        let g = build_grid(1, 64).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.h, 1.0 / 64.0);
        assert_eq!(build_grid(2, 32).unwrap().len(), 1024);
        assert!(matches!(build_grid(3, 32), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(1, 48), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(1, 4), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn wrap_around_neighbours() {
        let g = build_grid(2, 8).unwrap();
        let p = g.index([7, 0]);
        assert_eq!(g.shift(p, [1, 0]), g.index([0, 0]));
        assert_eq!(g.shift(p, [0, -1]), g.index([7, 7]));
        assert_eq!(g.offset(p, g.index([0, 0]), 0), 1);
        assert_eq!(g.offset(g.index([0, 0]), p, 0), -1);
    }

    #[test]
    fn quadrature_of_modes() {
        let g = build_grid(1, 64).unwrap();
        let ones = vec![1.0; 64];
        assert!((cell_integrate(&g, &ones) - 1.0).abs() < 1e-15);
        let s: Vec<f64> = (0..64).map(|i| (TAU * g.position(i)[0]).sin()).collect();
        assert!(cell_integrate(&g, &s).abs() < 1e-14);
        let s2: Vec<f64> = s.iter().map(|v| v * v).collect();
        assert!((cell_integrate(&g, &s2) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn constant_fixture_samples_constants() {
        let g = build_grid(1, 16).unwrap();
        let f = sample_fields(&fixtures::constant_decoupled(), &g).unwrap();
        assert!(f.rho[0].iter().all(|&v| v == 1.0));
        assert!(f.b[0][0].iter().all(|&v| v == 0.0));
        assert!(f.diffusion[0][0][0].iter().all(|&v| v == 1.0));
        assert!(f.pi[0][0].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn cooperativity_violation_is_located() {
        let mut spec = fixtures::constant_pair();
        spec.pi[0][1] = FourierField::constant(-0.05).with_mode(&[1], 0.0, 0.15);
        let g = build_grid(1, 16).unwrap();
        match sample_fields(&spec, &g) {
            Err(Error::Hypothesis(HypothesisViolation::Cooperativity { alpha, beta, value, .. })) => {
                assert_eq!((alpha, beta), (0, 1));
                assert!(value > 0.0);
            }
            other => panic!("expected cooperativity violation, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_species_are_rejected() {
        let mut spec = fixtures::constant_pair();
        spec.species = 3;
        spec.rho.push(FourierField::constant(1.0));
        spec.b.push(vec![FourierField::zero()]);
        spec.diffusion.push(vec![vec![FourierField::constant(1.0)]]);
        spec.initial_data.push(spec.initial_data[0].clone());
        for row in spec.pi.iter_mut() {
            row.push(FourierField::zero());
        }
        spec.pi.push(vec![FourierField::zero(), FourierField::zero(), FourierField::constant(1.0)]);
        spec.pi[1][0] = FourierField::zero();
        let g = build_grid(1, 16).unwrap();
        assert!(matches!(
            sample_fields(&spec, &g),
            Err(Error::Hypothesis(HypothesisViolation::Irreducibility { .. }))
        ));
    }

    #[test]
    fn nonpositive_density_and_diffusion_rejected() {
        let g = build_grid(1, 16).unwrap();
        let mut spec = fixtures::sin_convection();
        spec.rho[0] = FourierField::constant(0.5).with_mode(&[1], 1.0, 0.0);
        assert!(matches!(
            sample_fields(&spec, &g),
            Err(Error::Hypothesis(HypothesisViolation::Density { .. }))
        ));
        let mut spec = fixtures::sin_convection();
        spec.diffusion[0][0][0] = FourierField::constant(0.0);
        assert!(matches!(
            sample_fields(&spec, &g),
            Err(Error::Hypothesis(HypothesisViolation::Diffusion { .. }))
        ));
    }

    #[test]
    fn laplacian_stencil() {
        let g = build_grid(1, 8).unwrap();
        let f = sample_fields(&fixtures::constant_drift(0.0, 1.0), &g).unwrap();
        let a = assemble_cd_block(&f, 0, 1.0, Stencil::Central).to_dense();
        let ih2 = 64.0;
        for i in 0..8 {
            for j in 0..8 {
                let expect = match (j + 8 - i) % 8 {
                    0 => 2.0 * ih2,
                    1 | 7 => -ih2,
                    _ => 0.0,
                };
                assert_eq!(a[i][j], expect, "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn constant_convection_is_skew_circulant() {
        let g = build_grid(1, 16).unwrap();
        let f = sample_fields(&fixtures::constant_drift(0.75, 1.0), &g).unwrap();
        let conv = assemble_cd_block(&f, 0, 1.0, Stencil::Central).to_dense();
        let diff = {
            let f0 = sample_fields(&fixtures::constant_drift(0.0, 1.0), &g).unwrap();
            assemble_cd_block(&f0, 0, 1.0, Stencil::Central).to_dense()
        };
        for i in 0..16 {
            for j in 0..16 {
                let c = conv[i][j] - diff[i][j];
                let ct = conv[j][i] - diff[j][i];
                assert!((c + ct).abs() < 1e-12);
                if j == (i + 1) % 16 {
                    assert!((c - 0.75 * 8.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diffusion_kills_constants_2d() {
        let g = build_grid(2, 16).unwrap();
        let f = sample_fields(&fixtures::cellular_2d(), &g).unwrap();
        let mut zero_b = f.clone();
        zero_b.b[0].iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v = 0.0));
        let a = assemble_cd_block(&zero_b, 0, 1.0, Stencil::Central);
        let r = a.mul(&vec![1.0; g.len()]);
        assert!(r.iter().all(|v| v.abs() < 1e-9));
        // Symmetric because faces use arithmetic means.
        let dense = a.to_dense();
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert!((dense[i][j] - dense[j][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn off_diagonal_tensor_is_consistent() {
        // Quadratic u = x·y has ∂xy u = 1 so div(D∇u) = 2·D01 for constant D.
        let g = build_grid(2, 16).unwrap();
        let mut spec = fixtures::cellular_2d();
        spec.b[0] = vec![FourierField::zero(), FourierField::zero()];
        spec.diffusion[0][0][0] = FourierField::constant(1.0);
        let f = sample_fields(&spec, &g).unwrap();
        let a = assemble_cd_block(&f, 0, 1.0, Stencil::Central);
        // Use a smooth periodic test field and compare with the analytic operator.
        let u: Vec<f64> = (0..g.len())
            .map(|p| {
                let x = g.position(p);
                (TAU * x[0]).sin() * (TAU * x[1]).sin()
            })
            .collect();
        let au = a.mul(&u);
        let p = g.index([3, 5]);
        let x = g.position(p);
        let (s0, c0, s1, c1) = ((TAU * x[0]).sin(), (TAU * x[0]).cos(), (TAU * x[1]).sin(), (TAU * x[1]).cos());
        let exact = TAU * TAU * (1.0 * s0 * s1 + 0.8 * s0 * s1 - 2.0 * 0.2 * c0 * c1);
        assert!((au[p] - exact).abs() < 0.1 * exact.abs().max(1.0), "{} vs {exact}", au[p]);
    }

    #[test]
    fn central_is_second_order() {
        // b = sin(2πy) acting on cos(2πy): b·u' = -2π sin².
        let mut errs = Vec::new();
        for n in [32, 64, 128] {
            let g = build_grid(1, n).unwrap();
            let mut spec = fixtures::sin_convection();
            spec.diffusion[0][0][0] = FourierField::constant(1e-300);
            let f = sample_fields(&spec, &g).unwrap();
            let mut e = Vec::new();
            for st in [Stencil::Central, Stencil::Upwind] {
                let a = assemble_cd_block(&f, 0, 1.0, st);
                let u: Vec<f64> = (0..n).map(|i| (TAU * g.position(i)[0]).cos()).collect();
                let au = a.mul(&u);
                let err = (0..n)
                    .map(|i| {
                        let y = g.position(i)[0];
                        (au[i] + TAU * (TAU * y).sin().powi(2)).abs()
                    })
                    .fold(0.0, f64::max);
                e.push(err);
            }
            errs.push(e);
        }
        let slope = |i: usize| (errs[0][i] / errs[2][i]).log2() / 2.0;
        assert!(slope(0) > 1.9, "central slope {}", slope(0));
        assert!(slope(1) > 0.9 && slope(1) < 1.2, "upwind slope {}", slope(1));
        assert!(errs[2][0] < errs[2][1]);
    }

    #[test]
    fn upwind_fallback_at_high_peclet() {
        let g = build_grid(1, 8).unwrap();
        let f = sample_fields(&fixtures::constant_drift(100.0, 1.0), &g).unwrap();
        let (a, st) = assemble_system(&f, 1.0, 1.0).unwrap();
        assert_eq!(st, Stencil::Upwind);
        assert!(a.max_off_diagonal() <= 0.0);
        let f = sample_fields(&fixtures::sin_convection(), &g).unwrap();
        assert_eq!(assemble_system(&f, 1.0, 1.0).unwrap().1, Stencil::Central);
    }
}
