//! Factorized system: effective convection and diffusion fields, the
//! discrete factorized operator, and the change of unknowns
//! `v = e^{λt/ε²} u / φ(x/ε)`.
//!
//! The discrete factorized operator is `Ã = diag(φ*) (A − λR) diag(φ)` with
//! its diagonal reset so every row sums to zero exactly.  Because the adjoint
//! eigenvector comes from the exact transpose of `A`, its column sums vanish
//! up to the eigen residual as well.  Its off-diagonal entries are the
//! discrete counterparts of `b̃`, `D̃` and the weighted couplings, and every
//! compatibility identity downstream holds at rounding level.

use crate::error::{Error, Result};
use crate::grid::{cell_integrate, PeriodicGrid, SampledFields};
use crate::sparse::CsrMatrix;
use crate::spectral::Eigenpair;

#[derive(Debug, Clone)]
pub struct FactorizedOperator {
    pub matrix: CsrMatrix,
    /// `φ φ* ρ`, species-major.
    pub mass: Vec<f64>,
    pub grid: PeriodicGrid,
    pub species: usize,
}

impl FactorizedOperator {
    /// `diag(φ*) (A − λR) diag(φ)` with zero row sums.  Only the
    /// off-diagonal part of `A` enters, so `λ` itself is not needed.
    pub fn new(
        a: &CsrMatrix,
        r: &[f64],
        phi: &[f64],
        phi_star: &[f64],
        grid: PeriodicGrid,
        species: usize,
    ) -> Self {
        let n = a.nrows();
        let mut t = Vec::with_capacity(a.nnz());
        for p in 0..n {
            let (cols, vals) = a.row(p);
            let mut off = 0.0;
            for (&q, &v) in cols.iter().zip(vals) {
                if q != p {
                    let w = phi_star[p] * v * phi[q];
                    off += w;
                    t.push((p, q, w));
                }
            }
            t.push((p, p, -off));
        }
        FactorizedOperator {
            matrix: CsrMatrix::from_triplets(n, n, &t),
            mass: (0..n).map(|p| phi[p] * phi_star[p] * r[p]).collect(),
            grid,
            species,
        }
    }

    /// Operator of an eigenpair on its own cell grid.
    pub fn from_eigenpair(a: &CsrMatrix, r: &[f64], pair: &Eigenpair, grid: PeriodicGrid) -> Self {
        Self::new(
            a,
            r,
            &pair.phi_flat(),
            &pair.phi_star_flat(),
            grid,
            pair.species(),
        )
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    fn node(&self, p: usize) -> usize {
        p % self.grid.len()
    }

    /// Periodic coordinate difference `y_q − y_p` along `axis`.
    pub fn coordinate_difference(&self, p: usize, q: usize, axis: usize) -> f64 {
        self.grid.offset(self.node(p), self.node(q), axis) as f64 * self.grid.h
    }

    /// `Ã y_axis`, evaluated in difference form so that the periodic wrap of
    /// the coordinate is invisible.
    pub fn apply_coordinate(&self, axis: usize) -> Vec<f64> {
        (0..self.size())
            .map(|p| {
                let (cols, vals) = self.matrix.row(p);
                cols.iter()
                    .zip(vals)
                    .map(|(&q, &v)| v * self.coordinate_difference(p, q, axis))
                    .sum()
            })
            .collect()
    }

    /// Skew part `½(Ã − Ãᵀ)` applied to `y_axis` in difference form: the
    /// discrete effective convection.
    pub fn skew_coordinate(&self, axis: usize) -> Vec<f64> {
        let t = self.matrix.transpose();
        (0..self.size())
            .map(|p| {
                let mut s = 0.0;
                let (cols, vals) = self.matrix.row(p);
                for (&q, &v) in cols.iter().zip(vals) {
                    s += 0.5 * v * self.coordinate_difference(p, q, axis);
                }
                let (cols, vals) = t.row(p);
                for (&q, &v) in cols.iter().zip(vals) {
                    s -= 0.5 * v * self.coordinate_difference(p, q, axis);
                }
                s
            })
            .collect()
    }

    /// Symmetric edge form `h^d Σ_{p<q} w_pq Δa_pq Δb_pq`, `w = −½(Ã_pq + Ã_qp)`,
    /// where `a = u + y_{ua}` (the coordinate added when `ua` is `Some`) and
    /// likewise for `b`.  Returns the contributions of spatial edges and of
    /// cross-species coupling edges separately.
    pub fn edge_form(
        &self,
        u: &[f64],
        ua: Option<usize>,
        v: &[f64],
        va: Option<usize>,
    ) -> (f64, f64) {
        let t = self.matrix.transpose();
        let len = self.grid.len();
        let (mut spatial, mut coupling) = (0.0, 0.0);
        let diff = |x: &[f64], axis: Option<usize>, p: usize, q: usize| {
            x[q] - x[p] + axis.map_or(0.0, |k| self.coordinate_difference(p, q, k))
        };
        for p in 0..self.size() {
            let (cols, vals) = self.matrix.row(p);
            let (tcols, tvals) = t.row(p);
            // Both rows are sorted; walk them together over q > p.
            let (mut i, mut j) = (0, 0);
            loop {
                let qi = cols.get(i).copied().unwrap_or(usize::MAX);
                let qj = tcols.get(j).copied().unwrap_or(usize::MAX);
                let q = qi.min(qj);
                if q == usize::MAX {
                    break;
                }
                let mut w = 0.0;
                if qi == q {
                    w += vals[i];
                    i += 1;
                }
                if qj == q {
                    w += tvals[j];
                    j += 1;
                }
                if q <= p {
                    continue;
                }
                let w = -0.5 * w;
                let term = w * diff(u, ua, p, q) * diff(v, va, p, q);
                if p % len == q % len {
                    coupling += term;
                } else {
                    spatial += term;
                }
            }
        }
        let vol = self.grid.cell_volume();
        (vol * spatial, vol * coupling)
    }

    /// Residual of the column sums, `max |Σ_p Ã_pq| / max |Ã_pp|`.
    pub fn column_defect(&self) -> f64 {
        let cols = self.matrix.transpose().row_sums();
        let diag = self.matrix.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        cols.iter().fold(0.0f64, |m, v| m.max(v.abs())) / diag.max(f64::MIN_POSITIVE)
    }
}

/// Effective fields of the factorized system.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedFields {
    /// Pointwise `b̃_α = φφ*b + φD∇φ* − φ*D∇φ` with central gradients, `[α][k][node]`.
    pub b_tilde: Vec<Vec<Vec<f64>>>,
    /// Discrete effective convection from the skew part of `Ã`, `[α][k][node]`.
    pub b_tilde_discrete: Vec<Vec<Vec<f64>>>,
    /// `D̃_α = φφ*D_α`, `[α][k][l][node]`.
    pub d_tilde: Vec<Vec<Vec<Vec<f64>>>>,
    /// `Π_αβ φ*_α φ_β`, `[α][β][node]`.
    pub pi_weighted: Vec<Vec<Vec<f64>>>,
}

fn central_gradient(grid: &PeriodicGrid, f: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.d)
        .map(|k| {
            let mut e = [0isize; 2];
            e[k] = 1;
            (0..grid.len())
                .map(|p| {
                    let fp = f[grid.shift(p, e)];
                    let fm = f[grid.shift(p, [-e[0], -e[1]])];
                    (fp - fm) / (2.0 * grid.h)
                })
                .collect()
        })
        .collect()
}

/// Pointwise effective convection with central-difference gradients.
pub fn pointwise_convection(pair: &Eigenpair, fields: &SampledFields) -> Vec<Vec<Vec<f64>>> {
    let g = &fields.grid;
    (0..fields.species)
        .map(|a| {
            let (phi, ps) = (&pair.phi[a], &pair.phi_star[a]);
            let gphi = central_gradient(g, phi);
            let gps = central_gradient(g, ps);
            (0..g.d)
                .map(|k| {
                    (0..g.len())
                        .map(|p| {
                            let mut v = phi[p] * ps[p] * fields.b[a][k][p];
                            for l in 0..g.d {
                                let dkl = fields.diffusion[a][k][l][p];
                                v += dkl * (phi[p] * gps[l][p] - ps[p] * gphi[l][p]);
                            }
                            v
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Alias kept for symmetry with [`effective_diffusion`].
pub fn effective_convection(pair: &Eigenpair, fields: &SampledFields) -> Vec<Vec<Vec<f64>>> {
    pointwise_convection(pair, fields)
}

/// Skew-part effective convection split per species, `[α][k][node]`.
pub fn discrete_convection(op: &FactorizedOperator) -> Vec<Vec<Vec<f64>>> {
    let len = op.grid.len();
    let per_axis: Vec<Vec<f64>> = (0..op.grid.d).map(|k| op.skew_coordinate(k)).collect();
    (0..op.species)
        .map(|a| per_axis.iter().map(|v| v[a * len..(a + 1) * len].to_vec()).collect())
        .collect()
}

pub fn effective_diffusion(pair: &Eigenpair, fields: &SampledFields) -> Vec<Vec<Vec<Vec<f64>>>> {
    (0..fields.species)
        .map(|a| {
            fields.diffusion[a]
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|dkl| {
                            dkl.iter()
                                .enumerate()
                                .map(|(p, v)| pair.phi[a][p] * pair.phi_star[a][p] * v)
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn weighted_coupling(pair: &Eigenpair, fields: &SampledFields) -> Vec<Vec<Vec<f64>>> {
    (0..fields.species)
        .map(|a| {
            (0..fields.species)
                .map(|b| {
                    (0..fields.grid.len())
                        .map(|p| fields.pi[a][b][p] * pair.phi_star[a][p] * pair.phi[b][p])
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn factorized_fields(pair: &Eigenpair, fields: &SampledFields, op: &FactorizedOperator) -> FactorizedFields {
    FactorizedFields {
        b_tilde: pointwise_convection(pair, fields),
        b_tilde_discrete: discrete_convection(op),
        d_tilde: effective_diffusion(pair, fields),
        pi_weighted: weighted_coupling(pair, fields),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceResidual {
    /// Max-norm of `div b̃_α − Σ_β(Π_βα φ_α φ*_β − Π_αβ φ*_α φ_β)` per species.
    pub per_species: Vec<f64>,
    /// Max-norm of `Σ_α div b̃_α`.
    pub summed: f64,
    /// Cell integral of `Σ_α div b̃_α` (vanishes by telescoping).
    pub summed_integral: f64,
}

/// Central-difference check of the divergence identity for `b_tilde`.
pub fn divergence_residual(
    b_tilde: &[Vec<Vec<f64>>],
    pair: &Eigenpair,
    fields: &SampledFields,
) -> DivergenceResidual {
    let g = &fields.grid;
    let ns = fields.species;
    let mut total = vec![0.0; g.len()];
    let mut per_species = Vec::with_capacity(ns);
    for a in 0..ns {
        let mut worst = 0.0f64;
        for p in 0..g.len() {
            let mut div = 0.0;
            for k in 0..g.d {
                let mut e = [0isize; 2];
                e[k] = 1;
                div += (b_tilde[a][k][g.shift(p, e)] - b_tilde[a][k][g.shift(p, [-e[0], -e[1]])]) / (2.0 * g.h);
            }
            total[p] += div;
            let mut source = 0.0;
            for b in 0..ns {
                source += fields.pi[b][a][p] * pair.phi[a][p] * pair.phi_star[b][p]
                    - fields.pi[a][b][p] * pair.phi_star[a][p] * pair.phi[b][p];
            }
            worst = worst.max((div - source).abs());
        }
        per_species.push(worst);
    }
    DivergenceResidual {
        per_species,
        summed: total.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        summed_integral: cell_integrate(g, &total),
    }
}

/// For each macro node, the cell-grid node it lands on under `x ↦ x/ε`.
///
/// Requires `ε/dx` to be an integer `q`, the cell resolution to be a
/// multiple of `q`, and the box to hold a whole number of periods.
pub fn nested_map(macro_grid: &PeriodicGrid, cell_n: usize, eps: f64) -> Result<Vec<usize>> {
    let ratio = eps / macro_grid.h;
    let q = ratio.round();
    if q < 1.0 || (ratio - q).abs() > 1e-9 * ratio {
        return Err(Error::ResolutionMismatch(format!(
            "eps/dx = {ratio} is not an integer number of macro nodes per period"
        )));
    }
    let q = q as usize;
    if !cell_n.is_multiple_of(q) || !macro_grid.n.is_multiple_of(q) {
        return Err(Error::ResolutionMismatch(format!(
            "{q} macro nodes per period do not nest into a cell grid of {cell_n} or a box of {} nodes",
            macro_grid.n
        )));
    }
    let stride = cell_n / q;
    Ok((0..macro_grid.len())
        .map(|p| {
            let c = macro_grid.coords(p);
            let cell = [(c[0] % q) * stride, (c[1] % q) * stride];
            cell[0] + if macro_grid.d == 2 { cell_n * cell[1] } else { 0 }
        })
        .collect())
}

/// `φ_α(x/ε)` on the macro grid, `[α][node]`.
pub fn tile(field: &[Vec<f64>], map: &[usize]) -> Vec<Vec<f64>> {
    field.iter().map(|f| map.iter().map(|&c| f[c]).collect()).collect()
}

/// `v_α = e^{λt/ε²} u_α / φ_α(x/ε)`.
pub fn factor(
    u: &[Vec<f64>],
    pair: &Eigenpair,
    macro_grid: &PeriodicGrid,
    eps: f64,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let map = nested_map(macro_grid, pair.n, eps)?;
    let growth = (pair.lambda * t / (eps * eps)).exp();
    Ok(u.iter()
        .zip(&pair.phi)
        .map(|(ua, phi)| ua.iter().zip(&map).map(|(x, &c)| growth * x / phi[c]).collect())
        .collect())
}

/// Inverse of [`factor`].
pub fn unfactor(
    v: &[Vec<f64>],
    pair: &Eigenpair,
    macro_grid: &PeriodicGrid,
    eps: f64,
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let map = nested_map(macro_grid, pair.n, eps)?;
    let decay = (-pair.lambda * t / (eps * eps)).exp();
    Ok(v.iter()
        .zip(&pair.phi)
        .map(|(va, phi)| va.iter().zip(&map).map(|(x, &c)| decay * x * phi[c]).collect())
        .collect())
}
