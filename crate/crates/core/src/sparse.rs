//! Compressed sparse row matrices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

/// Convection discretization used when an operator was assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    Central,
    Upwind,
}

impl std::fmt::Display for Stencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stencil::Central => "central",
            Stencil::Upwind => "upwind",
        })
    }
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets.  Duplicates are
    /// summed in the order given, columns within a row are sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut raw = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            raw[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for r in 0..nrows {
            let row = &mut raw[counts[r]..counts[r + 1]];
            // Stable sort keeps the summation order of duplicates deterministic.
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub(crate) fn from_raw(n: usize, indptr: Vec<usize>, indices: Vec<usize>, data: Vec<f64>) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr,
            indices,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> (&[usize], &mut [f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &mut self.data[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            *yr = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|r| self.get(r, r)).collect()
    }

    /// `self + diag(d)`; the diagonal must already be in the pattern.
    pub fn add_diagonal(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (r, &dr) in d.iter().enumerate() {
            let (cols, vals) = out.row_mut(r);
            let k = cols
                .binary_search(&r)
                .expect("diagonal entry present in the sparsity pattern");
            vals[k] += dr;
        }
        out
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Largest off-diagonal entry (−∞ for a diagonal matrix).
    pub fn max_off_diagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c != r {
                    m = m.max(v);
                }
            }
        }
        m
    }

    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    pub(crate) fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub(crate) fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_sorted() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)]);
        assert_eq!(m.row(0), (&[0usize, 2][..], &[2.0, 1.5][..]));
        assert_eq!(m.get(1, 1), -1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn transpose_and_matvec_agree() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (1, 2, 3.0), (2, 0, 4.0), (1, 1, 1.0)]);
        let t = m.transpose();
        let x = [1.0, -2.0, 0.5];
        let y = t.mul(&x);
        let dense = m.to_dense();
        for c in 0..3 {
            let expect: f64 = (0..3).map(|r| dense[r][c] * x[r]).sum();
            assert_eq!(y[c], expect);
        }
    }

    #[test]
    fn diagonal_shift() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 1, -1.0)]);
        let s = m.add_diagonal(&[10.0, 20.0]);
        assert_eq!(s.diagonal(), vec![11.0, 22.0]);
        assert_eq!(s.max_off_diagonal(), -1.0);
        assert_eq!(s.norm_inf(), 22.0);
    }
}
