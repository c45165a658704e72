//! Compressed sparse row matrices with a fixed pattern.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Zero matrix whose pattern couples every row DOF of a cell with every
    /// column DOF of the same cell.
    pub fn from_cell_pattern<'a>(
        nrows: usize,
        ncols: usize,
        cells: impl Iterator<Item = (&'a [usize], &'a [usize])>,
    ) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for (r, c) in cells {
            for &i in r {
                rows[i].extend_from_slice(c);
            }
        }
        Self::from_rows(nrows, ncols, rows)
    }

    fn from_rows(nrows: usize, ncols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Sum duplicate triplets into a CSR matrix.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); nrows];
        for &(i, j, _) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::SpaceMismatch(format!(
                    "triplet ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            rows[i].push(j);
        }
        let mut m = Self::from_rows(nrows, ncols, rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let trips: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &trips).expect("in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Accumulate into an existing pattern entry. Panics outside the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the sparsity pattern"));
        self.values[k] += v;
    }

    /// Scatter a dense row-major block `local[i·cols.len() + j]`.
    pub fn add_local(&mut self, rows: &[usize], cols: &[usize], local: &[f64]) {
        debug_assert_eq!(local.len(), rows.len() * cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                self.add(r, c, local[i * cols.len() + j]);
            }
        }
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, a) in self.row(i) {
                y[j] += a * xi;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                rows[j].push(i);
            }
        }
        let mut t = Self::from_rows(self.ncols, self.nrows, rows);
        for i in 0..self.nrows {
            for (j, a) in self.row(i) {
                t.add(j, i, a);
            }
        }
        t
    }

    /// `Σ_k s_k A_k` over matrices of equal shape; the pattern is the union.
    pub fn lin_comb(terms: &[(f64, &SparseMatrix)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        for (_, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols), "lin_comb shape mismatch");
        }
        let rows = (0..nrows)
            .map(|i| {
                terms
                    .iter()
                    .flat_map(|(_, m)| m.row(i).map(|(j, _)| j))
                    .collect()
            })
            .collect();
        let mut out = Self::from_rows(nrows, ncols, rows);
        for (s, m) in terms {
            for i in 0..nrows {
                for (j, a) in m.row(i) {
                    out.add(i, j, s * a);
                }
            }
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(_, a)| a.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - s A_ji|`, e.g. `s = 1` for symmetry, `s = -1` for skewness.
    pub fn max_asymmetry(&self, s: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, a) in self.row(i) {
                worst = worst.max((a - s * self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Submatrix with the given (sorted or unsorted) rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            col_map[j] = k;
        }
        let mut trips = Vec::new();
        for (ri, &i) in rows.iter().enumerate() {
            for (j, a) in self.row(i) {
                if col_map[j] != usize::MAX {
                    trips.push((ri, col_map[j], a));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &trips).expect("in range")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, a)| (i, j, a)))
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, -1.0), (0, 0, 1.0)])
            .unwrap()
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let a = sample();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a.mul_vec(&x), vec![6.0, 6.0, -1.0]);
        assert_eq!(a.transpose().mul_vec(&x), a.transpose_mul_vec(&x));
    }

    #[test]
    fn skew_part_is_skew() {
        let a = sample();
        let s = SparseMatrix::lin_comb(&[(0.5, &a), (-0.5, &a.transpose())]);
        assert_eq!(s.max_asymmetry(-1.0), 0.0);
        assert_eq!(s.get(0, 2), 1.0);
    }

    #[test]
    fn select_block() {
        let a = sample();
        let b = a.select(&[0, 2], &[0, 2]);
        assert_eq!(b.to_dense(), vec![vec![3.0, 1.0], vec![-1.0, 0.0]]);
    }
}
