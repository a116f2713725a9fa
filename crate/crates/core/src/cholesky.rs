//! Blocked Cholesky factorization of symmetric matrices stored by envelope.
//!
//! Kernel matrices of compactly supported kernels vanish far away from the
//! diagonal once the centers are sorted along one axis. Only the lower envelope
//! is stored, split into column blocks: block `J` owns columns `[c0, c0 + w)`
//! and every row from `c0` down to the last row whose envelope reaches into
//! those columns. Cholesky fill-in stays inside this envelope, so the
//! factorization runs in place with dense level-3 kernels on each block.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::reborrow::{Reborrow, ReborrowMut};
use faer::{Accum, Mat, MatMut, MatRef, Par};

pub const DEFAULT_BLOCK_SIZE: usize = 128;

#[derive(Clone, Debug)]
struct Block {
    col_start: usize,
    width: usize,
    row_end: usize,
    data: Mat<f64>,
}

impl Block {
    fn height(&self) -> usize {
        self.row_end - self.col_start
    }
}

/// Lower envelope of a symmetric `n x n` matrix.
#[derive(Clone, Debug)]
pub struct EnvelopeMatrix {
    n: usize,
    blocks: Vec<Block>,
}

/// Pivot at `index` was not positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonPositivePivot {
    pub index: usize,
}

/// Row extents of each column block for a given envelope profile.
fn block_layout(first: &[usize], block_size: usize) -> Vec<(usize, usize, usize)> {
    let n = first.len();
    let bs = block_size.max(1);
    (0..n)
        .step_by(bs)
        .map(|c0| {
            let c1 = (c0 + bs).min(n);
            let row_end = first.partition_point(|&f| f < c1).max(c1);
            (c0, c1 - c0, row_end)
        })
        .collect()
}

/// Number of stored entries for an envelope profile.
pub fn envelope_len(first: &[usize], block_size: usize) -> usize {
    block_layout(first, block_size)
        .iter()
        .map(|&(c0, w, row_end)| (row_end - c0) * w)
        .sum()
}

/// Makes a row profile monotone: `first[i] <= first[i + 1]` and `first[i] <= i`.
pub fn monotone_profile(first: &mut [usize]) {
    let n = first.len();
    for i in 0..n {
        first[i] = first[i].min(i);
    }
    for i in (0..n.saturating_sub(1)).rev() {
        first[i] = first[i].min(first[i + 1]);
    }
}

impl EnvelopeMatrix {
    /// Fills the envelope from `entry(i, j)` for `i >= j`, `j >= first[i]`.
    ///
    /// `first` must be monotone with `first[i] <= i` (see [`monotone_profile`]).
    pub fn from_fn(
        first: &[usize],
        block_size: usize,
        mut entry: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let n = first.len();
        debug_assert!(first.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(first.iter().enumerate().all(|(i, &f)| f <= i));
        let blocks = block_layout(first, block_size)
            .into_iter()
            .map(|(col_start, width, row_end)| {
                let mut data = Mat::<f64>::zeros(row_end - col_start, width);
                for jj in 0..width {
                    let j = col_start + jj;
                    let col = data.col_as_slice_mut(jj);
                    for i in j..row_end {
                        if first[i] <= j {
                            col[i - col_start] = entry(i, j);
                        }
                    }
                }
                Block {
                    col_start,
                    width,
                    row_end,
                    data,
                }
            })
            .collect();
        Self { n, blocks }
    }

    /// Full lower triangle of a dense symmetric matrix.
    pub fn from_dense(matrix: MatRef<'_, f64>) -> Self {
        let n = matrix.nrows();
        let first = vec![0; n];
        Self::from_fn(&first, DEFAULT_BLOCK_SIZE, |i, j| matrix[(i, j)])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored_len(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.data.nrows() * b.data.ncols())
            .sum()
    }

    /// Entry `(i, j)`; zero outside the envelope.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let b = self.block_of(j);
        if i < b.row_end {
            b.data[(i - b.col_start, j - b.col_start)]
        } else {
            0.0
        }
    }

    fn block_of(&self, j: usize) -> &Block {
        let idx = self.blocks.partition_point(|b| b.col_start + b.width <= j);
        &self.blocks[idx]
    }

    pub fn max_diagonal(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| (0..b.width).map(move |jj| b.data[(jj, jj)]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add_to_diagonal(&mut self, shift: f64) {
        for b in &mut self.blocks {
            for jj in 0..b.width {
                b.data[(jj, jj)] += shift;
            }
        }
    }

    /// Dense symmetric copy (testing and diagnostics).
    pub fn to_dense(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-place Cholesky factorization `A = L L^T`.
    pub fn factorize(mut self) -> Result<CholeskyFactor, NonPositivePivot> {
        let par = Par::Seq;
        let max_width = self.blocks.iter().map(|b| b.width).max().unwrap_or(0);
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(
            max_width,
            par,
            Default::default(),
        ));
        for jb in 0..self.blocks.len() {
            let (done, rest) = self.blocks.split_at_mut(jb + 1);
            let cur = &mut done[jb];
            let (c0, w, row_end) = (cur.col_start, cur.width, cur.row_end);
            let (mut diag, mut panel) = cur.data.as_mut().split_at_row_mut(w);
            cholesky_in_place(
                diag.rb_mut(),
                Default::default(),
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|err| match err {
                faer::linalg::cholesky::llt::factor::LltError::NonPositivePivot { index } => {
                    NonPositivePivot { index: c0 + index }
                }
            })?;
            if panel.nrows() == 0 {
                continue;
            }
            solve_lower_triangular_in_place(diag.rb(), panel.rb_mut().transpose_mut(), par);
            let panel = panel.rb();
            let panel_start = c0 + w;
            for target in rest.iter_mut() {
                if target.col_start >= row_end {
                    break;
                }
                let offset = target.col_start - panel_start;
                let rows = row_end - target.col_start;
                let cols = target.width.min(rows);
                let lhs = panel.submatrix(offset, 0, rows, w);
                let rhs = panel.submatrix(offset, 0, cols, w);
                let dst = target.data.as_mut().submatrix_mut(0, 0, rows, cols);
                matmul(dst, Accum::Add, lhs, rhs.transpose(), -1.0, par);
            }
        }
        Ok(CholeskyFactor {
            n: self.n,
            blocks: self.blocks,
        })
    }
}

/// Lower-triangular factor produced by [`EnvelopeMatrix::factorize`].
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    n: usize,
    blocks: Vec<Block>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored_len(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.data.nrows() * b.data.ncols())
            .sum()
    }

    /// Solves `L L^T X = B` in place; `B` has `n` rows and any number of columns.
    pub fn solve_in_place(&self, mut rhs: MatMut<'_, f64>) {
        assert_eq!(rhs.nrows(), self.n, "right-hand side has wrong row count");
        let par = Par::Seq;
        for b in &self.blocks {
            let (diag, panel) = b.data.as_ref().split_at_row(b.width);
            let tail = rhs.rb_mut().subrows_mut(b.col_start, b.height());
            let (mut head, mut below) = tail.split_at_row_mut(b.width);
            solve_lower_triangular_in_place(diag, head.rb_mut(), par);
            if b.height() > b.width {
                matmul(below.rb_mut(), Accum::Add, panel, head.rb(), -1.0, par);
            }
        }
        for b in self.blocks.iter().rev() {
            let (diag, panel) = b.data.as_ref().split_at_row(b.width);
            let tail = rhs.rb_mut().subrows_mut(b.col_start, b.height());
            let (mut head, below) = tail.split_at_row_mut(b.width);
            if b.height() > b.width {
                matmul(
                    head.rb_mut(),
                    Accum::Add,
                    panel.transpose(),
                    below.rb(),
                    -1.0,
                    par,
                );
            }
            solve_upper_triangular_in_place(diag.transpose(), head.rb_mut(), par);
        }
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = rhs.to_vec();
        self.solve_slice_in_place(&mut out);
        out
    }

    pub fn solve_slice_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        let view = faer::MatMut::from_column_major_slice_mut(rhs, n, 1);
        self.solve_in_place(view);
    }

    /// Entry `(i, j)` of `L` (zero above the diagonal and outside the envelope).
    pub fn l_entry(&self, i: usize, j: usize) -> f64 {
        if i < j {
            return 0.0;
        }
        let idx = self.blocks.partition_point(|b| b.col_start + b.width <= j);
        let b = &self.blocks[idx];
        if i < b.row_end {
            b.data[(i - b.col_start, j - b.col_start)]
        } else {
            0.0
        }
    }

    pub fn to_dense_lower(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.n, |i, j| self.l_entry(i, j))
    }

    /// `L L^T` as a dense matrix.
    pub fn reconstruct(&self) -> Mat<f64> {
        let l = self.to_dense_lower();
        &l * l.transpose()
    }

    /// Smallest diagonal entry of `L`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.n)
            .map(|i| self.l_entry(i, i))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_banded(n: usize, band: usize) -> Mat<f64> {
        Mat::from_fn(n, n, |i, j| {
            let d = i.abs_diff(j);
            if i == j {
                4.0 + (i % 3) as f64
            } else if d <= band {
                1.0 / (1.0 + d as f64)
            } else {
                0.0
            }
        })
    }

    fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..a.ncols() {
            for i in 0..a.nrows() {
                m = m.max((a[(i, j)] - b[(i, j)]).abs());
            }
        }
        m
    }

    #[test]
    fn identity_factor_is_identity() {
        let id = Mat::<f64>::identity(5, 5);
        let f = EnvelopeMatrix::from_dense(id.as_ref()).factorize().unwrap();
        assert_eq!(max_abs_diff(f.to_dense_lower().as_ref(), id.as_ref()), 0.0);
    }

    #[test]
    fn banded_matches_dense_reconstruction() {
        let n = 37;
        let band = 5;
        let a = spd_banded(n, band);
        let mut first: Vec<usize> = (0..n).map(|i| i.saturating_sub(band)).collect();
        monotone_profile(&mut first);
        let env = EnvelopeMatrix::from_fn(&first, 8, |i, j| a[(i, j)]);
        assert!(env.stored_len() < n * n);
        assert_eq!(max_abs_diff(env.to_dense().as_ref(), a.as_ref()), 0.0);
        let f = env.factorize().unwrap();
        assert!(max_abs_diff(f.reconstruct().as_ref(), a.as_ref()) < 1e-12);

        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = f.solve_vec(&b);
        let ax: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] * x[j]).sum())
            .collect();
        for (u, v) in ax.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_reports_pivot() {
        let mut a = Mat::<f64>::identity(4, 4);
        a[(2, 2)] = -1.0;
        let err = EnvelopeMatrix::from_dense(a.as_ref())
            .factorize()
            .unwrap_err();
        assert_eq!(err.index, 2);
    }

    #[test]
    fn multi_rhs_solve() {
        let n = 300;
        let a = spd_banded(n, 40);
        let f = EnvelopeMatrix::from_dense(a.as_ref()).factorize().unwrap();
        let b = Mat::from_fn(n, 3, |i, j| (i * (j + 1)) as f64 / n as f64);
        let mut x = b.clone();
        f.solve_in_place(x.as_mut());
        let r = &a * &x;
        assert!(max_abs_diff(r.as_ref(), b.as_ref()) < 1e-10);
    }

    #[test]
    fn profile_is_made_monotone() {
        let mut first = vec![0, 1, 0, 3, 2, 5];
        monotone_profile(&mut first);
        assert_eq!(first, vec![0, 0, 0, 2, 2, 5]);
    }
}
