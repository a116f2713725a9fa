//! Kernel matrices on mirror-symmetric tensor grids.
//!
//! A radial kernel commutes with the reflections `x_a -> c_a - x_a` that map
//! such a grid onto itself. In the orthonormal basis of per-axis even and odd
//! combinations `(e_i +- e_mirror(i)) / sqrt(2)` the kernel matrix splits into
//! `2^d` independent blocks ("sectors"), each about `2^-d` the size. The
//! blocks are factorized separately.

use crate::cholesky::{envelope_len, monotone_profile, EnvelopeMatrix, DEFAULT_BLOCK_SIZE};
use crate::error::{Error, Result};
use crate::interpolation::{factorize_with_jitter, SpdFactorization};
use crate::wendland::WendlandKernel;

/// Sectors are only formed up to this dimension (`2^d` blocks, `2^d` kernel
/// evaluations per block entry).
pub const MAX_SYMMETRIC_DIM: usize = 4;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Per-axis node coordinates of a tensor grid; point index has the first
/// axis varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxes {
    axes: Vec<Vec<f64>>,
}

impl GridAxes {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(Error::Input("grid axes must be non-empty".into()));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("grid axes contain non-finite values".into()));
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major coordinates of all nodes.
    pub fn coords(&self) -> Vec<f64> {
        let d = self.dim();
        let total = self.len();
        let mut out = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            out.extend((0..d).map(|a| self.axes[a][idx[a]]));
            for a in (0..d).rev() {
                idx[a] += 1;
                if idx[a] < self.axes[a].len() {
                    break;
                }
                idx[a] = 0;
            }
        }
        out
    }

    /// Whether every axis is symmetric about its midpoint to within
    /// `rel_tol` times its width.
    pub fn is_mirror_symmetric(&self, rel_tol: f64) -> bool {
        self.axes.iter().all(|ax| {
            let n = ax.len();
            let width = (ax[n - 1] - ax[0]).abs().max(f64::MIN_POSITIVE);
            let mid = 0.5 * (ax[0] + ax[n - 1]);
            (0..n).all(|i| ((ax[i] - mid) + (ax[n - 1 - i] - mid)).abs() <= rel_tol * width)
        })
    }
}

#[derive(Clone, Debug)]
struct Axis {
    n: usize,
    /// Coordinate of node `i` relative to the axis midpoint, for `i < ceil(n/2)`.
    u: Vec<f64>,
}

impl Axis {
    fn count(&self, odd: bool) -> usize {
        if odd {
            self.n / 2
        } else {
            self.n.div_ceil(2)
        }
    }

    fn is_center(&self, i: usize) -> bool {
        self.n % 2 == 1 && i == self.n / 2
    }

    /// Grid nodes and weights of basis vector `i`: `(node, weight)`.
    fn terms(&self, i: usize, odd: bool) -> ([(usize, f64); 2], usize) {
        if self.is_center(i) {
            ([(i, 1.0), (i, 0.0)], 1)
        } else {
            let s = if odd { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
            ([(i, FRAC_1_SQRT_2), (self.n - 1 - i, s)], 2)
        }
    }

    /// Weights of the `(u_i - u_j)^2` and `(u_i + u_j)^2` terms.
    fn weights(&self, i: usize, j: usize, odd: bool) -> (f64, f64) {
        match (self.is_center(i), self.is_center(j)) {
            (true, true) => (1.0, 0.0),
            (true, false) | (false, true) => (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
            (false, false) if odd => (1.0, -1.0),
            (false, false) => (1.0, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
struct Sector {
    /// Per-axis parity.
    odd: Vec<bool>,
    counts: Vec<usize>,
    /// Internal position -> sector-local linear index.
    order: Vec<usize>,
    spd: SpdFactorization,
}

/// Block-diagonalized factorization of a kernel matrix on a symmetric grid.
#[derive(Clone, Debug)]
pub struct SymmetricFactorization {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    sectors: Vec<Sector>,
}

fn linear_to_multi(mut lin: usize, counts: &[usize], out: &mut [usize]) {
    for a in (0..counts.len()).rev() {
        out[a] = lin % counts[a];
        lin /= counts[a];
    }
}

impl SymmetricFactorization {
    /// Total stored factor entries if the sectors of `grid` were factorized.
    pub fn estimate_len(kernel: &WendlandKernel, grid: &GridAxes) -> usize {
        let axes = Self::fold(grid);
        Self::sector_parities(grid.dim())
            .map(|odd| {
                let counts: Vec<usize> = (0..grid.dim()).map(|a| axes[a].count(odd[a])).collect();
                if counts.contains(&0) {
                    return 0;
                }
                let (_, first) = Self::layout(&axes, &counts, kernel.scale());
                envelope_len(&first, DEFAULT_BLOCK_SIZE)
            })
            .sum()
    }

    fn fold(grid: &GridAxes) -> Vec<Axis> {
        (0..grid.dim())
            .map(|a| {
                let ax = grid.axis(a);
                let n = ax.len();
                let mid = 0.5 * (ax[0] + ax[n - 1]);
                Axis {
                    n,
                    u: ax[..n.div_ceil(2)].iter().map(|x| x - mid).collect(),
                }
            })
            .collect()
    }

    fn sector_parities(d: usize) -> impl Iterator<Item = Vec<bool>> {
        (0..1usize << d).map(move |mask| (0..d).map(|a| mask >> a & 1 == 1).collect())
    }

    /// Sorts sector entries along the longest folded axis and returns the
    /// ordering and envelope profile.
    fn layout(axes: &[Axis], counts: &[usize], scale: f64) -> (Vec<usize>, Vec<usize>) {
        let d = axes.len();
        let key_axis = (0..d)
            .max_by(|&a, &b| {
                let ea = axes[a].u.first().map_or(0.0, |u| u.abs());
                let eb = axes[b].u.first().map_or(0.0, |u| u.abs());
                ea.total_cmp(&eb)
            })
            .unwrap_or(0);
        let total: usize = counts.iter().product();
        let stride: usize = counts[key_axis + 1..].iter().product();
        let key = |lin: usize| axes[key_axis].u[(lin / stride) % counts[key_axis]].abs();
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let keys: Vec<f64> = order.iter().map(|&l| key(l)).collect();
        let mut first: Vec<usize> = keys
            .iter()
            .map(|&k| keys.partition_point(|&v| v <= k - scale))
            .collect();
        monotone_profile(&mut first);
        (order, first)
    }

    pub fn new(kernel: &WendlandKernel, grid: &GridAxes, max_bytes: usize) -> Result<Self> {
        let d = grid.dim();
        if d != kernel.dim() {
            return Err(Error::Input(format!(
                "grid dimension {d} does not match kernel dimension {}",
                kernel.dim()
            )));
        }
        if d > MAX_SYMMETRIC_DIM {
            return Err(Error::Input(format!(
                "symmetric factorization supports d <= {MAX_SYMMETRIC_DIM}, got {d}"
            )));
        }
        let bytes = Self::estimate_len(kernel, grid).saturating_mul(8);
        if bytes > max_bytes {
            return Err(Error::Resource(format!(
                "kernel matrix of {} grid centers needs {bytes} bytes of factor storage, above \
                 the limit of {max_bytes}",
                grid.len()
            )));
        }
        let axes = Self::fold(grid);
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * grid.axis(a + 1).len();
        }
        let min_spacing = (0..d)
            .filter_map(|a| {
                grid.axis(a)
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .min_by(f64::total_cmp)
            })
            .fold(f64::INFINITY, f64::min);

        let mut sectors = Vec::new();
        for odd in Self::sector_parities(d) {
            let counts: Vec<usize> = (0..d).map(|a| axes[a].count(odd[a])).collect();
            if counts.contains(&0) {
                continue;
            }
            let (order, first) = Self::layout(&axes, &counts, kernel.scale());
            let entry = |p: usize, q: usize| {
                let mut pi = [0usize; MAX_SYMMETRIC_DIM];
                let mut qi = [0usize; MAX_SYMMETRIC_DIM];
                linear_to_multi(order[p], &counts, &mut pi[..d]);
                linear_to_multi(order[q], &counts, &mut qi[..d]);
                sector_entry(kernel, &axes, &odd, &pi[..d], &qi[..d])
            };
            let build = || EnvelopeMatrix::from_fn(&first, DEFAULT_BLOCK_SIZE, entry);
            let spd = factorize_with_jitter(build, min_spacing)?;
            sectors.push(Sector {
                odd,
                counts,
                order,
                spd,
            });
        }
        Ok(Self {
            axes,
            strides,
            sectors,
        })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn stored_len(&self) -> usize {
        self.sectors
            .iter()
            .map(|s| s.spd.factor().stored_len())
            .sum()
    }

    pub fn jitter_used(&self) -> f64 {
        self.sectors
            .iter()
            .map(|s| s.spd.jitter_used())
            .fold(0.0, f64::max)
    }

    /// Calls `visit(grid_index, weight)` for the nodes of sector basis vector `local`.
    fn for_each_term(&self, sector: &Sector, local: usize, mut visit: impl FnMut(usize, f64)) {
        let d = self.axes.len();
        let mut idx = [0usize; MAX_SYMMETRIC_DIM];
        linear_to_multi(local, &sector.counts, &mut idx[..d]);
        let mut terms = [([(0usize, 0.0f64); 2], 0usize); MAX_SYMMETRIC_DIM];
        for a in 0..d {
            terms[a] = self.axes[a].terms(idx[a], sector.odd[a]);
        }
        for combo in 0..1usize << d {
            let mut node = 0;
            let mut w = 1.0;
            let mut valid = true;
            for a in 0..d {
                let t = combo >> a & 1;
                if t >= terms[a].1 {
                    valid = false;
                    break;
                }
                let (i, wi) = terms[a].0[t];
                node += i * self.strides[a];
                w *= wi;
            }
            if valid {
                visit(node, w);
            }
        }
    }

    /// Solves `K x = b` for every column of the row-major `n x m` array `rhs`
    /// (in place).
    pub fn solve_columns(&self, rhs: &mut [f64], m: usize) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n * m);
        let mut out = vec![0.0; n * m];
        for sector in &self.sectors {
            let ns = sector.order.len();
            let mut local = faer::Mat::<f64>::zeros(ns, m);
            for (p, &lin) in sector.order.iter().enumerate() {
                self.for_each_term(sector, lin, |node, w| {
                    for c in 0..m {
                        local[(p, c)] += w * rhs[node * m + c];
                    }
                });
            }
            sector.spd.factor().solve_in_place(local.as_mut());
            for (p, &lin) in sector.order.iter().enumerate() {
                self.for_each_term(sector, lin, |node, w| {
                    for c in 0..m {
                        out[node * m + c] += w * local[(p, c)];
                    }
                });
            }
        }
        rhs.copy_from_slice(&out);
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_columns(&mut x, 1);
        x
    }
}

fn sector_entry(
    kernel: &WendlandKernel,
    axes: &[Axis],
    odd: &[bool],
    p: &[usize],
    q: &[usize],
) -> f64 {
    let d = axes.len();
    let mut minus = [0.0f64; MAX_SYMMETRIC_DIM];
    let mut plus = [0.0f64; MAX_SYMMETRIC_DIM];
    let mut w_minus = [0.0f64; MAX_SYMMETRIC_DIM];
    let mut w_plus = [0.0f64; MAX_SYMMETRIC_DIM];
    for a in 0..d {
        let (ui, uj) = (axes[a].u[p[a]], axes[a].u[q[a]]);
        minus[a] = (ui - uj) * (ui - uj);
        plus[a] = (ui + uj) * (ui + uj);
        (w_minus[a], w_plus[a]) = axes[a].weights(p[a], q[a], odd[a]);
    }
    let mut acc = 0.0;
    for combo in 0..1usize << d {
        let mut w = 1.0;
        let mut dist_sq = 0.0;
        for a in 0..d {
            if combo >> a & 1 == 0 {
                w *= w_minus[a];
                dist_sq += minus[a];
            } else {
                w *= w_plus[a];
                dist_sq += plus[a];
            }
        }
        if w != 0.0 {
            acc += w * kernel.eval_sq_dist(dist_sq);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    fn dense_solve(kernel: &WendlandKernel, coords: &[f64], d: usize, b: &[f64]) -> Vec<f64> {
        let n = coords.len() / d;
        let k = Mat::from_fn(n, n, |i, j| {
            kernel.eval_unchecked(&coords[i * d..(i + 1) * d], &coords[j * d..(j + 1) * d])
        });
        let dense = crate::cholesky::EnvelopeMatrix::from_dense(k.as_ref());
        dense.factorize().unwrap().solve_vec(b)
    }

    fn check(axes: Vec<Vec<f64>>, k: usize, scale: f64) {
        let grid = GridAxes::new(axes).unwrap();
        let d = grid.dim();
        let kernel = WendlandKernel::with_scale(d, k, scale).unwrap();
        let coords = grid.coords();
        let n = grid.len();
        let b: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let fact = SymmetricFactorization::new(&kernel, &grid, usize::MAX).unwrap();
        let x = fact.solve(&b);
        let expected = dense_solve(&kernel, &coords, d, &b);
        let scale_x = expected.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, e) in x.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-8 * scale_x.max(1.0), "{a} vs {e}");
        }
    }

    #[test]
    fn odd_and_even_axis_lengths_1d() {
        let ax = |n: usize| {
            (0..n)
                .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
                .collect()
        };
        check(vec![ax(7)], 1, 1.0);
        check(vec![ax(8)], 2, 0.7);
    }

    #[test]
    fn mixed_axes_2d_and_3d() {
        let ax = |n: usize, w: f64| {
            (0..n)
                .map(|i| w * (i as f64 / (n - 1) as f64 - 0.5))
                .collect()
        };
        check(vec![ax(6, 2.0), ax(5, 1.5)], 1, 0.8);
        check(vec![ax(4, 1.0), ax(5, 1.0), ax(3, 1.0)], 2, 1.0);
        check(vec![vec![0.3], ax(5, 1.0)], 1, 1.0);
    }

    #[test]
    fn nonzero_midpoint() {
        let ax: Vec<f64> = (0..9).map(|i| 3.0 + 0.25 * i as f64).collect();
        check(vec![ax.clone(), ax], 1, 1.0);
    }

    #[test]
    fn symmetry_detection() {
        let g = GridAxes::new(vec![vec![0.0, 0.5, 1.0], vec![-1.0, 0.2, 1.0]]).unwrap();
        assert!(!g.is_mirror_symmetric(1e-12));
        let g = GridAxes::new(vec![vec![0.0, 0.5, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(g.is_mirror_symmetric(1e-12));
    }

    #[test]
    fn sectors_cover_all_dofs() {
        let ax: Vec<f64> = (0..5).map(|i| i as f64 * 0.2).collect();
        let grid = GridAxes::new(vec![ax.clone(), ax.clone(), ax]).unwrap();
        let kernel = WendlandKernel::new(3, 1).unwrap();
        let f = SymmetricFactorization::new(&kernel, &grid, usize::MAX).unwrap();
        let total: usize = f.sectors.iter().map(|s| s.order.len()).sum();
        assert_eq!(total, 125);
        assert_eq!(f.sector_count(), 8);
    }
}
