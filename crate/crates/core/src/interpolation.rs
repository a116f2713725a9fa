//! Kernel interpolation on a set of centers: kernel matrices, their Cholesky
//! factorization, interpolants in the canonical and Lagrange coordinates,
//! native norms, and fill distances.

use std::sync::Arc;

use faer::Mat;
use log::warn;

use crate::cholesky::{
    envelope_len, monotone_profile, CholeskyFactor, EnvelopeMatrix, DEFAULT_BLOCK_SIZE,
};
use crate::dynamics::BoxDomain;
use crate::error::{Error, Result};
use crate::spatial::CellIndex;
use crate::symmetric::{GridAxes, SymmetricFactorization, MAX_SYMMETRIC_DIM};
use crate::wendland::WendlandKernel;

/// Centers closer than this (relative to the kernel scale) are rejected.
pub const MIN_RELATIVE_SEPARATION: f64 = 1e-12;

/// Jitter levels tried after a failed plain factorization, relative to the
/// largest diagonal entry.
pub const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Default cap on the memory taken by one stored factor.
pub const DEFAULT_MAX_FACTOR_BYTES: usize = 2_000_000_000;

/// Relative tolerance for treating a grid as mirror-symmetric.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct FactorOptions {
    pub max_bytes: usize,
    /// Split kernel matrices on mirror-symmetric grids into parity blocks.
    pub use_symmetry: bool,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            max_bytes: DEFAULT_MAX_FACTOR_BYTES,
            use_symmetry: true,
        }
    }
}

/// Ordered, pairwise distinct points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterSet {
    dim: usize,
    coords: Vec<f64>,
    separation: f64,
    domain: Option<BoxDomain>,
    grid: Option<GridAxes>,
}

impl CenterSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("center dimension must be positive".into()));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::Input(format!(
                "expected a non-empty N x {dim} array, got {} values",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "centers contain non-finite coordinates".into(),
            ));
        }
        let (separation, pair) = min_separation(dim, &coords);
        if separation < MIN_RELATIVE_SEPARATION {
            let (i, j) = pair.unwrap_or((0, 0));
            return Err(Error::Input(format!(
                "centers {i} and {j} are near-duplicates (separation {separation:e})"
            )));
        }
        Ok(Self {
            dim,
            coords,
            separation,
            domain: None,
            grid: None,
        })
    }

    /// Nodes of a tensor grid, first axis slowest. The axes are kept so
    /// that kernel matrices on symmetric grids can be block-diagonalized.
    pub fn from_grid(grid: GridAxes) -> Result<Self> {
        let mut set = Self::new(grid.dim(), grid.coords())?;
        set.grid = Some(grid);
        Ok(set)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Input("rows have inconsistent lengths".into()));
        }
        Self::new(dim, rows.concat())
    }

    /// Attaches a domain box; every point must lie inside it.
    pub fn with_domain(mut self, domain: BoxDomain) -> Result<Self> {
        if domain.dim() != self.dim {
            return Err(Error::Input(format!(
                "domain dimension {} does not match center dimension {}",
                domain.dim(),
                self.dim
            )));
        }
        if let Some(i) = (0..self.len()).find(|&i| !domain.contains(self.point(i))) {
            return Err(Error::Input(format!(
                "center {i} at {:?} lies outside the domain",
                self.point(i)
            )));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Minimum pairwise distance (infinite for a single center).
    pub fn separation(&self) -> f64 {
        self.separation
    }

    pub fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }

    pub fn grid(&self) -> Option<&GridAxes> {
        self.grid.as_ref()
    }
}

fn min_separation(dim: usize, coords: &[f64]) -> (f64, Option<(usize, usize)>) {
    let n = coords.len() / dim;
    if n < 2 {
        return (f64::INFINITY, None);
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in coords.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let volume: f64 = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| (h - l).max(f64::EPSILON))
        .product();
    let cell = (volume / n as f64).powf(1.0 / dim as f64);
    let index = CellIndex::new(dim, coords, cell);
    let mut best = (f64::INFINITY, None);
    for i in 0..n {
        let p = &coords[i * dim..(i + 1) * dim];
        let mut radius = index.cell_width();
        loop {
            let mut local = f64::INFINITY;
            let mut arg = i;
            index.for_each_candidate(p, radius, |j| {
                if j != i {
                    let q = &coords[j * dim..(j + 1) * dim];
                    let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < local {
                        local = d2;
                        arg = j;
                    }
                }
            });
            let dist = local.sqrt();
            if dist <= radius || radius >= best.0 {
                if dist < best.0 {
                    best = (dist, Some((i.min(arg), i.max(arg))));
                }
                break;
            }
            radius *= 2.0;
        }
    }
    best
}

/// Dense kernel matrix `(K_{Z,X})_{ij} = k(z_i, x_j)`.
pub fn assemble_matrix(kernel: &WendlandKernel, z: &CenterSet, x: &CenterSet) -> Result<Mat<f64>> {
    check_dim(kernel, z.dim())?;
    check_dim(kernel, x.dim())?;
    Ok(Mat::from_fn(z.len(), x.len(), |i, j| {
        kernel.eval_unchecked(z.point(i), x.point(j))
    }))
}

fn check_dim(kernel: &WendlandKernel, dim: usize) -> Result<()> {
    if dim != kernel.dim() {
        return Err(Error::Input(format!(
            "points of dimension {dim} do not match kernel dimension {}",
            kernel.dim()
        )));
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive definite matrix, possibly with a
/// diagonal shift.
#[derive(Clone, Debug)]
pub struct SpdFactorization {
    factor: CholeskyFactor,
    jitter_used: f64,
}

impl SpdFactorization {
    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Diagonal shift added before the successful factorization.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.factor.solve_vec(rhs)
    }
}

pub(crate) fn factorize_with_jitter(
    build: impl Fn() -> EnvelopeMatrix,
    min_separation: f64,
) -> Result<SpdFactorization> {
    let matrix = build();
    let n = matrix.dim();
    let max_diag = matrix.max_diagonal();
    if let Ok(factor) = matrix.factorize() {
        return Ok(SpdFactorization {
            factor,
            jitter_used: 0.0,
        });
    }
    for level in JITTER_LEVELS {
        let shift = level * max_diag;
        let mut matrix = build();
        matrix.add_to_diagonal(shift);
        if let Ok(factor) = matrix.factorize() {
            warn!("kernel matrix of {n} centers needed diagonal jitter {shift:e}");
            return Ok(SpdFactorization {
                factor,
                jitter_used: shift,
            });
        }
    }
    Err(Error::Factorization {
        n,
        min_separation,
        max_jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1] * max_diag,
    })
}

/// Cholesky factorization of a dense symmetric matrix with escalating jitter.
pub fn factorize(matrix: &Mat<f64>) -> Result<SpdFactorization> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::Input("matrix must be square".into()));
    }
    for j in 0..matrix.ncols() {
        for i in j + 1..matrix.nrows() {
            let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
            if (a - b).abs() > 1e-14 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::Input(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    factorize_with_jitter(|| EnvelopeMatrix::from_dense(matrix.as_ref()), f64::NAN)
}

fn envelope_solver(
    kernel: &WendlandKernel,
    centers: &CenterSet,
    max_bytes: usize,
) -> Result<Solver> {
    let n = centers.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| centers.point(a)[0].total_cmp(&centers.point(b)[0]));
    let lead: Vec<f64> = order.iter().map(|&i| centers.point(i)[0]).collect();
    let mut first: Vec<usize> = lead
        .iter()
        .map(|&x| lead.partition_point(|&v| v <= x - kernel.scale()))
        .collect();
    monotone_profile(&mut first);
    let bytes = envelope_len(&first, DEFAULT_BLOCK_SIZE).saturating_mul(8);
    if bytes > max_bytes {
        return Err(Error::Resource(format!(
            "kernel matrix of {n} centers needs {bytes} bytes of factor storage, above the \
             limit of {max_bytes}"
        )));
    }
    let spd = factorize_with_jitter(
        || {
            EnvelopeMatrix::from_fn(&first, DEFAULT_BLOCK_SIZE, |i, j| {
                kernel.eval_unchecked(centers.point(order[i]), centers.point(order[j]))
            })
        },
        centers.separation(),
    )?;
    Ok(Solver::Envelope { order, spd })
}

/// Factorized kernel matrix `K_{X,X}` of a center set.
///
/// Centers are internally reordered along the first coordinate so that the
/// compact support gives the matrix a narrow envelope. Centers on a
/// mirror-symmetric tensor grid are factorized per parity block instead.
#[derive(Clone, Debug)]
pub struct KernelFactorization {
    kernel: WendlandKernel,
    centers: Arc<CenterSet>,
    solver: Solver,
    index: CellIndex,
}

#[derive(Clone, Debug)]
enum Solver {
    Envelope {
        order: Vec<usize>,
        spd: SpdFactorization,
    },
    Symmetric(SymmetricFactorization),
}

impl KernelFactorization {
    pub fn new(kernel: WendlandKernel, centers: Arc<CenterSet>) -> Result<Self> {
        Self::with_memory_limit(kernel, centers, DEFAULT_MAX_FACTOR_BYTES)
    }

    pub fn with_memory_limit(
        kernel: WendlandKernel,
        centers: Arc<CenterSet>,
        max_bytes: usize,
    ) -> Result<Self> {
        Self::with_options(
            kernel,
            centers,
            &FactorOptions {
                max_bytes,
                ..FactorOptions::default()
            },
        )
    }

    pub fn with_options(
        kernel: WendlandKernel,
        centers: Arc<CenterSet>,
        options: &FactorOptions,
    ) -> Result<Self> {
        check_dim(&kernel, centers.dim())?;
        let scale = kernel.scale();
        if centers.separation() < MIN_RELATIVE_SEPARATION * scale {
            return Err(Error::Input(format!(
                "center separation {:e} is below {:e} times the kernel scale",
                centers.separation(),
                MIN_RELATIVE_SEPARATION
            )));
        }
        let symmetric_grid = centers.grid().filter(|g| {
            options.use_symmetry
                && g.dim() <= MAX_SYMMETRIC_DIM
                && g.is_mirror_symmetric(SYMMETRY_TOLERANCE)
        });
        let solver = match symmetric_grid {
            Some(grid) => Solver::Symmetric(SymmetricFactorization::new(
                &kernel,
                grid,
                options.max_bytes,
            )?),
            None => envelope_solver(&kernel, &centers, options.max_bytes)?,
        };
        let index = CellIndex::new(centers.dim(), centers.coords(), scale);
        Ok(Self {
            kernel,
            centers,
            solver,
            index,
        })
    }

    pub fn kernel(&self) -> &WendlandKernel {
        &self.kernel
    }

    pub fn centers(&self) -> &Arc<CenterSet> {
        &self.centers
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn jitter_used(&self) -> f64 {
        match &self.solver {
            Solver::Envelope { spd, .. } => spd.jitter_used,
            Solver::Symmetric(sym) => sym.jitter_used(),
        }
    }

    /// Bytes held by the stored factors.
    pub fn factor_bytes(&self) -> usize {
        match &self.solver {
            Solver::Envelope { spd, .. } => spd.factor.stored_len() * 8,
            Solver::Symmetric(sym) => sym.stored_len() * 8,
        }
    }

    /// Whether the matrix was split into parity blocks of a symmetric grid.
    pub fn is_block_diagonalized(&self) -> bool {
        matches!(self.solver, Solver::Symmetric(_))
    }

    /// Dense `K_{X,X}` in the original center order.
    pub fn matrix(&self) -> Mat<f64> {
        assemble_matrix(&self.kernel, &self.centers, &self.centers)
            .expect("dimensions checked at construction")
    }

    /// Dense `L` with `L L^T = K_{X,X} + jitter I` in the internal (sorted)
    /// order. `None` when the matrix was block-diagonalized.
    pub fn lower_factor(&self) -> Option<Mat<f64>> {
        match &self.solver {
            Solver::Envelope { spd, .. } => Some(spd.factor.to_dense_lower()),
            Solver::Symmetric(_) => None,
        }
    }

    /// Maps internal position to original center index, for the envelope factor.
    pub fn ordering(&self) -> Option<&[usize]> {
        match &self.solver {
            Solver::Envelope { order, .. } => Some(order),
            Solver::Symmetric(_) => None,
        }
    }

    /// Solves `K_{X,X} a = b`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::Input(format!(
                "right-hand side has length {}, expected {n}",
                rhs.len()
            )));
        }
        match &self.solver {
            Solver::Envelope { order, spd } => {
                let mut permuted: Vec<f64> = order.iter().map(|&i| rhs[i]).collect();
                spd.factor.solve_slice_in_place(&mut permuted);
                let mut out = vec![0.0; n];
                for (p, &i) in order.iter().enumerate() {
                    out[i] = permuted[p];
                }
                Ok(out)
            }
            Solver::Symmetric(sym) => Ok(sym.solve(rhs)),
        }
    }

    /// Solves `K_{X,X} A = B` for a dense `B` with `N` rows.
    pub fn solve_matrix(&self, rhs: &Mat<f64>) -> Result<Mat<f64>> {
        let n = self.len();
        if rhs.nrows() != n {
            return Err(Error::Input(format!(
                "right-hand side has {} rows, expected {n}",
                rhs.nrows()
            )));
        }
        let m = rhs.ncols();
        match &self.solver {
            Solver::Envelope { order, spd } => {
                let mut permuted = Mat::from_fn(n, m, |p, j| rhs[(order[p], j)]);
                spd.factor.solve_in_place(permuted.as_mut());
                let mut out = Mat::zeros(n, m);
                for (p, &i) in order.iter().enumerate() {
                    for j in 0..m {
                        out[(i, j)] = permuted[(p, j)];
                    }
                }
                Ok(out)
            }
            Solver::Symmetric(sym) => {
                let mut flat: Vec<f64> = (0..n * m).map(|t| rhs[(t / m, t % m)]).collect();
                sym.solve_columns(&mut flat, m);
                Ok(Mat::from_fn(n, m, |i, j| flat[i * m + j]))
            }
        }
    }

    /// Explicit inverse `K_{X,X}^{-1}`.
    pub fn inverse(&self) -> Mat<f64> {
        let n = self.len();
        self.solve_matrix(&Mat::identity(n, n))
            .expect("identity has matching shape")
    }

    /// `sum_j k(z, x_j) coeffs_j` at a single point.
    pub fn eval_point(&self, coeffs: &[f64], z: &[f64]) -> f64 {
        let mut acc = 0.0;
        let r = self.kernel.scale();
        self.index.for_each_candidate(z, r, |j| {
            let v = self.kernel.eval_unchecked(z, self.centers.point(j));
            if v != 0.0 {
                acc += v * coeffs[j];
            }
        });
        acc
    }

    /// `K_{Z,X} coeffs` for row-major points `z_coords`.
    pub fn eval_coords(&self, coeffs: &[f64], z_coords: &[f64]) -> Result<Vec<f64>> {
        let d = self.centers.dim();
        if coeffs.len() != self.len() {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, expected {}",
                coeffs.len(),
                self.len()
            )));
        }
        if z_coords.len() % d != 0 {
            return Err(Error::Input(format!(
                "evaluation points are not a multiple of dimension {d}"
            )));
        }
        Ok(z_coords
            .chunks_exact(d)
            .map(|z| self.eval_point(coeffs, z))
            .collect())
    }

    /// Several coefficient vectors at once, sharing the neighbor search.
    pub fn eval_many(&self, coeffs: &[Vec<f64>], z_coords: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.centers.dim();
        if let Some(c) = coeffs.iter().find(|c| c.len() != self.len()) {
            return Err(Error::Input(format!(
                "coefficient vector has length {}, expected {}",
                c.len(),
                self.len()
            )));
        }
        if z_coords.len() % d != 0 {
            return Err(Error::Input(format!(
                "evaluation points are not a multiple of dimension {d}"
            )));
        }
        let m = z_coords.len() / d;
        let mut out = vec![vec![0.0; m]; coeffs.len()];
        let r = self.kernel.scale();
        for (i, z) in z_coords.chunks_exact(d).enumerate() {
            self.index.for_each_candidate(z, r, |j| {
                let v = self.kernel.eval_unchecked(z, self.centers.point(j));
                if v != 0.0 {
                    for (o, c) in out.iter_mut().zip(coeffs) {
                        o[i] += v * c[j];
                    }
                }
            });
        }
        Ok(out)
    }

    pub fn eval_centers(&self, coeffs: &[f64], z: &CenterSet) -> Result<Vec<f64>> {
        check_dim(&self.kernel, z.dim())?;
        self.eval_coords(coeffs, z.coords())
    }
}

/// An element of `V_X` carried in both canonical (`alpha`) and Lagrange
/// (`values`) coordinates.
#[derive(Clone, Debug)]
pub struct Interpolant {
    fact: Arc<KernelFactorization>,
    alpha: Vec<f64>,
    values: Vec<f64>,
}

/// The interpolant of `values` at the centers of `fact`.
pub fn interpolate(fact: &Arc<KernelFactorization>, values: Vec<f64>) -> Result<Interpolant> {
    let alpha = fact.solve(&values)?;
    Ok(Interpolant {
        fact: Arc::clone(fact),
        alpha,
        values,
    })
}

/// Orthogonal projection `S_X f`: samples `f` at the centers and interpolates.
pub fn project<F>(fact: &Arc<KernelFactorization>, mut f: F) -> Result<Interpolant>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let values = fact
        .centers()
        .points()
        .map(&mut f)
        .collect::<Result<Vec<_>>>()?;
    interpolate(fact, values)
}

impl Interpolant {
    /// Builds the element with canonical coefficients `alpha`.
    pub fn from_coefficients(fact: &Arc<KernelFactorization>, alpha: Vec<f64>) -> Result<Self> {
        let values = fact.eval_centers(&alpha, fact.centers())?;
        Ok(Self {
            fact: Arc::clone(fact),
            alpha,
            values,
        })
    }

    pub fn factorization(&self) -> &Arc<KernelFactorization> {
        &self.fact
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn evaluate(&self, z: &CenterSet) -> Result<Vec<f64>> {
        self.fact.eval_centers(&self.alpha, z)
    }

    pub fn evaluate_at(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.fact.kernel(), z.len())?;
        Ok(self.fact.eval_point(&self.alpha, z))
    }

    /// `||f||^2_{N(X)} = alpha^T f_X`, clamped at zero.
    pub fn native_norm_sq(&self) -> f64 {
        let v: f64 = self
            .alpha
            .iter()
            .zip(&self.values)
            .map(|(a, b)| a * b)
            .sum();
        if v < -1e-10 {
            warn!("native norm squared evaluated to {v:e}; clamping to zero");
        }
        v.max(0.0)
    }
}

/// `||K_{X,X}^{-1}||_{inf->1}^{1/2}`, i.e. the square root of the entrywise
/// absolute sum of the inverse kernel matrix.
pub fn extension_norm_bound(fact: &KernelFactorization) -> f64 {
    let inv = fact.inverse();
    let mut sum = 0.0;
    for j in 0..inv.ncols() {
        for i in 0..inv.nrows() {
            sum += inv[(i, j)].abs();
        }
    }
    sum.sqrt()
}

/// Largest distance from a probe-grid point of `domain` to its nearest center.
///
/// The probe grid includes the box faces with spacing at most `probe_resolution`;
/// the result is a lower bound on the true fill distance that converges as the
/// resolution shrinks.
pub fn fill_distance(x: &CenterSet, domain: &BoxDomain, probe_resolution: f64) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Input("fill distance of an empty center set".into()));
    }
    if x.dim() != domain.dim() {
        return Err(Error::Input("center and domain dimensions differ".into()));
    }
    if !(probe_resolution.is_finite() && probe_resolution > 0.0) {
        return Err(Error::Input(format!(
            "probe resolution must be positive, got {probe_resolution}"
        )));
    }
    let d = x.dim();
    let counts: Vec<usize> = domain
        .widths()
        .iter()
        .map(|w| ((w / probe_resolution).ceil() as usize).max(1))
        .collect();
    let cell = (domain.volume() / x.len() as f64).powf(1.0 / d as f64);
    let index = CellIndex::new(d, x.coords(), cell);
    let mut idx = vec![0usize; d];
    let mut probe = vec![0.0; d];
    let mut worst: f64 = 0.0;
    loop {
        for a in 0..d {
            let t = idx[a] as f64 / counts[a] as f64;
            probe[a] = domain.lo()[a] + t * (domain.hi()[a] - domain.lo()[a]);
        }
        if let Some((_, dist)) = index.nearest(x.coords(), &probe) {
            worst = worst.max(dist);
        }
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(worst);
            }
            a -= 1;
            if idx[a] < counts[a] {
                idx[a] += 1;
                break;
            }
            idx[a] = 0;
        }
    }
}
