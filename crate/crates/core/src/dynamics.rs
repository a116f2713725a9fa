//! Benchmark vector fields, their RK4 flow maps, and tensor grids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::CenterSet;
use crate::symmetric::GridAxes;

pub const DEFAULT_DT: f64 = 0.02;
pub const DEFAULT_SUBSTEPS: usize = 4;
pub const DEFAULT_MAX_GRID_POINTS: usize = 200_000;

/// Autonomous vector fields used as benchmark dynamics.
#[derive(Clone, Debug, PartialEq)]
pub enum VectorField {
    /// `(x2, x1 - 3 x1^3)`
    Duffing,
    Lorenz {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    /// Zero right-hand side; the flow is the identity map.
    Identity {
        dim: usize,
    },
    /// `x' = M x` with a row-major `dim x dim` matrix.
    Linear {
        dim: usize,
        matrix: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Duffing,
    Lorenz,
    Identity,
    Linear,
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duffing" => Ok(SystemId::Duffing),
            "lorenz" => Ok(SystemId::Lorenz),
            "identity" => Ok(SystemId::Identity),
            "linear" => Ok(SystemId::Linear),
            other => Err(Error::Input(format!("unknown system `{other}`"))),
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SystemId::Duffing => "duffing",
            SystemId::Lorenz => "lorenz",
            SystemId::Identity => "identity",
            SystemId::Linear => "linear",
        };
        f.write_str(s)
    }
}

impl VectorField {
    pub fn lorenz() -> Self {
        VectorField::Lorenz {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn linear(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if dim == 0 || matrix.len() != dim * dim {
            return Err(Error::Input(format!(
                "linear field needs a {dim}x{dim} matrix, got {} entries",
                matrix.len()
            )));
        }
        Ok(VectorField::Linear { dim, matrix })
    }

    pub fn id(&self) -> SystemId {
        match self {
            VectorField::Duffing => SystemId::Duffing,
            VectorField::Lorenz { .. } => SystemId::Lorenz,
            VectorField::Identity { .. } => SystemId::Identity,
            VectorField::Linear { .. } => SystemId::Linear,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Duffing => 2,
            VectorField::Lorenz { .. } => 3,
            VectorField::Identity { dim } | VectorField::Linear { dim, .. } => *dim,
        }
    }

    /// Writes the right-hand side at `x` into `out`.
    #[inline]
    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            VectorField::Duffing => {
                out[0] = x[1];
                out[1] = x[0] - 3.0 * x[0] * x[0] * x[0];
            }
            VectorField::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            VectorField::Identity { .. } => out.fill(0.0),
            VectorField::Linear { dim, matrix } => {
                for (i, row) in matrix.chunks_exact(*dim).enumerate() {
                    out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "{} field expects a {}-vector, got {}",
                self.id(),
                self.dim(),
                x.len()
            )));
        }
        let mut out = vec![0.0; x.len()];
        self.rhs_into(x, &mut out);
        Ok(out)
    }
}

/// Time-`dt` flow of a vector field, approximated by classical RK4.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    field: VectorField,
    dt: f64,
    substeps: usize,
}

impl FlowMap {
    pub fn new(field: VectorField, dt: f64, substeps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        Ok(Self {
            field,
            dt,
            substeps,
        })
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn flow(&self, x0: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if x0.len() != d {
            return Err(Error::Input(format!(
                "flow expects a {d}-vector, got {}",
                x0.len()
            )));
        }
        let h = self.dt / self.substeps as f64;
        let mut x = x0.to_vec();
        let mut k1 = vec![0.0; d];
        let mut k2 = vec![0.0; d];
        let mut k3 = vec![0.0; d];
        let mut k4 = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        for _ in 0..self.substeps {
            self.field.rhs_into(&x, &mut k1);
            for a in 0..d {
                tmp[a] = x[a] + 0.5 * h * k1[a];
            }
            self.field.rhs_into(&tmp, &mut k2);
            for a in 0..d {
                tmp[a] = x[a] + 0.5 * h * k2[a];
            }
            self.field.rhs_into(&tmp, &mut k3);
            for a in 0..d {
                tmp[a] = x[a] + h * k3[a];
            }
            self.field.rhs_into(&tmp, &mut k4);
            for a in 0..d {
                x[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Integration { start: x0.to_vec() });
            }
        }
        Ok(x)
    }

    /// Flows every row of a row-major point array.
    pub fn flow_points(&self, coords: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        if coords.len() % d != 0 {
            return Err(Error::Input(format!(
                "point array of length {} is not a multiple of the dimension {d}",
                coords.len()
            )));
        }
        let mut out = Vec::with_capacity(coords.len());
        for p in coords.chunks_exact(d) {
            out.extend(self.flow(p)?);
        }
        Ok(out)
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Input(format!(
                "box bounds have mismatched dimensions {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
        {
            return Err(Error::Input(format!(
                "box requires lo < hi componentwise, got lo = {lo:?}, hi = {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn volume(&self) -> f64 {
        self.widths().iter().product()
    }

    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                (0..d)
                    .map(|a| {
                        if mask >> a & 1 == 1 {
                            self.hi[a]
                        } else {
                            self.lo[a]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Smallest box containing all rows of `coords`, enlarged by `margin` on each side.
pub fn bounding_box(dim: usize, coords: &[f64], margin: f64) -> Result<BoxDomain> {
    if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
        return Err(Error::Input("bounding box needs at least one point".into()));
    }
    if !(margin >= 0.0) {
        return Err(Error::Input(format!(
            "margin must be non-negative, got {margin}"
        )));
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in coords.chunks_exact(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    BoxDomain::new(
        lo.into_iter().map(|v| v - margin).collect(),
        hi.into_iter().map(|v| v + margin).collect(),
    )
}

/// How a nominal mesh size `h` maps to a grid spacing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridConvention {
    /// `h` is the fill distance of the grid in the closed box: spacing `2h / sqrt(d)`.
    #[default]
    FillDistance,
    /// `h` is the grid spacing itself.
    Spacing,
}

/// Tensor grid including the box faces, `counts[a]` cells along axis `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    domain: BoxDomain,
    counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(domain: BoxDomain, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != domain.dim() || counts.contains(&0) {
            return Err(Error::Input(format!(
                "grid needs one positive cell count per axis, got {counts:?}"
            )));
        }
        Ok(Self { domain, counts })
    }

    /// Grid whose spacing realizes the nominal size `h` under `convention`,
    /// with per-axis cell counts rounded to the nearest integer.
    pub fn for_mesh_size(domain: BoxDomain, h: f64, convention: GridConvention) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Input(format!("mesh size must be positive, got {h}")));
        }
        let d = domain.dim() as f64;
        let spacing = match convention {
            GridConvention::FillDistance => 2.0 * h / d.sqrt(),
            GridConvention::Spacing => h,
        };
        let counts = domain
            .widths()
            .iter()
            .map(|w| ((w / spacing).round() as usize).max(1))
            .collect();
        Self::new(domain, counts)
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.domain
            .widths()
            .iter()
            .zip(&self.counts)
            .map(|(w, &c)| w / c as f64)
            .collect()
    }

    /// Fill distance of the node set in the closed box: half the cell diagonal.
    pub fn fill_distance(&self) -> f64 {
        0.5 * self.spacings().iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().map(|c| c + 1).product()
    }

    pub fn cell_count(&self) -> usize {
        self.counts.iter().product()
    }

    /// Grid nodes, first axis slowest.
    pub fn nodes(&self, max_points: usize) -> Result<CenterSet> {
        let n = self.node_count();
        if n > max_points {
            return Err(Error::Resource(format!(
                "grid with {n} points exceeds the limit of {max_points}"
            )));
        }
        let axes: Vec<Vec<f64>> = (0..self.domain.dim())
            .map(|a| {
                let (lo, hi, c) = (self.domain.lo[a], self.domain.hi[a], self.counts[a]);
                (0..=c)
                    .map(|i| {
                        if i == c {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / c as f64
                        }
                    })
                    .collect()
            })
            .collect();
        CenterSet::from_grid(GridAxes::new(axes)?)
    }

    /// Cell centers, i.e. the points farthest from the nodes.
    pub fn cell_centers(&self, max_points: usize) -> Result<CenterSet> {
        let n = self.cell_count();
        if n > max_points {
            return Err(Error::Resource(format!(
                "validation grid with {n} points exceeds the limit of {max_points}"
            )));
        }
        let axes: Vec<Vec<f64>> = (0..self.domain.dim())
            .map(|a| {
                let (lo, hi, c) = (self.domain.lo[a], self.domain.hi[a], self.counts[a]);
                (0..c)
                    .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / c as f64)
                    .collect()
            })
            .collect();
        CenterSet::from_grid(GridAxes::new(axes)?)
    }
}

/// Uniform grid with nominal fill distance `target_h`.
pub fn uniform_grid(domain: &BoxDomain, target_h: f64, max_points: usize) -> Result<CenterSet> {
    GridSpec::for_mesh_size(domain.clone(), target_h, GridConvention::FillDistance)?
        .nodes(max_points)
}

/// Cell centers of a training grid.
pub fn validation_grid(train: &GridSpec) -> Result<CenterSet> {
    train.cell_centers(usize::MAX)
}
