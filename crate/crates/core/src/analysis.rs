//! Error measurement, convergence rates, and the `H^1` operator-norm bound
//! for Koopman operators of diffeomorphic flow maps.

use std::path::Path;

use crate::csvio;
use crate::error::{Error, Result};
use crate::interpolation::CenterSet;
use crate::koopman::Variant;

/// Pointwise and aggregate errors of a prediction on a validation set.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub sup_error: f64,
    pub l2_error: f64,
    pub per_point: Vec<f64>,
    pub grid_h: f64,
    /// `(d, k)` of the kernel.
    pub kernel: (usize, usize),
    pub variant: Variant,
}

/// Metadata attached to an [`ErrorReport`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportMeta {
    pub grid_h: f64,
    pub kernel: (usize, usize),
    pub variant: Variant,
}

/// Compares predicted with true observable values.
///
/// `truth` and `predicted` hold one vector per observable component, each with
/// one entry per validation point. The pointwise error is the Euclidean norm
/// over components. The discrete `L2` error is the midpoint rule over the
/// validation cells: `sqrt(volume / m * sum e_i^2)`.
pub fn error_report(
    truth: &[Vec<f64>],
    predicted: &[Vec<f64>],
    volume: f64,
    meta: ReportMeta,
) -> Result<ErrorReport> {
    if truth.is_empty() || truth.len() != predicted.len() {
        return Err(Error::Input(format!(
            "{} true components vs {} predicted components",
            truth.len(),
            predicted.len()
        )));
    }
    let m = truth[0].len();
    if truth
        .iter()
        .chain(predicted)
        .any(|component| component.len() != m)
    {
        return Err(Error::Input(
            "observable components have different lengths".into(),
        ));
    }
    if m == 0 {
        return Err(Error::Input("empty validation set".into()));
    }
    let per_point: Vec<f64> = (0..m)
        .map(|i| {
            truth
                .iter()
                .zip(predicted)
                .map(|(t, p)| (t[i] - p[i]) * (t[i] - p[i]))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let sup_error = per_point.iter().copied().fold(0.0, f64::max);
    let sum_sq: f64 = per_point.iter().map(|e| e * e).sum();
    let l2_error = (volume / m as f64 * sum_sq).sqrt();
    Ok(ErrorReport {
        sup_error,
        l2_error,
        per_point,
        grid_h: meta.grid_h,
        kernel: meta.kernel,
        variant: meta.variant,
    })
}

/// `sqrt(cell_volume * sum e_i^2)`: quadrature with a caller-chosen weight per point.
pub fn weighted_l2(per_point: &[f64], cell_volume: f64) -> f64 {
    (cell_volume * per_point.iter().map(|e| e * e).sum::<f64>()).sqrt()
}

impl ErrorReport {
    /// Index of the point with the largest error.
    pub fn argmax(&self) -> usize {
        self.per_point
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &e)| {
                if e > best.1 {
                    (i, e)
                } else {
                    best
                }
            })
            .0
    }
}

/// Least-squares slope of `log(error)` against `log(h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    /// Fill distances, strictly decreasing.
    pub hs: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Fits `error ~ C h^slope` through the given pairs.
pub fn fit_rate(hs: &[f64], errors: &[f64]) -> Result<RateEstimate> {
    if hs.len() != errors.len() || hs.len() < 2 {
        return Err(Error::Input(
            "a rate needs at least two (h, error) pairs".into(),
        ));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Input(format!(
            "errors must be positive to take logarithms, got {e}"
        )));
    }
    if let Some(h) = hs.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::Input(format!(
            "fill distances must be positive, got {h}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = hs.iter().copied().zip(errors.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Input("fill distances must be distinct".into()));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RateEstimate {
        hs: pairs.iter().map(|p| p.0).collect(),
        errors: pairs.iter().map(|p| p.1).collect(),
        slope: sxy / sxx,
    })
}

/// Rate of the sup-errors of a sequence of reports.
pub fn convergence_rate(reports: &[ErrorReport]) -> Result<RateEstimate> {
    let hs: Vec<f64> = reports.iter().map(|r| r.grid_h).collect();
    let errors: Vec<f64> = reports.iter().map(|r| r.sup_error).collect();
    fit_rate(&hs, &errors)
}

fn determinant(matrix: &[f64], d: usize) -> f64 {
    let mut a = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| a[i * d + col].abs().total_cmp(&a[j * d + col].abs()))
            .unwrap_or(col);
        if a[pivot * d + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for c in 0..d {
                a.swap(pivot * d + c, col * d + c);
            }
            det = -det;
        }
        let p = a[col * d + col];
        det *= p;
        for r in col + 1..d {
            let factor = a[r * d + col] / p;
            for c in col..d {
                a[r * d + c] -= factor * a[col * d + c];
            }
        }
    }
    det
}

/// `max{c0, max_x |DA(x)|_F^2 / |det DA(x)|}^{1/2}` with
/// `c0 = max_x |det DA(x)|^{-1}`, over a finite sample of row-major `d x d`
/// Jacobians.
pub fn h1_bound_from_jacobians<'a, I>(jacobians: I, d: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut c0: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut count = 0usize;
    for (i, jac) in jacobians.into_iter().enumerate() {
        if jac.len() != d * d {
            return Err(Error::Input(format!(
                "Jacobian {i} has {} entries, expected {}",
                jac.len(),
                d * d
            )));
        }
        let det = determinant(jac, d).abs();
        if !(det > 0.0) {
            return Err(Error::Input(format!(
                "Jacobian {i} is singular (|det| = {det}); the map is not a diffeomorphism there"
            )));
        }
        let frob_sq: f64 = jac.iter().map(|v| v * v).sum();
        c0 = c0.max(1.0 / det);
        ratio = ratio.max(frob_sq / det);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input("no Jacobian samples".into()));
    }
    Ok(c0.max(ratio).sqrt())
}

/// Central finite-difference Jacobian of `map` at `x`.
pub fn fd_jacobian<F>(map: &F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let d = x.len();
    let mut jac = vec![0.0; d * d];
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + step;
        let fp = map(&xp)?;
        xp[j] = x[j] - step;
        let fm = map(&xp)?;
        xp[j] = x[j];
        if fp.len() != d || fm.len() != d {
            return Err(Error::Input("map changes the dimension".into()));
        }
        for i in 0..d {
            jac[i * d + j] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}

/// [`h1_bound_from_jacobians`] with finite-difference Jacobians of `map`
/// sampled at every point of `samples`.
pub fn h1_bound<F>(map: &F, samples: &CenterSet, fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::Input(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let jacobians = samples
        .points()
        .map(|p| fd_jacobian(map, p, fd_step))
        .collect::<Result<Vec<_>>>()?;
    h1_bound_from_jacobians(jacobians.iter().map(Vec::as_slice), samples.dim())
}

/// Higher-order Sobolev bounds are not provided.
pub fn sobolev_bound(order: usize) -> Result<f64> {
    Err(Error::OutOfScope(format!(
        "Koopman operator-norm bounds are only provided for H^1, not H^{order}"
    )))
}

/// Writes `(x_1, ..., x_d, error)` rows for external plotting.
pub fn error_field_export(report: &ErrorReport, grid: &CenterSet, path: &Path) -> Result<()> {
    if grid.len() != report.per_point.len() {
        return Err(Error::Input(format!(
            "grid has {} points but the report has {} errors",
            grid.len(),
            report.per_point.len()
        )));
    }
    let mut header: Vec<String> = (1..=grid.dim()).map(|a| format!("x{a}")).collect();
    header.push("error".into());
    let rows = grid.points().zip(&report.per_point).map(|(p, e)| {
        let mut row = p.to_vec();
        row.push(*e);
        row
    });
    csvio::write_rows(path, Some(&header), rows)
}
