//! Runs configured experiments: one model per `(h, k)` cell, predictions for
//! every requested variant, and the CSV tables, error fields, and rates.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};

use crate::analysis::{
    error_field_export, error_report, fit_rate, weighted_l2, ErrorReport, ReportMeta,
};
use crate::config::{ExperimentConfig, TargetDomain, ValidationMode, YSource};
use crate::csvio::{self, format_f64};
use crate::dynamics::{bounding_box, BoxDomain, FlowMap, GridSpec};
use crate::error::{Error, Result};
use crate::interpolation::{CenterSet, KernelFactorization};
use crate::koopman::{FlowSamples, KoopmanModel, Variant};
use crate::wendland::WendlandKernel;

/// Result of one `(variant, k, h)` cell.
#[derive(Clone, Debug)]
pub enum CellOutcome {
    Done {
        report: ErrorReport,
        n_x: usize,
        n_y: Option<usize>,
        fill_distance: f64,
        /// `L2` error weighted by the training cell volume instead of the
        /// validation cell volume.
        l2_train: f64,
        out_of_domain: usize,
        /// Canonical coefficients per observable.
        coefficients: Vec<Vec<f64>>,
        /// Predicted values per observable on the validation points.
        predicted: Vec<Vec<f64>>,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub variant: Variant,
    pub k: usize,
    pub h: f64,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn report(&self) -> Option<&ErrorReport> {
        match &self.outcome {
            CellOutcome::Done { report, .. } => Some(report),
            CellOutcome::Skipped { .. } => None,
        }
    }

    /// `sup`, `l2` or `l2-train`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match (&self.outcome, name) {
            (CellOutcome::Done { report, .. }, "sup") => Some(report.sup_error),
            (CellOutcome::Done { report, .. }, "l2") => Some(report.l2_error),
            (CellOutcome::Done { l2_train, .. }, "l2-train") => Some(*l2_train),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub variant: Variant,
    pub k: usize,
    pub metric: &'static str,
    pub hs: Vec<f64>,
    pub slope: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub name: String,
    pub hs: Vec<f64>,
    pub ks: Vec<usize>,
    pub variants: Vec<Variant>,
    pub cells: Vec<CellResult>,
    /// One-based observable indices.
    pub observables: Vec<usize>,
    pub training: Vec<(f64, Arc<CenterSet>)>,
    pub validation: Vec<(f64, Arc<Validation>)>,
}

impl ExperimentResult {
    pub fn cell(&self, variant: Variant, k: usize, h: f64) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.k == k && c.h == h)
    }

    pub fn sup_error(&self, variant: Variant, k: usize, h: f64) -> Option<f64> {
        self.cell(variant, k, h)?.report().map(|r| r.sup_error)
    }

    pub fn validation_for(&self, h: f64) -> Option<&Arc<Validation>> {
        self.validation
            .iter()
            .find(|(vh, _)| *vh == h)
            .map(|(_, v)| v)
    }

    pub fn training_for(&self, h: f64) -> Option<&Arc<CenterSet>> {
        self.training
            .iter()
            .find(|(th, _)| *th == h)
            .map(|(_, x)| x)
    }

    /// Log-log slopes of every metric over all completed cells.
    pub fn rates(&self) -> Vec<RateRow> {
        let mut rows = Vec::new();
        for &variant in &self.variants {
            for &k in &self.ks {
                let done: Vec<&CellResult> = self
                    .hs
                    .iter()
                    .filter_map(|&h| self.cell(variant, k, h))
                    .filter(|c| c.report().is_some())
                    .collect();
                for metric in ["sup", "l2", "l2-train"] {
                    let hs: Vec<f64> = done.iter().map(|c| c.h).collect();
                    let errs: Vec<f64> = done.iter().filter_map(|c| c.metric(metric)).collect();
                    if let Ok(rate) = fit_rate(&hs, &errs) {
                        rows.push(RateRow {
                            variant,
                            k,
                            metric,
                            hs: rate.hs,
                            slope: rate.slope,
                        });
                    }
                }
            }
        }
        rows
    }
}

/// Overrides applied on top of a configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub hs: Option<Vec<f64>>,
    pub ks: Option<Vec<usize>>,
}

/// Validation points and the true observable values after `steps` flow steps.
#[derive(Clone, Debug)]
pub struct Validation {
    pub points: Arc<CenterSet>,
    pub values: Vec<Vec<f64>>,
}

fn flow_n(map: &FlowMap, coords: &[f64], steps: usize) -> Result<Vec<f64>> {
    let mut pts = coords.to_vec();
    for _ in 0..steps {
        pts = map.flow_points(&pts)?;
    }
    Ok(pts)
}

fn column(coords: &[f64], dim: usize, axis: usize) -> Vec<f64> {
    coords.chunks_exact(dim).map(|p| p[axis]).collect()
}

/// Runs every `(h, k, variant)` cell of `config`. Cells that exceed a
/// resource limit are marked skipped; other failures abort the run.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentResult> {
    config.validate()?;
    let hs = options.hs.clone().unwrap_or_else(|| config.grids.h.clone());
    let ks = options.ks.clone().unwrap_or_else(|| config.smoothness());
    if hs.is_empty() || ks.is_empty() {
        return Err(Error::Input("nothing to run: empty h or k list".into()));
    }
    let field = config.vector_field()?;
    let map = FlowMap::new(field, config.system.dt, config.system.substeps)?;
    let x_domain = config.x_domain()?;
    let d = config.kernel.d;
    let obs: Vec<usize> = config.model.observables.iter().map(|o| o - 1).collect();
    let steps = config.model.steps;
    let max_points = config.grids.max_points;
    let variants = config.model.variants.clone();

    let fixed_truth = match config.validation.mode {
        ValidationMode::PerTrain => None,
        ValidationMode::FromFinest => {
            let vh = config
                .validation
                .h
                .unwrap_or_else(|| config.grids.h.iter().copied().fold(f64::INFINITY, f64::min));
            let spec = GridSpec::for_mesh_size(x_domain.clone(), vh, config.grids.convention)?;
            Some(Arc::new(truth_on(
                &map,
                spec.cell_centers(max_points)?,
                &obs,
                steps,
            )?))
        }
    };

    let loaded = config.samples.as_ref().map(load_samples).transpose()?;

    let mut cells = Vec::new();
    let mut training = Vec::new();
    let mut validation = Vec::new();
    for &h in &hs {
        let spec = GridSpec::for_mesh_size(x_domain.clone(), h, config.grids.convention)?;
        let skip_all = |reason: String, cells: &mut Vec<CellResult>| {
            warn!("h = {h}: skipped ({reason})");
            for &k in &ks {
                for &variant in &variants {
                    cells.push(CellResult {
                        variant,
                        k,
                        h,
                        outcome: CellOutcome::Skipped {
                            reason: reason.clone(),
                        },
                    });
                }
            }
        };
        let nodes = match &loaded {
            Some((x, _)) => Ok(x.clone()),
            None => spec.nodes(max_points),
        };
        let x = match nodes {
            Ok(x) => Arc::new(x.with_domain(x_domain.clone())?),
            Err(Error::Resource(reason)) => {
                skip_all(reason, &mut cells);
                continue;
            }
            Err(e) => return Err(e),
        };
        let truth = match &fixed_truth {
            Some(t) => Arc::clone(t),
            None => Arc::new(truth_on(&map, spec.cell_centers(max_points)?, &obs, steps)?),
        };
        validation.push((h, Arc::clone(&truth)));
        training.push((h, Arc::clone(&x)));

        let train_cell: f64 = spec.spacings().iter().product();
        let mut samples = match &loaded {
            Some((_, Some(images))) => FlowSamples::new(Arc::clone(&x), images.clone())?,
            _ => FlowSamples::from_flow(Arc::clone(&x), &map)?,
        };
        let y_domain = match &config.domains.y {
            Some(TargetDomain::Box(b)) => Some(BoxDomain::new(b.lo.clone(), b.hi.clone())?),
            Some(TargetDomain::Derived(_)) => {
                Some(bounding_box(d, samples.images(), config.domains.y_margin)?)
            }
            None => None,
        };
        if let Some(dom) = &y_domain {
            samples = samples.check_target_domain(dom);
        }
        let out_of_domain = samples.out_of_domain();
        info!(
            "h = {h}: {} centers, fill distance {:.5}, {} validation points",
            x.len(),
            spec.fill_distance(),
            truth.points.len()
        );

        let y_centers = if variants.contains(&Variant::YCenters) {
            match config.model.y {
                YSource::Grid => {
                    let dom = y_domain.clone().ok_or_else(|| {
                        Error::Config("y-centers on a grid needs a target domain".into())
                    })?;
                    let yspec = GridSpec::for_mesh_size(dom.clone(), h, config.grids.convention)?;
                    match yspec.nodes(max_points) {
                        Ok(y) => Ok(Arc::new(y.with_domain(dom)?)),
                        Err(Error::Resource(r)) => Err(r),
                        Err(e) => return Err(e),
                    }
                }
                YSource::SameAsX => Ok(Arc::clone(&x)),
                YSource::AOfX => Ok(Arc::new(CenterSet::new(d, samples.images().to_vec())?)),
            }
        } else {
            Err("not requested".to_string())
        };

        for &k in &ks {
            let kernel = WendlandKernel::with_scale(d, k, config.kernel.scale)?;
            let started = Instant::now();
            let fact_x = match KernelFactorization::with_options(
                kernel.clone(),
                Arc::clone(&x),
                &config.limits.factor_options(),
            ) {
                Ok(f) => Arc::new(f),
                Err(Error::Resource(reason)) => {
                    warn!("k = {k}, h = {h}: skipped ({reason})");
                    for &variant in &variants {
                        cells.push(CellResult {
                            variant,
                            k,
                            h,
                            outcome: CellOutcome::Skipped {
                                reason: reason.clone(),
                            },
                        });
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            info!(
                "k = {k}, h = {h}: factorized K_XX ({} MB) in {:.1} s",
                fact_x.factor_bytes() / 1_000_000,
                started.elapsed().as_secs_f64()
            );
            let model = KoopmanModel::new(Arc::clone(&fact_x), samples.clone())?;
            for &variant in &variants {
                let started = Instant::now();
                let meta = ReportMeta {
                    grid_h: h,
                    kernel: (d, k),
                    variant,
                };
                let outcome = match run_variant(
                    config,
                    &model,
                    &kernel,
                    variant,
                    &y_centers,
                    &truth,
                    &obs,
                    steps,
                    x_domain.volume(),
                    meta,
                ) {
                    Ok((report, n_y, coefficients, predicted)) => {
                        info!(
                            "{variant} k = {k}, h = {h}: sup {:.5e}, L2 {:.5e} ({:.1} s)",
                            report.sup_error,
                            report.l2_error,
                            started.elapsed().as_secs_f64()
                        );
                        CellOutcome::Done {
                            l2_train: weighted_l2(&report.per_point, train_cell),
                            report,
                            n_x: x.len(),
                            n_y,
                            fill_distance: spec.fill_distance(),
                            out_of_domain,
                            coefficients,
                            predicted,
                        }
                    }
                    Err(Error::Resource(reason)) => {
                        warn!("{variant} k = {k}, h = {h}: skipped ({reason})");
                        CellOutcome::Skipped { reason }
                    }
                    Err(e) => return Err(e),
                };
                cells.push(CellResult {
                    variant,
                    k,
                    h,
                    outcome,
                });
            }
        }
    }
    Ok(ExperimentResult {
        name: config.name.clone().unwrap_or_else(|| "experiment".into()),
        hs,
        ks,
        variants,
        cells,
        observables: config.model.observables.clone(),
        training,
        validation,
    })
}

fn load_samples(section: &crate::config::SamplesSection) -> Result<(CenterSet, Option<Vec<f64>>)> {
    let x = csvio::read_table(&section.x)?;
    let centers = CenterSet::new(x.columns, x.values)?;
    let images = match &section.images {
        Some(path) => {
            let table = csvio::read_table(path)?;
            if table.columns != centers.dim() || table.rows() != centers.len() {
                return Err(Error::Input(format!(
                    "{}: expected {} x {} flow images, got {} x {}",
                    path.display(),
                    centers.len(),
                    centers.dim(),
                    table.rows(),
                    table.columns
                )));
            }
            Some(table.values)
        }
        None => None,
    };
    Ok((centers, images))
}

fn truth_on(
    map: &FlowMap,
    validation: CenterSet,
    obs: &[usize],
    steps: usize,
) -> Result<Validation> {
    let d = validation.dim();
    let image = flow_n(map, validation.coords(), steps)?;
    Ok(Validation {
        values: obs.iter().map(|&a| column(&image, d, a)).collect(),
        points: Arc::new(validation),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_variant(
    config: &ExperimentConfig,
    model: &KoopmanModel,
    kernel: &WendlandKernel,
    variant: Variant,
    y_centers: &std::result::Result<Arc<CenterSet>, String>,
    truth: &Validation,
    obs: &[usize],
    steps: usize,
    volume: f64,
    meta: ReportMeta,
) -> Result<(ErrorReport, Option<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let x = model.centers();
    let d = x.dim();
    let images = model.samples().images();
    let mut n_y = None;
    let mut alphas = Vec::with_capacity(obs.len());
    match variant {
        Variant::ASamples => {
            for &a in obs {
                let f_a = column(images, d, a);
                alphas.push(model.multistep_from_flow_values(&f_a, steps)?.alpha);
            }
        }
        Variant::XSelf => {
            for &a in obs {
                let f_x = column(x.coords(), d, a);
                alphas.push(model.multistep_self(&f_x, steps)?.alpha);
            }
        }
        Variant::YCenters => {
            let y = y_centers.as_ref().map_err(|r| Error::Resource(r.clone()))?;
            n_y = Some(y.len());
            let fact_y = if Arc::ptr_eq(y, x) {
                Arc::clone(model.x_factorization())
            } else {
                Arc::new(KernelFactorization::with_options(
                    kernel.clone(),
                    Arc::clone(y),
                    &config.limits.factor_options(),
                )?)
            };
            let model = model.clone().with_y(fact_y)?;
            for &a in obs {
                let f_y = column(y.coords(), d, a);
                let mut alpha = model.apply_from_y_values(&f_y)?.alpha;
                for _ in 1..steps {
                    alpha = model.propagate(&alpha)?;
                }
                alphas.push(alpha);
            }
        }
    }
    let predicted = model
        .x_factorization()
        .eval_many(&alphas, truth.points.coords())?;
    let report = error_report(&truth.values, &predicted, volume, meta)?;
    Ok((report, n_y, alphas, predicted))
}

fn h_label(h: f64) -> String {
    format!("{h}")
}

/// Writes `table.csv`, `cells.csv`, `rates.csv`, and optionally, per completed
/// cell, `errors_*.csv`, `coefficients_*.csv` and `predicted_*.csv` (suffix
/// `<k>_<h>_<variant>`).
pub fn write_outputs(result: &ExperimentResult, dir: &Path, cell_files: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut header = vec!["variant", "metric", "k"];
    let h_labels: Vec<String> = result.hs.iter().map(|&h| h_label(h)).collect();
    header.extend(h_labels.iter().map(String::as_str));
    let mut table = Vec::new();
    for &variant in &result.variants {
        for metric in ["sup", "l2", "l2-train"] {
            for &k in &result.ks {
                let mut row = vec![variant.to_string(), metric.to_string(), k.to_string()];
                for &h in &result.hs {
                    let value = result.cell(variant, k, h).and_then(|c| c.metric(metric));
                    row.push(value.map_or_else(|| "skipped".into(), format_f64));
                }
                table.push(row);
            }
        }
    }
    csvio::write_records(&dir.join("table.csv"), &header, &table)?;

    let cells: Vec<Vec<String>> = result
        .cells
        .iter()
        .map(|c| match &c.outcome {
            CellOutcome::Done {
                report,
                n_x,
                n_y,
                fill_distance,
                l2_train,
                out_of_domain,
                ..
            } => vec![
                c.variant.to_string(),
                c.k.to_string(),
                h_label(c.h),
                "done".into(),
                n_x.to_string(),
                n_y.map(|n| n.to_string()).unwrap_or_default(),
                format_f64(*fill_distance),
                out_of_domain.to_string(),
                format_f64(report.sup_error),
                format_f64(report.l2_error),
                format_f64(*l2_train),
                String::new(),
            ],
            CellOutcome::Skipped { reason } => vec![
                c.variant.to_string(),
                c.k.to_string(),
                h_label(c.h),
                "skipped".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                reason.clone(),
            ],
        })
        .collect();
    csvio::write_records(
        &dir.join("cells.csv"),
        &[
            "variant",
            "k",
            "h",
            "status",
            "n_x",
            "n_y",
            "fill_distance",
            "images_outside_y",
            "sup_error",
            "l2_error",
            "l2_train_error",
            "reason",
        ],
        &cells,
    )?;

    let rates: Vec<Vec<String>> = result
        .rates()
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.k.to_string(),
                r.metric.to_string(),
                r.hs.iter()
                    .map(|h| h_label(*h))
                    .collect::<Vec<_>>()
                    .join(" "),
                format_f64(r.slope),
            ]
        })
        .collect();
    csvio::write_records(
        &dir.join("rates.csv"),
        &["variant", "k", "metric", "hs", "slope"],
        &rates,
    )?;

    if cell_files {
        for c in &result.cells {
            write_cell_files(result, c, dir)?;
        }
    }
    Ok(())
}

fn write_cell_files(result: &ExperimentResult, cell: &CellResult, dir: &Path) -> Result<()> {
    let CellOutcome::Done {
        report,
        coefficients,
        predicted,
        ..
    } = &cell.outcome
    else {
        return Ok(());
    };
    let (Some(truth), Some(x)) = (result.validation_for(cell.h), result.training_for(cell.h))
    else {
        return Ok(());
    };
    let suffix = format!("{}_{}_{}", cell.k, h_label(cell.h), cell.variant);
    error_field_export(
        report,
        &truth.points,
        &dir.join(format!("errors_{suffix}.csv")),
    )?;

    let d = x.dim();
    let coords: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
    let mut header = coords.clone();
    header.extend(result.observables.iter().map(|o| format!("alpha_{o}")));
    let rows = x.points().enumerate().map(|(i, p)| {
        let mut row = p.to_vec();
        row.extend(coefficients.iter().map(|c| c[i]));
        row
    });
    csvio::write_rows(
        &dir.join(format!("coefficients_{suffix}.csv")),
        Some(&header),
        rows,
    )?;

    let mut header = coords;
    for o in &result.observables {
        header.push(format!("true_{o}"));
        header.push(format!("predicted_{o}"));
    }
    let rows = truth.points.points().enumerate().map(|(i, p)| {
        let mut row = p.to_vec();
        for (t, v) in truth.values.iter().zip(predicted) {
            row.push(t[i]);
            row.push(v[i]);
        }
        row
    });
    csvio::write_rows(
        &dir.join(format!("predicted_{suffix}.csv")),
        Some(&header),
        rows,
    )
}
