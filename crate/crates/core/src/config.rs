//! Experiment configuration files (TOML, strict schema).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::{
    BoxDomain, GridConvention, SystemId, VectorField, DEFAULT_DT, DEFAULT_MAX_GRID_POINTS,
    DEFAULT_SUBSTEPS,
};
use crate::error::{Error, Result};
use crate::interpolation::{FactorOptions, DEFAULT_MAX_FACTOR_BYTES};
use crate::koopman::Variant;
use crate::wendland::{MAX_DIM, MAX_SMOOTHNESS};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub d: usize,
    /// One smoothness or a list to sweep.
    pub k: OneOrMany<usize>,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub name: SystemId,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    /// State dimension for `identity` and `linear`.
    pub dim: Option<usize>,
    /// Row-major matrix for `linear`.
    pub matrix: Option<Vec<f64>>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivedBox {
    /// Smallest box containing all flow images of the training grid.
    BoundingBox,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TargetDomain {
    Box(BoxSpec),
    Derived(DerivedBox),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainsSection {
    pub x: BoxSpec,
    pub y: Option<TargetDomain>,
    /// Margin added around a derived target box.
    #[serde(default = "default_y_margin")]
    pub y_margin: f64,
}

fn default_y_margin() -> f64 {
    1e-9
}

/// Training data read from CSV instead of a generated grid.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSection {
    /// `N x d` centers.
    pub x: PathBuf,
    /// `N x d` flow images; computed from the system when absent.
    pub images: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    pub h: Vec<f64>,
    #[serde(default)]
    pub convention: GridConvention,
    #[serde(default = "default_max_points")]
    pub max_points: usize,
}

fn default_max_points() -> usize {
    DEFAULT_MAX_GRID_POINTS
}

/// Where the `Y` centers of the `y-centers` variant come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum YSource {
    /// Grid on the target domain with the training mesh size.
    #[default]
    Grid,
    SameAsX,
    /// The flow images `A(X)`.
    AOfX,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub y: YSource,
    /// 1-based state coordinates used as observables.
    pub observables: Vec<usize>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMode {
    /// Cell centers of each training grid.
    #[default]
    PerTrain,
    /// Cell centers of one fixed grid (mesh size `h`, or the finest training size).
    FromFinest,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default)]
    pub mode: ValidationMode,
    pub h: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Per-cell error field, coefficient and prediction files.
    #[serde(default = "default_true")]
    pub cell_files: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            seed: 0,
            cell_files: true,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    #[serde(default = "default_factor_bytes")]
    pub max_factor_bytes: usize,
    /// Split kernel matrices on symmetric grids into parity blocks.
    #[serde(default = "default_true")]
    pub symmetry: bool,
}

impl LimitsSection {
    pub fn factor_options(&self) -> FactorOptions {
        FactorOptions {
            max_bytes: self.max_factor_bytes,
            use_symmetry: self.symmetry,
        }
    }
}

impl Default for LimitsSection {
    fn default() -> Self {
        Self {
            max_factor_bytes: DEFAULT_MAX_FACTOR_BYTES,
            symmetry: true,
        }
    }
}

fn default_factor_bytes() -> usize {
    DEFAULT_MAX_FACTOR_BYTES
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub kernel: KernelSection,
    pub system: SystemSection,
    pub domains: DomainsSection,
    pub grids: GridsSection,
    pub model: ModelSection,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub limits: LimitsSection,
    pub samples: Option<SamplesSection>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        // sample files are relative to the configuration file
        if let (Some(samples), Some(base)) = (&mut config.samples, origin.parent()) {
            samples.x = base.join(&samples.x);
            samples.images = samples.images.as_ref().map(|p| base.join(p));
        }
        config.validate()?;
        Ok(config)
    }

    /// Every violation is collected into a single `Config` error.
    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.kernel.d;
        if !(1..=MAX_DIM).contains(&d) {
            out.push(format!("kernel.d = {d} is outside [1, {MAX_DIM}]"));
        }
        let ks = self.kernel.k.to_vec();
        if ks.is_empty() {
            out.push("kernel.k is empty".into());
        }
        for k in ks {
            if k > MAX_SMOOTHNESS {
                out.push(format!("kernel.k = {k} is above {MAX_SMOOTHNESS}"));
            }
            if k == 0 && d < 3 {
                out.push(format!(
                    "kernel.k = 0 requires d >= 3 for positive definiteness, got d = {d}"
                ));
            }
        }
        if !(self.kernel.scale.is_finite() && self.kernel.scale > 0.0) {
            out.push(format!(
                "kernel.scale = {} must be positive",
                self.kernel.scale
            ));
        }

        let sys = &self.system;
        if !(sys.dt.is_finite() && sys.dt > 0.0) {
            out.push(format!("system.dt = {} must be positive", sys.dt));
        }
        if sys.substeps == 0 {
            out.push("system.substeps must be at least 1".into());
        }
        match self.vector_field() {
            Ok(field) => {
                if field.dim() != d {
                    out.push(format!(
                        "system {} has dimension {} but kernel.d = {d}",
                        sys.name,
                        field.dim()
                    ));
                }
            }
            Err(e) => out.push(e.to_string()),
        }

        let check_box = |name: &str, b: &BoxSpec, out: &mut Vec<String>| {
            if b.lo.len() != d || b.hi.len() != d {
                out.push(format!("domains.{name} must have {d} bounds per side"));
            } else if let Err(e) = BoxDomain::new(b.lo.clone(), b.hi.clone()) {
                out.push(format!("domains.{name}: {e}"));
            }
        };
        check_box("x", &self.domains.x, &mut out);
        if let Some(TargetDomain::Box(b)) = &self.domains.y {
            check_box("y", b, &mut out);
        }

        if self.grids.h.is_empty() {
            out.push("grids.h is empty".into());
        }
        for h in &self.grids.h {
            if !(h.is_finite() && *h > 0.0) {
                out.push(format!("grids.h contains {h}; mesh sizes must be positive"));
            }
        }
        if let Some(samples) = &self.samples {
            for path in std::iter::once(&samples.x).chain(&samples.images) {
                if !path.is_file() {
                    out.push(format!("samples file {} does not exist", path.display()));
                }
            }
        }
        if self.samples.is_some() && self.grids.h.len() != 1 {
            out.push(format!(
                "with [samples], grids.h must hold exactly one mesh size, got {}",
                self.grids.h.len()
            ));
        }
        if !(self.domains.y_margin.is_finite() && self.domains.y_margin >= 0.0) {
            out.push(format!(
                "domains.y_margin = {} must be non-negative",
                self.domains.y_margin
            ));
        }
        if self.grids.max_points == 0 {
            out.push("grids.max_points must be positive".into());
        }

        let m = &self.model;
        if m.variants.is_empty() {
            out.push("model.variants is empty".into());
        }
        if m.observables.is_empty() {
            out.push("model.observables is empty".into());
        }
        for &o in &m.observables {
            if o == 0 || o > d {
                out.push(format!("model.observables entry {o} is outside [1, {d}]"));
            }
        }
        if m.steps == 0 {
            out.push("model.steps must be at least 1".into());
        }
        if m.variants.contains(&Variant::YCenters)
            && m.y == YSource::Grid
            && self.domains.y.is_none()
        {
            out.push("variant y-centers with y = \"grid\" needs domains.y".into());
        }
        if let Some(h) = self.validation.h {
            if !(h.is_finite() && h > 0.0) {
                out.push(format!("validation.h = {h} must be positive"));
            }
            if self.validation.mode == ValidationMode::PerTrain {
                out.push("validation.h is only used with mode = \"from-finest\"".into());
            }
        }
        if self.limits.max_factor_bytes == 0 {
            out.push("limits.max_factor_bytes must be positive".into());
        }
        out
    }

    pub fn vector_field(&self) -> Result<VectorField> {
        let sys = &self.system;
        let lorenz_only = sys.sigma.is_some() || sys.rho.is_some() || sys.beta.is_some();
        if lorenz_only && sys.name != SystemId::Lorenz {
            return Err(Error::Config(format!(
                "system.sigma/rho/beta only apply to lorenz, not {}",
                sys.name
            )));
        }
        match sys.name {
            SystemId::Duffing => {
                if sys.dim.is_some() || sys.matrix.is_some() {
                    return Err(Error::Config("duffing takes no dim or matrix".into()));
                }
                Ok(VectorField::Duffing)
            }
            SystemId::Lorenz => {
                let VectorField::Lorenz { sigma, rho, beta } = VectorField::lorenz() else {
                    unreachable!()
                };
                Ok(VectorField::Lorenz {
                    sigma: sys.sigma.unwrap_or(sigma),
                    rho: sys.rho.unwrap_or(rho),
                    beta: sys.beta.unwrap_or(beta),
                })
            }
            SystemId::Identity => Ok(VectorField::Identity {
                dim: sys
                    .dim
                    .ok_or_else(|| Error::Config("identity system needs system.dim".into()))?,
            }),
            SystemId::Linear => {
                let matrix = sys
                    .matrix
                    .clone()
                    .ok_or_else(|| Error::Config("linear system needs system.matrix".into()))?;
                let dim = sys
                    .dim
                    .unwrap_or_else(|| (matrix.len() as f64).sqrt() as usize);
                VectorField::linear(dim, matrix).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }

    pub fn x_domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.domains.x.lo.clone(), self.domains.x.hi.clone())
    }

    pub fn smoothness(&self) -> Vec<usize> {
        self.kernel.k.to_vec()
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path)
}

/// Built-in experiments mirroring the benchmark tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    DuffingTable1,
    DuffingTable2,
    LorenzTable3,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duffing-table1" => Ok(Preset::DuffingTable1),
            "duffing-table2" => Ok(Preset::DuffingTable2),
            "lorenz-table3" => Ok(Preset::LorenzTable3),
            other => Err(Error::Input(format!(
                "unknown experiment `{other}` (expected duffing-table1, duffing-table2 or \
                 lorenz-table3)"
            ))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::DuffingTable1 => "duffing-table1",
            Preset::DuffingTable2 => "duffing-table2",
            Preset::LorenzTable3 => "lorenz-table3",
        }
    }

    pub fn toml(self) -> &'static str {
        match self {
            Preset::DuffingTable1 => DUFFING_TABLE1,
            Preset::DuffingTable2 => DUFFING_TABLE2,
            Preset::LorenzTable3 => LORENZ_TABLE3,
        }
    }

    pub fn config(self) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(self.toml(), Path::new(self.name()))
            .expect("built-in presets are valid")
    }
}

const DUFFING_TABLE1: &str = r#"
name = "duffing-table1"

[kernel]
d = 2
k = [1, 2, 3]

[system]
name = "duffing"

[domains]
x = { lo = [-2.0, -2.0], hi = [2.0, 2.0] }
y = { lo = [-3.0, -3.0], hi = [3.0, 3.0] }

[grids]
h = [0.2, 0.1, 0.05, 0.025]
convention = "spacing"

[model]
variants = ["a-samples", "y-centers"]
y = "grid"
observables = [1, 2]

[validation]
mode = "from-finest"
h = 0.025
"#;

const DUFFING_TABLE2: &str = r#"
name = "duffing-table2"

[kernel]
d = 2
k = [1, 2, 3]

[system]
name = "duffing"

[domains]
x = { lo = [-2.0, -2.0], hi = [2.0, 2.0] }

[grids]
h = [0.2, 0.1, 0.05, 0.025]
convention = "spacing"

[model]
variants = ["x-self"]
observables = [1, 2]

[validation]
mode = "from-finest"
h = 0.05
"#;

const LORENZ_TABLE3: &str = r#"
name = "lorenz-table3"

[kernel]
d = 3
k = [1, 2, 3]

[system]
name = "lorenz"

[domains]
x = { lo = [-0.5, -0.5, -0.5], hi = [0.5, 0.5, 0.5] }
y = "bounding-box"

[grids]
h = [0.2, 0.1, 0.05, 0.025]
convention = "spacing"

[model]
variants = ["a-samples", "y-centers"]
y = "grid"
observables = [1, 2, 3]

[validation]
mode = "per-train"

[limits]
max_factor_bytes = 3000000000
"#;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[kernel]
d = 2
k = 1

[system]
name = "duffing"

[domains]
x = { lo = [-2.0, -2.0], hi = [2.0, 2.0] }

[grids]
h = [0.2]

[model]
variants = ["a-samples"]
observables = [1]
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml_str(text, Path::new("test.toml"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.system.dt, 0.02);
        assert_eq!(c.system.substeps, 4);
        assert_eq!(c.kernel.scale, 1.0);
        assert_eq!(c.model.steps, 1);
        assert_eq!(c.grids.convention, GridConvention::FillDistance);
        assert_eq!(c.validation.mode, ValidationMode::PerTrain);
    }

    #[test]
    fn k0_in_2d_is_rejected() {
        let err = parse(&MINIMAL.replace("k = 1", "k = 0")).unwrap_err();
        assert!(err.to_string().contains("d >= 3"), "{err}");
    }

    #[test]
    fn negative_h_is_rejected() {
        let err = parse(&MINIMAL.replace("h = [0.2]", "h = [0.2, -0.1]")).unwrap_err();
        assert!(err.to_string().contains("-0.1"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(&MINIMAL.replace("d = 2", "d = 2\nsmoothnes = 1")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("smoothnes"));
    }

    #[test]
    fn all_violations_are_listed() {
        let text = MINIMAL
            .replace("k = 1", "k = 9")
            .replace("h = [0.2]", "h = [-1.0]")
            .replace("observables = [1]", "observables = [3]");
        let msg = parse(&text).unwrap_err().to_string();
        assert!(msg.contains("kernel.k = 9"), "{msg}");
        assert!(msg.contains("-1"), "{msg}");
        assert!(msg.contains("observables entry 3"), "{msg}");
    }

    #[test]
    fn presets_are_valid() {
        for p in [
            Preset::DuffingTable1,
            Preset::DuffingTable2,
            Preset::LorenzTable3,
        ] {
            let c = p.config();
            assert_eq!(c.smoothness(), vec![1, 2, 3]);
            assert_eq!(c.name.as_deref(), Some(p.name()));
        }
    }

    #[test]
    fn y_centers_grid_needs_target_domain() {
        let text = MINIMAL.replace("[\"a-samples\"]", "[\"y-centers\"]");
        assert!(parse(&text).unwrap_err().to_string().contains("domains.y"));
    }
}
