//! Kernel EDMD approximants of the Koopman operator `K_A f = f o A`.
//!
//! All approximants map into `V_X`, the span of the canonical features at the
//! sample centers, and are represented by canonical coefficients over `X`:
//!
//! * from flow values: `alpha = K_XX^{-1} (f o A)_X`
//! * from values on a second center set `Y`:
//!   `alpha = K_XX^{-1} K_{A(X),Y} K_YY^{-1} f_Y`
//! * `n` steps: the one-step propagation `alpha -> K_XX^{-1} K_{A(X),X} alpha`
//!   applied repeatedly to the one-step coefficients.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::Mat;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoxDomain, FlowMap};
use crate::error::{Error, Result};
use crate::interpolation::{CenterSet, KernelFactorization};
use crate::wendland::WendlandKernel;

/// Which data an approximant is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Observable values at the flow images `A(x_i)`.
    ASamples,
    /// Observable values at a second center set `Y`.
    YCenters,
    /// Observable values at the centers `X` themselves (`Y = X`).
    XSelf,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ASamples => "a-samples",
            Variant::YCenters => "y-centers",
            Variant::XSelf => "x-self",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a-samples" => Ok(Variant::ASamples),
            "y-centers" => Ok(Variant::YCenters),
            "x-self" => Ok(Variant::XSelf),
            other => Err(Error::Input(format!("unknown variant `{other}`"))),
        }
    }
}

/// Basis in which the kEDMD matrix is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// `K_XX^{-1} K_{A(X),Y}`
    Canonical,
    /// `K_{A(X),Y} K_YY^{-1}`
    Lagrange,
}

/// Centers `X` together with their images `A(X)`.
#[derive(Clone, Debug)]
pub struct FlowSamples {
    centers: Arc<CenterSet>,
    images: Vec<f64>,
    out_of_domain: usize,
}

impl FlowSamples {
    pub fn new(centers: Arc<CenterSet>, images: Vec<f64>) -> Result<Self> {
        if images.len() != centers.coords().len() {
            return Err(Error::Input(format!(
                "{} centers but {} image coordinates (expected {})",
                centers.len(),
                images.len(),
                centers.coords().len()
            )));
        }
        if images.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("flow images contain non-finite values".into()));
        }
        Ok(Self {
            centers,
            images,
            out_of_domain: 0,
        })
    }

    /// Samples the flow map at every center.
    pub fn from_flow(centers: Arc<CenterSet>, map: &FlowMap) -> Result<Self> {
        if map.dim() != centers.dim() {
            return Err(Error::Input(format!(
                "flow of dimension {} applied to centers of dimension {}",
                map.dim(),
                centers.dim()
            )));
        }
        let images = map.flow_points(centers.coords())?;
        Self::new(centers, images)
    }

    /// Counts the images outside `domain` and warns about them; they are kept.
    pub fn check_target_domain(mut self, domain: &BoxDomain) -> Self {
        let d = self.centers.dim();
        self.out_of_domain = self
            .images
            .chunks_exact(d)
            .filter(|p| !domain.contains(p))
            .count();
        if self.out_of_domain > 0 {
            warn!(
                "{} of {} flow images leave the target domain",
                self.out_of_domain,
                self.centers.len()
            );
        }
        self
    }

    pub fn centers(&self) -> &Arc<CenterSet> {
        &self.centers
    }

    /// Row-major images `A(x_i)`.
    pub fn images(&self) -> &[f64] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let d = self.centers.dim();
        &self.images[i * d..(i + 1) * d]
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Number of images found outside the target domain by the last check.
    pub fn out_of_domain(&self) -> usize {
        self.out_of_domain
    }
}

/// Canonical coefficients over `V_X` of a predicted observable.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionCoefficients {
    pub alpha: Vec<f64>,
    pub steps: usize,
    pub variant: Variant,
}

/// A kEDMD model: factorized `K_XX`, flow images, and optionally a second
/// factorized center set `Y`.
#[derive(Clone, Debug)]
pub struct KoopmanModel {
    samples: FlowSamples,
    fact_x: Arc<KernelFactorization>,
    fact_y: Option<Arc<KernelFactorization>>,
}

impl KoopmanModel {
    /// Wraps an existing factorization of `K_XX`; its centers must be those of `samples`.
    pub fn new(fact_x: Arc<KernelFactorization>, samples: FlowSamples) -> Result<Self> {
        if !Arc::ptr_eq(fact_x.centers(), samples.centers())
            && fact_x.centers().as_ref() != samples.centers().as_ref()
        {
            return Err(Error::Input(
                "factorization and flow samples use different centers".into(),
            ));
        }
        Ok(Self {
            samples,
            fact_x,
            fact_y: None,
        })
    }

    /// Factorizes `K_XX` for the sample centers.
    pub fn build(kernel: WendlandKernel, samples: FlowSamples) -> Result<Self> {
        let fact = KernelFactorization::new(kernel, Arc::clone(samples.centers()))?;
        Self::new(Arc::new(fact), samples)
    }

    /// Attaches a factorized second center set `Y`. The kernel may differ in
    /// smoothness but must share the dimension.
    pub fn with_y(mut self, fact_y: Arc<KernelFactorization>) -> Result<Self> {
        if fact_y.kernel().dim() != self.fact_x.kernel().dim() {
            return Err(Error::Input(format!(
                "Y kernel dimension {} differs from X kernel dimension {}",
                fact_y.kernel().dim(),
                self.fact_x.kernel().dim()
            )));
        }
        self.fact_y = Some(fact_y);
        Ok(self)
    }

    /// Uses `Y = X`, sharing the factorization of `K_XX`.
    pub fn with_y_same_as_x(mut self) -> Self {
        self.fact_y = Some(Arc::clone(&self.fact_x));
        self
    }

    pub fn samples(&self) -> &FlowSamples {
        &self.samples
    }

    pub fn x_factorization(&self) -> &Arc<KernelFactorization> {
        &self.fact_x
    }

    pub fn y_factorization(&self) -> Option<&Arc<KernelFactorization>> {
        self.fact_y.as_ref()
    }

    pub fn centers(&self) -> &Arc<CenterSet> {
        self.samples.centers()
    }

    fn require_y(&self) -> Result<&Arc<KernelFactorization>> {
        self.fact_y
            .as_ref()
            .ok_or_else(|| Error::State("model has no Y center set".into()))
    }

    fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::Input(format!(
                "{what} has length {got}, expected {expected}"
            )));
        }
        Ok(())
    }

    /// Dense `K_{A(X),Y}`.
    pub fn cross_matrix(&self) -> Result<Mat<f64>> {
        let fy = self.require_y()?;
        let kernel = fy.kernel();
        let y = fy.centers();
        Ok(Mat::from_fn(self.samples.len(), y.len(), |i, j| {
            kernel.eval_unchecked(self.samples.image(i), y.point(j))
        }))
    }

    /// The kEDMD matrix `K_XX^{-1} K_{A(X),Y}`.
    pub fn kedmd_matrix(&self) -> Result<Mat<f64>> {
        let cross = self.cross_matrix()?;
        self.fact_x.solve_matrix(&cross)
    }

    /// Matrix of the compressed operator `V_Y -> V_X` in the chosen basis.
    pub fn matrix_rep(&self, basis: Basis) -> Result<Mat<f64>> {
        match basis {
            Basis::Canonical => self.kedmd_matrix(),
            Basis::Lagrange => {
                let fy = self.require_y()?;
                let cross = self.cross_matrix()?;
                // K_{A(X),Y} K_YY^{-1} = (K_YY^{-1} K_{Y,A(X)})^T
                let solved = fy.solve_matrix(&cross.transpose().to_owned())?;
                Ok(solved.transpose().to_owned())
            }
        }
    }

    /// `K_hat_A f` from `(f o A)_X`.
    pub fn apply_from_flow_values(&self, f_a: &[f64]) -> Result<PredictionCoefficients> {
        Self::check_len("flow values", f_a.len(), self.samples.len())?;
        Ok(PredictionCoefficients {
            alpha: self.fact_x.solve(f_a)?,
            steps: 1,
            variant: Variant::ASamples,
        })
    }

    /// `K_hat_A^Y f` from `f_Y`.
    pub fn apply_from_y_values(&self, f_y: &[f64]) -> Result<PredictionCoefficients> {
        let fy = self.require_y()?;
        Self::check_len("Y values", f_y.len(), fy.len())?;
        let beta = fy.solve(f_y)?;
        let at_images = fy.eval_coords(&beta, self.samples.images())?;
        Ok(PredictionCoefficients {
            alpha: self.fact_x.solve(&at_images)?,
            steps: 1,
            variant: if Arc::ptr_eq(fy, &self.fact_x) {
                Variant::XSelf
            } else {
                Variant::YCenters
            },
        })
    }

    /// One application of `K_XX^{-1} K_{A(X),X}` to canonical coefficients.
    ///
    /// The matrix is applied without being formed: evaluate the `V_X` element
    /// at the flow images, then interpolate.
    pub fn propagate(&self, alpha: &[f64]) -> Result<Vec<f64>> {
        Self::check_len("coefficients", alpha.len(), self.samples.len())?;
        let at_images = self.fact_x.eval_coords(alpha, self.samples.images())?;
        self.fact_x.solve(&at_images)
    }

    fn check_steps(n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::Input("step count must be at least 1".into()));
        }
        Ok(())
    }

    /// `(K_XX^{-1} K_{A(X),X})^{n-1} K_XX^{-1} (f o A)_X`.
    pub fn multistep_from_flow_values(
        &self,
        f_a: &[f64],
        n: usize,
    ) -> Result<PredictionCoefficients> {
        Self::check_steps(n)?;
        let mut coeffs = self.apply_from_flow_values(f_a)?;
        for _ in 1..n {
            coeffs.alpha = self.propagate(&coeffs.alpha)?;
        }
        coeffs.steps = n;
        Ok(coeffs)
    }

    /// `(K_XX^{-1} K_{A(X),X})^n K_XX^{-1} f_X`.
    pub fn multistep_self(&self, f_x: &[f64], n: usize) -> Result<PredictionCoefficients> {
        Self::check_steps(n)?;
        Self::check_len("center values", f_x.len(), self.samples.len())?;
        let mut alpha = self.fact_x.solve(f_x)?;
        for _ in 0..n {
            alpha = self.propagate(&alpha)?;
        }
        Ok(PredictionCoefficients {
            alpha,
            steps: n,
            variant: Variant::XSelf,
        })
    }

    /// Evaluates the predicted observable at `z`: `K_{Z,X} alpha`.
    pub fn predict(&self, coeffs: &PredictionCoefficients, z: &CenterSet) -> Result<Vec<f64>> {
        Self::check_len("coefficients", coeffs.alpha.len(), self.samples.len())?;
        self.fact_x.eval_centers(&coeffs.alpha, z)
    }
}
