//! Compactly supported Wendland functions `phi_{d,k}` and the radial kernels
//! they induce.
//!
//! The polynomial piece is built exactly over the rationals: start from the
//! truncated power `(1 - r)^l` with `l = floor(d/2) + k + 1` and apply the
//! integral operator `(I p)(r) = int_r^1 t p(t) dt` `k` times. The result is a
//! polynomial of degree `floor(d/2) + 3k + 1` that vanishes at `r = 1`
//! together with its first `2k` derivatives.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::poly::{horner, UnivariatePolynomial};

pub const MAX_DIM: usize = 16;
pub const MAX_SMOOTHNESS: usize = 4;

/// Expansion of `(1 - r)^ell`.
pub fn base_poly(ell: usize) -> UnivariatePolynomial {
    let mut coeffs = Vec::with_capacity(ell + 1);
    let mut binom = BigInt::one();
    for j in 0..=ell {
        let c = if j % 2 == 0 {
            binom.clone()
        } else {
            -binom.clone()
        };
        coeffs.push(BigRational::from_integer(c));
        binom = binom * BigInt::from(ell - j) / BigInt::from(j + 1);
    }
    UnivariatePolynomial::new(coeffs)
}

/// `q(r) = int_r^1 t p(t) dt` for a polynomial piece supported on `[0, 1]`.
pub fn apply_integral(p: &UnivariatePolynomial) -> UnivariatePolynomial {
    let antider = p.shift(1).antiderivative();
    let at_one = antider.eval_exact(&BigRational::one());
    &UnivariatePolynomial::constant(at_one) - &antider
}

/// The radial kernel `k(x, z) = phi_{d,k}(|x - z| / scale)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WendlandKernel {
    dim: usize,
    smoothness: usize,
    ell: usize,
    scale: f64,
    poly: UnivariatePolynomial,
    coeffs: Vec<f64>,
}

impl WendlandKernel {
    /// Unit-support kernel for dimension `dim` and smoothness index `k`.
    pub fn new(dim: usize, k: usize) -> Result<Self> {
        Self::with_scale(dim, k, 1.0)
    }

    pub fn with_scale(dim: usize, k: usize, scale: f64) -> Result<Self> {
        validate(dim, k, scale)?;
        let ell = dim / 2 + k + 1;
        let poly = (0..k).fold(base_poly(ell), |p, _| apply_integral(&p));
        debug_assert_eq!(poly.degree(), Some(dim / 2 + 3 * k + 1));
        let coeffs = poly.to_f64_coeffs();
        Ok(Self {
            dim,
            smoothness: k,
            ell,
            scale,
            poly,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    /// Exponent of the base function, `floor(d/2) + k + 1`.
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn poly(&self) -> &UnivariatePolynomial {
        &self.poly
    }

    pub fn degree(&self) -> usize {
        self.poly.degree().unwrap_or(0)
    }

    /// Sobolev order of the native space, `(d + 1) / 2 + k`.
    pub fn sigma(&self) -> f64 {
        (self.dim as f64 + 1.0) / 2.0 + self.smoothness as f64
    }

    /// Kernel diagonal `phi(0)`, which is also the sup-norm of the kernel.
    pub fn diagonal(&self) -> f64 {
        self.coeffs.first().copied().unwrap_or(0.0)
    }

    /// `phi(r)`, with `phi = 0` outside the support radius.
    #[inline]
    pub fn eval_phi(&self, r: f64) -> f64 {
        let t = r / self.scale;
        if t < 1.0 {
            horner(&self.coeffs, t)
        } else {
            0.0
        }
    }

    /// Kernel value from a squared distance.
    #[inline]
    pub fn eval_sq_dist(&self, dist_sq: f64) -> f64 {
        if dist_sq >= self.scale * self.scale {
            0.0
        } else {
            self.eval_phi(dist_sq.sqrt())
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        let dist_sq: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval_sq_dist(dist_sq)
    }

    pub fn eval_kernel(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        if x.len() != self.dim || z.len() != self.dim {
            return Err(Error::Input(format!(
                "kernel expects points of dimension {}, got {} and {}",
                self.dim,
                x.len(),
                z.len()
            )));
        }
        Ok(self.eval_unchecked(x, z))
    }

    /// Exact jump of the `order`-th derivative across `r = 1` for the unit-scale
    /// piecewise function (polynomial inside, zero outside).
    pub fn smoothness_defect_exact(&self, order: usize) -> BigRational {
        self.poly
            .nth_derivative(order)
            .eval_exact(&BigRational::one())
            .abs()
    }

    /// Jump of the `order`-th radial derivative at `r = scale`.
    ///
    /// Vanishes for every `order <= 2k`.
    pub fn smoothness_defect(&self, order: usize) -> f64 {
        let jump = self.smoothness_defect_exact(order);
        if jump.is_zero() {
            return 0.0;
        }
        jump.to_f64().unwrap_or(f64::INFINITY) / self.scale.powi(order as i32)
    }
}

fn validate(dim: usize, k: usize, scale: f64) -> Result<()> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::Config(format!(
            "kernel dimension d = {dim} is outside the supported range 1..={MAX_DIM}"
        )));
    }
    if k > MAX_SMOOTHNESS {
        return Err(Error::Config(format!(
            "smoothness index k = {k} is outside the supported range 0..={MAX_SMOOTHNESS}"
        )));
    }
    if k == 0 && dim < 3 {
        return Err(Error::Config(format!(
            "k = 0 requires d >= 3 (got d = {dim}); the native space of phi_{{d,0}} is only a \
             Sobolev space above that dimension"
        )));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Config(format!(
            "kernel support scale must be positive and finite, got {scale}"
        )));
    }
    Ok(())
}

impl fmt::Display for WendlandKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "phi_{{{},{}}} (scale {}): {}",
            self.dim, self.smoothness, self.scale, self.poly
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn base_poly_examples() {
        assert_eq!(base_poly(0), UnivariatePolynomial::from_integers(&[1]));
        assert_eq!(
            base_poly(2),
            UnivariatePolynomial::from_integers(&[1, -2, 1])
        );
        assert_eq!(
            base_poly(3),
            UnivariatePolynomial::from_integers(&[1, -3, 3, -1])
        );
    }

    #[test]
    fn integral_of_constant() {
        let q = apply_integral(&UnivariatePolynomial::from_integers(&[1]));
        assert_eq!(
            q,
            UnivariatePolynomial::from_ratios(&[(1, 2), (0, 1), (-1, 2)])
        );
        assert!(apply_integral(&UnivariatePolynomial::zero()).is_zero());
    }

    #[test]
    fn integral_of_cubic_matches_factored_form() {
        // (1 - r)^4 (4r + 1) / 20, expanded by multiplication only.
        let expected =
            (&base_poly(4) * &UnivariatePolynomial::from_integers(&[1, 4])).scale(&ratio(1, 20));
        assert_eq!(apply_integral(&base_poly(3)), expected);
    }

    #[test]
    fn integral_satisfies_defining_ode() {
        for ell in 0..8 {
            let p = base_poly(ell);
            let q = apply_integral(&p);
            assert!(q.eval_exact(&BigRational::one()).is_zero());
            assert_eq!(q.derivative(), -&p.shift(1));
            assert_eq!(q.degree(), Some(ell + 2));
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        let err = WendlandKernel::new(2, 0).unwrap_err();
        assert!(err.to_string().contains("d >= 3"));
        assert!(WendlandKernel::new(0, 1).is_err());
        assert!(WendlandKernel::new(17, 1).is_err());
        assert!(WendlandKernel::new(3, 5).is_err());
        assert!(WendlandKernel::with_scale(3, 1, 0.0).is_err());
        assert!(WendlandKernel::with_scale(3, 1, f64::NAN).is_err());
    }

    #[test]
    fn phi_3_0_is_truncated_square() {
        let kern = WendlandKernel::new(3, 0).unwrap();
        assert_eq!(kern.poly(), &base_poly(2));
        assert_eq!(kern.degree(), 2);
    }

    #[test]
    fn eval_phi_examples() {
        let kern = WendlandKernel::new(3, 1).unwrap();
        assert!((kern.eval_phi(0.0) - 0.05).abs() < 1e-16);
        assert!((kern.eval_phi(0.5) - 0.009375).abs() < 1e-15);
        assert_eq!(kern.eval_phi(1.0), 0.0);
        assert_eq!(kern.eval_phi(3.7), 0.0);
    }

    #[test]
    fn scale_stretches_support() {
        let kern = WendlandKernel::with_scale(3, 1, 2.0).unwrap();
        assert!((kern.eval_phi(1.0) - 0.009375).abs() < 1e-15);
        assert_eq!(kern.eval_phi(2.0), 0.0);
    }

    #[test]
    fn eval_kernel_checks_dimension() {
        let kern = WendlandKernel::new(3, 1).unwrap();
        let v = kern
            .eval_kernel(&[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0])
            .unwrap();
        assert!((v - 0.009375).abs() < 1e-15);
        assert!(kern.eval_kernel(&[0.0, 0.0], &[0.5, 0.0, 0.0]).is_err());
    }

    #[test]
    fn smoothness_defect_examples() {
        let k31 = WendlandKernel::new(3, 1).unwrap();
        assert_eq!(k31.smoothness_defect(0), 0.0);
        assert_eq!(k31.smoothness_defect(2), 0.0);
        let k30 = WendlandKernel::new(3, 0).unwrap();
        assert_eq!(k30.smoothness_defect(1), 0.0);
        assert_eq!(k30.smoothness_defect(2), 2.0);
    }

    #[test]
    fn sigma_and_diagonal() {
        let kern = WendlandKernel::new(2, 1).unwrap();
        assert_eq!(kern.sigma(), 2.5);
        assert_eq!(kern.degree(), 5);
        assert!(kern.diagonal() > 0.0);
    }
}
