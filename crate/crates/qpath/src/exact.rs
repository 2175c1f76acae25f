//! Exact Gaussian-integer arithmetic and scaled amplitudes.
//!
//! [`GaussianInt`] is `a + b*i` over arbitrary-precision integers.
//! [`ExactAmplitude`] is a Gaussian integer divided by `5^f * sqrt(2)^h`,
//! the only denominators that arise from the `{CNOT, F, F+, H, I}` gate
//! library, so states and probabilities stay exact.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::fixed::{Fixed, FixedComplex};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("amplitudes have different denominators: 5^{f0}*sqrt2^{h0} vs 5^{f1}*sqrt2^{h1}")]
    DenominatorMismatch { f0: u32, h0: u32, f1: u32, h1: u32 },
}

/// Gaussian integer `re + im*i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GaussianInt {
    pub re: BigInt,
    pub im: BigInt,
}

impl GaussianInt {
    pub fn new(re: impl Into<BigInt>, im: impl Into<BigInt>) -> Self {
        GaussianInt { re: re.into(), im: im.into() }
    }

    pub fn zero() -> Self {
        GaussianInt { re: BigInt::zero(), im: BigInt::zero() }
    }

    pub fn one() -> Self {
        GaussianInt { re: BigInt::one(), im: BigInt::zero() }
    }

    pub fn i() -> Self {
        GaussianInt { re: BigInt::zero(), im: BigInt::one() }
    }

    pub fn conj(&self) -> Self {
        GaussianInt { re: self.re.clone(), im: -&self.im }
    }

    /// `re^2 + im^2`, always nonnegative and zero only at zero.
    pub fn norm_sqr(&self) -> BigUint {
        (&self.re * &self.re + &self.im * &self.im)
            .to_biguint()
            .expect("norm is nonnegative")
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    /// Multiplication by `i` (counterclockwise quarter turn).
    pub fn mul_i(&self) -> Self {
        GaussianInt { re: -&self.im, im: self.re.clone() }
    }

    /// Multiplication by `-i`.
    pub fn mul_neg_i(&self) -> Self {
        GaussianInt { re: self.im.clone(), im: -&self.re }
    }

    pub fn scale(&self, k: &BigInt) -> Self {
        GaussianInt { re: &self.re * k, im: &self.im * k }
    }
}

impl Add for &GaussianInt {
    type Output = GaussianInt;
    fn add(self, rhs: &GaussianInt) -> GaussianInt {
        GaussianInt { re: &self.re + &rhs.re, im: &self.im + &rhs.im }
    }
}

impl Sub for &GaussianInt {
    type Output = GaussianInt;
    fn sub(self, rhs: &GaussianInt) -> GaussianInt {
        GaussianInt { re: &self.re - &rhs.re, im: &self.im - &rhs.im }
    }
}

impl Mul for &GaussianInt {
    type Output = GaussianInt;
    fn mul(self, rhs: &GaussianInt) -> GaussianInt {
        GaussianInt {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }
}

impl Neg for &GaussianInt {
    type Output = GaussianInt;
    fn neg(self) -> GaussianInt {
        GaussianInt { re: -&self.re, im: -&self.im }
    }
}

impl fmt::Display for GaussianInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.im.is_zero() {
            write!(f, "{}", self.re)
        } else if self.re.is_zero() {
            write!(f, "{}i", self.im)
        } else if self.im.is_negative() {
            write!(f, "{}{}i", self.re, self.im)
        } else {
            write!(f, "{}+{}i", self.re, self.im)
        }
    }
}

/// Exact product of two Gaussian integers.
pub fn gaussian_mul(a: &GaussianInt, b: &GaussianInt) -> GaussianInt {
    a * b
}

/// Complex value carried at an explicit precision: each component is within
/// `2^-precision_bits` of the true value.
#[derive(Clone, Debug)]
pub struct ComplexApprox {
    pub re: Fixed,
    pub im: Fixed,
    pub precision_bits: u32,
}

impl ComplexApprox {
    pub fn new(value: FixedComplex, precision_bits: u32) -> Self {
        ComplexApprox { re: value.re, im: value.im, precision_bits }
    }

    pub fn to_fixed_complex(&self) -> FixedComplex {
        FixedComplex::new(self.re.clone(), self.im.clone())
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }

    /// Per-component absolute error bound, `2^-precision_bits`.
    pub fn error_bound(&self) -> f64 {
        2f64.powi(-(self.precision_bits.min(1060) as i32))
    }
}

/// Exact amplitude `num / (5^f * sqrt(2)^h)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactAmplitude {
    pub num: GaussianInt,
    pub f: u32,
    pub h: u32,
}

impl ExactAmplitude {
    pub fn new(num: GaussianInt, f: u32, h: u32) -> Self {
        ExactAmplitude { num, f, h }
    }

    pub fn one() -> Self {
        ExactAmplitude { num: GaussianInt::one(), f: 0, h: 0 }
    }

    /// Sum; both sides must share the `(f, h)` denominator.
    pub fn checked_add(&self, other: &ExactAmplitude) -> Result<ExactAmplitude, ExactError> {
        if self.f != other.f || self.h != other.h {
            return Err(ExactError::DenominatorMismatch {
                f0: self.f,
                h0: self.h,
                f1: other.f,
                h1: other.h,
            });
        }
        Ok(ExactAmplitude { num: &self.num + &other.num, f: self.f, h: self.h })
    }

    /// Rewrites with `f + 1` by multiplying the numerator by 5. No-op in value.
    pub fn raise_f(&self) -> ExactAmplitude {
        ExactAmplitude { num: self.num.scale(&BigInt::from(5)), f: self.f + 1, h: self.h }
    }

    /// Rewrites with `h + 2` by multiplying the numerator by 2. No-op in value.
    pub fn raise_h_by_two(&self) -> ExactAmplitude {
        ExactAmplitude { num: self.num.scale(&BigInt::from(2)), f: self.f, h: self.h + 2 }
    }

    /// Exact squared magnitude `|num|^2 / (25^f * 2^h)`.
    pub fn norm_sqr_rational(&self) -> BigRational {
        let num = BigInt::from(self.num.norm_sqr());
        let den = BigInt::from(25u32).pow(self.f) * (BigInt::one() << self.h as usize);
        BigRational::new(num, den)
    }

    /// Value to `k` fractional bits; the result's components are each within
    /// `2^-k` of the exact value.
    pub fn value(&self, k: u32) -> ComplexApprox {
        // 1 / (5^f * 2^floor(h/2)), exact rational part of the denominator
        let den = BigInt::from(5u32).pow(self.f) << (self.h / 2) as usize;
        // the reciprocal's error is amplified by |num|, so the working
        // precision must scale with the operand magnitudes
        let num_bits = self.num.re.bits().max(self.num.im.bits()) as u32;
        let work = k + 32 + num_bits.max(den.bits() as u32);
        let mut factor = Fixed::from_ratio(&BigInt::one(), &den, work);
        if self.h % 2 == 1 {
            let half = Fixed::from_ratio(&BigInt::one(), &BigInt::from(2), 2 * work);
            factor = factor.mul(&half.sqrt(work), work);
        }
        let re = Fixed::from_bigint(&self.num.re, work).mul(&factor, work);
        let im = Fixed::from_bigint(&self.num.im, work).mul(&factor, work);
        ComplexApprox {
            re: re.rescale(k),
            im: im.rescale(k),
            precision_bits: k,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(re: i64, im: i64) -> GaussianInt {
        GaussianInt::new(re, im)
    }

    #[test]
    fn conjugate_norm_identity() {
        let a = g(3, 4);
        let p = gaussian_mul(&a, &a.conj());
        assert_eq!(p, g(25, 0));
    }

    #[test]
    fn identity_and_i_squared() {
        assert_eq!(gaussian_mul(&g(1, 0), &g(7, -2)), g(7, -2));
        assert_eq!(gaussian_mul(&GaussianInt::i(), &GaussianInt::i()), g(-1, 0));
    }

    #[test]
    fn amplitude_value_unit() {
        let a = ExactAmplitude::new(g(1, 0), 0, 0);
        let v = a.value(32);
        let (re, im) = v.to_f64_pair();
        assert_eq!(re, 1.0);
        assert_eq!(im, 0.0);
    }

    #[test]
    fn amplitude_value_f_gate_entry() {
        // (3+4i)/5 = 0.6 + 0.8i
        let a = ExactAmplitude::new(g(3, 4), 1, 0);
        let v = a.value(32);
        let (re, im) = v.to_f64_pair();
        assert!((re - 0.6).abs() < 2e-10);
        assert!((im - 0.8).abs() < 2e-10);
    }

    #[test]
    fn amplitude_value_inv_sqrt2() {
        let a = ExactAmplitude::new(g(1, 0), 0, 1);
        let v = a.value(32);
        let (re, im) = v.to_f64_pair();
        assert!((re - std::f64::consts::FRAC_1_SQRT_2).abs() < 2e-10);
        assert_eq!(im, 0.0);
    }

    #[test]
    fn add_requires_matching_denominator() {
        let a = ExactAmplitude::new(g(1, 0), 0, 1);
        let b = ExactAmplitude::new(g(1, 0), 1, 1);
        assert!(a.checked_add(&b).is_err());
        assert!(a.checked_add(&a).is_ok());
    }

    #[test]
    fn denominator_rewrites_preserve_value() {
        let a = ExactAmplitude::new(g(2, -3), 1, 1);
        for b in [a.raise_f(), a.raise_h_by_two()] {
            assert_eq!(a.norm_sqr_rational(), b.norm_sqr_rational());
            let (r0, i0) = a.value(80).to_f64_pair();
            let (r1, i1) = b.value(80).to_f64_pair();
            assert!((r0 - r1).abs() < 1e-15 && (i0 - i1).abs() < 1e-15);
        }
    }
}
