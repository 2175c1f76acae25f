//! Arbitrary-precision binary fixed-point arithmetic.
//!
//! A [`Fixed`] value is `mant / 2^bits`. All operations are over
//! [`BigInt`] mantissas, so precision is limited only by the scale the
//! caller picks. Rounding operations err by at most one unit in the last
//! place of the result scale; exact operations (addition, subtraction,
//! products without rescaling) do not round at all.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, ToPrimitive, Zero};

/// Binary fixed-point number `mant / 2^bits`.
#[derive(Clone, Debug)]
pub struct Fixed {
    mant: BigInt,
    bits: u32,
}

/// Shift right with round-half-up; error at most 1/2 ulp.
fn round_shr(x: &BigInt, k: u32) -> BigInt {
    if k == 0 {
        return x.clone();
    }
    (x + (BigInt::from(1) << (k - 1) as usize)) >> k as usize
}

impl Fixed {
    pub fn new(mant: BigInt, bits: u32) -> Self {
        Fixed { mant, bits }
    }

    pub fn zero(bits: u32) -> Self {
        Fixed { mant: BigInt::zero(), bits }
    }

    pub fn one(bits: u32) -> Self {
        Fixed { mant: BigInt::from(1) << bits as usize, bits }
    }

    pub fn from_int(n: i64, bits: u32) -> Self {
        Fixed { mant: BigInt::from(n) << bits as usize, bits }
    }

    pub fn from_bigint(n: &BigInt, bits: u32) -> Self {
        Fixed { mant: n << bits as usize, bits }
    }

    /// Exact conversion: every finite `f64` is a dyadic rational.
    pub fn from_f64_exact(x: f64, min_bits: u32) -> Self {
        assert!(x.is_finite(), "non-finite value");
        let (mant, exp, sign) = integer_decode(x);
        let mut m = BigInt::from(mant);
        if sign < 0 {
            m = -m;
        }
        // value = m * 2^exp
        if exp >= 0 {
            Fixed { mant: m << ((exp as u32 + min_bits) as usize), bits: min_bits }
        } else {
            let frac = (-exp) as u32;
            if frac >= min_bits {
                Fixed { mant: m, bits: frac }
            } else {
                Fixed { mant: m << (min_bits - frac) as usize, bits: min_bits }
            }
        }
    }

    /// `p / q` rounded to nearest at `bits`; `q` must be nonzero.
    pub fn from_ratio(p: &BigInt, q: &BigInt, bits: u32) -> Self {
        assert!(!q.is_zero(), "zero denominator");
        let (p, q) = if q.is_negative() { (-p, -q.clone()) } else { (p.clone(), q.clone()) };
        let scaled = p << (bits + 1) as usize;
        let twice = scaled / &q;
        Fixed { mant: round_shr(&twice, 1), bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mant(&self) -> &BigInt {
        &self.mant
    }

    pub fn to_f64(&self) -> f64 {
        // Mantissas can exceed f64 range; reduce scale first if so.
        let width = self.mant.bits();
        if width > 900 {
            let drop = (width - 900) as u32;
            let reduced = Fixed { mant: round_shr(&self.mant, drop), bits: self.bits.saturating_sub(drop) };
            return reduced.to_f64();
        }
        let m = self.mant.to_f64().unwrap_or(f64::NAN);
        m / 2f64.powi(self.bits as i32)
    }

    /// Change scale; rounds when dropping bits, exact when adding.
    pub fn rescale(&self, bits: u32) -> Self {
        match bits.cmp(&self.bits) {
            Ordering::Equal => self.clone(),
            Ordering::Greater => Fixed {
                mant: &self.mant << (bits - self.bits) as usize,
                bits,
            },
            Ordering::Less => Fixed { mant: round_shr(&self.mant, self.bits - bits), bits },
        }
    }

    fn aligned(&self, other: &Fixed) -> (BigInt, BigInt, u32) {
        let bits = self.bits.max(other.bits);
        let a = &self.mant << (bits - self.bits) as usize;
        let b = &other.mant << (bits - other.bits) as usize;
        (a, b, bits)
    }

    pub fn add(&self, other: &Fixed) -> Fixed {
        let (a, b, bits) = self.aligned(other);
        Fixed { mant: a + b, bits }
    }

    pub fn sub(&self, other: &Fixed) -> Fixed {
        let (a, b, bits) = self.aligned(other);
        Fixed { mant: a - b, bits }
    }

    pub fn neg(&self) -> Fixed {
        Fixed { mant: -&self.mant, bits: self.bits }
    }

    pub fn abs(&self) -> Fixed {
        Fixed { mant: self.mant.abs(), bits: self.bits }
    }

    /// Exact product; result scale is the sum of the input scales.
    pub fn mul_exact(&self, other: &Fixed) -> Fixed {
        Fixed { mant: &self.mant * &other.mant, bits: self.bits + other.bits }
    }

    /// Product rounded to `out_bits`.
    pub fn mul(&self, other: &Fixed, out_bits: u32) -> Fixed {
        self.mul_exact(other).rescale(out_bits)
    }

    /// Quotient rounded to `out_bits`; `other` must be nonzero.
    pub fn div(&self, other: &Fixed, out_bits: u32) -> Fixed {
        assert!(!other.mant.is_zero(), "division by zero");
        let (mut num, mut den) = (self.mant.clone(), other.mant.clone());
        if den.is_negative() {
            num = -num;
            den = -den;
        }
        // value = (num/2^a) / (den/2^b) = num * 2^(b-a) / den
        let shift = out_bits as i64 + other.bits as i64 - self.bits as i64 + 1;
        let scaled = if shift >= 0 { num << shift as usize } else { num >> (-shift) as usize };
        Fixed { mant: round_shr(&(scaled / den), 1), bits: out_bits }
    }

    /// Square root rounded down to `out_bits`; input must be nonnegative.
    pub fn sqrt(&self, out_bits: u32) -> Fixed {
        assert!(!self.mant.is_negative(), "sqrt of negative value");
        // value = m / 2^b; result = floor(sqrt(m * 2^(2k - b))) / 2^k
        let shift = 2 * out_bits as i64 - self.bits as i64;
        let scaled = if shift >= 0 {
            &self.mant << shift as usize
        } else {
            &self.mant >> (-shift) as usize
        };
        let root = scaled.to_biguint().expect("nonnegative").sqrt();
        Fixed { mant: BigInt::from_biguint(Sign::Plus, root), bits: out_bits }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.mant.is_negative()
    }

    /// Compares `|self|` against `2^-k`.
    pub fn abs_cmp_pow2(&self, k: i64) -> Ordering {
        // |mant| / 2^bits vs 2^-k  <=>  |mant| vs 2^(bits - k)
        let e = self.bits as i64 - k;
        if e < 0 {
            return if self.mant.is_zero() { Ordering::Less } else { Ordering::Greater };
        }
        self.mant.abs().cmp(&(BigInt::from(1) << e as usize))
    }
}

impl PartialEq for Fixed {
    fn eq(&self, other: &Self) -> bool {
        let (a, b, _) = self.aligned(other);
        a == b
    }
}

impl Eq for Fixed {}

impl PartialOrd for Fixed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fixed {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

fn integer_decode(x: f64) -> (u64, i16, i8) {
    let bits = x.to_bits();
    let sign: i8 = if bits >> 63 == 0 { 1 } else { -1 };
    let mut exponent = ((bits >> 52) & 0x7ff) as i16;
    let mantissa = if exponent == 0 {
        (bits & 0xf_ffff_ffff_ffff) << 1
    } else {
        (bits & 0xf_ffff_ffff_ffff) | 0x10_0000_0000_0000
    };
    exponent -= 1075;
    (mantissa, exponent, sign)
}

/// Complex number with fixed-point components.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedComplex {
    pub re: Fixed,
    pub im: Fixed,
}

impl FixedComplex {
    pub fn new(re: Fixed, im: Fixed) -> Self {
        FixedComplex { re, im }
    }

    pub fn zero(bits: u32) -> Self {
        FixedComplex { re: Fixed::zero(bits), im: Fixed::zero(bits) }
    }

    pub fn one(bits: u32) -> Self {
        FixedComplex { re: Fixed::one(bits), im: Fixed::zero(bits) }
    }

    pub fn from_f64_exact(re: f64, im: f64, min_bits: u32) -> Self {
        FixedComplex {
            re: Fixed::from_f64_exact(re, min_bits),
            im: Fixed::from_f64_exact(im, min_bits),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        FixedComplex { re: self.re.add(&other.re), im: self.im.add(&other.im) }
    }

    pub fn sub(&self, other: &Self) -> Self {
        FixedComplex { re: self.re.sub(&other.re), im: self.im.sub(&other.im) }
    }

    pub fn neg(&self) -> Self {
        FixedComplex { re: self.re.neg(), im: self.im.neg() }
    }

    pub fn conj(&self) -> Self {
        FixedComplex { re: self.re.clone(), im: self.im.neg() }
    }

    /// Exact product (scales add).
    pub fn mul_exact(&self, other: &Self) -> Self {
        FixedComplex {
            re: self.re.mul_exact(&other.re).sub(&self.im.mul_exact(&other.im)),
            im: self.re.mul_exact(&other.im).add(&self.im.mul_exact(&other.re)),
        }
    }

    pub fn mul(&self, other: &Self, out_bits: u32) -> Self {
        let exact = self.mul_exact(other);
        FixedComplex { re: exact.re.rescale(out_bits), im: exact.im.rescale(out_bits) }
    }

    /// Exact `re^2 + im^2`.
    pub fn norm_sqr(&self) -> Fixed {
        self.re.mul_exact(&self.re).add(&self.im.mul_exact(&self.im))
    }

    /// `sqrt(re^2 + im^2)` rounded to `out_bits`.
    pub fn abs(&self, out_bits: u32) -> Fixed {
        self.norm_sqr().sqrt(out_bits)
    }

    pub fn rescale(&self, bits: u32) -> Self {
        FixedComplex { re: self.re.rescale(bits), im: self.im.rescale(bits) }
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

/// `pi` to `bits` fractional bits (Machin's formula); error under 2 ulps.
pub fn pi(bits: u32) -> Fixed {
    let work = bits + 24;
    // pi = 16 atan(1/5) - 4 atan(1/239)
    let a = atan_inv(5, work);
    let b = atan_inv(239, work);
    let mut m = (a.mant << 4usize) - (b.mant << 2usize);
    m = round_shr(&m, 24);
    Fixed { mant: m, bits }
}

/// `atan(1/x)` for integer `x >= 2` at `bits` fractional bits.
fn atan_inv(x: u64, bits: u32) -> Fixed {
    let one = BigInt::from(1) << bits as usize;
    let x = BigInt::from(x);
    let xx = &x * &x;
    let mut term = one / &x; // x^-(2k+1) scaled
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    while !term.is_zero() {
        let contrib = &term / BigInt::from(2 * k + 1);
        if k % 2 == 0 {
            sum += contrib;
        } else {
            sum -= contrib;
        }
        term /= &xx;
        k += 1;
    }
    Fixed { mant: sum, bits }
}

/// `(sin, cos)` of `pi * p / q`, rounded to `bits`; error under 2 ulps.
///
/// Arguments are reduced exactly in rational arithmetic, so huge `p` costs
/// nothing extra.
pub fn sincos_pi_ratio(p: &BigInt, q: &BigInt, bits: u32) -> (Fixed, Fixed) {
    assert!(!q.is_zero(), "zero denominator");
    let (mut p, mut q) = (p.clone(), q.clone());
    if q.is_negative() {
        p = -p;
        q = -q;
    }
    // reduce p/q mod 2 (the period of sin/cos of pi*x) to r in [0, 2)
    let two_q = &q * 2;
    let mut r: BigInt = &p % &two_q;
    if r.is_negative() {
        r += &two_q;
    }
    // octant o = floor(4r') with r' = r/q in [0,2); d = r' - o/4 in [0, 1/4)
    let o: u8 = ((&r * 4u32) / &q).to_u8().expect("octant fits");
    let dp = &r * 4 - &q * BigInt::from(o); // d = dp / (4q)
    let dq = &q * 4;

    let work = bits + 24;
    let x = pi(work).mul(&Fixed::from_ratio(&dp, &dq, work), work);
    let (s, c) = sincos_taylor(&x, work);
    let rt = Fixed::from_ratio(&BigInt::from(1), &BigInt::from(2), 2 * work).sqrt(work);
    let half_sum = |a: &Fixed, b: &Fixed| rt.mul(&a.add(b), work);
    let half_diff = |a: &Fixed, b: &Fixed| rt.mul(&a.sub(b), work);
    let (sin, cos) = match o {
        0 => (s.clone(), c.clone()),
        1 => (half_sum(&c, &s), half_diff(&c, &s)),
        2 => (c.clone(), s.neg()),
        3 => (half_diff(&c, &s), half_sum(&c, &s).neg()),
        4 => (s.neg(), c.neg()),
        5 => (half_sum(&c, &s).neg(), half_diff(&s, &c)),
        6 => (c.neg(), s.clone()),
        7 => (half_diff(&s, &c), half_sum(&c, &s)),
        _ => unreachable!(),
    };
    (sin.rescale(bits), cos.rescale(bits))
}

/// Taylor series for sin and cos, valid for |x| <= pi/4.
fn sincos_taylor(x: &Fixed, bits: u32) -> (Fixed, Fixed) {
    let xx = x.mul(x, bits);
    let mut sin = x.clone();
    let mut term = x.clone();
    let mut k: u64 = 1;
    loop {
        term = term.mul(&xx, bits);
        term = Fixed {
            mant: term.mant / BigInt::from((2 * k) * (2 * k + 1)),
            bits: term.bits,
        };
        if term.is_zero() {
            break;
        }
        if k % 2 == 1 {
            sin = sin.sub(&term);
        } else {
            sin = sin.add(&term);
        }
        k += 1;
    }
    let mut cos = Fixed::one(bits);
    let mut term = Fixed::one(bits);
    let mut k: u64 = 1;
    loop {
        term = term.mul(&xx, bits);
        term = Fixed {
            mant: term.mant / BigInt::from((2 * k - 1) * (2 * k)),
            bits: term.bits,
        };
        if term.is_zero() {
            break;
        }
        if k % 2 == 1 {
            cos = cos.sub(&term);
        } else {
            cos = cos.add(&term);
        }
        k += 1;
    }
    (sin, cos)
}

/// Floor square root of a nonnegative big integer.
pub fn big_isqrt(n: &BigUint) -> BigUint {
    n.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ratio_roundtrip() {
        let x = Fixed::from_ratio(&BigInt::from(3), &BigInt::from(5), 64);
        assert!(close(x.to_f64(), 0.6, 1e-18));
    }

    #[test]
    fn f64_conversion_is_exact() {
        for v in [0.5, -0.75, 1.0, 123.4375, -0.0001220703125] {
            let x = Fixed::from_f64_exact(v, 8);
            assert_eq!(x.to_f64(), v);
        }
    }

    #[test]
    fn sqrt_of_two() {
        let two = Fixed::from_int(2, 16);
        let r = two.sqrt(128);
        assert!(close(r.to_f64(), std::f64::consts::SQRT_2, 1e-15));
        // square it back exactly
        let sq = r.mul_exact(&r);
        let diff = sq.sub(&Fixed::from_int(2, 16));
        assert!(diff.abs_cmp_pow2(126) == std::cmp::Ordering::Less);
    }

    #[test]
    fn pi_value() {
        let p = pi(128);
        assert!(close(p.to_f64(), std::f64::consts::PI, 1e-15));
    }

    #[test]
    fn sincos_eighth_turns() {
        // sin/cos of pi*k/4 for k = 0..8 against closed forms
        let rt = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [
            (0.0, 1.0),
            (rt, rt),
            (1.0, 0.0),
            (rt, -rt),
            (0.0, -1.0),
            (-rt, -rt),
            (-1.0, 0.0),
            (-rt, rt),
            (0.0, 1.0),
        ];
        for (k, (es, ec)) in expect.iter().enumerate() {
            let (s, c) = sincos_pi_ratio(&BigInt::from(k as i64), &BigInt::from(4), 96);
            assert!(close(s.to_f64(), *es, 1e-15), "sin pi*{k}/4");
            assert!(close(c.to_f64(), *ec, 1e-15), "cos pi*{k}/4");
        }
    }

    #[test]
    fn sincos_matches_f64() {
        for (p, q) in [(1i64, 7i64), (3, 11), (-5, 9), (22, 7), (100003, 257)] {
            let (s, c) = sincos_pi_ratio(&BigInt::from(p), &BigInt::from(q), 96);
            let arg = std::f64::consts::PI * (p as f64) / (q as f64);
            assert!(close(s.to_f64(), arg.sin(), 1e-10), "sin pi*{p}/{q}");
            assert!(close(c.to_f64(), arg.cos(), 1e-10), "cos pi*{p}/{q}");
        }
    }

    #[test]
    fn division_rounds_to_nearest() {
        let one = Fixed::from_int(1, 8);
        let three = Fixed::from_int(3, 8);
        let third = one.div(&three, 64);
        assert!(close(third.to_f64(), 1.0 / 3.0, 1e-18));
    }
}
