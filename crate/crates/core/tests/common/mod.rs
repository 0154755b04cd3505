//! Shared helpers for integration tests: an arbitrary-precision fixed-point
//! oracle built on `num-bigint`, and tolerance checks.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Fractional bits of the oracle.
pub const PREC: u32 = 320;

/// Signed fixed-point number `value / 2^PREC`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BigFixed(BigInt);

fn one_raw() -> BigInt {
    BigInt::one() << PREC
}

impl BigFixed {
    pub fn zero() -> Self {
        Self(BigInt::zero())
    }

    pub fn one() -> Self {
        Self(one_raw())
    }

    pub fn from_int(n: i64) -> Self {
        Self(BigInt::from(n) << PREC)
    }

    /// Exact conversion; every finite f64 is a dyadic rational.
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "oracle input must be finite");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let sign = if bits >> 63 == 1 { -1 } else { 1 };
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        let m = BigInt::from(mant) * sign;
        let shift = e + PREC as i64;
        if shift >= 0 {
            Self(m << shift as usize)
        } else {
            Self(m >> (-shift) as usize)
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.0.is_zero() {
            return 0.0;
        }
        let bits = self.0.bits() as i64;
        let drop = (bits - 64).max(0);
        let top = (&self.0 >> drop as usize).to_f64().unwrap();
        top * 2f64.powi((drop - PREC as i64) as i32)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self(&self.0 - &o.0)
    }

    pub fn neg(&self) -> Self {
        Self(-&self.0)
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self((&self.0 * &o.0) >> PREC)
    }

    pub fn div(&self, o: &Self) -> Self {
        assert!(!o.0.is_zero(), "oracle division by zero");
        Self((&self.0 << PREC) / &o.0)
    }

    pub fn div_int(&self, n: i64) -> Self {
        Self(&self.0 / n)
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn max(self, o: Self) -> Self {
        if self >= o {
            self
        } else {
            o
        }
    }

    pub fn sqrt(&self) -> Self {
        assert!(!self.is_negative(), "oracle sqrt of a negative number");
        Self((&self.0 << PREC).sqrt())
    }

    /// Sum of a power series `Σ term_n` where `next(term, n)` yields the
    /// following term; stops once a term vanishes at this precision.
    fn series(first: Self, mut next: impl FnMut(&Self, i64) -> Self) -> Self {
        let mut sum = first.clone();
        let mut term = first;
        let mut n = 1;
        loop {
            term = next(&term, n);
            if term.0.is_zero() {
                return sum;
            }
            sum = sum.add(&term);
            n += 1;
        }
    }

    /// `atanh(z) = Σ z^(2n+1)/(2n+1)` for `|z| < 1`.
    fn atanh(z: &Self) -> Self {
        let z2 = z.mul(z);
        let mut power = z.clone();
        let mut sum = z.clone();
        let mut n = 1i64;
        loop {
            power = power.mul(&z2);
            let term = power.div_int(2 * n + 1);
            if term.0.is_zero() {
                return sum;
            }
            sum = sum.add(&term);
            n += 1;
        }
    }

    /// `atan(1/n)` for integer `n > 1`.
    fn atan_inv(n: i64) -> Self {
        let x = Self::one().div_int(n);
        let x2 = x.mul(&x);
        let mut power = x.clone();
        let mut sum = x;
        let mut k = 1i64;
        loop {
            power = power.mul(&x2);
            let term = power.div_int(2 * k + 1);
            if term.0.is_zero() {
                return sum;
            }
            sum = if k % 2 == 1 { sum.sub(&term) } else { sum.add(&term) };
            k += 1;
        }
    }

    pub fn ln2() -> Self {
        Self::atanh(&Self::one().div_int(3)).add(&Self::atanh(&Self::one().div_int(3)))
    }

    pub fn pi() -> Self {
        Self::atan_inv(5)
            .mul(&Self::from_int(16))
            .sub(&Self::atan_inv(239).mul(&Self::from_int(4)))
    }

    /// Natural log via `x = m·2^k`, `ln m = 2·atanh((m−1)/(m+1))`.
    pub fn ln(&self) -> Self {
        assert!(self.0.is_positive(), "oracle ln of a non-positive number");
        let k = self.0.bits() as i64 - 1 - PREC as i64;
        let m = if k >= 0 { Self(&self.0 >> k as usize) } else { Self(&self.0 << (-k) as usize) };
        let z = m.sub(&Self::one()).div(&m.add(&Self::one()));
        let ln_m = Self::atanh(&z).add(&Self::atanh(&z));
        ln_m.add(&Self::ln2().mul(&Self::from_int(k)))
    }

    /// `e^x` via `x = k·ln2 + r`, Taylor on `r`.
    pub fn exp(&self) -> Self {
        let ln2 = Self::ln2();
        let k = self.div(&ln2).round_to_int();
        let r = self.sub(&ln2.mul(&Self::from_int(k)));
        let e_r = Self::series(Self::one(), |t, n| t.mul(&r).div_int(n));
        if k >= 0 {
            Self(e_r.0 << k as usize)
        } else {
            Self(e_r.0 >> (-k) as usize)
        }
    }

    fn round_to_int(&self) -> i64 {
        let half = one_raw() >> 1;
        let floored: BigInt = (&self.0 + half) >> PREC;
        floored.to_i64().expect("oracle exponent out of range")
    }

    /// Reduces into `[-π, π]`.
    fn reduce_angle(&self) -> Self {
        let two_pi = Self::pi().add(&Self::pi());
        let k = self.div(&two_pi).round_to_int();
        self.sub(&two_pi.mul(&Self::from_int(k)))
    }

    pub fn cos(&self) -> Self {
        let x = self.reduce_angle();
        let x2 = x.mul(&x);
        Self::series(Self::one(), |t, n| t.mul(&x2).div_int((2 * n - 1) * (2 * n)).neg())
    }

    pub fn sin(&self) -> Self {
        let x = self.reduce_angle();
        let x2 = x.mul(&x);
        Self::series(x, |t, n| t.mul(&x2).div_int((2 * n) * (2 * n + 1)).neg())
    }

    /// `1 / (1 + e^−x)`.
    pub fn sigmoid(&self) -> Self {
        Self::one().div(&Self::one().add(&self.neg().exp()))
    }
}

/// `|a − b| / |b|`, or `|a − b|` when the reference is exactly zero.
pub fn rel_err(actual: f64, reference: f64) -> f64 {
    let diff = (actual - reference).abs();
    if reference == 0.0 {
        diff
    } else {
        diff / reference.abs()
    }
}
