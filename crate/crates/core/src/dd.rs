//! Double-double arithmetic and exact-ish fractional parts.
//!
//! Only what the phase computations need: sums, products by `f64` and by
//! large integers, and reduction mod 1. A value is `hi + lo` with
//! `|lo| <= ulp(hi) / 2`.

use std::ops::{Add, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    (s, e)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Exact for |n| < 2^106.
    #[inline]
    pub fn from_i128(n: i128) -> Self {
        let hi = n as f64;
        let lo = (n - hi as i128) as f64;
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    #[inline]
    pub fn mul_dd(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    /// Representative in `[0, 1)`. The pair may read `{1.0, -tiny}`, which
    /// is still below one.
    #[inline]
    pub fn frac(self) -> Self {
        let f = self.hi.floor();
        let (hi, lo) = two_sum(self.hi - f, self.lo);
        let mut r = Self { hi, lo };
        if r.hi < 0.0 || (r.hi == 0.0 && r.lo < 0.0) {
            r = r + Self::from_f64(1.0);
        } else if r.hi > 1.0 || (r.hi == 1.0 && r.lo >= 0.0) {
            r = r - Self::from_f64(1.0);
        }
        r
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

/// `x mod 1` in `[0, 1)`, never returning 1.0 for tiny negative inputs.
#[inline]
pub fn wrap01(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Fractional part of `n * a`, accurate to a few ulp of 1 for any integer `n`
/// with |n| < 2^106.
#[inline]
pub fn frac_mul(n: i128, a: f64) -> f64 {
    wrap01(frac_mul_dd(n, a).to_f64())
}

#[inline]
pub fn frac_mul_dd(n: i128, a: f64) -> DoubleDouble {
    let nd = DoubleDouble::from_i128(n);
    // Reduce hi*a and lo*a separately so neither product loses the fraction.
    let (p, e) = two_prod(nd.hi, a);
    let hi_part = DoubleDouble { hi: p, lo: 0.0 }.frac() + DoubleDouble::from_f64(e);
    let (q, g) = two_prod(nd.lo, a);
    let lo_part = DoubleDouble { hi: q, lo: g };
    (hi_part.frac() + lo_part.frac()).frac()
}

/// Signed circular distance on the unit circle, in `[-1/2, 1/2)`.
#[inline]
pub fn circle_diff(a: f64, b: f64) -> f64 {
    let d = wrap01(a - b);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frac_mul_matches_exact_rationals() {
        // 0.375 is dyadic, so n * 0.375 is exact in f64 for moderate n.
        for n in [-17i128, 0, 1, 3, 1_000_003, 123_456_789_012] {
            let exact = (n as f64) * 0.375;
            assert!((frac_mul(n, 0.375) - wrap01(exact)).abs() < 1e-15, "n={n}");
        }
    }

    #[test]
    fn frac_mul_large_binomial() {
        // C(10^8, 2) * alpha with alpha = 2^-3 + 2^-40: exact value computable
        // from integer arithmetic on the dyadic numerator.
        let j: i128 = 100_000_000;
        let c = j * (j - 1) / 2;
        let alpha = 0.125 + 2f64.powi(-40);
        // c * alpha = c/8 + c/2^40; take fractions with integer arithmetic.
        let f1 = (c % 8) as f64 / 8.0;
        let f2 = (c % (1i128 << 40)) as f64 / 2f64.powi(40);
        let expect = wrap01(f1 + f2);
        assert!((frac_mul(c, alpha) - expect).abs() < 1e-15);
    }

    #[test]
    fn frac_in_range() {
        let x = DoubleDouble { hi: 3.0, lo: -1e-20 }.frac();
        assert_eq!(x, DoubleDouble { hi: 1.0, lo: -1e-20 });
        assert_eq!(wrap01(x.to_f64()), 0.0);
        let y = DoubleDouble { hi: -2.0, lo: 0.0 }.frac();
        assert_eq!(y, DoubleDouble::ZERO);
    }

    #[test]
    fn circle_distance() {
        assert!((circle_diff(0.99, 0.01) + 0.02).abs() < 1e-15);
        assert!((circle_diff(0.01, 0.99) - 0.02).abs() < 1e-15);
    }
}
