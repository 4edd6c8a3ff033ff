//! Closed intervals over `f64` with outward rounding.
//!
//! Every primitive operation computes the round-to-nearest result and then
//! checks the exact rounding error (via `mul_add` residuals or the TwoSum
//! transform). When the result is inexact the affected endpoint is moved one
//! representable value outward, so exact dyadic computations stay degenerate
//! and every returned interval contains the real result.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Widening applied to each endpoint of `exp`, in units in the last place.
///
/// The host `exp` is assumed accurate to within 1 ulp.
pub const EXP_WIDENING_ULPS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("non-finite value {0} cannot start an interval")]
    NonFinite(f64),
    #[error("inverted bounds [{lo}, {hi}]")]
    Inverted { lo: f64, hi: f64 },
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("{op} needs a strictly positive interval, got {value}")]
    NotPositive { op: &'static str, value: Interval },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(serialize_with = "crate::finite::serialize")]
    lo: f64,
    #[serde(serialize_with = "crate::finite::serialize")]
    hi: f64,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

/// Exact error of `a + b`: returns `(s, e)` with `s = fl(a + b)` and `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

fn down_if(v: f64, inexact_high: bool) -> f64 {
    if inexact_high {
        v.next_down()
    } else {
        v
    }
}

fn up_if(v: f64, inexact_low: bool) -> f64 {
    if inexact_low {
        v.next_up()
    } else {
        v
    }
}

fn lower_sum(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    down_if(s, e < 0.0)
}

fn upper_sum(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    up_if(s, e > 0.0)
}

// Below this magnitude fma residuals may be inexact (subnormal range).
const TINY: f64 = 1e-290;

fn lower_product(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p.abs() < TINY && a != 0.0 && b != 0.0 {
        return p.min(0.0).next_down();
    }
    // fma gives the exact residual a*b - p
    let r = a.mul_add(b, -p);
    down_if(p, r < 0.0)
}

fn upper_product(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p.abs() < TINY && a != 0.0 && b != 0.0 {
        return p.max(0.0).next_up();
    }
    let r = a.mul_add(b, -p);
    up_if(p, r > 0.0)
}

fn nudge_down(mut v: f64, ulps: u32) -> f64 {
    for _ in 0..ulps {
        v = v.next_down();
    }
    v
}

fn nudge_up(mut v: f64, ulps: u32) -> f64 {
    for _ in 0..ulps {
        v = v.next_up();
    }
    v
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    /// Degenerate interval `[v, v]`.
    pub fn point(v: f64) -> Result<Self, IntervalError> {
        if !v.is_finite() {
            return Err(IntervalError::NonFinite(v));
        }
        Ok(Interval { lo: v, hi: v })
    }

    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if !lo.is_finite() {
            return Err(IntervalError::NonFinite(lo));
        }
        if !hi.is_finite() {
            return Err(IntervalError::NonFinite(hi));
        }
        if lo > hi {
            return Err(IntervalError::Inverted { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// Tightest enclosure of `num / den` reachable with one correctly rounded
    /// division: degenerate when the quotient is exact, one ulp wide otherwise.
    pub fn from_ratio(num: i64, den: i64) -> Result<Self, IntervalError> {
        if den == 0 {
            return Err(IntervalError::ZeroDenominator);
        }
        Interval::point(num as f64)
            .map(|n| if den < 0 { -n } else { n })
            .map(|n| n.div_int(den.unsigned_abs()))
    }

    /// Enclosure of an arbitrary-precision rational, checked exactly.
    pub fn from_big_rational(r: &BigRational) -> Self {
        let approx = r.to_f64().unwrap_or(0.0);
        let mut lo = approx;
        let mut hi = approx;
        // Move endpoints outward until exact comparison certifies containment.
        while BigRational::from_float(lo).is_none_or(|l| &l > r) {
            lo = lo.next_down();
        }
        while BigRational::from_float(hi).is_none_or(|h| &h < r) {
            hi = hi.next_up();
        }
        Interval { lo, hi }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        self.lo + (self.hi - self.lo) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Exact containment test for a rational value.
    pub fn contains_rational(&self, r: &BigRational) -> bool {
        match (BigRational::from_float(self.lo), BigRational::from_float(self.hi)) {
            (Some(lo), Some(hi)) => &lo <= r && r <= &hi,
            _ => false,
        }
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Smallest interval containing both operands.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// `true` iff every point of `self` exceeds every point of `other`.
    /// Touching endpoints give `false`.
    pub fn strictly_right_of(&self, other: &Interval) -> bool {
        self.lo > other.hi
    }

    pub fn square(self) -> Interval {
        if self.lo >= 0.0 {
            Interval {
                lo: lower_product(self.lo, self.lo),
                hi: upper_product(self.hi, self.hi),
            }
        } else if self.hi <= 0.0 {
            Interval {
                lo: lower_product(self.hi, self.hi),
                hi: upper_product(self.lo, self.lo),
            }
        } else {
            let m = self.lo.abs().max(self.hi);
            Interval {
                lo: 0.0,
                hi: upper_product(m, m),
            }
        }
    }

    pub fn cube(self) -> Interval {
        self.square() * self
    }

    /// Division by a positive exact integer.
    pub fn div_int(self, d: u64) -> Interval {
        assert!(d > 0, "division by zero");
        let df = d as f64;
        debug_assert!(df as u64 == d, "divisor must be exactly representable");
        let ql = self.lo / df;
        let qh = self.hi / df;
        // residual q*d - x is exact for correctly rounded quotients
        let rl = ql.mul_add(df, -self.lo);
        let rh = qh.mul_add(df, -self.hi);
        Interval {
            lo: down_if(ql, rl > 0.0 || (ql == 0.0 && self.lo < 0.0)),
            hi: up_if(qh, rh < 0.0 || (qh == 0.0 && self.hi > 0.0)),
        }
    }

    /// Multiplication by the exact rational `num / den`.
    pub fn scale(self, num: i64, den: u64) -> Interval {
        let n = Interval::point(num as f64).expect("finite numerator");
        (self * n).div_int(den)
    }

    pub fn exp(self) -> Interval {
        let lo = if self.lo == 0.0 {
            1.0
        } else {
            nudge_down(self.lo.exp(), EXP_WIDENING_ULPS).max(0.0)
        };
        let hi = if self.hi == 0.0 {
            1.0
        } else {
            nudge_up(self.hi.exp(), EXP_WIDENING_ULPS)
        };
        Interval { lo, hi }
    }

    /// Square root of a nonnegative interval (IEEE `sqrt` is correctly rounded).
    pub fn sqrt(self) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::NotPositive {
                op: "sqrt",
                value: self,
            });
        }
        let sl = self.lo.sqrt();
        let sh = self.hi.sqrt();
        Ok(Interval {
            lo: down_if(sl, sl.mul_add(sl, -self.lo) > 0.0),
            hi: up_if(sh, sh.mul_add(sh, -self.hi) < 0.0),
        })
    }

    /// Reciprocal of a strictly positive interval.
    pub fn recip(self) -> Result<Interval, IntervalError> {
        if self.lo <= 0.0 {
            return Err(IntervalError::NotPositive {
                op: "recip",
                value: self,
            });
        }
        let rl = 1.0 / self.hi;
        let rh = 1.0 / self.lo;
        Ok(Interval {
            lo: down_if(rl, rl.mul_add(self.hi, -1.0) > 0.0),
            hi: up_if(rh, rh.mul_add(self.lo, -1.0) < 0.0),
        })
    }

    /// Clamp to `[lo, hi]` when the exact value is known to lie there.
    pub fn clamp_to(self, lo: f64, hi: f64) -> Interval {
        Interval {
            lo: self.lo.max(lo).min(hi),
            hi: self.hi.min(hi).max(lo),
        }
    }
}

impl From<Interval> for (f64, f64) {
    fn from(iv: Interval) -> Self {
        (iv.lo, iv.hi)
    }
}

impl Add for Interval {
    type Output = Interval;

    fn add(self, rhs: Interval) -> Interval {
        Interval {
            lo: lower_sum(self.lo, rhs.lo),
            hi: upper_sum(self.hi, rhs.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;

    fn sub(self, rhs: Interval) -> Interval {
        self + (-rhs)
    }
}

impl Neg for Interval {
    type Output = Interval;

    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;

    fn mul(self, rhs: Interval) -> Interval {
        let pairs = [
            (self.lo, rhs.lo),
            (self.lo, rhs.hi),
            (self.hi, rhs.lo),
            (self.hi, rhs.hi),
        ];
        let lo = pairs
            .iter()
            .map(|&(a, b)| lower_product(a, b))
            .fold(f64::INFINITY, f64::min);
        let hi = pairs
            .iter()
            .map(|&(a, b)| upper_product(a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        Interval { lo, hi }
    }
}
