//! The generating-function operators `L`, `H` and `A` evaluated in interval
//! arithmetic.
//!
//! `L g` and `H g` at a point `y` only need `g` at `(y+2)/3`, `(y+1)/3` and
//! `y/3`; [`ThirdSamples`] holds those three values so `L` and `H` at the same
//! point share one set of queries. `A g` at `x` needs `L g` and `H g` at `x/2`
//! and `(x+1)/2`, i.e. six queries of `g` in total.

use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

use crate::interval::{Interval, IntervalError};

/// Deepest `A^n` iterate evaluated by direct expansion.
pub const MAX_DIRECT_ITERATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpError {
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("query point {0} is not inside [0, 1]")]
    OutOfDomain(Interval),
    #[error(
        "A^{requested} needs 6^{requested} handle queries per point; direct expansion is capped at n = {max}"
    )]
    IterationTooDeep { requested: usize, max: usize },
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// A probability generating function on `[0, 1]` evaluated over intervals.
///
/// Implementations must return an enclosure of `{g(t) : t in x}`.
pub trait Pgf: Send + Sync {
    fn eval(&self, x: Interval) -> Result<Interval, OpError>;

    fn label(&self) -> String;
}

impl<P: Pgf + ?Sized> Pgf for &P {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        (**self).eval(x)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

impl<P: Pgf + ?Sized> Pgf for Box<P> {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        (**self).eval(x)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

fn check_unit(x: Interval) -> Result<(), OpError> {
    if x.is_subset_of(&Interval::UNIT) {
        Ok(())
    } else {
        Err(OpError::OutOfDomain(x))
    }
}

/// The Poisson generating function `e^{a(x-1)}`; rate zero is the constant 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialPgf {
    rate: Interval,
}

impl ExponentialPgf {
    pub fn new(rate: f64) -> Result<Self, OpError> {
        Self::from_interval(Interval::point(rate)?)
    }

    /// Rate given as an enclosure, e.g. a rational that is not dyadic.
    pub fn from_interval(rate: Interval) -> Result<Self, OpError> {
        if rate.lo() < 0.0 {
            return Err(OpError::NegativeRate(rate.lo()));
        }
        Ok(ExponentialPgf { rate })
    }

    pub fn constant_one() -> Self {
        ExponentialPgf {
            rate: Interval::ZERO,
        }
    }

    pub fn rate(&self) -> Interval {
        self.rate
    }

    /// `a e^{a(x-1)}`.
    pub fn derivative(&self, x: Interval) -> Result<Interval, OpError> {
        Ok(self.rate * self.eval(x)?)
    }
}

impl Pgf for ExponentialPgf {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        check_unit(x)?;
        Ok((self.rate * (x - Interval::ONE)).exp().clamp_to(0.0, 1.0))
    }

    fn label(&self) -> String {
        if self.rate == Interval::ZERO {
            "1".to_string()
        } else if self.rate.is_point() {
            format!("exp({}(x-1))", self.rate.lo())
        } else {
            format!("exp({}(x-1))", self.rate)
        }
    }
}

/// Enclosure of `e^{a(x-1)}`.
pub fn exp_pgf_eval(rate: f64, x: Interval) -> Result<Interval, OpError> {
    ExponentialPgf::new(rate)?.eval(x)
}

/// Enclosure of `a e^{a(x-1)}`.
pub fn exp_pgf_deriv(rate: f64, x: Interval) -> Result<Interval, OpError> {
    ExponentialPgf::new(rate)?.derivative(x)
}

/// `g` at the three points `(y+2)/3`, `(y+1)/3`, `y/3`.
#[derive(Debug, Clone, Copy)]
pub struct ThirdSamples {
    pub y: Interval,
    pub upper: Interval,
    pub middle: Interval,
    pub lower: Interval,
}

impl ThirdSamples {
    pub fn query<G: Pgf + ?Sized>(g: &G, y: Interval) -> Result<Self, OpError> {
        check_unit(y)?;
        let two = Interval::point(2.0)?;
        let point = |t: Interval| t.div_int(3).clamp_to(0.0, 1.0);
        Ok(ThirdSamples {
            y,
            upper: g.eval(point(y + two))?,
            middle: g.eval(point(y + Interval::ONE))?,
            lower: g.eval(point(y))?,
        })
    }

    /// `L g (y)`.
    pub fn op_l(&self) -> Interval {
        let (y, a, b, c) = (self.y, self.upper, self.middle, self.lower);
        let one = Interval::ONE;
        let two = one + one;
        let three = two + one;
        let b2 = b.square();
        let first = (y + three).div_int(4) * a.cube();
        let second = (y + two).div_int(2) * (b2 - a * b2);
        let third = (y + one).div_int(4)
            * (c - two * b * c - a.square() * c + two * a * b * c);
        first + second + third
    }

    /// `H g (y)`.
    pub fn op_h(&self) -> Interval {
        let (y, a, b) = (self.y, self.upper, self.middle);
        let one = Interval::ONE;
        let two = one + one;
        let three = two + one;
        let b2 = b.square();
        self.op_l().div_int(3)
            + (y + three).div_int(6) * a.cube()
            + (y + two).div_int(6) * (b2 - a * b2)
    }
}

/// Enclosure of `(L g)(x)`, intersected with `[0, 1]` since `L g` is a PGF.
pub fn op_l<G: Pgf + ?Sized>(g: &G, x: Interval) -> Result<Interval, OpError> {
    Ok(ThirdSamples::query(g, x)?.op_l().clamp_to(0.0, 1.0))
}

/// Enclosure of `(H g)(x)`, intersected with `[0, 1]`.
pub fn op_h<G: Pgf + ?Sized>(g: &G, x: Interval) -> Result<Interval, OpError> {
    Ok(ThirdSamples::query(g, x)?.op_h().clamp_to(0.0, 1.0))
}

/// `L g` and `H g` at `x/2` and `(x+1)/2`, the inputs of `A g (x)`.
#[derive(Debug, Clone, Copy)]
pub struct HalfSamples {
    pub l_low: Interval,
    pub l_high: Interval,
    pub h_low: Interval,
    pub h_high: Interval,
}

impl HalfSamples {
    pub fn query<G: Pgf + ?Sized>(g: &G, x: Interval) -> Result<Self, OpError> {
        check_unit(x)?;
        let low = ThirdSamples::query(g, x.div_int(2))?;
        let high = ThirdSamples::query(g, (x + Interval::ONE).div_int(2).clamp_to(0.0, 1.0))?;
        Ok(HalfSamples {
            l_low: low.op_l(),
            l_high: high.op_l(),
            h_low: low.op_h(),
            h_high: high.op_h(),
        })
    }

    /// Combine into `A g (x)`.
    pub fn op_a(&self, x: Interval) -> Interval {
        let one = Interval::ONE;
        let HalfSamples {
            l_low,
            l_high,
            h_low,
            h_high,
        } = *self;
        let terms = x * l_low + (x + one) * l_high.square() - x * l_high * l_low
            + h_low
            + l_high * h_high
            - l_high * h_low;
        terms.div_int(3)
    }
}

/// Enclosure of `(A g)(x)`, intersected with `[0, 1]`.
pub fn op_a<G: Pgf + ?Sized>(g: &G, x: Interval) -> Result<Interval, OpError> {
    Ok(HalfSamples::query(g, x)?.op_a(x).clamp_to(0.0, 1.0))
}

/// `A` applied to an inner handle, itself usable as a handle.
pub struct AppliedA<P> {
    inner: P,
}

impl<P: Pgf> AppliedA<P> {
    pub fn new(inner: P) -> Self {
        AppliedA { inner }
    }
}

impl<P: Pgf> Pgf for AppliedA<P> {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        op_a(&self.inner, x)
    }

    fn label(&self) -> String {
        format!("A[{}]", self.inner.label())
    }
}

/// Caches handle queries keyed by the exact bits of the query interval.
pub struct Memoized<P> {
    inner: P,
    cache: Mutex<HashMap<(u64, u64), Interval>>,
}

impl<P: Pgf> Memoized<P> {
    pub fn new(inner: P) -> Self {
        Memoized {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_points(&self) -> usize {
        self.cache.lock().expect("memo lock poisoned").len()
    }
}

impl<P: Pgf> Pgf for Memoized<P> {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        let key = (x.lo().to_bits(), x.hi().to_bits());
        if let Some(v) = self.cache.lock().expect("memo lock poisoned").get(&key) {
            return Ok(*v);
        }
        let v = self.inner.eval(x)?;
        self.cache
            .lock()
            .expect("memo lock poisoned")
            .insert(key, v);
        Ok(v)
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// Enclosures of `A^n [e^{a(x-1)}]` at each grid point, by nested expansion.
pub fn iterate_a_on_exponential(
    rate: f64,
    n: usize,
    grid: &[Interval],
) -> Result<Vec<Interval>, OpError> {
    if n > MAX_DIRECT_ITERATES {
        return Err(OpError::IterationTooDeep {
            requested: n,
            max: MAX_DIRECT_ITERATES,
        });
    }
    let mut handle: Box<dyn Pgf> = Box::new(ExponentialPgf::new(rate)?);
    for _ in 0..n {
        handle = Box::new(Memoized::new(AppliedA::new(handle)));
    }
    grid.iter().map(|&x| handle.eval(x)).collect()
}

/// The uniform grid `{i / (size - 1)}` as exact-point intervals, ascending.
pub fn uniform_grid(size: usize) -> Vec<Interval> {
    assert!(size >= 2, "grid needs at least two points");
    let steps = (size - 1) as i64;
    (0..=steps)
        .map(|i| Interval::from_ratio(i, steps).expect("nonzero denominator"))
        .collect()
}
