//! Exact laws on `{0, 1, ..., K}`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::interval::Interval;
use crate::operators::{OpError, Pgf};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistributionError {
    #[error("empty probability table")]
    Empty,
    #[error("negative probability at {0}")]
    Negative(usize),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteDistribution {
    probs: Vec<BigRational>,
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl FiniteDistribution {
    pub fn new(probs: Vec<BigRational>) -> Result<Self, DistributionError> {
        if probs.is_empty() {
            return Err(DistributionError::Empty);
        }
        if let Some(i) = probs.iter().position(|p| p < &BigRational::zero()) {
            return Err(DistributionError::Negative(i));
        }
        let total: BigRational = probs.iter().sum();
        if !total.is_one() {
            return Err(DistributionError::NotNormalized(total.to_string()));
        }
        let mut probs = probs;
        while probs.len() > 1 && probs.last().is_some_and(Zero::is_zero) {
            probs.pop();
        }
        Ok(FiniteDistribution { probs })
    }

    pub fn delta(k: usize) -> Self {
        let mut probs = vec![BigRational::zero(); k + 1];
        probs[k] = BigRational::one();
        FiniteDistribution { probs }
    }

    /// Uniform on `{0, ..., k}`.
    pub fn uniform(k: usize) -> Self {
        let p = ratio(1, k as i64 + 1);
        FiniteDistribution {
            probs: vec![p; k + 1],
        }
    }

    /// Parse `delta<k>` or `uniform<k>`.
    pub fn by_name(name: &str) -> Option<Self> {
        if let Some(k) = name.strip_prefix("delta") {
            return k.parse().ok().map(Self::delta);
        }
        if let Some(k) = name.strip_prefix("uniform") {
            return k.parse().ok().filter(|&k: &usize| k > 0).map(Self::uniform);
        }
        None
    }

    /// Largest value with positive probability.
    pub fn support_bound(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probabilities(&self) -> &[BigRational] {
        &self.probs
    }

    pub fn prob(&self, k: usize) -> BigRational {
        self.probs.get(k).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn total(&self) -> BigRational {
        self.probs.iter().sum()
    }

    /// `sum p_k x^k` exactly.
    pub fn pgf_exact(&self, x: &BigRational) -> BigRational {
        self.probs
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, p| acc * x + p)
    }

    pub fn mean(&self) -> BigRational {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| p * BigRational::from_integer(k.into()))
            .sum()
    }
}

/// Enclosure of `sum p_k x^k`.
pub fn pgf_of(dist: &FiniteDistribution, x: Interval) -> Interval {
    dist.probs.iter().rev().fold(Interval::ZERO, |acc, p| {
        acc * x + Interval::from_big_rational(p)
    })
}

impl Pgf for FiniteDistribution {
    fn eval(&self, x: Interval) -> Result<Interval, OpError> {
        if !x.is_subset_of(&Interval::UNIT) {
            return Err(OpError::OutOfDomain(x));
        }
        Ok(pgf_of(self, x).clamp_to(0.0, 1.0))
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self.probs.iter().map(ToString::to_string).collect();
        format!("law[{}]", parts.join(", "))
    }
}

impl Serialize for FiniteDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.probs.iter().map(|p| format!("{}/{}", p.numer(), p.denom())))
    }
}
