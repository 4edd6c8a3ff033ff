//! Step search for a chain of exponential dominators.
//!
//! Starting from `u = 0`, each pass looks for the largest `delta` in the menu
//! such that the tangent line of `f1 = e^{(u+delta)(x-1)}` at every grid point
//! `c_j` stays strictly above `f2 = A[e^{u(x-1)}]` at the next grid point
//! `c_{j+1}`. For convex `f1`, `f2` with `f2 <= f1` at `x = 1` this gives
//! `A[e^{u(x-1)}] <= e^{(u+delta)(x-1)}` on all of `[0, 1]`.

use num_rational::Rational64;
use num_traits::CheckedAdd;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::Interval;
use crate::operators::{op_a, ExponentialPgf, OpError, Pgf};

pub const DEFAULT_GRID_SIZE: usize = 257;
pub const DEFAULT_MAX_PASSES: usize = 340;
/// Handoff threshold for the analytic tail bound.
pub const TARGET_RATE: i64 = 15;

pub fn default_step_menu() -> Vec<Rational64> {
    vec![
        Rational64::new(1, 16),
        Rational64::new(1, 32),
        Rational64::new(3, 256),
    ]
}

pub const CLAIM: &str = "each step certifies A[exp(u_before (x-1))] <= exp(u_after (x-1)) on [0,1] \
    by the tangent-line criterion on the grid";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("grid needs at least 2 points, got {0}")]
    GridTooSmall(usize),
    #[error("step menu must be positive and strictly decreasing")]
    BadMenu,
    #[error("rate {0} is negative")]
    NegativeRate(Rational64),
    #[error("rate {0} does not fit the evaluation range")]
    RateOverflow(Rational64),
    #[error(transparent)]
    Op(#[from] OpError),
}

/// `c_i = (n-1-i)/(n-1)` for `i = 0..n`, descending from 1 to 0.
pub fn certificate_grid(size: usize) -> Result<Vec<Rational64>, CertificateError> {
    if size < 2 {
        return Err(CertificateError::GridTooSmall(size));
    }
    let m = (size - 1) as i64;
    Ok((0..=m).map(|i| Rational64::new(m - i, m)).collect())
}

pub fn rational_interval(r: Rational64) -> Interval {
    Interval::from_ratio(*r.numer(), *r.denom()).expect("reduced rationals have nonzero denominators")
}

fn rate_interval(r: Rational64) -> Result<Interval, CertificateError> {
    if r < Rational64::from_integer(0) {
        return Err(CertificateError::NegativeRate(r));
    }
    Ok(rational_interval(r))
}

mod ratio_str {
    use num_rational::Rational64;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn format(r: &Rational64) -> String {
        format!("{}/{}", r.numer(), r.denom())
    }

    pub fn parse(s: &str) -> Result<Rational64, String> {
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        let n: i64 = n.trim().parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
        let d: i64 = d.trim().parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(Rational64::new(n, d))
    }

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(D::Error::custom)
    }

    pub mod vec {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(v: &[Rational64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for r in v {
                seq.serialize_element(&format(r))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational64>, D::Error> {
            let v = Vec::<String>::deserialize(d)?;
            v.iter().map(|s| parse(s).map_err(D::Error::custom)).collect()
        }
    }
}

pub use ratio_str::{format as format_ratio, parse as parse_ratio};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateStep {
    pub n: usize,
    #[serde(with = "ratio_str")]
    pub u_before: Rational64,
    #[serde(with = "ratio_str")]
    pub delta: Rational64,
    #[serde(with = "ratio_str")]
    pub u_after: Rational64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub grid_size: usize,
    #[serde(with = "ratio_str::vec")]
    pub step_menu: Vec<Rational64>,
    pub steps: Vec<CertificateStep>,
    pub passes: usize,
    #[serde(with = "ratio_str")]
    pub final_rate: Rational64,
    #[serde(default)]
    pub claim: String,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Outcome of one grid check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentCheck {
    /// Pairs where the tangent value is strictly right of `f2`.
    pub certified: usize,
    /// Pairs where the intervals overlap or touch.
    pub indeterminate: usize,
    /// Pairs where `f2` is strictly right of the tangent value.
    pub violated: usize,
    /// Index `j` of the first pair that was not certified.
    pub first_failure: Option<usize>,
    /// Smallest `A.lo - B.hi` over the grid.
    #[serde(serialize_with = "crate::finite::serialize")]
    pub min_margin: f64,
}

impl TangentCheck {
    pub fn passed(&self) -> bool {
        self.indeterminate == 0 && self.violated == 0
    }

    /// The check failed only because of overlapping intervals.
    pub fn decided_by_strictness(&self) -> bool {
        self.violated == 0 && self.indeterminate > 0
    }
}

/// `f2 = A[e^{u(x-1)}]` at `c_1, ..., c_{n-1}`.
fn f2_table(u: Rational64, grid: &[Rational64]) -> Result<Vec<Interval>, CertificateError> {
    let g = ExponentialPgf::from_interval(rate_interval(u)?)?;
    grid[1..]
        .par_iter()
        .map(|&c| Ok(op_a(&g, rational_interval(c))?))
        .collect()
}

fn check_against(
    u: Rational64,
    delta: Rational64,
    grid: &[Rational64],
    f2: &[Interval],
) -> Result<TangentCheck, CertificateError> {
    let rate = u
        .checked_add(&delta)
        .ok_or(CertificateError::RateOverflow(u))?;
    let f1 = ExponentialPgf::from_interval(rate_interval(rate)?)?;
    let pairs: Vec<(Interval, Interval)> = (0..grid.len() - 1)
        .into_par_iter()
        .map(|j| {
            let c = rational_interval(grid[j]);
            let gap = rational_interval(grid[j] - grid[j + 1]);
            let tangent = f1.eval(c)? - gap * f1.derivative(c)?;
            Ok((tangent, f2[j]))
        })
        .collect::<Result<_, CertificateError>>()?;
    let mut out = TangentCheck {
        certified: 0,
        indeterminate: 0,
        violated: 0,
        first_failure: None,
        min_margin: f64::INFINITY,
    };
    for (j, (a, b)) in pairs.iter().enumerate() {
        out.min_margin = out.min_margin.min(a.lo() - b.hi());
        if a.strictly_right_of(b) {
            out.certified += 1;
            continue;
        }
        if b.strictly_right_of(a) {
            out.violated += 1;
        } else {
            out.indeterminate += 1;
        }
        out.first_failure.get_or_insert(j);
    }
    Ok(out)
}

/// Grid tangent-line check for one step `u -> u + delta`.
pub fn tangent_check(
    u: Rational64,
    delta: Rational64,
    grid: &[Rational64],
) -> Result<TangentCheck, CertificateError> {
    if grid.len() < 2 {
        return Err(CertificateError::GridTooSmall(grid.len()));
    }
    let f2 = f2_table(u, grid)?;
    check_against(u, delta, grid, &f2)
}

/// True iff every consecutive grid pair is certified.
pub fn tangent_condition(
    u: Rational64,
    delta: Rational64,
    grid: &[Rational64],
) -> Result<bool, CertificateError> {
    Ok(tangent_check(u, delta, grid)?.passed())
}

/// A menu value that was tried and rejected during one pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    #[serde(serialize_with = "ratio_str::serialize")]
    pub delta: Rational64,
    pub check: TangentCheck,
}

/// Diagnostics for one pass, kept apart from the certificate document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassEvidence {
    pub n: usize,
    pub accepted: Option<TangentCheck>,
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRun {
    pub certificate: Certificate,
    pub evidence: Vec<PassEvidence>,
}

impl CertificateRun {
    /// Passes where some menu value was rejected only by overlapping intervals.
    pub fn strictness_decided(&self) -> Vec<usize> {
        self.evidence
            .iter()
            .filter(|p| p.rejected.iter().any(|r| r.check.decided_by_strictness()))
            .map(|p| p.n)
            .collect()
    }
}

fn validate_menu(menu: &[Rational64]) -> Result<(), CertificateError> {
    let zero = Rational64::from_integer(0);
    if menu.iter().any(|&d| d <= zero) || menu.windows(2).any(|w| w[0] <= w[1]) {
        return Err(CertificateError::BadMenu);
    }
    Ok(())
}

/// Run the step search. `progress` is called with the pass number and rate
/// after each committed step.
pub fn run_certificate_with(
    step_menu: &[Rational64],
    max_passes: usize,
    grid_size: usize,
    mut progress: impl FnMut(usize, Rational64),
) -> Result<CertificateRun, CertificateError> {
    validate_menu(step_menu)?;
    let grid = certificate_grid(grid_size)?;
    let mut u = Rational64::from_integer(0);
    let mut steps = Vec::new();
    let mut evidence = Vec::new();
    if !step_menu.is_empty() {
        while steps.len() < max_passes {
            let n = steps.len() + 1;
            let f2 = f2_table(u, &grid)?;
            let mut pass = PassEvidence {
                n,
                accepted: None,
                rejected: Vec::new(),
            };
            for &delta in step_menu {
                let check = check_against(u, delta, &grid, &f2)?;
                if check.passed() {
                    pass.accepted = Some(check);
                    steps.push(CertificateStep {
                        n,
                        u_before: u,
                        delta,
                        u_after: u + delta,
                    });
                    u += delta;
                    break;
                }
                pass.rejected.push(Rejection { delta, check });
            }
            let committed = pass.accepted.is_some();
            evidence.push(pass);
            if !committed {
                break;
            }
            progress(n, u);
        }
    }
    Ok(CertificateRun {
        certificate: Certificate {
            grid_size,
            step_menu: step_menu.to_vec(),
            passes: steps.len(),
            steps,
            final_rate: u,
            claim: CLAIM.to_string(),
        },
        evidence,
    })
}

pub fn run_certificate(
    step_menu: &[Rational64],
    max_passes: usize,
    grid_size: usize,
) -> Result<CertificateRun, CertificateError> {
    run_certificate_with(step_menu, max_passes, grid_size, |_, _| {})
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyFailure {
    /// Index into `steps`, or `None` for certificate-level problems.
    pub step: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub steps_checked: usize,
    pub final_rate_reaches_target: bool,
    pub failure: Option<VerifyFailure>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

fn fail(step: Option<usize>, reason: impl Into<String>) -> Option<VerifyFailure> {
    Some(VerifyFailure {
        step,
        reason: reason.into(),
    })
}

/// Re-check every recorded step and the bookkeeping around them.
pub fn verify_certificate(cert: &Certificate) -> VerifyReport {
    let target = Rational64::from_integer(TARGET_RATE);
    let mut report = VerifyReport {
        steps_checked: 0,
        final_rate_reaches_target: cert.final_rate >= target,
        failure: None,
    };
    let grid = match certificate_grid(cert.grid_size) {
        Ok(g) => g,
        Err(e) => {
            report.failure = fail(None, e.to_string());
            return report;
        }
    };
    let mut u = Rational64::from_integer(0);
    for (i, step) in cert.steps.iter().enumerate() {
        let problem = if step.n != i + 1 {
            Some(format!("step numbered {} at position {}", step.n, i + 1))
        } else if step.u_before != u {
            Some(format!(
                "u_before {} does not continue the chain at {}",
                format_ratio(&step.u_before),
                format_ratio(&u)
            ))
        } else if step.u_before + step.delta != step.u_after {
            Some("u_after differs from u_before + delta".to_string())
        } else if !cert.step_menu.contains(&step.delta) {
            Some(format!("delta {} is not in the menu", format_ratio(&step.delta)))
        } else {
            match tangent_check(step.u_before, step.delta, &grid) {
                Ok(c) if c.passed() => None,
                Ok(c) => Some(format!(
                    "tangent condition fails at grid pair {} ({} violated, {} indeterminate)",
                    c.first_failure.unwrap_or(0),
                    c.violated,
                    c.indeterminate
                )),
                Err(e) => Some(e.to_string()),
            }
        };
        if let Some(reason) = problem {
            report.failure = fail(Some(i), reason);
            return report;
        }
        report.steps_checked += 1;
        u = step.u_after;
    }
    report.failure = if cert.passes != cert.steps.len() {
        fail(None, format!("passes {} but {} steps", cert.passes, cert.steps.len()))
    } else if cert.final_rate != u {
        fail(None, "final_rate differs from the sum of deltas")
    } else if !report.final_rate_reaches_target {
        fail(
            None,
            format!("final_rate {} is below {TARGET_RATE}", format_ratio(&cert.final_rate)),
        )
    } else {
        None
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn grid_shape() {
        let g = certificate_grid(257).unwrap();
        assert_eq!(g[0], r(1, 1));
        assert_eq!(g[1], r(255, 256));
        assert_eq!(g[256], r(0, 1));
        assert!(certificate_grid(1).is_err());
    }

    #[test]
    fn giant_step_fails() {
        let grid = certificate_grid(257).unwrap();
        let c = tangent_check(r(0, 1), r(16, 1), &grid).unwrap();
        assert!(!c.passed());
        assert_eq!(c.first_failure, Some(0));
        assert!(c.violated > 0);
    }

    #[test]
    fn first_step_takes_largest_menu_value() {
        let grid = certificate_grid(257).unwrap();
        assert!(tangent_condition(r(0, 1), r(1, 16), &grid).unwrap());
        let run = run_certificate(&default_step_menu(), 1, 257).unwrap();
        assert_eq!(run.certificate.steps[0].delta, r(1, 16));
    }

    #[test]
    fn zero_passes() {
        let run = run_certificate(&default_step_menu(), 0, 257).unwrap();
        assert_eq!(run.certificate.passes, 0);
        assert_eq!(run.certificate.final_rate, r(0, 1));
        assert!(!verify_certificate(&run.certificate).ok());
    }

    #[test]
    fn empty_menu_and_giant_menu() {
        let run = run_certificate(&[], 340, 257).unwrap();
        assert_eq!(run.certificate.passes, 0);
        let run = run_certificate(&[r(16, 1)], 340, 257).unwrap();
        assert_eq!(run.certificate.passes, 0);
        assert_eq!(run.evidence.len(), 1);
    }

    #[test]
    fn menu_must_decrease() {
        assert_eq!(
            run_certificate(&[r(1, 32), r(1, 16)], 3, 257).unwrap_err(),
            CertificateError::BadMenu
        );
        assert_eq!(
            run_certificate(&[r(0, 1)], 3, 257).unwrap_err(),
            CertificateError::BadMenu
        );
    }

    #[test]
    fn json_round_trip() {
        let run = run_certificate(&default_step_menu(), 3, 257).unwrap();
        let text = run.certificate.to_json();
        assert!(text.contains("\"delta\": \"1/16\""));
        assert!(text.contains("\"u_before\": \"0/1\""));
        let back = Certificate::from_json(&text).unwrap();
        assert_eq!(back, run.certificate);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("973/64").unwrap(), r(973, 64));
        assert_eq!(parse_ratio("15").unwrap(), r(15, 1));
        assert!(parse_ratio("1/0").is_err());
        assert!(parse_ratio("x").is_err());
    }

    #[test]
    fn short_chain_verifies_except_for_target() {
        let run = run_certificate(&default_step_menu(), 5, 257).unwrap();
        let rep = verify_certificate(&run.certificate);
        assert_eq!(rep.steps_checked, 5);
        assert!(!rep.final_rate_reaches_target);
        assert_eq!(rep.failure.unwrap().step, None);
    }
}
