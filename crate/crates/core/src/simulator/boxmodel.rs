//! Exact enumeration of the finite box models.
//!
//! A box model is a small piece of the tree where each subtree below a cut is
//! replaced by a box. The first frog to land in a box releases a random
//! number of frogs (law `U`), which then walk back up; later arrivals are
//! absorbed. All walks are non-backtracking. The law of the number of frogs
//! reaching the counted vertex has generating function `A eta`, `L eta` or
//! `H eta`, where `eta` is the generating function of `U`.
//!
//! - `A*`: root `R` (counted), its child `a` with children `b`, `b'`, three
//!   boxes under each. Sleeping frogs at `a`, `b`, `b'`. The root's frog
//!   steps to `a`. Edges `a -> b` and `a -> b'` follow the self-similar
//!   quota for odd-to-even edges.
//! - `L*`: counted vertex `a` above `b`, three boxes under `b`. Two frogs
//!   start at `b`: one free, one that just came down from `a`.
//! - `H*`: as `L*` with a second frog that just came down from `a`.
//!
//! Ticks follow the tree engine: frogs move one at a time in id order, and
//! frogs woken or released during a tick first move on the next one.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::distribution::FiniteDistribution;
use super::SimError;
use crate::interval::Interval;
use crate::operators::{op_a, op_h, op_l};

/// Largest operator interval width accepted by the oracle comparison.
pub const ORACLE_WIDTH_LIMIT: f64 = 1e-12;

/// Largest release support handled; beyond this the state space explodes.
pub const MAX_SUPPORT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxModel {
    #[serde(rename = "A")]
    AStar,
    #[serde(rename = "L")]
    LStar,
    #[serde(rename = "H")]
    HStar,
}

impl BoxModel {
    pub fn name(self) -> &'static str {
        match self {
            BoxModel::AStar => "A",
            BoxModel::LStar => "L",
            BoxModel::HStar => "H",
        }
    }
}

impl std::str::FromStr for BoxModel {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "A" | "a" | "A*" => Ok(BoxModel::AStar),
            "L" | "l" | "L*" => Ok(BoxModel::LStar),
            "H" | "h" | "H*" => Ok(BoxModel::HStar),
            _ => Err(SimError::Invalid(format!("model must be A, L or H, got {s:?}"))),
        }
    }
}

const NONE: u8 = u8::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Counted,
    Vertex,
    Box,
}

/// Odd-to-even edge with the two-traverser quota.
struct QuotaEdge {
    from: u8,
    to: u8,
    sibling: u8,
}

struct Graph {
    kinds: Vec<Kind>,
    adj: Vec<Vec<u8>>,
    quota: Vec<QuotaEdge>,
    /// Fixed id of each vertex's sleeping frog, or `NONE`.
    native: Vec<u8>,
    initial: Vec<Frog>,
    first_free_id: u8,
}

impl Graph {
    fn new(model: BoxModel) -> Graph {
        use Kind::*;
        match model {
            BoxModel::AStar => {
                // 0 R, 1 a, 2 b, 3 b', 4..=6 under b, 7..=9 under b'
                let mut adj = vec![vec![1], vec![0, 2, 3], vec![1, 4, 5, 6], vec![1, 7, 8, 9]];
                adj.extend([2, 2, 2, 3, 3, 3].iter().map(|&p| vec![p]));
                Graph {
                    kinds: [Counted, Vertex, Vertex, Vertex]
                        .into_iter()
                        .chain([Box; 6])
                        .collect(),
                    adj,
                    quota: vec![
                        QuotaEdge { from: 1, to: 2, sibling: 3 },
                        QuotaEdge { from: 1, to: 3, sibling: 2 },
                    ],
                    native: [0, 1, 2, 3].into_iter().chain([NONE; 6]).collect(),
                    initial: vec![Frog::at(0, 0, None)],
                    first_free_id: 4,
                }
            }
            BoxModel::LStar | BoxModel::HStar => {
                // 0 a, 1 b, 2..=4 boxes
                let mut initial = vec![Frog::at(0, 1, None), Frog::at(1, 1, Some(0))];
                if model == BoxModel::HStar {
                    initial.push(Frog::at(2, 1, Some(0)));
                }
                let first_free_id = initial.len() as u8;
                Graph {
                    kinds: vec![Counted, Vertex, Box, Box, Box],
                    adj: vec![vec![], vec![0, 2, 3, 4], vec![1], vec![1], vec![1]],
                    quota: vec![],
                    native: vec![NONE, 0, NONE, NONE, NONE],
                    initial,
                    first_free_id,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Frog {
    id: u8,
    pos: u8,
    prev: u8,
    /// Woken or released this tick; does not move until the next.
    fresh: bool,
    moved: bool,
}

impl Frog {
    fn at(id: u8, pos: u8, prev: Option<u8>) -> Frog {
        Frog {
            id,
            pos,
            prev: prev.unwrap_or(NONE),
            fresh: false,
            moved: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct State {
    frogs: Vec<Frog>,
    awake: u16,
    awake_at_tick_start: u16,
    boxes_hit: u16,
    traversals: [u8; 2],
    activator: [u8; 10],
    hits: u8,
    next_id: u8,
}

fn bit(v: u8) -> u16 {
    1 << v
}

type Frontier = HashMap<State, BigRational>;

fn add(map: &mut Frontier, s: State, p: BigRational) {
    *map.entry(s).or_insert_with(BigRational::zero) += p;
}

fn expand(g: &Graph, u: &FiniteDistribution, state: State, p: BigRational, next: &mut Frontier, done: &mut Vec<BigRational>) {
    let Some(idx) = state.frogs.iter().position(|f| !f.fresh && !f.moved) else {
        if state.frogs.is_empty() {
            let h = state.hits as usize;
            if done.len() <= h {
                done.resize(h + 1, BigRational::zero());
            }
            done[h] += p;
            return;
        }
        let mut s = state;
        for f in &mut s.frogs {
            f.fresh = false;
            f.moved = false;
        }
        s.awake_at_tick_start = s.awake;
        add(next, s, p);
        return;
    };
    let frog = state.frogs[idx].clone();
    let options: Vec<u8> = g.adj[frog.pos as usize]
        .iter()
        .copied()
        .filter(|&v| v != frog.prev)
        .collect();
    if options.is_empty() {
        let mut s = state;
        s.frogs.remove(idx);
        add(next, s, p);
        return;
    }
    let share = p / BigRational::from_integer(options.len().into());
    for target in options {
        let mut s = state.clone();
        let mut admitted = true;
        if let Some(e) = g.quota.iter().position(|q| q.from == frog.pos && q.to == target) {
            let q = &g.quota[e];
            let seen = s.traversals[e];
            let designated = frog.id == g.native[q.from as usize] || frog.id == s.activator[q.from as usize];
            let sibling_asleep = s.awake_at_tick_start & bit(q.sibling) == 0;
            admitted = seen == 0 || (seen == 1 && designated && sibling_asleep);
            s.traversals[e] = seen.saturating_add(1);
        }
        {
            let f = &mut s.frogs[idx];
            f.prev = f.pos;
            f.pos = target;
            f.moved = true;
        }
        match g.kinds[target as usize] {
            Kind::Counted => {
                s.hits += 1;
                s.frogs.remove(idx);
                add(next, s, share.clone());
            }
            Kind::Box => {
                s.frogs.remove(idx);
                if s.boxes_hit & bit(target) != 0 {
                    add(next, s, share.clone());
                    continue;
                }
                s.boxes_hit |= bit(target);
                for (k, pk) in u.probabilities().iter().enumerate() {
                    if pk.is_zero() {
                        continue;
                    }
                    let mut r = s.clone();
                    for _ in 0..k {
                        let mut f = Frog::at(r.next_id, target, None);
                        f.fresh = true;
                        r.frogs.push(f);
                        r.next_id += 1;
                    }
                    add(next, r, &share * pk);
                }
            }
            Kind::Vertex => {
                let native = g.native[target as usize];
                if native != NONE && s.awake & bit(target) == 0 {
                    s.awake |= bit(target);
                    s.activator[target as usize] = frog.id;
                    let mut f = Frog::at(native, target, None);
                    f.fresh = true;
                    let at = s.frogs.partition_point(|x| x.id < native);
                    s.frogs.insert(at, f);
                }
                if !admitted {
                    s.frogs.retain(|x| x.id != frog.id);
                }
                add(next, s, share.clone());
            }
        }
    }
}

/// Rough count of distinct branch sequences, for the size error message.
fn size_estimate(model: BoxModel, support: usize) -> String {
    let boxes = if model == BoxModel::AStar { 6 } else { 3 };
    let frogs = boxes * support + 4;
    format!("up to {frogs} frogs, on the order of 3^{frogs} branch sequences")
}

/// Exact law of the counted hits in `model` with box releases distributed as
/// `u`.
pub fn enumerate_box_model(model: BoxModel, u: &FiniteDistribution) -> Result<FiniteDistribution, SimError> {
    let k = u.support_bound();
    if k > MAX_SUPPORT {
        return Err(SimError::TooLarge(format!(
            "release support {k} exceeds {MAX_SUPPORT}: {}",
            size_estimate(model, k)
        )));
    }
    let g = Graph::new(model);
    let mut awake = 0u16;
    for f in &g.initial {
        if g.native[f.pos as usize] != NONE {
            awake |= bit(f.pos);
        }
    }
    let start = State {
        frogs: g.initial.clone(),
        awake,
        awake_at_tick_start: awake,
        boxes_hit: 0,
        traversals: [0; 2],
        activator: [NONE; 10],
        hits: 0,
        next_id: g.first_free_id,
    };
    let mut frontier = Frontier::from([(start, BigRational::one())]);
    let mut done: Vec<BigRational> = Vec::new();
    while !frontier.is_empty() {
        let mut next = Frontier::new();
        for (s, p) in frontier {
            expand(&g, u, s, p, &mut next, &mut done);
        }
        frontier = next;
    }
    FiniteDistribution::new(done).map_err(|e| SimError::Invalid(format!("enumeration lost mass: {e}")))
}

fn ratio_string(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePoint {
    pub x: String,
    /// PGF of the enumerated law at `x`, exact.
    pub exact: String,
    /// The matching operator applied to the PGF of the release law.
    pub operator: Interval,
    pub contained: bool,
    pub width_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub model: BoxModel,
    pub law: FiniteDistribution,
    pub points: Vec<OraclePoint>,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub max_width: f64,
}

impl OracleComparison {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.contained && p.width_ok)
    }
}

/// Enumerate `model` under releases `u` and check its exact PGF against the
/// operator at `x = i / steps` for `i = 0..=steps`.
pub fn oracle_compare(model: BoxModel, u: &FiniteDistribution, steps: i64) -> Result<OracleComparison, SimError> {
    if steps < 1 {
        return Err(SimError::Invalid("oracle grid needs at least one step".into()));
    }
    let law = enumerate_box_model(model, u)?;
    let mut points = Vec::new();
    let mut max_width: f64 = 0.0;
    for i in 0..=steps {
        let xr = BigRational::new(BigInt::from(i), BigInt::from(steps));
        let x = Interval::from_ratio(i, steps).map_err(|e| SimError::Invalid(e.to_string()))?;
        let op = match model {
            BoxModel::AStar => op_a(u, x),
            BoxModel::LStar => op_l(u, x),
            BoxModel::HStar => op_h(u, x),
        }
        .map_err(|e| SimError::Invalid(e.to_string()))?;
        let exact = law.pgf_exact(&xr);
        max_width = max_width.max(op.width());
        points.push(OraclePoint {
            x: ratio_string(&xr),
            exact: ratio_string(&exact),
            operator: op,
            contained: op.contains_rational(&exact),
            width_ok: op.width() < ORACLE_WIDTH_LIMIT,
        });
    }
    Ok(OracleComparison {
        model,
        law,
        points,
        max_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn l_star_without_releases() {
        let d = enumerate_box_model(BoxModel::LStar, &FiniteDistribution::delta(0)).unwrap();
        assert_eq!(d.probabilities(), &[r(3, 4), r(1, 4)]);
    }

    #[test]
    fn a_star_without_releases() {
        let d = enumerate_box_model(BoxModel::AStar, &FiniteDistribution::delta(0)).unwrap();
        assert_eq!(d.prob(0), r(13, 24));
        assert_eq!(d.total(), r(1, 1));
    }

    #[test]
    fn large_support_rejected() {
        let err = enumerate_box_model(BoxModel::AStar, &FiniteDistribution::delta(4)).unwrap_err();
        assert!(matches!(err, SimError::TooLarge(ref m) if m.contains("branch sequences")));
    }
}
