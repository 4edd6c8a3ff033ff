//! Single-walk machinery: simple random walk paths, the stopped walk `Y`
//! (with its 5/8 termination rule), loop erasure into `Phi`, and the Monte
//! Carlo estimates built on them.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use super::engine::sample_step;
use super::rng::{stream, Purpose};
use super::tree::{branching, NodeAddress};
use super::{ModelConfig, SimError};

/// Termination probability when `Y` crosses the root into a foreign subtree.
pub const TERMINATION: (u32, u32) = (5, 8);

/// Transition tallies are only kept this far from the root, well inside any
/// depth cap used for estimation.
pub const TALLY_MAX_DEPTH: u16 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    /// The next step would have left the depth cap.
    Died,
    /// The step cap was reached first.
    StepCap,
    /// The 5/8 rule fired; the walk stays at its last vertex forever.
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPath {
    pub vertices: Vec<NodeAddress>,
    pub end: PathEnd,
}

/// Simple random walk from `start` until it leaves the depth cap or takes
/// `step_cap` steps.
pub fn srw_path<R: Rng>(start: NodeAddress, depth_cap: u16, step_cap: u64, rng: &mut R) -> WalkPath {
    let mut vertices = vec![start];
    let mut pos = start;
    for _ in 0..step_cap {
        let next = sample_step(rng, pos, None, true);
        if next.depth() > depth_cap {
            return WalkPath {
                vertices,
                end: PathEnd::Died,
            };
        }
        vertices.push(next);
        pos = next;
    }
    WalkPath {
        vertices,
        end: PathEnd::StepCap,
    }
}

/// Cut a simple random walk into `Y`: whenever it steps from the root into a
/// root child outside the start's subtree, stop there with probability 5/8.
/// Walks started at the root are never cut.
pub fn derive_upsilon<R: Rng>(srw: &WalkPath, coins: &mut R) -> WalkPath {
    let start = srw.vertices[0];
    let Some(home) = start.ancestor_at(1) else {
        return srw.clone();
    };
    for i in 0..srw.vertices.len().saturating_sub(1) {
        let (here, next) = (srw.vertices[i], srw.vertices[i + 1]);
        if here.is_root() && next != home && coins.random_ratio(TERMINATION.0, TERMINATION.1) {
            return WalkPath {
                vertices: srw.vertices[..=i + 1].to_vec(),
                end: PathEnd::Terminated,
            };
        }
    }
    srw.clone()
}

/// Loop erasure of a finite window of `Y`, with the erasure indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Erasure {
    pub vertices: Vec<NodeAddress>,
    /// `t_k`: index into the walk of the k-th erased vertex.
    pub t: Vec<usize>,
    /// `s_k`: last visit to the k-th erased vertex; `None` when the walk
    /// stays there forever.
    pub s: Vec<Option<usize>>,
}

/// `Phi` from `Y`: `t_0 = 0`, `s_k` is the last visit to `Y(t_k)`, and
/// `t_{k+1} = s_k + 1`. When the start is not the root, `Phi` stops at the
/// root. The window ends where `walk` ends; a terminated walk makes its final
/// vertex's last visit infinite.
pub fn loop_erase(walk: &WalkPath) -> Erasure {
    let path = &walk.vertices;
    let mut last: FxHashMap<NodeAddress, usize> = FxHashMap::default();
    for (i, v) in path.iter().enumerate() {
        last.insert(*v, i);
    }
    let stop_at_root = !path[0].is_root();
    let mut out = Erasure {
        vertices: Vec::new(),
        t: Vec::new(),
        s: Vec::new(),
    };
    let mut t = 0;
    loop {
        let v = path[t];
        out.vertices.push(v);
        out.t.push(t);
        let s = last[&v];
        let forever = walk.end == PathEnd::Terminated && s == path.len() - 1;
        out.s.push((!forever).then_some(s));
        if (stop_at_root && v.is_root()) || s + 1 >= path.len() {
            break;
        }
        t = s + 1;
    }
    out
}

/// On a tree the erasure is the geodesic from the start to the walk's final
/// vertex, cut at the root for non-root starts.
pub fn geodesic_erasure(walk: &WalkPath) -> Vec<NodeAddress> {
    let start = walk.vertices[0];
    let end = *walk.vertices.last().expect("nonempty walk");
    let mut g = start.geodesic(&end);
    if !start.is_root() {
        if let Some(r) = g.iter().position(NodeAddress::is_root) {
            g.truncate(r + 1);
        }
    }
    g
}

/// `erasure` is a subsequence of `walk` at the recorded indices.
pub fn is_indexed_subsequence(erasure: &Erasure, walk: &[NodeAddress]) -> bool {
    erasure.t.windows(2).all(|w| w[0] < w[1])
        && erasure
            .t
            .iter()
            .zip(&erasure.vertices)
            .all(|(&i, v)| walk.get(i) == Some(v))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub trials: u64,
    pub successes: u64,
}

impl Tally {
    pub fn record(&mut self, success: bool) {
        self.trials += 1;
        self.successes += u64::from(success);
    }

    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            trials: self.trials + other.trials,
            successes: self.successes + other.successes,
        }
    }

    pub fn estimate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    /// Binomial standard error from the empirical frequency.
    pub fn stderr(&self) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let p = self.estimate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `|estimate - target| <= k * stderr`, with the stderr floored so an
    /// all-or-nothing tally cannot pass vacuously.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let floor = 1.0 / (self.trials.max(1) as f64);
        (self.estimate() - target).abs() <= k * self.stderr().max(floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitEstimate {
    pub start_depth: u16,
    pub tally: Tally,
    /// Walks stopped by the step cap before dying or hitting.
    pub capped: u64,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub estimate: f64,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub stderr: f64,
}

/// Fraction of simple random walks from depth `start_depth` that reach depth
/// `start_depth - 1` (the parent) before leaving the depth cap. Only the
/// depth matters, so the walk is run on levels.
pub fn estimate_hit_prob(start_depth: u16, config: &ModelConfig) -> Result<HitEstimate, SimError> {
    if start_depth == 0 || start_depth > config.depth_cap {
        return Err(SimError::Invalid(format!(
            "start_depth {start_depth} must be in 1..={}",
            config.depth_cap
        )));
    }
    let key = NodeAddress::from_parts(start_depth, 0).expect("depth within range");
    let (tally, capped) = (0..config.episodes)
        .into_par_iter()
        .map(|ep| {
            let mut rng = stream(config.master_seed, ep, key, Purpose::Level);
            let mut d = start_depth;
            for _ in 0..config.step_cap {
                let up = rng.random_range(0..branching(d) as u32 + 1) == 0;
                if up {
                    d -= 1;
                    if d + 1 == start_depth {
                        return (Tally { trials: 1, successes: 1 }, 0);
                    }
                } else {
                    d += 1;
                    if d > config.depth_cap {
                        return (Tally { trials: 1, successes: 0 }, 0);
                    }
                }
            }
            (Tally { trials: 1, successes: 0 }, 1)
        })
        .reduce(|| (Tally::default(), 0), |a, b| (a.0.merge(b.0), a.1 + b.1));
    Ok(HitEstimate {
        start_depth,
        tally,
        capped,
        estimate: tally.estimate(),
        stderr: tally.stderr(),
    })
}

/// Transition counts of `Phi`, split by the parity of the current depth
/// (index 0 = odd, 1 = even).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhiTransitions {
    pub walks: u64,
    /// First step toward the root, by start depth.
    pub first_step_by_depth: BTreeMap<u16, Tally>,
    /// First step toward the root, by start parity.
    pub first_step: [Tally; 2],
    /// After a move toward the root into a non-root vertex, the next move is
    /// again toward the root.
    pub repeat_up: [Tally; 2],
    /// After a move away from the root, which child is taken next.
    pub child_after_down: [[u64; 3]; 2],
    /// Walks whose window hit the step cap.
    pub capped: u64,
}

fn parity_slot(depth: u16) -> usize {
    usize::from(depth.is_multiple_of(2))
}

impl PhiTransitions {
    fn merge(mut self, other: PhiTransitions) -> PhiTransitions {
        self.walks += other.walks;
        self.capped += other.capped;
        for (d, t) in other.first_step_by_depth {
            let e = self.first_step_by_depth.entry(d).or_default();
            *e = e.merge(t);
        }
        for p in 0..2 {
            self.first_step[p] = self.first_step[p].merge(other.first_step[p]);
            self.repeat_up[p] = self.repeat_up[p].merge(other.repeat_up[p]);
            for k in 0..3 {
                self.child_after_down[p][k] += other.child_after_down[p][k];
            }
        }
        self
    }

    fn record(&mut self, phi: &[NodeAddress]) {
        self.walks += 1;
        let start = phi[0];
        if let Some(next) = phi.get(1) {
            let up = start.parent() == Some(*next);
            self.first_step_by_depth.entry(start.depth()).or_default().record(up);
            self.first_step[parity_slot(start.depth())].record(up);
        }
        for w in phi.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            if b.depth() > TALLY_MAX_DEPTH || b.is_root() {
                continue;
            }
            let slot = parity_slot(b.depth());
            if a.parent() == Some(b) {
                self.repeat_up[slot].record(b.parent() == Some(c));
            } else {
                let rank = c.child_rank().expect("non-backtracking step below b");
                self.child_after_down[slot][rank as usize] += 1;
            }
        }
    }

    /// Child frequencies after a down move as tallies, for uniformity checks.
    pub fn child_tallies(&self, slot: usize) -> Vec<Tally> {
        let n = if slot == 0 { 2 } else { 3 };
        let total: u64 = self.child_after_down[slot].iter().sum();
        (0..n)
            .map(|k| Tally {
                trials: total,
                successes: self.child_after_down[slot][k],
            })
            .collect()
    }
}

/// Start depth used by episode `ep` of the transition estimate.
pub fn phi_start_depth(ep: u64) -> u16 {
    1 + (ep % 4) as u16
}

/// Build `Phi` from `Y` for many walks and tally its transitions. Walks
/// cycle through start depths 1 to 4.
pub fn estimate_phi_transitions(config: &ModelConfig) -> Result<PhiTransitions, SimError> {
    if config.depth_cap <= TALLY_MAX_DEPTH {
        return Err(SimError::Invalid(format!(
            "depth_cap must exceed {TALLY_MAX_DEPTH} for transition estimates"
        )));
    }
    Ok((0..config.episodes)
        .into_par_iter()
        .map(|ep| {
            let start = NodeAddress::from_parts(phi_start_depth(ep), 0).expect("shallow vertex");
            let mut walk_rng = stream(config.master_seed, ep, start, Purpose::Walk);
            let mut coin_rng = stream(config.master_seed, ep, start, Purpose::Coin);
            let srw = srw_path(start, config.depth_cap, config.step_cap, &mut walk_rng);
            let upsilon = derive_upsilon(&srw, &mut coin_rng);
            let mut t = PhiTransitions::default();
            if upsilon.end == PathEnd::StepCap {
                t.capped = 1;
            }
            t.record(&geodesic_erasure(&upsilon));
            t
        })
        .reduce(PhiTransitions::default, PhiTransitions::merge))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(d: &[u8]) -> NodeAddress {
        NodeAddress::from_digits(d).unwrap()
    }

    #[test]
    fn erasure_removes_loops() {
        let walk = WalkPath {
            vertices: vec![addr(&[0]), addr(&[0, 1]), addr(&[0]), addr(&[0, 0]), addr(&[0, 0, 2])],
            end: PathEnd::Died,
        };
        let e = loop_erase(&walk);
        assert_eq!(e.vertices, vec![addr(&[0]), addr(&[0, 0]), addr(&[0, 0, 2])]);
        assert_eq!(e.t, vec![0, 3, 4]);
        assert!(is_indexed_subsequence(&e, &walk.vertices));
        assert_eq!(geodesic_erasure(&walk), e.vertices);
    }

    #[test]
    fn erasure_stops_at_root() {
        let walk = WalkPath {
            vertices: vec![addr(&[0]), NodeAddress::ROOT, addr(&[1]), NodeAddress::ROOT, addr(&[2])],
            end: PathEnd::Died,
        };
        let e = loop_erase(&walk);
        assert_eq!(e.vertices, vec![addr(&[0]), NodeAddress::ROOT]);
    }

    #[test]
    fn terminated_walk_has_infinite_last_visit() {
        let walk = WalkPath {
            vertices: vec![addr(&[0]), NodeAddress::ROOT, addr(&[1])],
            end: PathEnd::Terminated,
        };
        let e = loop_erase(&walk);
        assert_eq!(e.vertices, vec![addr(&[0]), NodeAddress::ROOT]);
        assert_eq!(e.s, vec![Some(0), Some(1)]);
        let stay = WalkPath {
            vertices: vec![addr(&[0, 1]), addr(&[0])],
            end: PathEnd::Terminated,
        };
        assert_eq!(loop_erase(&stay).s, vec![Some(0), None]);
    }

    #[test]
    fn root_start_is_never_cut() {
        let mut rng = stream(5, 0, NodeAddress::ROOT, Purpose::Walk);
        let mut coins = stream(5, 0, NodeAddress::ROOT, Purpose::Coin);
        for _ in 0..50 {
            let srw = srw_path(NodeAddress::ROOT, 6, 1000, &mut rng);
            let y = derive_upsilon(&srw, &mut coins);
            assert_eq!(y, srw);
            let e = loop_erase(&y);
            assert_eq!(e.vertices, geodesic_erasure(&y));
            assert_eq!(e.vertices.iter().filter(|v| v.is_root()).count(), 1);
        }
    }

    #[test]
    fn level_walk_with_shallow_cap_is_biased_low() {
        let cfg = ModelConfig {
            depth_cap: 2,
            episodes: 20_000,
            ..ModelConfig::default()
        };
        let est = estimate_hit_prob(1, &cfg).unwrap();
        assert!(est.estimate < 4.0 / 9.0);
    }

    #[test]
    fn tally_within() {
        let t = Tally {
            trials: 100,
            successes: 50,
        };
        assert!(t.within(0.5, 4.0));
        assert!(!t.within(0.9, 4.0));
    }
}
