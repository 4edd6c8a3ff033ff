//! Synchronous-tick frog model engine on the implicit tree.
//!
//! Each tick every active frog moves once, in frog-id order. Landing on a
//! sleeping vertex wakes its frog, which starts moving on the next tick.
//! Moving past the depth cap kills the frog and marks the run truncated.

use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::{FxHashMap, FxHashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::rng::{stream, Purpose};
use super::tree::NodeAddress;
use super::{EpisodeOutcome, ModelConfig, Variant};

/// Where a frog's moves come from.
pub enum Route<'a> {
    /// Uniform over allowed neighbors, drawn from the frog's own stream.
    Sampled(ChaCha8Rng),
    /// A fixed vertex sequence, not including the start vertex.
    Scripted(&'a [NodeAddress]),
}

struct Frog<'a> {
    id: NodeAddress,
    pos: NodeAddress,
    prev: Option<NodeAddress>,
    route: Route<'a>,
    cursor: usize,
}

impl Frog<'_> {
    fn next_vertex(&mut self, backtrack: bool) -> Option<NodeAddress> {
        match &mut self.route {
            Route::Scripted(path) => {
                let v = path.get(self.cursor).copied();
                self.cursor += 1;
                v
            }
            Route::Sampled(rng) => Some(sample_step(rng, self.pos, self.prev, backtrack)),
        }
    }
}

/// Index of `v` in `pos.neighbors()` order.
fn neighbor_rank(pos: NodeAddress, v: NodeAddress) -> u8 {
    if pos.parent() == Some(v) {
        0
    } else {
        v.child_rank().expect("child has a rank") + u8::from(!pos.is_root())
    }
}

/// One step of a simple (`backtrack`) or non-backtracking walk.
pub fn sample_step<R: Rng>(
    rng: &mut R,
    pos: NodeAddress,
    prev: Option<NodeAddress>,
    backtrack: bool,
) -> NodeAddress {
    let deg = pos.degree() as u32;
    let k = match prev {
        Some(p) if !backtrack => {
            let skip = neighbor_rank(pos, p) as u32;
            let k = rng.random_range(0..deg - 1);
            if k >= skip {
                k + 1
            } else {
                k
            }
        }
        _ => rng.random_range(0..deg),
    };
    pos.neighbor(k as u8).expect("rank below degree")
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineRun {
    pub root_hits: u64,
    /// Vertices whose frog was ever active, root included.
    pub activated: BTreeSet<NodeAddress>,
    pub truncated: bool,
    /// Self-similar runs only: some odd-depth vertex was first landed on by
    /// two frogs in the same tick, so its activator was a tie-break.
    pub ambiguous_activation: bool,
    pub ticks: u64,
}

pub struct EngineLimits {
    pub depth_cap: u16,
    pub step_cap: u64,
    pub max_active_frogs: usize,
}

impl From<&ModelConfig> for EngineLimits {
    fn from(c: &ModelConfig) -> Self {
        EngineLimits {
            depth_cap: c.depth_cap,
            step_cap: c.step_cap,
            max_active_frogs: c.max_active_frogs,
        }
    }
}

/// Run one episode. `routes` is called once per frog when it wakes.
pub fn run_engine<'a>(
    variant: Variant,
    limits: &EngineLimits,
    mut routes: impl FnMut(NodeAddress) -> Route<'a>,
) -> EngineRun {
    let backtrack = variant == Variant::Original;
    let mut active: BTreeMap<NodeAddress, Frog<'a>> = BTreeMap::new();
    let root = NodeAddress::ROOT;
    active.insert(
        root,
        Frog {
            id: root,
            pos: root,
            prev: None,
            route: routes(root),
            cursor: 0,
        },
    );
    let mut awake: FxHashSet<NodeAddress> = FxHashSet::default();
    awake.insert(root);
    let mut down_traversals: FxHashMap<NodeAddress, u32> = FxHashMap::default();
    let mut activator: FxHashMap<NodeAddress, NodeAddress> = FxHashMap::default();
    let mut run = EngineRun {
        root_hits: 0,
        activated: BTreeSet::from([root]),
        truncated: false,
        ambiguous_activation: false,
        ticks: 0,
    };

    while !active.is_empty() {
        if run.ticks >= limits.step_cap {
            run.truncated = true;
            break;
        }
        run.ticks += 1;
        let mut woken_now: FxHashSet<NodeAddress> = FxHashSet::default();
        let mut finished: Vec<NodeAddress> = Vec::new();
        let mut newcomers: Vec<NodeAddress> = Vec::new();

        for frog in active.values_mut() {
            let Some(next) = frog.next_vertex(backtrack) else {
                finished.push(frog.id);
                continue;
            };
            debug_assert!(frog.pos.is_adjacent(&next));
            if next.depth() > limits.depth_cap {
                run.truncated = true;
                finished.push(frog.id);
                continue;
            }
            let pos = frog.pos;
            let mut admitted = true;
            if variant == Variant::SelfSimilar && next.parent() == Some(pos) {
                let seen = down_traversals.entry(next).or_insert(0);
                admitted = if pos.depth() % 2 == 0 {
                    *seen == 0
                } else {
                    let designated = frog.id == pos || activator.get(&pos) == Some(&frog.id);
                    let sibling_asleep = next
                        .siblings()
                        .iter()
                        .all(|s| !awake.contains(s) || woken_now.contains(s));
                    *seen == 0 || (*seen == 1 && designated && sibling_asleep)
                };
                *seen += 1;
            }
            frog.prev = Some(pos);
            frog.pos = next;
            if next.is_root() {
                run.root_hits += 1;
                if variant != Variant::Original {
                    finished.push(frog.id);
                    continue;
                }
            }
            if awake.insert(next) {
                woken_now.insert(next);
                activator.insert(next, frog.id);
                newcomers.push(next);
            } else if woken_now.contains(&next)
                && variant == Variant::SelfSimilar
                && next.depth() % 2 == 1
            {
                // Only odd-depth activators are consulted by the quota rule.
                run.ambiguous_activation = true;
            }
            if !admitted {
                finished.push(frog.id);
            }
        }

        for id in finished {
            active.remove(&id);
        }
        for v in newcomers {
            run.activated.insert(v);
            active.insert(
                v,
                Frog {
                    id: v,
                    pos: v,
                    prev: None,
                    route: routes(v),
                    cursor: 0,
                },
            );
        }
        if active.len() > limits.max_active_frogs {
            run.truncated = true;
            break;
        }
    }
    run
}

/// One episode with sampled walks, per-frog streams keyed by the episode.
pub fn run_episode(config: &ModelConfig, episode_index: u64) -> EpisodeOutcome {
    let seed = config.master_seed;
    let run = run_engine(config.variant, &EngineLimits::from(config), |v| {
        Route::Sampled(stream(seed, episode_index, v, Purpose::Walk))
    });
    EpisodeOutcome {
        episode_index,
        variant: config.variant,
        root_hits: run.root_hits,
        activated_frogs: run.activated.len() as u64,
        truncated: run.truncated,
        ambiguous_activation: run.ambiguous_activation,
        ticks: run.ticks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: Variant, depth_cap: u16, step_cap: u64) -> ModelConfig {
        ModelConfig {
            variant,
            depth_cap,
            step_cap,
            master_seed: 11,
            episodes: 1,
            max_active_frogs: 1 << 16,
        }
    }

    #[test]
    fn non_backtracking_step_never_reverses() {
        let mut rng = stream(1, 0, NodeAddress::ROOT, Purpose::Walk);
        let pos = NodeAddress::from_digits(&[1, 1]).unwrap();
        let prev = pos.parent();
        for _ in 0..200 {
            let next = sample_step(&mut rng, pos, prev, false);
            assert_ne!(Some(next), prev);
            assert!(pos.is_adjacent(&next));
        }
    }

    #[test]
    fn scripted_route_is_followed() {
        let a = NodeAddress::from_digits(&[0]).unwrap();
        let b = NodeAddress::from_digits(&[0, 1]).unwrap();
        let path_root = [a, b];
        let empty: [NodeAddress; 0] = [];
        let run = run_engine(
            Variant::NonBacktracking,
            &EngineLimits {
                depth_cap: 5,
                step_cap: 10,
                max_active_frogs: 10,
            },
            |v| {
                if v.is_root() {
                    Route::Scripted(&path_root)
                } else {
                    Route::Scripted(&empty)
                }
            },
        );
        assert_eq!(run.activated, BTreeSet::from([NodeAddress::ROOT, a, b]));
        assert_eq!(run.root_hits, 0);
        assert!(!run.truncated);
    }

    #[test]
    fn self_similar_even_edge_is_crossed_once() {
        // Root frog wakes g at depth 2 and then crosses g -> h first; the
        // frog of g follows over the same edge and must stop at h.
        let c = NodeAddress::from_digits(&[0]).unwrap();
        let g = NodeAddress::from_digits(&[0, 0]).unwrap();
        let h = NodeAddress::from_digits(&[0, 0, 2]).unwrap();
        let k = NodeAddress::from_digits(&[0, 0, 2, 1]).unwrap();
        let path_root = [c, g, h];
        let path_g = [h, k];
        let empty: [NodeAddress; 0] = [];
        let limits = EngineLimits {
            depth_cap: 6,
            step_cap: 10,
            max_active_frogs: 10,
        };
        let run_variant = |variant| {
            run_engine(variant, &limits, |v| {
                if v.is_root() {
                    Route::Scripted(&path_root)
                } else if v == g {
                    Route::Scripted(&path_g)
                } else {
                    Route::Scripted(&empty)
                }
            })
        };
        let ss = run_variant(Variant::SelfSimilar);
        assert_eq!(ss.activated, BTreeSet::from([NodeAddress::ROOT, c, g, h]));
        let nb = run_variant(Variant::NonBacktracking);
        assert!(nb.activated.contains(&k));
    }

    #[test]
    fn episodes_are_reproducible() {
        for variant in [Variant::Original, Variant::NonBacktracking, Variant::SelfSimilar] {
            let c = cfg(variant, 6, 40);
            assert_eq!(run_episode(&c, 3), run_episode(&c, 3));
        }
    }

    #[test]
    fn step_cap_truncates() {
        let out = run_episode(&cfg(Variant::Original, 8, 1), 0);
        assert!(out.truncated);
        assert_eq!(out.ticks, 1);
    }
}
