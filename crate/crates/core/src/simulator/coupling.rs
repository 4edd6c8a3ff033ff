//! One probability space for all three variants.
//!
//! Every vertex owns a simple random walk drawn from its own stream. The
//! original model uses it directly, the non-backtracking model uses the loop
//! erasure of its 5/8-stopped prefix, and the self-similar model runs the
//! same erased paths through the quota rules. Hit counts must then satisfy
//! `V <= V' <= Z` episode by episode.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;

use super::engine::{run_engine, EngineLimits, Route};
use super::rng::{stream, Purpose};
use super::tree::NodeAddress;
use super::walks::{derive_upsilon, is_indexed_subsequence, loop_erase, srw_path, Erasure, PathEnd, WalkPath};
use super::{ModelConfig, Moments, SimError, Variant};

struct FrogPaths {
    srw: WalkPath,
    upsilon: WalkPath,
    phi: Erasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoupledCounts {
    pub z: u64,
    pub v_prime: u64,
    pub v: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledEpisode {
    pub episode_index: u64,
    /// `Y` per activated frog of the original model.
    pub original_paths: BTreeMap<NodeAddress, Vec<NodeAddress>>,
    /// `Phi` per frog, with erasure indices into `Y`.
    pub derived_paths: BTreeMap<NodeAddress, Erasure>,
    /// Every `Phi` is an indexed subsequence of its `Y`, and every `Y` a
    /// prefix of its walk.
    pub subset_ok: bool,
    pub counts: CoupledCounts,
    /// Activated sets nest: self-similar within non-backtracking within
    /// original.
    pub nesting_ok: bool,
    /// The tick engine on the erased paths reproduces the closure count.
    pub engine_agrees: bool,
    /// Some walk hit the step cap, so its erasure may be wrong.
    pub truncated: bool,
    pub ambiguous_activation: bool,
}

impl CoupledEpisode {
    pub fn dominance_ok(&self) -> bool {
        let c = self.counts;
        c.v <= c.v_prime && c.v_prime <= c.z
    }
}

struct PathStore<'c> {
    config: &'c ModelConfig,
    episode: u64,
    paths: FxHashMap<NodeAddress, FrogPaths>,
}

impl PathStore<'_> {
    fn get(&mut self, v: NodeAddress) -> &FrogPaths {
        let (config, episode) = (self.config, self.episode);
        self.paths.entry(v).or_insert_with(|| {
            let mut walk_rng = stream(config.master_seed, episode, v, Purpose::Walk);
            let mut coin_rng = stream(config.master_seed, episode, v, Purpose::Coin);
            let srw = srw_path(v, config.depth_cap, config.step_cap, &mut walk_rng);
            let upsilon = derive_upsilon(&srw, &mut coin_rng);
            let phi = loop_erase(&upsilon);
            FrogPaths { srw, upsilon, phi }
        })
    }
}

/// Activation closure: start from the root's frog and follow each woken
/// frog's path. Returns the activated set and the number of root landings.
fn closure(
    store: &mut PathStore<'_>,
    path_of: impl Fn(&FrogPaths) -> &[NodeAddress],
) -> (BTreeSet<NodeAddress>, u64) {
    let mut activated = BTreeSet::from([NodeAddress::ROOT]);
    let mut queue = VecDeque::from([NodeAddress::ROOT]);
    let mut hits = 0;
    while let Some(v) = queue.pop_front() {
        let path = path_of(store.get(v));
        for &w in &path[1..] {
            if w.is_root() {
                hits += 1;
            } else if activated.insert(w) {
                queue.push_back(w);
            }
        }
    }
    (activated, hits)
}

pub fn run_coupled_episode(config: &ModelConfig, episode_index: u64) -> Result<CoupledEpisode, SimError> {
    config.validate()?;
    Ok(couple(config, episode_index, true))
}

fn couple(config: &ModelConfig, episode_index: u64, keep_paths: bool) -> CoupledEpisode {
    let mut store = PathStore {
        config,
        episode: episode_index,
        paths: FxHashMap::default(),
    };
    let (orig_set, z) = closure(&mut store, |p| &p.srw.vertices);
    let (nb_set, v_prime) = closure(&mut store, |p| &p.phi.vertices);

    let limits = EngineLimits {
        depth_cap: config.depth_cap,
        step_cap: u64::MAX,
        max_active_frogs: usize::MAX,
    };
    let scripted = |v: NodeAddress| Route::Scripted(&store.paths[&v].phi.vertices[1..]);
    let nb_run = run_engine(Variant::NonBacktracking, &limits, scripted);
    let ss_run = run_engine(Variant::SelfSimilar, &limits, scripted);

    let mut truncated = false;
    let mut subset_ok = true;
    let mut original_paths = BTreeMap::new();
    let mut derived_paths = BTreeMap::new();
    for v in &orig_set {
        let p = &store.paths[v];
        truncated |= p.srw.end == PathEnd::StepCap;
        subset_ok &= p.srw.vertices.starts_with(&p.upsilon.vertices)
            && is_indexed_subsequence(&p.phi, &p.upsilon.vertices);
        if keep_paths {
            original_paths.insert(*v, p.upsilon.vertices.clone());
            derived_paths.insert(*v, p.phi.clone());
        }
    }

    CoupledEpisode {
        episode_index,
        original_paths,
        derived_paths,
        subset_ok,
        counts: CoupledCounts {
            z,
            v_prime,
            v: ss_run.root_hits,
        },
        nesting_ok: ss_run.activated.is_subset(&nb_set) && nb_set.is_subset(&orig_set),
        engine_agrees: nb_run.root_hits == v_prime && nb_run.activated == nb_set,
        truncated,
        ambiguous_activation: ss_run.ambiguous_activation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingSummary {
    pub episodes: u64,
    pub truncated: u64,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub exclusion_rate: f64,
    /// Violations among non-truncated episodes.
    pub subset_violations: u64,
    pub dominance_violations: u64,
    pub nesting_violations: u64,
    pub engine_disagreements: u64,
    pub ambiguous_activation: u64,
    pub z: Moments,
    pub v_prime: Moments,
    pub v: Moments,
}

impl CouplingSummary {
    pub fn clean(&self) -> bool {
        self.subset_violations == 0
            && self.dominance_violations == 0
            && self.nesting_violations == 0
            && self.engine_disagreements == 0
    }
}

#[derive(Clone, Copy)]
struct EpisodeFlags {
    truncated: bool,
    subset: bool,
    dominance: bool,
    nesting: bool,
    engine: bool,
    ambiguous: bool,
    counts: CoupledCounts,
}

pub fn run_coupled_batch(config: &ModelConfig) -> Result<CouplingSummary, SimError> {
    config.validate()?;
    let flags: Vec<EpisodeFlags> = (0..config.episodes)
        .into_par_iter()
        .map(|ep| {
            let e = couple(config, ep, false);
            EpisodeFlags {
                truncated: e.truncated,
                subset: e.subset_ok,
                dominance: e.dominance_ok(),
                nesting: e.nesting_ok,
                engine: e.engine_agrees,
                ambiguous: e.ambiguous_activation,
                counts: e.counts,
            }
        })
        .collect();
    let kept: Vec<&EpisodeFlags> = flags.iter().filter(|f| !f.truncated).collect();
    let count = |pred: fn(&EpisodeFlags) -> bool| kept.iter().filter(|f| pred(f)).count() as u64;
    let truncated = flags.len() as u64 - kept.len() as u64;
    Ok(CouplingSummary {
        episodes: config.episodes,
        truncated,
        exclusion_rate: truncated as f64 / config.episodes.max(1) as f64,
        subset_violations: count(|f| !f.subset),
        dominance_violations: count(|f| !f.dominance),
        nesting_violations: count(|f| !f.nesting),
        engine_disagreements: count(|f| !f.engine),
        ambiguous_activation: flags.iter().filter(|f| f.ambiguous).count() as u64,
        z: Moments::from_values(kept.iter().map(|f| f.counts.z)),
        v_prime: Moments::from_values(kept.iter().map(|f| f.counts.v_prime)),
        v: Moments::from_values(kept.iter().map(|f| f.counts.v)),
    })
}
