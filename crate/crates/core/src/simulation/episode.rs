use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategies::Strategy;
use crate::datasets::{AttrId, ItemCatalog, ItemId, UserHistory, UserId};
use crate::dialogue::{init_session, Answer, Engine, NextAction, Status, TurnRecord};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// A truthful user: says yes exactly to the target's attributes and accepts
/// exactly when the target is in the slate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulatedUser {
    pub target: ItemId,
    attributes: BTreeSet<AttrId>,
}

impl SimulatedUser {
    pub fn new(catalog: &ItemCatalog, target: ItemId) -> Result<Self> {
        catalog.check_item(target.index())?;
        Ok(Self {
            target,
            attributes: catalog.attributes(target).iter().copied().collect(),
        })
    }

    pub fn answer(&self, p: AttrId) -> Answer {
        if self.attributes.contains(&p) {
            Answer::Yes
        } else {
            Answer::No
        }
    }

    /// Uniform over the target's attributes.
    pub fn opening_attribute(&self, seed: u64) -> AttrId {
        let attrs: Vec<AttrId> = self.attributes.iter().copied().collect();
        *attrs.choose(&mut seeded(seed)).expect("catalog items have at least one attribute")
    }

    pub fn respond(&self, slate: &[ItemId]) -> Option<ItemId> {
        slate.contains(&self.target).then_some(self.target)
    }
}

/// One simulated conversation to run.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTask {
    pub id: usize,
    pub history: UserHistory,
    pub target: ItemId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub id: usize,
    pub strategy: Strategy,
    pub user: Option<UserId>,
    pub target: ItemId,
    pub success: bool,
    /// Acceptance turn, or the last turn played on failure.
    pub turns: usize,
    pub log: Vec<TurnRecord>,
}

impl EpisodeResult {
    /// `|V_t|` after every turn.
    pub fn candidate_sizes(&self) -> Vec<usize> {
        self.log.iter().map(|r| r.candidates).collect()
    }
}

const OPENING_STREAM: u64 = u64::MAX - 1;

/// Plays one conversation to acceptance or `T_max`. The opening attribute
/// and every random choice derive from `seed`.
pub fn run_episode(engine: &Engine<'_>, task: &EpisodeTask, seed: u64) -> Result<EpisodeResult> {
    let user = SimulatedUser::new(engine.catalog, task.target)?;
    let opening = user.opening_attribute(derive_seed(seed, &[OPENING_STREAM]));
    let mut state = init_session(engine.catalog, task.history.clone(), opening, engine.policy.t_max)?;
    while state.is_active() {
        match engine.plan(&state, seed)?.action {
            NextAction::Question { attribute } => state.apply_attribute_feedback(engine.catalog, attribute, user.answer(attribute))?,
            NextAction::Recommendation { items } => state.apply_recommendation_feedback(&items, user.respond(&items))?,
        }
        if state.status == Status::Active && !state.candidates.contains(task.target) {
            return Err(Error::Invariant(format!(
                "target {} left the candidate set at turn {}",
                task.target, state.turn
            )));
        }
    }
    Ok(EpisodeResult {
        id: task.id,
        strategy: engine.strategy,
        user: task.history.user,
        target: task.target,
        success: state.status == Status::Succeeded,
        turns: state.turn,
        log: state.log,
    })
}

/// Runs every task with seed `derive_seed(seed, [id])` on `jobs` threads;
/// results come back sorted by id regardless of scheduling.
pub fn run_episodes(engine: &Engine<'_>, tasks: &[EpisodeTask], seed: u64, jobs: usize) -> Result<Vec<EpisodeResult>> {
    let play = |t: &EpisodeTask| run_episode(engine, t, derive_seed(seed, &[t.id as u64]));
    let mut results: Vec<EpisodeResult> = if jobs <= 1 {
        tasks.iter().map(play).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| tasks.par_iter().map(play).collect::<Result<_>>())?
    };
    results.sort_by_key(|r| r.id);
    Ok(results)
}

impl From<&EpisodeResult> for super::metrics::Outcome {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            success_turn: r.success.then_some(r.turns),
        }
    }
}
