use serde::{Deserialize, Serialize};

use super::state::DialogueState;
use super::uncertainty::{
    decide_action, fuse_uncertainty, mc_dropout_variance, midpoint_proximity, select_query_attribute, Decision, PolicyConfig,
};
use crate::belief::{predict_beliefs, RelationMatrix};
use crate::datasets::{AttrId, ItemCatalog, ItemId, UserHistory};
use crate::error::{Error, Result};
use crate::recommender::rank_candidates;
use crate::rng::{derive_seed, seeded};
use crate::simulation::{highest_score_attribute, max_entropy_attribute, most_informative_attribute, random_attribute, Strategy};

/// Source of relation matrices for a session's user.
pub trait BeliefModel: Send + Sync {
    /// Eval-mode `A`.
    fn relation(&self, history: &UserHistory) -> Result<RelationMatrix>;
    /// One dropout-active `A` per seed.
    fn mc_relations(&self, history: &UserHistory, seeds: &[u64]) -> Result<Vec<RelationMatrix>>;
}

/// Scores candidate items; lower is better.
pub trait ItemScorer: Send + Sync {
    fn scores(&self, history: &UserHistory, q: &[f64], items: &[ItemId]) -> Result<Vec<f64>>;
}

/// A belief model that returns the same matrix for every user and pass.
#[derive(Clone, Debug)]
pub struct FixedRelation(pub RelationMatrix);

impl BeliefModel for FixedRelation {
    fn relation(&self, _: &UserHistory) -> Result<RelationMatrix> {
        Ok(self.0.clone())
    }

    fn mc_relations(&self, _: &UserHistory, seeds: &[u64]) -> Result<Vec<RelationMatrix>> {
        Ok(vec![self.0.clone(); seeds.len()])
    }
}

/// Ranks by global interaction count, most popular first.
#[derive(Clone, Debug)]
pub struct TopPop {
    counts: Vec<u64>,
}

impl TopPop {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }
}

impl ItemScorer for TopPop {
    fn scores(&self, _: &UserHistory, _: &[f64], items: &[ItemId]) -> Result<Vec<f64>> {
        items
            .iter()
            .map(|v| {
                self.counts.get(v.index()).map(|&c| -(c as f64)).ok_or_else(|| Error::Unknown {
                    kind: "item",
                    id: v.to_string(),
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NextAction {
    Question { attribute: AttrId },
    Recommendation { items: Vec<ItemId> },
}

/// The chosen action together with the beliefs it was based on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub turn: usize,
    pub action: NextAction,
    /// `q_{t−1}` from the eval-mode relation matrix.
    pub beliefs: Vec<f64>,
    /// Fused `u`, present when the fused strategy asked a question.
    pub uncertainty: Option<Vec<f64>>,
}

/// Chooses the system's action for a session. Stateless: everything random
/// is derived from the caller's session seed and the turn.
pub struct Engine<'a> {
    pub catalog: &'a ItemCatalog,
    pub belief: &'a dyn BeliefModel,
    pub scorer: &'a dyn ItemScorer,
    pub policy: PolicyConfig,
    pub strategy: Strategy,
}

const RANDOM_STREAM: u64 = u64::MAX;

impl Engine<'_> {
    /// `q` for the state's current feedback.
    pub fn beliefs(&self, state: &DialogueState) -> Result<Vec<f64>> {
        let a = self.belief.relation(&state.history)?;
        Ok(predict_beliefs(&a, state.feedback.as_slice())?.into_inner())
    }

    /// Top-`K` candidates under beliefs `q`; the whole set when `|V| < K`.
    pub fn slate(&self, state: &DialogueState, q: &[f64]) -> Result<Vec<ItemId>> {
        let items = state.candidates.to_vec();
        let scores = self.scorer.scores(&state.history, q, &items)?;
        let scored: Vec<(ItemId, f64)> = items.into_iter().zip(scores).collect();
        rank_candidates(&scored, self.policy.k)
    }

    /// Fused uncertainty `u` from `N` seeded dropout passes and `q`.
    pub fn uncertainty(&self, state: &DialogueState, q: &[f64], seed: u64) -> Result<Vec<f64>> {
        let t = state.next_turn() as u64;
        let seeds: Vec<u64> = (0..self.policy.mc_passes as u64).map(|n| derive_seed(seed, &[t, n])).collect();
        let samples = self
            .belief
            .mc_relations(&state.history, &seeds)?
            .iter()
            .map(|a| Ok(predict_beliefs(a, state.feedback.as_slice())?.into_inner()))
            .collect::<Result<Vec<_>>>()?;
        Ok(fuse_uncertainty(&midpoint_proximity(q), &mc_dropout_variance(&samples)))
    }

    pub fn plan(&self, state: &DialogueState, seed: u64) -> Result<Plan> {
        if !state.is_active() {
            return Err(Error::Usage(format!("session already finished ({:?})", state.status)));
        }
        let turn = state.next_turn();
        let q = self.beliefs(state)?;
        let unknown = state.feedback.unknown_mask();
        let decision = match self.strategy {
            Strategy::Greedy => Decision::Recommend,
            _ => decide_action(&q, &unknown, turn, state.candidates.len(), &self.policy),
        };
        let mut uncertainty = None;
        let attribute = match decision {
            Decision::Recommend => None,
            Decision::Query => match self.strategy {
                Strategy::Minicorn => {
                    let u = self.uncertainty(state, &q, seed)?;
                    let p = select_query_attribute(&u, &unknown);
                    uncertainty = Some(u);
                    p
                }
                Strategy::Random => random_attribute(&unknown, &mut seeded(derive_seed(seed, &[turn as u64, RANDOM_STREAM]))),
                Strategy::MaxEntropy => max_entropy_attribute(&state.candidates, self.catalog, &unknown),
                Strategy::HighestScore => highest_score_attribute(&q, &unknown),
                Strategy::MostInf => {
                    let a = self.belief.relation(&state.history)?;
                    most_informative_attribute(&unknown, |p, value| {
                        let mut fb = state.feedback.as_slice().to_vec();
                        fb[p.index()] = value;
                        let q_hyp = predict_beliefs(&a, &fb)?.into_inner();
                        self.slate(state, &q_hyp)
                    })?
                }
                Strategy::Greedy => None,
            },
        };
        let action = match attribute {
            Some(attribute) => NextAction::Question { attribute },
            None => NextAction::Recommendation {
                items: self.slate(state, &q)?,
            },
        };
        Ok(Plan {
            turn,
            action,
            beliefs: q,
            uncertainty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{init_session, Answer};

    /// Items 0..6; attribute 0 on all, 1 on {0,1,2}, 2 on {3,4,5}, 3 on {0}.
    fn catalog() -> ItemCatalog {
        ItemCatalog::from_sets(
            [
                ("a", vec![0, 1, 3]),
                ("b", vec![0, 1]),
                ("c", vec![0, 1]),
                ("d", vec![0, 2]),
                ("e", vec![0, 2]),
                ("f", vec![0, 2]),
            ],
            None,
        )
        .unwrap()
    }

    struct ById;

    impl ItemScorer for ById {
        fn scores(&self, _: &UserHistory, _: &[f64], items: &[ItemId]) -> Result<Vec<f64>> {
            Ok(items.iter().map(|v| v.index() as f64).collect())
        }
    }

    fn engine<'a>(cat: &'a ItemCatalog, belief: &'a FixedRelation, strategy: Strategy, k: usize) -> Engine<'a> {
        Engine {
            catalog: cat,
            belief,
            scorer: &ById,
            policy: PolicyConfig {
                alpha: 0.1,
                k,
                t_max: 15,
                mc_passes: 4,
            },
            strategy,
        }
    }

    #[test]
    fn identity_beliefs_ask_then_recommend() {
        let cat = catalog();
        let belief = FixedRelation(RelationMatrix::identity(4));
        let eng = engine(&cat, &belief, Strategy::MaxEntropy, 2);
        let mut state = init_session(&cat, UserHistory::default(), AttrId(0), 15).unwrap();
        let plan = eng.plan(&state, 1).unwrap();
        assert_eq!(plan.turn, 2);
        assert_eq!(plan.beliefs, vec![1.0, 0.5, 0.5, 0.5]);
        assert_eq!(plan.action, NextAction::Question { attribute: AttrId(1) });
        state.apply_attribute_feedback(&cat, AttrId(1), Answer::No).unwrap();
        state.apply_attribute_feedback(&cat, AttrId(2), Answer::Yes).unwrap();
        let plan = eng.plan(&state, 1).unwrap();
        assert_eq!(plan.action, NextAction::Question { attribute: AttrId(3) });
        state.apply_attribute_feedback(&cat, AttrId(3), Answer::No).unwrap();
        let plan = eng.plan(&state, 1).unwrap();
        assert_eq!(
            plan.action,
            NextAction::Recommendation {
                items: vec![ItemId(3), ItemId(4)]
            }
        );
    }

    #[test]
    fn greedy_never_asks() {
        let cat = catalog();
        let belief = FixedRelation(RelationMatrix::identity(4));
        let eng = engine(&cat, &belief, Strategy::Greedy, 2);
        let state = init_session(&cat, UserHistory::default(), AttrId(0), 15).unwrap();
        assert_eq!(
            eng.plan(&state, 0).unwrap().action,
            NextAction::Recommendation {
                items: vec![ItemId(0), ItemId(1)]
            }
        );
    }

    #[test]
    fn constant_mc_samples_give_zero_uncertainty_and_lowest_unknown_id() {
        let cat = catalog();
        let belief = FixedRelation(RelationMatrix::identity(4));
        let eng = engine(&cat, &belief, Strategy::Minicorn, 2);
        let state = init_session(&cat, UserHistory::default(), AttrId(0), 15).unwrap();
        let plan = eng.plan(&state, 9).unwrap();
        assert_eq!(plan.uncertainty, Some(vec![0.0; 4]));
        assert_eq!(plan.action, NextAction::Question { attribute: AttrId(1) });
    }

    #[test]
    fn random_strategy_is_seeded_and_avoids_answered() {
        let cat = catalog();
        let belief = FixedRelation(RelationMatrix::identity(4));
        let eng = engine(&cat, &belief, Strategy::Random, 2);
        let state = init_session(&cat, UserHistory::default(), AttrId(0), 15).unwrap();
        for seed in 0..50 {
            let a = eng.plan(&state, seed).unwrap().action;
            assert_eq!(a, eng.plan(&state, seed).unwrap().action);
            assert_ne!(a, NextAction::Question { attribute: AttrId(0) });
            assert!(matches!(a, NextAction::Question { .. }));
        }
    }

    #[test]
    fn top_pop_prefers_counts() {
        let pop = TopPop::new(vec![1, 9, 4]);
        let s = pop
            .scores(&UserHistory::default(), &[], &[ItemId(0), ItemId(1), ItemId(2)])
            .unwrap();
        let ranked = rank_candidates(&[(ItemId(0), s[0]), (ItemId(1), s[1]), (ItemId(2), s[2])], 3).unwrap();
        assert_eq!(ranked, vec![ItemId(1), ItemId(2), ItemId(0)]);
        assert!(pop.scores(&UserHistory::default(), &[], &[ItemId(7)]).is_err());
    }

    #[test]
    fn finished_sessions_cannot_plan() {
        let cat = catalog();
        let belief = FixedRelation(RelationMatrix::identity(4));
        let eng = engine(&cat, &belief, Strategy::Minicorn, 2);
        let mut state = init_session(&cat, UserHistory::default(), AttrId(0), 15).unwrap();
        state.apply_recommendation_feedback(&[ItemId(0)], Some(ItemId(0))).unwrap();
        assert!(eng.plan(&state, 0).is_err());
    }
}
