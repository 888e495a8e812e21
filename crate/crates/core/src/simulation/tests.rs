use proptest::prelude::{any, prop, prop_assert, proptest, ProptestConfig};

use super::*;
use crate::belief::RelationMatrix;
use crate::datasets::{AttrId, ItemCatalog, ItemId, UserHistory};
use crate::dialogue::{init_session, replay, Answer, Engine, FixedRelation, ItemScorer, PolicyConfig, SystemAction};
use crate::error::Result;

struct ById;

impl ItemScorer for ById {
    fn scores(&self, _: &UserHistory, _: &[f64], items: &[ItemId]) -> Result<Vec<f64>> {
        Ok(items.iter().map(|v| v.index() as f64).collect())
    }
}

fn policy(k: usize) -> PolicyConfig {
    PolicyConfig {
        alpha: 0.1,
        k,
        t_max: 15,
        mc_passes: 3,
    }
}

fn task(target: usize) -> EpisodeTask {
    EpisodeTask {
        id: 0,
        history: UserHistory::default(),
        target: ItemId::from(target),
    }
}

#[test]
fn truthful_answers_reproduce_the_attribute_vector() {
    let cat = ItemCatalog::from_sets([("a", vec![0, 2]), ("b", vec![1])], Some(4)).unwrap();
    let user = SimulatedUser::new(&cat, ItemId(0)).unwrap();
    let answers: Vec<f64> = (0..4)
        .map(|p| match user.answer(AttrId::from(p)) {
            Answer::Yes => 1.0,
            Answer::No => 0.0,
        })
        .collect();
    assert_eq!(answers, cat.binary(ItemId(0)));
    assert_eq!(user.respond(&[ItemId(1), ItemId(0)]), Some(ItemId(0)));
    assert_eq!(user.respond(&[ItemId(1)]), None);
}

#[test]
fn opening_attribute_is_uniform_over_the_target_attributes() {
    let cat = ItemCatalog::from_sets([("a", vec![1, 3, 4, 6]), ("b", vec![2])], None).unwrap();
    let user = SimulatedUser::new(&cat, ItemId(0)).unwrap();
    assert_eq!(user.opening_attribute(5), user.opening_attribute(5));
    let single = SimulatedUser::new(&cat, ItemId(1)).unwrap();
    assert_eq!(single.opening_attribute(77), AttrId(2));
    let mut counts = std::collections::BTreeMap::new();
    let draws = 10_000;
    for s in 0..draws {
        *counts
            .entry(user.opening_attribute(crate::rng::derive_seed(1, &[s])))
            .or_insert(0usize) += 1;
    }
    assert_eq!(counts.keys().copied().collect::<Vec<_>>(), [1, 3, 4, 6].map(AttrId));
    for (p, c) in counts {
        let f = c as f64 / draws as f64;
        assert!((0.23..=0.27).contains(&f), "attribute {p}: {f}");
    }
}

#[test]
fn single_item_catalog_succeeds_on_the_first_system_turn() {
    let cat = ItemCatalog::from_sets([("only", vec![0, 1])], None).unwrap();
    let belief = FixedRelation(RelationMatrix::identity(2));
    for strategy in Strategy::ALL {
        let eng = Engine {
            catalog: &cat,
            belief: &belief,
            scorer: &ById,
            policy: policy(10),
            strategy,
        };
        let r = run_episode(&eng, &task(0), 3).unwrap();
        assert!(r.success);
        assert_eq!(r.turns, 2);
    }
}

/// Target `{0}`; items 1..=5 each add one attribute, items 6..=10 add two.
/// Every "no" removes one rival, and the last rival only leaves with the
/// fifth question, so the slate comes at turn 7.
fn narrowing_catalog() -> ItemCatalog {
    let mut sets = vec![vec![0]];
    sets.extend((1..=5).map(|i| vec![0, i]));
    sets.extend([vec![0, 1, 2], vec![0, 2, 3], vec![0, 3, 4], vec![0, 4, 5], vec![0, 1, 5]]);
    ItemCatalog::from_sets(sets.into_iter().enumerate().map(|(i, s)| (format!("v{i}"), s)), None).unwrap()
}

#[test]
fn narrowing_scenario_succeeds_at_turn_seven() {
    let cat = narrowing_catalog();
    assert_eq!(cat.len(), 11);
    let belief = FixedRelation(RelationMatrix::identity(6));
    let eng = Engine {
        catalog: &cat,
        belief: &belief,
        scorer: &ById,
        policy: policy(1),
        strategy: Strategy::Minicorn,
    };
    let r = run_episode(&eng, &task(0), 11).unwrap();
    assert!(r.success);
    assert_eq!(r.turns, 7);
    assert_eq!(r.candidate_sizes(), vec![11, 8, 6, 4, 2, 1, 1]);
    let questions: Vec<AttrId> = r
        .log
        .iter()
        .filter_map(|t| match t.action {
            SystemAction::Question { attribute } => Some(attribute),
            _ => None,
        })
        .collect();
    assert_eq!(questions, (1..=5).map(AttrId).collect::<Vec<_>>());
    assert_eq!(replay(&cat, &r.log, 15).unwrap(), r.candidate_sizes());
}

#[test]
fn greedy_success_turn_follows_the_target_rank() {
    let sets: Vec<(String, Vec<usize>)> = (0..40).map(|i| (format!("v{i}"), vec![0])).collect();
    let cat = ItemCatalog::from_sets(sets, None).unwrap();
    let belief = FixedRelation(RelationMatrix::identity(1));
    let k = 4;
    let eng = Engine {
        catalog: &cat,
        belief: &belief,
        scorer: &ById,
        policy: policy(k),
        strategy: Strategy::Greedy,
    };
    let mut outcomes = Vec::new();
    for rank in 0..40 {
        let r = run_episode(&eng, &task(rank), 0).unwrap();
        let want = 1 + rank / k + 1;
        if want <= 15 {
            assert!(r.success);
            assert_eq!(r.turns, want, "rank {rank}");
        } else {
            assert!(!r.success);
            assert_eq!(r.turns, 15);
        }
        assert!(r.log.iter().all(|t| !matches!(t.action, SystemAction::Question { .. })));
        outcomes.push(Outcome::from(&r));
    }
    let report = evaluate(&outcomes, 15).unwrap();
    let bound = (0..40).map(|r| r as f64 / k as f64).sum::<f64>() / 40.0;
    assert!(report.average_turn >= bound);
}

#[test]
fn episodes_are_reproducible_across_job_counts() {
    let world = generate_world(&SyntheticConfig::planted_blocks(2)).unwrap();
    let cat = &world.dataset.catalog;
    let belief = FixedRelation(RelationMatrix::identity(cat.num_attributes()));
    let eng = Engine {
        catalog: cat,
        belief: &belief,
        scorer: &ById,
        policy: policy(10),
        strategy: Strategy::Random,
    };
    let tasks: Vec<EpisodeTask> = (0..30)
        .map(|i| EpisodeTask {
            id: i,
            history: UserHistory::default(),
            target: ItemId::from(i * 3),
        })
        .collect();
    let a = run_episodes(&eng, &tasks, 123, 1).unwrap();
    let b = run_episodes(&eng, &tasks, 123, 3).unwrap();
    assert_eq!(a, b);
    for r in &a {
        assert!(r.turns <= 15);
        assert!(r.candidate_sizes().windows(2).all(|w| w[0] >= w[1]));
        assert!(r.log.iter().any(|t| matches!(t.action, SystemAction::Recommendation { .. })));
        assert_eq!(replay(cat, &r.log, 15).unwrap(), r.candidate_sizes());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn truthful_feedback_never_drops_the_target(
        raw in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 2..20),
        target_pick in any::<prop::sample::Index>(),
        order in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
        slates in prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 1..4), 0..3),
    ) {
        let sets: Vec<Vec<usize>> = raw
            .iter()
            .map(|r| {
                let s: Vec<usize> = (0..6).filter(|&p| r[p]).collect();
                if s.is_empty() { vec![0] } else { s }
            })
            .collect();
        let cat = ItemCatalog::from_sets(sets.iter().enumerate().map(|(i, s)| (format!("v{i}"), s.clone())), Some(6)).unwrap();
        let target = ItemId::from(target_pick.index(cat.len()));
        let user = SimulatedUser::new(&cat, target).unwrap();
        let opening = user.opening_attribute(0);
        let mut state = init_session(&cat, UserHistory::default(), opening, 15).unwrap();
        let mut slate_iter = slates.into_iter();
        for p in order.into_iter().map(AttrId::from).filter(|&p| p != opening) {
            state.apply_attribute_feedback(&cat, p, user.answer(p)).unwrap();
            prop_assert!(state.candidates.contains(target));
            if let Some(picks) = slate_iter.next() {
                let pool: Vec<ItemId> = state.candidates.iter().filter(|&v| v != target).collect();
                if !pool.is_empty() {
                    let mut slate: Vec<ItemId> = picks.iter().map(|i| pool[i.index(pool.len())]).collect();
                    slate.sort();
                    slate.dedup();
                    state.apply_recommendation_feedback(&slate, user.respond(&slate)).unwrap();
                    prop_assert!(state.candidates.contains(target));
                }
            }
        }
    }
}

use proptest::prelude::{Just, Strategy as _};
