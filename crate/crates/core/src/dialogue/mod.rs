//! Session state, the query-or-recommend rule, uncertainty estimates and
//! the engine that picks each system action.

mod engine;
mod state;
mod uncertainty;

pub use engine::{BeliefModel, Engine, FixedRelation, ItemScorer, NextAction, Plan, TopPop};
pub use state::{
    init_session, replay, Answer, CandidateSet, DialogueState, FeedbackVector, Status, SystemAction, TurnRecord, UserResponse,
};
pub use uncertainty::{
    argmax_unknown, belief_variance, confidence, decide_action, fuse_uncertainty, mc_dropout_variance, midpoint_proximity, normalize,
    raw_midpoint_proximity, select_query_attribute, Decision, PolicyConfig, Predicates,
};
