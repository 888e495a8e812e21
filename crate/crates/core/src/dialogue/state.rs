use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datasets::{AttrId, ItemCatalog, ItemId, UserHistory, UserId};
use crate::error::{Error, Result};

/// `a_t`: 1 liked, 0 disliked, 0.5 unknown. Entries only move away from 0.5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeedbackVector(Vec<f64>);

impl FeedbackVector {
    pub fn unknown(num_attrs: usize) -> Self {
        Self(vec![0.5; num_attrs])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_unknown(&self, p: AttrId) -> bool {
        self.0[p.index()] == 0.5
    }

    pub fn unknown_mask(&self) -> Vec<bool> {
        self.0.iter().map(|&v| v == 0.5).collect()
    }

    pub fn unknown_count(&self) -> usize {
        self.0.iter().filter(|&&v| v == 0.5).count()
    }

    /// Records an answer; answering the same attribute twice is an error.
    pub fn set(&mut self, p: AttrId, answer: Answer) -> Result<()> {
        let slot = self.0.get_mut(p.index()).ok_or_else(|| Error::Unknown {
            kind: "attribute",
            id: p.to_string(),
        })?;
        if *slot != 0.5 {
            return Err(Error::Usage(format!("attribute {p} was already answered")));
        }
        *slot = match answer {
            Answer::Yes => 1.0,
            Answer::No => 0.0,
        };
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Yes,
    No,
}

/// `V_t`, kept sorted by item id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet(BTreeSet<ItemId>);

impl CandidateSet {
    pub fn from_items(items: impl IntoIterator<Item = ItemId>) -> Self {
        Self(items.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: ItemId) -> bool {
        self.0.contains(&v)
    }

    pub fn iter(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<ItemId> {
        self.0.iter().copied().collect()
    }

    pub fn retain_in(&mut self, keep: &[ItemId]) {
        let keep: BTreeSet<ItemId> = keep.iter().copied().collect();
        self.0.retain(|v| keep.contains(v));
    }

    pub fn remove_all(&mut self, drop: &[ItemId]) {
        for v in drop {
            self.0.remove(v);
        }
    }
}

/// What the system did in one turn. The opening turn is the user naming
/// an attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemAction {
    Open { attribute: AttrId },
    Question { attribute: AttrId },
    Recommendation { items: Vec<ItemId> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserResponse {
    Answer { answer: Answer },
    Accept { item: ItemId },
    Reject,
}

/// One line of a session transcript.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub action: SystemAction,
    pub response: UserResponse,
    /// `|V_t|` after the response.
    pub candidates: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Succeeded,
    Exhausted,
}

/// Per-conversation state. `turn` is the last completed turn; the system's
/// next action happens at `turn + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub history: UserHistory,
    pub turn: usize,
    pub t_max: usize,
    pub feedback: FeedbackVector,
    pub candidates: CandidateSet,
    pub asked: BTreeSet<AttrId>,
    pub rejected: BTreeSet<ItemId>,
    pub log: Vec<TurnRecord>,
    pub status: Status,
}

/// Starts a session from the user's opening attribute `p1`: `t = 1`,
/// `a_{p1} = 1`, `V_1 = V[p1]`.
pub fn init_session(catalog: &ItemCatalog, history: UserHistory, opening: AttrId, t_max: usize) -> Result<DialogueState> {
    catalog.check_attribute(opening.index())?;
    let mut feedback = FeedbackVector::unknown(catalog.num_attributes());
    feedback.set(opening, Answer::Yes)?;
    let candidates = CandidateSet::from_items(catalog.items_with(opening).iter().copied());
    if candidates.is_empty() {
        return Err(Error::Empty("opening attribute's item set"));
    }
    let log = vec![TurnRecord {
        turn: 1,
        action: SystemAction::Open { attribute: opening },
        response: UserResponse::Answer { answer: Answer::Yes },
        candidates: candidates.len(),
    }];
    Ok(DialogueState {
        history,
        turn: 1,
        t_max,
        feedback,
        candidates,
        asked: BTreeSet::from([opening]),
        rejected: BTreeSet::new(),
        log,
        status: Status::Active,
    })
}

impl DialogueState {
    pub fn user(&self) -> Option<UserId> {
        self.history.user
    }

    /// Turn at which the system acts next.
    pub fn next_turn(&self) -> usize {
        self.turn + 1
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    fn ensure_active(&self) -> Result<()> {
        if self.is_active() {
            Ok(())
        } else {
            Err(Error::Usage(format!("session already finished ({:?})", self.status)))
        }
    }

    fn finish_turn(&mut self, action: SystemAction, response: UserResponse) {
        self.turn += 1;
        self.log.push(TurnRecord {
            turn: self.turn,
            action,
            response,
            candidates: self.candidates.len(),
        });
        if self.status == Status::Active && (self.turn >= self.t_max || self.candidates.is_empty()) {
            self.status = Status::Exhausted;
        }
    }

    /// Yes: `a_p = 1`, `V ← V ∩ V[p]`. No: `a_p = 0`, `V ← V \ V[p]`.
    pub fn apply_attribute_feedback(&mut self, catalog: &ItemCatalog, p: AttrId, answer: Answer) -> Result<()> {
        self.ensure_active()?;
        catalog.check_attribute(p.index())?;
        self.feedback.set(p, answer)?;
        self.asked.insert(p);
        let with_p = catalog.items_with(p);
        match answer {
            Answer::Yes => self.candidates.retain_in(with_p),
            Answer::No => self.candidates.remove_all(with_p),
        }
        self.finish_turn(SystemAction::Question { attribute: p }, UserResponse::Answer { answer });
        Ok(())
    }

    /// Accepting ends the session successfully at this turn; a rejected
    /// slate is removed from the candidates.
    pub fn apply_recommendation_feedback(&mut self, slate: &[ItemId], accepted: Option<ItemId>) -> Result<()> {
        self.ensure_active()?;
        if let Some(v) = slate.iter().find(|v| !self.candidates.contains(**v)) {
            return Err(Error::Invariant(format!("recommended item {v} is not a candidate")));
        }
        let response = match accepted {
            Some(v) if !slate.contains(&v) => {
                return Err(Error::Usage(format!("accepted item {v} was not recommended")));
            }
            Some(item) => {
                self.status = Status::Succeeded;
                UserResponse::Accept { item }
            }
            None => {
                self.candidates.remove_all(slate);
                self.rejected.extend(slate);
                UserResponse::Reject
            }
        };
        self.finish_turn(SystemAction::Recommendation { items: slate.to_vec() }, response);
        Ok(())
    }
}

/// Re-applies a transcript from its opening line and returns `|V_t|` after
/// every turn, for checking that a log reproduces its candidate sets.
pub fn replay(catalog: &ItemCatalog, log: &[TurnRecord], t_max: usize) -> Result<Vec<usize>> {
    let Some(TurnRecord {
        action: SystemAction::Open { attribute },
        ..
    }) = log.first()
    else {
        return Err(Error::Usage("transcript must start with the opening turn".into()));
    };
    let mut state = init_session(catalog, UserHistory::default(), *attribute, t_max)?;
    for rec in &log[1..] {
        match (&rec.action, &rec.response) {
            (SystemAction::Question { attribute }, UserResponse::Answer { answer }) => {
                state.apply_attribute_feedback(catalog, *attribute, *answer)?
            }
            (SystemAction::Recommendation { items }, UserResponse::Accept { item }) => {
                state.apply_recommendation_feedback(items, Some(*item))?
            }
            (SystemAction::Recommendation { items }, UserResponse::Reject) => state.apply_recommendation_feedback(items, None)?,
            _ => {
                return Err(Error::Usage(format!(
                    "turn {} pairs an action with a mismatched response",
                    rec.turn
                )))
            }
        }
    }
    Ok(state.log.iter().map(|r| r.candidates).collect())
}
