use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use elicit_core::datasets::{AttrId, ItemId, UserId};
use elicit_core::dialogue::{init_session, Answer, NextAction, Status, TurnRecord};

use crate::error::ApiError;
use crate::store::{AppState, Session};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub sessions: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub id: AttrId,
    pub name: String,
    /// Items carrying the attribute, i.e. `|V_1|` if it opens a session.
    pub items: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    /// Known user id; absent or null for a cold start.
    #[serde(default)]
    pub user: Option<UserId>,
    pub opening_attribute: AttrId,
    /// Pins the session's random choices; drawn by the server when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// State as the client sees it after every call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub user: Option<UserId>,
    pub seed: u64,
    pub status: Status,
    /// Last completed turn.
    pub turn: usize,
    pub t_max: usize,
    /// `|V_t|`.
    pub candidates: usize,
    /// `a_t`: 1 yes, 0 no, 0.5 unknown.
    pub feedback: Vec<f64>,
    /// `q_t` under the session's model.
    pub beliefs: Vec<f64>,
    pub outstanding: Option<NextAction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionResponse {
    pub session_id: String,
    /// Turn the action belongs to.
    pub turn: usize,
    pub action: NextAction,
    pub beliefs: Vec<f64>,
    /// Fused uncertainty behind a question, when one was computed.
    pub uncertainty: Option<Vec<f64>>,
}

/// `{"answer": "yes"|"no"}` for a question; `{"accepted": bool}` and an
/// optional `"item"` for a slate. `{"item": id}` alone also accepts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    #[serde(default)]
    pub answer: Option<Answer>,
    #[serde(default)]
    pub accepted: Option<bool>,
    #[serde(default)]
    pub item: Option<ItemId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub status: Status,
    pub turns: Vec<TurnRecord>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/attributes", get(attributes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_state))
        .route("/sessions/{id}/next", get(next_action))
        .route("/sessions/{id}/feedback", post(submit_feedback))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(state)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::new(e.status(), "invalid_body", e.body_text()))
}

fn summary(s: &Session) -> Result<SessionSummary, ApiError> {
    Ok(SessionSummary {
        session_id: s.id.clone(),
        user: s.state.user(),
        seed: s.seed,
        status: s.state.status,
        turn: s.state.turn,
        t_max: s.state.t_max,
        candidates: s.state.candidates.len(),
        feedback: s.state.feedback.as_slice().to_vec(),
        beliefs: s.model.snapshot.beliefs(&s.state.history, s.state.feedback.as_slice())?,
        outstanding: s.outstanding.as_ref().map(|p| p.action.clone()),
    })
}

async fn health(State(app): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_loaded: app.model().is_some(),
        sessions: app.session_count(),
    })
}

fn model_unavailable() -> ApiError {
    ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_unavailable", "no model is loaded")
}

async fn attributes(State(app): State<AppState>) -> Result<Json<Vec<AttributeInfo>>, ApiError> {
    let model = app.model().ok_or_else(model_unavailable)?;
    let cat = &model.snapshot.catalog;
    Ok(Json(
        (0..cat.num_attributes())
            .map(AttrId::from)
            .map(|p| AttributeInfo {
                id: p,
                name: cat.attribute_name(p).to_string(),
                items: cat.items_with(p).len(),
            })
            .collect(),
    ))
}

async fn create_session(
    State(app): State<AppState>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionSummary>), ApiError> {
    let req = body(payload)?;
    let model = app.model().ok_or_else(model_unavailable)?;
    if let Some(u) = req.user {
        // Fails for ids outside the embedding table.
        model.snapshot.store.user(Some(u))?;
    }
    let history = model.history(req.user);
    let state = init_session(&model.snapshot.catalog, history, req.opening_attribute, app.config().policy.t_max)?;
    let now = Instant::now();
    let session = Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        model,
        state,
        seed: req.seed.unwrap_or_else(|| app.next_seed()),
        outstanding: None,
        created_at: now,
        last_seen: now,
    };
    let out = summary(&session)?;
    log::info!("session {} opened with attribute {}", session.id, req.opening_attribute);
    app.insert(session);
    Ok((StatusCode::CREATED, Json(out)))
}

async fn session_state(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    let entry = app.session(&id, Instant::now())?;
    let s = entry.lock();
    Ok(Json(summary(&s)?))
}

async fn next_action(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<ActionResponse>, ApiError> {
    let entry = app.session(&id, Instant::now())?;
    let mut s = entry.lock();
    if !s.state.is_active() {
        return Err(ApiError::conflict(
            "session_finished",
            format!("session `{id}` has ended ({:?})", s.state.status).to_lowercase(),
        ));
    }
    if s.outstanding.is_none() {
        let config = app.config();
        let plan = s.model.engine(config.policy, config.strategy).plan(&s.state, s.seed)?;
        s.outstanding = Some(plan);
    }
    let plan = s.outstanding.as_ref().expect("planned above");
    Ok(Json(ActionResponse {
        session_id: s.id.clone(),
        turn: plan.turn,
        action: plan.action.clone(),
        beliefs: plan.beliefs.clone(),
        uncertainty: plan.uncertainty.clone(),
    }))
}

async fn submit_feedback(
    State(app): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<Feedback>, JsonRejection>,
) -> Result<Json<SessionSummary>, ApiError> {
    let fb = body(payload)?;
    let entry = app.session(&id, Instant::now())?;
    let mut guard = entry.lock();
    let s = &mut *guard;
    if !s.state.is_active() {
        return Err(ApiError::conflict("session_finished", format!("session `{id}` has ended")));
    }
    let Some(plan) = &s.outstanding else {
        return Err(ApiError::conflict(
            "no_outstanding_action",
            "fetch the next action before sending feedback",
        ));
    };
    match (&plan.action, fb) {
        (
            NextAction::Question { attribute },
            Feedback {
                answer: Some(answer),
                accepted: None,
                item: None,
            },
        ) => {
            let p = *attribute;
            s.state.apply_attribute_feedback(&s.model.snapshot.catalog, p, answer)?;
        }
        (NextAction::Question { attribute }, _) => {
            return Err(ApiError::bad_request(
                "feedback_mismatch",
                format!("a question about attribute {attribute} is outstanding; send {{\"answer\": \"yes\"|\"no\"}}"),
            ));
        }
        (
            NextAction::Recommendation { items },
            Feedback {
                answer: None,
                accepted,
                item,
            },
        ) if accepted.is_some() || item.is_some() => {
            let chosen = match (accepted, item) {
                (Some(false), Some(_)) => {
                    return Err(ApiError::bad_request("feedback_mismatch", "a rejection cannot name an item"));
                }
                (Some(false), None) => None,
                (_, Some(v)) if !items.contains(&v) => {
                    return Err(ApiError::bad_request("item_not_offered", format!("item {v} is not in the slate")));
                }
                (_, Some(v)) => Some(v),
                (_, None) => items.first().copied(),
            };
            let slate = items.clone();
            s.state.apply_recommendation_feedback(&slate, chosen)?;
        }
        (NextAction::Recommendation { .. }, _) => {
            return Err(ApiError::bad_request(
                "feedback_mismatch",
                "a recommendation is outstanding; send {\"accepted\": true|false} and optionally \"item\"",
            ));
        }
    }
    s.outstanding = None;
    Ok(Json(summary(s)?))
}

async fn transcript(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Transcript>, ApiError> {
    let entry = app.session(&id, Instant::now())?;
    let s = entry.lock();
    Ok(Json(Transcript {
        session_id: s.id.clone(),
        status: s.state.status,
        turns: s.state.log.clone(),
    }))
}
