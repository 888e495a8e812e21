//! JSON HTTP API over the dialogue engine.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | [`Health`] |
//! | GET | `/attributes` | | `[AttributeInfo]` |
//! | POST | `/sessions` | [`CreateSession`] | 201, [`SessionSummary`] |
//! | GET | `/sessions/{id}` | | [`SessionSummary`] |
//! | GET | `/sessions/{id}/next` | | [`ActionResponse`] |
//! | POST | `/sessions/{id}/feedback` | [`Feedback`] | [`SessionSummary`] |
//! | GET | `/sessions/{id}/transcript` | | [`Transcript`] |
//!
//! Errors are `{"code": ..., "message": ...}` with a 4xx or 5xx status.
//! `next` is idempotent until feedback arrives.

mod api;
mod error;
mod store;

use std::net::SocketAddr;
use std::time::{Duration, Instant};

pub use api::{router, ActionResponse, AttributeInfo, CreateSession, Feedback, Health, SessionSummary, Transcript};
pub use error::{ApiError, ErrorBody};
pub use store::{AppState, Model, ServiceConfig, Session};

/// Serves `state` on `addr` until the process ends, expiring idle sessions
/// once a minute.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let dropped = sweeper.sweep(Instant::now());
            if dropped > 0 {
                log::info!("expired {dropped} idle sessions");
            }
        }
    });
    axum::serve(listener, router(state)).await
}
