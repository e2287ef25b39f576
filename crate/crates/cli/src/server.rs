use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use bitext_core::query::QueryEngine;

use crate::api::{self, Params, Reply};

type Engine = State<Arc<QueryEngine>>;

fn respond(reply: Reply) -> Response {
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, Json(reply.body)).into_response()
}

/// Read-only routes over one loaded archive.
pub fn router(engine: Arc<QueryEngine>) -> Router {
    Router::new()
        .route("/archive/summary", get(|State(e): Engine| async move { respond(api::summary(&e)) }))
        .route("/bitexts", get(|State(e): Engine| async move { respond(api::bitexts(&e)) }))
        .route("/bitexts/{id}", get(|State(e): Engine, Path(id): Path<String>| async move { respond(api::bitext(&e, &id)) }))
        .route(
            "/bitexts/{id}/countertext",
            get(|State(e): Engine, Path(id): Path<String>, Query(p): Query<Params>| async move {
                respond(api::countertext(&e, &id, &p))
            }),
        )
        .route(
            "/lexicon/counterwords",
            get(|State(e): Engine, Query(p): Query<Params>| async move { respond(api::counterwords(&e, &p)) }),
        )
        .route(
            "/concordance",
            get(|State(e): Engine, Query(p): Query<Params>| async move { respond(api::concordance(&e, &p)) }),
        )
        .route("/reports/forks", get(|State(e): Engine| async move { respond(api::forks(&e)) }))
        .route(
            "/reports/phrases",
            get(|State(e): Engine, Query(p): Query<Params>| async move { respond(api::phrases(&e, &p)) }),
        )
        .route("/stats", get(|State(e): Engine| async move { respond(api::stats(&e)) }))
        .fallback(|| async { respond(Reply { status: 404, body: serde_json::json!({ "error": { "code": "not_found", "message": "no such route" } }) }) })
        .with_state(engine)
}

pub async fn serve(engine: QueryEngine, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(engine))).await
}
