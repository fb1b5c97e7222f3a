//! Stateless HTTP JSON service under `/v1`.

use axum::extract::{Query, RawQuery};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;

use crate::commands::{dispatch, SolveQuery, ENDPOINTS};
use crate::error::CliError;

pub const BIND_ENV: &str = "DISCOVERY_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(e: &CliError) -> Response {
    let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json(status, e.to_json())
}

async fn run(endpoint: String, raw_query: Option<String>, body: String) -> Response {
    let query: SolveQuery = match raw_query.as_deref() {
        None | Some("") => SolveQuery::default(),
        Some(q) => match Query::<SolveQuery>::try_from_uri(&format!("/?{q}").parse().expect("valid uri")) {
            Ok(Query(q)) => q,
            Err(e) => return error_response(&CliError::input("/query", e.body_text())),
        },
    };
    let handle = tokio::task::spawn_blocking(move || dispatch(&endpoint, &body, &query));
    match handle.await {
        Ok(Ok(out)) => json(StatusCode::OK, out),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&CliError::Internal(e.to_string())),
    }
}

async fn index() -> Response {
    let paths: Vec<String> = ENDPOINTS.iter().map(|e| format!("/v1/{e}")).collect();
    json(StatusCode::OK, crate::output::render_json(&paths))
}

pub fn router() -> Router {
    let mut r = Router::new().route("/v1", get(index));
    for e in ENDPOINTS {
        let endpoint = e.to_string();
        r = r.route(
            &format!("/v1/{e}"),
            post(move |RawQuery(q): RawQuery, body: String| run(endpoint.clone(), q, body)),
        );
    }
    r
}

/// Binds and serves until Ctrl-C.
pub async fn serve(addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
