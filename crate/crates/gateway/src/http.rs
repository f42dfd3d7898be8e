//! Axum routes over [`Gateway`]. Handlers run the blocking service calls on
//! the blocking pool so concurrent requests interleave at tick granularity.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::*;
use crate::blob::MAX_IMAGE_BYTES;
use crate::service::{ApiError, Gateway, Upload};

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type Shared = Arc<Gateway>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("bad request body: {e}")))
}

fn bearer(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .ok_or_else(|| ApiError::new(401, "unauthorized", "missing bearer token"))
}

async fn blocking<T: Send + 'static>(
    gw: Shared,
    f: impl FnOnce(&Gateway) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || f(&gw))
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn ok<T: Serialize>(status: StatusCode, v: T) -> Response {
    (status, Json(v)).into_response()
}

async fn register(State(gw): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: RegisterRequest = parse(&body)?;
    let r = blocking(gw, move |g| g.register(req)).await?;
    Ok(ok(StatusCode::CREATED, r))
}

async fn login(State(gw): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let req: LoginRequest = parse(&body)?;
    let r = blocking(gw, move |g| g.login(req)).await?;
    Ok(ok(StatusCode::OK, r))
}

#[derive(Debug, Deserialize)]
struct CategoryQuery {
    category: Option<String>,
}

async fn list_photos(
    State(gw): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<CategoryQuery>,
) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let r = blocking(gw, move |g| g.list_photos(&token, q.category.as_deref())).await?;
    Ok(ok(StatusCode::OK, r))
}

async fn publish(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let req: PublishRequest = parse(&body)?;
    let image = base64::engine::general_purpose::STANDARD
        .decode(req.image.as_bytes())
        .map_err(|e| ApiError::bad_request(format!("image is not base64: {e}")))?;
    let up = Upload {
        title: req.title,
        categories: req.categories,
        prices: req.prices,
        image,
    };
    let r = blocking(gw, move |g| g.publish(&token, up)).await?;
    Ok(ok(StatusCode::CREATED, r))
}

async fn buy(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let req: BuyRequest = parse(&body)?;
    let r = blocking(gw, move |g| g.buy(&token, req)).await?;
    Ok(ok(StatusCode::OK, r))
}

async fn download(State(gw): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let d = blocking(gw, move |g| g.download(&token, &id)).await?;
    Ok(([(header::CONTENT_TYPE, d.content_type)], d.bytes).into_response())
}

async fn mint(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let req: MintRequest = parse(&body)?;
    let r = blocking(gw, move |g| g.mint(&token, req)).await?;
    Ok(ok(StatusCode::OK, r))
}

async fn wallet(State(gw): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let r = blocking(gw, move |g| g.wallet(&token)).await?;
    Ok(ok(StatusCode::OK, r))
}

async fn subscribe(State(gw): State<Shared>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    let req: SubscribeRequest = parse(&body)?;
    let r = blocking(gw, move |g| g.subscribe(&token, req)).await?;
    Ok(ok(StatusCode::OK, r))
}

#[derive(Debug, Deserialize)]
struct PollQuery {
    topic: Option<String>,
    cursor: Option<u64>,
}

/// With a topic: poll it. Without: list the caller's subscriptions.
async fn poll(State(gw): State<Shared>, headers: HeaderMap, Query(q): Query<PollQuery>) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    match q.topic {
        Some(topic) => {
            let r = blocking(gw, move |g| g.poll(&token, &topic, q.cursor)).await?;
            Ok(ok(StatusCode::OK, r))
        }
        None => {
            let r = blocking(gw, move |g| g.subscriptions(&token)).await?;
            Ok(ok(StatusCode::OK, r))
        }
    }
}

async fn logout(State(gw): State<Shared>, headers: HeaderMap) -> Result<Response, ApiError> {
    let token = bearer(&headers)?;
    blocking(gw, move |g| Ok(g.logout(&token))).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn not_found() -> ApiError {
    ApiError::new(404, "not-found", "no such endpoint")
}

pub fn router(gw: Arc<Gateway>) -> Router {
    // Base64 inflates by 4/3; leave room for the JSON around it.
    let body_limit = MAX_IMAGE_BYTES / 3 * 4 + 64 * 1024;
    Router::new()
        .route("/register", post(register))
        .route("/login", post(login))
        .route("/logout", post(logout))
        .route("/photos", get(list_photos).post(publish))
        .route("/buy", post(buy))
        .route("/download/{photo_id}", get(download))
        .route("/admin/mint", post(mint))
        .route("/wallet", get(wallet))
        .route("/subscriptions", get(poll).post(subscribe))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(gw)
}

/// Serves until the listener fails. Starts the background clock.
pub async fn serve(gw: Arc<Gateway>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    gw.start_clock();
    axum::serve(listener, router(gw)).await
}
