use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{any, get, patch, post};
use axum::{Json, Router};
use futures::stream;
use rerender_core::history::{Annotation, HistoryPage, HistoryQuery};
use rerender_core::intervention::{ActivationSet, InterventionSpec};
use rerender_core::render::RenderAction;
use rerender_core::source::{SourceConfig, SourceDescriptor};
use rerender_core::{now_ms, Frame, Region};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::auth::SessionToken;
use crate::config::SourceEntry;
use crate::error::{ApiError, ApiResult};
use crate::session::{Session, BOUNDARY};
use crate::AppState;

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/sources", get(list_sources).post(register_source))
        .route("/interventions", get(list_interventions))
        .route("/interventions/{id}", patch(update_intervention))
        .route("/interventions/{id}/share", post(share))
        .route("/sessions", post(start_session))
        .route("/sessions/{id}", axum::routing::delete(stop_session))
        .route("/sessions/{id}/activations", patch(update_activations))
        .route("/stream/{id}", get(stream))
        .route("/ingest/{source_id}", post(ingest))
        .route("/history", get(list_history))
        .route("/history/{rid}/frame", get(history_frame))
        .route("/history/{rid}/annotate", post(annotate))
        .route("/events", any(events))
        .with_state(state)
}

/// The caller behind a bearer token, or a `token` query parameter for
/// clients such as `<img>` tags that cannot set headers.
pub struct AuthUser(pub String);

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(str::trim)
}

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, ApiError> {
        let from_query = Query::<TokenQuery>::try_from_uri(&parts.uri).ok().and_then(|q| q.0.token);
        let token = bearer(&parts.headers).map(str::to_string).or(from_query).ok_or_else(ApiError::unauthorized)?;
        let user = state.accounts.lock().expect("accounts lock").authenticate(&token, now_ms());
        user.map(AuthUser).ok_or_else(ApiError::unauthorized)
    }
}

#[derive(Deserialize)]
struct LoginRequest {
    user: String,
    password: String,
}

async fn login(State(state): State<Shared>, Json(req): Json<LoginRequest>) -> ApiResult<Json<SessionToken>> {
    let token = tokio::task::spawn_blocking(move || {
        state.accounts.lock().expect("accounts lock").login(&req.user, &req.password, now_ms())
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    token.map(Json).ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "bad credentials"))
}

async fn list_sources(State(state): State<Shared>, AuthUser(user): AuthUser) -> ApiResult<Json<Vec<SourceDescriptor>>> {
    let accounts = state.accounts.lock().expect("accounts lock");
    let account = accounts.get(&user).ok_or_else(ApiError::unauthorized)?;
    Ok(Json(account.sources.values().cloned().collect()))
}

async fn register_source(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Json(entry): Json<SourceEntry>,
) -> ApiResult<(StatusCode, Json<SourceDescriptor>)> {
    let desc = SourceDescriptor { source_id: entry.source_id, config: entry.config, registered_user: user.clone() };
    desc.validate()?;
    state.add_source(&user, desc.clone())?;
    Ok((StatusCode::CREATED, Json(desc)))
}

async fn list_interventions(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
) -> ApiResult<Json<Vec<InterventionSpec>>> {
    Ok(Json(state.registry.read().expect("registry lock").list_available(&user)?))
}

#[derive(Deserialize)]
struct ShareRequest {
    #[serde(default = "yes")]
    shared: bool,
}

fn yes() -> bool {
    true
}

async fn share(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
    Json(req): Json<ShareRequest>,
) -> ApiResult<Json<InterventionSpec>> {
    Ok(Json(state.registry.write().expect("registry lock").share(&user, &id, req.shared)?))
}

#[derive(Deserialize)]
struct UpdateIntervention {
    render_action: RenderAction,
}

async fn update_intervention(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
    Json(req): Json<UpdateIntervention>,
) -> ApiResult<Json<InterventionSpec>> {
    Ok(Json(state.registry.write().expect("registry lock").set_render_action(&user, &id, req.render_action)?))
}

#[derive(Deserialize)]
struct SessionRequest {
    source_id: String,
    #[serde(default)]
    activations: Vec<String>,
}

#[derive(Serialize)]
struct SessionInfo {
    session_id: String,
    source_id: String,
    stream: String,
    activations: Vec<String>,
}

impl SessionInfo {
    fn of(s: &Session) -> Self {
        SessionInfo {
            session_id: s.id.clone(),
            source_id: s.source.source_id.clone(),
            stream: format!("/stream/{}", s.id),
            activations: s.activation().ids,
        }
    }
}

fn checked_activation(state: &AppState, user: &str, ids: Vec<String>) -> ApiResult<ActivationSet> {
    let set = ActivationSet::new(user, ids)?;
    state.registry.read().expect("registry lock").check_activation(&set)?;
    Ok(set)
}

async fn start_session(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Json(req): Json<SessionRequest>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let source = {
        let accounts = state.accounts.lock().expect("accounts lock");
        let account = accounts.get(&user).ok_or_else(ApiError::unauthorized)?;
        account.sources.get(&req.source_id).cloned()
    }
    .ok_or_else(|| ApiError::not_found(format!("source {} is not registered", req.source_id)))?;
    let set = checked_activation(&state, &user, req.activations)?;
    let session = Session::new(crate::random_id(), user, source, set);
    state.sessions.lock().expect("sessions lock").insert(session.id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json(SessionInfo::of(&session))))
}

fn owned_session(state: &AppState, user: &str, id: &str) -> ApiResult<Arc<Session>> {
    let sessions = state.sessions.lock().expect("sessions lock");
    sessions.get(id).filter(|s| s.user == user).cloned().ok_or_else(|| ApiError::not_found(format!("session {id}")))
}

#[derive(Deserialize)]
struct ActivationRequest {
    activations: Vec<String>,
}

async fn update_activations(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
    Json(req): Json<ActivationRequest>,
) -> ApiResult<Json<SessionInfo>> {
    let session = owned_session(&state, &user, &id)?;
    session.set_activation(checked_activation(&state, &user, req.activations)?);
    Ok(Json(SessionInfo::of(&session)))
}

async fn stop_session(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    let session = owned_session(&state, &user, &id)?;
    session.stop();
    state.sessions.lock().expect("sessions lock").remove(&id);
    Ok(StatusCode::NO_CONTENT)
}

async fn stream(State(state): State<Shared>, AuthUser(user): AuthUser, Path(id): Path<String>) -> ApiResult<Response> {
    let session = owned_session(&state, &user, &id)?;
    let rx = session.subscribe(&state).ok_or_else(|| ApiError::new(StatusCode::GONE, format!("session {id} has ended")))?;
    let parts = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(part) => return Some((Ok::<_, std::convert::Infallible>(part), rx)),
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok((
        [
            (header::CONTENT_TYPE, format!("multipart/x-mixed-replace; boundary={BOUNDARY}")),
            (header::CACHE_CONTROL, "no-cache".to_string()),
        ],
        Body::from_stream(parts),
    )
        .into_response())
}

fn number_header(headers: &HeaderMap, name: &str) -> ApiResult<u64> {
    let v = headers.get(name).ok_or_else(|| ApiError::bad_request(format!("missing {name} header")))?;
    v.to_str()
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| ApiError::bad_request(format!("{name} must be a non-negative integer")))
}

async fn ingest(
    State(state): State<Shared>,
    Path(source_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<StatusCode> {
    let presented = bearer(&headers).ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "missing push token"))?;
    let candidates: Vec<(String, String)> = {
        let accounts = state.accounts.lock().expect("accounts lock");
        accounts
            .iter()
            .filter_map(|a| match a.sources.get(&source_id).map(|d| &d.config) {
                Some(SourceConfig::Push { token }) => Some((a.name.clone(), token.clone())),
                _ => None,
            })
            .collect()
    };
    if candidates.is_empty() {
        return Err(ApiError::not_found(format!("no push source {source_id}")));
    }
    let channel = candidates
        .iter()
        .map(|(user, token)| state.hub.channel(user, &source_id, token))
        .find(|c| c.check_token(presented).is_ok())
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "bad push token"))?;
    let seq = number_header(&headers, "x-seq")?;
    let ts = number_header(&headers, "x-timestamp")?;
    let frame = Frame::decode(&body).map_err(|e| ApiError::bad_request(format!("body is not a PNG frame: {e}")))?;
    let dropped = channel.push(frame.with_meta(source_id.clone(), seq, ts))?;
    if dropped > 0 {
        tracing::debug!(source = %source_id, dropped, "ingest queue full, dropped oldest");
    }
    Ok(StatusCode::NO_CONTENT)
}

async fn list_history(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Query(q): Query<HistoryQuery>,
) -> ApiResult<Json<HistoryPage>> {
    Ok(Json(state.history.lock().expect("history lock").list(&user, &q)?))
}

async fn history_frame(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(rid): Path<String>,
) -> ApiResult<Response> {
    let frame = {
        let history = state.history.lock().expect("history lock");
        let rec = history.get(&rid).ok_or_else(|| ApiError::not_found(format!("record {rid}")))?;
        if rec.user != user {
            return Err(ApiError::new(StatusCode::FORBIDDEN, format!("record {rid} belongs to another user")));
        }
        history.load_frame(&rec)?
    };
    let png = frame.encode_png()?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct AnnotateRequest {
    region: Region,
    label: String,
}

#[derive(Serialize)]
struct AnnotateResponse {
    annotation: Annotation,
    intervention: InterventionSpec,
}

async fn annotate(
    State(state): State<Shared>,
    AuthUser(user): AuthUser,
    Path(rid): Path<String>,
    Json(req): Json<AnnotateRequest>,
) -> ApiResult<(StatusCode, Json<AnnotateResponse>)> {
    let result = tokio::task::spawn_blocking(move || {
        let mut history = state.history.lock().expect("history lock");
        let mut registry = state.registry.write().expect("registry lock");
        history.annotate(&user, &rid, req.region, &req.label, &mut registry)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (annotation, intervention) = result?;
    Ok((StatusCode::CREATED, Json(AnnotateResponse { annotation, intervention })))
}

async fn events() -> impl IntoResponse {
    (StatusCode::NOT_IMPLEMENTED, Json(json!({ "error": "input event forwarding is reserved and not implemented" })))
}
