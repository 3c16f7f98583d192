//! REST routes.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::header::{ACCEPT, CONTENT_TYPE};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Extension, Json, Router};
use dtinterview_core::catalog::{CategoryId, QuestionCatalog};
use dtinterview_core::orchestrator::{run_turn, TurnConfig, UserInput, PROMPT_VERSION};
use dtinterview_core::provider::LlmProvider;
use dtinterview_core::report::{create_report, Report, Rubric};
use dtinterview_core::session::{ClientProfile, Modality, Role, Session, SessionStatus};
use dtinterview_core::store::{SessionFilter, SessionStore, SessionSummary};
use dtinterview_core::transcription::{transcribe, AudioFormat, AudioInput, SttProvider, Transcript};
use dtinterview_core::workflow::{Phase, Progress, WorkflowState};
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crate::auth::{require_bearer, Caller, RateLimiter};
use crate::config::Secret;
use crate::error::ApiError;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub catalog: Arc<QuestionCatalog>,
    pub llm: Arc<dyn LlmProvider>,
    pub stt: Arc<dyn SttProvider>,
    pub turn_config: TurnConfig,
    pub rubric: Arc<Rubric>,
    pub auth_token: Option<Secret>,
    pub audio_cap_bytes: usize,
    pub retain_audio: bool,
    pub rate_limiter: Arc<RateLimiter>,
}

pub fn router(state: AppState) -> Router {
    // multipart framing overhead on top of the clip itself
    let body_limit = state.audio_cap_bytes.saturating_add(1 << 20);
    let protected = Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/priorities", post(set_priorities))
        .route(
            "/sessions/{id}/turns",
            post(take_turn).layer(DefaultBodyLimit::max(body_limit)),
        )
        .route("/sessions/{id}/progress", get(get_progress))
        .route("/sessions/{id}/report", post(make_report).get(get_report))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_bearer));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .with_state(state)
}

fn parse_id(raw: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw)
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("session {raw} not found")))
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "catalog_version": state.catalog.version,
        "total_questions": state.catalog.total_questions(),
        "prompt_version": PROMPT_VERSION,
        "llm": { "kind": state.llm.kind(), "reachability": state.llm.probe().await },
        "stt": { "provider": state.stt.provider_id() },
    }))
}

async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<ClientProfile>, JsonRejection>,
) -> Result<(StatusCode, Json<Session>), ApiError> {
    let Json(profile) = body?;
    let session = state.store.create_session(profile)?;
    Ok((StatusCode::CREATED, Json(session)))
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    company: Option<String>,
    client: Option<String>,
    job_title: Option<String>,
    status: Option<SessionStatus>,
}

async fn list_sessions(
    State(state): State<AppState>,
    query: Result<Query<ListQuery>, QueryRejection>,
) -> Result<Json<Vec<SessionSummary>>, ApiError> {
    let Query(q) = query?;
    let filter = SessionFilter {
        company: q.company.filter(|s| !s.is_empty()),
        client: q.client.filter(|s| !s.is_empty()),
        job_title: q.job_title.filter(|s| !s.is_empty()),
        status: q.status,
    };
    Ok(Json(state.store.list_sessions(&filter)?))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Session>, ApiError> {
    Ok(Json(state.store.load(parse_id(&id)?)?))
}

#[derive(Debug, Deserialize)]
struct PrioritiesBody {
    categories: Vec<String>,
}

#[derive(Debug, Serialize)]
struct StateView {
    session_id: Uuid,
    status: SessionStatus,
    state: WorkflowState,
    progress: Option<Progress>,
}

impl StateView {
    fn of(session: &Session, catalog: &QuestionCatalog) -> Self {
        Self {
            session_id: session.session_id,
            status: session.status,
            state: session.state.clone(),
            progress: session.state.progress(catalog).ok(),
        }
    }
}

async fn set_priorities(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<PrioritiesBody>, JsonRejection>,
) -> Result<Json<StateView>, ApiError> {
    let id = parse_id(&id)?;
    let Json(body) = body?;
    let ids = body
        .categories
        .iter()
        .map(|name| state.catalog.resolve_category(name))
        .collect::<Result<Vec<CategoryId>, _>>()?;
    let _lease = state.store.lease(id)?;
    let session = state.store.resume(id)?;
    let next = session.state.record_priorities(&state.catalog, &ids)?;
    let session = state
        .store
        .commit_turn(id, session.last_message_id(), Vec::new(), Some(next))?;
    Ok(Json(StateView::of(&session, &state.catalog)))
}

async fn get_progress(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<StateView>, ApiError> {
    let session = state.store.load(parse_id(&id)?)?;
    if session.state.phase == Phase::AwaitingPriorities {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "wrong_phase",
            "no priorities recorded yet; progress starts with the first category",
        ));
    }
    Ok(Json(StateView::of(&session, &state.catalog)))
}

#[derive(Debug, Deserialize)]
struct TextTurn {
    text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnResponse {
    pub session_id: Uuid,
    pub assistant_text: String,
    pub status: SessionStatus,
    pub phase: Phase,
    pub progress: Option<Progress>,
    pub tool_calls: usize,
    /// Echo of what the transcriber heard, for audio turns.
    pub transcript: Option<Transcript>,
}

async fn read_audio(mut multipart: Multipart) -> Result<AudioInput, ApiError> {
    let mut audio = None;
    let mut language_hint = None;
    let mut duration_s = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        match field.name().unwrap_or_default() {
            "audio" | "file" => {
                let media_type = field.content_type().unwrap_or("application/octet-stream").to_owned();
                let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                audio = Some((bytes.to_vec(), media_type));
            }
            "language" => {
                let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                language_hint = Some(text.trim().to_owned()).filter(|t| !t.is_empty());
            }
            "duration_s" => {
                let text = field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                duration_s = text.trim().parse().ok();
            }
            _ => {}
        }
    }
    let (bytes, media_type) =
        audio.ok_or_else(|| ApiError::unprocessable("empty_input", "multipart body has no `audio` part"))?;
    Ok(AudioInput {
        bytes,
        media_type,
        language_hint,
        duration_s,
    })
}

fn wants_stream(headers: &HeaderMap) -> bool {
    headers
        .get(ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"))
}

async fn take_turn(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Extension(caller): Extension<Caller>,
    request: Request,
) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    if !state.rate_limiter.check(&caller.0) {
        return Err(ApiError::new(
            StatusCode::TOO_MANY_REQUESTS,
            "rate_limited",
            "turn rate limit exceeded",
        ));
    }
    let stream = wants_stream(request.headers());
    let is_multipart = request
        .headers()
        .get(CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));

    let mut audio_clip = None;
    let (input, transcript) = if is_multipart {
        let multipart = Multipart::from_request(request, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let audio = read_audio(multipart).await?;
        // unknown sessions fail before any provider work
        state.store.load(id)?;
        let transcript = transcribe(&audio, state.stt.as_ref(), state.audio_cap_bytes).await?;
        if transcript.silent {
            return Err(ApiError::unprocessable(
                "empty_input",
                "no speech detected in the audio clip",
            ));
        }
        if state.retain_audio {
            let format = AudioFormat::from_media_type(&audio.media_type).expect("validated by transcribe");
            audio_clip = Some((audio.bytes, format.extension()));
        }
        (
            UserInput::transcribed(transcript.text.clone(), transcript.detected_language.clone()),
            Some(transcript),
        )
    } else {
        let Json(body) = Json::<TextTurn>::from_request(request, &())
            .await
            .map_err(ApiError::from)?;
        (UserInput::typed(body.text), None)
    };

    let (session, outcome) = run_turn(&state.store, id, &input, state.llm.as_ref(), &state.turn_config).await?;

    if let Some((bytes, ext)) = audio_clip {
        let message_id = session
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User && m.modality == Modality::AudioTranscribed)
            .map(|m| m.id);
        if let Some(message_id) = message_id {
            if let Err(e) = state.store.save_audio(id, message_id, ext, &bytes) {
                tracing::warn!(error = %e, "could not retain audio clip");
            }
        }
    }

    let response = TurnResponse {
        session_id: id,
        assistant_text: outcome.assistant_text,
        status: session.status,
        phase: session.state.phase,
        progress: session.state.progress(&state.catalog).ok(),
        tool_calls: outcome.tool_trace.len(),
        transcript,
    };
    if stream {
        return Ok(stream_turn(response).into_response());
    }
    Ok(Json(response).into_response())
}

/// Relays a committed turn as server-sent events: `delta` chunks of the
/// assistant text followed by one `done` event carrying the full response.
fn stream_turn(response: TurnResponse) -> Sse<impl futures::Stream<Item = Result<Event, Infallible>>> {
    let mut events: Vec<Result<Event, Infallible>> = response
        .assistant_text
        .split_inclusive(char::is_whitespace)
        .collect::<Vec<_>>()
        .chunks(8)
        .map(|words| Ok(Event::default().event("delta").data(words.concat())))
        .collect();
    let done = Event::default()
        .event("done")
        .json_data(&response)
        .expect("turn response serializes");
    events.push(Ok(done));
    Sse::new(futures::stream::iter(events))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    #[serde(default)]
    score: bool,
}

async fn make_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Json<Report>, ApiError> {
    let id = parse_id(&id)?;
    let Query(q) = query?;
    let rubric = q.score.then_some(state.rubric.as_ref());
    let report = create_report(&state.store, id, state.llm.as_ref(), &state.turn_config.model, rubric).await?;
    Ok(Json(report))
}

async fn get_report(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Report>, ApiError> {
    let id = parse_id(&id)?;
    state.store.load(id)?;
    state.store.load_report(id)?.map(Json).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "no_report",
            "no report generated for this session yet",
        )
    })
}
