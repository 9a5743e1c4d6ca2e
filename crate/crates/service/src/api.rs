//! HTTP/JSON endpoints over the session store.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use recourse_core::elicitation::ElicitationError;
use recourse_core::recourse::{ConstraintSet, RecourseError};
use recourse_core::schema::{FeatureKind, SchemaError, UserProfile, Value};
use recourse_core::session::{
    start_session, ConstraintUpdate, EventBody, FinalRecord, Phase, Plan, SessionEnv, SessionError, SessionEvent,
    SessionMode, SessionState,
};

use crate::store::{AppState, StoreError};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", get(get_events))
        .route("/sessions/{id}/rating", post(submit_rating))
        .route("/sessions/{id}/choice", post(submit_choice))
        .route("/sessions/{id}/constraints", post(submit_constraints))
        .route("/sessions/{id}/regenerate", post(regenerate))
        .route("/sessions/{id}/accept", post(accept))
        .route("/schema", get(get_schema))
        .route("/personas", get(get_personas))
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    /// Offending request fields mapped to what is wrong with them.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into(), fields: BTreeMap::new() }
    }

    fn with_field(mut self, field: impl Into<String>) -> Self {
        self.fields.insert(field.into(), self.message.clone());
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

fn schema_field(e: &SchemaError) -> Option<&str> {
    match e {
        SchemaError::UnknownFeature(f)
        | SchemaError::MissingValue(f)
        | SchemaError::NotActionable(f)
        | SchemaError::NoOpAction(f)
        | SchemaError::OutOfDomain { feature: f, .. } => Some(f),
        SchemaError::ActionFailed { source, .. } => schema_field(source),
        _ => None,
    }
}

/// Maps a rejected command to a response; `field` names the request field a
/// bare value error refers to.
fn session_error(e: SessionError, field: Option<&str>) -> ApiError {
    let message = e.to_string();
    match &e {
        SessionError::WrongPhase { .. } | SessionError::WrongMode { .. } => {
            ApiError::new(StatusCode::CONFLICT, "illegal_transition", message)
        }
        SessionError::SchemaMismatch { .. } => ApiError::new(StatusCode::CONFLICT, "schema_mismatch", message),
        SessionError::UnknownPlan(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", message),
        SessionError::FeatureNotProposed(f) => ApiError::invalid(message).with_field(f.clone()),
        SessionError::Schema(s) | SessionError::Recourse(RecourseError::Schema(s)) => match schema_field(s) {
            Some(f) => ApiError::invalid(message).with_field(f),
            None => ApiError::invalid(message),
        },
        SessionError::Recourse(RecourseError::InvalidConstraint { feature, .. }) => {
            ApiError::invalid(message).with_field(feature.clone())
        }
        SessionError::Elicitation(ElicitationError::LikertOutOfRange(_)) => match field {
            Some(f) => ApiError::invalid(message).with_field(f),
            None => ApiError::invalid(message),
        },
        SessionError::AlreadyApproved => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "already_approved", message).with_field("profile")
        }
        _ => ApiError::invalid(message),
    }
}

/// Parses a JSON body, reporting malformed input as a validation failure.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let text = if body.is_empty() { &b"{}"[..] } else { &body[..] };
    serde_json::from_slice(text).map_err(|e| ApiError::invalid(format!("malformed request body: {e}")).with_field("body"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeView {
    pub feature: String,
    pub display_name: String,
    pub from: Value,
    pub to: Value,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub id: String,
    pub cost: f64,
    pub valid: bool,
    pub changes: Vec<ChangeView>,
}

/// What clients see of a session; every field is read off the session state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSessionView {
    pub id: String,
    pub mode: SessionMode,
    pub phase: Phase,
    pub round: u32,
    pub plans: Vec<PlanView>,
    pub constraints: ConstraintSet,
    pub disclosed: Vec<String>,
    /// Point estimate of the cost weights, by feature; guided sessions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated_weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_plan: Option<String>,
    /// Why the session stopped, when it ran out of plans.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

fn plan_view(plan: &Plan, profile: &UserProfile, env: &SessionEnv<'_>) -> PlanView {
    let changes = plan
        .intervention
        .actions()
        .iter()
        .map(|a| {
            let spec = env.schema.feature(&a.feature).expect("plan features belong to the schema");
            let from = profile.get(&a.feature).cloned().expect("profile is complete");
            let unit = match &spec.kind {
                FeatureKind::Numeric { unit, .. } if !unit.is_empty() => format!(" {unit}"),
                _ => String::new(),
            };
            ChangeView {
                feature: a.feature.clone(),
                display_name: spec.display_name.clone(),
                description: format!("Change {} from {from}{unit} to {}{unit}", spec.display_name, a.target),
                from,
                to: a.target.clone(),
            }
        })
        .collect();
    PlanView { id: plan.id.clone(), cost: plan.cost, valid: plan.valid, changes }
}

pub fn session_view(s: &SessionState, env: &SessionEnv<'_>) -> ApiSessionView {
    let message = match s.phase {
        Phase::Exhausted => s.history.iter().rev().find_map(|e| match &e.body {
            EventBody::Error { message, .. } => Some(message.clone()),
            _ => None,
        }),
        _ => None,
    };
    ApiSessionView {
        id: s.id.clone(),
        mode: s.mode,
        phase: s.phase,
        round: s.round,
        plans: s.current_plans.iter().map(|p| plan_view(p, &s.profile, env)).collect(),
        constraints: s.constraints.clone(),
        disclosed: s.disclosed.iter().cloned().collect(),
        estimated_weights: s.posterior.as_ref().map(|_| s.estimated_weights(env).to_named(env.schema)),
        accepted_plan: s.accepted.as_ref().map(|a| a.plan.id.clone()),
        message,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestedMode {
    /// Guided protocol in the server's configured sub-mode.
    Guided,
    GuidedRate,
    GuidedChoice,
    Exploratory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    #[serde(default)]
    pub profile: Option<BTreeMap<String, Value>>,
    #[serde(default)]
    pub persona_name: Option<String>,
    pub mode: RequestedMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRequest {
    pub plan_id: String,
    pub likert: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub plan_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<ApiSessionView>), ApiError> {
    let req: CreateSession = parse(&body)?;
    let profile = match (req.profile, req.persona_name) {
        (Some(values), None) => UserProfile::new(values, &state.schema)
            .map_err(|e| session_error(SessionError::Schema(e), None))?,
        (None, Some(name)) => state
            .personas
            .iter()
            .find(|p| p.name == name)
            .map(|p| p.profile.clone())
            .ok_or_else(|| ApiError::not_found("persona", &name))?,
        _ => {
            return Err(ApiError::invalid("give exactly one of `profile` and `persona_name`")
                .with_field("profile")
                .with_field("persona_name"))
        }
    };
    let mode = match req.mode {
        RequestedMode::Guided => state.guided_sub_mode.session_mode(),
        RequestedMode::GuidedRate => SessionMode::GuidedRate,
        RequestedMode::GuidedChoice => SessionMode::GuidedChoice,
        RequestedMode::Exploratory => SessionMode::Exploratory,
    };
    let seed = state.next_seed();
    let st = state.clone();
    let created = tokio::task::spawn_blocking(move || {
        let env = st.env();
        start_session(profile, mode, &env, st.session_config.clone(), seed).and_then(|s| s.propose(&env))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map_err(|e| session_error(e, None))?;
    if state.get(&created.id).is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "duplicate_session", format!("session `{}` exists", created.id)));
    }
    let view = session_view(&created, &state.env());
    state.insert(created)?;
    Ok((StatusCode::CREATED, Json(view)))
}

/// Runs a command under the session's lock, persists the new events and
/// stores the resulting state.
async fn mutate<F>(state: &Arc<AppState>, id: &str, field: Option<&'static str>, command: F) -> Result<SessionState, ApiError>
where
    F: FnOnce(&SessionState, &SessionEnv<'_>) -> Result<SessionState, SessionError> + Send + 'static,
{
    let lock = state.get(id).ok_or_else(|| ApiError::not_found("session", id))?;
    let guard = lock.lock_owned().await;
    let st = state.clone();
    let (mut guard, result) = tokio::task::spawn_blocking(move || {
        let r = command(&guard, &st.env());
        (guard, r)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?;
    let next = result.map_err(|e| session_error(e, field))?;
    state.persist(id, &next.history[guard.history.len()..])?;
    *guard = next.clone();
    Ok(next)
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ApiSessionView>, ApiError> {
    let lock = state.get(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let s = lock.lock().await;
    Ok(Json(session_view(&s, &state.env())))
}

async fn get_events(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Vec<SessionEvent>>, ApiError> {
    let lock = state.get(&id).ok_or_else(|| ApiError::not_found("session", &id))?;
    let s = lock.lock().await;
    Ok(Json(s.history.clone()))
}

async fn submit_rating(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ApiSessionView>, ApiError> {
    let req: RatingRequest = parse(&body)?;
    let next = mutate(&state, &id, Some("likert"), move |s, env| s.submit_rating(env, &req.plan_id, req.likert)).await?;
    Ok(Json(session_view(&next, &state.env())))
}

async fn submit_choice(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ApiSessionView>, ApiError> {
    let req: PlanRequest = parse(&body)?;
    let next = mutate(&state, &id, None, move |s, env| s.submit_choice(env, &req.plan_id)).await?;
    Ok(Json(session_view(&next, &state.env())))
}

async fn submit_constraints(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<ApiSessionView>, ApiError> {
    let updates: BTreeMap<String, ConstraintUpdate> = parse(&body)?;
    let next = mutate(&state, &id, Some("achievability"), move |s, env| s.submit_constraints(env, &updates)).await?;
    Ok(Json(session_view(&next, &state.env())))
}

async fn regenerate(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ApiSessionView>, ApiError> {
    let next = mutate(&state, &id, None, |s, env| s.regenerate(env).and_then(|s| s.propose(env))).await?;
    Ok(Json(session_view(&next, &state.env())))
}

async fn accept(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<FinalRecord>, ApiError> {
    let req: PlanRequest = parse(&body)?;
    let next = mutate(&state, &id, None, move |s, env| s.accept(env, &req.plan_id)).await?;
    let record = next.final_record().ok_or_else(|| ApiError::internal("accepted session has no final record"))?;
    Ok(Json(record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainView {
    Numeric { min: f64, max: f64, step: f64, unit: String },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureView {
    pub name: String,
    pub display_name: String,
    pub actionable: bool,
    pub domain: DomainView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaView {
    pub version: String,
    pub features: Vec<FeatureView>,
}

async fn get_schema(State(state): State<Arc<AppState>>) -> Json<SchemaView> {
    let features = state
        .schema
        .features()
        .iter()
        .map(|f| FeatureView {
            name: f.name.clone(),
            display_name: f.display_name.clone(),
            actionable: f.actionable,
            domain: match &f.kind {
                FeatureKind::Numeric { min, max, step, unit } => {
                    DomainView::Numeric { min: *min, max: *max, step: *step, unit: unit.clone() }
                }
                FeatureKind::Categorical { options } => DomainView::Categorical { options: options.clone() },
            },
        })
        .collect();
    Json(SchemaView { version: state.schema.version().to_owned(), features })
}

async fn get_personas(State(state): State<Arc<AppState>>) -> Json<Vec<recourse_core::session::Persona>> {
    Json(state.personas.clone())
}
