use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::project::{DecisionRequest, Project, ProjectError, StatusFilter};

pub type Projects = Arc<BTreeMap<String, Arc<Project>>>;

pub const DEFAULT_PAGE: usize = 50;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    class: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, class: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            class,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let (status, class) = match &e {
            ProjectError::UnknownCode(_) => (StatusCode::NOT_FOUND, "unknown_code"),
            ProjectError::UnknownJob(_) => (StatusCode::NOT_FOUND, "unknown_job"),
            ProjectError::NotQueued { .. } => (StatusCode::CONFLICT, "not_queued"),
            ProjectError::LeaseHeld { .. } => (StatusCode::CONFLICT, "lease_held"),
            ProjectError::Incomplete(_) => (StatusCode::CONFLICT, "incomplete_review"),
            ProjectError::Invalid(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, class, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.class, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn project(projects: &Projects, id: &str) -> Result<Arc<Project>, ApiError> {
    projects
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_project", format!("unknown project `{id}`")))
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    code: String,
    limit: Option<usize>,
    #[serde(default)]
    offset: usize,
    #[serde(default)]
    status: StatusFilter,
}

#[derive(Debug, Deserialize)]
struct CodeQuery {
    code: String,
}

#[derive(Debug, Deserialize)]
struct LeaseQuery {
    code: String,
    reviewer: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct CodeBody {
    code: String,
}

#[derive(Debug, Serialize)]
struct ProjectSummary {
    id: String,
    codes: Vec<String>,
    units: usize,
}

async fn list_projects(State(projects): State<Projects>) -> Json<Vec<ProjectSummary>> {
    Json(
        projects
            .values()
            .map(|p| ProjectSummary {
                id: p.id.clone(),
                codes: p.codes().to_vec(),
                units: p.corpus().len(),
            })
            .collect(),
    )
}

async fn queue(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    query: Result<Query<QueueQuery>, QueryRejection>,
) -> ApiResult<crate::project::QueuePage> {
    let Query(q) = query?;
    let p = project(&projects, &id)?;
    Ok(Json(p.queue_page(&q.code, q.offset, q.limit.unwrap_or(DEFAULT_PAGE), q.status)?))
}

async fn decide(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    body: Result<Json<DecisionRequest>, JsonRejection>,
) -> ApiResult<crate::project::DecisionAck> {
    let Json(req) = body?;
    let p = project(&projects, &id)?;
    Ok(Json(tokio::task::spawn_blocking(move || p.decide(&req)).await.expect("decision task")?))
}

async fn metrics(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    query: Result<Query<CodeQuery>, QueryRejection>,
) -> ApiResult<crate::project::Metrics> {
    let Query(q) = query?;
    Ok(Json(project(&projects, &id)?.metrics(&q.code)?))
}

async fn retrain(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    body: Result<Json<CodeBody>, JsonRejection>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let Json(req) = body?;
    let p = project(&projects, &id)?;
    let job = p.start_retrain(&req.code)?;
    let job_id = job.clone();
    tokio::task::spawn_blocking(move || p.run_retrain(&job_id, &req.code));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job }))))
}

async fn job(State(projects): State<Projects>, Path((id, job)): Path<(String, String)>) -> ApiResult<crate::project::JobStatus> {
    Ok(Json(project(&projects, &id)?.job(&job)?))
}

async fn merge(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    body: Result<Json<CodeBody>, JsonRejection>,
) -> ApiResult<ethnocode_core::coder::MergeReport> {
    let Json(req) = body?;
    let p = project(&projects, &id)?;
    Ok(Json(tokio::task::spawn_blocking(move || p.merge(&req.code)).await.expect("merge task")?))
}

async fn release(
    State(projects): State<Projects>,
    Path(id): Path<String>,
    query: Result<Query<LeaseQuery>, QueryRejection>,
) -> ApiResult<serde_json::Value> {
    let Query(q) = query?;
    let released = project(&projects, &id)?.release(&q.code, &q.reviewer)?;
    Ok(Json(json!({ "released": released })))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The `/api/v1` routes.
pub fn api_router(projects: Projects) -> Router {
    Router::new()
        .route("/projects", get(list_projects))
        .route("/projects/{id}/queue", get(queue))
        .route("/projects/{id}/decisions", post(decide))
        .route("/projects/{id}/metrics", get(metrics))
        .route("/projects/{id}/retrain", post(retrain))
        .route("/projects/{id}/jobs/{job}", get(job))
        .route("/projects/{id}/merge", post(merge))
        .route("/projects/{id}/lease", delete(release))
        .fallback(api_not_found)
        .with_state(projects)
}
