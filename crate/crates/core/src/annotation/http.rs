//! JSON-over-HTTP interface for the rating UI.
//!
//! | method | path          | auth          |
//! |--------|---------------|---------------|
//! | GET    | `/tasks/next` | rater token   |
//! | POST   | `/ratings`    | rater token   |
//! | GET    | `/progress`   | rater token   |
//! | GET    | `/export`     | admin token   |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}`.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{AnnotationError, AnnotationStore, NextTask, RatingSubmission};

pub type SharedStore = Arc<Mutex<AnnotationStore>>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let message = e.to_string();
        match e {
            AnnotationError::UnknownRater(_) | AnnotationError::UnknownTask(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", message)
            }
            AnnotationError::InvalidScore(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message),
            AnnotationError::NotAssigned { .. } => Self::forbidden(message),
            AnnotationError::Incomplete { missing } => {
                let list: Vec<_> = missing
                    .iter()
                    .map(|(r, t)| json!({"rater_id": r, "company_id": t.company_id, "month": t.month}))
                    .collect();
                Self {
                    details: Some(json!({ "missing": list })),
                    ..Self::new(StatusCode::CONFLICT, "incomplete", message)
                }
            }
            AnnotationError::RaterCount { .. } => Self::new(StatusCode::CONFLICT, "incomplete", message),
            AnnotationError::Roster(_) | AnnotationError::Storage(_) => {
                tracing::error!(error = %message, "annotation store failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code, "message": self.message});
        if let Some(details) = self.details {
            error["details"] = details;
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

/// Resolves the token, then checks it belongs to `rater`.
fn authorize_rater(store: &AnnotationStore, headers: &HeaderMap, rater: &str) -> Result<(), ApiError> {
    let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
    let owner = store.rater_for_token(token).ok_or_else(ApiError::unauthorized)?;
    store.session(rater)?;
    if owner != rater {
        return Err(ApiError::forbidden(format!("token does not belong to rater `{rater}`")));
    }
    Ok(())
}

fn lock(store: &SharedStore) -> std::sync::MutexGuard<'_, AnnotationStore> {
    store.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Deserialize)]
pub struct RaterQuery {
    rater: String,
}

async fn next_task(State(store): State<SharedStore>, headers: HeaderMap, Query(q): Query<RaterQuery>) -> ApiResult {
    let mut store = lock(&store);
    authorize_rater(&store, &headers, &q.rater)?;
    let body = match store.next_task(&q.rater)? {
        NextTask::Task {
            dossier,
            rubric,
            progress,
        } => json!({
            "status": "task",
            "task": AnnotationStore::task_view(dossier),
            "rubric": rubric,
            "progress": progress,
        }),
        NextTask::Done { progress } => json!({"status": "done", "progress": progress}),
    };
    Ok(Json(body).into_response())
}

async fn submit(
    State(store): State<SharedStore>,
    headers: HeaderMap,
    body: Result<Json<RatingSubmission>, JsonRejection>,
) -> ApiResult {
    let Json(sub) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", e.body_text()))?;
    let mut store = lock(&store);
    authorize_rater(&store, &headers, &sub.rater_id)?;
    let ack = store.submit(sub)?;
    Ok(Json(json!({"status": "ok", "seq": ack.seq, "overwritten": ack.overwritten, "progress": ack.progress})).into_response())
}

async fn progress(State(store): State<SharedStore>, headers: HeaderMap, Query(q): Query<RaterQuery>) -> ApiResult {
    let store = lock(&store);
    authorize_rater(&store, &headers, &q.rater)?;
    let p = store.progress(&q.rater)?;
    Ok(Json(json!({"rater_id": q.rater, "completed": p.completed, "total": p.total})).into_response())
}

async fn export(State(store): State<SharedStore>, headers: HeaderMap) -> ApiResult {
    let store = lock(&store);
    let token = bearer(&headers).ok_or_else(ApiError::unauthorized)?;
    if !store.is_admin_token(token) {
        return Err(if store.rater_for_token(token).is_some() {
            ApiError::forbidden("export requires the admin token")
        } else {
            ApiError::unauthorized()
        });
    }
    Ok(Json(store.export_assessments()?).into_response())
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/tasks/next", get(next_task))
        .route("/ratings", post(submit))
        .route("/progress", get(progress))
        .route("/export", get(export))
        .fallback(fallback)
        .with_state(store)
}

/// Binds and serves until the process is stopped.
pub async fn serve(store: AnnotationStore, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "annotation service listening");
    axum::serve(listener, router(Arc::new(Mutex::new(store)))).await
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::tests::{roster, tasks};
    use axum::body::Body;
    use axum::http::Request;
    use http_body_util::BodyExt;
    use tower::ServiceExt;

    fn app(n: u32) -> (Router, Vec<crate::dossier::MonthlyDossier>) {
        let t = tasks(n);
        let store = AnnotationStore::in_memory(t.clone(), &roster()).unwrap();
        (router(Arc::new(Mutex::new(store))), t)
    }

    async fn call(app: &Router, req: Request<Body>) -> (StatusCode, serde_json::Value) {
        let resp = app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap())
    }

    fn get(uri: &str, token: Option<&str>) -> Request<Body> {
        let mut b = Request::get(uri);
        if let Some(t) = token {
            b = b.header("authorization", format!("Bearer {t}"));
        }
        b.body(Body::empty()).unwrap()
    }

    fn post(token: &str, body: serde_json::Value) -> Request<Body> {
        Request::post("/ratings")
            .header("authorization", format!("Bearer {token}"))
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap()
    }

    #[tokio::test]
    async fn next_task_and_progress() {
        let (app, t) = app(2);
        let (s, v) = call(&app, get("/tasks/next?rater=expert-a", Some("ta"))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["status"], "task");
        assert_eq!(v["task"]["month"], t[0].month.to_string());
        assert_eq!(v["rubric"]["criteria"].as_array().unwrap().len(), 5);
        assert_eq!(v["progress"], json!({"completed": 0, "total": 2}));
        let (_, v) = call(&app, get("/progress?rater=expert-a", Some("ta"))).await;
        assert_eq!(v["completed"], 0);
    }

    #[tokio::test]
    async fn auth_and_error_shapes() {
        let (app, _) = app(1);
        let (s, v) = call(&app, get("/tasks/next?rater=expert-a", None)).await;
        assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("unauthorized")));
        let (s, _) = call(&app, get("/tasks/next?rater=expert-a", Some("nope"))).await;
        assert_eq!(s, StatusCode::UNAUTHORIZED);
        let (s, v) = call(&app, get("/tasks/next?rater=expert-b", Some("ta"))).await;
        assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::FORBIDDEN, Some("forbidden")));
        let (s, v) = call(&app, get("/tasks/next?rater=ghost", Some("ta"))).await;
        assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
        let (s, _) = call(&app, get("/export", Some("ta"))).await;
        assert_eq!(s, StatusCode::FORBIDDEN);
    }

    #[tokio::test]
    async fn submit_flow_and_export() {
        let (app, t) = app(1);
        let body = |r: &str, score: i64| {
            json!({"rater_id": r, "company_id": t[0].company_id, "month": t[0].month, "score": score})
        };
        let (s, v) = call(&app, post("ta", body("expert-a", 6))).await;
        assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation")));
        let (s, v) = call(&app, post("ta", body("expert-a", 4))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["progress"], json!({"completed": 1, "total": 1}));
        let (_, v) = call(&app, get("/tasks/next?rater=expert-a", Some("ta"))).await;
        assert_eq!(v["status"], "done");

        let (s, v) = call(&app, get("/export", Some("admin"))).await;
        assert_eq!(s, StatusCode::CONFLICT);
        assert_eq!(v["error"]["details"]["missing"][0]["rater_id"], "expert-b");

        call(&app, post("tb", body("expert-b", 4))).await;
        let (s, v) = call(&app, get("/export", Some("admin"))).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["assessments"][0]["consensus"], 4);
        assert_eq!(v["inter_rater"]["agreement"], 1.0);
    }

    #[tokio::test]
    async fn malformed_body_is_a_validation_error() {
        let (app, _) = app(1);
        let req = Request::post("/ratings")
            .header("authorization", "Bearer ta")
            .header("content-type", "application/json")
            .body(Body::from("{not json"))
            .unwrap();
        let (s, v) = call(&app, req).await;
        assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("validation")));
    }
}
