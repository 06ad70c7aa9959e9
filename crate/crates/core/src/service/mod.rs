//! HTTP/JSON service.
//!
//! | route | body | reply |
//! |---|---|---|
//! | `POST /games` | `{worker_id}` | new game: images, points, setting, mode |
//! | `POST /games/{id}/questions` | `{text, request_explanations?}` | round view |
//! | `POST /games/{id}/ratings` | `{level}` | session view |
//! | `POST /games/{id}/guess` | `{image_id}` | outcome, score, secret |
//! | `GET /games/{id}` | | session view |
//! | `POST /answer` | answer request | answer response (backend wire protocol) |
//!
//! State-changing routes accept an optional `request_token`; a retried
//! request with the same token gets the first reply without acting twice.
//! Errors are `{"error": code, "message": text}`.

mod config;
mod store;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::answerer::{AnswerError, AnswerRequest};
use crate::catalog::{CatalogError, ImageSet};
use crate::engine::{Engine, EngineError, ImageRef, SessionState};
use crate::explain::{ExplainError, ExplanationMode, Setting};
use crate::rng::derive_seed;

pub use config::{BackendConfig, ConfigError, ServiceConfig};
pub use store::{ActiveGame, LogSink, SessionStore};
use store::CachedReply;

/// Groups assigned round-robin to new workers.
pub const GROUP_ROTATION: [ExplanationMode; 4] = [
    ExplanationMode::Attention,
    ExplanationMode::RelQas,
    ExplanationMode::Both,
    ExplanationMode::None,
];

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_game", format!("no game {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.code, "message": self.message})),
        )
            .into_response()
    }
}

fn answer_error(e: &AnswerError) -> ApiError {
    let (status, code) = match e {
        AnswerError::UnknownImage(_) => (StatusCode::NOT_FOUND, "unknown_image"),
        AnswerError::EmptyQuestion => (StatusCode::BAD_REQUEST, "empty_question"),
        AnswerError::Unavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable"),
        AnswerError::Protocol(_) => (StatusCode::BAD_GATEWAY, "backend_protocol"),
    };
    ApiError::new(status, code, e.to_string())
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        use StatusCode as S;
        let (status, code) = match &e {
            EngineError::WrongState { .. } => (S::CONFLICT, "wrong_state"),
            EngineError::Finished => (S::CONFLICT, "finished"),
            EngineError::QuestionCap(_) => (S::CONFLICT, "question_cap"),
            EngineError::NotFinished => (S::CONFLICT, "not_finished"),
            EngineError::PlanConflict { .. } => (S::CONFLICT, "plan_conflict"),
            EngineError::EmptyQuestion => (S::BAD_REQUEST, "empty_question"),
            EngineError::RatingOutOfRange(_) => (S::UNPROCESSABLE_ENTITY, "rating_out_of_range"),
            EngineError::ForeignImage(_) => (S::UNPROCESSABLE_ENTITY, "foreign_image"),
            EngineError::Catalog(CatalogError::PoolTooSparse { .. }) => (S::SERVICE_UNAVAILABLE, "pool_error"),
            EngineError::Catalog(_) => (S::SERVICE_UNAVAILABLE, "pool_error"),
            EngineError::Backend(b) => return answer_error(b),
            EngineError::Explain(ExplainError::Embedding(_)) => (S::BAD_REQUEST, "unanswerable_question"),
            EngineError::Explain(_) | EngineError::InvalidConfig(_) => (S::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateGame {
    pub worker_id: String,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GameCreated {
    pub session_id: String,
    pub images: Vec<ImageRef>,
    pub points_remaining: i64,
    pub questions_remaining: u32,
    pub setting: Setting,
    pub explanation_mode: ExplanationMode,
    pub block: u32,
    pub play_index: u32,
}

#[derive(Debug, Deserialize)]
pub struct AskBody {
    pub text: String,
    #[serde(default)]
    pub request_explanations: bool,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct RateBody {
    pub level: u8,
    #[serde(default)]
    pub request_token: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct GuessBody {
    pub image_id: String,
    #[serde(default)]
    pub request_token: Option<String>,
}

/// Shared service state: engine, sessions, log sink.
pub struct App {
    engine: Engine,
    config: ServiceConfig,
    store: Mutex<SessionStore>,
    sink: LogSink,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("views serialize")
}

impl App {
    pub fn new(engine: Engine, config: ServiceConfig) -> std::io::Result<Self> {
        let sink = LogSink::new(config.log_path.as_deref())?;
        Ok(App {
            engine,
            config,
            store: Mutex::new(SessionStore::default()),
            sink,
        })
    }

    pub fn sink(&self) -> &LogSink {
        &self.sink
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn store(&self) -> std::sync::MutexGuard<'_, SessionStore> {
        self.store.lock().expect("store lock")
    }

    /// Run `f` unless `token` has been seen in `scope`, caching its reply.
    fn idempotent(
        &self,
        scope: &str,
        token: Option<&str>,
        f: impl FnOnce() -> Result<(StatusCode, Value), ApiError>,
    ) -> Result<(StatusCode, Value), ApiError> {
        let key = token.map(|t| (scope.to_string(), t.to_string()));
        if let Some(k) = &key {
            let cached = self.store().replies.get(k).cloned();
            if let Some(c) = cached {
                return Ok((StatusCode::from_u16(c.status).expect("cached status"), c.body));
            }
        }
        let (status, body) = f()?;
        if let Some(k) = key {
            self.store().replies.insert(
                k,
                CachedReply {
                    status: status.as_u16(),
                    body: body.clone(),
                },
            );
        }
        Ok((status, body))
    }

    fn game(&self, id: &str) -> Result<Arc<Mutex<ActiveGame>>, ApiError> {
        let store = self.store();
        match store.active.get(id) {
            Some(g) => Ok(g.clone()),
            None if store.finished.contains_key(id) => Err(EngineError::Finished.into()),
            None => Err(ApiError::not_found(id)),
        }
    }

    pub fn create_game(&self, body: CreateGame) -> Result<(StatusCode, Value), ApiError> {
        let worker = body.worker_id.trim().to_string();
        if worker.is_empty() {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "missing_worker", "worker_id is empty"));
        }
        self.idempotent(&format!("games:{worker}"), body.request_token.as_deref(), || {
            let (mode_slot, seed) = {
                let mut store = self.store();
                if let Some(active) = store.workers.get(&worker).and_then(|w| w.active.clone()) {
                    return Err(ApiError::new(
                        StatusCode::CONFLICT,
                        "worker_busy",
                        format!("worker {worker:?} is playing {active}"),
                    ));
                }
                if store.plans.get(&worker).is_none() {
                    let idx = (store.workers_registered as usize + self.config.group_offset) % GROUP_ROTATION.len();
                    store.workers_registered += 1;
                    let (blocks, gpb) = (self.config.blocks, self.config.games_per_block);
                    store.plans.assign(&worker, GROUP_ROTATION[idx], blocks, gpb)?;
                }
                let plan = store.plans.get(&worker).expect("just assigned").clone();
                let played = store.workers.entry(worker.clone()).or_default().games_started;
                let seed = derive_seed(self.config.seed, "service-game", store.games_created);
                store.games_created += 1;
                ((plan.mode, played, plan.slot(played)), seed)
            };
            let (group, play_index, (block, mode)) = mode_slot;
            let session_id = uuid::Uuid::new_v4().to_string();
            let session = self.engine.start_game(self.config.game_config(mode, seed), session_id.clone())?;
            let created = GameCreated {
                session_id: session_id.clone(),
                images: session.images().to_vec(),
                points_remaining: session.points_remaining(),
                questions_remaining: session.questions_remaining(),
                setting: session.config().setting,
                explanation_mode: mode,
                block,
                play_index,
            };
            let mut store = self.store();
            let w = store.workers.entry(worker.clone()).or_default();
            w.games_started += 1;
            w.active = Some(session_id.clone());
            store.active.insert(
                session_id,
                Arc::new(Mutex::new(ActiveGame {
                    session,
                    worker_id: worker.clone(),
                    group,
                    block,
                    play_index,
                })),
            );
            Ok((StatusCode::CREATED, to_value(&created)))
        })
    }

    pub fn ask(&self, id: &str, body: AskBody) -> Result<(StatusCode, Value), ApiError> {
        self.idempotent(&format!("{id}:questions"), body.request_token.as_deref(), || {
            let game = self.game(id)?;
            let mut g = game.lock().expect("session lock");
            let view = self
                .engine
                .ask_question(&mut g.session, &body.text, body.request_explanations)?;
            Ok((StatusCode::OK, to_value(&view)))
        })
    }

    pub fn rate(&self, id: &str, body: RateBody) -> Result<(StatusCode, Value), ApiError> {
        self.idempotent(&format!("{id}:ratings"), body.request_token.as_deref(), || {
            let game = self.game(id)?;
            let mut g = game.lock().expect("session lock");
            g.session.submit_helpfulness_rating(body.level)?;
            Ok((StatusCode::OK, to_value(&g.session.view())))
        })
    }

    /// Guess, then append the log, then retire the session. If the append
    /// fails the finished session stays active and a retried guess appends
    /// again.
    pub fn guess(&self, id: &str, body: GuessBody) -> Result<(StatusCode, Value), ApiError> {
        self.idempotent(&format!("{id}:guess"), body.request_token.as_deref(), || {
            let game = self.game(id)?;
            let mut g = game.lock().expect("session lock");
            if g.session.state() != SessionState::Finished {
                g.session.guess(&body.image_id)?;
            }
            let record = g.session.finalize_log(&g.worker_id, g.group, g.block, g.play_index)?;
            self.sink.append(&record).map_err(|e| {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "log_write_failed", e.to_string())
            })?;
            let view = g.session.view();
            let mut store = self.store();
            store.active.remove(id);
            if let Some(w) = store.workers.get_mut(&g.worker_id) {
                w.active = None;
            }
            store.finished.insert(id.to_string(), view);
            Ok((
                StatusCode::OK,
                json!({
                    "outcome": record.outcome,
                    "score": record.final_score,
                    "guessed_id": record.guess,
                    "secret_id": record.secret_id,
                    "points_spent": record.points_spent,
                }),
            ))
        })
    }

    pub fn view(&self, id: &str) -> Result<(StatusCode, Value), ApiError> {
        let finished = self.store().finished.get(id).map(to_value);
        if let Some(v) = finished {
            return Ok((StatusCode::OK, v));
        }
        let game = self.game(id)?;
        let g = game.lock().expect("session lock");
        Ok((StatusCode::OK, to_value(&g.session.view())))
    }

    pub fn answer(&self, req: AnswerRequest) -> Result<(StatusCode, Value), ApiError> {
        let resp = self.engine.backend().answer(&req).map_err(|e| answer_error(&e))?;
        Ok((StatusCode::OK, to_value(&resp)))
    }

    /// Image set of an active game, for tests and operators.
    pub fn image_set(&self, id: &str) -> Option<ImageSet> {
        let game = self.store().active.get(id).cloned()?;
        let g = game.lock().expect("session lock");
        Some(g.session.image_set().clone())
    }
}

type Reply = Result<(StatusCode, Json<Value>), ApiError>;

async fn blocking(
    app: Arc<App>,
    f: impl FnOnce(&App) -> Result<(StatusCode, Value), ApiError> + Send + 'static,
) -> Reply {
    let (status, body) = tokio::task::spawn_blocking(move || f(&app))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((status, Json(body)))
}

async fn create_game(State(app): State<Arc<App>>, Json(body): Json<CreateGame>) -> Reply {
    blocking(app, move |a| a.create_game(body)).await
}

async fn ask(State(app): State<Arc<App>>, Path(id): Path<String>, Json(body): Json<AskBody>) -> Reply {
    blocking(app, move |a| a.ask(&id, body)).await
}

async fn rate(State(app): State<Arc<App>>, Path(id): Path<String>, Json(body): Json<RateBody>) -> Reply {
    blocking(app, move |a| a.rate(&id, body)).await
}

async fn guess(State(app): State<Arc<App>>, Path(id): Path<String>, Json(body): Json<GuessBody>) -> Reply {
    blocking(app, move |a| a.guess(&id, body)).await
}

async fn view(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply {
    blocking(app, move |a| a.view(&id)).await
}

async fn answer(State(app): State<Arc<App>>, Json(req): Json<AnswerRequest>) -> Reply {
    blocking(app, move |a| a.answer(req)).await
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

pub fn router(app: Arc<App>) -> Router {
    let cors = match app.config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(AllowOrigin::exact(origin)),
        _ => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods(tower_http::cors::Any)
    .allow_headers(tower_http::cors::Any);
    Router::new()
        .route("/health", get(health))
        .route("/games", post(create_game))
        .route("/games/{id}", get(view))
        .route("/games/{id}/questions", post(ask))
        .route("/games/{id}/ratings", post(rate))
        .route("/games/{id}/guess", post(guess))
        .route("/answer", post(answer))
        .layer(cors)
        .with_state(app)
}

/// Bind and serve until ctrl-c.
pub async fn serve(app: Arc<App>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
