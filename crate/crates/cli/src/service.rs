//! HTTP face of the toolkit.
//!
//! Endpoints: `POST /v1/recognize` (raw image bytes, or a JSON document
//! with a base64 image), `POST /v1/patrol` (scenario document), `GET
//! /v1/events?since=SEQ`, and `GET /healthz`. Failures come back as
//! structured `{code, message, stage}` documents.
//!
//! The service is stateless except for the event store and the registry;
//! recognition itself runs on blocking worker threads because the model
//! client and the imaging stack are synchronous by design.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context as _;
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use platewatch_core::config::{AppConfig, Scenario};
use platewatch_core::detection::DetectorKind;
use platewatch_core::imaging::decode_image;
use platewatch_core::notify::{DeliveryStatus, NotifyQueue};
use platewatch_core::patrol::{generate_lot, run_patrol, PatrolContext, PatrolError, SweepPlan};
use platewatch_core::recognizer::{
    build_recognizer, ImageSource, OcrKind, PipelineConfig, RoiVariant, Stage,
};
use platewatch_core::registry::{load_registry, read_events, EventStore, Registry};

struct AppState {
    config: AppConfig,
    config_digest: String,
    registry: Option<Registry>,
    store: EventStore,
}

type Shared = Arc<AppState>;

/// Structured failure: HTTP status plus a `{code, message, stage}` body.
struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    stage: &'static str,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, stage: &'static str, message: impl ToString) -> Self {
        Self {
            status,
            code,
            message: message.to_string(),
            stage,
        }
    }

    fn bad_request(code: &'static str, message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, "service", message)
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "service", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "code": self.code,
            "message": self.message,
            "stage": self.stage,
        });
        (self.status, Json(body)).into_response()
    }
}

/// Loads config, opens the store, loads the registry if configured, binds,
/// and serves until interrupted. Prints the bound address on stdout so
/// callers can use port 0.
pub fn run(config_path: Option<PathBuf>, addr_override: Option<String>) -> anyhow::Result<()> {
    let config = crate::load_config(config_path.as_deref())?;
    // digest of the effective config (canonical JSON of the parsed form,
    // so formatting-only edits don't change identity)
    let canonical = serde_json::to_string(&config)?;
    let config_digest = format!("sha256:{}", hex(&Sha256::digest(canonical.as_bytes())));

    let registry = match &config.paths.registry {
        Some(path) => Some(load_registry(path).with_context(|| format!("registry {}", path.display()))?),
        None => None,
    };
    let store = EventStore::open(&config.paths.events)
        .with_context(|| format!("event log {}", config.paths.events.display()))?;
    let addr = addr_override.unwrap_or_else(|| config.service.addr.clone());
    let state = Arc::new(AppState {
        config,
        config_digest,
        registry,
        store,
    });

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;

        let app = Router::new()
            .route("/v1/recognize", post(recognize))
            .route("/v1/patrol", post(patrol))
            .route("/v1/events", get(events))
            .route("/healthz", get(healthz))
            .with_state(state);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// selectors
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum BackendSel {
    Dual,
    Lmm,
}

#[derive(Clone, Copy)]
struct Selectors {
    backend: BackendSel,
    detector: DetectorKind,
    ocr: OcrKind,
    variant: RoiVariant,
}

impl Default for Selectors {
    fn default() -> Self {
        Self {
            backend: BackendSel::Dual,
            detector: DetectorKind::Heuristic,
            ocr: OcrKind::Baseline,
            variant: RoiVariant::Binary,
        }
    }
}

impl Selectors {
    fn apply(
        &mut self,
        backend: Option<&str>,
        detector: Option<&str>,
        ocr: Option<&str>,
        variant: Option<&str>,
    ) -> Result<(), ApiError> {
        let reject = |field: &str, got: &str, want: &str| {
            ApiError::bad_request("selector", format!("{field} {got:?}: expected one of {want}"))
        };
        if let Some(v) = backend {
            self.backend = match v {
                "dual" => BackendSel::Dual,
                "lmm" => BackendSel::Lmm,
                other => return Err(reject("backend", other, "dual, lmm")),
            };
        }
        if let Some(v) = detector {
            self.detector = match v {
                "oracle" => DetectorKind::Oracle,
                "heuristic" => DetectorKind::Heuristic,
                "external" => DetectorKind::External,
                other => return Err(reject("detector", other, "oracle, heuristic, external")),
            };
        }
        if let Some(v) = ocr {
            self.ocr = match v {
                "baseline" => OcrKind::Baseline,
                "external" => OcrKind::External,
                other => return Err(reject("ocr", other, "baseline, external")),
            };
        }
        if let Some(v) = variant {
            self.variant = match v {
                "original" => RoiVariant::Original,
                "gray" => RoiVariant::Gray,
                "binary" => RoiVariant::Binary,
                other => return Err(reject("variant", other, "original, gray, binary")),
            };
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        match self.backend {
            BackendSel::Dual => PipelineConfig::dual(self.detector, self.ocr, self.variant),
            BackendSel::Lmm => PipelineConfig::lmm(),
        }
    }
}

// ---------------------------------------------------------------------------
// POST /v1/recognize
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RecognizeDoc {
    image_b64: String,
    backend: Option<String>,
    detector: Option<String>,
    ocr: Option<String>,
    variant: Option<String>,
}

async fn recognize(
    State(state): State<Shared>,
    Query(query): Query<HashMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let mut selectors = Selectors::default();
    selectors.apply(
        query.get("backend").map(String::as_str),
        query.get("detector").map(String::as_str),
        query.get("ocr").map(String::as_str),
        query.get("variant").map(String::as_str),
    )?;

    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let image_bytes: Vec<u8> = if is_json {
        let doc: RecognizeDoc = serde_json::from_slice(&body)
            .map_err(|e| ApiError::bad_request("document", format!("recognize document: {e}")))?;
        selectors.apply(
            doc.backend.as_deref(),
            doc.detector.as_deref(),
            doc.ocr.as_deref(),
            doc.variant.as_deref(),
        )?;
        base64::engine::general_purpose::STANDARD
            .decode(doc.image_b64.as_bytes())
            .map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "decode", "decode", format!("image_b64: {e}"))
            })?
    } else {
        body.to_vec()
    };

    let response = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        let img = decode_image(&image_bytes).map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, "decode", "decode", e)
        })?;
        let ctx = state
            .config
            .build_context()
            .map_err(ApiError::internal)?;
        let recognizer =
            build_recognizer(&selectors.pipeline(), &ctx).map_err(ApiError::internal)?;
        let result = recognizer.recognize(&ImageSource::memory(&img));
        match result.plate {
            Ok(plate) => Ok(json!({
                "plate": plate.as_str(),
                "raw_text": result.raw_text,
                "backend": result.backend,
                "time_s": result.elapsed.as_secs_f64(),
                "attempts": result.attempts,
            })),
            Err(failure) => {
                let (status, code) = match failure.stage {
                    Stage::Decode => (StatusCode::BAD_REQUEST, "decode"),
                    Stage::Lmm => (StatusCode::BAD_GATEWAY, "upstream"),
                    _ => (StatusCode::UNPROCESSABLE_ENTITY, "unreadable"),
                };
                Err(ApiError::new(status, code, failure.stage.as_str(), failure.reason))
            }
        }
    })
    .await
    .map_err(|e| ApiError::internal(format!("recognition task: {e}")))??;
    Ok(Json(response))
}

// ---------------------------------------------------------------------------
// POST /v1/patrol
// ---------------------------------------------------------------------------

async fn patrol(State(state): State<Shared>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let scenario: Scenario = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("scenario", format!("scenario document: {e}")))?;
    scenario
        .validate()
        .map_err(|e| ApiError::bad_request("scenario", e))?;

    let response = tokio::task::spawn_blocking(move || -> Result<Value, ApiError> {
        // the scenario may carry its own whitelist; otherwise the
        // service's registry stands in, and with neither we are not ready
        let registry = match &scenario.registry {
            Some(path) => load_registry(path)
                .map_err(|e| ApiError::bad_request("registry", e))?,
            None => state.registry.clone().ok_or_else(|| {
                ApiError::new(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "not_ready",
                    "service",
                    "no registry loaded and the scenario names none",
                )
            })?,
        };
        let lot = generate_lot(
            scenario.n_slots,
            scenario.n_occupied,
            &registry,
            scenario.n_illegal,
            scenario.seed,
        )
        .map_err(|e| match e {
            PatrolError::Infeasible(_) => ApiError::bad_request("scenario", e),
            other => ApiError::internal(other),
        })?;
        let plan = SweepPlan::full_lot(&lot, scenario.angles.clone());
        let ctx = state.config.build_context().map_err(ApiError::internal)?;
        let recognizer =
            build_recognizer(&scenario.pipeline, &ctx).map_err(ApiError::internal)?;
        let queue = scenario.notify.clone().map(NotifyQueue::start);

        // events go to the service's own store so /v1/events sees them
        let first_seq = state.store.next_seq();
        let patrol_ctx = PatrolContext {
            registry: &registry,
            store: &state.store,
            notifier: queue.as_ref(),
            atlas: &ctx.atlas,
            clock_start: scenario.clock_start,
            step_secs: scenario.step_secs,
        };
        let report = run_patrol(&lot, &plan, recognizer.as_ref(), &patrol_ctx)
            .map_err(ApiError::internal)?;
        let last_seq = state.store.next_seq() - 1;

        let notifications = queue.map(|q| {
            let records = q.shutdown();
            let failed = records
                .iter()
                .filter(|r| r.status != DeliveryStatus::Delivered)
                .count();
            json!({ "delivered": records.len() - failed, "failed": failed })
        });
        Ok(json!({
            "report": report,
            "events": {
                "appended": last_seq + 1 - first_seq,
                "first_seq": first_seq,
                "last_seq": last_seq,
            },
            "notifications": notifications,
        }))
    })
    .await
    .map_err(|e| ApiError::internal(format!("patrol task: {e}")))??;
    Ok(Json(response))
}

// ---------------------------------------------------------------------------
// GET /v1/events, GET /healthz
// ---------------------------------------------------------------------------

async fn events(
    State(state): State<Shared>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Json<Value>, ApiError> {
    let since: u64 = match query.get("since") {
        Some(raw) => raw
            .parse()
            .map_err(|_| ApiError::bad_request("query", format!("since {raw:?}: expected a sequence number")))?,
        None => 0,
    };
    let path = state.config.paths.events.clone();
    let stored = tokio::task::spawn_blocking(move || read_events(&path, since))
        .await
        .map_err(|e| ApiError::internal(format!("events task: {e}")))?
        .map_err(ApiError::internal)?;
    Ok(Json(serde_json::to_value(stored).map_err(ApiError::internal)?))
}

async fn healthz(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    if state.registry.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "not_ready",
            "service",
            "registry not loaded",
        ));
    }
    Ok(Json(json!({
        "status": "ok",
        "config_digest": state.config_digest,
        "events_next_seq": state.store.next_seq(),
    })))
}
