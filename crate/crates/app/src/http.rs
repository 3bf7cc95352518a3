//! Generation service.
//!
//! - `GET /api/health`: `ok`
//! - `GET /api/datasets`: `[{"id": ..., "kinds": [...]}]`
//! - `POST /api/generate` with `{"dataset", "kind", "rows", "seed"?}`: a CSV
//!   attachment, or for kind `both` a zip holding a task and a worker CSV
//!   generated independently

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::bundle::ModelBundle;

pub const DEFAULT_ROW_CAP: i64 = 100_000;
/// Bind address variable for `krew serve`, e.g. `0.0.0.0:8080`.
pub const ADDR_ENV: &str = "KREW_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

pub const KINDS: [&str; 2] = ["task", "worker"];

/// Loaded bundles by dataset id, then by kind.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    datasets: BTreeMap<String, BTreeMap<String, Arc<ModelBundle>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dataset: &str, kind: &str, bundle: ModelBundle) -> Result<(), String> {
        if !KINDS.contains(&kind) {
            return Err(format!("kind must be task or worker, got `{kind}`"));
        }
        self.datasets
            .entry(dataset.to_string())
            .or_default()
            .insert(kind.to_string(), Arc::new(bundle));
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    /// Kinds a dataset can serve; `both` when task and worker are present.
    pub fn kinds(&self, dataset: &str) -> Option<Vec<String>> {
        let kinds = self.datasets.get(dataset)?;
        let mut out: Vec<String> = kinds.keys().cloned().collect();
        if KINDS.iter().all(|k| kinds.contains_key(*k)) {
            out.push("both".into());
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub row_cap: i64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            row_cap: DEFAULT_ROW_CAP,
        }
    }
}

struct AppState {
    registry: Registry,
    config: ServiceConfig,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetEntry {
    pub id: String,
    pub kinds: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub dataset: String,
    pub kind: String,
    pub rows: i64,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn router(registry: Registry, config: ServiceConfig) -> Router {
    let state = Arc::new(AppState { registry, config });
    Router::new()
        .route("/api/health", get(|| async { "ok" }))
        .route("/api/datasets", get(datasets))
        .route("/api/generate", post(generate))
        .with_state(state)
}

async fn datasets(State(state): State<Arc<AppState>>) -> Json<Vec<DatasetEntry>> {
    let list = state
        .registry
        .datasets
        .keys()
        .map(|id| DatasetEntry {
            id: id.clone(),
            kinds: state.registry.kinds(id).unwrap_or_default(),
        })
        .collect();
    Json(list)
}

fn fail(status: StatusCode, message: impl Into<String>) -> Response {
    (status, message.into()).into_response()
}

fn attachment(content_type: &str, filename: String, body: Vec<u8>) -> Response {
    (
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (
                header::CONTENT_DISPOSITION,
                format!("attachment; filename=\"{filename}\""),
            ),
        ],
        body,
    )
        .into_response()
}

fn zip_csvs(files: &[(String, String)]) -> zip::result::ZipResult<Vec<u8>> {
    let mut zip = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    let options = zip::write::SimpleFileOptions::default();
    for (name, csv) in files {
        zip.start_file(name.as_str(), options)?;
        zip.write_all(csv.as_bytes())?;
    }
    Ok(zip.finish()?.into_inner())
}

async fn generate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: GenerateRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return fail(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    let Some(kinds) = state.registry.datasets.get(&req.dataset) else {
        return fail(
            StatusCode::NOT_FOUND,
            format!("unknown dataset `{}`", req.dataset),
        );
    };
    let cap = state.config.row_cap;
    if req.rows <= 0 || req.rows > cap {
        return fail(
            StatusCode::BAD_REQUEST,
            format!("rows must be between 1 and {cap}, got {}", req.rows),
        );
    }
    let wanted: Vec<&str> = match req.kind.as_str() {
        "task" | "worker" => vec![req.kind.as_str()],
        "both" => KINDS.to_vec(),
        other => {
            return fail(
                StatusCode::BAD_REQUEST,
                format!("kind must be task, worker or both, got `{other}`"),
            )
        }
    };
    let mut bundles = Vec::new();
    for k in &wanted {
        match kinds.get(*k) {
            Some(b) => bundles.push((k.to_string(), Arc::clone(b))),
            None => {
                return fail(
                    StatusCode::NOT_FOUND,
                    format!("dataset `{}` has no {k} model", req.dataset),
                )
            }
        }
    }
    let rows = req.rows as usize;
    let seed = req.seed.unwrap_or_else(rand::random);
    let job = tokio::task::spawn_blocking(move || {
        bundles
            .into_iter()
            .map(|(k, b)| b.generate_csv(rows, seed).map(|csv| (k, csv)))
            .collect::<crate::Result<Vec<_>>>()
    });
    let csvs = match job.await {
        Ok(Ok(c)) => c,
        Ok(Err(e)) => {
            return fail(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("generation failed: {e}"),
            )
        }
        Err(e) => {
            return fail(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("generation failed: {e}"),
            )
        }
    };
    let name = |kind: &str, ext: &str| format!("{}_{kind}_{rows}.{ext}", req.dataset);
    if req.kind == "both" {
        let files: Vec<(String, String)> = csvs.into_iter().map(|(k, csv)| (name(&k, "csv"), csv)).collect();
        match zip_csvs(&files) {
            Ok(bytes) => attachment("application/zip", name("both", "zip"), bytes),
            Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, format!("zip failed: {e}")),
        }
    } else {
        let (k, csv) = csvs.into_iter().next().expect("one kind requested");
        attachment("text/csv", name(&k, "csv"), csv.into_bytes())
    }
}

/// Serves `registry` until ctrl-c.
pub async fn serve(registry: Registry, config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(registry, config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
