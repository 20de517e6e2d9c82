//! Axum routes. Reads take the current workspace snapshot without waiting;
//! every mutation runs behind a single writer gate on a private copy that is
//! swapped in only once it has been persisted, so readers never observe a
//! half-applied change or a mix of two models.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use dpvis_core::data;
use dpvis_core::hmm::{self, CvTable};
use dpvis_core::json;
use dpvis_core::query::{FilterExpr, SubgroupFile};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorDetail, Result};
use crate::views::{self, AggregateParams, PatternParams, QueryBody};
use crate::workspace::{model_document, TrainOptions, TrainSpec, Workspace};

/// Upload limit for dataset files.
const MAX_BODY_BYTES: usize = 256 << 20;

#[derive(Clone)]
pub struct AppState {
    shared: Arc<Shared>,
}

struct Shared {
    snapshot: RwLock<Arc<Workspace>>,
    gate: tokio::sync::Mutex<()>,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u64,
    pub status: JobStatus,
    pub n_states: usize,
    pub model_id: Option<String>,
    pub error: Option<ErrorDetail>,
}

impl AppState {
    pub fn new(ws: Workspace) -> Self {
        AppState {
            shared: Arc::new(Shared {
                snapshot: RwLock::new(Arc::new(ws)),
                gate: tokio::sync::Mutex::new(()),
                jobs: Mutex::new(BTreeMap::new()),
                next_job: AtomicU64::new(1),
            }),
        }
    }

    /// The current consistent view of the workspace.
    pub fn snapshot(&self) -> Arc<Workspace> {
        self.shared.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Applies `f` to a copy of the workspace under the writer gate and
    /// publishes the copy if `f` succeeds.
    async fn mutate<R, F>(&self, f: F) -> Result<R>
    where
        F: FnOnce(&mut Workspace) -> Result<R> + Send + 'static,
        R: Send + 'static,
    {
        let _gate = self.shared.gate.lock().await;
        let mut ws = (*self.snapshot()).clone();
        let (ws, out) = tokio::task::spawn_blocking(move || {
            let out = f(&mut ws);
            (ws, out)
        })
        .await
        .map_err(|e| Error::Workspace(format!("worker failed: {e}")))?;
        let out = out?;
        *self.shared.snapshot.write().expect("snapshot lock poisoned") = Arc::new(ws);
        Ok(out)
    }

    fn set_job(&self, job: Job) {
        self.shared.jobs.lock().expect("job lock poisoned").insert(job.id, job);
    }
}

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        if self.status() >= 500 {
            log::error!("{self}");
        }
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        respond(status, &self.body())
    }
}

/// Canonical JSON response.
fn respond<T: Serialize>(status: StatusCode, value: &T) -> Response {
    match json::to_canonical_string(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => Error::Workspace(e.to_string()).into_response(),
    }
}

fn ok<T: Serialize>(value: &T) -> Response {
    respond(StatusCode::OK, value)
}

fn parse_body<T: DeserializeOwned>(body: &str) -> Result<T> {
    serde_json::from_str(body).map_err(|e| Error::BadRequest(format!("invalid request body: {e}")))
}

/// Query-string parameters accepted by the view endpoints.
#[derive(Debug, Default, Deserialize)]
struct Params {
    subgroup: Option<u64>,
    anchor: Option<usize>,
    bin: Option<f64>,
    event: Option<String>,
    subject: Option<String>,
    min_support: Option<usize>,
    top: Option<usize>,
    collapse: Option<bool>,
}

fn params(q: std::result::Result<Query<Params>, QueryRejection>) -> Result<Params> {
    q.map(|Query(p)| p).map_err(|e| Error::BadRequest(e.body_text()))
}

type Q = std::result::Result<Query<Params>, QueryRejection>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { ok(&serde_json::json!({"status": "ok"})) }))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/current", get(current_dataset))
        .route("/models", get(list_models))
        .route("/models/train", post(train))
        .route("/models/cv", post(cross_validate))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/activate", post(activate))
        .route("/jobs/{id}", get(get_job))
        .route("/decode", get(decode))
        .route("/summary/features", get(features))
        .route("/chord", get(chord))
        .route("/pathways/visit", get(pathways_visit))
        .route("/pathways/time", get(pathways_time))
        .route("/pathways/bipartite", get(pathways_bipartite))
        .route("/pathways/waterfall", get(pathways_waterfall))
        .route("/kde", get(kde))
        .route("/patterns", get(patterns))
        .route("/aggregates", get(aggregates))
        .route("/query", post(run_query))
        .route("/subgroups", get(list_subgroups).post(create_subgroup))
        .route("/subgroups/import-static", post(import_static))
        .route("/subgroups/export", get(export_subgroups))
        .route("/subgroups/import", post(import_subgroups))
        .route(
            "/subgroups/{id}",
            get(get_subgroup).patch(rename_subgroup).delete(delete_subgroup),
        )
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn upload_dataset(State(state): State<AppState>, mut form: Multipart) -> Result<Response> {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| Error::BadRequest(format!("multipart: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| Error::BadRequest(format!("multipart field `{name}`: {e}")))?;
        files.insert(name, bytes.to_vec());
    }
    let take = |name: &str| files.get(name).cloned();
    let schema = take("schema").ok_or_else(|| Error::BadRequest("missing `schema` part".into()))?;
    let visits = take("visits").ok_or_else(|| Error::BadRequest("missing `visits` part".into()))?;
    let statics = take("statics").unwrap_or_else(|| b"subject_id\n".to_vec());
    let events = take("events").unwrap_or_else(|| b"subject_id,event_name,age_months\n".to_vec());
    let schema: Vec<data::VariableSchema> = serde_json::from_slice(&schema).map_err(data::DataError::from)?;
    let ds = data::ingest_readers(visits.as_slice(), statics.as_slice(), events.as_slice(), &schema)?;
    let info = state
        .mutate(move |ws| {
            ws.set_dataset(ds)?;
            views::dataset_info(ws)
        })
        .await?;
    Ok(ok(&info))
}

async fn current_dataset(State(state): State<AppState>) -> Result<Response> {
    Ok(ok(&views::dataset_info(&state.snapshot())?))
}

async fn list_models(State(state): State<AppState>) -> Response {
    let ws = state.snapshot();
    ok(&serde_json::json!({ "active": ws.active, "models": ws.model_infos() }))
}

async fn get_model(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let ws = state.snapshot();
    Ok(ok(&model_document(ws.model(&id)?)?))
}

#[derive(Deserialize)]
struct TrainRequest {
    #[serde(flatten)]
    spec: TrainSpec,
    /// Make the trained model active (default true).
    #[serde(default)]
    activate: Option<bool>,
}

async fn train(State(state): State<AppState>, body: String) -> Result<Response> {
    let TrainRequest { spec, activate } = parse_body(&body)?;
    let ws = state.snapshot();
    let cfg = spec.options.config(ws.dataset()?, spec.n_states)?;
    let dataset = ws.dataset.clone().ok_or(Error::NoDataset)?;
    let id = state.shared.next_job.fetch_add(1, Ordering::SeqCst);
    let job = Job {
        id,
        status: JobStatus::Running,
        n_states: spec.n_states,
        model_id: None,
        error: None,
    };
    state.set_job(job.clone());
    let runner = state.clone();
    tokio::spawn(async move {
        let trained = tokio::task::spawn_blocking(move || hmm::train(&dataset, &cfg))
            .await
            .map_err(|e| Error::Workspace(format!("training worker failed: {e}")))
            .and_then(|r| r.map_err(Error::from));
        let stored = match trained {
            Ok(model) => {
                runner
                    .mutate(move |ws| {
                        let id = ws.add_model(model)?;
                        if activate.unwrap_or(true) {
                            ws.activate(&id)?;
                        }
                        Ok(id)
                    })
                    .await
            }
            Err(e) => Err(e),
        };
        let mut done = Job { ..job };
        match stored {
            Ok(model_id) => {
                log::info!("job {id}: trained model {model_id}");
                done.status = JobStatus::Succeeded;
                done.model_id = Some(model_id);
            }
            Err(e) => {
                log::warn!("job {id} failed: {e}");
                done.status = JobStatus::Failed;
                done.error = Some(e.body().error);
            }
        }
        runner.set_job(done);
    });
    Ok(respond(StatusCode::ACCEPTED, &serde_json::json!({ "job_id": id, "status": JobStatus::Running })))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response> {
    let jobs = state.shared.jobs.lock().expect("job lock poisoned");
    let job = jobs.get(&id).ok_or(Error::UnknownJob(id))?;
    Ok(ok(job))
}

/// Either explicit `configs`, or `states` sharing one set of `options`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CvRequest {
    #[serde(default)]
    configs: Vec<TrainSpec>,
    #[serde(default)]
    states: Vec<usize>,
    #[serde(default)]
    options: TrainOptions,
    #[serde(default = "default_folds")]
    folds: usize,
    /// Fold-assignment seed; defaults to the first configuration's seed.
    seed: Option<u64>,
}

fn default_folds() -> usize {
    5
}

async fn cross_validate(State(state): State<AppState>, body: String) -> Result<Response> {
    let req: CvRequest = parse_body(&body)?;
    let ws = state.snapshot();
    let dataset = ws.dataset.clone().ok_or(Error::NoDataset)?;
    let mut specs = req.configs;
    specs.extend(req.states.iter().map(|&n_states| TrainSpec {
        n_states,
        options: req.options.clone(),
    }));
    if specs.is_empty() {
        return Err(Error::BadRequest("give `configs` or `states`".into()));
    }
    let cfgs = specs
        .iter()
        .map(|s| s.options.config(&dataset, s.n_states))
        .collect::<Result<Vec<_>>>()?;
    let seed = req.seed.unwrap_or(specs[0].options.seed);
    let folds = req.folds;
    let table: CvTable = tokio::task::spawn_blocking(move || hmm::cross_validate(&dataset, &cfgs, folds, seed))
        .await
        .map_err(|e| Error::Workspace(format!("cross-validation worker failed: {e}")))??;
    Ok(ok(&table))
}

async fn activate(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let active = state
        .mutate(move |ws| {
            ws.activate(&id)?;
            Ok(id)
        })
        .await?;
    Ok(ok(&serde_json::json!({ "active": active })))
}

async fn decode(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::decode(&state.snapshot(), p.subject.as_deref())?))
}

async fn features(State(state): State<AppState>, q: Q) -> Result<Response> {
    Ok(ok(&views::features(&state.snapshot(), params(q)?.subgroup)?))
}

async fn chord(State(state): State<AppState>, q: Q) -> Result<Response> {
    Ok(ok(&views::chord(&state.snapshot(), params(q)?.subgroup)?))
}

async fn pathways_visit(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::pathways_visit(&state.snapshot(), p.subgroup, p.anchor)?))
}

async fn pathways_time(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::pathways_time(&state.snapshot(), p.subgroup, p.bin)?))
}

async fn pathways_bipartite(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::bipartite(&state.snapshot(), p.subgroup, p.event.as_deref())?))
}

async fn pathways_waterfall(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    let ws = state.snapshot();
    // Bundling is CPU-heavy; keep it off the async workers.
    let layout = tokio::task::spawn_blocking(move || views::waterfall(&ws, p.subgroup))
        .await
        .map_err(|e| Error::Workspace(format!("layout worker failed: {e}")))??;
    Ok(ok(&layout))
}

async fn kde(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::kde(&state.snapshot(), p.subgroup, p.event.as_deref())?))
}

fn pattern_params(p: &Params) -> PatternParams {
    let d = PatternParams::default();
    PatternParams {
        min_support: p.min_support.unwrap_or(d.min_support),
        top: p.top.unwrap_or(d.top),
        collapse: p.collapse.unwrap_or(d.collapse),
    }
}

async fn patterns(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    Ok(ok(&views::patterns(&state.snapshot(), p.subgroup, pattern_params(&p))?))
}

async fn aggregates(State(state): State<AppState>, q: Q) -> Result<Response> {
    let p = params(q)?;
    let ws = state.snapshot();
    let ap = AggregateParams {
        anchor: p.anchor,
        bin: p.bin,
        event: p.event.clone(),
        patterns: pattern_params(&p),
    };
    let all = tokio::task::spawn_blocking(move || views::aggregates(&ws, p.subgroup, &ap))
        .await
        .map_err(|e| Error::Workspace(format!("aggregation worker failed: {e}")))??;
    Ok(ok(&all))
}

async fn run_query(State(state): State<AppState>, q: Q, body: String) -> Result<Response> {
    let p = params(q)?;
    let query = QueryBody::parse(&body)?;
    Ok(ok(&views::run_query(&state.snapshot(), p.subgroup, query)?))
}

async fn list_subgroups(State(state): State<AppState>) -> Response {
    let ws = state.snapshot();
    let list: Vec<_> = ws.subgroups.list().cloned().collect();
    ok(&list)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSubgroup {
    name: String,
    filter: serde_json::Value,
}

async fn create_subgroup(State(state): State<AppState>, body: String) -> Result<Response> {
    let req: CreateSubgroup = parse_body(&body)?;
    let filter: FilterExpr = serde_json::from_value(req.filter).map_err(views::invalid_json)?;
    let created = state
        .mutate(move |ws| {
            let ds = ws.dataset.clone().ok_or(Error::NoDataset)?;
            let decoding = ws.decoding.clone();
            let ctx = dpvis_core::query::EvalContext::new(&ds, decoding.as_deref());
            let id = ws.subgroups.create(&ctx, &req.name, filter)?;
            ws.save_state()?;
            Ok(ws.subgroups.get(id)?.clone())
        })
        .await?;
    Ok(respond(StatusCode::CREATED, &created))
}

async fn get_subgroup(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response> {
    Ok(ok(state.snapshot().subgroups.get(id)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Rename {
    name: String,
}

async fn rename_subgroup(State(state): State<AppState>, Path(id): Path<u64>, body: String) -> Result<Response> {
    let Rename { name } = parse_body(&body)?;
    let updated = state
        .mutate(move |ws| {
            ws.subgroups.rename(id, &name)?;
            ws.save_state()?;
            Ok(ws.subgroups.get(id)?.clone())
        })
        .await?;
    Ok(ok(&updated))
}

async fn delete_subgroup(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response> {
    let removed = state
        .mutate(move |ws| {
            let removed = ws.subgroups.delete(id)?;
            ws.save_state()?;
            Ok(removed)
        })
        .await?;
    Ok(ok(&removed))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImportStatic {
    var: String,
}

async fn import_static(State(state): State<AppState>, body: String) -> Result<Response> {
    let ImportStatic { var } = parse_body(&body)?;
    let created = state
        .mutate(move |ws| {
            let ds = ws.dataset.clone().ok_or(Error::NoDataset)?;
            let decoding = ws.decoding.clone();
            let ctx = dpvis_core::query::EvalContext::new(&ds, decoding.as_deref());
            let ids = ws.subgroups.import_from_static(&ctx, &var)?;
            ws.save_state()?;
            ids.iter().map(|&id| Ok(ws.subgroups.get(id)?.clone())).collect::<Result<Vec<_>>>()
        })
        .await?;
    Ok(respond(StatusCode::CREATED, &created))
}

async fn export_subgroups(State(state): State<AppState>) -> Response {
    ok(&state.snapshot().subgroups.export())
}

async fn import_subgroups(State(state): State<AppState>, body: String) -> Result<Response> {
    let file: SubgroupFile = serde_json::from_str(&body).map_err(views::invalid_json)?;
    let ids = state
        .mutate(move |ws| ws.import_subgroups(file))
        .await?;
    Ok(respond(StatusCode::CREATED, &serde_json::json!({ "imported": ids })))
}
