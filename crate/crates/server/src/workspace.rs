//! The single on-disk workspace shared by the server and the command-line
//! tool: one dataset, any number of trained models, the active model and its
//! decoding, and the subgroup store.
//!
//! Layout under the data directory:
//!
//! ```text
//! dataset/{schema.json, visits.csv, statics.csv, events.csv}
//! models/<model id>.json
//! workspace.json        (active model + subgroups; path overridable)
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dpvis_core::analytics::Scope;
use dpvis_core::data::{self, Dataset, VariableRole};
use dpvis_core::hmm::{self, Decoding, EmissionKind, HmmConfig, HmmModel, TransitionMask};
use dpvis_core::json;
use dpvis_core::query::{EvalContext, SubgroupFile, SubgroupStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const WORKSPACE_FILE: &str = "workspace.json";
pub const WORKSPACE_FORMAT: &str = "dpvis-workspace";
pub const WORKSPACE_VERSION: u32 = 1;
const DATASET_DIR: &str = "dataset";
const MODELS_DIR: &str = "models";

/// Named transition mask or an explicit 0/1 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSpec {
    Named(MaskName),
    Matrix(Vec<Vec<u8>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskName {
    Full,
    Forward,
}

impl MaskSpec {
    pub fn to_mask(&self, k: usize) -> TransitionMask {
        match self {
            MaskSpec::Named(MaskName::Full) => TransitionMask::full(k),
            MaskSpec::Named(MaskName::Forward) => TransitionMask::forward(k),
            MaskSpec::Matrix(rows) => TransitionMask::from_rows(rows.clone()),
        }
    }
}

/// Training settings other than the number of states. Every field has a
/// default, so `{}` is a valid value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub mask: MaskSpec,
    pub restarts: usize,
    pub seed: u64,
    /// Months per grid step.
    pub time_unit: f64,
    /// Emission variables; all dynamic observed variables when absent.
    pub variables: Option<Vec<String>>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub variance_floor: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let base = HmmConfig::new(1, BTreeMap::new());
        TrainOptions {
            mask: MaskSpec::Named(MaskName::Full),
            restarts: base.restarts,
            seed: base.seed,
            time_unit: base.time_unit,
            variables: None,
            max_iters: base.max_iters,
            rel_tol: base.rel_tol,
            variance_floor: base.variance_floor,
        }
    }
}

impl TrainOptions {
    /// Full model configuration for `k` states on `ds`. Emission families
    /// follow the variable kinds: Bernoulli for binary, Gaussian otherwise.
    pub fn config(&self, ds: &Dataset, k: usize) -> Result<HmmConfig> {
        let names: Vec<String> = match &self.variables {
            Some(v) => v.clone(),
            None => ds
                .variables_with_role(VariableRole::DynamicObserved)
                .map(|v| v.name.clone())
                .collect(),
        };
        let mut emissions = BTreeMap::new();
        for name in names {
            let var = ds
                .variable(&name)
                .filter(|v| v.role == VariableRole::DynamicObserved)
                .ok_or_else(|| hmm::HmmError::UnknownVariable(name.clone()))?;
            emissions.insert(name, EmissionKind::for_kind(var.kind));
        }
        let mut cfg = HmmConfig::new(k, emissions)
            .with_mask(self.mask.to_mask(k))
            .with_seed(self.seed)
            .with_restarts(self.restarts);
        cfg.time_unit = self.time_unit;
        cfg.max_iters = self.max_iters;
        cfg.rel_tol = self.rel_tol;
        cfg.variance_floor = self.variance_floor;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub n_states: usize,
    #[serde(flatten)]
    pub options: TrainOptions,
}

/// Content-derived model id: `m` plus the first 12 hex digits of the SHA-256
/// of the model's canonical JSON. Retraining with the same inputs yields the
/// same id.
pub fn model_id(model: &HmmModel) -> Result<String> {
    let digest = Sha256::digest(model.to_json()?.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(format!("m{hex}"))
}

#[derive(Serialize, Deserialize)]
struct WorkspaceFile {
    format: String,
    version: u32,
    active_model: Option<String>,
    subgroups: SubgroupStore,
}

/// Summary row for model listings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub n_states: usize,
    pub variables: Vec<String>,
    pub train_loglik: f64,
    pub active: bool,
}

/// Immutable-by-convention snapshot of the workspace. Cloning is cheap: the
/// dataset, models and decoding are shared.
#[derive(Debug, Clone)]
pub struct Workspace {
    dir: PathBuf,
    state_file: PathBuf,
    pub dataset: Option<Arc<Dataset>>,
    pub models: BTreeMap<String, Arc<HmmModel>>,
    pub active: Option<String>,
    /// Decoding of the dataset under the active model.
    pub decoding: Option<Arc<Decoding>>,
    pub subgroups: SubgroupStore,
}

impl Workspace {
    /// Opens (or starts) the workspace under `dir`. `state_file` defaults to
    /// `dir/workspace.json`.
    pub fn open(dir: &Path, state_file: Option<&Path>) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let state_file = state_file.map_or_else(|| dir.join(WORKSPACE_FILE), Path::to_path_buf);
        let dataset_dir = dir.join(DATASET_DIR);
        let dataset = if dataset_dir.join(data::SCHEMA_FILE).exists() {
            Some(Arc::new(data::ingest_dir(&dataset_dir)?))
        } else {
            None
        };
        let mut models = BTreeMap::new();
        let models_dir = dir.join(MODELS_DIR);
        if models_dir.is_dir() {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&models_dir)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            paths.sort();
            for path in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
                let model = HmmModel::from_json(&std::fs::read_to_string(&path)?)?;
                let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                models.insert(id, Arc::new(model));
            }
        }
        let (active, subgroups) = if state_file.exists() {
            let file: WorkspaceFile = serde_json::from_str(&std::fs::read_to_string(&state_file)?)
                .map_err(|e| Error::Workspace(format!("{}: {e}", state_file.display())))?;
            if file.format != WORKSPACE_FORMAT || file.version != WORKSPACE_VERSION {
                return Err(Error::Workspace(format!(
                    "{}: unsupported format {} version {}",
                    state_file.display(),
                    file.format,
                    file.version
                )));
            }
            (file.active_model, file.subgroups)
        } else {
            (None, SubgroupStore::new())
        };
        let mut ws = Workspace {
            dir: dir.to_path_buf(),
            state_file,
            dataset,
            models,
            active: None,
            decoding: None,
            subgroups,
        };
        if let Some(id) = active {
            if ws.models.contains_key(&id) && ws.dataset.is_some() {
                ws.active = Some(id);
                ws.decoding = Some(Arc::new(ws.decode_active()?));
            }
        }
        Ok(ws)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state_file(&self) -> &Path {
        &self.state_file
    }

    pub fn dataset(&self) -> Result<&Dataset> {
        self.dataset.as_deref().ok_or(Error::NoDataset)
    }

    /// Fails with `NoDataset` before `NoActiveModel`, since a model can only
    /// be decoded against data.
    pub fn decoding(&self) -> Result<&Decoding> {
        self.dataset()?;
        self.decoding.as_deref().ok_or(Error::NoActiveModel)
    }

    pub fn model(&self, id: &str) -> Result<&Arc<HmmModel>> {
        self.models.get(id).ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn active_model(&self) -> Result<(&str, &HmmModel)> {
        let id = self.active.as_deref().ok_or(Error::NoActiveModel)?;
        Ok((id, self.model(id)?))
    }

    pub fn model_infos(&self) -> Vec<ModelInfo> {
        self.models
            .iter()
            .map(|(id, m)| ModelInfo {
                id: id.clone(),
                n_states: m.n_states(),
                variables: m.config.variables(),
                train_loglik: m.train_loglik,
                active: self.active.as_deref() == Some(id),
            })
            .collect()
    }

    /// Subjects of a subgroup, or everyone.
    pub fn scope(&self, subgroup: Option<u64>) -> Result<Scope> {
        match subgroup {
            None => Ok(Scope::all()),
            Some(id) => Ok(Scope::subjects(self.subgroups.get(id)?.members.clone())),
        }
    }

    pub fn eval_context(&self) -> Result<EvalContext<'_>> {
        Ok(EvalContext::new(self.dataset()?, self.decoding.as_deref()))
    }

    fn compatible(&self, id: &str, model: &HmmModel) -> Result<()> {
        let ds = self.dataset()?;
        for var in model.config.emissions.keys() {
            if !ds.variable(var).is_some_and(|v| v.role == VariableRole::DynamicObserved) {
                return Err(Error::IncompatibleModel {
                    model: id.to_string(),
                    reason: format!("variable `{var}` is not an observed variable of the dataset"),
                });
            }
        }
        Ok(())
    }

    fn decode_active(&self) -> Result<Decoding> {
        let (id, model) = self.active_model()?;
        self.compatible(id, model)?;
        Ok(Decoding {
            model_id: Some(id.to_string()),
            n_states: model.n_states(),
            subjects: hmm::decode(model, self.dataset()?),
        })
    }

    /// Recomputes subgroup members against the current data; failures leave
    /// the subgroup empty and are logged.
    fn refresh_subgroups(&mut self) {
        let Some(ds) = self.dataset.clone() else { return };
        let ctx = EvalContext::new(&ds, self.decoding.as_deref());
        for (id, err) in self.subgroups.refresh_all(&ctx) {
            log::warn!("subgroup {id} emptied: {err}");
        }
    }

    /// Replaces the dataset. The active model stays active when its variables
    /// still exist; otherwise no model is active.
    pub fn set_dataset(&mut self, ds: Dataset) -> Result<()> {
        ds.validate()?;
        let dir = self.dir.join(DATASET_DIR);
        let tmp = self.dir.join(format!("{DATASET_DIR}.tmp"));
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp)?;
        }
        std::fs::create_dir_all(&tmp)?;
        data::export_dir(&ds, &tmp)?;
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::rename(&tmp, &dir)?;
        self.dataset = Some(Arc::new(ds));
        self.decoding = None;
        if self.active.is_some() {
            match self.decode_active() {
                Ok(d) => self.decoding = Some(Arc::new(d)),
                Err(e) => {
                    log::warn!("deactivating model: {e}");
                    self.active = None;
                }
            }
        }
        self.refresh_subgroups();
        self.save_state()
    }

    /// Stores a model and returns its id.
    pub fn add_model(&mut self, model: HmmModel) -> Result<String> {
        let id = model_id(&model)?;
        let dir = self.dir.join(MODELS_DIR);
        std::fs::create_dir_all(&dir)?;
        json::write_atomic(&dir.join(format!("{id}.json")), &model_document(&model)?)?;
        self.models.insert(id.clone(), Arc::new(model));
        Ok(id)
    }

    /// Makes `id` the active model, decodes the dataset under it and
    /// refreshes every subgroup.
    pub fn activate(&mut self, id: &str) -> Result<()> {
        let model = self.model(id)?.clone();
        self.compatible(id, &model)?;
        let previous = self.active.replace(id.to_string());
        match self.decode_active() {
            Ok(d) => self.decoding = Some(Arc::new(d)),
            Err(e) => {
                self.active = previous;
                return Err(e);
            }
        }
        self.refresh_subgroups();
        self.save_state()
    }

    /// Imports exported subgroups and re-evaluates their filters against the
    /// current dataset and model, then persists the store.
    pub fn import_subgroups(&mut self, file: SubgroupFile) -> Result<Vec<u64>> {
        let ids = self.subgroups.import(file)?;
        self.refresh_subgroups();
        self.save_state()?;
        Ok(ids)
    }

    pub fn save_state(&self) -> Result<()> {
        if let Some(parent) = self.state_file.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = WorkspaceFile {
            format: WORKSPACE_FORMAT.to_string(),
            version: WORKSPACE_VERSION,
            active_model: self.active.clone(),
            subgroups: self.subgroups.clone(),
        };
        Ok(json::write_atomic(&self.state_file, &file)?)
    }
}

/// The model's versioned JSON document as a value, for embedding in responses.
pub fn model_document(model: &HmmModel) -> Result<serde_json::Value> {
    serde_json::from_str(&model.to_json()?).map_err(|e| Error::Workspace(e.to_string()))
}
