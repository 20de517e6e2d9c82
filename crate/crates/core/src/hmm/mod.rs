//! Constrained hidden Markov models over a discretized age grid.
//!
//! Visits are placed on a uniform grid of `time_unit` months; grid steps
//! without a visit are fully missing and contribute an emission factor of 1.
//! This approximates a continuous-time chain and is exact for the discretized
//! one, which is what every routine here computes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::VariableKind;

pub mod cv;
pub mod grid;
pub mod inference;
pub mod train;

pub use cv::{assign_folds, cross_validate, CvRow, CvTable};
pub use grid::{discretize, GridSequence};
pub use inference::{decode, decode_subject, loglikelihood, posteriors, viterbi};
pub use train::{train, train_with_report, RestartReport, TrainReport};

/// Version of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown or non-observed variable `{0}`")]
    UnknownVariable(String),
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("fold {fold} has no subjects")]
    FoldTooSmall { fold: usize },
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HmmError {
    pub fn category(&self) -> &'static str {
        match self {
            HmmError::InvalidConfig(_) => "InvalidConfig",
            HmmError::InvalidModel(_) => "InvalidModel",
            HmmError::UnknownVariable(_) => "UnknownVariable",
            HmmError::EmptyDataset => "EmptyDataset",
            HmmError::FoldTooSmall { .. } => "FoldTooSmall",
            HmmError::UnsupportedVersion(_) => "UnsupportedVersion",
            HmmError::Json(_) => "InvalidModel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmissionKind {
    Bernoulli,
    Gaussian,
}

impl EmissionKind {
    /// Default emission family for a variable kind.
    pub fn for_kind(kind: VariableKind) -> Self {
        match kind {
            VariableKind::Binary => EmissionKind::Bernoulli,
            VariableKind::Continuous | VariableKind::Categorical => EmissionKind::Gaussian,
        }
    }
}

/// Square 0/1 matrix of allowed transitions; the diagonal is always allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionMask(Vec<Vec<u8>>);

impl TransitionMask {
    pub fn full(k: usize) -> Self {
        TransitionMask(vec![vec![1; k]; k])
    }

    /// Stay, or advance to the next state; never skip or go back.
    pub fn forward(k: usize) -> Self {
        TransitionMask(
            (0..k)
                .map(|i| (0..k).map(|j| u8::from(j == i || j == i + 1)).collect())
                .collect(),
        )
    }

    pub fn from_rows(rows: Vec<Vec<u8>>) -> Self {
        TransitionMask(rows)
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        self.0[from][to] != 0
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.0
    }

    pub fn validate(&self, k: usize) -> Result<(), HmmError> {
        if self.0.len() != k || self.0.iter().any(|r| r.len() != k) {
            return Err(HmmError::InvalidConfig(format!("transition mask must be {k}x{k}")));
        }
        for (i, row) in self.0.iter().enumerate() {
            if row.iter().any(|&c| c > 1) {
                return Err(HmmError::InvalidConfig("transition mask must be 0/1".into()));
            }
            if row[i] != 1 {
                return Err(HmmError::InvalidConfig(format!(
                    "transition mask diagonal entry {i} must be 1"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmConfig {
    pub n_states: usize,
    /// Months per grid step.
    pub time_unit: f64,
    pub emissions: BTreeMap<String, EmissionKind>,
    pub transition_mask: TransitionMask,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Relative to each variable's global variance.
    pub variance_floor: f64,
}

impl HmmConfig {
    /// Defaults: full mask, unit grid, 5 restarts, seed 0.
    pub fn new(n_states: usize, emissions: BTreeMap<String, EmissionKind>) -> Self {
        HmmConfig {
            n_states,
            time_unit: 1.0,
            emissions,
            transition_mask: TransitionMask::full(n_states),
            restarts: 5,
            seed: 0,
            max_iters: 500,
            rel_tol: 1e-6,
            variance_floor: 1e-4,
        }
    }

    pub fn with_mask(mut self, mask: TransitionMask) -> Self {
        self.transition_mask = mask;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    /// Emission variables in grid order.
    pub fn variables(&self) -> Vec<String> {
        self.emissions.keys().cloned().collect()
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        if self.n_states == 0 {
            return Err(HmmError::InvalidConfig("n_states must be at least 1".into()));
        }
        if !(self.time_unit.is_finite() && self.time_unit > 0.0) {
            return Err(HmmError::InvalidConfig("time_unit must be positive".into()));
        }
        if self.emissions.is_empty() {
            return Err(HmmError::InvalidConfig(
                "at least one emission variable is required".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(HmmError::InvalidConfig("restarts must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) || !(self.variance_floor > 0.0) {
            return Err(HmmError::InvalidConfig(
                "rel_tol must be >= 0 and variance_floor > 0".into(),
            ));
        }
        self.transition_mask.validate(self.n_states)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum EmissionParams {
    Bernoulli { p: Vec<f64> },
    Gaussian { mean: Vec<f64>, var: Vec<f64> },
}

impl EmissionParams {
    pub fn kind(&self) -> EmissionKind {
        match self {
            EmissionParams::Bernoulli { .. } => EmissionKind::Bernoulli,
            EmissionParams::Gaussian { .. } => EmissionKind::Gaussian,
        }
    }

    fn n_states(&self) -> usize {
        match self {
            EmissionParams::Bernoulli { p } => p.len(),
            EmissionParams::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Log density of `x` under state `k`.
    #[inline]
    pub fn log_density(&self, k: usize, x: f64) -> f64 {
        match self {
            EmissionParams::Bernoulli { p } => {
                if x >= 0.5 {
                    p[k].ln()
                } else {
                    (1.0 - p[k]).ln()
                }
            }
            EmissionParams::Gaussian { mean, var } => {
                let d = x - mean[k];
                -0.5 * ((2.0 * std::f64::consts::PI * var[k]).ln() + d * d / var[k])
            }
        }
    }

    /// Relabels states: new state `i` takes old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| perm.iter().map(|&o| v[o]).collect::<Vec<f64>>();
        match self {
            EmissionParams::Bernoulli { p } => EmissionParams::Bernoulli { p: pick(p) },
            EmissionParams::Gaussian { mean, var } => EmissionParams::Gaussian {
                mean: pick(mean),
                var: pick(var),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmModel {
    pub config: HmmConfig,
    pub pi: Vec<f64>,
    /// Row-stochastic, zero wherever the mask is zero.
    pub trans: Vec<Vec<f64>>,
    pub emissions: BTreeMap<String, EmissionParams>,
    pub train_loglik: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    model: HmmModel,
}

const MODEL_FORMAT: &str = "dpvis-hmm";

impl HmmModel {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    /// Emission parameters in grid variable order.
    pub fn emission_list(&self) -> Vec<&EmissionParams> {
        self.emissions.values().collect()
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let k = self.config.n_states;
        self.config.validate()?;
        let bad = |msg: String| Err(HmmError::InvalidModel(msg));
        if self.pi.len() != k || self.trans.len() != k || self.trans.iter().any(|r| r.len() != k) {
            return bad(format!("pi/trans must have {k} states"));
        }
        let check_dist = |row: &[f64], what: &str| -> Result<(), HmmError> {
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return bad(format!("{what} has entries outside [0,1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return bad(format!("{what} sums to {s}"));
            }
            Ok(())
        };
        check_dist(&self.pi, "pi")?;
        for (i, row) in self.trans.iter().enumerate() {
            check_dist(row, &format!("trans row {i}"))?;
            for (j, &x) in row.iter().enumerate() {
                if x != 0.0 && !self.config.transition_mask.allows(i, j) {
                    return bad(format!("trans[{i}][{j}] is masked but non-zero"));
                }
            }
        }
        if self.emissions.keys().ne(self.config.emissions.keys()) {
            return bad("emission variables differ from config".into());
        }
        for (name, params) in &self.emissions {
            if params.kind() != self.config.emissions[name] || params.n_states() != k {
                return bad(format!("emission `{name}` has wrong family or size"));
            }
            if let EmissionParams::Gaussian { var, .. } = params {
                if var.iter().any(|&v| !(v > 0.0)) {
                    return bad(format!("emission `{name}` has non-positive variance"));
                }
            }
        }
        Ok(())
    }

    /// State-relabelled copy; new state `i` is old state `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> HmmModel {
        let k = self.n_states();
        assert_eq!(perm.len(), k);
        let mut mask = vec![vec![0u8; k]; k];
        for i in 0..k {
            for j in 0..k {
                mask[i][j] = self.config.transition_mask.rows()[perm[i]][perm[j]];
            }
        }
        let mut config = self.config.clone();
        config.transition_mask = TransitionMask::from_rows(mask);
        HmmModel {
            config,
            pi: perm.iter().map(|&o| self.pi[o]).collect(),
            trans: perm
                .iter()
                .map(|&oi| perm.iter().map(|&oj| self.trans[oi][oj]).collect())
                .collect(),
            emissions: self
                .emissions
                .iter()
                .map(|(n, e)| (n.clone(), e.permuted(perm)))
                .collect(),
            train_loglik: self.train_loglik,
        }
    }

    /// Versioned JSON document.
    pub fn to_json(&self) -> Result<String, HmmError> {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(crate::json::to_canonical_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<HmmModel, HmmError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(HmmError::InvalidModel(format!("unexpected format `{}`", doc.format)));
        }
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(HmmError::UnsupportedVersion(doc.version));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }
}

/// Per-visit decoding result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedVisit {
    pub age: f64,
    /// Viterbi state label.
    pub state: usize,
    /// Smoothed (forward-backward) posterior over states.
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSubject {
    pub subject_id: String,
    pub visits: Vec<DecodedVisit>,
    pub loglik: f64,
}

impl DecodedSubject {
    pub fn labels(&self) -> Vec<usize> {
        self.visits.iter().map(|v| v.state).collect()
    }
}

/// Decoded labels for a whole dataset, tagged with the model that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub model_id: Option<String>,
    pub n_states: usize,
    pub subjects: Vec<DecodedSubject>,
}

impl Decoding {
    pub fn subject(&self, id: &str) -> Option<&DecodedSubject> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    pub fn index(&self) -> BTreeMap<&str, &DecodedSubject> {
        self.subjects.iter().map(|s| (s.subject_id.as_str(), s)).collect()
    }
}
