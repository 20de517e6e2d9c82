//! Cohort filters, temporal state-sequence queries, and persistent subgroups.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod filter;
mod sequence;
mod subgroup;

pub use filter::{evaluate, EvalContext};
pub use sequence::match_sequence;
pub use subgroup::{Subgroup, SubgroupFile, SubgroupRecord, SubgroupStore, SUBGROUP_FILE_VERSION};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("sequence query has no nodes")]
    EmptyQuery,
    #[error("invalid filter at {path}: {reason}")]
    InvalidFilter { path: String, reason: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("unknown state {state} (model has {n_states})")]
    UnknownState { state: usize, n_states: usize },
    #[error("filter references states but no decoding is available")]
    NoDecoding,
    #[error("unknown subgroup {0}")]
    UnknownSubgroup(u64),
    #[error("unsupported subgroup file version {0}")]
    UnsupportedVersion(u32),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("json error: {0}")]
    Json(String),
}

impl QueryError {
    pub fn category(&self) -> &'static str {
        match self {
            QueryError::EmptyQuery => "EmptyQuery",
            QueryError::InvalidFilter { .. } => "InvalidFilterAST",
            QueryError::UnknownVariable(_) => "UnknownVariable",
            QueryError::UnknownState { .. } => "UnknownState",
            QueryError::NoDecoding => "NoActiveModel",
            QueryError::UnknownSubgroup(_) => "UnknownSubgroup",
            QueryError::UnsupportedVersion(_) => "UnsupportedVersion",
            QueryError::Io(_) => "Io",
            QueryError::Json(_) => "InvalidFilterAST",
        }
    }
}

/// Closed age interval in months; `max = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(default)]
    pub min: f64,
    #[serde(default)]
    pub max: Option<f64>,
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow::ALL
    }
}

impl TimeWindow {
    pub const ALL: TimeWindow = TimeWindow { min: 0.0, max: None };

    pub fn new(min: f64, max: f64) -> Self {
        TimeWindow { min, max: Some(max) }
    }

    pub fn at_least(min: f64) -> Self {
        TimeWindow { min, max: None }
    }

    pub fn contains(&self, age: f64) -> bool {
        age >= self.min && self.max.is_none_or(|m| age <= m)
    }

    fn validate(&self, path: &str) -> Result<(), QueryError> {
        let ok = self.min.is_finite()
            && self.min >= 0.0
            && self.max.is_none_or(|m| !m.is_nan() && m >= self.min);
        if ok {
            Ok(())
        } else {
            Err(invalid(path, "time window needs 0 <= min <= max"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAt {
    /// Only the subject's first visit.
    Begin,
    /// Only the subject's last visit.
    End,
    #[default]
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConstraint {
    pub state: usize,
    #[serde(default)]
    pub time_window: TimeWindow,
    #[serde(default)]
    pub node_at: NodeAt,
    #[serde(default)]
    pub min_posterior: f64,
}

impl NodeConstraint {
    pub fn state(state: usize) -> Self {
        NodeConstraint {
            state,
            time_window: TimeWindow::ALL,
            node_at: NodeAt::Any,
            min_posterior: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrder {
    /// The two nodes sit on consecutive visits.
    NextVisit,
    /// The second node is on any later visit.
    #[default]
    Eventually,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeConstraint {
    /// Largest allowed age gap in months; `None` is unbounded.
    #[serde(default)]
    pub max_gap: Option<f64>,
    #[serde(default)]
    pub order: EdgeOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceQuery {
    pub nodes: Vec<NodeConstraint>,
    /// `edges[i]` links `nodes[i]` and `nodes[i + 1]`.
    #[serde(default)]
    pub edges: Vec<EdgeConstraint>,
}

impl SequenceQuery {
    /// Nodes joined by default (`eventually`, unbounded) edges.
    pub fn chain(nodes: Vec<NodeConstraint>) -> Self {
        let edges = vec![EdgeConstraint::default(); nodes.len().saturating_sub(1)];
        SequenceQuery { nodes, edges }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        self.validate_at("")
    }

    fn validate_at(&self, path: &str) -> Result<(), QueryError> {
        if self.nodes.is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        if self.edges.len() != self.nodes.len() - 1 {
            return Err(invalid(
                &format!("{path}/edges"),
                &format!("expected {} edges, found {}", self.nodes.len() - 1, self.edges.len()),
            ));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let at = format!("{path}/nodes/{i}");
            node.time_window.validate(&format!("{at}/time_window"))?;
            if !(0.0..=1.0).contains(&node.min_posterior) {
                return Err(invalid(&format!("{at}/min_posterior"), "must lie in [0, 1]"));
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            if edge.max_gap.is_some_and(|g| !(g >= 0.0)) {
                return Err(invalid(&format!("{path}/edges/{i}/max_gap"), "must be >= 0"));
            }
        }
        Ok(())
    }

    fn max_state(&self) -> Option<usize> {
        self.nodes.iter().map(|n| n.state).max()
    }
}

/// Conjunctive filter AST.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FilterExpr {
    StaticEquals { var: String, value: String },
    /// Some visit labelled `state` with age in the window.
    StateAtTime {
        state: usize,
        #[serde(default)]
        window: TimeWindow,
    },
    /// Consecutive visits labelled `from` then `to` (`from != to`), with
    /// the arrival visit's age in the window.
    Transition {
        from: usize,
        to: usize,
        #[serde(default)]
        window: TimeWindow,
    },
    PatternContains { states: Vec<usize> },
    SequenceMatches { query: SequenceQuery },
    And { filters: Vec<FilterExpr> },
}

impl FilterExpr {
    pub fn all() -> Self {
        FilterExpr::And { filters: vec![] }
    }

    /// Structural validation; the error path points at the offending node.
    pub fn validate(&self) -> Result<(), QueryError> {
        self.validate_at("")
    }

    fn validate_at(&self, path: &str) -> Result<(), QueryError> {
        match self {
            FilterExpr::StaticEquals { var, .. } if var.is_empty() => {
                Err(invalid(&format!("{path}/var"), "empty variable name"))
            }
            FilterExpr::StaticEquals { .. } => Ok(()),
            FilterExpr::StateAtTime { window, .. } => window.validate(&format!("{path}/window")),
            FilterExpr::Transition { from, to, window } => {
                if from == to {
                    return Err(invalid(path, "transition must change state"));
                }
                window.validate(&format!("{path}/window"))
            }
            FilterExpr::PatternContains { states } if states.is_empty() => {
                Err(invalid(&format!("{path}/states"), "pattern is empty"))
            }
            FilterExpr::PatternContains { .. } => Ok(()),
            FilterExpr::SequenceMatches { query } => match query.validate_at(&format!("{path}/query")) {
                Err(QueryError::EmptyQuery) => Err(invalid(&format!("{path}/query/nodes"), "query has no nodes")),
                other => other,
            },
            FilterExpr::And { filters } => filters
                .iter()
                .enumerate()
                .try_for_each(|(i, f)| f.validate_at(&format!("{path}/filters/{i}"))),
        }
    }

    /// Largest state id referenced anywhere in the tree.
    pub fn max_state(&self) -> Option<usize> {
        match self {
            FilterExpr::StaticEquals { .. } => None,
            FilterExpr::StateAtTime { state, .. } => Some(*state),
            FilterExpr::Transition { from, to, .. } => Some(*from.max(to)),
            FilterExpr::PatternContains { states } => states.iter().copied().max(),
            FilterExpr::SequenceMatches { query } => query.max_state(),
            FilterExpr::And { filters } => filters.iter().filter_map(FilterExpr::max_state).max(),
        }
    }

    /// Short human-readable rendering.
    pub fn describe(&self) -> String {
        fn window(w: &TimeWindow) -> String {
            match w.max {
                Some(m) => format!("{}-{} mo", w.min, m),
                None => format!(">= {} mo", w.min),
            }
        }
        match self {
            FilterExpr::StaticEquals { var, value } => format!("{var} = {value}"),
            FilterExpr::StateAtTime { state, window: w } => format!("state {state} at {}", window(w)),
            FilterExpr::Transition { from, to, window: w } => {
                format!("{from} -> {to} at {}", window(w))
            }
            FilterExpr::PatternContains { states } => format!(
                "pattern {}",
                states.iter().map(usize::to_string).collect::<Vec<_>>().join(" > ")
            ),
            FilterExpr::SequenceMatches { query } => format!(
                "sequence {}",
                query
                    .nodes
                    .iter()
                    .map(|n| n.state.to_string())
                    .collect::<Vec<_>>()
                    .join(" > ")
            ),
            FilterExpr::And { filters } if filters.is_empty() => "all subjects".to_string(),
            FilterExpr::And { filters } => filters
                .iter()
                .map(FilterExpr::describe)
                .collect::<Vec<_>>()
                .join(" AND "),
        }
    }
}

fn invalid(path: &str, reason: &str) -> QueryError {
    QueryError::InvalidFilter {
        path: if path.is_empty() { "/".to_string() } else { path.to_string() },
        reason: reason.to_string(),
    }
}
