//! Response payloads for every analysis view. The HTTP handlers and the
//! command-line tool both call these, so their JSON output is identical.

use std::collections::{BTreeMap, BTreeSet};

use dpvis_core::analytics::{self, DEFAULT_KDE_STEPS, DEFAULT_TIME_BIN};
use dpvis_core::data::{self, DatasetSummary, VariableRole, VariableSchema};
use dpvis_core::hmm::DecodedSubject;
use dpvis_core::layout::{self, WaterfallParams};
use dpvis_core::patterns::{self, DEFAULT_TOP_N};
use dpvis_core::query::{self, FilterExpr, SequenceQuery};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workspace::Workspace;

/// Minimum support used when a request does not give one.
pub const DEFAULT_MIN_SUPPORT: usize = 2;

/// A view result tagged with the model and subgroup it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoped<T> {
    pub model_id: Option<String>,
    pub subgroup: Option<u64>,
    pub result: T,
}

fn scoped<T>(ws: &Workspace, subgroup: Option<u64>, result: T) -> Scoped<T> {
    Scoped {
        model_id: ws.decoding.as_ref().and_then(|d| d.model_id.clone()),
        subgroup,
        result,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub summary: DatasetSummary,
    pub schema: Vec<VariableSchema>,
    /// Distinct values of each static variable with their subject counts.
    pub static_values: BTreeMap<String, BTreeMap<String, usize>>,
}

pub fn dataset_info(ws: &Workspace) -> Result<DatasetInfo> {
    let ds = ws.dataset()?;
    let mut static_values: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for var in ds.variables_with_role(VariableRole::Static) {
        let counts = static_values.entry(var.name.clone()).or_default();
        for s in &ds.subjects {
            if let Some(v) = s.statics.get(&var.name) {
                *counts.entry(v.clone()).or_default() += 1;
            }
        }
    }
    Ok(DatasetInfo {
        summary: data::summarize(ds),
        schema: ds.schema.clone(),
        static_values,
    })
}

/// Decoded subjects, optionally just one.
pub fn decode(ws: &Workspace, subject: Option<&str>) -> Result<Scoped<Vec<DecodedSubject>>> {
    let decoding = ws.decoding()?;
    let subjects = match subject {
        None => decoding.subjects.clone(),
        Some(id) => vec![decoding
            .subject(id)
            .cloned()
            .ok_or_else(|| Error::BadRequest(format!("unknown subject `{id}`")))?],
    };
    Ok(scoped(ws, None, subjects))
}

pub fn features(ws: &Workspace, subgroup: Option<u64>) -> Result<Scoped<analytics::FeatureSummary>> {
    let r = analytics::feature_summary(ws.decoding()?, ws.dataset()?, &ws.scope(subgroup)?)?;
    Ok(scoped(ws, subgroup, r))
}

pub fn chord(ws: &Workspace, subgroup: Option<u64>) -> Result<Scoped<analytics::ChordMatrix>> {
    let r = analytics::chord_matrix(ws.decoding()?, &ws.scope(subgroup)?);
    Ok(scoped(ws, subgroup, r))
}

pub fn pathways_visit(ws: &Workspace, subgroup: Option<u64>, anchor: Option<usize>) -> Result<Scoped<analytics::Sankey>> {
    let r = analytics::sankey_by_visit(ws.decoding()?, &ws.scope(subgroup)?, anchor)?;
    Ok(scoped(ws, subgroup, r))
}

pub fn pathways_time(ws: &Workspace, subgroup: Option<u64>, bin: Option<f64>) -> Result<Scoped<analytics::Sankey>> {
    let bin = bin.unwrap_or(DEFAULT_TIME_BIN);
    let r = analytics::sankey_by_time(ws.decoding()?, &ws.scope(subgroup)?, bin)?;
    Ok(scoped(ws, subgroup, r))
}

/// First outcome event of the schema, used when a request names none.
fn default_event(ws: &Workspace) -> Result<String> {
    ws.dataset()?
        .variables_with_role(VariableRole::OutcomeEvent)
        .next()
        .map(|v| v.name.clone())
        .ok_or_else(|| Error::BadRequest("the dataset has no outcome events".into()))
}

pub fn bipartite(ws: &Workspace, subgroup: Option<u64>, event: Option<&str>) -> Result<Scoped<analytics::BipartiteSankey>> {
    let event = match event {
        Some(e) => e.to_string(),
        None => default_event(ws)?,
    };
    let r = analytics::bipartite(ws.decoding()?, ws.dataset()?, &ws.scope(subgroup)?, &event)?;
    Ok(scoped(ws, subgroup, r))
}

pub fn waterfall(ws: &Workspace, subgroup: Option<u64>) -> Result<Scoped<layout::WaterfallLayout>> {
    let r = layout::waterfall(ws.decoding()?, &ws.scope(subgroup)?, &WaterfallParams::default())?;
    Ok(scoped(ws, subgroup, r))
}

/// Event-age densities. Needs only the dataset, not a model.
pub fn kde(ws: &Workspace, subgroup: Option<u64>, event: Option<&str>) -> Result<Scoped<analytics::DualKde>> {
    let event = match event {
        Some(e) => e.to_string(),
        None => default_event(ws)?,
    };
    let r = analytics::event_kde(ws.dataset()?, &ws.scope(subgroup)?, &event, DEFAULT_KDE_STEPS)?;
    Ok(scoped(ws, subgroup, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub min_support: usize,
    pub top: usize,
    /// Mine run-length collapsed label sequences.
    pub collapse: bool,
}

impl Default for PatternParams {
    fn default() -> Self {
        PatternParams {
            min_support: DEFAULT_MIN_SUPPORT,
            top: DEFAULT_TOP_N,
            collapse: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternList {
    pub min_support: usize,
    pub top: usize,
    pub collapse: bool,
    pub n_sequences: usize,
    pub patterns: Vec<patterns::MinedPattern>,
}

pub fn patterns(ws: &Workspace, subgroup: Option<u64>, params: PatternParams) -> Result<Scoped<PatternList>> {
    let scope = ws.scope(subgroup)?;
    let decoded: Vec<DecodedSubject> = ws
        .decoding()?
        .subjects
        .iter()
        .filter(|d| scope.contains(&d.subject_id))
        .cloned()
        .collect();
    let seqs = patterns::sequences(&decoded, params.collapse);
    let mined = patterns::mine_patterns(&seqs, params.min_support, params.top)?;
    Ok(scoped(
        ws,
        subgroup,
        PatternList {
            min_support: params.min_support,
            top: params.top,
            collapse: params.collapse,
            n_sequences: seqs.len(),
            patterns: mined,
        },
    ))
}

/// A request body for `/query`: either a bare sequence query or any filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum QueryBody {
    Filter(FilterExpr),
    Sequence(SequenceQuery),
}

impl QueryBody {
    /// Objects with a `type` field are filters; anything else is a sequence query.
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(invalid_json)?;
        if value.get("type").is_some() {
            serde_json::from_value(value).map(QueryBody::Filter).map_err(invalid_json)
        } else {
            serde_json::from_value(value).map(QueryBody::Sequence).map_err(invalid_json)
        }
    }

    pub fn into_filter(self) -> FilterExpr {
        match self {
            QueryBody::Filter(f) => f,
            QueryBody::Sequence(query) => FilterExpr::SequenceMatches { query },
        }
    }
}

pub fn invalid_json(e: serde_json::Error) -> Error {
    Error::Query(query::QueryError::InvalidFilter {
        path: "/".into(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub count: usize,
    pub subjects: BTreeSet<String>,
}

/// Subjects matching `body`, restricted to a subgroup when given.
pub fn run_query(ws: &Workspace, subgroup: Option<u64>, body: QueryBody) -> Result<Scoped<QueryResult>> {
    if let QueryBody::Sequence(q) = &body {
        q.validate()?;
    }
    let filter = body.into_filter();
    let scope = ws.scope(subgroup)?;
    let subjects: BTreeSet<String> = query::evaluate(&ws.eval_context()?, &filter)?
        .into_iter()
        .filter(|id| scope.contains(id))
        .collect();
    Ok(scoped(
        ws,
        subgroup,
        QueryResult {
            count: subjects.len(),
            subjects,
        },
    ))
}

/// Settings for [`aggregates`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateParams {
    pub anchor: Option<usize>,
    pub bin: Option<f64>,
    pub event: Option<String>,
    pub patterns: PatternParams,
}

/// Every model-dependent view, keyed by endpoint name.
pub fn aggregates(ws: &Workspace, subgroup: Option<u64>, p: &AggregateParams) -> Result<BTreeMap<&'static str, serde_json::Value>> {
    fn v<T: Serialize>(x: T) -> Result<serde_json::Value> {
        serde_json::to_value(x).map_err(|e| Error::Workspace(e.to_string()))
    }
    let event = p.event.as_deref();
    let mut out = BTreeMap::new();
    out.insert("features", v(features(ws, subgroup)?)?);
    out.insert("chord", v(chord(ws, subgroup)?)?);
    out.insert("pathways_visit", v(pathways_visit(ws, subgroup, p.anchor)?)?);
    out.insert("pathways_time", v(pathways_time(ws, subgroup, p.bin)?)?);
    // Event views are null when the dataset records no events.
    let has_events = event.is_some() || default_event(ws).is_ok();
    let bip = if has_events { v(bipartite(ws, subgroup, event)?)? } else { serde_json::Value::Null };
    out.insert("pathways_bipartite", bip);
    out.insert("pathways_waterfall", v(waterfall(ws, subgroup)?)?);
    let density = match kde(ws, subgroup, event) {
        Ok(k) => v(k)?,
        Err(Error::Analytics(analytics::AnalyticsError::EmptyAges)) => serde_json::Value::Null,
        Err(_) if !has_events => serde_json::Value::Null,
        Err(e) => return Err(e),
    };
    out.insert("kde", density);
    out.insert("patterns", v(patterns(ws, subgroup, p.patterns)?)?);
    Ok(out)
}
