//! State summaries and pathway aggregations behind the analysis views.
//! Every aggregation takes a [`Scope`] and counts only subjects inside it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::data::{Dataset, Subject};
use crate::hmm::{DecodedSubject, Decoding};

mod features;
mod kde;
mod pathways;

pub use features::{feature_summary, FeatureCell, FeatureRow, FeatureSummary, Histogram, HISTOGRAM_BINS};
pub use kde::{event_kde, kde, quantile, silverman_bandwidth, DualKde, KdeCurve, KdeGrid, DEFAULT_KDE_STEPS};
pub use pathways::{
    bipartite, chord_matrix, sankey_by_time, sankey_by_visit, BipartiteSankey, ChordArc, ChordMatrix, Sankey,
    SankeyAxis, SankeyColumn, DEFAULT_TIME_BIN,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("scope contains no decoded subjects")]
    EmptyScope,
    #[error("unknown outcome event `{0}`")]
    UnknownEvent(String),
    #[error("no ages to estimate a density from")]
    EmptyAges,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl AnalyticsError {
    pub fn category(&self) -> &'static str {
        match self {
            AnalyticsError::EmptyScope => "EmptyScope",
            AnalyticsError::UnknownEvent(_) => "UnknownEvent",
            AnalyticsError::EmptyAges => "EmptyAges",
            AnalyticsError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

/// The subjects an aggregation runs over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scope(Option<BTreeSet<String>>);

impl Scope {
    pub fn all() -> Self {
        Scope(None)
    }

    pub fn subjects(ids: BTreeSet<String>) -> Self {
        Scope(Some(ids))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.as_ref().is_none_or(|s| s.contains(id))
    }

    pub fn ids(&self) -> Option<&BTreeSet<String>> {
        self.0.as_ref()
    }
}

/// Decoded subjects inside the scope, in decoding order.
pub(crate) fn scoped<'a>(decoding: &'a Decoding, scope: &'a Scope) -> impl Iterator<Item = &'a DecodedSubject> {
    decoding.subjects.iter().filter(|d| scope.contains(&d.subject_id))
}

/// Scoped (subject, decoded) pairs in dataset order.
pub(crate) fn joined<'a>(
    ds: &'a Dataset,
    decoding: &'a Decoding,
    scope: &Scope,
) -> Vec<(&'a Subject, &'a DecodedSubject)> {
    let index: BTreeMap<&str, &DecodedSubject> = decoding.index();
    ds.subjects
        .iter()
        .filter(|s| scope.contains(&s.id))
        .filter_map(|s| index.get(s.id.as_str()).map(|d| (s, *d)))
        .filter(|(s, d)| s.visits.len() == d.visits.len())
        .collect()
}
