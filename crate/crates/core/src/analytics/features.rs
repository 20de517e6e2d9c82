use serde::{Deserialize, Serialize};

use super::{joined, AnalyticsError, Scope};
use crate::data::{Dataset, VariableKind};
use crate::hmm::Decoding;

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn for_range(kind: VariableKind, lo: f64, hi: f64) -> Self {
        if kind == VariableKind::Binary {
            return Histogram {
                edges: vec![-0.5, 0.5, 1.5],
                counts: vec![0; 2],
            };
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        let mut edges: Vec<f64> = (0..HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
        edges.push(hi);
        Histogram {
            edges,
            counts: vec![0; HISTOGRAM_BINS],
        }
    }

    fn add(&mut self, x: f64) {
        let n = self.counts.len();
        let lo = self.edges[0];
        let hi = self.edges[n];
        let bin = (((x - lo) / (hi - lo)) * n as f64).floor();
        let bin = if bin.is_nan() { 0 } else { (bin.max(0.0) as usize).min(n - 1) };
        self.counts[bin] += 1;
    }
}

/// Statistics of one variable over the visits labelled with one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCell {
    pub state: usize,
    /// Missing values excluded; `None` when no value was observed.
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub histogram: Histogram,
    pub n_visits: u64,
    pub n_missing: u64,
    /// Mean rescaled to [0, 1] across the states of this variable.
    pub normalized_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub variable: String,
    pub cells: Vec<FeatureCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub n_states: usize,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSummary {
    pub fn cell(&self, variable: &str, state: usize) -> Option<&FeatureCell> {
        self.rows
            .iter()
            .find(|r| r.variable == variable)
            .and_then(|r| r.cells.get(state))
    }
}

/// Per (dynamic variable, state) statistics over scoped visits. Histogram
/// ranges span the scoped values of the variable across all states.
pub fn feature_summary(decoding: &Decoding, ds: &Dataset, scope: &Scope) -> Result<FeatureSummary, AnalyticsError> {
    let pairs = joined(ds, decoding, scope);
    if pairs.is_empty() {
        return Err(AnalyticsError::EmptyScope);
    }
    let k = decoding.n_states;
    let rows = ds
        .dynamic_variables()
        .map(|var| {
            let observations: Vec<(usize, Option<f64>)> = pairs
                .iter()
                .flat_map(|(s, d)| {
                    s.visits
                        .iter()
                        .zip(&d.visits)
                        .map(|(v, dv)| (dv.state, v.value(&var.name)))
                })
                .collect();
            let (lo, hi) = observations
                .iter()
                .filter_map(|(_, x)| *x)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };

            let mut cells: Vec<FeatureCell> = (0..k)
                .map(|state| {
                    let mut histogram = Histogram::for_range(var.kind, lo, hi);
                    let mut n_visits = 0;
                    let mut n_missing = 0;
                    let mut values = Vec::new();
                    for &(_, x) in observations.iter().filter(|(s, _)| *s == state) {
                        n_visits += 1;
                        match x {
                            Some(x) => {
                                histogram.add(x);
                                values.push(x);
                            }
                            None => n_missing += 1,
                        }
                    }
                    let (mean, std) = if values.is_empty() {
                        (None, None)
                    } else {
                        let n = values.len() as f64;
                        let mean = values.iter().sum::<f64>() / n;
                        let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                        (Some(mean), Some(var.sqrt()))
                    };
                    FeatureCell {
                        state,
                        mean,
                        std,
                        histogram,
                        n_visits,
                        n_missing,
                        normalized_mean: None,
                    }
                })
                .collect();
            let (min, max) = cells
                .iter()
                .filter_map(|c| c.mean)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
            for cell in &mut cells {
                cell.normalized_mean = cell
                    .mean
                    .map(|m| if max > min { (m - min) / (max - min) } else { 0.5 });
            }
            FeatureRow {
                variable: var.name.clone(),
                cells,
            }
        })
        .collect();
    Ok(FeatureSummary { n_states: k, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Subject, VariableRole, VariableSchema, Visit};
    use crate::hmm::{DecodedSubject, DecodedVisit};
    use std::collections::BTreeMap;

    /// One subject; each visit is (state, binary a, continuous c).
    fn fixture(visits: &[(usize, Option<f64>, Option<f64>)], k: usize) -> (Dataset, Decoding) {
        let schema = vec![
            VariableSchema::new("a", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("c", VariableKind::Continuous, VariableRole::DynamicContext),
        ];
        let subject = Subject {
            id: "s".into(),
            visits: visits
                .iter()
                .enumerate()
                .map(|(i, &(_, a, c))| Visit {
                    age: i as f64,
                    values: [("a".to_string(), a), ("c".to_string(), c)].into_iter().collect(),
                })
                .collect(),
            statics: BTreeMap::new(),
            events: BTreeMap::new(),
        };
        let decoded = DecodedSubject {
            subject_id: "s".into(),
            visits: visits
                .iter()
                .enumerate()
                .map(|(i, &(state, _, _))| DecodedVisit { age: i as f64, state, posterior: vec![1.0 / k as f64; k] })
                .collect(),
            loglik: 0.0,
        };
        (
            Dataset { schema, subjects: vec![subject] },
            Decoding { model_id: None, n_states: k, subjects: vec![decoded] },
        )
    }

    #[test]
    fn constant_cell_and_empty_state() {
        let (ds, dec) = fixture(&[(0, Some(1.0), Some(2.0)), (0, Some(1.0), None), (2, Some(0.0), Some(4.0))], 3);
        let fs = feature_summary(&dec, &ds, &Scope::all()).unwrap();
        let c = fs.cell("a", 0).unwrap();
        assert_eq!(c.mean, Some(1.0));
        assert_eq!(c.std, Some(0.0));
        assert_eq!(c.histogram.counts, vec![0, 2]);
        let empty = fs.cell("a", 1).unwrap();
        assert_eq!(empty.n_visits, 0);
        assert_eq!(empty.mean, None);
        assert_eq!(empty.normalized_mean, None);
        let c = fs.cell("c", 0).unwrap();
        assert_eq!(c.n_visits, 2);
        assert_eq!(c.n_missing, 1);
        assert_eq!(c.histogram.counts.iter().sum::<u64>(), 1);
        assert_eq!(c.histogram.counts[0], 1);
        assert_eq!(fs.cell("c", 2).unwrap().histogram.counts[9], 1);
    }

    #[test]
    fn min_max_normalization() {
        let (ds, dec) = fixture(&[(0, None, Some(0.0)), (1, None, Some(0.5)), (2, None, Some(1.0))], 3);
        let fs = feature_summary(&dec, &ds, &Scope::all()).unwrap();
        let norm: Vec<Option<f64>> = (0..3).map(|s| fs.cell("c", s).unwrap().normalized_mean).collect();
        assert_eq!(norm, vec![Some(0.0), Some(0.5), Some(1.0)]);
        let (ds, dec) = fixture(&[(0, None, Some(3.0)), (1, None, Some(3.0))], 2);
        let fs = feature_summary(&dec, &ds, &Scope::all()).unwrap();
        assert_eq!(fs.cell("c", 1).unwrap().normalized_mean, Some(0.5));
    }

    #[test]
    fn empty_scope_errors() {
        let (ds, dec) = fixture(&[(0, Some(1.0), None)], 2);
        let scope = Scope::subjects(["nobody".to_string()].into());
        assert_eq!(feature_summary(&dec, &ds, &scope), Err(AnalyticsError::EmptyScope));
    }
}
