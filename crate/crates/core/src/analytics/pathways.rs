use serde::{Deserialize, Serialize};

use super::{joined, scoped, AnalyticsError, Scope};
use crate::data::{Dataset, VariableRole};
use crate::hmm::Decoding;

/// Default width of a time column, in months.
pub const DEFAULT_TIME_BIN: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordArc {
    pub from: usize,
    pub to: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChordMatrix {
    pub n_states: usize,
    /// Consecutive-visit pair counts, diagonal included.
    pub pairs: Vec<Vec<u64>>,
    /// Off-diagonal non-zero pairs, row-major.
    pub arcs: Vec<ChordArc>,
    /// Visits per state.
    pub node_sizes: Vec<u64>,
}

pub fn chord_matrix(decoding: &Decoding, scope: &Scope) -> ChordMatrix {
    let k = decoding.n_states;
    let mut pairs = vec![vec![0u64; k]; k];
    let mut node_sizes = vec![0u64; k];
    for d in scoped(decoding, scope) {
        for v in &d.visits {
            node_sizes[v.state] += 1;
        }
        for w in d.visits.windows(2) {
            pairs[w[0].state][w[1].state] += 1;
        }
    }
    let arcs = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && pairs[i][j] > 0)
        .map(|(from, to)| ChordArc {
            from,
            to,
            count: pairs[from][to],
        })
        .collect();
    ChordMatrix {
        n_states: k,
        pairs,
        arcs,
        node_sizes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SankeyAxis {
    /// Columns are visit numbers 1, 2, ...
    Visit,
    /// Columns are age bins of `bin` months starting at `bin * index`.
    Time { bin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SankeyColumn {
    /// Visit number, or bin start in months.
    pub label: f64,
    /// Subjects per state in this column.
    pub stacks: Vec<u64>,
    /// Subjects whose first column is this one, per state.
    pub entries: Vec<u64>,
    /// Summed height of the stacks below the anchor state.
    pub anchor_offset: Option<u64>,
}

/// Stacked flows between consecutive columns. For every column `c > 0`:
/// `stacks[c][s] = entries[c][s] + sum_r links[c-1][r][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sankey {
    pub axis: SankeyAxis,
    pub n_states: usize,
    pub anchor: Option<usize>,
    pub columns: Vec<SankeyColumn>,
    /// `links[c][from][to]` between column `c` and `c + 1`.
    pub links: Vec<Vec<Vec<u64>>>,
}

impl Sankey {
    /// Builds columns from per-subject `(first column, states)` tracks.
    fn from_tracks(axis: SankeyAxis, k: usize, anchor: Option<usize>, tracks: &[(usize, Vec<usize>)], labels: Vec<f64>) -> Self {
        let n = labels.len();
        let mut columns: Vec<SankeyColumn> = labels
            .into_iter()
            .map(|label| SankeyColumn {
                label,
                stacks: vec![0; k],
                entries: vec![0; k],
                anchor_offset: None,
            })
            .collect();
        let mut links = vec![vec![vec![0u64; k]; k]; n.saturating_sub(1)];
        for (start, states) in tracks {
            columns[*start].entries[states[0]] += 1;
            for (i, &s) in states.iter().enumerate() {
                columns[start + i].stacks[s] += 1;
            }
            for (i, w) in states.windows(2).enumerate() {
                links[start + i][w[0]][w[1]] += 1;
            }
        }
        if let Some(a) = anchor {
            for col in &mut columns {
                col.anchor_offset = Some(col.stacks[..a.min(k)].iter().sum());
            }
        }
        Sankey {
            axis,
            n_states: k,
            anchor,
            columns,
            links,
        }
    }
}

fn check_anchor(anchor: Option<usize>, k: usize) -> Result<(), AnalyticsError> {
    match anchor {
        Some(a) if a >= k => Err(AnalyticsError::InvalidParameter(format!("anchor state {a} >= {k}"))),
        _ => Ok(()),
    }
}

/// Column `n` holds each subject's `n+1`-th visit.
pub fn sankey_by_visit(decoding: &Decoding, scope: &Scope, anchor: Option<usize>) -> Result<Sankey, AnalyticsError> {
    let k = decoding.n_states;
    check_anchor(anchor, k)?;
    let tracks: Vec<(usize, Vec<usize>)> = scoped(decoding, scope)
        .filter(|d| !d.visits.is_empty())
        .map(|d| (0, d.labels()))
        .collect();
    let n = tracks.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let labels = (1..=n).map(|i| i as f64).collect();
    Ok(Sankey::from_tracks(SankeyAxis::Visit, k, anchor, &tracks, labels))
}

/// Each subject occupies every bin from its first to its last visit; a bin
/// takes the state of the last visit inside it, or the previous bin's state
/// when it holds no visit.
pub fn sankey_by_time(decoding: &Decoding, scope: &Scope, bin: f64) -> Result<Sankey, AnalyticsError> {
    if !(bin.is_finite() && bin > 0.0) {
        return Err(AnalyticsError::InvalidParameter(format!("bin width {bin}")));
    }
    let k = decoding.n_states;
    let bin_of = |age: f64| (age / bin).floor() as usize;
    let raw: Vec<(usize, Vec<usize>)> = scoped(decoding, scope)
        .filter(|d| !d.visits.is_empty())
        .map(|d| {
            let first = bin_of(d.visits[0].age);
            let last = bin_of(d.visits[d.visits.len() - 1].age);
            let mut states: Vec<Option<usize>> = vec![None; last - first + 1];
            for v in &d.visits {
                states[bin_of(v.age) - first] = Some(v.state);
            }
            let mut carried = Vec::with_capacity(states.len());
            let mut current = states[0].expect("first bin holds the first visit");
            for s in states {
                current = s.unwrap_or(current);
                carried.push(current);
            }
            (first, carried)
        })
        .collect();
    let lo = raw.iter().map(|(f, _)| *f).min().unwrap_or(0);
    let hi = raw.iter().map(|(f, s)| f + s.len()).max().unwrap_or(lo);
    let tracks: Vec<(usize, Vec<usize>)> = raw.into_iter().map(|(f, s)| (f - lo, s)).collect();
    let labels = (lo..hi).map(|b| b as f64 * bin).collect();
    Ok(Sankey::from_tracks(SankeyAxis::Time { bin }, k, None, &tracks, labels))
}

/// First-visit state to the state at the visit nearest an outcome event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteSankey {
    pub event: String,
    pub n_states: usize,
    /// `links[start][at_event]`.
    pub links: Vec<Vec<u64>>,
    /// Subjects without the event, by start state.
    pub no_event: Vec<u64>,
}

pub fn bipartite(decoding: &Decoding, ds: &Dataset, scope: &Scope, event: &str) -> Result<BipartiteSankey, AnalyticsError> {
    match ds.variable(event) {
        Some(v) if v.role == VariableRole::OutcomeEvent => {}
        _ => return Err(AnalyticsError::UnknownEvent(event.to_string())),
    }
    let k = decoding.n_states;
    let mut links = vec![vec![0u64; k]; k];
    let mut no_event = vec![0u64; k];
    for (subject, d) in joined(ds, decoding, scope) {
        let Some(first) = d.visits.first() else { continue };
        match subject.events.get(event) {
            None => no_event[first.state] += 1,
            Some(&age) => {
                // Nearest visit by age; earlier visit on ties.
                let nearest = d
                    .visits
                    .iter()
                    .min_by(|a, b| (a.age - age).abs().total_cmp(&(b.age - age).abs()))
                    .expect("non-empty");
                links[first.state][nearest.state] += 1;
            }
        }
    }
    Ok(BipartiteSankey {
        event: event.to_string(),
        n_states: k,
        links,
        no_event,
    })
}

/// Sum of link counts into each state of column `c + 1`.
#[cfg(test)]
pub(crate) fn inflow(s: &Sankey, c: usize) -> Vec<u64> {
    let mut into = vec![0; s.n_states];
    for row in &s.links[c] {
        for (t, &n) in row.iter().enumerate() {
            into[t] += n;
        }
    }
    into
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Subject, VariableKind, VariableSchema, Visit};
    use crate::hmm::{DecodedSubject, DecodedVisit};

    fn decoding(k: usize, subjects: &[(&str, &[(f64, usize)])]) -> Decoding {
        Decoding {
            model_id: None,
            n_states: k,
            subjects: subjects
                .iter()
                .map(|(id, visits)| DecodedSubject {
                    subject_id: id.to_string(),
                    visits: visits
                        .iter()
                        .map(|&(age, state)| DecodedVisit { age, state, posterior: vec![] })
                        .collect(),
                    loglik: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn chord_counts() {
        let d = decoding(2, &[("a", &[(0.0, 0), (1.0, 0), (2.0, 1)])]);
        let c = chord_matrix(&d, &Scope::all());
        assert_eq!(c.pairs, vec![vec![1, 1], vec![0, 0]]);
        assert_eq!(c.arcs, vec![ChordArc { from: 0, to: 1, count: 1 }]);
        assert_eq!(c.node_sizes, vec![2, 1]);

        let d = decoding(2, &[("a", &[(0.0, 1)])]);
        let c = chord_matrix(&d, &Scope::all());
        assert!(c.arcs.is_empty());
        assert_eq!(c.node_sizes, vec![0, 1]);
    }

    #[test]
    fn time_bins_carry_forward() {
        let d = decoding(2, &[("a", &[(6.0, 0), (30.0, 1)])]);
        let s = sankey_by_time(&d, &Scope::all(), 12.0).unwrap();
        let labels: Vec<f64> = s.columns.iter().map(|c| c.label).collect();
        assert_eq!(labels, vec![0.0, 12.0, 24.0]);
        assert_eq!(s.columns[0].stacks, vec![1, 0]);
        assert_eq!(s.columns[1].stacks, vec![1, 0]);
        assert_eq!(s.columns[2].stacks, vec![0, 1]);
    }

    #[test]
    fn late_entries_are_counted() {
        let d = decoding(2, &[("a", &[(1.0, 0), (13.0, 0)]), ("b", &[(14.0, 1), (15.0, 0)])]);
        let s = sankey_by_time(&d, &Scope::all(), 12.0).unwrap();
        // b's last visit in bin 1 is state 0.
        assert_eq!(s.columns[1].stacks, vec![2, 0]);
        assert_eq!(s.columns[1].entries, vec![1, 0]);
        assert_eq!(inflow(&s, 0), vec![1, 0]);
    }

    #[test]
    fn visit_columns_and_anchor() {
        let d = decoding(3, &[("a", &[(0.0, 0), (1.0, 2)]), ("b", &[(0.0, 1), (1.0, 1), (2.0, 2)])]);
        let s = sankey_by_visit(&d, &Scope::all(), Some(2)).unwrap();
        assert_eq!(s.columns.len(), 3);
        assert_eq!(s.columns[0].stacks, vec![1, 1, 0]);
        assert_eq!(s.columns[1].stacks, vec![0, 1, 1]);
        assert_eq!(s.columns[1].anchor_offset, Some(1));
        assert_eq!(s.links[0][0][2], 1);
        assert_eq!(inflow(&s, 1), s.columns[2].stacks);
        assert!(sankey_by_visit(&d, &Scope::all(), Some(3)).is_err());
    }

    #[test]
    fn bipartite_nearest_visit() {
        let schema = vec![
            VariableSchema::new("x", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("onset", VariableKind::Continuous, VariableRole::OutcomeEvent),
        ];
        let subject = |id: &str, ages: &[f64], onset: Option<f64>| Subject {
            id: id.into(),
            visits: ages
                .iter()
                .map(|&age| Visit { age, values: [("x".to_string(), None)].into_iter().collect() })
                .collect(),
            statics: Default::default(),
            events: onset.iter().map(|&a| ("onset".to_string(), a)).collect(),
        };
        let ds = Dataset {
            schema,
            subjects: vec![subject("a", &[0.0, 10.0, 20.0], Some(18.0)), subject("b", &[0.0, 5.0], None)],
        };
        let d = decoding(6, &[("a", &[(0.0, 3), (10.0, 4), (20.0, 5)]), ("b", &[(0.0, 1), (5.0, 2)])]);
        let b = bipartite(&d, &ds, &Scope::all(), "onset").unwrap();
        assert_eq!(b.links[3][5], 1);
        assert_eq!(b.no_event[1], 1);
        assert_eq!(
            bipartite(&d, &ds, &Scope::all(), "x"),
            Err(AnalyticsError::UnknownEvent("x".into()))
        );
    }
}
