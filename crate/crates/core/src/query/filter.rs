use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::sequence::match_sequence;
use super::{FilterExpr, QueryError};
use crate::data::{Dataset, Subject, VariableRole};
use crate::hmm::{DecodedSubject, Decoding};
use crate::patterns::contains_pattern;

/// Data a filter is evaluated against.
#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub dataset: &'a Dataset,
    pub decoding: Option<&'a Decoding>,
}

impl<'a> EvalContext<'a> {
    pub fn new(dataset: &'a Dataset, decoding: Option<&'a Decoding>) -> Self {
        EvalContext { dataset, decoding }
    }

    /// Checks structure plus every variable and state reference.
    pub fn check(&self, f: &FilterExpr) -> Result<(), QueryError> {
        f.validate()?;
        check_statics(self.dataset, f)?;
        if let Some(state) = f.max_state() {
            let decoding = self.decoding.ok_or(QueryError::NoDecoding)?;
            if state >= decoding.n_states {
                return Err(QueryError::UnknownState {
                    state,
                    n_states: decoding.n_states,
                });
            }
        }
        Ok(())
    }
}

fn check_statics(ds: &Dataset, f: &FilterExpr) -> Result<(), QueryError> {
    match f {
        FilterExpr::StaticEquals { var, .. } => match ds.variable(var) {
            Some(v) if v.role == VariableRole::Static => Ok(()),
            _ => Err(QueryError::UnknownVariable(var.clone())),
        },
        FilterExpr::And { filters } => filters.iter().try_for_each(|f| check_statics(ds, f)),
        _ => Ok(()),
    }
}

/// Ids of the subjects matching `f`.
pub fn evaluate(ctx: &EvalContext<'_>, f: &FilterExpr) -> Result<BTreeSet<String>, QueryError> {
    ctx.check(f)?;
    let decoded: BTreeMap<&str, &DecodedSubject> = ctx.decoding.map(Decoding::index).unwrap_or_default();
    let members: Vec<String> = ctx
        .dataset
        .subjects
        .par_iter()
        .filter(|s| matches(s, decoded.get(s.id.as_str()).copied(), f))
        .map(|s| s.id.clone())
        .collect();
    Ok(members.into_iter().collect())
}

fn matches(subject: &Subject, decoded: Option<&DecodedSubject>, f: &FilterExpr) -> bool {
    match f {
        FilterExpr::StaticEquals { var, value } => subject.statics.get(var) == Some(value),
        FilterExpr::And { filters } => filters.iter().all(|f| matches(subject, decoded, f)),
        _ => {
            let Some(d) = decoded else { return false };
            match f {
                FilterExpr::StateAtTime { state, window } => d
                    .visits
                    .iter()
                    .any(|v| v.state == *state && window.contains(v.age)),
                FilterExpr::Transition { from, to, window } => d.visits.windows(2).any(|w| {
                    w[0].state == *from && w[1].state == *to && from != to && window.contains(w[1].age)
                }),
                FilterExpr::PatternContains { states } => {
                    let mut labels = d.labels();
                    labels.dedup();
                    contains_pattern(&labels, states)
                }
                FilterExpr::SequenceMatches { query } => match_sequence(d, query).unwrap_or(false),
                FilterExpr::StaticEquals { .. } | FilterExpr::And { .. } => unreachable!(),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{VariableKind, VariableSchema, Visit};
    use crate::hmm::DecodedVisit;
    use crate::query::TimeWindow;

    fn fixture() -> (Dataset, Decoding) {
        let schema = vec![
            VariableSchema::new("x", VariableKind::Binary, VariableRole::DynamicObserved),
            VariableSchema::new("SEX", VariableKind::Categorical, VariableRole::Static),
        ];
        let rows: &[(&str, &str, &[(f64, usize)])] = &[
            ("A", "F", &[(10.0, 3), (15.0, 4)]),
            ("B", "M", &[(10.0, 3), (25.0, 4)]),
            ("C", "F", &[(5.0, 0), (9.0, 0), (30.0, 1)]),
        ];
        let subjects = rows
            .iter()
            .map(|(id, sex, visits)| Subject {
                id: id.to_string(),
                visits: visits
                    .iter()
                    .map(|&(age, _)| Visit { age, values: [("x".to_string(), None)].into_iter().collect() })
                    .collect(),
                statics: [("SEX".to_string(), sex.to_string())].into_iter().collect(),
                events: BTreeMap::new(),
            })
            .collect();
        let decoded = rows
            .iter()
            .map(|(id, _, visits)| DecodedSubject {
                subject_id: id.to_string(),
                visits: visits
                    .iter()
                    .map(|&(age, state)| {
                        let mut posterior = vec![0.0; 5];
                        posterior[state] = 1.0;
                        DecodedVisit { age, state, posterior }
                    })
                    .collect(),
                loglik: 0.0,
            })
            .collect();
        (
            Dataset { schema, subjects },
            Decoding { model_id: None, n_states: 5, subjects: decoded },
        )
    }

    fn ids(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn empty_conjunction_is_everyone() {
        let (ds, dec) = fixture();
        let ctx = EvalContext::new(&ds, Some(&dec));
        assert_eq!(evaluate(&ctx, &FilterExpr::all()).unwrap(), ids(&["A", "B", "C"]));
    }

    #[test]
    fn transition_window_on_arrival() {
        let (ds, dec) = fixture();
        let ctx = EvalContext::new(&ds, Some(&dec));
        let f = FilterExpr::Transition { from: 3, to: 4, window: TimeWindow::new(0.0, 20.0) };
        assert_eq!(evaluate(&ctx, &f).unwrap(), ids(&["A"]));
    }

    #[test]
    fn conjunction_narrows() {
        let (ds, dec) = fixture();
        let ctx = EvalContext::new(&ds, Some(&dec));
        let sex = FilterExpr::StaticEquals { var: "SEX".into(), value: "F".into() };
        let state = FilterExpr::StateAtTime { state: 3, window: TimeWindow::ALL };
        let both = FilterExpr::And { filters: vec![sex.clone(), state.clone()] };
        assert_eq!(evaluate(&ctx, &sex).unwrap(), ids(&["A", "C"]));
        assert_eq!(evaluate(&ctx, &both).unwrap(), ids(&["A"]));
        let pattern = FilterExpr::PatternContains { states: vec![0, 1] };
        assert_eq!(evaluate(&ctx, &pattern).unwrap(), ids(&["C"]));
    }

    #[test]
    fn reference_errors() {
        let (ds, dec) = fixture();
        let ctx = EvalContext::new(&ds, Some(&dec));
        let f = FilterExpr::StaticEquals { var: "AGE".into(), value: "1".into() };
        assert_eq!(evaluate(&ctx, &f), Err(QueryError::UnknownVariable("AGE".into())));
        let f = FilterExpr::StateAtTime { state: 9, window: TimeWindow::ALL };
        assert!(matches!(evaluate(&ctx, &f), Err(QueryError::UnknownState { state: 9, .. })));
        let no_model = EvalContext::new(&ds, None);
        let f = FilterExpr::StateAtTime { state: 0, window: TimeWindow::ALL };
        assert_eq!(evaluate(&no_model, &f), Err(QueryError::NoDecoding));
    }
}
