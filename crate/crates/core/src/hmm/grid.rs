use crate::data::Subject;

/// A subject's visits laid out on the uniform age grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSequence {
    pub subject_id: String,
    /// Grid index of the first step, i.e. `round(first_age / time_unit)`.
    pub origin: i64,
    /// One observation vector per step, in model variable order; non-visit
    /// steps are all `None`.
    pub steps: Vec<Vec<Option<f64>>>,
    /// Step index (relative to `origin`) of each visit, in visit order.
    pub visit_steps: Vec<usize>,
}

impl GridSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Grid index of an age: `floor(age / time_unit + 0.5)`.
pub fn grid_index(age: f64, time_unit: f64) -> i64 {
    (age / time_unit + 0.5).floor() as i64
}

/// Maps each visit to its grid step. Visits sharing a step merge field-wise
/// with the later visit winning.
pub fn discretize(subject: &Subject, time_unit: f64, variables: &[String]) -> GridSequence {
    let origin = grid_index(subject.first_age(), time_unit);
    let last = grid_index(subject.last_age(), time_unit);
    let len = (last - origin + 1).max(1) as usize;
    let mut steps = vec![vec![None; variables.len()]; len];
    let mut visit_steps = Vec::with_capacity(subject.visits.len());
    for visit in &subject.visits {
        let step = (grid_index(visit.age, time_unit) - origin) as usize;
        for (slot, var) in steps[step].iter_mut().zip(variables) {
            if let Some(x) = visit.value(var) {
                *slot = Some(x);
            }
        }
        visit_steps.push(step);
    }
    GridSequence {
        subject_id: subject.id.clone(),
        origin,
        steps,
        visit_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Visit;
    use std::collections::BTreeMap;

    fn subject(visits: &[(f64, Option<f64>, Option<f64>)]) -> Subject {
        Subject {
            id: "S".into(),
            visits: visits
                .iter()
                .map(|&(age, a, b)| Visit {
                    age,
                    values: [("a".to_string(), a), ("b".to_string(), b)].into_iter().collect(),
                })
                .collect(),
            statics: BTreeMap::new(),
            events: BTreeMap::new(),
        }
    }

    fn vars() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn gap_is_padded_with_missing_step() {
        let g = discretize(&subject(&[(0.0, Some(1.0), None), (2.0, Some(0.0), Some(1.0))]), 1.0, &vars());
        assert_eq!(g.len(), 3);
        assert_eq!(g.steps[0], vec![Some(1.0), None]);
        assert_eq!(g.steps[1], vec![None, None]);
        assert_eq!(g.steps[2], vec![Some(0.0), Some(1.0)]);
        assert_eq!(g.visit_steps, vec![0, 2]);
    }

    #[test]
    fn single_visit_single_step() {
        let g = discretize(&subject(&[(37.2, Some(1.0), Some(0.0))]), 1.0, &vars());
        assert_eq!(g.len(), 1);
        assert_eq!(g.origin, 37);
    }

    #[test]
    fn nearby_visits_share_a_step() {
        let g = discretize(
            &subject(&[(11.6, Some(1.0), Some(1.0)), (12.4, None, Some(0.0))]),
            1.0,
            &vars(),
        );
        assert_eq!(g.len(), 1);
        assert_eq!(g.origin, 12);
        assert_eq!(g.steps[0], vec![Some(1.0), Some(0.0)]);
        assert_eq!(g.visit_steps, vec![0, 0]);
    }

    #[test]
    fn coarser_unit() {
        let g = discretize(&subject(&[(0.0, Some(1.0), None), (7.0, Some(1.0), None)]), 3.0, &vars());
        // 7/3 + 0.5 = 2.83 -> step 2
        assert_eq!(g.len(), 3);
        assert_eq!(g.visit_steps, vec![0, 2]);
    }
}
