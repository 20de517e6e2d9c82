//! Synthetic cohorts drawn from a known forward-only Bernoulli chain.
//! Used by tests, benchmarks and the `synth` CLI command.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Subject, VariableKind, VariableRole, VariableSchema, Visit};
use crate::hmm::{EmissionKind, EmissionParams, HmmConfig, HmmModel, TransitionMask};

pub const ONSET_EVENT: &str = "onset";
pub const SEROCONVERSION_EVENT: &str = "seroconversion";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_states: usize,
    pub n_subjects: usize,
    pub visits_per_subject: usize,
    /// Grid steps (months) between consecutive visits.
    pub visit_interval: usize,
    pub missing_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(n_states: usize, n_subjects: usize, seed: u64) -> Self {
        SynthConfig {
            n_states,
            n_subjects,
            visits_per_subject: 20,
            visit_interval: 1,
            missing_rate: 0.2,
            seed,
        }
    }
}

/// Number of binary markers used for a `k`-state truth model.
pub fn marker_count(k: usize) -> usize {
    k.saturating_sub(1).max(3)
}

pub fn marker_name(v: usize) -> String {
    format!("AB{}", v + 1)
}

/// Forward-only chain where state `s` turns on roughly the first
/// `s / (k-1)` fraction of the markers. Stay probability 0.9 per month.
pub fn truth_model(k: usize) -> HmmModel {
    let n_vars = marker_count(k);
    let emissions: BTreeMap<String, EmissionKind> = (0..n_vars)
        .map(|v| (marker_name(v), EmissionKind::Bernoulli))
        .collect();
    let config = HmmConfig::new(k, emissions).with_mask(TransitionMask::forward(k));
    let pi = if k == 1 {
        vec![1.0]
    } else {
        // Half start healthy, the rest spread over later states.
        let mut pi = vec![0.5 / (k - 1) as f64; k];
        pi[0] = 0.5;
        pi
    };
    let trans = (0..k)
        .map(|i| {
            let mut row = vec![0.0; k];
            if i + 1 < k {
                row[i] = 0.9;
                row[i + 1] = 0.1;
            } else {
                row[i] = 1.0;
            }
            row
        })
        .collect();
    let params = (0..n_vars)
        .map(|v| {
            let p = (0..k)
                .map(|s| {
                    let on = k > 1 && (v as f64) < s as f64 * n_vars as f64 / (k - 1) as f64;
                    if on {
                        0.9
                    } else {
                        0.05
                    }
                })
                .collect();
            (marker_name(v), EmissionParams::Bernoulli { p })
        })
        .collect();
    HmmModel {
        config,
        pi,
        trans,
        emissions: params,
        train_loglik: 0.0,
    }
}

pub fn schema(k: usize) -> Vec<VariableSchema> {
    let mut schema: Vec<VariableSchema> = (0..marker_count(k))
        .map(|v| VariableSchema::new(marker_name(v), VariableKind::Binary, VariableRole::DynamicObserved))
        .collect();
    schema.push(VariableSchema::new("SEX", VariableKind::Categorical, VariableRole::Static));
    schema.push(VariableSchema::new("CENTER", VariableKind::Categorical, VariableRole::Static));
    schema.push(VariableSchema::new(ONSET_EVENT, VariableKind::Continuous, VariableRole::OutcomeEvent));
    schema.push(VariableSchema::new(
        SEROCONVERSION_EVENT,
        VariableKind::Continuous,
        VariableRole::OutcomeEvent,
    ));
    schema
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples a dataset from [`truth_model`]; returns it with the truth.
pub fn generate(cfg: &SynthConfig) -> (Dataset, HmmModel) {
    let truth = truth_model(cfg.n_states);
    let dataset = sample(&truth, cfg);
    (dataset, truth)
}

/// Samples subjects from any Bernoulli-emission model on a unit grid.
pub fn sample(truth: &HmmModel, cfg: &SynthConfig) -> Dataset {
    let k = truth.n_states();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let markers: Vec<(&String, &Vec<f64>)> = truth
        .emissions
        .iter()
        .map(|(n, e)| match e {
            EmissionParams::Bernoulli { p } => (n, p),
            EmissionParams::Gaussian { .. } => panic!("synthetic sampling supports bernoulli emissions only"),
        })
        .collect();
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for i in 0..cfg.n_subjects {
        let start: u32 = rng.random_range(0..=24);
        let mut state = draw(&mut rng, &truth.pi);
        let mut visits = Vec::with_capacity(cfg.visits_per_subject);
        let mut onset = None;
        let mut seroconversion = None;
        for t in 0..cfg.visits_per_subject {
            if t > 0 {
                for _ in 0..cfg.visit_interval.max(1) {
                    state = draw(&mut rng, &truth.trans[state]);
                }
            }
            let age = f64::from(start) + (t * cfg.visit_interval.max(1)) as f64;
            let mut values = BTreeMap::new();
            for (name, p) in &markers {
                let x = if rng.random::<f64>() < p[state] { 1.0 } else { 0.0 };
                let observed = rng.random::<f64>() >= cfg.missing_rate;
                if observed && x == 1.0 && seroconversion.is_none() {
                    seroconversion = Some(age);
                }
                values.insert((*name).clone(), observed.then_some(x));
            }
            if k > 1 && state == k - 1 && onset.is_none() {
                onset = Some(age);
            }
            visits.push(Visit { age, values });
        }
        let mut events = BTreeMap::new();
        if let Some(age) = onset {
            let delay: f64 = rng.random_range(0.0..6.0);
            events.insert(ONSET_EVENT.to_string(), ((age + delay) * 10.0).round() / 10.0);
        }
        if let Some(age) = seroconversion {
            events.insert(SEROCONVERSION_EVENT.to_string(), age);
        }
        let mut statics = BTreeMap::new();
        statics.insert("SEX".to_string(), if rng.random::<bool>() { "F" } else { "M" }.to_string());
        statics.insert(
            "CENTER".to_string(),
            ["A", "B", "C"][rng.random_range(0..3)].to_string(),
        );
        subjects.push(Subject {
            id: format!("S{:04}", i + 1),
            visits,
            statics,
            events,
        });
    }
    Dataset {
        schema: schema(k),
        subjects,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_is_a_valid_forward_model() {
        for k in 1..=6 {
            let m = truth_model(k);
            m.validate().unwrap();
        }
        let m = truth_model(3);
        let EmissionParams::Bernoulli { p } = &m.emissions["AB1"] else { panic!() };
        assert_eq!(p, &vec![0.05, 0.9, 0.9]);
        let EmissionParams::Bernoulli { p } = &m.emissions["AB3"] else { panic!() };
        assert_eq!(p, &vec![0.05, 0.05, 0.9]);
    }

    #[test]
    fn generated_dataset_is_valid_and_seeded() {
        let cfg = SynthConfig::new(3, 25, 9);
        let (a, _) = generate(&cfg);
        a.validate().unwrap();
        assert_eq!(a.subjects.len(), 25);
        assert!(a.subjects.iter().all(|s| s.visits.len() == 20));
        let (b, _) = generate(&cfg);
        assert_eq!(a, b);
    }
}
