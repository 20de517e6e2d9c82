//! Scaled forward-backward, log-space Viterbi, and per-subject decoding.

use rayon::prelude::*;

use super::grid::{discretize, GridSequence};
use super::{DecodedSubject, DecodedVisit, EmissionParams, HmmModel};
use crate::data::{Dataset, Subject};

/// Flattened chain parameters.
pub(crate) struct Chain {
    pub k: usize,
    pub pi: Vec<f64>,
    /// Row-major `k x k`.
    pub trans: Vec<f64>,
    /// Transpose of `trans`, so the backward pass runs over contiguous columns.
    pub trans_t: Vec<f64>,
}

impl Chain {
    pub fn from_model(model: &HmmModel) -> Self {
        let k = model.n_states();
        let trans: Vec<f64> = model.trans.iter().flatten().copied().collect();
        let mut trans_t = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                trans_t[j * k + i] = trans[i * k + j];
            }
        }
        Chain {
            k,
            pi: model.pi.clone(),
            trans,
            trans_t,
        }
    }
}

/// Per-state constants of each emission density, computed once per model so
/// the per-step work has no logarithms. Values equal
/// [`EmissionParams::log_density`] bit for bit.
enum LogDensity {
    Bernoulli { on: Vec<f64>, off: Vec<f64> },
    Gaussian { mean: Vec<f64>, var: Vec<f64>, log_norm: Vec<f64> },
}

pub(crate) struct Emissions(Vec<LogDensity>);

impl Emissions {
    pub fn from_model(model: &HmmModel) -> Self {
        Emissions(
            model
                .emission_list()
                .into_iter()
                .map(|e| match e {
                    EmissionParams::Bernoulli { p } => LogDensity::Bernoulli {
                        on: p.iter().map(|p| p.ln()).collect(),
                        off: p.iter().map(|p| (1.0 - p).ln()).collect(),
                    },
                    EmissionParams::Gaussian { mean, var } => LogDensity::Gaussian {
                        mean: mean.clone(),
                        var: var.clone(),
                        log_norm: var.iter().map(|v| (2.0 * std::f64::consts::PI * v).ln()).collect(),
                    },
                })
                .collect(),
        )
    }

    /// Raw log emission likelihoods, row-major `steps x k`. Missing
    /// variables are skipped, so a fully missing step is all zeros.
    pub fn log_table(&self, k: usize, seq: &GridSequence) -> Vec<f64> {
        let mut out = vec![0.0; seq.len() * k];
        for (row, obs) in out.chunks_exact_mut(k).zip(&seq.steps) {
            for (density, x) in self.0.iter().zip(obs) {
                let Some(x) = *x else { continue };
                match density {
                    LogDensity::Bernoulli { on, off } => {
                        let l = if x >= 0.5 { on } else { off };
                        for (cell, l) in row.iter_mut().zip(l) {
                            *cell += l;
                        }
                    }
                    LogDensity::Gaussian { mean, var, log_norm } => {
                        for (s, cell) in row.iter_mut().enumerate() {
                            let d = x - mean[s];
                            *cell += -0.5 * (log_norm[s] + d * d / var[s]);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Emission likelihoods rescaled per step by their maximum, with the
/// removed log factor kept in `offset`.
pub(crate) struct Lattice {
    pub steps: usize,
    pub b: Vec<f64>,
    pub offset: Vec<f64>,
}

impl Lattice {
    pub fn from_log_table(log_b: &[f64], k: usize) -> Self {
        let steps = log_b.len() / k;
        let mut b = vec![0.0; log_b.len()];
        let mut offset = vec![0.0; steps];
        for (t, (row, out)) in log_b.chunks_exact(k).zip(b.chunks_exact_mut(k)).enumerate() {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m == f64::NEG_INFINITY {
                continue;
            }
            offset[t] = m;
            for (o, &l) in out.iter_mut().zip(row) {
                *o = (l - m).exp();
            }
        }
        Lattice { steps, b, offset }
    }
}

/// Result of a scaled forward-backward pass.
pub(crate) struct ForwardBackward {
    pub loglik: f64,
    /// Row-major `steps x k`; each row sums to 1.
    pub gamma: Vec<f64>,
    /// Expected transition counts summed over steps, row-major `k x k`.
    pub xi: Option<Vec<f64>>,
}

/// Forward pass: normalized alphas and per-step scale factors. Returns
/// `None` when the sequence has probability zero.
fn forward(chain: &Chain, lat: &Lattice) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = chain.k;
    let mut alpha = vec![0.0; lat.steps * k];
    let mut scale = vec![0.0; lat.steps];
    for t in 0..lat.steps {
        let b = &lat.b[t * k..(t + 1) * k];
        let (prev, cur) = alpha.split_at_mut(t * k);
        let cur = &mut cur[..k];
        if t == 0 {
            for j in 0..k {
                cur[j] = chain.pi[j] * b[j];
            }
        } else {
            let prev = &prev[(t - 1) * k..];
            for (i, &a) in prev.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &chain.trans[i * k..(i + 1) * k];
                for j in 0..k {
                    cur[j] += a * row[j];
                }
            }
            for j in 0..k {
                cur[j] *= b[j];
            }
        }
        let c: f64 = cur.iter().sum();
        if !(c > 0.0) {
            return None;
        }
        for x in cur.iter_mut() {
            *x /= c;
        }
        scale[t] = c;
    }
    Some((alpha, scale))
}

pub(crate) fn forward_backward(chain: &Chain, lat: &Lattice, want_xi: bool) -> ForwardBackward {
    let k = chain.k;
    let steps = lat.steps;
    let Some((alpha, scale)) = forward(chain, lat) else {
        return ForwardBackward {
            loglik: f64::NEG_INFINITY,
            gamma: vec![1.0 / k as f64; steps * k],
            xi: want_xi.then(|| vec![0.0; k * k]),
        };
    };
    let loglik: f64 = scale
        .iter()
        .zip(&lat.offset)
        .map(|(c, m)| c.ln() + m)
        .sum();

    let mut beta = vec![0.0; steps * k];
    beta[(steps - 1) * k..].fill(1.0);
    let mut xi = want_xi.then(|| vec![0.0; k * k]);
    let mut weighted = vec![0.0; k];
    for t in (0..steps.saturating_sub(1)).rev() {
        let b_next = &lat.b[(t + 1) * k..(t + 2) * k];
        let c_next = scale[t + 1];
        let (head, tail) = beta.split_at_mut((t + 1) * k);
        let beta_next = &tail[..k];
        for j in 0..k {
            weighted[j] = b_next[j] * beta_next[j] / c_next;
        }
        let beta_t = &mut head[t * k..];
        beta_t.fill(0.0);
        for (j, &w) in weighted.iter().enumerate() {
            let col = &chain.trans_t[j * k..(j + 1) * k];
            for (b, a) in beta_t.iter_mut().zip(col) {
                *b += a * w;
            }
        }
        if let Some(xi) = xi.as_mut() {
            let alpha_t = &alpha[t * k..(t + 1) * k];
            for i in 0..k {
                let a = alpha_t[i];
                if a == 0.0 {
                    continue;
                }
                let row = &chain.trans[i * k..(i + 1) * k];
                let out = &mut xi[i * k..(i + 1) * k];
                for j in 0..k {
                    out[j] += a * row[j] * weighted[j];
                }
            }
        }
    }

    let mut gamma = alpha;
    for (g, b) in gamma.chunks_exact_mut(k).zip(beta.chunks_exact(k)) {
        for (x, y) in g.iter_mut().zip(b) {
            *x *= y;
        }
        let s: f64 = g.iter().sum();
        for x in g.iter_mut() {
            *x /= s;
        }
    }
    ForwardBackward { loglik, gamma, xi }
}

/// Most probable path in log space. Ties go to the lower state index, both
/// for the final state and for every back-pointer.
pub(crate) fn viterbi_path(chain: &Chain, log_b: &[f64]) -> Vec<usize> {
    let k = chain.k;
    let steps = log_b.len() / k;
    let log_pi: Vec<f64> = chain.pi.iter().map(|p| p.ln()).collect();
    let log_a: Vec<f64> = chain.trans.iter().map(|p| p.ln()).collect();
    let mut delta: Vec<f64> = (0..k).map(|j| log_pi[j] + log_b[j]).collect();
    let mut next = vec![0.0; k];
    let mut back = vec![0usize; steps * k];
    for t in 1..steps {
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..k {
                let v = delta[i] + log_a[i * k + j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + log_b[t * k + j];
            back[t * k + j] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut state = 0;
    let mut best = f64::NEG_INFINITY;
    for (j, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            state = j;
        }
    }
    let mut path = vec![0; steps];
    for t in (0..steps).rev() {
        path[t] = state;
        state = back[t * k + state];
    }
    path
}

fn grid_for(model: &HmmModel, subject: &Subject) -> GridSequence {
    discretize(subject, model.config.time_unit, &model.config.variables())
}

/// Smoothed posteriors for every grid step.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    pub loglik: f64,
    pub gamma: Vec<Vec<f64>>,
}

pub fn posteriors(model: &HmmModel, seq: &GridSequence) -> Smoothed {
    let k = model.n_states();
    let log_b = Emissions::from_model(model).log_table(k, seq);
    let fb = forward_backward(&Chain::from_model(model), &Lattice::from_log_table(&log_b, k), false);
    Smoothed {
        loglik: fb.loglik,
        gamma: fb.gamma.chunks_exact(k).map(<[f64]>::to_vec).collect(),
    }
}

/// Viterbi state for every grid step.
pub fn viterbi(model: &HmmModel, seq: &GridSequence) -> Vec<usize> {
    let k = model.n_states();
    let log_b = Emissions::from_model(model).log_table(k, seq);
    viterbi_path(&Chain::from_model(model), &log_b)
}

/// `log P(observations)` of one subject under the discretized model.
pub fn loglikelihood(model: &HmmModel, subject: &Subject) -> f64 {
    let seq = grid_for(model, subject);
    let k = model.n_states();
    let log_b = Emissions::from_model(model).log_table(k, &seq);
    let lat = Lattice::from_log_table(&log_b, k);
    match forward(&Chain::from_model(model), &lat) {
        Some((_, scale)) => scale.iter().zip(&lat.offset).map(|(c, m)| c.ln() + m).sum(),
        None => f64::NEG_INFINITY,
    }
}

/// Viterbi labels and posteriors, reported at visit steps only.
pub fn decode_subject(model: &HmmModel, subject: &Subject) -> DecodedSubject {
    let seq = grid_for(model, subject);
    let k = model.n_states();
    let chain = Chain::from_model(model);
    let log_b = Emissions::from_model(model).log_table(k, &seq);
    let path = viterbi_path(&chain, &log_b);
    let fb = forward_backward(&chain, &Lattice::from_log_table(&log_b, k), false);
    let visits = subject
        .visits
        .iter()
        .zip(&seq.visit_steps)
        .map(|(visit, &step)| DecodedVisit {
            age: visit.age,
            state: path[step],
            posterior: fb.gamma[step * k..(step + 1) * k].to_vec(),
        })
        .collect();
    DecodedSubject {
        subject_id: subject.id.clone(),
        visits,
        loglik: fb.loglik,
    }
}

pub fn decode(model: &HmmModel, ds: &Dataset) -> Vec<DecodedSubject> {
    ds.subjects
        .par_iter()
        .map(|s| decode_subject(model, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Visit;
    use crate::hmm::{EmissionKind, HmmConfig};
    use std::collections::BTreeMap;

    fn one_var_model(pi: [f64; 2], trans: [[f64; 2]; 2], p: [f64; 2]) -> HmmModel {
        let mut emissions = BTreeMap::new();
        emissions.insert("x".to_string(), EmissionKind::Bernoulli);
        HmmModel {
            config: HmmConfig::new(2, emissions),
            pi: pi.to_vec(),
            trans: trans.iter().map(|r| r.to_vec()).collect(),
            emissions: [("x".to_string(), EmissionParams::Bernoulli { p: p.to_vec() })]
                .into_iter()
                .collect(),
            train_loglik: 0.0,
        }
    }

    fn subject(obs: &[Option<f64>]) -> Subject {
        Subject {
            id: "s".into(),
            visits: obs
                .iter()
                .enumerate()
                .map(|(t, &x)| Visit {
                    age: t as f64,
                    values: [("x".to_string(), x)].into_iter().collect(),
                })
                .collect(),
            statics: BTreeMap::new(),
            events: BTreeMap::new(),
        }
    }

    fn example_model() -> HmmModel {
        one_var_model([0.5, 0.5], [[0.7, 0.3], [0.4, 0.6]], [0.9, 0.2])
    }

    #[test]
    fn certain_chain_has_zero_loglik() {
        let m = one_var_model([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
        let ll = loglikelihood(&m, &subject(&[Some(1.0), Some(1.0), Some(1.0)]));
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn two_step_enumeration() {
        // Paths: 00 0.0315, 01 0.108, 10 0.004, 11 0.048.
        let ll = loglikelihood(&example_model(), &subject(&[Some(1.0), Some(0.0)]));
        assert!((ll.exp() - 0.1915).abs() < 1e-12, "{}", ll.exp());
    }

    #[test]
    fn missing_second_observation() {
        // Second factor drops to 1: sum over paths of pi*b1*A = 0.5*0.9 + 0.5*0.2.
        let ll = loglikelihood(&example_model(), &subject(&[Some(1.0), None]));
        assert!((ll.exp() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn viterbi_picks_best_path() {
        let d = decode_subject(&example_model(), &subject(&[Some(1.0), Some(0.0)]));
        assert_eq!(d.labels(), vec![0, 1]);
    }

    #[test]
    fn deterministic_chain_one_hot_posteriors() {
        let m = one_var_model([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [0.7, 0.3]);
        let d = decode_subject(&m, &subject(&[Some(1.0), Some(0.0), None, Some(1.0)]));
        for v in &d.visits {
            assert_eq!(v.state, 0);
            assert_eq!(v.posterior, vec![1.0, 0.0]);
        }
    }

    #[test]
    fn gap_visits_report_their_own_step() {
        let mut s = subject(&[Some(1.0), Some(0.0)]);
        s.visits[1].age = 5.0;
        let d = decode_subject(&example_model(), &s);
        assert_eq!(d.visits.len(), 2);
        assert_eq!(d.visits[1].age, 5.0);
        let total: f64 = d.visits[1].posterior.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_is_neg_infinite() {
        let m = one_var_model([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]);
        let s = subject(&[Some(0.0)]);
        assert_eq!(loglikelihood(&m, &s), f64::NEG_INFINITY);
        let d = decode_subject(&m, &s);
        assert_eq!(d.visits[0].posterior, vec![0.5, 0.5]);
    }
}
