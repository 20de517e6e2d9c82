//! Baum-Welch EM with masked transitions and missing-data-aware emissions.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use super::grid::{discretize, GridSequence};
use super::inference::{forward_backward, Chain, Emissions, Lattice};
use super::{EmissionKind, EmissionParams, HmmConfig, HmmError, HmmModel};
use crate::data::{Dataset, VariableRole};

/// Bernoulli parameters are kept inside `[P_MIN, 1 - P_MIN]` so held-out
/// data never has probability zero.
pub const P_MIN: f64 = 1e-6;

/// Dirichlet concentration on the diagonal relative to other allowed cells.
const DIAGONAL_BIAS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RestartReport {
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Training log-likelihood at each E-step, in order.
    pub loglik_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: HmmModel,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

pub fn train(ds: &Dataset, cfg: &HmmConfig) -> Result<HmmModel, HmmError> {
    Ok(train_with_report(ds, cfg)?.model)
}

/// Per-variable summary of the non-missing training values.
#[derive(Debug, Clone)]
struct VariableStats {
    values: Vec<f64>,
    var: f64,
}

struct Problem<'a> {
    cfg: &'a HmmConfig,
    grids: Vec<GridSequence>,
    stats: Vec<VariableStats>,
    /// Absolute variance floor per variable.
    floors: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(ds: &Dataset, cfg: &'a HmmConfig) -> Result<Self, HmmError> {
        cfg.validate()?;
        if ds.subjects.is_empty() {
            return Err(HmmError::EmptyDataset);
        }
        let variables = cfg.variables();
        for name in &variables {
            match ds.variable(name) {
                Some(v) if v.role == VariableRole::DynamicObserved => {}
                _ => return Err(HmmError::UnknownVariable(name.clone())),
            }
        }
        let grids: Vec<GridSequence> = ds
            .subjects
            .iter()
            .map(|s| discretize(s, cfg.time_unit, &variables))
            .collect();
        let stats: Vec<VariableStats> = (0..variables.len())
            .map(|v| {
                let values: Vec<f64> = grids
                    .iter()
                    .flat_map(|g| g.steps.iter().filter_map(move |obs| obs[v]))
                    .collect();
                let n = values.len().max(1) as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                VariableStats { values, var }
            })
            .collect();
        let floors = variables
            .iter()
            .zip(&stats)
            .map(|(name, st)| {
                if cfg.emissions[name] == EmissionKind::Gaussian && !(st.var > 0.0) {
                    warn!("variable `{name}` is constant; gaussian variance uses the absolute floor");
                }
                if st.var > 0.0 {
                    cfg.variance_floor * st.var
                } else {
                    cfg.variance_floor
                }
            })
            .collect();
        Ok(Problem {
            cfg,
            grids,
            stats,
            floors,
        })
    }

    fn initial_model(&self, rng: &mut ChaCha8Rng) -> HmmModel {
        let k = self.cfg.n_states;
        let mask = &self.cfg.transition_mask;
        let pi = dirichlet(rng, &vec![1.0; k]);
        let trans = (0..k)
            .map(|i| {
                let allowed: Vec<usize> = (0..k).filter(|&j| mask.allows(i, j)).collect();
                let alpha: Vec<f64> = allowed
                    .iter()
                    .map(|&j| if j == i { DIAGONAL_BIAS } else { 1.0 })
                    .collect();
                let draw = dirichlet(rng, &alpha);
                let mut row = vec![0.0; k];
                for (&j, p) in allowed.iter().zip(draw) {
                    row[j] = p;
                }
                row
            })
            .collect();
        let emissions = self
            .cfg
            .emissions
            .iter()
            .zip(self.stats.iter().zip(&self.floors))
            .map(|((name, kind), (st, &floor))| {
                let params = match kind {
                    EmissionKind::Bernoulli => EmissionParams::Bernoulli {
                        p: (0..k).map(|_| rng.random_range(0.2..0.8)).collect(),
                    },
                    EmissionKind::Gaussian => EmissionParams::Gaussian {
                        mean: (0..k)
                            .map(|_| {
                                if st.values.is_empty() {
                                    0.0
                                } else {
                                    st.values[rng.random_range(0..st.values.len())]
                                }
                            })
                            .collect(),
                        var: vec![st.var.max(floor); k],
                    },
                };
                (name.clone(), params)
            })
            .collect();
        HmmModel {
            config: self.cfg.clone(),
            pi,
            trans,
            emissions,
            train_loglik: f64::NEG_INFINITY,
        }
    }
}

fn dirichlet(rng: &mut ChaCha8Rng, alpha: &[f64]) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng).max(1e-300))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Sufficient statistics of one E-step.
struct Expectations {
    loglik: f64,
    pi: Vec<f64>,
    trans: Vec<f64>,
    /// Per variable, per state: `[sum w, sum w*x, sum w*x^2]`.
    emis: Vec<Vec<[f64; 3]>>,
}

impl Expectations {
    fn zeros(k: usize, n_vars: usize) -> Self {
        Expectations {
            loglik: 0.0,
            pi: vec![0.0; k],
            trans: vec![0.0; k * k],
            emis: vec![vec![[0.0; 3]; k]; n_vars],
        }
    }

    fn add(&mut self, other: &Expectations) {
        self.loglik += other.loglik;
        add_into(&mut self.pi, &other.pi);
        add_into(&mut self.trans, &other.trans);
        for (a, b) in self.emis.iter_mut().zip(&other.emis) {
            for (x, y) in a.iter_mut().zip(b) {
                for c in 0..3 {
                    x[c] += y[c];
                }
            }
        }
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

fn subject_expectations(chain: &Chain, emissions: &Emissions, n_vars: usize, seq: &GridSequence) -> Expectations {
    let k = chain.k;
    let log_b = emissions.log_table(k, seq);
    let fb = forward_backward(chain, &Lattice::from_log_table(&log_b, k), true);
    let mut ex = Expectations::zeros(k, n_vars);
    ex.loglik = fb.loglik;
    ex.pi.copy_from_slice(&fb.gamma[..k]);
    ex.trans = fb.xi.expect("xi requested");
    for (obs, gamma) in seq.steps.iter().zip(fb.gamma.chunks_exact(k)) {
        for (v, x) in obs.iter().enumerate() {
            if let Some(x) = *x {
                for (acc, &w) in ex.emis[v].iter_mut().zip(gamma) {
                    acc[0] += w;
                    acc[1] += w * x;
                    acc[2] += w * x * x;
                }
            }
        }
    }
    ex
}

impl Problem<'_> {
    fn e_step(&self, model: &HmmModel) -> Expectations {
        let chain = Chain::from_model(model);
        let emissions = Emissions::from_model(model);
        let n_vars = self.stats.len();
        let per_subject: Vec<Expectations> = self
            .grids
            .par_iter()
            .map(|g| subject_expectations(&chain, &emissions, n_vars, g))
            .collect();
        // Fixed subject order keeps the reduction deterministic.
        let mut total = Expectations::zeros(self.cfg.n_states, self.stats.len());
        for ex in &per_subject {
            total.add(ex);
        }
        total
    }

    fn m_step(&self, model: &HmmModel, ex: &Expectations) -> HmmModel {
        let k = self.cfg.n_states;
        let mask = &self.cfg.transition_mask;
        let mut next = model.clone();

        let pi_total: f64 = ex.pi.iter().sum();
        if pi_total > 0.0 {
            next.pi = ex.pi.iter().map(|x| x / pi_total).collect();
        }
        for i in 0..k {
            let mut row: Vec<f64> = (0..k)
                .map(|j| if mask.allows(i, j) { ex.trans[i * k + j] } else { 0.0 })
                .collect();
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|x| *x /= total);
                next.trans[i] = row;
            }
        }
        for ((params, acc), &floor) in next.emissions.values_mut().zip(&ex.emis).zip(&self.floors) {
            match params {
                EmissionParams::Bernoulli { p } => {
                    for (p, a) in p.iter_mut().zip(acc) {
                        if a[0] > 0.0 {
                            *p = (a[1] / a[0]).clamp(P_MIN, 1.0 - P_MIN);
                        }
                    }
                }
                EmissionParams::Gaussian { mean, var } => {
                    for ((m, v), a) in mean.iter_mut().zip(var.iter_mut()).zip(acc) {
                        if a[0] > 0.0 {
                            let mu = a[1] / a[0];
                            *m = mu;
                            *v = (a[2] / a[0] - mu * mu).max(floor);
                        }
                    }
                }
            }
        }
        next
    }

    fn fit(&self, restart: usize) -> (HmmModel, RestartReport) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(restart as u64);
        let mut model = self.initial_model(&mut rng);
        let mut history = Vec::new();
        let mut converged = false;
        loop {
            let ex = self.e_step(&model);
            model.train_loglik = ex.loglik;
            let prev = history.last().copied();
            history.push(ex.loglik);
            if let Some(prev) = prev {
                if ex.loglik - prev < self.cfg.rel_tol * prev.abs() {
                    converged = true;
                    break;
                }
            }
            if history.len() > self.cfg.max_iters {
                break;
            }
            model = self.m_step(&model, &ex);
        }
        debug!(
            "restart {restart}: {} iterations, loglik {}",
            history.len(),
            model.train_loglik
        );
        let report = RestartReport {
            restart,
            iterations: history.len() - 1,
            converged,
            loglik_history: history,
        };
        (model, report)
    }
}

/// Runs `restarts` seeded EM fits and keeps the one with the highest
/// training log-likelihood (earliest restart on ties).
pub fn train_with_report(ds: &Dataset, cfg: &HmmConfig) -> Result<TrainReport, HmmError> {
    let problem = Problem::new(ds, cfg)?;
    let mut best: Option<(HmmModel, usize)> = None;
    let mut reports = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let (model, report) = problem.fit(restart);
        let better = match &best {
            None => true,
            Some((b, _)) => model.train_loglik > b.train_loglik,
        };
        if better {
            best = Some((model, restart));
        }
        reports.push(report);
    }
    let (model, best_restart) = best.expect("at least one restart");
    Ok(TrainReport {
        model,
        best_restart,
        restarts: reports,
    })
}
