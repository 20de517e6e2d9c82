//! Path enumeration for hidden Markov chains.

pub fn bernoulli(p: f64, x: f64) -> f64 {
    if x >= 0.5 {
        p
    } else {
        1.0 - p
    }
}

pub fn gaussian(mean: f64, var: f64, x: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

#[derive(Debug, Clone)]
pub struct Enumerated {
    /// `ln P(observations)`.
    pub loglik: f64,
    /// `posteriors[t][k] = P(state_t = k | observations)`.
    pub posteriors: Vec<Vec<f64>>,
    /// The most probable path; the lexicographically smallest one on ties.
    pub best_path: Vec<usize>,
}

/// Sums over all `K^T` state paths. `lik[t][k]` is the emission likelihood
/// of step `t` in state `k` (1 for an unobserved step).
pub fn enumerate(pi: &[f64], trans: &[Vec<f64>], lik: &[Vec<f64>]) -> Enumerated {
    let k = pi.len();
    let t_len = lik.len();
    let mut total = 0.0;
    let mut marginals = vec![vec![0.0; k]; t_len];
    let mut best = (-1.0, Vec::new());
    let mut path = vec![0usize; t_len];
    loop {
        let mut p = pi[path[0]] * lik[0][path[0]];
        for t in 1..t_len {
            p *= trans[path[t - 1]][path[t]] * lik[t][path[t]];
        }
        total += p;
        for (t, &s) in path.iter().enumerate() {
            marginals[t][s] += p;
        }
        if p > best.0 {
            best = (p, path.clone());
        }
        // Next path in lexicographic order.
        let mut t = t_len;
        loop {
            if t == 0 {
                let posteriors = marginals
                    .into_iter()
                    .map(|row| row.into_iter().map(|m| m / total).collect())
                    .collect();
                return Enumerated {
                    loglik: total.ln(),
                    posteriors,
                    best_path: best.1,
                };
            }
            t -= 1;
            path[t] += 1;
            if path[t] < k {
                break;
            }
            path[t] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_example() {
        let pi = [0.6, 0.4];
        let trans = vec![vec![0.7, 0.3], vec![0.4, 0.6]];
        let lik = vec![vec![0.5, 0.1], vec![0.4, 0.3]];
        let e = enumerate(&pi, &trans, &lik);
        let total: f64 = 0.6 * 0.5 * (0.7 * 0.4 + 0.3 * 0.3) + 0.4 * 0.1 * (0.4 * 0.4 + 0.6 * 0.3);
        assert!((e.loglik - total.ln()).abs() < 1e-15);
        assert_eq!(e.best_path, vec![0, 0]);
        assert!((e.posteriors[1].iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
