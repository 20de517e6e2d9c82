//! Closed frequent state-transition patterns (BIDE) over decoded sequences.
//!
//! Patterns are gapped subsequences of single states. Support counts
//! distinct subjects. A pattern is closed when no super-sequence has the
//! same support; BIDE checks closure with forward/backward extension
//! events and prunes with BackScan, so no candidate set is maintained.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::DecodedSubject;

/// Default list length of the pattern view.
pub const DEFAULT_TOP_N: usize = 50;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("no sequences to mine")]
    EmptyInput,
    #[error("min_support must be at least 1")]
    InvalidSupport,
}

impl PatternError {
    pub fn category(&self) -> &'static str {
        match self {
            PatternError::EmptyInput => "EmptyInput",
            PatternError::InvalidSupport => "InvalidSupport",
        }
    }
}

/// A subject's state labels, usually run-length collapsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSequence {
    pub subject_id: String,
    pub states: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinedPattern {
    pub states: Vec<usize>,
    pub support: usize,
}

/// Viterbi labels with consecutive duplicates removed.
pub fn collapse(decoded: &DecodedSubject) -> StateSequence {
    let mut states = decoded.labels();
    states.dedup();
    StateSequence {
        subject_id: decoded.subject_id.clone(),
        states,
    }
}

/// Sequences for mining; `collapse = false` keeps self-repeats.
pub fn sequences(decoded: &[DecodedSubject], collapse_runs: bool) -> Vec<StateSequence> {
    decoded
        .iter()
        .map(|d| {
            if collapse_runs {
                collapse(d)
            } else {
                StateSequence {
                    subject_id: d.subject_id.clone(),
                    states: d.labels(),
                }
            }
        })
        .collect()
}

/// Whether `pattern` occurs in `states` in order, gaps allowed.
pub fn contains_pattern(states: &[usize], pattern: &[usize]) -> bool {
    let mut it = states.iter();
    pattern.iter().all(|p| it.any(|s| s == p))
}

/// All closed patterns of length >= 2 with support >= `min_support`,
/// sorted by support (descending) then state sequence, truncated to `top_n`.
pub fn mine_patterns(
    seqs: &[StateSequence],
    min_support: usize,
    top_n: usize,
) -> Result<Vec<MinedPattern>, PatternError> {
    let mut patterns = mine_closed(seqs, min_support)?;
    patterns.retain(|p| p.states.len() >= 2);
    patterns.sort_by(|a, b| b.support.cmp(&a.support).then_with(|| a.states.cmp(&b.states)));
    patterns.truncate(top_n);
    Ok(patterns)
}

/// Every closed frequent pattern, single states included, unsorted.
pub fn mine_closed(seqs: &[StateSequence], min_support: usize) -> Result<Vec<MinedPattern>, PatternError> {
    if seqs.is_empty() {
        return Err(PatternError::EmptyInput);
    }
    if min_support == 0 {
        return Err(PatternError::InvalidSupport);
    }
    let db: Vec<&[usize]> = seqs.iter().map(|s| s.states.as_slice()).collect();
    let alphabet = db.iter().flat_map(|s| s.iter()).max().map_or(0, |m| m + 1);
    let mut miner = Bide {
        db,
        alphabet,
        min_support,
        out: Vec::new(),
    };
    let root: Vec<Projection> = (0..miner.db.len()).map(|seq| Projection { seq, end: 0 }).collect();
    for (item, count) in miner.local_counts(&root).into_iter().enumerate() {
        if count >= min_support {
            let proj = miner.project(&root, item);
            let prefix = vec![item];
            if !miner.backscan_prunes(&prefix, &proj) {
                miner.grow(prefix, proj);
            }
        }
    }
    Ok(miner.out)
}

/// A sequence supporting the current prefix and the index just past the
/// prefix's earliest (first) instance in it.
#[derive(Debug, Clone, Copy)]
struct Projection {
    seq: usize,
    end: usize,
}

struct Bide<'a> {
    db: Vec<&'a [usize]>,
    alphabet: usize,
    min_support: usize,
    out: Vec<MinedPattern>,
}

impl Bide<'_> {
    /// Number of projected suffixes containing each item.
    fn local_counts(&self, proj: &[Projection]) -> Vec<usize> {
        let mut counts = vec![0; self.alphabet];
        let mut seen = vec![usize::MAX; self.alphabet];
        for (n, p) in proj.iter().enumerate() {
            for &item in &self.db[p.seq][p.end..] {
                if seen[item] != n {
                    seen[item] = n;
                    counts[item] += 1;
                }
            }
        }
        counts
    }

    fn project(&self, proj: &[Projection], item: usize) -> Vec<Projection> {
        proj.iter()
            .filter_map(|p| {
                self.db[p.seq][p.end..]
                    .iter()
                    .position(|&s| s == item)
                    .map(|off| Projection { seq: p.seq, end: p.end + off + 1 })
            })
            .collect()
    }

    fn grow(&mut self, prefix: Vec<usize>, proj: Vec<Projection>) {
        let support = proj.len();
        let counts = self.local_counts(&proj);
        let forward = counts.contains(&support);
        if !forward && !self.has_backward_extension(&prefix, &proj) {
            self.out.push(MinedPattern {
                states: prefix.clone(),
                support,
            });
        }
        for (item, count) in counts.into_iter().enumerate() {
            if count < self.min_support {
                continue;
            }
            let next_proj = self.project(&proj, item);
            let mut next = prefix.clone();
            next.push(item);
            if !self.backscan_prunes(&next, &next_proj) {
                self.grow(next, next_proj);
            }
        }
    }

    /// Closure check. Inserting an item before `prefix[i]` keeps support iff
    /// the item occurs in every supporting sequence strictly between the end
    /// of the earliest match of `prefix[..i]` and the latest feasible
    /// position of `prefix[i]` (the i-th maximum period).
    fn has_backward_extension(&self, prefix: &[usize], proj: &[Projection]) -> bool {
        self.some_period_is_shared(prefix, proj, |seq, _| last_in_last(seq, prefix))
    }

    /// BackScan: if an item occurs in every i-th semi-maximum period (bounded
    /// by the last-in-first appearances), no extension of `prefix` is closed.
    fn backscan_prunes(&self, prefix: &[usize], proj: &[Projection]) -> bool {
        self.some_period_is_shared(prefix, proj, |seq, end| last_in_first(seq, prefix, end))
    }

    fn some_period_is_shared(
        &self,
        prefix: &[usize],
        proj: &[Projection],
        upper: impl Fn(&[usize], usize) -> Vec<usize>,
    ) -> bool {
        let n = prefix.len();
        let bounds: Vec<(Vec<usize>, Vec<usize>)> = proj
            .iter()
            .map(|p| {
                let seq = self.db[p.seq];
                (first_instance(seq, prefix), upper(seq, p.end))
            })
            .collect();
        let mut shared = vec![0usize; self.alphabet];
        let mut stamp = vec![usize::MAX; self.alphabet];
        for i in 0..n {
            shared.fill(0);
            for (row, (p, (first, up))) in proj.iter().zip(&bounds).enumerate() {
                let seq = self.db[p.seq];
                let lo = if i == 0 { 0 } else { first[i - 1] + 1 };
                let hi = up[i];
                if lo < hi {
                    for &item in &seq[lo..hi] {
                        if stamp[item] != row {
                            stamp[item] = row;
                            shared[item] += 1;
                        }
                    }
                }
            }
            stamp.fill(usize::MAX);
            if shared.contains(&proj.len()) {
                return true;
            }
        }
        false
    }
}

/// Positions of the greedy earliest match of `pattern` in `seq`.
fn first_instance(seq: &[usize], pattern: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(pattern.len());
    let mut pos = 0;
    for &p in pattern {
        let off = seq[pos..].iter().position(|&s| s == p).expect("pattern is contained");
        out.push(pos + off);
        pos += off + 1;
    }
    out
}

/// Latest positions of each pattern element such that the remainder of
/// the pattern still matches after it, scanning from the end of `seq`.
fn last_in_last(seq: &[usize], pattern: &[usize]) -> Vec<usize> {
    last_before(seq, pattern, seq.len())
}

/// Like [`last_in_last`], but anchored so the last element sits at the end
/// of the first instance (`end - 1`).
fn last_in_first(seq: &[usize], pattern: &[usize], end: usize) -> Vec<usize> {
    let mut out = last_before(seq, &pattern[..pattern.len() - 1], end - 1);
    out.push(end - 1);
    out
}

fn last_before(seq: &[usize], pattern: &[usize], limit: usize) -> Vec<usize> {
    let mut out = vec![0; pattern.len()];
    let mut bound = limit;
    for (slot, &p) in out.iter_mut().zip(pattern).rev() {
        let pos = seq[..bound].iter().rposition(|&s| s == p).expect("pattern is contained");
        *slot = pos;
        bound = pos;
    }
    out
}
