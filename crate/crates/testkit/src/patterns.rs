//! Closed sequential patterns by exhaustive enumeration.

use std::collections::{BTreeMap, BTreeSet};

/// Whether `pattern` occurs in `seq` as a (not necessarily contiguous)
/// subsequence.
pub fn is_subsequence(pattern: &[usize], seq: &[usize]) -> bool {
    let mut it = seq.iter();
    pattern.iter().all(|p| it.any(|s| s == p))
}

pub fn support(pattern: &[usize], seqs: &[Vec<usize>]) -> usize {
    seqs.iter().filter(|s| is_subsequence(pattern, s)).count()
}

fn subsequences(seq: &[usize], out: &mut BTreeSet<Vec<usize>>) {
    for mask in 1u64..(1 << seq.len()) {
        out.insert((0..seq.len()).filter(|i| mask >> i & 1 == 1).map(|i| seq[i]).collect());
    }
}

/// Every closed pattern with support at least `min_support`: no pattern one
/// item longer that contains it has the same support.
pub fn closed_patterns(seqs: &[Vec<usize>], min_support: usize) -> BTreeMap<Vec<usize>, usize> {
    let mut all = BTreeSet::new();
    for s in seqs {
        subsequences(s, &mut all);
    }
    let supports: BTreeMap<Vec<usize>, usize> = all.into_iter().map(|p| (p.clone(), support(&p, seqs))).collect();
    let mut by_len: BTreeMap<usize, Vec<(&Vec<usize>, usize)>> = BTreeMap::new();
    for (p, &s) in &supports {
        by_len.entry(p.len()).or_default().push((p, s));
    }
    supports
        .iter()
        .filter(|(_, &s)| s >= min_support)
        .filter(|(p, &s)| {
            by_len
                .get(&(p.len() + 1))
                .is_none_or(|longer| !longer.iter().any(|(q, qs)| *qs == s && is_subsequence(p, q)))
        })
        .map(|(p, &s)| (p.clone(), s))
        .collect()
}
