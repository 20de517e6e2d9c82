//! Exhaustive reference implementations for small inputs.
//!
//! Nothing here shares code or types with `dpvis-core`: each function works
//! on plain slices and follows the textbook definition as directly as
//! possible, trading speed for obviousness.

pub mod hmm;
pub mod patterns;
pub mod query;

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in 0..k {
            if !prefix.contains(&i) {
                prefix.push(i);
                go(prefix, k, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), k, &mut out);
    out
}
