use super::{EdgeOrder, NodeAt, NodeConstraint, QueryError, SequenceQuery};
use crate::hmm::{DecodedSubject, DecodedVisit};

/// Whether some strictly increasing assignment of query nodes to visits
/// satisfies every node and edge constraint. Depth-first backtracking.
pub fn match_sequence(decoded: &DecodedSubject, q: &SequenceQuery) -> Result<bool, QueryError> {
    q.validate()?;
    Ok(search(&decoded.visits, q, 0, None))
}

fn node_fits(visits: &[DecodedVisit], idx: usize, node: &NodeConstraint) -> bool {
    let visit = &visits[idx];
    let position_ok = match node.node_at {
        NodeAt::Any => true,
        NodeAt::Begin => idx == 0,
        NodeAt::End => idx + 1 == visits.len(),
    };
    position_ok
        && visit.state == node.state
        && node.time_window.contains(visit.age)
        && visit.posterior.get(node.state).copied().unwrap_or(0.0) >= node.min_posterior
}

fn search(visits: &[DecodedVisit], q: &SequenceQuery, node: usize, prev: Option<usize>) -> bool {
    if node == q.nodes.len() {
        return true;
    }
    let (start, end) = match prev {
        None => (0, visits.len()),
        Some(p) => match q.edges[node - 1].order {
            EdgeOrder::NextVisit => (p + 1, (p + 2).min(visits.len())),
            EdgeOrder::Eventually => (p + 1, visits.len()),
        },
    };
    for idx in start..end {
        if let (Some(p), Some(gap)) = (prev, q.edges.get(node.wrapping_sub(1)).and_then(|e| e.max_gap)) {
            // Ages increase, so every later visit is too far as well.
            if visits[idx].age - visits[p].age > gap {
                break;
            }
        }
        if node_fits(visits, idx, &q.nodes[node]) && search(visits, q, node + 1, Some(idx)) {
            return true;
        }
    }
    false
}
