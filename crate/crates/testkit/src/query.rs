//! Temporal sequence matching by trying every assignment of nodes to visits.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Any,
    First,
    Last,
}

#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub state: usize,
    pub min_age: f64,
    pub max_age: Option<f64>,
    pub position: Position,
    pub min_posterior: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub max_gap: Option<f64>,
    pub consecutive: bool,
}

#[derive(Debug, Clone)]
pub struct Visit {
    pub age: f64,
    pub state: usize,
    pub posterior: Vec<f64>,
}

fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for last in m - 1..n {
        for mut c in combinations(last, m - 1) {
            c.push(last);
            out.push(c);
        }
    }
    out
}

fn node_ok(visits: &[Visit], i: usize, node: &Node) -> bool {
    let v = &visits[i];
    let position = match node.position {
        Position::Any => true,
        Position::First => i == 0,
        Position::Last => i == visits.len() - 1,
    };
    position
        && v.state == node.state
        && v.age >= node.min_age
        && node.max_age.is_none_or(|m| v.age <= m)
        && v.posterior[node.state] >= node.min_posterior
}

/// Whether any strictly increasing choice of one visit per node satisfies
/// all constraints.
pub fn naive_match(visits: &[Visit], nodes: &[Node], edges: &[Edge]) -> bool {
    combinations(visits.len(), nodes.len()).iter().any(|pick| {
        pick.iter().zip(nodes).all(|(&i, n)| node_ok(visits, i, n))
            && pick.windows(2).zip(edges).all(|(w, e)| {
                (!e.consecutive || w[1] == w[0] + 1)
                    && e.max_gap.is_none_or(|g| visits[w[1]].age - visits[w[0]].age <= g)
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(8, 4).len(), 70);
        assert_eq!(combinations(2, 3).len(), 0);
    }
}
