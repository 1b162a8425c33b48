use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::CompModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Finite(u32),
    Infinite,
}

/// Structural facts about the model graph. Compartments are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphProps {
    pub strongly_connected: bool,
    pub strongly_io_connected: bool,
    pub is_bidirected_tree: bool,
    pub is_directed_cycle: bool,
    pub is_directed_path: bool,
    pub is_catenary: bool,
    pub is_mammillary: bool,
    /// Defined only when there is exactly one input and one output.
    pub io_distance: Option<Distance>,
    /// For each output `i`, every `j` with a directed path `j -> i`.
    pub output_reachable: BTreeMap<usize, BTreeSet<usize>>,
}

pub fn graph_props(m: &CompModel) -> GraphProps {
    let succ = m.successors();
    let pred = m.predecessors();
    let output_reachable = m
        .outputs()
        .iter()
        .map(|&i| (i, reach(&pred, &[i])))
        .collect();
    let io_distance = match (m.inputs(), m.outputs()) {
        ([i], [o]) => Some(distance(&succ, *i, *o)),
        _ => None,
    };
    GraphProps {
        strongly_connected: strongly_connected(m),
        strongly_io_connected: strongly_io_connected(m),
        is_bidirected_tree: is_bidirected_tree(m),
        is_directed_cycle: directed_cycle_order(m).is_some(),
        is_directed_path: directed_path_order(m).is_some(),
        is_catenary: catenary_order(m).is_some(),
        is_mammillary: !mammillary_centers(m).is_empty(),
        io_distance,
        output_reachable,
    }
}

/// Vertices reachable from `starts` following `adj`.
pub(crate) fn reach(adj: &[Vec<usize>], starts: &[usize]) -> BTreeSet<usize> {
    let mut seen: BTreeSet<usize> = starts.iter().copied().collect();
    let mut stack: Vec<usize> = starts.to_vec();
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if seen.insert(w) {
                stack.push(w);
            }
        }
    }
    seen
}

pub(crate) fn distance(succ: &[Vec<usize>], from: usize, to: usize) -> Distance {
    let mut dist = vec![u32::MAX; succ.len()];
    dist[from] = 0;
    let mut q = VecDeque::from([from]);
    while let Some(v) = q.pop_front() {
        if v == to {
            return Distance::Finite(dist[v]);
        }
        for &w in &succ[v] {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
    }
    Distance::Infinite
}

/// Union of all output-reachable sets.
pub(crate) fn output_reachable_union(m: &CompModel) -> BTreeSet<usize> {
    reach(&m.predecessors(), m.outputs())
}

pub(crate) fn strongly_connected(m: &CompModel) -> bool {
    let n = m.n();
    reach(&m.successors(), &[0]).len() == n && reach(&m.predecessors(), &[0]).len() == n
}

fn weakly_connected(m: &CompModel) -> bool {
    let mut adj = m.successors();
    for e in m.edges() {
        adj[e.to].push(e.from);
    }
    reach(&adj, &[0]).len() == m.n()
}

/// Connected, and every edge lies on a cycle or on a path from an input to an
/// output.
pub(crate) fn strongly_io_connected(m: &CompModel) -> bool {
    if !weakly_connected(m) {
        return false;
    }
    let succ = m.successors();
    let pred = m.predecessors();
    let from_inputs = reach(&succ, m.inputs());
    let to_outputs = reach(&pred, m.outputs());
    m.edges().iter().all(|e| {
        // a walk through e that revisits a vertex closes a cycle through e,
        // so reachability suffices for both cases
        reach(&succ, &[e.to]).contains(&e.from)
            || (from_inputs.contains(&e.from) && to_outputs.contains(&e.to))
    })
}

fn undirected_pairs(m: &CompModel) -> Option<BTreeSet<(usize, usize)>> {
    let mut pairs = BTreeSet::new();
    for e in m.edges() {
        if !m.has_edge(e.to, e.from) {
            return None;
        }
        pairs.insert((e.from.min(e.to), e.from.max(e.to)));
    }
    Some(pairs)
}

/// Every edge is bidirected and the underlying undirected graph is a tree.
pub(crate) fn is_bidirected_tree(m: &CompModel) -> bool {
    match undirected_pairs(m) {
        Some(pairs) => pairs.len() + 1 == m.n() && weakly_connected(m),
        None => false,
    }
}

/// Compartments in flow order `c0 -> c1 -> ... -> c0`, starting at the
/// smallest label, when the graph is a single directed cycle on all `n >= 2`
/// compartments.
pub fn directed_cycle_order(m: &CompModel) -> Option<Vec<usize>> {
    let n = m.n();
    if n < 2 || m.edges().len() != n {
        return None;
    }
    let succ = m.successors();
    if succ.iter().any(|s| s.len() != 1) {
        return None;
    }
    let mut order = vec![0];
    let mut v = succ[0][0];
    while v != 0 {
        if order.len() == n {
            return None;
        }
        order.push(v);
        v = succ[v][0];
    }
    (order.len() == n).then_some(order)
}

/// Compartments in flow order when the graph is `c0 -> c1 -> ... -> c_{n-1}`.
pub fn directed_path_order(m: &CompModel) -> Option<Vec<usize>> {
    let n = m.n();
    if m.edges().len() + 1 != n {
        return None;
    }
    let succ = m.successors();
    let pred = m.predecessors();
    if succ.iter().any(|s| s.len() > 1) || pred.iter().any(|p| p.len() > 1) {
        return None;
    }
    let start = (0..n).find(|&v| pred[v].is_empty())?;
    let mut order = vec![start];
    let mut v = start;
    while let Some(&w) = succ[v].first() {
        order.push(w);
        v = w;
    }
    (order.len() == n).then_some(order)
}

/// Compartments in chain order when the graph is a bidirected path. The
/// order starts from the smaller endpoint.
pub fn catenary_order(m: &CompModel) -> Option<Vec<usize>> {
    let pairs = undirected_pairs(m)?;
    let n = m.n();
    if pairs.len() + 1 != n {
        return None;
    }
    let succ = m.successors();
    if succ.iter().any(|s| s.len() > 2) {
        return None;
    }
    let start = (0..n).find(|&v| succ[v].len() <= 1)?;
    let mut order = vec![start];
    let mut prev = usize::MAX;
    let mut v = start;
    loop {
        let next = succ[v].iter().copied().find(|&w| w != prev);
        match next {
            Some(w) => {
                prev = v;
                v = w;
                order.push(w);
            }
            None => break,
        }
    }
    (order.len() == n).then_some(order)
}

/// Possible centers when the graph is a bidirected star (every edge joins the
/// center to a leaf, in both directions). Two centers are possible for n = 2.
pub fn mammillary_centers(m: &CompModel) -> Vec<usize> {
    let n = m.n();
    let Some(pairs) = undirected_pairs(m) else {
        return Vec::new();
    };
    if pairs.len() + 1 != n {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    (0..n)
        .filter(|&c| pairs.iter().all(|&(a, b)| a == c || b == c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn four_cycle_is_a_strongly_connected_cycle() {
        let g = graph_props(&four_cycle());
        assert!(g.is_directed_cycle);
        assert!(g.strongly_connected);
        assert!(!g.is_bidirected_tree);
        assert_eq!(g.io_distance, Some(Distance::Finite(1)));
    }

    #[test]
    fn one_way_edge_reachability() {
        let m = raw(2, &[(1, 2)], &[1], &[1], &[]);
        let g = graph_props(&m);
        assert_eq!(g.output_reachable[&0], BTreeSet::from([0]));
        assert!(!g.strongly_connected);
    }

    #[test]
    fn three_comp_strongly_connected_by_traversal() {
        // independent check: compute the reachability matrix by repeated
        // boolean squaring of the adjacency matrix
        let m = three_comp();
        let n = m.n();
        let mut r = vec![vec![false; n]; n];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = true;
        }
        for e in m.edges() {
            r[e.from][e.to] = true;
        }
        for _ in 0..n {
            let prev = r.clone();
            for i in 0..n {
                for j in 0..n {
                    r[i][j] = r[i][j] || (0..n).any(|k| prev[i][k] && prev[k][j]);
                }
            }
        }
        let expect = r.iter().all(|row| row.iter().all(|&b| b));
        assert!(expect);
        assert_eq!(graph_props(&m).strongly_connected, expect);
    }

    #[test]
    fn shapes() {
        let path = raw(3, &[(1, 2), (2, 3)], &[1], &[3], &[1, 3]);
        assert_eq!(directed_path_order(&path), Some(vec![0, 1, 2]));
        let g = graph_props(&path);
        assert!(g.is_directed_path && !g.strongly_connected && g.strongly_io_connected);
        assert_eq!(g.io_distance, Some(Distance::Finite(2)));

        let cat = raw(3, &[(1, 2), (2, 1), (2, 3), (3, 2)], &[1], &[1], &[]);
        let g = graph_props(&cat);
        assert!(g.is_catenary && g.is_bidirected_tree && g.is_mammillary);
        assert_eq!(mammillary_centers(&cat), vec![1]);
        assert_eq!(catenary_order(&cat), Some(vec![0, 1, 2]));

        let star = raw(4, &[(1, 2), (2, 1), (1, 3), (3, 1), (1, 4), (4, 1)], &[2], &[1], &[]);
        let g = graph_props(&star);
        assert!(g.is_mammillary && g.is_bidirected_tree && !g.is_catenary);

        let one = raw(1, &[], &[1], &[1], &[]);
        let g = graph_props(&one);
        assert!(g.is_bidirected_tree && g.is_catenary && !g.is_directed_cycle);
        assert_eq!(g.io_distance, Some(Distance::Finite(0)));
    }

    #[test]
    fn io_distance_undefined_for_multiple_outputs() {
        let m = raw(2, &[(1, 2)], &[1], &[1, 2], &[]);
        assert_eq!(graph_props(&m).io_distance, None);
        let far = raw(2, &[(2, 1)], &[1], &[2], &[]);
        assert_eq!(graph_props(&far).io_distance, Some(Distance::Infinite));
    }

    #[test]
    fn strong_io_connectivity_rejects_dangling_edge() {
        // 2 -> 3 leaves the input-output path 1 -> 2 and never returns
        let m = raw(3, &[(1, 2), (2, 3)], &[1], &[2], &[]);
        assert!(!strongly_io_connected(&m));
        let ok = raw(3, &[(1, 2), (2, 3), (3, 2)], &[1], &[2], &[]);
        assert!(strongly_io_connected(&ok));
    }
}
