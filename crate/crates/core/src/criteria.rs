//! Combinatorial identifiability rules and cycle/path monomials.
//!
//! Every rule reads only the graph and the input/output/leak placements. A
//! rule whose hypotheses fail is silent.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::model::graph::{
    catenary_order, directed_cycle_order, directed_path_order, distance, graph_props,
    mammillary_centers, output_reachable_union, Distance,
};
use crate::model::{CompModel, ParamKind};
use crate::poly::MPoly;
use crate::rank::{RankEngine, RankError, Verdict};

/// Default bound on the number of cycle and path monomials generated.
pub const MONOMIAL_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleVerdict {
    ModelIdentifiable,
    ModelUnidentifiable,
    ParamGloballyIdentifiable,
    ParamUnidentifiable,
}

impl fmt::Display for RuleVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleVerdict::ModelIdentifiable => "model locally identifiable",
            RuleVerdict::ModelUnidentifiable => "model unidentifiable",
            RuleVerdict::ParamGloballyIdentifiable => "parameters globally identifiable",
            RuleVerdict::ParamUnidentifiable => "parameters unidentifiable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleHit {
    pub rule_id: String,
    pub verdict: RuleVerdict,
    pub affected_params: Vec<String>,
    pub citation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CriteriaError {
    #[error("InternalRuleConflict: {0}")]
    InternalRuleConflict(String),
}

pub mod rules {
    pub const TREE_IDENTIFIABLE: &str = "bidirected-tree-identifiable";
    pub const TREE_MANY_LEAKS: &str = "bidirected-tree-many-leaks";
    pub const TREE_FAR_OUTPUT: &str = "bidirected-tree-far-output";
    pub const CYCLE_INTERLACING: &str = "directed-cycle-interlacing";
    pub const CYCLE_NON_INTERLACING: &str = "directed-cycle-non-interlacing";
    pub const PATH_ENDPOINT_LEAKS: &str = "directed-path-endpoint-leaks";
    pub const STRONG_EXCESS_LEAKS: &str = "strongly-connected-excess-leaks";
    pub const STRONG_IO_EXCESS_LEAKS: &str = "strongly-io-connected-excess-leaks";
    pub const INPUT_OUTPUT_EDGE: &str = "input-output-edge";
    pub const CATENARY_ALL: &str = "catenary-all-parameters";
    pub const MAMMILLARY_CENTER: &str = "mammillary-center-edges";
    pub const OUTPUT_UNREACHABLE: &str = "output-unreachable";
}

pub mod citations {
    pub const TREE: &str = "bidirected-tree classification (one input, one output)";
    pub const CYCLE: &str = "directed-cycle leak-interlacing classification";
    pub const PATH: &str = "directed-path model with leaks at both ends";
    pub const EXCESS_LEAKS: &str = "leak-count bound for strongly connected models";
    pub const IO_EDGE: &str = "input-to-output edge in strongly connected models";
    pub const CATENARY: &str = "catenary models with input and output at an end";
    pub const MAMMILLARY: &str = "mammillary models without leaks";
    pub const REACHABILITY: &str = "output-reachable subgraph criterion";
}

fn hit(id: &str, verdict: RuleVerdict, params: Vec<String>, citation: &str) -> RuleHit {
    RuleHit {
        rule_id: id.to_string(),
        verdict,
        affected_params: params,
        citation: citation.to_string(),
    }
}

/// Calibrated leak-interlacing test for a directed cycle given in flow order.
///
/// Walking along the flow, every stretch that starts just after one leak and
/// ends at the next leak (inclusive) must contain an input or an output. In
/// addition, a single input fed directly by a single distinct output leaves
/// one numerator coefficient only, which cannot carry two leaks.
pub fn leak_interlacing(m: &CompModel, order: &[usize]) -> bool {
    let n = order.len();
    let leaks: Vec<usize> = (0..n).filter(|&k| m.is_leak(order[k])).collect();
    if leaks.len() <= 1 {
        return true;
    }
    if let ([i], [o]) = (m.inputs(), m.outputs()) {
        let pos = |c: usize| order.iter().position(|&x| x == c).expect("on cycle");
        if i != o && (pos(*o) + 1) % n == pos(*i) {
            return false;
        }
    }
    let pinned = |k: usize| m.is_input(order[k]) || m.is_output(order[k]);
    (0..leaks.len()).all(|t| {
        let a = leaks[t];
        let b = leaks[(t + 1) % leaks.len()];
        let mut k = a;
        loop {
            k = (k + 1) % n;
            if pinned(k) {
                return true;
            }
            if k == b {
                return false;
            }
        }
    })
}

pub fn classify(m: &CompModel) -> Result<Vec<RuleHit>, CriteriaError> {
    use RuleVerdict::*;
    let g = graph_props(m);
    let names = m.param_names();
    let pinned = m.pinned().len();
    let nleaks = m.leaks().len();
    let single_io = m.inputs().len() == 1 && m.outputs().len() == 1;
    let mut hits = Vec::new();

    if g.is_bidirected_tree && single_io {
        let near = matches!(g.io_distance, Some(Distance::Finite(d)) if d <= 1);
        if nleaks <= 1 && near {
            hits.push(hit(rules::TREE_IDENTIFIABLE, ModelIdentifiable, vec![], citations::TREE));
        }
        if nleaks >= 2 {
            hits.push(hit(rules::TREE_MANY_LEAKS, ModelUnidentifiable, vec![], citations::TREE));
        }
        if !near {
            hits.push(hit(rules::TREE_FAR_OUTPUT, ModelUnidentifiable, vec![], citations::TREE));
        }
    }

    if let Some(order) = directed_cycle_order(m) {
        if leak_interlacing(m, &order) {
            hits.push(hit(rules::CYCLE_INTERLACING, ModelIdentifiable, vec![], citations::CYCLE));
        } else {
            hits.push(hit(
                rules::CYCLE_NON_INTERLACING,
                ModelUnidentifiable,
                vec![],
                citations::CYCLE,
            ));
        }
    }

    if let Some(order) = directed_path_order(m) {
        let (first, last) = (order[0], order[order.len() - 1]);
        if order.len() >= 2
            && m.inputs() == [first]
            && m.outputs() == [last]
            && m.leaks().len() == 2
            && m.is_leak(first)
            && m.is_leak(last)
        {
            hits.push(hit(rules::PATH_ENDPOINT_LEAKS, ModelIdentifiable, vec![], citations::PATH));
        }
    }

    if g.strongly_connected && m.inputs().len() == 1 && nleaks > pinned {
        hits.push(hit(
            rules::STRONG_EXCESS_LEAKS,
            ModelUnidentifiable,
            vec![],
            citations::EXCESS_LEAKS,
        ));
    }
    if g.strongly_io_connected && m.outputs().len() == 1 && nleaks > pinned {
        hits.push(hit(
            rules::STRONG_IO_EXCESS_LEAKS,
            ModelUnidentifiable,
            vec![],
            citations::EXCESS_LEAKS,
        ));
    }

    if g.strongly_connected {
        let params: Vec<String> = m
            .edges()
            .iter()
            .filter(|e| m.is_input(e.from) && m.is_output(e.to))
            .map(|e| names[m.edge_param(e.from, e.to).expect("edge")].clone())
            .collect();
        if !params.is_empty() {
            hits.push(hit(
                rules::INPUT_OUTPUT_EDGE,
                ParamGloballyIdentifiable,
                params,
                citations::IO_EDGE,
            ));
        }
    }

    if let Some(order) = catenary_order(m) {
        let ends = [order[0], order[order.len() - 1]];
        let at_end = m.inputs() == m.outputs()
            && m.inputs().len() == 1
            && ends.contains(&m.inputs()[0]);
        if at_end && nleaks <= 1 && m.num_params() > 0 {
            hits.push(hit(
                rules::CATENARY_ALL,
                ParamGloballyIdentifiable,
                names.to_vec(),
                citations::CATENARY,
            ));
        }
    }

    if m.n() >= 2 && nleaks == 0 && single_io {
        let (i, j) = (m.inputs()[0], m.outputs()[0]);
        let near = matches!(distance(&m.successors(), i, j), Distance::Finite(d) if d <= 1);
        let mut params = BTreeSet::new();
        for c in mammillary_centers(m) {
            if near && j != c {
                params.insert(m.edge_param(j, c).expect("star edge"));
                params.insert(m.edge_param(c, j).expect("star edge"));
            }
        }
        if !params.is_empty() {
            hits.push(hit(
                rules::MAMMILLARY_CENTER,
                ParamGloballyIdentifiable,
                params.into_iter().map(|p| names[p].clone()).collect(),
                citations::MAMMILLARY,
            ));
        }
    }

    let flagged = unidentifiable_params_by_reachability(m);
    if !flagged.is_empty() {
        hits.push(hit(
            rules::OUTPUT_UNREACHABLE,
            ParamUnidentifiable,
            flagged.into_iter().map(|p| names[p].clone()).collect(),
            citations::REACHABILITY,
        ));
    }

    check_consistency(&hits)?;
    Ok(hits)
}

fn check_consistency(hits: &[RuleHit]) -> Result<(), CriteriaError> {
    let ids = |v: RuleVerdict| -> Vec<&RuleHit> { hits.iter().filter(|h| h.verdict == v).collect() };
    let good = ids(RuleVerdict::ModelIdentifiable);
    let bad = ids(RuleVerdict::ModelUnidentifiable);
    if let (Some(a), Some(b)) = (good.first(), bad.first()) {
        return Err(CriteriaError::InternalRuleConflict(format!(
            "{} says identifiable, {} says unidentifiable",
            a.rule_id, b.rule_id
        )));
    }
    let unid = ids(RuleVerdict::ParamUnidentifiable);
    if let (Some(a), Some(b)) = (good.first(), unid.first()) {
        return Err(CriteriaError::InternalRuleConflict(format!(
            "{} says identifiable, {} flags {}",
            a.rule_id,
            b.rule_id,
            b.affected_params.join(", ")
        )));
    }
    for g in ids(RuleVerdict::ParamGloballyIdentifiable) {
        for u in &unid {
            if let Some(p) = g.affected_params.iter().find(|p| u.affected_params.contains(p)) {
                return Err(CriteriaError::InternalRuleConflict(format!(
                    "{} and {} disagree on {p}",
                    g.rule_id, u.rule_id
                )));
            }
        }
    }
    Ok(())
}

/// Parameter ordinals attached to compartments that reach no output: their
/// leaks and the edges leaving them.
pub fn unidentifiable_params_by_reachability(m: &CompModel) -> BTreeSet<usize> {
    let reach = output_reachable_union(m);
    m.params()
        .iter()
        .filter(|p| match p.kind {
            ParamKind::Leak { compartment } => !reach.contains(&compartment),
            ParamKind::Edge { from, .. } => !reach.contains(&from),
        })
        .map(|p| p.ordinal)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonomialKind {
    Cycle,
    IoPath,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialCandidate {
    pub kind: MonomialKind,
    /// Compartments visited, 0-based; a cycle does not repeat its start.
    pub support: Vec<usize>,
    pub monomial: MPoly,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialReport {
    pub candidates: Vec<MonomialCandidate>,
    /// True when the cap cut the enumeration short.
    pub partial: bool,
}

fn walk_monomial(m: &CompModel, walk: &[usize]) -> MPoly {
    let np = m.num_params();
    walk.windows(2).fold(MPoly::one(np), |acc, w| {
        let p = m.edge_param(w[0], w[1]).expect("walk follows edges");
        &acc * &MPoly::var(np, p)
    })
}

/// Simple cycles, each listed once starting at its smallest compartment.
pub fn simple_cycles(m: &CompModel, cap: usize) -> (Vec<Vec<usize>>, bool) {
    let succ = m.successors();
    let mut out = Vec::new();
    let mut partial = false;
    for s in 0..m.n() {
        let mut path = vec![s];
        let mut on_path = vec![false; m.n()];
        on_path[s] = true;
        cycles_from(&succ, s, &mut path, &mut on_path, &mut out, cap, &mut partial);
        if partial {
            break;
        }
    }
    (out, partial)
}

fn cycles_from(
    succ: &[Vec<usize>],
    start: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
    cap: usize,
    partial: &mut bool,
) {
    let v = *path.last().expect("nonempty");
    for &w in &succ[v] {
        if *partial {
            return;
        }
        if w == start {
            if out.len() == cap {
                *partial = true;
                return;
            }
            out.push(path.clone());
        } else if w > start && !on_path[w] {
            on_path[w] = true;
            path.push(w);
            cycles_from(succ, start, path, on_path, out, cap, partial);
            path.pop();
            on_path[w] = false;
        }
    }
}

/// Simple paths of length at least one from an input to an output.
pub fn io_paths(m: &CompModel, cap: usize) -> (Vec<Vec<usize>>, bool) {
    let succ = m.successors();
    let mut out = Vec::new();
    let mut partial = false;
    for &s in m.inputs() {
        let mut path = vec![s];
        let mut on_path = vec![false; m.n()];
        on_path[s] = true;
        paths_from(m, &succ, &mut path, &mut on_path, &mut out, cap, &mut partial);
        if partial {
            break;
        }
    }
    (out, partial)
}

fn paths_from(
    m: &CompModel,
    succ: &[Vec<usize>],
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
    cap: usize,
    partial: &mut bool,
) {
    let v = *path.last().expect("nonempty");
    for &w in &succ[v] {
        if *partial || on_path[w] {
            continue;
        }
        path.push(w);
        on_path[w] = true;
        if m.is_output(w) {
            if out.len() == cap {
                *partial = true;
            } else {
                out.push(path.clone());
            }
        }
        paths_from(m, succ, path, on_path, out, cap, partial);
        on_path[w] = false;
        path.pop();
    }
}

/// Cycle and input-output path monomials with their identifiability verdicts.
pub fn cycle_path_monomials(
    m: &CompModel,
    engine: &RankEngine,
    cap: usize,
) -> Result<MonomialReport, RankError> {
    let (cycles, cut_cycles) = simple_cycles(m, cap);
    let (paths, cut_paths) = io_paths(m, cap.saturating_sub(cycles.len()));
    let mut candidates = Vec::with_capacity(cycles.len() + paths.len());
    for (kind, walks) in [(MonomialKind::Cycle, cycles), (MonomialKind::IoPath, paths)] {
        for support in walks {
            let mut walk = support.clone();
            if kind == MonomialKind::Cycle {
                walk.push(support[0]);
            }
            let monomial = walk_monomial(m, &walk);
            let verdict = engine.function_verdict(&Expr::from_poly(&monomial))?;
            candidates.push(MonomialCandidate {
                kind,
                support,
                monomial,
                verdict,
            });
        }
    }
    Ok(MonomialReport {
        candidates,
        partial: cut_cycles || cut_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::rank::RankOptions;

    fn ids(m: &CompModel) -> Vec<String> {
        classify(m).unwrap().into_iter().map(|h| h.rule_id).collect()
    }

    #[test]
    fn four_cycle_interlacing() {
        assert_eq!(ids(&four_cycle()), vec![rules::CYCLE_INTERLACING, rules::INPUT_OUTPUT_EDGE]);
    }

    #[test]
    fn three_cycle_non_interlacing() {
        let m = raw(3, &[(1, 2), (2, 3), (3, 1)], &[1], &[1], &[2, 3]);
        assert!(ids(&m).contains(&rules::CYCLE_NON_INTERLACING.to_string()));
    }

    #[test]
    fn two_leak_tree() {
        let m = raw(2, &[(1, 2), (2, 1)], &[1], &[1], &[1, 2]);
        assert!(ids(&m).contains(&rules::TREE_MANY_LEAKS.to_string()));
    }

    #[test]
    fn directed_path_rule() {
        let m = raw(3, &[(1, 2), (2, 3)], &[1], &[3], &[1, 3]);
        assert!(ids(&m).contains(&rules::PATH_ENDPOINT_LEAKS.to_string()));
        let e = RankEngine::for_model(&m, RankOptions::default());
        assert_eq!(e.kernel_dim(), 0);
    }

    #[test]
    fn excess_leaks_in_strongly_connected_model() {
        // bidirected 3-chain plus a closing edge, all leaks, |In ∪ Out| = 2
        let m = raw(3, &[(1, 2), (2, 1), (2, 3), (3, 2), (3, 1)], &[1], &[2], &[1, 2, 3]);
        let got = ids(&m);
        assert!(got.contains(&rules::STRONG_EXCESS_LEAKS.to_string()));
        assert!(got.contains(&rules::STRONG_IO_EXCESS_LEAKS.to_string()));
        assert!(RankEngine::for_model(&m, RankOptions::default()).kernel_dim() > 0);
    }

    #[test]
    fn catenary_all_parameters() {
        let m = raw(3, &[(1, 2), (2, 1), (2, 3), (3, 2)], &[1], &[1], &[2]);
        let hits = classify(&m).unwrap();
        let h = hits.iter().find(|h| h.rule_id == rules::CATENARY_ALL).unwrap();
        assert_eq!(h.affected_params.len(), 5);
        assert_eq!(RankEngine::for_model(&m, RankOptions::default()).kernel_dim(), 0);
    }

    #[test]
    fn mammillary_center_edges() {
        // center 1, input 2, output 1: a12 and a21
        let m = raw(3, &[(1, 2), (2, 1), (1, 3), (3, 1)], &[2], &[3], &[]);
        let hits = classify(&m).unwrap();
        assert!(hits.iter().all(|h| h.rule_id != rules::MAMMILLARY_CENTER));
        let m = raw(3, &[(1, 2), (2, 1), (1, 3), (3, 1)], &[1], &[3], &[]);
        let hits = classify(&m).unwrap();
        let h = hits.iter().find(|h| h.rule_id == rules::MAMMILLARY_CENTER).unwrap();
        assert_eq!(h.affected_params, vec!["a13", "a31"]);
    }

    #[test]
    fn reachability_flags() {
        let m = raw(2, &[(1, 2)], &[1], &[1], &[2]);
        let names: Vec<&str> = unidentifiable_params_by_reachability(&m)
            .into_iter()
            .map(|p| m.param_names()[p].as_str())
            .collect();
        assert_eq!(names, vec!["a02"]);
        assert!(unidentifiable_params_by_reachability(&four_cycle()).is_empty());
        let m = raw(3, &[(1, 2), (2, 3)], &[1], &[1], &[3]);
        let flagged = unidentifiable_params_by_reachability(&m);
        let e = RankEngine::for_model(&m, RankOptions::default());
        for p in flagged {
            assert_eq!(e.param_verdict(p), Verdict::Unidentifiable);
        }
    }

    #[test]
    fn three_comp_monomials() {
        let m = three_comp();
        let e = RankEngine::for_model(&m, RankOptions::default());
        let r = cycle_path_monomials(&m, &e, MONOMIAL_CAP).unwrap();
        assert!(!r.partial);
        let show = |c: &MonomialCandidate| c.monomial.display_with(m.param_names()).to_string();
        let cycles: Vec<(String, Verdict)> = r
            .candidates
            .iter()
            .filter(|c| c.kind == MonomialKind::Cycle)
            .map(|c| (show(c), c.verdict))
            .collect();
        assert_eq!(cycles.len(), 2);
        let verdict = |name: &str| cycles.iter().find(|(s, _)| s == name).unwrap().1;
        assert!(verdict("a13*a21*a32").is_identifiable());
        assert!(!verdict("a23*a32").is_identifiable());
    }

    #[test]
    fn four_cycle_cycle_monomial() {
        let m = four_cycle();
        let e = RankEngine::for_model(&m, RankOptions::default());
        let r = cycle_path_monomials(&m, &e, MONOMIAL_CAP).unwrap();
        let cycle = r.candidates.iter().find(|c| c.kind == MonomialKind::Cycle).unwrap();
        assert_eq!(cycle.support, vec![0, 1, 2, 3]);
        assert_eq!(cycle.monomial.num_terms(), 1);
        assert_eq!(cycle.monomial.total_degree(), 4);
        assert!(cycle.verdict.is_identifiable());
        let paths: Vec<_> = r.candidates.iter().filter(|c| c.kind == MonomialKind::IoPath).collect();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].support, vec![0, 1]);
    }

    #[test]
    fn cap_marks_partial() {
        let m = raw(3, &[(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1)], &[1], &[1], &[]);
        let (all, cut) = simple_cycles(&m, 100);
        assert_eq!(all.len(), 5);
        assert!(!cut);
        let (some, cut) = simple_cycles(&m, 2);
        assert_eq!(some.len(), 2);
        assert!(cut);
    }
}
