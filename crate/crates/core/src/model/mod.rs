//! Linear compartmental models: validation, canonical parameter ordering and
//! the symbolic compartmental matrix.

pub(crate) mod graph;

pub use graph::{graph_props, Distance, GraphProps};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{MPoly, PolyMatrix};

/// Orientation reminder attached to every model error.
pub const EDGE_CONVENTION: &str = "[from, to] denotes parameter a_{to,from}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("NoCompartments: a model needs at least one compartment")]
    NoCompartments,
    #[error("DuplicateEdge: edge [{from}, {to}] listed more than once")]
    DuplicateEdge { from: usize, to: usize },
    #[error("SelfLoop: edge [{compartment}, {compartment}] starts and ends in the same compartment")]
    SelfLoop { compartment: usize },
    #[error("IndexOutOfRange: {what} refers to compartment {index}, valid range is 1..={n}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        n: usize,
    },
    #[error("EmptyInputs: at least one input compartment is required")]
    EmptyInputs,
    #[error("EmptyOutputs: at least one output compartment is required")]
    EmptyOutputs,
}

/// How the leak parameter of a compartment enters the diagonal of A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakConvention {
    /// `A[j][j] = -a0j - sum of outflow rates`; columns sum to `-a0j`.
    #[default]
    Separate,
    /// For a leak compartment `j`, `a0j` is the total outflow rate and
    /// `A[j][j] = -a0j`. Non-leak compartments keep the mass-balance diagonal.
    Total,
}

/// A model description with 1-based compartment indices, prior to validation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawModel {
    pub compartments: usize,
    /// `(from, to)` pairs; the pair names parameter `a_{to,from}`.
    pub edges: Vec<(usize, usize)>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub leaks: Vec<usize>,
    pub leak_convention: LeakConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    /// Flow from `from` into `to`, parameter `a_{to,from}`.
    Edge { to: usize, from: usize },
    /// Leak out of compartment `compartment`, parameter `a_{0,compartment}`.
    Leak { compartment: usize },
}

/// A parameter together with its position in the canonical ordering
/// (edges by `(to, from)`, then leaks by compartment).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamIndex {
    pub kind: ParamKind,
    pub ordinal: usize,
}

/// Validated linear compartmental model. Compartments are 0-based here.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompModel {
    n: usize,
    edges: Vec<Edge>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    leaks: Vec<usize>,
    convention: LeakConvention,
    params: Vec<ParamIndex>,
    names: Vec<String>,
}

pub fn validate_model(raw: &RawModel) -> Result<CompModel, ModelError> {
    let n = raw.compartments;
    if n == 0 {
        return Err(ModelError::NoCompartments);
    }
    let check = |what: &'static str, i: usize| {
        if i == 0 || i > n {
            Err(ModelError::IndexOutOfRange { what, index: i, n })
        } else {
            Ok(i - 1)
        }
    };
    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(raw.edges.len());
    for &(from, to) in &raw.edges {
        let f = check("edge", from)?;
        let t = check("edge", to)?;
        if f == t {
            return Err(ModelError::SelfLoop { compartment: from });
        }
        if !seen.insert((f, t)) {
            return Err(ModelError::DuplicateEdge { from, to });
        }
        edges.push(Edge { from: f, to: t });
    }
    let set = |what: &'static str, xs: &[usize]| -> Result<Vec<usize>, ModelError> {
        let s: BTreeSet<usize> = xs.iter().map(|&i| check(what, i)).collect::<Result<_, _>>()?;
        Ok(s.into_iter().collect())
    };
    let inputs = set("input", &raw.inputs)?;
    let outputs = set("output", &raw.outputs)?;
    let leaks = set("leak", &raw.leaks)?;
    if inputs.is_empty() {
        return Err(ModelError::EmptyInputs);
    }
    if outputs.is_empty() {
        return Err(ModelError::EmptyOutputs);
    }
    Ok(CompModel::assemble(n, edges, inputs, outputs, leaks, raw.leak_convention))
}

/// Parameter name for 0-based indices. Single-digit compartments are written
/// `a21`, larger ones `a12_3` to stay unambiguous.
pub fn param_name(kind: ParamKind, n: usize) -> String {
    let (i, j) = match kind {
        ParamKind::Edge { to, from } => (to + 1, from + 1),
        ParamKind::Leak { compartment } => (0, compartment + 1),
    };
    if n <= 9 {
        format!("a{i}{j}")
    } else {
        format!("a{i}_{j}")
    }
}

impl CompModel {
    fn assemble(
        n: usize,
        mut edges: Vec<Edge>,
        inputs: Vec<usize>,
        outputs: Vec<usize>,
        leaks: Vec<usize>,
        convention: LeakConvention,
    ) -> CompModel {
        edges.sort_by_key(|e| (e.to, e.from));
        let mut params = Vec::with_capacity(edges.len() + leaks.len());
        for e in &edges {
            params.push(ParamKind::Edge {
                to: e.to,
                from: e.from,
            });
        }
        for &j in &leaks {
            params.push(ParamKind::Leak { compartment: j });
        }
        let params: Vec<ParamIndex> = params
            .into_iter()
            .enumerate()
            .map(|(ordinal, kind)| ParamIndex { kind, ordinal })
            .collect();
        let names = params.iter().map(|p| param_name(p.kind, n)).collect();
        CompModel {
            n,
            edges,
            inputs,
            outputs,
            leaks,
            convention,
            params,
            names,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges in canonical parameter order.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn leaks(&self) -> &[usize] {
        &self.leaks
    }

    pub fn convention(&self) -> LeakConvention {
        self.convention
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamIndex] {
        &self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_name(&self, ordinal: usize) -> &str {
        &self.names[ordinal]
    }

    pub fn param_by_name(&self, name: &str) -> Option<ParamIndex> {
        self.names
            .iter()
            .position(|s| s == name)
            .map(|i| self.params[i])
    }

    pub fn edge_param(&self, from: usize, to: usize) -> Option<usize> {
        self.edges
            .binary_search_by_key(&(to, from), |e| (e.to, e.from))
            .ok()
    }

    pub fn leak_param(&self, compartment: usize) -> Option<usize> {
        self.leaks
            .binary_search(&compartment)
            .ok()
            .map(|k| self.edges.len() + k)
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edge_param(from, to).is_some()
    }

    pub fn is_input(&self, c: usize) -> bool {
        self.inputs.binary_search(&c).is_ok()
    }

    pub fn is_output(&self, c: usize) -> bool {
        self.outputs.binary_search(&c).is_ok()
    }

    pub fn is_leak(&self, c: usize) -> bool {
        self.leaks.binary_search(&c).is_ok()
    }

    /// Sorted union of inputs and outputs.
    pub fn pinned(&self) -> Vec<usize> {
        let s: BTreeSet<usize> = self.inputs.iter().chain(&self.outputs).copied().collect();
        s.into_iter().collect()
    }

    /// Successor lists (`j -> l`).
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for e in &self.edges {
            out[e.from].push(e.to);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for e in &self.edges {
            out[e.to].push(e.from);
        }
        out.iter_mut().for_each(|v| v.sort_unstable());
        out
    }

    /// Back to a 1-based description.
    pub fn to_raw(&self) -> RawModel {
        let mut edges: Vec<(usize, usize)> =
            self.edges.iter().map(|e| (e.from + 1, e.to + 1)).collect();
        edges.sort_unstable();
        RawModel {
            compartments: self.n,
            edges,
            inputs: self.inputs.iter().map(|i| i + 1).collect(),
            outputs: self.outputs.iter().map(|i| i + 1).collect(),
            leaks: self.leaks.iter().map(|i| i + 1).collect(),
            leak_convention: self.convention,
        }
    }

    /// Same graph with different input/output/leak placements (0-based).
    pub fn with_placements(
        &self,
        inputs: &[usize],
        outputs: &[usize],
        leaks: &[usize],
    ) -> Result<CompModel, ModelError> {
        let mut raw = self.to_raw();
        raw.inputs = inputs.iter().map(|i| i + 1).collect();
        raw.outputs = outputs.iter().map(|i| i + 1).collect();
        raw.leaks = leaks.iter().map(|i| i + 1).collect();
        validate_model(&raw)
    }

    /// Relabels compartment `i` as `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> CompModel {
        assert_eq!(perm.len(), self.n, "permutation length");
        let map = |xs: &[usize]| -> Vec<usize> {
            let mut v: Vec<usize> = xs.iter().map(|&i| perm[i]).collect();
            v.sort_unstable();
            v
        };
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                from: perm[e.from],
                to: perm[e.to],
            })
            .collect();
        CompModel::assemble(
            self.n,
            edges,
            map(&self.inputs),
            map(&self.outputs),
            map(&self.leaks),
            self.convention,
        )
    }

    /// Image of each parameter ordinal under a relabeling.
    pub fn relabel_params(&self, perm: &[usize], relabeled: &CompModel) -> Vec<usize> {
        self.params
            .iter()
            .map(|p| match p.kind {
                ParamKind::Edge { to, from } => relabeled
                    .edge_param(perm[from], perm[to])
                    .expect("relabeled edge"),
                ParamKind::Leak { compartment } => relabeled
                    .leak_param(perm[compartment])
                    .expect("relabeled leak"),
            })
            .collect()
    }
}

impl fmt::Display for CompModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.to_raw();
        write!(
            f,
            "n={} edges={:?} In={:?} Out={:?} Leak={:?}",
            r.compartments, r.edges, r.inputs, r.outputs, r.leaks
        )?;
        if self.convention == LeakConvention::Total {
            write!(f, " (leak = total outflow)")?;
        }
        Ok(())
    }
}

/// The symbolic matrix A of `x' = A x + u`, one ring variable per parameter.
pub fn compartmental_matrix(m: &CompModel) -> PolyMatrix {
    let nv = m.num_params();
    let mut a = PolyMatrix::zeros(m.n, m.n, nv);
    let var = |k: usize| MPoly::var(nv, k);
    for (k, e) in m.edges.iter().enumerate() {
        a[(e.to, e.from)] = var(k);
    }
    for j in 0..m.n {
        let mut diag = MPoly::zero(nv);
        match m.leak_param(j) {
            Some(k) if m.convention == LeakConvention::Total => {
                diag = -var(k);
            }
            leak => {
                if let Some(k) = leak {
                    diag = &diag - &var(k);
                }
                for (k, e) in m.edges.iter().enumerate() {
                    if e.from == j {
                        diag = &diag - &var(k);
                    }
                }
            }
        }
        a[(j, j)] = diag;
    }
    a
}
