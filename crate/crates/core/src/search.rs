//! Minimal model adjustments that restore local identifiability.
//!
//! Minimality is by cardinality: every returned set has the smallest size
//! among successful adjustments, and all sets of that size are reported.

use std::collections::HashMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::criteria::unidentifiable_params_by_reachability;
use crate::field;
use crate::model::CompModel;
use crate::rank::{RankEngine, RankOptions};

pub const DEFAULT_BUDGET: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjustmentKind {
    AddOutputs,
    FixParams,
}

/// One element of an adjustment. Compartments and parameters are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjustment {
    AddOutput(usize),
    AddInput(usize),
    FixParam(usize),
}

impl Adjustment {
    /// Label with 1-based compartments and parameter names.
    pub fn label(&self, m: &CompModel) -> String {
        match *self {
            Adjustment::AddOutput(c) => format!("output {}", c + 1),
            Adjustment::AddInput(c) => format!("input {}", c + 1),
            Adjustment::FixParam(p) => m.param_name(p).to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjustmentResult {
    pub kind: AdjustmentKind,
    /// All minimum-cardinality successes, sorted. Empty when none fits the
    /// budget.
    pub minimal_sets: Vec<Vec<Adjustment>>,
    pub budget: usize,
    /// Number of rank queries made.
    pub evaluations: usize,
}

impl AdjustmentResult {
    pub fn found(&self) -> bool {
        !self.minimal_sets.is_empty()
    }

    pub fn min_size(&self) -> Option<usize> {
        self.minimal_sets.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub budget: usize,
    /// Also consider new input placements when adding outputs.
    pub include_inputs: bool,
    pub rank: RankOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            budget: DEFAULT_BUDGET,
            include_inputs: false,
            rank: RankOptions::default(),
        }
    }
}

struct PlacementSearch<'a> {
    base: &'a CompModel,
    opts: SearchOptions,
    memo: HashMap<CompModel, bool>,
    evaluations: usize,
}

impl PlacementSearch<'_> {
    fn succeeds(&mut self, set: &[Adjustment]) -> bool {
        let (m, _) = apply_adjustments(self.base, set);
        if let Some(&v) = self.memo.get(&m) {
            return v;
        }
        // a parameter no output can see stays unidentifiable
        let v = unidentifiable_params_by_reachability(&m).is_empty() && {
            self.evaluations += 1;
            RankEngine::for_model(&m, self.opts.rank).kernel_dim() == 0
        };
        self.memo.insert(m, v);
        v
    }
}

pub fn minimal_output_additions(m: &CompModel, opts: SearchOptions) -> AdjustmentResult {
    let mut candidates: Vec<Adjustment> = (0..m.n())
        .filter(|&c| !m.is_output(c))
        .map(Adjustment::AddOutput)
        .collect();
    if opts.include_inputs {
        candidates.extend((0..m.n()).filter(|&c| !m.is_input(c)).map(Adjustment::AddInput));
    }
    let mut search = PlacementSearch {
        base: m,
        opts,
        memo: HashMap::new(),
        evaluations: 0,
    };
    let mut minimal_sets = Vec::new();
    for k in 0..=opts.budget.min(candidates.len()) {
        for set in candidates.iter().copied().combinations(k) {
            if search.succeeds(&set) {
                minimal_sets.push(set);
            }
        }
        if !minimal_sets.is_empty() {
            break;
        }
    }
    for set in &minimal_sets {
        debug_assert!(proper_subsets(set).all(|s| !search.succeeds(&s)));
    }
    minimal_sets.sort();
    AdjustmentResult {
        kind: AdjustmentKind::AddOutputs,
        minimal_sets,
        budget: opts.budget,
        evaluations: search.evaluations,
    }
}

fn proper_subsets(set: &[Adjustment]) -> impl Iterator<Item = Vec<Adjustment>> + '_ {
    (0..set.len()).flat_map(move |k| set.iter().copied().combinations(k))
}

/// Whether the Jacobian columns outside `fixed` have full column rank at
/// some sampled point.
pub fn identifiable_after_fixing(engine: &RankEngine, fixed: &[usize]) -> bool {
    let np = engine.map().num_params();
    let keep: Vec<usize> = (0..np).filter(|p| !fixed.contains(p)).collect();
    engine.samples().iter().any(|s| {
        let sub: Vec<Vec<field::Fp>> = s
            .rows
            .iter()
            .map(|r| keep.iter().map(|&j| r[j]).collect())
            .collect();
        field::rank(sub) == keep.len()
    })
}

pub fn minimal_parameter_fixings(m: &CompModel, opts: SearchOptions) -> AdjustmentResult {
    let engine = RankEngine::for_model(m, opts.rank);
    let np = m.num_params();
    let mut evaluations = 0;
    let mut memo: HashMap<Vec<usize>, bool> = HashMap::new();
    let mut test = |set: &[usize]| -> bool {
        *memo.entry(set.to_vec()).or_insert_with(|| {
            evaluations += 1;
            identifiable_after_fixing(&engine, set)
        })
    };
    let mut found: Vec<Vec<usize>> = Vec::new();
    // fixing fewer than kernel_dim parameters cannot fill the kernel
    for k in engine.kernel_dim()..=opts.budget.min(np) {
        for set in (0..np).combinations(k) {
            if test(&set) {
                found.push(set);
            }
        }
        if !found.is_empty() {
            break;
        }
    }
    for set in &found {
        debug_assert!((0..set.len())
            .flat_map(|k| set.iter().copied().combinations(k))
            .all(|s| !test(&s)));
    }
    let mut minimal_sets: Vec<Vec<Adjustment>> = found
        .into_iter()
        .map(|s| s.into_iter().map(Adjustment::FixParam).collect())
        .collect();
    minimal_sets.sort();
    AdjustmentResult {
        kind: AdjustmentKind::FixParams,
        minimal_sets,
        budget: opts.budget,
        evaluations,
    }
}

/// Applies an adjustment set: added placements give a new model; fixed
/// parameters are reported back for column removal.
pub fn apply_adjustments(m: &CompModel, set: &[Adjustment]) -> (CompModel, Vec<usize>) {
    let mut inputs = m.inputs().to_vec();
    let mut outputs = m.outputs().to_vec();
    let mut fixed = Vec::new();
    for a in set {
        match *a {
            Adjustment::AddOutput(c) => outputs.push(c),
            Adjustment::AddInput(c) => inputs.push(c),
            Adjustment::FixParam(p) => fixed.push(p),
        }
    }
    inputs.sort_unstable();
    inputs.dedup();
    outputs.sort_unstable();
    outputs.dedup();
    let adjusted = m
        .with_placements(&inputs, &outputs, m.leaks())
        .expect("adding placements keeps the model valid");
    (adjusted, fixed)
}

/// Whether an adjustment set makes the model locally identifiable.
pub fn adjustment_succeeds(m: &CompModel, set: &[Adjustment], opts: RankOptions) -> bool {
    let (adjusted, fixed) = apply_adjustments(m, set);
    identifiable_after_fixing(&RankEngine::for_model(&adjusted, opts), &fixed)
}
