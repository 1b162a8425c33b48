//! Exhaustive enumeration of model families into classification databases.
//!
//! Each row carries the rank verdict, the combinatorial rule hits and
//! whether the two agree.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::criteria::{classify, RuleHit, RuleVerdict};
use crate::io::{io_coefficient_map_cached, IoCache};
use crate::model::{validate_model, CompModel, LeakConvention, RawModel};
use crate::rank::{RankEngine, RankOptions, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DirectedCycle,
    BidirectedTree,
    Catenary,
    Mammillary,
    DirectedPath,
    AllDigraphs,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::DirectedCycle,
        Family::BidirectedTree,
        Family::Catenary,
        Family::Mammillary,
        Family::DirectedPath,
        Family::AllDigraphs,
    ];

    /// Largest supported number of compartments.
    pub fn max_n(self) -> usize {
        match self {
            Family::DirectedCycle | Family::Catenary | Family::DirectedPath => 8,
            Family::Mammillary => 7,
            Family::BidirectedTree => 6,
            Family::AllDigraphs => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::DirectedCycle => "directed-cycle",
            Family::BidirectedTree => "bidirected-tree",
            Family::Catenary => "catenary",
            Family::Mammillary => "mammillary",
            Family::DirectedPath => "directed-path",
            Family::AllDigraphs => "all-digraphs",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                format!("unknown family '{s}', expected one of {}", names.join(", "))
            })
    }
}

/// Which input/output/leak placements to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Every nonempty input set, every nonempty output set, every leak set.
    #[default]
    AllSubsets,
    /// One input, one output, every leak set.
    SingleInputOutput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    pub n_min: usize,
    pub n_max: usize,
    pub placement: Placement,
    /// Identify models related by a symmetry of the family.
    pub dedup: bool,
    pub convention: LeakConvention,
}

impl FamilySpec {
    pub fn new(family: Family, n_min: usize, n_max: usize) -> Self {
        FamilySpec {
            family,
            n_min,
            n_max,
            placement: Placement::AllSubsets,
            dedup: true,
            convention: LeakConvention::Separate,
        }
    }

    pub fn placement(mut self, p: Placement) -> Self {
        self.placement = p;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error("SpecTooLarge: {family} supports n <= {limit}, requested n = {n}")]
    SpecTooLarge { family: Family, n: usize, limit: usize },
    #[error("EmptyRange: n range {0}..{1} is empty or starts at 0")]
    EmptyRange(usize, usize),
}

/// A graph of the family together with the relabelings that preserve it.
#[derive(Debug, Clone)]
struct Skeleton {
    n: usize,
    edges: Vec<(usize, usize)>,
    automorphisms: Vec<Vec<usize>>,
}

fn map_edges(edges: &[(usize, usize)], p: &[usize]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (p[a], p[b])).collect();
    out.sort_unstable();
    out
}

fn automorphisms(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let sorted = map_edges(edges, &(0..n).collect::<Vec<_>>());
    (0..n)
        .permutations(n)
        .filter(|p| map_edges(edges, p) == sorted)
        .collect()
}

fn bidirected(pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let mut e: Vec<(usize, usize)> = pairs.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
    e.sort_unstable();
    e
}

/// Edge sets up to relabeling: the lexicographically smallest image of each
/// isomorphism class is kept.
fn up_to_isomorphism(n: usize, graphs: Vec<Vec<(usize, usize)>>, dedup: bool) -> Vec<Skeleton> {
    let identity = vec![(0..n).collect::<Vec<_>>()];
    let perms: Vec<Vec<usize>> = (0..n).permutations(n).collect();
    let mut out: Vec<Skeleton> = Vec::new();
    for g in graphs {
        let g = map_edges(&g, &identity[0]);
        if dedup {
            let canonical = perms.iter().map(|p| map_edges(&g, p)).min().expect("n >= 1");
            if canonical != g {
                continue;
            }
        }
        let automorphisms = if dedup { automorphisms(n, &g) } else { identity.clone() };
        out.push(Skeleton {
            n,
            edges: g,
            automorphisms,
        });
    }
    out
}

/// All labeled trees on `n` vertices from their Pruefer sequences.
fn labeled_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 1 {
        return vec![vec![]];
    }
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    std::iter::repeat_n(0..n, n - 2)
        .multi_cartesian_product()
        .map(|seq| {
            let mut degree = vec![1; n];
            for &s in &seq {
                degree[s] += 1;
            }
            let mut pairs = Vec::with_capacity(n - 1);
            for &s in &seq {
                let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf remains");
                pairs.push((leaf, s));
                degree[leaf] -= 1;
                degree[s] -= 1;
            }
            let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
            pairs.push((rest[0], rest[1]));
            pairs
        })
        .collect()
}

fn skeletons(family: Family, n: usize, dedup: bool) -> Vec<Skeleton> {
    let fixed = |edges: Vec<(usize, usize)>, auts: Vec<Vec<usize>>| {
        let automorphisms = if dedup { auts } else { vec![(0..n).collect()] };
        vec![Skeleton {
            n,
            edges,
            automorphisms,
        }]
    };
    let identity: Vec<usize> = (0..n).collect();
    match family {
        Family::DirectedCycle => {
            let edges = if n == 1 {
                vec![]
            } else {
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            };
            let rotations = (0..n).map(|r| (0..n).map(|i| (i + r) % n).collect()).collect();
            fixed(edges, rotations)
        }
        Family::DirectedPath => fixed((1..n).map(|i| (i - 1, i)).collect(), vec![identity]),
        Family::Catenary => {
            let reversal = (0..n).rev().collect();
            fixed(bidirected((1..n).map(|i| (i - 1, i))), vec![identity, reversal])
        }
        Family::Mammillary => {
            let edges = bidirected((1..n).map(|i| (0, i)));
            let auts = (1..n)
                .permutations(n - 1)
                .map(|p| std::iter::once(0).chain(p).collect())
                .collect();
            fixed(edges, auts)
        }
        Family::BidirectedTree => {
            let trees = labeled_trees(n).into_iter().map(bidirected).collect();
            up_to_isomorphism(n, trees, dedup)
        }
        Family::AllDigraphs => {
            let slots: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .collect();
            let graphs = (0..1u64 << slots.len())
                .map(|mask| {
                    slots
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| mask >> k & 1 == 1)
                        .map(|(_, &e)| e)
                        .collect()
                })
                .collect();
            up_to_isomorphism(n, graphs, dedup)
        }
    }
}

fn map_mask(mask: u32, p: &[usize]) -> u32 {
    p.iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .fold(0, |acc, (_, &j)| acc | 1 << j)
}

fn members(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Placements `(inputs, outputs, leaks)` as bitmasks that are smallest in
/// their orbit under the automorphisms, grouped by leak set.
fn placements(s: &Skeleton, policy: Placement) -> Vec<(u32, Vec<(u32, u32)>)> {
    let n = s.n;
    let full = 1u32 << n;
    let io_sets: Vec<u32> = match policy {
        Placement::AllSubsets => (1..full).collect(),
        Placement::SingleInputOutput => (0..n).map(|i| 1 << i).collect(),
    };
    let canonical = |c: (u32, u32, u32)| {
        s.automorphisms
            .iter()
            .all(|p| (map_mask(c.0, p), map_mask(c.1, p), map_mask(c.2, p)) >= c)
    };
    (0..full)
        .map(|leak| {
            let io: Vec<(u32, u32)> = io_sets
                .iter()
                .flat_map(|&i| io_sets.iter().map(move |&o| (i, o)))
                .filter(|&(i, o)| canonical((i, o, leak)))
                .collect();
            (leak, io)
        })
        .filter(|(_, io)| !io.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleConsensus {
    Identifiable,
    Unidentifiable,
    /// Only parameter-level rules fired.
    ParametersOnly,
    None,
    /// Model-level rules contradicted each other.
    Conflict,
}

/// One database row. Compartments are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub model_hash: String,
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub leaks: Vec<usize>,
    pub rank: usize,
    pub num_params: usize,
    pub kernel_dim: usize,
    pub verdict: Verdict,
    pub rule_hits: Vec<String>,
    pub rule_verdict: RuleConsensus,
    pub agreement: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub rows: usize,
    pub identifiable: usize,
    pub unidentifiable: usize,
    pub with_rule_hits: usize,
    pub agreements: usize,
    pub disagreements: usize,
}

impl FamilySummary {
    fn add(&mut self, r: &FamilyRow) {
        self.rows += 1;
        if r.verdict.is_identifiable() {
            self.identifiable += 1;
        } else {
            self.unidentifiable += 1;
        }
        if !r.rule_hits.is_empty() {
            self.with_rule_hits += 1;
        }
        if r.agreement {
            self.agreements += 1;
        } else {
            self.disagreements += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDatabase {
    pub spec: FamilySpec,
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<FamilyRow>,
    pub summary: FamilySummary,
}

pub fn model_hash(m: &CompModel) -> String {
    let raw = m.to_raw();
    let text = format!(
        "{}|{:?}|{:?}|{:?}|{:?}|{:?}",
        raw.compartments, raw.edges, raw.inputs, raw.outputs, raw.leaks, raw.leak_convention
    );
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Whether the rank engine confirms every rule hit.
pub fn rules_agree(m: &CompModel, hits: &[RuleHit], engine: &RankEngine) -> bool {
    let kernel = engine.kernel_dim();
    hits.iter().all(|h| {
        let params = || {
            h.affected_params
                .iter()
                .filter_map(|s| m.param_by_name(s))
                .map(|p| engine.param_verdict(p.ordinal))
        };
        match h.verdict {
            RuleVerdict::ModelIdentifiable => kernel == 0,
            RuleVerdict::ModelUnidentifiable => kernel > 0,
            RuleVerdict::ParamGloballyIdentifiable => params().all(Verdict::is_identifiable),
            RuleVerdict::ParamUnidentifiable => params().all(|v| !v.is_identifiable()),
        }
    })
}

fn consensus(hits: &[RuleHit]) -> RuleConsensus {
    let ident = hits.iter().any(|h| h.verdict == RuleVerdict::ModelIdentifiable);
    let unident = hits.iter().any(|h| h.verdict == RuleVerdict::ModelUnidentifiable);
    match (ident, unident) {
        (true, true) => RuleConsensus::Conflict,
        (true, false) => RuleConsensus::Identifiable,
        (false, true) => RuleConsensus::Unidentifiable,
        (false, false) if hits.is_empty() => RuleConsensus::None,
        (false, false) => RuleConsensus::ParametersOnly,
    }
}

/// Rank verdict, rule hits and their agreement for one model.
pub fn classify_row(m: &CompModel, cache: &mut IoCache, opts: RankOptions) -> FamilyRow {
    let engine = RankEngine::new_early_exit(io_coefficient_map_cached(m, cache), opts);
    let (hits, rule_verdict, agreement) = match classify(m) {
        Ok(hits) => {
            let agree = rules_agree(m, &hits, &engine);
            let c = consensus(&hits);
            (hits.into_iter().map(|h| h.rule_id).collect(), c, agree)
        }
        Err(_) => (vec![], RuleConsensus::Conflict, false),
    };
    let raw = m.to_raw();
    FamilyRow {
        model_hash: model_hash(m),
        n: m.n(),
        edges: raw.edges.iter().map(|&(a, b)| [a, b]).collect(),
        inputs: raw.inputs,
        outputs: raw.outputs,
        leaks: raw.leaks,
        rank: engine.rank(),
        num_params: m.num_params(),
        kernel_dim: engine.kernel_dim(),
        verdict: if engine.kernel_dim() == 0 {
            Verdict::LocallyIdentifiable
        } else {
            Verdict::Unidentifiable
        },
        rule_hits: hits,
        rule_verdict,
        agreement,
    }
}

fn check_spec(spec: &FamilySpec) -> Result<(), FamilyError> {
    if spec.n_min == 0 || spec.n_min > spec.n_max {
        return Err(FamilyError::EmptyRange(spec.n_min, spec.n_max));
    }
    let limit = spec.family.max_n();
    if spec.n_max > limit {
        return Err(FamilyError::SpecTooLarge {
            family: spec.family,
            n: spec.n_max,
            limit,
        });
    }
    Ok(())
}

/// Every model of the spec, deduplicated, in canonical order.
pub fn family_models(spec: &FamilySpec) -> Result<Vec<CompModel>, FamilyError> {
    check_spec(spec)?;
    let mut out = Vec::new();
    for group in groups(spec) {
        out.extend(group);
    }
    Ok(out)
}

/// Models sharing a graph and leak set, which share their determinants.
fn groups(spec: &FamilySpec) -> Vec<Vec<CompModel>> {
    let mut out = Vec::new();
    for n in spec.n_min..=spec.n_max {
        for s in skeletons(spec.family, n, spec.dedup) {
            for (leak, io) in placements(&s, spec.placement) {
                let group = io
                    .into_iter()
                    .map(|(i, o)| {
                        validate_model(&RawModel {
                            compartments: n,
                            edges: s.edges.iter().map(|&(a, b)| (a + 1, b + 1)).collect(),
                            inputs: members(i, n).iter().map(|x| x + 1).collect(),
                            outputs: members(o, n).iter().map(|x| x + 1).collect(),
                            leaks: members(leak, n).iter().map(|x| x + 1).collect(),
                            leak_convention: spec.convention,
                        })
                        .expect("enumerated models are valid")
                    })
                    .collect();
                out.push(group);
            }
        }
    }
    out
}

pub fn enumerate_family(spec: &FamilySpec, opts: RankOptions) -> Result<FamilyDatabase, FamilyError> {
    check_spec(spec)?;
    let rows: Vec<FamilyRow> = groups(spec)
        .into_par_iter()
        .flat_map_iter(|group| {
            let mut cache = IoCache::new();
            group
                .iter()
                .map(|m| classify_row(m, &mut cache, opts))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut summary = FamilySummary::default();
    for r in &rows {
        summary.add(r);
    }
    Ok(FamilyDatabase {
        spec: spec.clone(),
        seed: opts.seed,
        trials: opts.trials,
        rows,
        summary,
    })
}

pub const CSV_HEADER: [&str; 11] = [
    "model_hash",
    "n",
    "edges",
    "inputs",
    "outputs",
    "leaks",
    "rank",
    "kernel_dim",
    "verdict",
    "rule_hits",
    "agreement",
];

fn join(xs: &[usize]) -> String {
    xs.iter().map(ToString::to_string).join(" ")
}

impl FamilyRow {
    pub fn csv_record(&self) -> [String; 11] {
        let verdict = match self.verdict {
            Verdict::LocallyIdentifiable => "locally-identifiable",
            Verdict::Unidentifiable => "unidentifiable",
        };
        [
            self.model_hash.clone(),
            self.n.to_string(),
            self.edges.iter().map(|[a, b]| format!("{a}->{b}")).join(" "),
            join(&self.inputs),
            join(&self.outputs),
            join(&self.leaks),
            self.rank.to_string(),
            self.kernel_dim.to_string(),
            verdict.to_string(),
            self.rule_hits.join(" "),
            self.agreement.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatabaseFormat {
    Csv,
    JsonLines,
}

impl DatabaseFormat {
    /// `.csv` selects CSV; anything else is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => DatabaseFormat::Csv,
            _ => DatabaseFormat::JsonLines,
        }
    }
}

/// Writes the rows. CSV gets the header line; JSON lines end with one
/// `{"summary": ...}` object.
pub fn write_database<W: Write>(
    db: &FamilyDatabase,
    format: DatabaseFormat,
    out: W,
) -> std::io::Result<()> {
    match format {
        DatabaseFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for r in &db.rows {
                w.write_record(r.csv_record())?;
            }
            w.flush()
        }
        DatabaseFormat::JsonLines => {
            let mut out = std::io::BufWriter::new(out);
            for r in &db.rows {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
            serde_json::to_writer(&mut out, &serde_json::json!({ "summary": db.summary }))?;
            writeln!(out)?;
            out.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn rotate(mask: u32, r: usize, n: usize) -> u32 {
        (0..n).filter(|i| mask >> i & 1 == 1).fold(0, |a, i| a | 1 << ((i + r) % n))
    }

    #[test]
    fn cycle_rows_match_orbit_count() {
        // brute force: distinct placements after rotation
        let n = 3;
        let mut orbits = BTreeSet::new();
        for i in 1..8u32 {
            for o in 1..8u32 {
                for l in 0..8u32 {
                    let orbit = (0..n)
                        .map(|r| (rotate(i, r, n), rotate(o, r, n), rotate(l, r, n)))
                        .min()
                        .unwrap();
                    orbits.insert(orbit);
                }
            }
        }
        let models = family_models(&FamilySpec::new(Family::DirectedCycle, 3, 3)).unwrap();
        assert_eq!(models.len(), orbits.len());
        let hashes: BTreeSet<String> = models.iter().map(model_hash).collect();
        assert_eq!(hashes.len(), models.len());
    }

    #[test]
    fn tree_counts() {
        // non-isomorphic trees on 1..=6 vertices
        let counts: Vec<usize> = (1..=6).map(|n| skeletons(Family::BidirectedTree, n, true).len()).collect();
        assert_eq!(counts, vec![1, 1, 1, 2, 3, 6]);
        assert_eq!(labeled_trees(5).len(), 125);
    }

    #[test]
    fn digraph_counts() {
        // non-isomorphic digraphs without loops on 1..=3 vertices
        let counts: Vec<usize> = (1..=3).map(|n| skeletons(Family::AllDigraphs, n, true).len()).collect();
        assert_eq!(counts, vec![1, 3, 16]);
    }

    #[test]
    fn single_compartment() {
        let db = enumerate_family(
            &FamilySpec::new(Family::DirectedCycle, 1, 1),
            RankOptions::default(),
        )
        .unwrap();
        assert_eq!(db.rows.len(), 2);
        assert!(db.rows.iter().all(|r| r.verdict.is_identifiable()));
    }

    #[test]
    fn limits() {
        let err = family_models(&FamilySpec::new(Family::AllDigraphs, 1, 5)).unwrap_err();
        assert_eq!(
            err,
            FamilyError::SpecTooLarge {
                family: Family::AllDigraphs,
                n: 5,
                limit: 4
            }
        );
        assert!(family_models(&FamilySpec::new(Family::Catenary, 3, 2)).is_err());
    }

    #[test]
    fn small_cycles_agree() {
        let db = enumerate_family(
            &FamilySpec::new(Family::DirectedCycle, 2, 3),
            RankOptions::default(),
        )
        .unwrap();
        assert_eq!(db.summary.disagreements, 0);
        assert_eq!(db.summary.rows, db.rows.len());
    }

    #[test]
    fn database_is_deterministic() {
        let spec = FamilySpec::new(Family::Catenary, 1, 3).placement(Placement::SingleInputOutput);
        let write = |f| {
            let db = enumerate_family(&spec, RankOptions::default()).unwrap();
            let mut buf = Vec::new();
            write_database(&db, f, &mut buf).unwrap();
            buf
        };
        for f in [DatabaseFormat::Csv, DatabaseFormat::JsonLines] {
            assert_eq!(write(f), write(f));
        }
        let csv = String::from_utf8(write(DatabaseFormat::Csv)).unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
    }
}
