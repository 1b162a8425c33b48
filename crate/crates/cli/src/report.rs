//! Machine-readable reports. Every report starts with a [`Header`].

use compid_core::criteria::{MonomialKind, RuleHit};
use compid_core::family::{FamilySpec, FamilySummary};
use compid_core::field::PRIME;
use compid_core::rank::{Confidence, IdentReport, RankOptions, ScalingSymmetry, Verdict};
use compid_core::reparam::{ReparamKind, Verification};
use compid_core::search::AdjustmentKind;
use serde::{Deserialize, Serialize};

pub const TOOL: &str = "compid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub prime: u64,
    pub seed: u64,
    pub trials: usize,
    /// Probability bound on a wrong generic rank.
    pub confidence: String,
}

impl Header {
    pub fn new(opts: RankOptions, confidence: &Confidence) -> Self {
        Header::with_confidence_line(opts, confidence.to_string())
    }

    pub fn with_confidence_line(opts: RankOptions, confidence: String) -> Self {
        Header {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            prime: PRIME,
            seed: opts.seed,
            trials: opts.trials,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub header: Header,
    pub identifiability: IdentReport,
    pub scaling: ScalingSymmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub header: Header,
    pub hits: Vec<RuleHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoEquationEntry {
    pub output: usize,
    pub support: Vec<usize>,
    pub equation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoReport {
    pub header: Header,
    pub equations: Vec<IoEquationEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionVerdict {
    pub expr: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialVerdict {
    pub kind: MonomialKind,
    /// 1-based compartments along the cycle or path.
    pub support: Vec<usize>,
    pub monomial: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionsReport {
    pub header: Header,
    pub functions: Vec<FunctionVerdict>,
    pub monomials: Vec<MonomialVerdict>,
    /// True when the monomial cap cut the enumeration short.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewParameter {
    pub name: String,
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ReparamStatus {
    Applied {
        kind: ReparamKind,
        /// `X_i = ...` in the original state variables.
        transform: Vec<String>,
        new_parameters: Vec<NewParameter>,
        /// `X_i' = ...` in the new parameters.
        equations: Vec<String>,
        outputs: Vec<String>,
        verification: Verification,
    },
    NotNeeded,
    NotApplicable {
        dim: usize,
        kernel_dim: usize,
        gap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamReport {
    pub header: Header,
    pub result: ReparamStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestReport {
    pub header: Header,
    pub kind: AdjustmentKind,
    /// Minimality is by cardinality.
    pub minimal_sets: Vec<Vec<String>>,
    pub budget: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerateReport {
    pub header: Header,
    pub spec: FamilySpec,
    pub database: String,
    pub summary: FamilySummary,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}
