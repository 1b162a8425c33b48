//! Generic local identifiability by Jacobian rank at random points of a
//! large prime field, plus the scaling-symmetry lattice.

use std::fmt;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError, Vanishes};
use crate::field::{self, trial_seed, FieldPoint, Fp, RowSpace, PRIME};
use crate::io::{io_coefficient_map, CoefficientMap};
use crate::lattice::{exact_rank, hermite_normal_form, integer_kernel};
use crate::model::{CompModel, ParamKind};

/// Resampling attempts per trial when a function's denominator vanishes.
pub const RESAMPLE_BUDGET: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankError {
    #[error("UnknownParameter: '{0}' is not a parameter of this model")]
    UnknownParameter(String),
    #[error("DenominatorVanishes: denominator was zero at every resampled point")]
    DenominatorVanishes,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOptions {
    pub trials: usize,
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions { trials: 3, seed: 0 }
    }
}

/// Schwartz–Zippel style bound: a nonzero polynomial of degree `degree_bound`
/// vanishes at a uniform point with probability at most `degree_bound / prime`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub prime: u64,
    pub degree_bound: u64,
    pub per_trial_failure: f64,
    pub trials: usize,
    pub value: f64,
}

impl Confidence {
    pub fn new(degree_bound: u64, trials: usize) -> Self {
        let per_trial_failure = (degree_bound as f64 / PRIME as f64).min(1.0);
        Confidence {
            prime: PRIME,
            degree_bound,
            per_trial_failure,
            trials,
            value: 1.0 - per_trial_failure.powi(trials as i32),
        }
    }
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "confidence >= 1 - ({}/p)^{} with p = {} ({} trials)",
            self.degree_bound, self.trials, self.prime, self.trials
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    LocallyIdentifiable,
    Unidentifiable,
}

impl Verdict {
    pub fn is_identifiable(self) -> bool {
        self == Verdict::LocallyIdentifiable
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::LocallyIdentifiable => "locally identifiable (global status undetermined)",
            Verdict::Unidentifiable => "unidentifiable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamVerdict {
    pub param: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentReport {
    pub rank: usize,
    pub num_params: usize,
    pub kernel_dim: usize,
    pub model_verdict: Verdict,
    pub per_param: Vec<ParamVerdict>,
    pub confidence: Confidence,
    pub seeds: Vec<u64>,
    pub warnings: Vec<String>,
}

impl IdentReport {
    pub fn verdict_of(&self, name: &str) -> Option<Verdict> {
        self.per_param
            .iter()
            .find(|p| p.param == name)
            .map(|p| p.verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalingSymmetry {
    /// Integer vectors over compartments, zero on inputs and outputs, whose
    /// induced parameter directions are linearly independent.
    pub basis: Vec<Vec<i64>>,
    /// Dimension of the induced parameter directions.
    pub dim: usize,
    /// Whether the scalings account for the whole kernel.
    pub complete: bool,
    /// Exponent vectors over parameters generating the invariant lattice,
    /// in Hermite normal form.
    pub invariant_exponents: Vec<Vec<i64>>,
    /// The same generators rendered as (Laurent) monomials.
    pub invariants: Vec<String>,
}

/// Jacobian of the coefficient map at one point, with its row space.
#[derive(Debug, Clone)]
pub struct SampledJacobian {
    pub point: FieldPoint,
    pub rows: Vec<Vec<Fp>>,
    pub space: RowSpace,
}

impl SampledJacobian {
    pub fn rank(&self) -> usize {
        self.space.rank()
    }
}

pub fn jacobian_at(c: &CoefficientMap, point: &[Fp]) -> Vec<Vec<Fp>> {
    c.entries()
        .iter()
        .map(|e| e.poly.eval_dual(point).1)
        .collect()
}

fn sample(c: &CoefficientMap, seed: u64) -> SampledJacobian {
    let point = FieldPoint::sample(c.num_params(), seed);
    let rows = jacobian_at(c, &point.values);
    let space = RowSpace::new(&rows, c.num_params());
    SampledJacobian { point, rows, space }
}

pub fn degree_bound(c: &CoefficientMap) -> u64 {
    // a maximal minor of J has degree at most rank * (max coefficient degree)
    let d = c.max_degree().max(1) as u64;
    (d * c.num_params() as u64).max(1)
}

/// Evaluated Jacobians at `trials` independent points and the generic rank.
#[derive(Debug, Clone)]
pub struct RankEngine {
    map: CoefficientMap,
    samples: Vec<SampledJacobian>,
    rank: usize,
    opts: RankOptions,
    warnings: Vec<String>,
}

impl RankEngine {
    pub fn new(map: CoefficientMap, opts: RankOptions) -> Self {
        let trials = opts.trials.max(1);
        let samples: Vec<SampledJacobian> = (0..trials as u64)
            .into_par_iter()
            .map(|t| sample(&map, trial_seed(opts.seed, t)))
            .collect();
        RankEngine::from_samples(map, samples, opts)
    }

    /// Like [`RankEngine::new`], but stops sampling once a point shows full
    /// column rank, which already proves the generic rank is full.
    pub fn new_early_exit(map: CoefficientMap, opts: RankOptions) -> Self {
        let mut samples = Vec::new();
        for t in 0..opts.trials.max(1) as u64 {
            let s = sample(&map, trial_seed(opts.seed, t));
            let full = s.rank() == map.num_params();
            samples.push(s);
            if full {
                break;
            }
        }
        RankEngine::from_samples(map, samples, opts)
    }

    fn from_samples(map: CoefficientMap, samples: Vec<SampledJacobian>, opts: RankOptions) -> Self {
        let rank = samples.iter().map(SampledJacobian::rank).max().unwrap_or(0);
        let mut warnings = Vec::new();
        if samples.iter().any(|s| s.rank() != rank) {
            let ranks: Vec<String> = samples.iter().map(|s| s.rank().to_string()).collect();
            warnings.push(format!(
                "rank differed across trials ({}); using the maximum",
                ranks.join(", ")
            ));
        }
        RankEngine {
            map,
            samples,
            rank,
            opts,
            warnings,
        }
    }

    pub fn for_model(m: &CompModel, opts: RankOptions) -> Self {
        RankEngine::new(io_coefficient_map(m), opts)
    }

    pub fn map(&self) -> &CoefficientMap {
        &self.map
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn kernel_dim(&self) -> usize {
        self.map.num_params() - self.rank
    }

    pub fn samples(&self) -> &[SampledJacobian] {
        &self.samples
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.point.seed).collect()
    }

    pub fn confidence(&self) -> Confidence {
        Confidence::new(degree_bound(&self.map), self.samples.len())
    }

    fn max_rank_samples(&self) -> impl Iterator<Item = &SampledJacobian> {
        self.samples.iter().filter(move |s| s.rank() == self.rank)
    }

    /// Whether the unit direction of parameter `ordinal` lies in the Jacobian
    /// row space at every maximal-rank point.
    pub fn param_verdict(&self, ordinal: usize) -> Verdict {
        if self.kernel_dim() == 0 {
            return Verdict::LocallyIdentifiable;
        }
        let mut unit = vec![Fp::ZERO; self.map.num_params()];
        unit[ordinal] = Fp::ONE;
        verdict(self.max_rank_samples().all(|s| s.space.contains(&unit)))
    }

    /// Gradient-in-row-space test for a rational function. A point where the
    /// denominator vanishes is replaced by a fresh one, up to the budget.
    pub fn function_verdict(&self, f: &Expr) -> Result<Verdict, RankError> {
        let mut all = true;
        for (t, s) in self.max_rank_samples().enumerate() {
            all &= match f.eval_dual(&s.point.values) {
                Ok(d) => s.space.contains(&d.grad),
                Err(Vanishes) => self.resampled_gradient(f, t as u64)?,
            };
        }
        Ok(verdict(all))
    }

    fn resampled_gradient(&self, f: &Expr, trial: u64) -> Result<bool, RankError> {
        for attempt in 1..=RESAMPLE_BUDGET {
            let seed = trial_seed(self.opts.seed ^ attempt.wrapping_mul(0x5851_F42D), trial);
            let s = sample(&self.map, seed);
            if s.rank() != self.rank {
                continue;
            }
            if let Ok(d) = f.eval_dual(&s.point.values) {
                return Ok(s.space.contains(&d.grad));
            }
        }
        Err(RankError::DenominatorVanishes)
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::LocallyIdentifiable
    } else {
        Verdict::Unidentifiable
    }
}

/// Maximal rank of the Jacobian over `opts.trials` independent points.
pub fn generic_rank(c: &CoefficientMap, opts: RankOptions) -> (usize, Confidence) {
    let e = RankEngine::new(c.clone(), opts);
    (e.rank(), e.confidence())
}

pub fn local_identifiability(m: &CompModel, opts: RankOptions) -> IdentReport {
    let engine = RankEngine::for_model(m, opts);
    report_from_engine(m, &engine)
}

pub fn report_from_engine(m: &CompModel, engine: &RankEngine) -> IdentReport {
    let per_param = (0..m.num_params())
        .into_par_iter()
        .map(|p| ParamVerdict {
            param: m.param_names()[p].clone(),
            verdict: engine.param_verdict(p),
        })
        .collect();
    IdentReport {
        rank: engine.rank(),
        num_params: m.num_params(),
        kernel_dim: engine.kernel_dim(),
        model_verdict: verdict(engine.kernel_dim() == 0),
        per_param,
        confidence: engine.confidence(),
        seeds: engine.seeds(),
        warnings: engine.warnings().to_vec(),
    }
}

pub fn parameter_identifiability(
    m: &CompModel,
    name: &str,
    opts: RankOptions,
) -> Result<Verdict, RankError> {
    let p = m
        .param_by_name(name)
        .ok_or_else(|| RankError::UnknownParameter(name.to_string()))?;
    Ok(RankEngine::for_model(m, opts).param_verdict(p.ordinal))
}

pub fn function_identifiability(
    m: &CompModel,
    src: &str,
    opts: RankOptions,
) -> Result<Verdict, RankError> {
    let f = Expr::parse(src, m.param_names())?;
    RankEngine::for_model(m, opts).function_verdict(&f)
}

/// Weight of each parameter under the compartment scaling `v`:
/// `v_to - v_from` for an edge, zero for a leak.
pub fn scaling_weights(m: &CompModel, v: &[i64]) -> Vec<i64> {
    m.params()
        .iter()
        .map(|p| match p.kind {
            ParamKind::Edge { to, from } => v[to] - v[from],
            ParamKind::Leak { .. } => 0,
        })
        .collect()
}

/// Columns of the weight map restricted to compartments outside `In ∪ Out`.
fn weight_columns(m: &CompModel, free: &[usize]) -> Vec<Vec<i64>> {
    free.iter()
        .map(|&c| {
            let mut v = vec![0; m.n()];
            v[c] = 1;
            scaling_weights(m, &v)
        })
        .collect()
}

pub fn scaling_symmetries(m: &CompModel, engine: &RankEngine) -> ScalingSymmetry {
    let free: Vec<usize> = (0..m.n()).filter(|&c| !m.is_input(c) && !m.is_output(c)).collect();
    let cols = weight_columns(m, &free);
    let np = m.num_params();

    // Exact lattice: a direction w annihilates the log-Jacobian identically
    // iff every monomial exponent of every coefficient is orthogonal to w.
    let mut exps: Vec<Vec<u16>> = engine
        .map()
        .entries()
        .iter()
        .flat_map(|e| e.poly.terms().map(|(mon, _)| mon.exponents().to_vec()))
        .collect();
    exps.sort();
    exps.dedup();
    let system: Vec<Vec<BigInt>> = exps
        .iter()
        .map(|e| {
            cols.iter()
                .map(|w| BigInt::from((0..np).map(|p| e[p] as i64 * w[p]).sum::<i64>()))
                .collect()
        })
        .collect();
    let lattice = if free.is_empty() {
        Vec::new()
    } else {
        hermite_normal_form(&integer_kernel(&system, free.len()))
    };
    // keep lattice vectors whose parameter directions are independent;
    // scalings that move no parameter are dropped
    let mut basis: Vec<Vec<i64>> = Vec::new();
    let mut ws: Vec<Vec<BigInt>> = Vec::new();
    for coords in &lattice {
        let mut v = vec![0i64; m.n()];
        for (k, &c) in free.iter().enumerate() {
            v[c] = coords[k].to_i64().expect("small scaling vector");
        }
        let w: Vec<BigInt> = scaling_weights(m, &v).into_iter().map(BigInt::from).collect();
        ws.push(w);
        if exact_rank(&ws) == ws.len() {
            basis.push(v);
        } else {
            ws.pop();
        }
    }

    // modular cross-check against the log-Jacobian J * diag(alpha) * W
    let modular_dim = if free.is_empty() {
        0
    } else {
        let cols = &cols;
        let rows: Vec<Vec<Fp>> = engine
            .samples()
            .iter()
            .flat_map(|s| {
                s.rows.iter().map(move |r| {
                    cols.iter()
                        .map(|w| {
                            (0..np).fold(Fp::ZERO, |acc, p| {
                                acc + r[p] * s.point.values[p] * Fp::from_i64(w[p])
                            })
                        })
                        .collect()
                })
            })
            .collect();
        field::kernel(&rows, free.len()).len()
    };
    debug_assert_eq!(modular_dim, lattice.len());

    let invariant_exponents: Vec<Vec<i64>> = if ws.is_empty() {
        (0..np)
            .map(|p| (0..np).map(|q| i64::from(p == q)).collect())
            .collect()
    } else {
        hermite_normal_form(&integer_kernel(&ws, np))
            .into_iter()
            .map(|r| r.iter().map(|x| x.to_i64().expect("small exponent")).collect())
            .collect()
    };
    let invariants = invariant_exponents
        .iter()
        .map(|e| laurent_monomial(e, m.param_names()))
        .collect();
    let dim = basis.len();
    ScalingSymmetry {
        basis,
        dim,
        complete: dim == engine.kernel_dim(),
        invariant_exponents,
        invariants,
    }
}

/// Renders `prod names[i]^e[i]`, writing negative powers as `^-k`.
pub fn laurent_monomial(e: &[i64], names: &[String]) -> String {
    let parts: Vec<String> = e
        .iter()
        .enumerate()
        .filter(|(_, &x)| x != 0)
        .map(|(i, &x)| {
            if x == 1 {
                names[i].clone()
            } else {
                format!("{}^{}", names[i], x)
            }
        })
        .collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join("*")
    }
}

/// Scaling vectors must leave every coefficient's monomials invariant.
pub fn scaling_is_invariant(m: &CompModel, c: &CoefficientMap, v: &[i64]) -> bool {
    let w = scaling_weights(m, v);
    c.entries().iter().all(|e| {
        e.poly.terms().all(|(mon, _)| {
            mon.exponents()
                .iter()
                .zip(&w)
                .map(|(&a, &b)| a as i64 * b)
                .sum::<i64>()
                == 0
        })
    })
}
