//! Identifiable reparametrizations: the observability canonical form of a
//! single-input single-output model, and quotients by scaling symmetries.

use std::collections::VecDeque;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{self, trial_seed, FieldPoint, Fp, RowSpace};
use crate::io::{io_equations, IoEquation};
use crate::lattice::hnf_coordinates;
use crate::model::{compartmental_matrix, graph, CompModel, ParamKind};
use crate::poly::{Laurent, MPoly, PolyMatrix};
use crate::rank::{scaling_symmetries, RankEngine, ScalingSymmetry};

/// Random points used for the observability test.
pub const OBSERVABILITY_TRIALS: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReparamError {
    #[error("NotSISO: model has {inputs} inputs and {outputs} outputs; exactly one of each is required")]
    NotSiso { inputs: usize, outputs: usize },
    #[error("NotObservable: the observability matrix is singular at every test point")]
    NotObservable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReparamKind {
    SisoCanonical,
    ScalingQuotient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verification {
    Passed,
    Failed { residual: String },
}

impl Verification {
    pub fn passed(&self) -> bool {
        *self == Verification::Passed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transform {
    /// `X = T x`.
    Linear(PolyMatrix),
    /// `X_i = s_i x_i` for the listed compartments.
    Scaling(Vec<(usize, Laurent)>),
}

/// A linear system in new parameters, each defined through the old ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewSystem {
    pub param_names: Vec<String>,
    /// New parameter `k` as a function of the original parameters.
    pub definitions: Vec<Laurent>,
    /// Display names of the new state variables.
    pub state_names: Vec<String>,
    /// State matrix over the new parameters.
    pub state_matrix: Vec<Vec<Laurent>>,
    /// `(original input compartment, column)` pairs over the new parameters.
    pub input_columns: Vec<(usize, Vec<Laurent>)>,
    /// `(original output compartment, observed state index)` pairs.
    pub outputs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reparametrization {
    pub kind: ReparamKind,
    pub transform: Transform,
    pub new_system: NewSystem,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalingOutcome {
    /// The model is already locally identifiable.
    NotNeeded,
    /// Scalings do not account for the whole kernel.
    NotApplicable { dim: usize, kernel_dim: usize, gap: usize },
    Applied(Box<Reparametrization>, ScalingSymmetry),
}

fn unit_row(n: usize, k: usize, nvars: usize) -> Vec<MPoly> {
    (0..n)
        .map(|j| if j == k { MPoly::one(nvars) } else { MPoly::zero(nvars) })
        .collect()
}

fn row_times(row: &[MPoly], a: &PolyMatrix) -> Vec<MPoly> {
    (0..a.cols())
        .map(|j| {
            row.iter()
                .enumerate()
                .fold(MPoly::zero(a.nvars()), |acc, (k, r)| &acc + &(r * &a[(k, j)]))
        })
        .collect()
}

/// Rows `C A^m`, `m = 0..n-1`, with `C` the unit row of `out`.
pub fn observability_matrix(m: &CompModel, out: usize) -> PolyMatrix {
    let a = compartmental_matrix(m);
    let np = m.num_params();
    let mut rows = vec![unit_row(m.n(), out, np)];
    while rows.len() < m.n() {
        let next = row_times(rows.last().expect("nonempty"), &a);
        rows.push(next);
    }
    PolyMatrix::from_rows(np, rows)
}

/// Whether the observability matrix is nonsingular at some random point.
pub fn generically_observable(m: &CompModel, out: usize, seed: u64) -> bool {
    let t = observability_matrix(m, out);
    (0..OBSERVABILITY_TRIALS).any(|k| {
        let p = FieldPoint::sample(m.num_params(), trial_seed(seed, k));
        !field::det(t.eval_mod(&p.values)).is_zero()
    })
}

/// Markov parameters `h_0..h_{n-1}` from the io-coefficients by truncated
/// power-series division: `den = D^n + sum c_k D^k`, `num = sum d_k D^k`.
pub fn markov_parameters(c: &[Laurent], d: &[Laurent]) -> Vec<Laurent> {
    let n = c.len();
    let mut h: Vec<Laurent> = Vec::with_capacity(n);
    for m in 0..n {
        let mut v = d[n - 1 - m].clone();
        for k in 1..=m {
            v = &v - &(&c[n - k] * &h[m - k]);
        }
        h.push(v);
    }
    h
}

pub fn siso_canonical_reparam(m: &CompModel, seed: u64) -> Result<Reparametrization, ReparamError> {
    let (inp, out) = match (m.inputs(), m.outputs()) {
        ([i], [o]) => (*i, *o),
        (i, o) => {
            return Err(ReparamError::NotSiso {
                inputs: i.len(),
                outputs: o.len(),
            })
        }
    };
    let n = m.n();
    let eq = io_equations(m).pop().expect("one output");
    if eq.support.len() != n || !generically_observable(m, out, seed) {
        return Err(ReparamError::NotObservable);
    }
    let t = observability_matrix(m, out);

    // abstract coefficients: one new parameter per non-constant coefficient
    let num = eq
        .numerators
        .iter()
        .find(|(j, _)| *j == inp)
        .map(|(_, p)| p.clone())
        .expect("input inside the support of an observable model");
    let mut param_names = Vec::new();
    let mut definitions = Vec::new();
    let mut slots: Vec<(String, &MPoly)> = Vec::new();
    let zero = MPoly::zero(m.num_params());
    for k in (0..n).rev() {
        slots.push((format!("c{k}"), &eq.denominator.coeffs()[k]));
    }
    for k in (0..n).rev() {
        slots.push((format!("d{k}"), num.coeff(k).unwrap_or(&zero)));
    }
    let nonconst = slots.iter().filter(|(_, p)| !p.is_constant()).count();
    let mut abstract_of = Vec::with_capacity(slots.len());
    for (name, p) in &slots {
        if p.is_constant() {
            let c = p.constant_value().unwrap_or_default();
            abstract_of.push(&Laurent::one(nonconst) * &constant(nonconst, c));
        } else {
            abstract_of.push(Laurent::var(nonconst, param_names.len()));
            param_names.push(name.clone());
            definitions.push(Laurent::from_mpoly(p));
        }
    }
    // slots are c_{n-1}..c_0 then d_{n-1}..d_0; index them by power
    let c: Vec<Laurent> = (0..n).map(|k| abstract_of[n - 1 - k].clone()).collect();
    let d: Vec<Laurent> = (0..n).map(|k| abstract_of[2 * n - 1 - k].clone()).collect();

    let r = nonconst;
    let mut state = vec![vec![Laurent::zero(r); n]; n];
    for (i, row) in state.iter_mut().enumerate().take(n - 1) {
        row[i + 1] = Laurent::one(r);
    }
    for k in 0..n {
        state[n - 1][k] = -&c[k];
    }
    let beta = markov_parameters(&c, &d);
    let new_system = NewSystem {
        param_names,
        definitions,
        state_names: (1..=n).map(|i| format!("X{i}")).collect(),
        state_matrix: state,
        input_columns: vec![(inp, beta)],
        outputs: vec![(out, 0)],
    };
    let mut r = Reparametrization {
        kind: ReparamKind::SisoCanonical,
        transform: Transform::Linear(t),
        new_system,
        verification: Verification::Passed,
    };
    r.verification = verify_reparam(m, &r);
    Ok(r)
}

fn constant(nvars: usize, c: BigInt) -> Laurent {
    Laurent::from_mpoly(&MPoly::constant(nvars, c))
}

/// io-equation of `x' = A x + b u`, `y = x_out` over Laurent entries:
/// returns coefficients (by power of D) of `det(D I - A)` and of
/// `e_out^T adj(D I - A) b`.
pub fn laurent_io(a: &[Vec<Laurent>], b: &[Laurent], out: usize) -> (Vec<Laurent>, Vec<Laurent>) {
    let n = a.len();
    let nv = b.first().map_or(0, Laurent::nvars);
    // clear denominators row by row
    let shifts: Vec<Vec<i32>> = (0..n)
        .map(|i| {
            let mut s = b[i].min_exponents();
            for e in &a[i] {
                for (x, y) in s.iter_mut().zip(e.min_exponents()) {
                    *x = (*x).min(y);
                }
            }
            s.iter().map(|x| -x).collect()
        })
        .collect();
    let d = MPoly::var(nv + 1, nv);
    let lift = |l: &Laurent, s: &[i32]| -> MPoly {
        l.shift(s).to_mpoly().expect("cleared").extend(1)
    };
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mi = lift(&Laurent::one(nv), &shifts[i]);
        let row: Vec<MPoly> = (0..n)
            .map(|j| {
                let entry = -&lift(&a[i][j], &shifts[i]);
                if i == j {
                    &entry + &(&mi * &d)
                } else {
                    entry
                }
            })
            .collect();
        rows.push(row);
    }
    let base = PolyMatrix::from_rows(nv + 1, rows.clone());
    for (i, row) in rows.iter_mut().enumerate() {
        row[out] = &row[out] + &lift(&b[i], &shifts[i]);
    }
    let bumped = PolyMatrix::from_rows(nv + 1, rows);
    let den = base.det().expect("square");
    let num = &bumped.det().expect("square") - &den;
    let total: Vec<i32> = (0..nv)
        .map(|k| -shifts.iter().map(|s| s[k]).sum::<i32>())
        .collect();
    let unshift = |p: MPoly| -> Vec<Laurent> {
        p.split_last()
            .iter()
            .map(|c| Laurent::from_mpoly(c).shift(&total))
            .collect()
    };
    (unshift(den), unshift(num))
}

fn trim(mut v: Vec<Laurent>) -> Vec<Laurent> {
    while v.last().is_some_and(Laurent::is_zero) {
        v.pop();
    }
    v
}

fn compare(what: &str, got: Vec<Laurent>, want: Vec<Laurent>, names: &[String]) -> Option<String> {
    let (got, want) = (trim(got), trim(want));
    let len = got.len().max(want.len());
    for k in 0..len {
        let nv = names.len();
        let g = got.get(k).cloned().unwrap_or_else(|| Laurent::zero(nv));
        let w = want.get(k).cloned().unwrap_or_else(|| Laurent::zero(nv));
        let diff = &g - &w;
        if !diff.is_zero() {
            return Some(format!("{what}, coefficient of D^{k}: {}", diff.display_with(names)));
        }
    }
    None
}

fn original_coeffs(eq: &IoEquation, input: Option<usize>) -> Vec<Laurent> {
    let op = match input {
        None => Some(&eq.denominator),
        Some(j) => eq.numerators.iter().find(|(i, _)| *i == j).map(|(_, p)| p),
    };
    op.map(|p| p.coeffs().iter().map(Laurent::from_mpoly).collect())
        .unwrap_or_default()
}

/// Symbolic check of a reparametrization against the model it came from.
pub fn verify_reparam(m: &CompModel, r: &Reparametrization) -> Verification {
    match check(m, r) {
        None => Verification::Passed,
        Some(residual) => Verification::Failed { residual },
    }
}

fn check(m: &CompModel, r: &Reparametrization) -> Option<String> {
    let sys = &r.new_system;
    let np = m.num_params();
    let names = m.param_names();
    let back = |l: &Laurent| -> Option<Laurent> { l.substitute(&sys.definitions, np) };
    let eqs = io_equations(m);

    // (i) io-equations of the new system, pulled back to the old parameters
    for eq in &eqs {
        let Some(&(_, pos)) = sys.outputs.iter().find(|(o, _)| *o == eq.output) else {
            return Some(format!("output {} missing from the new system", eq.output + 1));
        };
        let nv = sys.param_names.len();
        let h = reaching(&sys.state_matrix, pos);
        let sub: Vec<Vec<Laurent>> = h
            .iter()
            .map(|&i| h.iter().map(|&j| sys.state_matrix[i][j].clone()).collect())
            .collect();
        let out_pos = h.binary_search(&pos).expect("output reaches itself");
        let mut columns = vec![(None, vec![Laurent::zero(nv); h.len()])];
        for (j, col) in &sys.input_columns {
            columns.push((Some(*j), h.iter().map(|&i| col[i].clone()).collect()));
        }
        for (input, col) in columns {
            let (den, num) = laurent_io(&sub, &col, out_pos);
            let got: Option<Vec<Laurent>> = match input {
                None => den.iter().map(back).collect(),
                Some(_) => num.iter().map(back).collect(),
            };
            let Some(got) = got else {
                return Some("definitions cannot be inverted".into());
            };
            let what = match input {
                None => "denominator".to_string(),
                Some(j) => format!("numerator of input {}", j + 1),
            };
            if let Some(res) = compare(&what, got, original_coeffs(eq, input), names) {
                return Some(format!("output {}: {res}", eq.output + 1));
            }
        }
    }

    // (ii) for a linear change of variables, T A = A_c T and T b = beta
    if let Transform::Linear(t) = &r.transform {
        let a = compartmental_matrix(m);
        let n = m.n();
        let ac: Option<Vec<Vec<MPoly>>> = sys
            .state_matrix
            .iter()
            .map(|row| row.iter().map(|e| back(e)?.to_mpoly()).collect())
            .collect();
        let Some(ac) = ac else {
            return Some("companion entries are not polynomial".into());
        };
        let ac = PolyMatrix::from_rows(np, ac);
        let lhs = t.mul(&a);
        let rhs = ac.mul(t);
        for i in 0..n {
            for j in 0..n {
                let diff = &lhs[(i, j)] - &rhs[(i, j)];
                if !diff.is_zero() {
                    return Some(format!(
                        "T*A - A_c*T at ({}, {}): {}",
                        i + 1,
                        j + 1,
                        diff.display_with(names)
                    ));
                }
            }
        }
        for (inp, col) in &sys.input_columns {
            for i in 0..n {
                let Some(beta) = back(&col[i]).and_then(|l| l.to_mpoly()) else {
                    return Some("input column is not polynomial".into());
                };
                let diff = &t[(i, *inp)] - &beta;
                if !diff.is_zero() {
                    return Some(format!("T*b - beta at row {}: {}", i + 1, diff.display_with(names)));
                }
            }
        }
    }
    None
}

/// States with a path to `target` in the support pattern of `a`.
fn reaching(a: &[Vec<Laurent>], target: usize) -> Vec<usize> {
    let mut seen = vec![false; a.len()];
    seen[target] = true;
    let mut stack = vec![target];
    while let Some(i) = stack.pop() {
        for (j, e) in a[i].iter().enumerate() {
            if !seen[j] && !e.is_zero() {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..a.len()).filter(|&i| seen[i]).collect()
}

/// Per-compartment monomial `t_i` whose weight under every scaling equals
/// `v_i`: a product of edge parameters along an undirected path from an
/// input or output compartment (or from a component root).
fn scaling_potentials(m: &CompModel, states: &[usize]) -> Vec<Option<Laurent>> {
    let np = m.num_params();
    let n = m.n();
    let mut t: Vec<Option<Laurent>> = vec![None; n];
    let mut adj: Vec<Vec<(usize, usize, i32)>> = vec![Vec::new(); n];
    for p in m.params() {
        if let ParamKind::Edge { to, from } = p.kind {
            // walking from -> to multiplies by the parameter, back divides
            adj[from].push((to, p.ordinal, 1));
            adj[to].push((from, p.ordinal, -1));
        }
    }
    let mut roots: Vec<usize> = m.pinned();
    roots.extend(states.iter().copied());
    for root in roots {
        if t[root].is_some() {
            continue;
        }
        t[root] = Some(Laurent::one(np));
        let mut q = VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            for &(w, p, sign) in &adj[u] {
                if t[w].is_some() {
                    continue;
                }
                let mut e = vec![0; np];
                e[p] = sign;
                let next = t[u].as_ref().expect("visited") * &Laurent::monomial(e);
                t[w] = Some(next);
                q.push_back(w);
            }
        }
    }
    t
}

fn as_monomial(l: &Laurent) -> Vec<i32> {
    l.terms().next().map(|(e, _)| e.clone()).expect("monomial")
}

/// Rewrites a Laurent polynomial in the original parameters as one in the
/// invariant generators, if every term lies in the invariant lattice.
fn in_invariants(l: &Laurent, hnf: &[Vec<BigInt>], r: usize) -> Option<Laurent> {
    let mut out = Laurent::zero(r);
    for (e, c) in l.terms() {
        let v: Vec<BigInt> = e.iter().map(|&x| BigInt::from(x)).collect();
        let coords = hnf_coordinates(hnf, &v)?;
        let exps: Option<Vec<i32>> = coords.iter().map(|x| i32::try_from(x).ok()).collect();
        let mono = Laurent::monomial(exps?);
        out = &out + &(&mono * &constant(r, c.clone()));
    }
    Some(out)
}

pub fn scaling_reparam(m: &CompModel, engine: &RankEngine) -> ScalingOutcome {
    let sym = scaling_symmetries(m, engine);
    let kernel_dim = engine.kernel_dim();
    if kernel_dim == 0 {
        return ScalingOutcome::NotNeeded;
    }
    if !sym.complete {
        return ScalingOutcome::NotApplicable {
            dim: sym.dim,
            kernel_dim,
            gap: kernel_dim - sym.dim,
        };
    }
    let np = m.num_params();
    let states: Vec<usize> = graph::output_reachable_union(m).into_iter().collect();
    let pos = |c: usize| states.binary_search(&c).ok();
    let t = scaling_potentials(m, &states);
    let hnf: Vec<Vec<BigInt>> = sym
        .invariant_exponents
        .iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let r = hnf.len();
    let param_names: Vec<String> = (1..=r).map(|k| format!("k{k}")).collect();
    let definitions: Vec<Laurent> = sym
        .invariant_exponents
        .iter()
        .map(|e| Laurent::monomial(e.iter().map(|&x| x as i32).collect()))
        .collect();

    let a = compartmental_matrix(m);
    let mut failure = None;
    let mut state_matrix = vec![vec![Laurent::zero(r); states.len()]; states.len()];
    for (pi, &i) in states.iter().enumerate() {
        for (pj, &j) in states.iter().enumerate() {
            let ti = t[i].as_ref().expect("potential");
            let tj = t[j].as_ref().expect("potential");
            let inv_ti = Laurent::monomial(as_monomial(ti).iter().map(|x| -x).collect());
            let entry = &(&Laurent::from_mpoly(&a[(i, j)]) * tj) * &inv_ti;
            match in_invariants(&entry, &hnf, r) {
                Some(e) => state_matrix[pi][pj] = e,
                None if failure.is_none() => {
                    failure = Some(format!(
                        "entry ({}, {}) = {} is not scaling invariant",
                        i + 1,
                        j + 1,
                        entry.display_with(m.param_names())
                    ))
                }
                None => {}
            }
        }
    }
    let input_columns = m
        .inputs()
        .iter()
        .filter_map(|&j| {
            let pj = pos(j)?;
            let col = (0..states.len())
                .map(|k| if k == pj { Laurent::one(r) } else { Laurent::zero(r) })
                .collect();
            Some((j, col))
        })
        .collect();
    let outputs = m
        .outputs()
        .iter()
        .map(|&o| (o, pos(o).expect("output is reachable from itself")))
        .collect();
    let scaling = states
        .iter()
        .map(|&i| {
            let ti = t[i].as_ref().expect("potential");
            (i, Laurent::monomial(as_monomial(ti).iter().map(|x| -x).collect()))
        })
        .collect();
    let new_system = NewSystem {
        param_names,
        definitions,
        state_names: states.iter().map(|&i| format!("X{}", i + 1)).collect(),
        state_matrix,
        input_columns,
        outputs,
    };
    let mut rep = Reparametrization {
        kind: ReparamKind::ScalingQuotient,
        transform: Transform::Scaling(scaling),
        new_system,
        verification: Verification::Passed,
    };
    rep.verification = match failure {
        Some(residual) => Verification::Failed { residual },
        None => match verify_scaling_membership(&rep.new_system, engine, np) {
            Some(residual) => Verification::Failed { residual },
            None => verify_reparam(m, &rep),
        },
    };
    ScalingOutcome::Applied(Box::new(rep), sym)
}

/// Every coefficient's gradient lies in the span of the new parameters'
/// gradients at each sampled point.
fn verify_scaling_membership(
    sys: &NewSystem,
    engine: &RankEngine,
    np: usize,
) -> Option<String> {
    for s in engine.samples() {
        let pt = &s.point.values;
        let grads: Vec<Vec<Fp>> = sys
            .definitions
            .iter()
            .map(|d| {
                let e = as_monomial(d);
                let val = d.eval_mod(pt).expect("nonzero point");
                (0..np)
                    .map(|p| {
                        let inv = pt[p].inv().expect("nonzero point");
                        val * Fp::from_i64(e[p] as i64) * inv
                    })
                    .collect()
            })
            .collect();
        let span = RowSpace::new(&grads, np);
        for (k, row) in s.rows.iter().enumerate() {
            if !span.contains(row) {
                return Some(format!("coefficient {} is not a function of the invariants", k + 1));
            }
        }
    }
    None
}
