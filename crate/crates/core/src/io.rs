//! Input-output equations and the coefficient map.
//!
//! For an output `i` let `H` be its output-reachable set (compartments with a
//! directed path to `i`) and `A_H` the compartmental matrix restricted to
//! `H`. Nothing outside `H` flows into `H`, so `x_H` evolves on its own and
//!
//! ```text
//! det(D I - A_H) y_i = sum_{j in In ∩ H} (-1)^{i+j} det((D I - A_H) without row j, column i) u_j
//! ```
//!
//! with positions `i`, `j` taken inside `H`. Compartments outside `H` cannot
//! influence `y_i` and their parameters never enter the equation.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{compartmental_matrix, graph, CompModel, Edge, LeakConvention};
use crate::poly::{char_poly, minor_det, MPoly, OpPoly, PolyMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CoeffSource {
    Denominator,
    Numerator { input: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffEntry {
    pub poly: MPoly,
    /// 0-based output compartment.
    pub output: usize,
    pub source: CoeffSource,
    /// Power of D this coefficient multiplies.
    pub power: usize,
}

/// Coefficients of all io-equations, in the order: outputs ascending,
/// denominator before numerators, inputs ascending, D-power descending. The
/// monic leading coefficient of each denominator is left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientMap {
    entries: Vec<CoeffEntry>,
    num_params: usize,
}

impl CoefficientMap {
    pub fn new(entries: Vec<CoeffEntry>, num_params: usize) -> Self {
        CoefficientMap {
            entries,
            num_params,
        }
    }

    pub fn entries(&self) -> &[CoeffEntry] {
        &self.entries
    }

    pub fn polys(&self) -> Vec<&MPoly> {
        self.entries.iter().map(|e| &e.poly).collect()
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest total degree among the entries.
    pub fn max_degree(&self) -> u32 {
        self.entries
            .iter()
            .map(|e| e.poly.total_degree())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IoEquation {
    pub output: usize,
    /// Output-reachable compartments the equation is built on.
    pub support: Vec<usize>,
    /// Monic, degree `support.len()`.
    pub denominator: OpPoly,
    /// `(input, numerator)` for inputs inside the support.
    pub numerators: Vec<(usize, OpPoly)>,
}

/// Memoized determinants of `D I - A_H` for one graph and leak set.
///
/// Models that differ only in inputs and outputs share every determinant, so
/// enumerations keep one cache per graph and leak set.
#[derive(Debug, Default)]
pub struct IoCache {
    key: Option<CacheKey>,
    systems: HashMap<Vec<usize>, Restricted>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CacheKey {
    n: usize,
    edges: Vec<Edge>,
    leaks: Vec<usize>,
    convention: LeakConvention,
}

#[derive(Debug)]
struct Restricted {
    sub: PolyMatrix,
    denominator: OpPoly,
    minors: HashMap<(usize, usize), OpPoly>,
}

impl IoCache {
    pub fn new() -> Self {
        IoCache::default()
    }

    fn bind(&mut self, m: &CompModel) {
        let key = CacheKey {
            n: m.n(),
            edges: m.edges().to_vec(),
            leaks: m.leaks().to_vec(),
            convention: m.convention(),
        };
        if self.key.as_ref() != Some(&key) {
            self.key = Some(key);
            self.systems.clear();
        }
    }
}

pub fn io_equations(m: &CompModel) -> Vec<IoEquation> {
    io_equations_cached(m, &mut IoCache::new())
}

pub fn io_equations_cached(m: &CompModel, cache: &mut IoCache) -> Vec<IoEquation> {
    cache.bind(m);
    let np = m.num_params();
    let pred = m.predecessors();
    let mut a = None;
    m.outputs()
        .iter()
        .map(|&out| {
            let support: Vec<usize> = graph::reach(&pred, &[out]).into_iter().collect();
            let sys = cache.systems.entry(support.clone()).or_insert_with(|| {
                let a = a.get_or_insert_with(|| compartmental_matrix(m));
                let sub = a.select(&support, &support);
                let mut cp = char_poly(&sub).expect("square");
                cp.reverse();
                Restricted {
                    denominator: OpPoly::new(cp, np),
                    sub,
                    minors: HashMap::new(),
                }
            });
            let pos_out = support.binary_search(&out).expect("output in support");
            let numerators = m
                .inputs()
                .iter()
                .filter_map(|&inp| {
                    let pos_in = support.binary_search(&inp).ok()?;
                    let sub = &sys.sub;
                    let minor = sys.minors.entry((pos_in, pos_out)).or_insert_with(|| {
                        let minor = minor_det(sub, pos_in, pos_out).expect("indices in range");
                        if (pos_in + pos_out) % 2 == 1 {
                            OpPoly::new(minor.coeffs().iter().map(|c| -c).collect(), np)
                        } else {
                            minor
                        }
                    });
                    Some((inp, minor.clone()))
                })
                .collect();
            IoEquation {
                output: out,
                support,
                denominator: sys.denominator.clone(),
                numerators,
            }
        })
        .collect()
}

/// Flattens io-equations into a coefficient map. Every numerator contributes
/// one slot per power below the denominator degree, zeros included, so that
/// provenance is fixed by the model structure alone.
pub fn coefficient_map_of(eqs: &[IoEquation], num_params: usize) -> CoefficientMap {
    let mut entries = Vec::new();
    for eq in eqs {
        let deg = eq.denominator.degree();
        for power in (0..deg).rev() {
            entries.push(CoeffEntry {
                poly: eq.denominator.coeffs()[power].clone(),
                output: eq.output,
                source: CoeffSource::Denominator,
                power,
            });
        }
        for (input, num) in &eq.numerators {
            for power in (0..deg).rev() {
                entries.push(CoeffEntry {
                    poly: num
                        .coeff(power)
                        .cloned()
                        .unwrap_or_else(|| MPoly::zero(num_params)),
                    output: eq.output,
                    source: CoeffSource::Numerator { input: *input },
                    power,
                });
            }
        }
    }
    CoefficientMap::new(entries, num_params)
}

pub fn io_coefficient_map(m: &CompModel) -> CoefficientMap {
    coefficient_map_of(&io_equations(m), m.num_params())
}

pub fn io_coefficient_map_cached(m: &CompModel, cache: &mut IoCache) -> CoefficientMap {
    coefficient_map_of(&io_equations_cached(m, cache), m.num_params())
}

/// Text rendering of one io-equation with parameter names.
pub struct EquationDisplay<'a> {
    pub eq: &'a IoEquation,
    pub names: &'a [String],
}

impl fmt::Display for EquationDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] y{} = ",
            self.eq.denominator.display_with(self.names),
            self.eq.output + 1
        )?;
        if self.eq.numerators.is_empty() {
            return write!(f, "0");
        }
        for (k, (inp, num)) in self.eq.numerators.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "[{}] u{}", num.display_with(self.names), inp + 1)?;
        }
        Ok(())
    }
}
