use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::field::{fp_from_signed, Fp};

use super::PolyError;

/// Exponent vector. Ordered lexicographically with variable 0 most significant,
/// which is the monomial order used for exact division.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Monomial(Box<[u16]>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars].into_boxed_slice())
    }

    pub fn from_exponents(exps: Vec<u16>) -> Self {
        Monomial(exps.into_boxed_slice())
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Monomial(e.into_boxed_slice())
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    fn divides(&self, other: &Monomial) -> bool {
        self.0.iter().zip(other.0.iter()).all(|(a, b)| a <= b)
    }

    fn div(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }
}

/// Sparse multivariate polynomial with arbitrary-precision integer coefficients.
///
/// Zero coefficients are never stored, so structural equality is polynomial
/// equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MPoly {
    nvars: usize,
    terms: BTreeMap<Monomial, BigInt>,
}

impl MPoly {
    pub fn zero(nvars: usize) -> Self {
        MPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, BigInt::one())
    }

    pub fn constant(nvars: usize, c: impl Into<BigInt>) -> Self {
        let c = c.into();
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(nvars), c);
        }
        p
    }

    pub fn var(nvars: usize, var: usize) -> Self {
        assert!(var < nvars, "variable {var} out of range for {nvars} variables");
        let mut p = Self::zero(nvars);
        p.terms.insert(Monomial::unit(nvars, var), BigInt::one());
        p
    }

    /// Builds a polynomial from (exponent vector, coefficient) pairs, summing
    /// duplicates and dropping zeros.
    pub fn from_terms<I, C>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Vec<u16>, C)>,
        C: Into<BigInt>,
    {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent vector length");
            p.add_term(Monomial::from_exponents(e), c.into());
        }
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.constant_value().is_some_and(|c| c.is_one())
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigInt)> {
        self.terms.iter()
    }

    /// Some(c) when the polynomial has no variable-dependent terms.
    pub fn constant_value(&self) -> Option<BigInt> {
        match self.terms.len() {
            0 => Some(BigInt::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                (m.degree() == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant_value().is_some()
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn degree_in(&self, var: usize) -> u16 {
        self.terms.keys().map(|m| m.0[var]).max().unwrap_or(0)
    }

    /// Variables that occur in at least one term.
    pub fn support(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&v| self.terms.keys().any(|m| m.0[v] > 0))
            .collect()
    }

    fn check(&self, other: &MPoly) -> Result<(), PolyError> {
        if self.nvars == other.nvars {
            Ok(())
        } else {
            Err(PolyError::VariableCountMismatch {
                left: self.nvars,
                right: other.nvars,
            })
        }
    }

    pub fn checked_add(&self, other: &MPoly) -> Result<MPoly, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &MPoly) -> Result<MPoly, PolyError> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn checked_mul(&self, other: &MPoly) -> Result<MPoly, PolyError> {
        self.check(other)?;
        let mut out = MPoly::zero(self.nvars);
        if self.is_zero() || other.is_zero() {
            return Ok(out);
        }
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, k: &BigInt) -> MPoly {
        if k.is_zero() {
            return MPoly::zero(self.nvars);
        }
        MPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * k)).collect(),
        }
    }

    pub fn pow(&self, e: u32) -> MPoly {
        let mut acc = MPoly::one(self.nvars);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    /// Leading term under lexicographic order.
    pub fn leading_term(&self) -> Option<(&Monomial, &BigInt)> {
        self.terms.iter().next_back()
    }

    /// Exact quotient `self / divisor`, or `None` when the division leaves a
    /// remainder (or the divisor is zero).
    pub fn div_exact(&self, divisor: &MPoly) -> Option<MPoly> {
        assert_eq!(self.nvars, divisor.nvars, "variable count mismatch");
        let (lm, lc) = divisor.leading_term()?;
        let mut rem = self.clone();
        let mut quot = MPoly::zero(self.nvars);
        while let Some((rm, rc)) = rem.leading_term() {
            if !lm.divides(rm) {
                return None;
            }
            let (q, r) = rc.div_rem(lc);
            if !r.is_zero() {
                return None;
            }
            let tm = rm.div(lm);
            for (dm, dc) in &divisor.terms {
                rem.add_term(dm.mul(&tm), -(dc * &q));
            }
            quot.add_term(tm, q);
        }
        Some(quot)
    }

    pub fn derivative(&self, var: usize) -> MPoly {
        let mut out = MPoly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut dm = m.clone();
            dm.0[var] -= 1;
            out.add_term(dm, c * BigInt::from(e));
        }
        out
    }

    /// Evaluation over the prime field.
    pub fn eval_mod(&self, point: &[Fp]) -> Fp {
        assert_eq!(point.len(), self.nvars, "point dimension");
        let mut acc = Fp::ZERO;
        for (m, c) in &self.terms {
            let mut t = fp_from_signed(c);
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= point[v].pow(e as u64);
                }
            }
            acc += t;
        }
        acc
    }

    /// Forward-mode evaluation: value and full gradient at `point`, carried as
    /// dual numbers through every multiplication.
    pub fn eval_dual(&self, point: &[Fp]) -> (Fp, Vec<Fp>) {
        assert_eq!(point.len(), self.nvars, "point dimension");
        let n = self.nvars;
        let mut val = Fp::ZERO;
        let mut grad = vec![Fp::ZERO; n];
        let mut tv;
        let mut tg = vec![Fp::ZERO; n];
        for (m, c) in &self.terms {
            tv = fp_from_signed(c);
            tg.iter_mut().for_each(|g| *g = Fp::ZERO);
            for (v, &e) in m.0.iter().enumerate() {
                for _ in 0..e {
                    // (tv, tg) * (x_v, unit_v)
                    for g in tg.iter_mut() {
                        *g *= point[v];
                    }
                    tg[v] += tv;
                    tv *= point[v];
                }
            }
            val += tv;
            for (g, t) in grad.iter_mut().zip(&tg) {
                *g += *t;
            }
        }
        (val, grad)
    }

    /// Exact integer evaluation.
    pub fn eval_exact(&self, point: &[BigInt]) -> BigInt {
        assert_eq!(point.len(), self.nvars, "point dimension");
        let mut acc = BigInt::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, &e) in m.0.iter().enumerate() {
                if e > 0 {
                    t *= num_traits::pow(point[v].clone(), e as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Composition: replaces variable `i` by `values[i]`. The result lives in
    /// the ring of the substituted values.
    pub fn substitute(&self, values: &[MPoly]) -> MPoly {
        assert_eq!(values.len(), self.nvars, "substitution arity");
        let target = values.first().map_or(0, MPoly::nvars);
        let mut out = MPoly::zero(target);
        let mut powers: Vec<Vec<MPoly>> = vec![vec![MPoly::one(target)]; self.nvars];
        for (m, c) in &self.terms {
            let mut t = MPoly::constant(target, c.clone());
            for (v, &e) in m.0.iter().enumerate() {
                let e = e as usize;
                if e == 0 {
                    continue;
                }
                while powers[v].len() <= e {
                    let next = powers[v].last().unwrap() * &values[v];
                    powers[v].push(next);
                }
                t = &t * &powers[v][e];
            }
            out = &out + &t;
        }
        out
    }

    /// Re-embeds into a ring with `nvars` variables using `map[i]` as the new
    /// index of variable `i`.
    pub fn remap(&self, nvars: usize, map: &[usize]) -> MPoly {
        assert_eq!(map.len(), self.nvars, "remap arity");
        let mut out = MPoly::zero(nvars);
        for (m, c) in &self.terms {
            let mut e = vec![0u16; nvars];
            for (v, &x) in m.0.iter().enumerate() {
                e[map[v]] += x;
            }
            out.add_term(Monomial::from_exponents(e), c.clone());
        }
        out
    }

    /// Appends `extra` variables at the end of the variable list.
    pub fn extend(&self, extra: usize) -> MPoly {
        let map: Vec<usize> = (0..self.nvars).collect();
        self.remap(self.nvars + extra, &map)
    }

    /// Splits by powers of the last variable: entry `k` is the coefficient of
    /// `last^k`, a polynomial in the remaining variables.
    pub fn split_last(&self) -> Vec<MPoly> {
        assert!(self.nvars > 0, "no variable to split on");
        let inner = self.nvars - 1;
        let deg = self.degree_in(inner) as usize;
        let mut out = vec![MPoly::zero(inner); deg + 1];
        if self.is_zero() {
            return vec![MPoly::zero(inner)];
        }
        for (m, c) in &self.terms {
            let k = m.0[inner] as usize;
            out[k].add_term(Monomial(m.0[..inner].into()), c.clone());
        }
        out
    }

    /// Gcd of the coefficients (always nonnegative).
    pub fn content(&self) -> BigInt {
        self.terms
            .values()
            .fold(BigInt::zero(), |g, c| g.gcd(c))
    }

    /// Formats with the given variable names. Terms are printed by descending
    /// total degree, then descending lexicographic order.
    pub fn display_with<'a>(&'a self, names: &'a [String]) -> PolyDisplay<'a> {
        PolyDisplay { poly: self, names }
    }
}

impl fmt::Debug for MPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

pub struct PolyDisplay<'a> {
    poly: &'a MPoly,
    names: &'a [String],
}

impl fmt::Display for PolyDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        let mut terms: Vec<_> = self.poly.terms.iter().collect();
        terms.sort_by(|a, b| b.0.degree().cmp(&a.0.degree()).then_with(|| b.0.cmp(a.0)));
        for (i, (m, c)) in terms.into_iter().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let factors: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| {
                    if e == 1 {
                        self.names[v].clone()
                    } else {
                        format!("{}^{}", self.names[v], e)
                    }
                })
                .collect();
            if factors.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{abs}*{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $checked:ident) => {
        impl $tr<&MPoly> for &MPoly {
            type Output = MPoly;
            fn $method(self, rhs: &MPoly) -> MPoly {
                self.$checked(rhs).expect("polynomial operands in different rings")
            }
        }
        impl $tr<MPoly> for MPoly {
            type Output = MPoly;
            fn $method(self, rhs: MPoly) -> MPoly {
                (&self).$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for &MPoly {
    type Output = MPoly;
    fn neg(self) -> MPoly {
        MPoly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }
}

impl Neg for MPoly {
    type Output = MPoly;
    fn neg(self) -> MPoly {
        -&self
    }
}
