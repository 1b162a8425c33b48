use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::field::{fp_from_signed, Fp};

use super::{MPoly, Monomial};

/// Polynomial allowing negative exponents, with integer coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Laurent {
    nvars: usize,
    terms: BTreeMap<Vec<i32>, BigInt>,
}

impl Laurent {
    pub fn zero(nvars: usize) -> Self {
        Laurent {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        Laurent::monomial(vec![0; nvars])
    }

    pub fn monomial(exps: Vec<i32>) -> Self {
        let nvars = exps.len();
        Laurent {
            nvars,
            terms: BTreeMap::from([(exps, BigInt::one())]),
        }
    }

    pub fn var(nvars: usize, v: usize) -> Self {
        let mut e = vec![0; nvars];
        e[v] = 1;
        Laurent::monomial(e)
    }

    pub fn from_mpoly(p: &MPoly) -> Self {
        Laurent {
            nvars: p.nvars(),
            terms: p
                .terms()
                .map(|(m, c)| (m.exponents().iter().map(|&e| e as i32).collect(), c.clone()))
                .collect(),
        }
    }

    /// The polynomial itself when no exponent is negative.
    pub fn to_mpoly(&self) -> Option<MPoly> {
        let mut out = Vec::with_capacity(self.terms.len());
        for (e, c) in &self.terms {
            let exps: Option<Vec<u16>> = e.iter().map(|&x| u16::try_from(x).ok()).collect();
            out.push((exps?, c.clone()));
        }
        Some(MPoly::from_terms(self.nvars, out))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i32>, &BigInt)> {
        self.terms.iter()
    }

    fn add_term(&mut self, e: Vec<i32>, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    /// Smallest exponent of each variable across terms, capped at zero. The
    /// monomial with these negated exponents clears all denominators.
    pub fn min_exponents(&self) -> Vec<i32> {
        let mut m = vec![0; self.nvars];
        for e in self.terms.keys() {
            for (a, &b) in m.iter_mut().zip(e) {
                *a = (*a).min(b);
            }
        }
        m
    }

    /// Multiplies by the monomial with exponents `shift`.
    pub fn shift(&self, shift: &[i32]) -> Laurent {
        Laurent {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.iter().zip(shift).map(|(a, b)| a + b).collect(), c.clone()))
                .collect(),
        }
    }

    pub fn eval_mod(&self, point: &[Fp]) -> Option<Fp> {
        let mut acc = Fp::ZERO;
        for (e, c) in &self.terms {
            let mut t = fp_from_signed(c);
            for (&x, &k) in point.iter().zip(e) {
                let base = if k < 0 { x.inv()? } else { x };
                t *= base.pow(k.unsigned_abs() as u64);
            }
            acc += t;
        }
        Some(acc)
    }

    /// Replaces variable `i` by the Laurent monomial `images[i]`.
    pub fn substitute_monomials(&self, images: &[Vec<i32>], nvars: usize) -> Laurent {
        let mut out = Laurent::zero(nvars);
        for (e, c) in &self.terms {
            let mut t = vec![0; nvars];
            for (k, &x) in e.iter().enumerate() {
                for (acc, &y) in t.iter_mut().zip(&images[k]) {
                    *acc += x * y;
                }
            }
            out.add_term(t, c.clone());
        }
        out
    }

    /// Replaces variable `i` by `images[i]`. Negative powers are allowed only
    /// for images that are single monomials with coefficient one.
    pub fn substitute(&self, images: &[Laurent], nvars: usize) -> Option<Laurent> {
        let mut out = Laurent::zero(nvars);
        for (e, c) in &self.terms {
            let mut t = Laurent::zero(nvars);
            t.add_term(vec![0; nvars], c.clone());
            for (k, &x) in e.iter().enumerate() {
                let base = if x < 0 {
                    images[k].inverse_monomial()?
                } else {
                    images[k].clone()
                };
                for _ in 0..x.unsigned_abs() {
                    t = &t * &base;
                }
            }
            out = &out + &t;
        }
        Some(out)
    }

    fn inverse_monomial(&self) -> Option<Laurent> {
        match self.terms.iter().next() {
            Some((e, c)) if self.terms.len() == 1 && c.is_one() => {
                Some(Laurent::monomial(e.iter().map(|x| -x).collect()))
            }
            _ => None,
        }
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> LaurentDisplay<'a> {
        LaurentDisplay { poly: self, names }
    }
}

impl fmt::Debug for Laurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{i}")).collect();
        write!(f, "{}", self.display_with(&names))
    }
}

pub struct LaurentDisplay<'a> {
    poly: &'a Laurent,
    names: &'a [String],
}

impl fmt::Display for LaurentDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        let mut terms: Vec<(&Vec<i32>, &BigInt)> = self.poly.terms.iter().collect();
        terms.sort_by(|a, b| {
            let da: i32 = a.0.iter().sum();
            let db: i32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (k, (e, c)) in terms.into_iter().enumerate() {
            let factors: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0)
                .map(|(i, &x)| {
                    if x == 1 {
                        self.names[i].clone()
                    } else {
                        format!("{}^{}", self.names[i], x)
                    }
                })
                .collect();
            let mag = c.abs();
            if k == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            match (factors.is_empty(), mag.is_one()) {
                (true, _) => write!(f, "{mag}")?,
                (false, true) => write!(f, "{}", factors.join("*"))?,
                (false, false) => write!(f, "{mag}*{}", factors.join("*"))?,
            }
        }
        Ok(())
    }
}

impl Add for &Laurent {
    type Output = Laurent;
    fn add(self, o: &Laurent) -> Laurent {
        assert_eq!(self.nvars, o.nvars, "variable count");
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Neg for &Laurent {
    type Output = Laurent;
    fn neg(self) -> Laurent {
        Laurent {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

impl Sub for &Laurent {
    type Output = Laurent;
    fn sub(self, o: &Laurent) -> Laurent {
        self + &-o
    }
}

impl Mul for &Laurent {
    type Output = Laurent;
    fn mul(self, o: &Laurent) -> Laurent {
        assert_eq!(self.nvars, o.nvars, "variable count");
        let mut out = Laurent::zero(self.nvars);
        for (a, x) in &self.terms {
            for (b, y) in &o.terms {
                out.add_term(a.iter().zip(b).map(|(p, q)| p + q).collect(), x * y);
            }
        }
        out
    }
}

impl From<&Monomial> for Laurent {
    fn from(m: &Monomial) -> Self {
        Laurent::monomial(m.exponents().iter().map(|&e| e as i32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cancels() {
        let x = Laurent::var(2, 0);
        let xi = Laurent::monomial(vec![-1, 0]);
        assert_eq!(&x * &xi, Laurent::one(2));
        assert!((&(&x * &xi) - &Laurent::one(2)).is_zero());
    }

    #[test]
    fn roundtrip_and_display() {
        let p = MPoly::from_terms(2, [(vec![1, 1], 2), (vec![0, 0], -1)]);
        let l = Laurent::from_mpoly(&p);
        assert_eq!(l.to_mpoly(), Some(p));
        let names = vec!["a".to_string(), "b".to_string()];
        let q = &l * &Laurent::monomial(vec![0, -2]);
        assert_eq!(q.display_with(&names).to_string(), "2*a*b^-1 - b^-2");
        assert_eq!(q.to_mpoly(), None);
        assert_eq!(q.min_exponents(), vec![0, -2]);
    }

    #[test]
    fn modular_evaluation_uses_inverses() {
        let q = Laurent::monomial(vec![1, -1]);
        let v = q.eval_mod(&[Fp::new(6), Fp::new(3)]).unwrap();
        assert_eq!(v, Fp::new(2));
        assert_eq!(q.eval_mod(&[Fp::new(6), Fp::ZERO]), None);
    }

    #[test]
    fn monomial_substitution() {
        // x -> u*v, y -> v^-1 : x*y -> u
        let p = Laurent::monomial(vec![1, 1]);
        let s = p.substitute_monomials(&[vec![1, 1], vec![0, -1]], 2);
        assert_eq!(s, Laurent::var(2, 0));
    }
}
