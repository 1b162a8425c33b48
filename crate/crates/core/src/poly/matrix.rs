use std::collections::HashMap;
use std::fmt;
use std::ops::{Index, IndexMut};

use crate::field::Fp;

use super::{MPoly, PolyError};

/// Dense matrix of polynomials sharing one ring.
#[derive(Clone, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    nvars: usize,
    data: Vec<MPoly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            nvars,
            data: vec![MPoly::zero(nvars); rows * cols],
        }
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        let mut m = Self::zeros(n, n, nvars);
        for i in 0..n {
            m[(i, i)] = MPoly::one(nvars);
        }
        m
    }

    pub fn from_rows(nvars: usize, rows: Vec<Vec<MPoly>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            for p in row {
                assert_eq!(p.nvars(), nvars, "entry ring");
                data.push(p);
            }
        }
        PolyMatrix {
            rows: r,
            cols: c,
            nvars,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[MPoly] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul(&self, other: &PolyMatrix) -> PolyMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions");
        let mut out = PolyMatrix::zeros(self.rows, other.cols, self.nvars);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = MPoly::zero(self.nvars);
                for k in 0..self.cols {
                    let (a, b) = (&self[(i, k)], &other[(k, j)]);
                    if !a.is_zero() && !b.is_zero() {
                        acc = &acc + &(a * b);
                    }
                }
                out[(i, j)] = acc;
            }
        }
        out
    }

    /// Submatrix on the given (sorted) row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> PolyMatrix {
        let mut out = PolyMatrix::zeros(rows.len(), cols.len(), self.nvars);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out[(a, b)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn without(&self, drop_row: usize, drop_col: usize) -> Result<PolyMatrix, PolyError> {
        if drop_row >= self.rows || drop_col >= self.cols {
            return Err(PolyError::IndexOutOfRange {
                row: drop_row,
                col: drop_col,
                size: self.rows.max(self.cols),
            });
        }
        let rows: Vec<usize> = (0..self.rows).filter(|&r| r != drop_row).collect();
        let cols: Vec<usize> = (0..self.cols).filter(|&c| c != drop_col).collect();
        Ok(self.select(&rows, &cols))
    }

    pub fn map(&self, f: impl Fn(&MPoly) -> MPoly) -> PolyMatrix {
        let data: Vec<MPoly> = self.data.iter().map(f).collect();
        let nvars = data.first().map_or(self.nvars, MPoly::nvars);
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            nvars,
            data,
        }
    }

    pub fn eval_mod(&self, point: &[Fp]) -> Vec<Vec<Fp>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|p| p.eval_mod(point)).collect())
            .collect()
    }

    /// Determinant. Uses cofactor expansion for n <= 3 and fraction-free
    /// Bareiss elimination otherwise; both give the identical polynomial.
    pub fn det(&self) -> Result<MPoly, PolyError> {
        if !self.is_square() {
            return Err(PolyError::NonSquareMatrix {
                rows: self.rows,
                cols: self.cols,
            });
        }
        if self.rows <= 3 {
            self.det_expansion()
        } else {
            self.det_bareiss()
        }
    }

    /// Fraction-free Gaussian elimination. Every division is exact, so all
    /// intermediate entries stay polynomial (they are minors of the input).
    pub fn det_bareiss(&self) -> Result<MPoly, PolyError> {
        if !self.is_square() {
            return Err(PolyError::NonSquareMatrix {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        if n == 0 {
            return Ok(MPoly::one(self.nvars));
        }
        let mut m: Vec<Vec<MPoly>> = (0..n).map(|i| self.row(i).to_vec()).collect();
        let mut prev = MPoly::one(self.nvars);
        let mut negate = false;
        for k in 0..n - 1 {
            if m[k][k].is_zero() {
                // pick the sparsest nonzero pivot below
                let swap = (k + 1..n)
                    .filter(|&r| !m[r][k].is_zero())
                    .min_by_key(|&r| m[r][k].num_terms());
                match swap {
                    Some(r) => {
                        m.swap(k, r);
                        negate = !negate;
                    }
                    None => return Ok(MPoly::zero(self.nvars)),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &(&m[i][j] * &m[k][k]) - &(&m[i][k] * &m[k][j]);
                    m[i][j] = if prev.is_one() {
                        num
                    } else {
                        num.div_exact(&prev).expect("Bareiss division is exact")
                    };
                }
            }
            prev = m[k][k].clone();
        }
        let d = m[n - 1][n - 1].clone();
        Ok(if negate { -d } else { d })
    }

    /// Laplace expansion along rows, memoized on the set of used columns.
    pub fn det_expansion(&self) -> Result<MPoly, PolyError> {
        if !self.is_square() {
            return Err(PolyError::NonSquareMatrix {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let n = self.rows;
        assert!(n < 64, "expansion limited to fewer than 64 columns");
        let mut memo: HashMap<u64, MPoly> = HashMap::new();
        Ok(self.expand(0, 0, &mut memo))
    }

    fn expand(&self, row: usize, used: u64, memo: &mut HashMap<u64, MPoly>) -> MPoly {
        if row == self.rows {
            return MPoly::one(self.nvars);
        }
        if let Some(p) = memo.get(&used) {
            return p.clone();
        }
        let mut acc = MPoly::zero(self.nvars);
        let mut sign_pos = true;
        for c in 0..self.cols {
            if used & (1 << c) != 0 {
                continue;
            }
            let entry = &self[(row, c)];
            if !entry.is_zero() {
                let sub = self.expand(row + 1, used | (1 << c), memo);
                let t = entry * &sub;
                acc = if sign_pos { &acc + &t } else { &acc - &t };
            }
            sign_pos = !sign_pos;
        }
        memo.insert(used, acc.clone());
        acc
    }
}

impl Index<(usize, usize)> for PolyMatrix {
    type Output = MPoly;
    fn index(&self, (i, j): (usize, usize)) -> &MPoly {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for PolyMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut MPoly {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut l = f.debug_list();
        for i in 0..self.rows {
            l.entry(&self.row(i));
        }
        l.finish()
    }
}

/// Polynomial in the differential operator D with coefficients in the
/// parameter ring; `coeffs[k]` multiplies `D^k`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OpPoly {
    coeffs: Vec<MPoly>,
}

impl OpPoly {
    pub fn new(mut coeffs: Vec<MPoly>, nvars: usize) -> Self {
        while coeffs.last().is_some_and(MPoly::is_zero) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(MPoly::zero(nvars));
        }
        OpPoly { coeffs }
    }

    pub fn coeffs(&self) -> &[MPoly] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> Option<&MPoly> {
        self.coeffs.get(k)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_zero()
    }

    pub fn nvars(&self) -> usize {
        self.coeffs[0].nvars()
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> OpDisplay<'a> {
        OpDisplay { op: self, names }
    }
}

pub struct OpDisplay<'a> {
    op: &'a OpPoly,
    names: &'a [String],
}

impl fmt::Display for OpDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, c) in self.op.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let op = match k {
                0 => String::new(),
                1 => "D".to_string(),
                _ => format!("D^{k}"),
            };
            if c.is_one() && k > 0 {
                write!(f, "{op}")?;
            } else if k == 0 {
                write!(f, "({})", c.display_with(self.names))?;
            } else {
                write!(f, "({}){op}", c.display_with(self.names))?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// `D*I - A` over the ring extended by one trailing variable for D.
pub fn resolvent(a: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
    if !a.is_square() {
        return Err(PolyError::NonSquareMatrix {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let nv = a.nvars();
    let d = MPoly::var(nv + 1, nv);
    let mut m = a.map(|p| -p.extend(1));
    m.nvars = nv + 1;
    for i in 0..a.rows() {
        m[(i, i)] = &m[(i, i)] + &d;
    }
    Ok(m)
}

/// Coefficients of det(D*I - A), listed from degree n down to 0. The first
/// entry is the constant 1.
pub fn char_poly(a: &PolyMatrix) -> Result<Vec<MPoly>, PolyError> {
    let r = resolvent(a)?;
    let det = r.det()?;
    let mut parts = det.split_last();
    parts.resize(a.rows() + 1, MPoly::zero(a.nvars()));
    parts.reverse();
    Ok(parts)
}

/// Determinant of `D*I - A` with one row and one column removed, as an
/// operator polynomial.
pub fn minor_det(a: &PolyMatrix, drop_row: usize, drop_col: usize) -> Result<OpPoly, PolyError> {
    let r = resolvent(a)?;
    let sub = r.without(drop_row, drop_col)?;
    let det = sub.det()?;
    Ok(OpPoly::new(det.split_last(), a.nvars()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn sym(n: usize, nv: usize) -> PolyMatrix {
        // generic matrix with one variable per entry
        let rows = (0..n)
            .map(|i| (0..n).map(|j| MPoly::var(nv, i * n + j)).collect())
            .collect();
        PolyMatrix::from_rows(nv, rows)
    }

    #[test]
    fn bareiss_agrees_with_expansion_on_generic_matrices() {
        for n in 1..=4 {
            let m = sym(n, n * n);
            assert_eq!(m.det_bareiss().unwrap(), m.det_expansion().unwrap(), "n = {n}");
        }
    }

    #[test]
    fn generic_det_term_count_is_factorial() {
        let m = sym(4, 16);
        assert_eq!(m.det().unwrap().num_terms(), 24);
    }

    #[test]
    fn bareiss_handles_zero_pivot() {
        let nv = 2;
        let x = MPoly::var(nv, 0);
        let y = MPoly::var(nv, 1);
        let z = MPoly::zero(nv);
        let o = MPoly::one(nv);
        let m = PolyMatrix::from_rows(
            nv,
            vec![
                vec![z.clone(), x.clone(), o.clone(), z.clone()],
                vec![y.clone(), z.clone(), z.clone(), o.clone()],
                vec![o.clone(), z.clone(), x.clone(), z.clone()],
                vec![z.clone(), o.clone(), z.clone(), y.clone()],
            ],
        );
        assert_eq!(m.det_bareiss().unwrap(), m.det_expansion().unwrap());
    }

    #[test]
    fn non_square_rejected() {
        let m = PolyMatrix::zeros(2, 3, 1);
        assert!(matches!(m.det(), Err(PolyError::NonSquareMatrix { .. })));
        assert!(matches!(char_poly(&m), Err(PolyError::NonSquareMatrix { .. })));
    }

    #[test]
    fn one_by_one_char_poly_and_empty_minor() {
        let a = PolyMatrix::from_rows(1, vec![vec![-MPoly::var(1, 0)]]);
        let cp = char_poly(&a).unwrap();
        assert_eq!(cp, vec![MPoly::one(1), MPoly::var(1, 0)]);
        let minor = minor_det(&a, 0, 0).unwrap();
        assert_eq!(minor.coeffs(), &[MPoly::one(1)]);
        assert!(matches!(minor_det(&a, 1, 0), Err(PolyError::IndexOutOfRange { .. })));
    }

    #[test]
    fn char_poly_trace_coefficient() {
        let m = sym(3, 9);
        let cp = char_poly(&m).unwrap();
        let trace = &(&m[(0, 0)] + &m[(1, 1)]) + &m[(2, 2)];
        assert_eq!(cp[1], -trace);
        assert_eq!(cp[3], -m.det().unwrap());
        let _ = BigInt::from(0);
    }
}
