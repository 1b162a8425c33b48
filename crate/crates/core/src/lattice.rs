//! Exact linear algebra over Z and Q: ranks, kernels, and Hermite normal
//! form for integer lattices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Rank of an integer matrix by fraction-free elimination.
pub fn exact_rank(rows: &[Vec<BigInt>]) -> usize {
    let mut m: Vec<Vec<BigInt>> = rows.to_vec();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = BigInt::one();
    for col in 0..ncols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        for r in rank + 1..m.len() {
            for c in col + 1..ncols {
                let v = &m[r][c] * &m[rank][col] - &m[r][col] * &m[rank][c];
                m[r][c] = v / &prev;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[rank][col].clone();
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Basis of `{x in Q^ncols : M x = 0}`, each vector scaled to a primitive
/// integer vector. Free variables follow column order.
pub fn rational_kernel(rows: &[Vec<BigInt>], ncols: usize) -> Vec<Vec<BigInt>> {
    let mut m: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][col].recip();
        for c in 0..ncols {
            m[r][c] = &m[r][c] * &inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for c in 0..ncols {
                    let v = &m[r][c] * &f;
                    m[i][c] = &m[i][c] - v;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    (0..ncols)
        .filter(|c| !pivots.contains(c))
        .map(|f| {
            let mut v = vec![BigRational::zero(); ncols];
            v[f] = BigRational::one();
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][f].clone();
            }
            primitive(&v)
        })
        .collect()
}

fn primitive(v: &[BigRational]) -> Vec<BigInt> {
    let lcm = v
        .iter()
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let ints: Vec<BigInt> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|x| x / &g).collect()
}

/// Lattice basis of `{x in Z^ncols : M x = 0}`.
///
/// Row-reduces `[M^T | I]` with unimodular integer row operations; rows
/// whose `M^T` part vanishes carry a basis of the kernel lattice in their
/// identity part.
pub fn integer_kernel(rows: &[Vec<BigInt>], ncols: usize) -> Vec<Vec<BigInt>> {
    let r = rows.len();
    let mut aug: Vec<Vec<BigInt>> = (0..ncols)
        .map(|c| {
            let mut row: Vec<BigInt> = rows.iter().map(|m| m[c].clone()).collect();
            row.extend((0..ncols).map(|k| if k == c { BigInt::one() } else { BigInt::zero() }));
            row
        })
        .collect();
    let pivot_rows = echelon(&mut aug, r);
    aug.into_iter()
        .skip(pivot_rows)
        .map(|row| row[r..].to_vec())
        .collect()
}

/// Integer row echelon on the first `width` columns using extended-gcd row
/// operations. Returns the number of pivot rows; pivots are positive.
fn echelon(m: &mut [Vec<BigInt>], width: usize) -> usize {
    let mut r = 0;
    for col in 0..width {
        if r == m.len() {
            break;
        }
        loop {
            // smallest nonzero magnitude becomes the pivot
            let Some(p) = (r..m.len())
                .filter(|&i| !m[i][col].is_zero())
                .min_by(|&a, &b| m[a][col].abs().cmp(&m[b][col].abs()))
            else {
                break;
            };
            m.swap(r, p);
            let mut done = true;
            for i in r + 1..m.len() {
                if m[i][col].is_zero() {
                    continue;
                }
                let q = m[i][col].div_floor(&m[r][col]);
                let (head, tail) = m.split_at_mut(i);
                let pivot_row = &head[r];
                for (x, y) in tail[0].iter_mut().zip(pivot_row) {
                    *x -= &q * y;
                }
                if !tail[0][col].is_zero() {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if m[r][col].is_zero() {
            continue;
        }
        if m[r][col].is_negative() {
            for x in m[r].iter_mut() {
                *x = -&*x;
            }
        }
        r += 1;
    }
    r
}

/// Row-style Hermite normal form of the lattice spanned by `basis`. Zero rows
/// are dropped; the result is canonical for the lattice.
pub fn hermite_normal_form(basis: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    let Some(width) = basis.first().map(Vec::len) else {
        return Vec::new();
    };
    let mut m = basis.to_vec();
    let rank = echelon(&mut m, width);
    m.truncate(rank);
    // reduce entries above each pivot into [0, pivot)
    for i in 0..m.len() {
        let pc = m[i].iter().position(|x| !x.is_zero()).expect("pivot row");
        for k in 0..i {
            let q = m[k][pc].div_floor(&m[i][pc]);
            if q.is_zero() {
                continue;
            }
            let (head, tail) = m.split_at_mut(i);
            for (x, y) in head[k].iter_mut().zip(&tail[0]) {
                *x -= &q * y;
            }
        }
    }
    m
}

/// Integer coordinates of `v` in a Hermite-normal-form basis, if `v` lies in
/// the lattice.
pub fn hnf_coordinates(hnf: &[Vec<BigInt>], v: &[BigInt]) -> Option<Vec<BigInt>> {
    let mut rest = v.to_vec();
    let mut coords = Vec::with_capacity(hnf.len());
    for row in hnf {
        let pc = row.iter().position(|x| !x.is_zero())?;
        let (q, r) = rest[pc].div_rem(&row[pc]);
        if !r.is_zero() {
            return None;
        }
        for (x, y) in rest.iter_mut().zip(row) {
            *x -= &q * y;
        }
        coords.push(q);
    }
    rest.iter().all(Zero::is_zero).then_some(coords)
}
