//! Arithmetic in the prime field of order 2^61 - 1 and the dense linear
//! algebra the rank engine runs on top of it.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The Mersenne prime 2^61 - 1.
pub const PRIME: u64 = (1u64 << 61) - 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fp(u64);

#[inline]
fn reduce(x: u128) -> u64 {
    let mut r = ((x as u64) & PRIME) + ((x >> 61) as u64);
    while r >= PRIME {
        r -= PRIME;
    }
    r
}

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    pub fn new(v: u64) -> Self {
        Fp(reduce(v as u128))
    }

    pub fn from_i64(v: i64) -> Self {
        if v >= 0 {
            Fp::new(v as u64)
        } else {
            -Fp::new(v.unsigned_abs())
        }
    }

    pub fn from_bigint(v: &BigInt) -> Self {
        let r = v.mod_floor(&BigInt::from(PRIME));
        Fp(r.to_u64().expect("residue fits in u64"))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn pow(self, mut e: u64) -> Self {
        let mut base = self;
        let mut acc = Fp::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(self) -> Option<Self> {
        if self.is_zero() {
            None
        } else {
            Some(self.pow(PRIME - 2))
        }
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Fp {
    type Output = Fp;
    #[inline]
    fn add(self, rhs: Fp) -> Fp {
        let s = self.0 + rhs.0;
        Fp(if s >= PRIME { s - PRIME } else { s })
    }
}

impl Sub for Fp {
    type Output = Fp;
    #[inline]
    fn sub(self, rhs: Fp) -> Fp {
        if self.0 >= rhs.0 {
            Fp(self.0 - rhs.0)
        } else {
            Fp(self.0 + PRIME - rhs.0)
        }
    }
}

impl Mul for Fp {
    type Output = Fp;
    #[inline]
    fn mul(self, rhs: Fp) -> Fp {
        Fp(reduce(self.0 as u128 * rhs.0 as u128))
    }
}

impl Neg for Fp {
    type Output = Fp;
    #[inline]
    fn neg(self) -> Fp {
        if self.0 == 0 {
            self
        } else {
            Fp(PRIME - self.0)
        }
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fp {
    fn mul_assign(&mut self, rhs: Fp) {
        *self = *self * rhs;
    }
}

/// A random evaluation point standing in for "generic" parameter values.
///
/// Every coordinate is nonzero so that monomials never vanish spuriously.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub prime: u64,
    pub seed: u64,
    #[serde(with = "fp_vec")]
    pub values: Vec<Fp>,
}

impl FieldPoint {
    pub fn sample(nvars: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..nvars).map(|_| Fp(rng.gen_range(1..PRIME))).collect();
        FieldPoint {
            prime: PRIME,
            seed,
            values,
        }
    }

    pub fn from_values(values: Vec<Fp>) -> Self {
        FieldPoint {
            prime: PRIME,
            seed: 0,
            values,
        }
    }
}

mod fp_vec {
    use super::Fp;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Fp], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| x.0).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Fp>, D::Error> {
        Ok(Vec::<u64>::deserialize(d)?.into_iter().map(Fp::new).collect())
    }
}

/// Per-trial seed derived from the user seed; trials never share a stream.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed
        .wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rank of a dense matrix over the field. The input is consumed.
pub fn rank(mut rows: Vec<Vec<Fp>>) -> usize {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = rows[rank][col].inv().expect("nonzero pivot");
        for r in (rank + 1)..rows.len() {
            let factor = rows[r][col] * inv;
            if factor.is_zero() {
                continue;
            }
            for c in col..ncols {
                let v = rows[rank][c];
                rows[r][c] -= factor * v;
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Determinant of a square matrix over the field.
pub fn det(mut m: Vec<Vec<Fp>>) -> Fp {
    let n = m.len();
    let mut acc = Fp::ONE;
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !m[r][col].is_zero()) else {
            return Fp::ZERO;
        };
        if pivot != col {
            m.swap(col, pivot);
            acc = -acc;
        }
        acc *= m[col][col];
        let inv = m[col][col].inv().expect("nonzero pivot");
        for r in (col + 1)..n {
            let factor = m[r][col] * inv;
            if factor.is_zero() {
                continue;
            }
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= factor * v;
            }
        }
    }
    acc
}

/// Basis of the right kernel `{x : M x = 0}` over the field.
pub fn kernel(rows: &[Vec<Fp>], ncols: usize) -> Vec<Vec<Fp>> {
    let mut m: Vec<Vec<Fp>> = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = m[r][col].inv().expect("nonzero pivot");
        for c in 0..ncols {
            m[r][c] *= inv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let f = m[i][col];
                for c in 0..ncols {
                    let v = m[r][c];
                    m[i][c] -= f * v;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut v = vec![Fp::ZERO; ncols];
            v[f] = Fp::ONE;
            for (row, &pc) in pivots.iter().enumerate() {
                v[pc] = -m[row][f];
            }
            v
        })
        .collect()
}

/// Reduced row echelon basis of a row space, for repeated membership tests.
#[derive(Clone, Debug)]
pub struct RowSpace {
    basis: Vec<Vec<Fp>>,
    pivots: Vec<usize>,
    ncols: usize,
}

impl RowSpace {
    pub fn new(rows: &[Vec<Fp>], ncols: usize) -> Self {
        let mut space = RowSpace {
            basis: Vec::new(),
            pivots: Vec::new(),
            ncols,
        };
        for r in rows {
            space.insert(r);
        }
        space
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    fn reduce(&self, v: &[Fp]) -> Vec<Fp> {
        let mut v = v.to_vec();
        for (row, &pc) in self.basis.iter().zip(&self.pivots) {
            let f = v[pc];
            if f.is_zero() {
                continue;
            }
            for c in 0..self.ncols {
                v[c] -= f * row[c];
            }
        }
        v
    }

    pub fn contains(&self, v: &[Fp]) -> bool {
        self.reduce(v).iter().all(|x| x.is_zero())
    }

    /// Adds `v` to the span; returns whether the rank grew.
    pub fn insert(&mut self, v: &[Fp]) -> bool {
        let mut v = self.reduce(v);
        let Some(pc) = v.iter().position(|x| !x.is_zero()) else {
            return false;
        };
        let inv = v[pc].inv().expect("nonzero pivot");
        for x in v.iter_mut() {
            *x *= inv;
        }
        for (row, _) in self.basis.iter_mut().zip(&self.pivots) {
            let f = row[pc];
            if f.is_zero() {
                continue;
            }
            for c in 0..self.ncols {
                row[c] -= f * v[c];
            }
        }
        self.basis.push(v);
        self.pivots.push(pc);
        true
    }
}

/// Reduces a signed integer into the field, keeping small magnitudes cheap.
pub fn fp_from_signed(v: &BigInt) -> Fp {
    match v.to_i64() {
        Some(x) => Fp::from_i64(x),
        None => {
            if v.is_negative() {
                -Fp::from_bigint(&-v)
            } else {
                Fp::from_bigint(v)
            }
        }
    }
}
