//! Small dense matrices over `BigRational` with exact elimination.
//!
//! The Gramian blocks are Hilbert-like: their entries are reciprocals of
//! products of small integers and the blocks become hopelessly conditioned in
//! `f64` well before `n = 12`. Everything that needs their inverse or minors
//! goes through here.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

/// `num / den` as an exact rational.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl RationalMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> BigRational) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { BigRational::one() } else { BigRational::zero() })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.cols + c]
    }

    fn get_mut(&mut self, r: usize, c: usize) -> &mut BigRational {
        &mut self.data[r * self.cols + c]
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| {
            self.get(r, c).to_f64().unwrap_or(f64::NAN)
        })
    }

    pub fn mul(&self, other: &RationalMatrix) -> RationalMatrix {
        assert_eq!(self.cols, other.rows);
        RationalMatrix::from_fn(self.rows, other.cols, |r, c| {
            (0..self.cols).fold(BigRational::zero(), |acc, k| acc + self.get(r, k) * other.get(k, c))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| (0..r).all(|c| self.get(r, c) == self.get(c, r)))
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> RationalMatrix {
        RationalMatrix::from_fn(rows.len(), cols.len(), |r, c| self.get(rows[r], cols[c]).clone())
    }

    /// Exact inverse by Gauss–Jordan elimination.
    pub fn inverse(&self) -> Result<RationalMatrix> {
        if self.rows != self.cols {
            return Err(Error::InvalidInput(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = RationalMatrix::identity(n);
        for k in 0..n {
            let pivot_row = (k..n)
                .find(|&r| !a.get(r, k).is_zero())
                .ok_or_else(|| Error::Singular(format!("exact elimination: zero pivot column {k}")))?;
            if pivot_row != k {
                a.swap_rows(k, pivot_row);
                inv.swap_rows(k, pivot_row);
            }
            let p = a.get(k, k).clone();
            for c in 0..n {
                *a.get_mut(k, c) /= &p;
                *inv.get_mut(k, c) /= &p;
            }
            for r in 0..n {
                if r == k || a.get(r, k).is_zero() {
                    continue;
                }
                let factor = a.get(r, k).clone();
                for c in 0..n {
                    let da = a.get(k, c) * &factor;
                    *a.get_mut(r, c) -= da;
                    let di = inv.get(k, c) * &factor;
                    *inv.get_mut(r, c) -= di;
                }
            }
        }
        Ok(inv)
    }

    /// Exact determinant (fraction-free Bareiss elimination on the integer-scaled matrix).
    pub fn determinant(&self) -> BigRational {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        if n == 0 {
            return BigRational::one();
        }
        // Clear denominators row by row so Bareiss runs over the integers.
        let mut scale = BigRational::one();
        let mut m: Vec<Vec<BigInt>> = Vec::with_capacity(n);
        for r in 0..n {
            let row_lcm = (0..n).fold(BigInt::one(), |acc, c| lcm(&acc, self.get(r, c).denom()));
            scale *= BigRational::from_integer(row_lcm.clone());
            m.push(
                (0..n)
                    .map(|c| {
                        let v = self.get(r, c);
                        v.numer() * (&row_lcm / v.denom())
                    })
                    .collect(),
            );
        }
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[k][k].is_zero() {
                match (k + 1..n).find(|&r| !m[r][k].is_zero()) {
                    Some(r) => {
                        m.swap(k, r);
                        sign = -sign;
                    }
                    None => return BigRational::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
                    m[i][j] = v;
                }
            }
            prev = m[k][k].clone();
        }
        BigRational::new(sign * &m[n - 1][n - 1], BigInt::one()) / scale
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Every minor `det(M[rows, cols])` with `|rows| = |cols| ≥ 1`, in
    /// lexicographic order of (order, rows, cols).
    pub fn minors(&self) -> Vec<Minor> {
        let mut out = Vec::new();
        for order in 1..=self.rows.min(self.cols) {
            let row_sets = combinations(self.rows, order);
            let col_sets = combinations(self.cols, order);
            for rows in &row_sets {
                for cols in &col_sets {
                    out.push(Minor {
                        rows: rows.clone(),
                        cols: cols.clone(),
                        value: self.submatrix(rows, cols).determinant(),
                    });
                }
            }
        }
        out
    }

    pub fn all_entries_positive(&self) -> bool {
        self.data.iter().all(|v| v.is_positive())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minor {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub value: BigRational,
}

fn lcm(a: &BigInt, b: &BigInt) -> BigInt {
    let g = gcd(a, b);
    (a / &g * b).abs()
}

fn gcd(a: &BigInt, b: &BigInt) -> BigInt {
    let (mut a, mut b) = (a.abs(), b.abs());
    while !b.is_zero() {
        let r = &a % &b;
        a = b;
        b = r;
    }
    a
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}
