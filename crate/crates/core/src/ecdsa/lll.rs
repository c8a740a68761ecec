//! Integral LLL: all Gram-Schmidt data is kept as integers (the d_i
//! sub-determinants and lambda_{i,j} = d_{j+1} mu_{i,j}), so no rounding
//! error can creep in. Follows Cohen, Algorithm 2.6.7.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// Reduction parameter as an exact fraction num/den in (1/4, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delta {
    pub num: u64,
    pub den: u64,
}

impl Delta {
    pub const DEFAULT: Delta = Delta { num: 99, den: 100 };
    pub const ONE: Delta = Delta { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || 4 * num <= den || num > den {
            return Err(Error::Config(format!("LLL delta {num}/{den} outside (1/4, 1]")));
        }
        Ok(Delta { num, den })
    }
}

impl Default for Delta {
    fn default() -> Self {
        Delta::DEFAULT
    }
}

pub fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integral Gram-Schmidt data: `d[0] = 1`, `d[i+1]` is the Gram determinant of
/// the first i+1 rows, and `lam[k][j]` (j < k) is d[j+1] * mu_{k,j}.
#[derive(Clone, Debug)]
pub struct GramSchmidt {
    pub d: Vec<BigInt>,
    pub lam: Vec<Vec<BigInt>>,
}

pub fn gram_schmidt(b: &[Vec<BigInt>]) -> Result<GramSchmidt> {
    let n = b.len();
    let mut d = vec![BigInt::one(); n + 1];
    let mut lam = vec![vec![BigInt::zero(); n]; n];
    for k in 0..n {
        incremental(b, k, &mut d, &mut lam)?;
    }
    Ok(GramSchmidt { d, lam })
}

fn incremental(b: &[Vec<BigInt>], k: usize, d: &mut [BigInt], lam: &mut [Vec<BigInt>]) -> Result<()> {
    for j in 0..=k {
        let mut u = dot(&b[k], &b[j]);
        for i in 0..j {
            u = (&d[i + 1] * &u - &lam[k][i] * &lam[j][i]) / &d[i];
        }
        if j < k {
            lam[k][j] = u;
        } else {
            if u.is_zero() {
                return Err(Error::DependentRows);
            }
            d[k + 1] = u;
        }
    }
    Ok(())
}

struct State {
    b: Vec<Vec<BigInt>>,
    d: Vec<BigInt>,
    lam: Vec<Vec<BigInt>>,
}

impl State {
    /// Size-reduces row k against row l.
    fn red(&mut self, k: usize, l: usize) {
        let dl = &self.d[l + 1];
        let two_lam: BigInt = &self.lam[k][l] * BigInt::from(2);
        if two_lam.abs() <= *dl {
            return;
        }
        // nearest integer to lam / d
        let q = (two_lam + dl).div_floor(&(dl * 2));
        if q.is_zero() {
            return;
        }
        let (lo, hi) = self.b.split_at_mut(k);
        for (x, y) in hi[0].iter_mut().zip(&lo[l]) {
            *x -= &q * y;
        }
        self.lam[k][l] -= &q * dl;
        for i in 0..l {
            let t = &q * &self.lam[l][i];
            self.lam[k][i] -= t;
        }
    }

    fn swap(&mut self, k: usize, kmax: usize) {
        self.b.swap(k, k - 1);
        for j in 0..k - 1 {
            let t = std::mem::take(&mut self.lam[k][j]);
            self.lam[k][j] = std::mem::replace(&mut self.lam[k - 1][j], t);
        }
        let lam = self.lam[k][k - 1].clone();
        let bnew = (&self.d[k - 1] * &self.d[k + 1] + &lam * &lam) / &self.d[k];
        for i in k + 1..=kmax {
            let t = self.lam[i][k].clone();
            self.lam[i][k] = (&self.d[k + 1] * &self.lam[i][k - 1] - &lam * &t) / &self.d[k];
            self.lam[i][k - 1] = (&bnew * &t + &lam * &self.lam[i][k]) / &self.d[k + 1];
        }
        self.d[k] = bnew;
    }
}

/// LLL-reduces the rows of `basis`. Rows must be linearly independent.
pub fn lll(basis: &[Vec<BigInt>], delta: Delta) -> Result<Vec<Vec<BigInt>>> {
    let n = basis.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let dim = basis[0].len();
    if basis.iter().any(|r| r.len() != dim) {
        return Err(Error::Usage("basis rows differ in length".into()));
    }
    let mut st = State {
        b: basis.to_vec(),
        d: vec![BigInt::one(); n + 1],
        lam: vec![vec![BigInt::zero(); n]; n],
    };
    incremental(&st.b, 0, &mut st.d, &mut st.lam)?;
    let (p, q) = (BigInt::from(delta.num), BigInt::from(delta.den));
    let mut k = 1usize;
    let mut kmax = 0usize;
    while k < n {
        if k > kmax {
            kmax = k;
            incremental(&st.b, k, &mut st.d, &mut st.lam)?;
        }
        loop {
            st.red(k, k - 1);
            let lam = &st.lam[k][k - 1];
            // Lovász: d_k d_{k-2} >= delta d_{k-1}^2 - lam^2, in shifted indices
            let lhs = &q * (&st.d[k + 1] * &st.d[k - 1] + lam * lam);
            let rhs = &p * (&st.d[k] * &st.d[k]);
            if lhs < rhs {
                st.swap(k, kmax);
                if k > 1 {
                    k -= 1;
                }
            } else {
                break;
            }
        }
        for l in (0..k - 1).rev() {
            st.red(k, l);
        }
        k += 1;
    }
    Ok(st.b)
}

/// Block-2 strengthening: LLL at 0.99, then again with delta = 1.
pub fn bkz2(basis: &[Vec<BigInt>]) -> Result<Vec<Vec<BigInt>>> {
    let b = lll(basis, Delta::DEFAULT)?;
    lll(&b, Delta::ONE)
}

/// Checks size reduction (|mu| <= 1/2) and the Lovász condition exactly.
pub fn is_lll_reduced(b: &[Vec<BigInt>], delta: Delta) -> Result<bool> {
    let gs = gram_schmidt(b)?;
    let (p, q) = (BigInt::from(delta.num), BigInt::from(delta.den));
    for k in 0..b.len() {
        for j in 0..k {
            if (&gs.lam[k][j] * BigInt::from(2)).abs() > gs.d[j + 1] {
                return Ok(false);
            }
        }
        if k >= 1 {
            let lam = &gs.lam[k][k - 1];
            let lhs = &q * (&gs.d[k + 1] * &gs.d[k - 1] + lam * lam);
            let rhs = &p * (&gs.d[k] * &gs.d[k]);
            if lhs < rhs {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Exact determinant of a square integer matrix (Bareiss elimination).
pub fn determinant(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = m.to_vec();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

pub fn norm2(v: &[BigInt]) -> BigInt {
    dot(v, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
    }

    #[test]
    fn identity_is_unchanged() {
        let id = m(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 1]]);
        assert_eq!(lll(&id, Delta::DEFAULT).unwrap(), id);
    }

    #[test]
    fn textbook_example() {
        // classic 3x3 example; the reduced basis has a vector of norm^2 = 2
        let b = m(&[&[1, 1, 1], &[-1, 0, 2], &[3, 5, 6]]);
        let r = lll(&b, Delta::new(3, 4).unwrap()).unwrap();
        assert!(is_lll_reduced(&r, Delta::new(3, 4).unwrap()).unwrap());
        assert_eq!(determinant(&r).abs(), determinant(&b).abs());
        assert!(norm2(&r[0]) <= BigInt::from(3));
    }

    #[test]
    fn dependent_rows_error() {
        let b = m(&[&[1, 2], &[2, 4]]);
        assert!(matches!(lll(&b, Delta::DEFAULT), Err(Error::DependentRows)));
    }

    #[test]
    fn delta_bounds() {
        assert!(Delta::new(1, 4).is_err());
        assert!(Delta::new(5, 4).is_err());
        assert!(Delta::new(1, 1).is_ok());
    }

    #[test]
    fn bareiss_matches_cofactor_expansion() {
        let a = m(&[&[2, -1, 0], &[1, 3, 4], &[0, 5, -2]]);
        // 2*(3*-2 - 4*5) - (-1)*(1*-2 - 0) + 0 = -52 - 2 = -54
        assert_eq!(determinant(&a), BigInt::from(-54));
    }
}
