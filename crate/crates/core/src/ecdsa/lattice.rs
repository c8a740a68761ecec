use crate::ecdsa::hnp::HnpInstance;
use num_bigint::{BigInt, BigUint};
use num_traits::Zero;

/// Square integer basis, one lattice vector per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBasis {
    pub rows: Vec<Vec<BigInt>>,
    /// Embedding weight placed in the last two columns.
    pub weight: BigInt,
    pub n_order: BigInt,
}

impl LatticeBasis {
    pub fn dim(&self) -> usize {
        self.rows.len()
    }
}

/// Residuals are centered first: with e = e' + B/2, the lattice targets e' in
/// [-B/2, B/2) and uses B/2 as the embedding weight.
pub fn centered_weight(inst: &HnpInstance) -> BigUint {
    let half = &inst.bound >> 1u8;
    if half.is_zero() {
        BigUint::from(1u8)
    } else {
        half
    }
}

pub fn build_lattice(inst: &HnpInstance) -> LatticeBasis {
    let m = inst.m();
    let n = BigInt::from(inst.n_order.clone());
    let w_u = centered_weight(inst);
    let w = BigInt::from(w_u.clone());
    let dim = m + 2;
    let mut rows = vec![vec![BigInt::zero(); dim]; dim];
    let nn = &n * &n;
    for (i, row) in rows.iter_mut().take(m).enumerate() {
        row[i] = nn.clone();
    }
    for i in 0..m {
        rows[m][i] = &n * BigInt::from(inst.t[i].clone());
        let u = (&inst.u[i] + &w_u) % &inst.n_order;
        rows[m + 1][i] = &n * BigInt::from(u);
    }
    rows[m][m] = w.clone();
    rows[m + 1][m + 1] = &n * &w;
    LatticeBasis {
        rows,
        weight: w,
        n_order: n,
    }
}

/// The short vector the reduction should expose for private key `d`:
/// (n e'_1, ..., n e'_m, d w, -n w).
pub fn target_vector(inst: &HnpInstance, d: &BigUint) -> Vec<BigInt> {
    let basis_w = BigInt::from(centered_weight(inst));
    let n = BigInt::from(inst.n_order.clone());
    let mut v: Vec<BigInt> = (0..inst.m())
        .map(|i| {
            let e = inst.residual(i, d);
            &n * (e - &basis_w)
        })
        .collect();
    v.push(BigInt::from(d.clone()) * &basis_w);
    v.push(-(&n * &basis_w));
    v
}

/// Integer coefficients expressing `target_vector` in the basis rows.
pub fn target_coefficients(inst: &HnpInstance, d: &BigUint) -> Vec<BigInt> {
    let n = BigInt::from(inst.n_order.clone());
    let w = BigInt::from(centered_weight(inst));
    let dd = BigInt::from(d.clone());
    let mut c = Vec::with_capacity(inst.m() + 2);
    for i in 0..inst.m() {
        // n^2 c_i + n t_i d - n u'_i = n (e_i - w)
        let u = BigInt::from((&inst.u[i] + centered_weight(inst)) % &inst.n_order);
        let t = BigInt::from(inst.t[i].clone());
        let e = inst.residual(i, d) - &w;
        c.push((&e - &t * &dd + &u) / &n);
    }
    c.push(dd);
    c.push(BigInt::from(-1));
    c
}
