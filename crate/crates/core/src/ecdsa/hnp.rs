use crate::ecdsa::bias::BiasSpec;
use crate::ecdsa::curve::CurveParams;
use crate::ecdsa::sign::Signature;
use crate::error::{Error, Result};
use num_bigint::{BigInt, BigUint, Sign};
use serde::{Deserialize, Serialize};

/// t_i * d - u_i = e_i (mod n) with 0 <= e_i < B_e when signature i is biased.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HnpInstance {
    pub t: Vec<BigUint>,
    pub u: Vec<BigUint>,
    pub known_part: BigUint,
    pub bound: BigUint,
    pub n_order: BigUint,
}

impl HnpInstance {
    pub fn m(&self) -> usize {
        self.t.len()
    }

    /// (t_i d - u_i) reduced into (-n/2, n/2].
    pub fn residual(&self, i: usize, d: &BigUint) -> BigInt {
        let n = &self.n_order;
        let v = (&self.t[i] * d + n - &self.u[i] % n) % n;
        mod_signed(&v, n)
    }

    pub fn satisfied_by(&self, d: &BigUint) -> bool {
        (0..self.m()).all(|i| {
            let e = self.residual(i, d);
            e.sign() != Sign::Minus && e < BigInt::from(self.bound.clone())
        })
    }
}

pub fn mod_signed(v: &BigUint, n: &BigUint) -> BigInt {
    let v = BigInt::from(v % n);
    let n = BigInt::from(n.clone());
    if &v * 2 > n {
        v - n
    } else {
        v
    }
}

pub fn build_hnp(sigs: &[Signature], spec: &BiasSpec, curve: &CurveParams) -> Result<HnpInstance> {
    let n = &curve.n_order;
    let mut t = Vec::with_capacity(sigs.len());
    let mut u = Vec::with_capacity(sigs.len());
    for sig in sigs {
        let sinv = sig.s.modinv(n).ok_or(Error::NotInvertible)?;
        t.push((&sig.r * &sinv) % n);
        let hs = ((&sig.msg_hash % n) * &sinv) % n;
        u.push((&spec.known_part % n + n - hs) % n);
    }
    Ok(HnpInstance {
        t,
        u,
        known_part: spec.known_part.clone(),
        bound: spec.bound.clone(),
        n_order: n.clone(),
    })
}

/// d = (s k - h) r^-1 mod n for a signature with a known nonce.
pub fn key_from_known_nonce(sig: &Signature, k: &BigUint, n: &BigUint) -> Result<BigUint> {
    let rinv = sig.r.modinv(n).ok_or(Error::NotInvertible)?;
    let sk = (&sig.s * k) % n;
    let h = &sig.msg_hash % n;
    Ok(((sk + n - h) % n * rinv) % n)
}
