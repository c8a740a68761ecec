use crate::ecdsa::curve::{point_add, scalar_mult, CurveParams, Point};
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyPair {
    pub private: BigUint,
    pub public: Point,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub r: BigUint,
    pub s: BigUint,
    pub msg_hash: BigUint,
    /// Evaluation-only ground truth.
    pub true_nonce: Option<BigUint>,
}

/// Uniform value in [0, 2^bits).
pub fn random_bits<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    if bits == 0 {
        return BigUint::zero();
    }
    let nbytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; nbytes];
    rng.fill_bytes(&mut buf);
    let extra = nbytes as u64 * 8 - bits;
    buf[0] &= 0xffu8 >> extra;
    BigUint::from_bytes_be(&buf)
}

/// Uniform value in [1, bound).
pub fn random_nonzero_below<R: Rng + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    loop {
        let v = random_bits(bound.bits(), rng);
        if !v.is_zero() && &v < bound {
            return v;
        }
    }
}

impl KeyPair {
    pub fn from_private(curve: &CurveParams, d: BigUint) -> Result<Self> {
        if d.is_zero() || d >= curve.n_order {
            return Err(Error::Usage("private key must be in [1, n)".into()));
        }
        let public = scalar_mult(&d, &curve.generator(), curve)?;
        Ok(KeyPair { private: d, public })
    }

    pub fn generate<R: Rng + ?Sized>(curve: &CurveParams, rng: &mut R) -> Result<Self> {
        Self::from_private(curve, random_nonzero_below(&curve.n_order, rng))
    }
}

/// Leftmost bitlen(n) bits of SHA-256(msg).
pub fn hash_message(curve: &CurveParams, msg: &[u8]) -> BigUint {
    let digest = Sha256::digest(msg);
    let h = BigUint::from_bytes_be(&digest);
    let qlen = curve.n_order.bits();
    if qlen < 256 {
        h >> (256 - qlen)
    } else {
        h
    }
}

pub fn sign(curve: &CurveParams, d: &BigUint, h: &BigUint, k: &BigUint) -> Result<Signature> {
    let n = &curve.n_order;
    let kr = k % n;
    if kr.is_zero() {
        return Err(Error::Usage("nonce is zero modulo the group order".into()));
    }
    let r = match scalar_mult(&kr, &curve.generator(), curve)? {
        Point::Affine { x, .. } => x % n,
        Point::Infinity => return Err(Error::Usage("nonce point is the identity".into())),
    };
    if r.is_zero() {
        return Err(Error::Usage("degenerate nonce: r = 0".into()));
    }
    let kinv = kr.modinv(n).ok_or(Error::NotInvertible)?;
    let s = (kinv * ((h % n) + &r * d)) % n;
    if s.is_zero() {
        return Err(Error::Usage("degenerate nonce: s = 0".into()));
    }
    Ok(Signature {
        r,
        s,
        msg_hash: h.clone(),
        true_nonce: Some(k.clone()),
    })
}

pub fn verify(curve: &CurveParams, public: &Point, h: &BigUint, sig: &Signature) -> bool {
    let n = &curve.n_order;
    if sig.r.is_zero() || sig.s.is_zero() || &sig.r >= n || &sig.s >= n {
        return false;
    }
    let Some(w) = sig.s.modinv(n) else {
        return false;
    };
    let u1 = ((h % n) * &w) % n;
    let u2 = (&sig.r * &w) % n;
    let (Ok(a), Ok(b)) = (
        scalar_mult(&u1, &curve.generator(), curve),
        scalar_mult(&u2, public, curve),
    ) else {
        return false;
    };
    match point_add(curve, &a, &b) {
        Ok(Point::Affine { x, .. }) => x % n == sig.r,
        _ => false,
    }
}

/// Hex-encoded JSON-lines record; the nonce is debug-only ground truth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub r: String,
    pub s: String,
    pub hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub debug_nonce: Option<String>,
}

impl From<&Signature> for SignatureRecord {
    fn from(s: &Signature) -> Self {
        SignatureRecord {
            r: s.r.to_str_radix(16),
            s: s.s.to_str_radix(16),
            hash: s.msg_hash.to_str_radix(16),
            debug_nonce: s.true_nonce.as_ref().map(|k| k.to_str_radix(16)),
        }
    }
}

impl SignatureRecord {
    pub fn to_signature(&self) -> Result<Signature> {
        let parse = |v: &str| {
            BigUint::parse_bytes(v.as_bytes(), 16).ok_or_else(|| Error::Serde(format!("bad hex `{v}`")))
        };
        Ok(Signature {
            r: parse(&self.r)?,
            s: parse(&self.s)?,
            msg_hash: parse(&self.hash)?,
            true_nonce: self.debug_nonce.as_deref().map(parse).transpose()?,
        })
    }
}
