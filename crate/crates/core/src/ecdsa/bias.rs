use crate::ecdsa::sign::random_bits;
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const NONCE_BITS: u64 = 160;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    MsbOnes(u32),
    LeadingZeros(u32),
}

/// Nonces of the form k = A + e with 0 <= e < B_e.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub known_part: BigUint,
    pub bound: BigUint,
}

impl BiasSpec {
    pub fn new(kind: BiasKind) -> Result<Self> {
        let bits = match kind {
            BiasKind::MsbOnes(b) | BiasKind::LeadingZeros(b) => b as u64,
        };
        if bits > NONCE_BITS {
            return Err(Error::Config(format!("bias width {bits} exceeds {NONCE_BITS} bits")));
        }
        let one = BigUint::one();
        let bound = &one << (NONCE_BITS - bits);
        let known_part = match kind {
            BiasKind::MsbOnes(_) => ((&one << bits) - 1u8) << (NONCE_BITS - bits),
            BiasKind::LeadingZeros(_) => BigUint::default(),
        };
        Ok(BiasSpec {
            kind,
            known_part,
            bound,
        })
    }

    pub fn msb_ones(b: u32) -> Self {
        Self::new(BiasKind::MsbOnes(b)).expect("width within range")
    }

    pub fn leading_zeros(z: u32) -> Self {
        Self::new(BiasKind::LeadingZeros(z)).expect("width within range")
    }

    pub fn matches(&self, nonce: &BigUint) -> bool {
        nonce >= &self.known_part && nonce - &self.known_part < self.bound
    }

    pub fn bias_bits(&self) -> u32 {
        match self.kind {
            BiasKind::MsbOnes(b) | BiasKind::LeadingZeros(b) => b,
        }
    }
}

pub fn gen_biased_nonce<R: Rng + ?Sized>(spec: &BiasSpec, rng: &mut R) -> BigUint {
    loop {
        let e = random_bits(spec.bound.bits() - 1, rng);
        let k = &spec.known_part + e;
        if k.bits() > 0 {
            return k;
        }
    }
}

/// Uniform nonzero 160-bit nonce.
pub fn gen_uniform_nonce<R: Rng + ?Sized>(rng: &mut R) -> BigUint {
    loop {
        let k = random_bits(NONCE_BITS, rng);
        if k.bits() > 0 {
            return k;
        }
    }
}
