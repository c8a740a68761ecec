use crate::ecdsa::bias::BiasSpec;
use crate::ecdsa::curve::{scalar_mult, CurveParams, Point};
use crate::ecdsa::hnp::build_hnp;
use crate::ecdsa::lattice::{build_lattice, LatticeBasis};
use crate::ecdsa::lll::{bkz2, lll, Delta};
use crate::ecdsa::sign::Signature;
use crate::error::{Error, Result};
use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};

pub fn verify_key(curve: &CurveParams, d: &BigUint, public: &Point) -> bool {
    if d.is_zero() || d >= &curve.n_order {
        return false;
    }
    matches!(scalar_mult(d, &curve.generator(), curve), Ok(ref p) if p == public)
}

/// Candidate keys read off reduced rows whose last coordinate is ±n·w.
fn scan(basis: &LatticeBasis, reduced: &[Vec<BigInt>], curve: &CurveParams, public: &Point) -> Option<BigUint> {
    let dim = basis.dim();
    let nw = &basis.n_order * &basis.weight;
    let n = &basis.n_order;
    for row in reduced {
        let last = &row[dim - 1];
        if last.abs() != nw {
            continue;
        }
        let v = &row[dim - 2];
        if !(v % &basis.weight).is_zero() {
            continue;
        }
        let q = v / &basis.weight;
        for cand in [q.clone(), -q] {
            let d = ((cand % n) + n) % n;
            let d = match d.to_biguint() {
                Some(d) => d,
                None => continue,
            };
            if verify_key(curve, &d, public) {
                return Some(d);
            }
        }
    }
    None
}

/// Lattice key recovery. Returns `Ok(None)` when no verified candidate
/// appears after LLL and a block-2 pass.
pub fn recover_key(
    sigs: &[Signature],
    spec: &BiasSpec,
    curve: &CurveParams,
    public: &Point,
) -> Result<Option<BigUint>> {
    if sigs.is_empty() {
        return Err(Error::Usage("no signatures".into()));
    }
    let inst = build_hnp(sigs, spec, curve)?;
    let basis = build_lattice(&inst);
    let reduced = match lll(&basis.rows, Delta::DEFAULT) {
        Ok(r) => r,
        Err(Error::DependentRows) => return Ok(None),
        Err(e) => return Err(e),
    };
    if let Some(d) = scan(&basis, &reduced, curve, public) {
        return Ok(Some(d));
    }
    let stronger = bkz2(&reduced)?;
    Ok(scan(&basis, &stronger, curve, public))
}
