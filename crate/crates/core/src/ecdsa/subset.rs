use crate::ecdsa::bias::BiasSpec;
use crate::ecdsa::curve::{CurveParams, Point};
use crate::ecdsa::recover::recover_key;
use crate::ecdsa::sign::Signature;
use crate::error::{Error, Result};
use num_bigint::BigUint;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// C(F, m) / C(B, m) with B = round(tp_rate F): the mean number of uniformly
/// random m-subsets drawn before one contains only true positives.
pub fn expected_reductions(flagged: usize, tp_rate: f64, subset_size: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&tp_rate) {
        return Err(Error::Config(format!("tp_rate {tp_rate} outside [0, 1]")));
    }
    let b = (tp_rate * flagged as f64).round() as usize;
    if b < subset_size {
        return Err(Error::Infeasible(format!(
            "{b} expected true positives among {flagged} flagged, need {subset_size}"
        )));
    }
    let mut ratio = 1.0f64;
    for i in 0..subset_size {
        ratio *= (flagged - i) as f64 / (b - i) as f64;
    }
    Ok(ratio)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetOutcome {
    pub private: BigUint,
    /// 1-based index of the reduction that succeeded.
    pub reductions: u64,
    pub subset: Vec<usize>,
}

/// Reduces random subsets until one yields a verified key. Subsets are drawn
/// up front from `rng` and evaluated in parallel batches; the reported count
/// is the first success in draw order, independent of thread count.
pub fn subset_search<R: Rng + ?Sized>(
    flagged: &[Signature],
    subset_size: usize,
    spec: &BiasSpec,
    budget: u64,
    rng: &mut R,
    curve: &CurveParams,
    public: &Point,
) -> Result<SubsetOutcome> {
    if subset_size == 0 || subset_size > flagged.len() {
        return Err(Error::Infeasible(format!(
            "subset size {subset_size} with {} flagged signatures",
            flagged.len()
        )));
    }
    let batch = (rayon::current_num_threads() * 2).max(4) as u64;
    let mut done = 0u64;
    while done < budget {
        let count = batch.min(budget - done);
        let subsets: Vec<Vec<usize>> = (0..count)
            .map(|_| {
                let mut idx = sample(rng, flagged.len(), subset_size).into_vec();
                idx.sort_unstable();
                idx
            })
            .collect();
        let results: Vec<Result<Option<BigUint>>> = subsets
            .par_iter()
            .map(|idx| {
                let sigs: Vec<Signature> = idx.iter().map(|&i| flagged[i].clone()).collect();
                recover_key(&sigs, spec, curve, public)
            })
            .collect();
        for (j, res) in results.into_iter().enumerate() {
            if let Some(private) = res? {
                return Ok(SubsetOutcome {
                    private,
                    reductions: done + j as u64 + 1,
                    subset: subsets[j].clone(),
                });
            }
        }
        done += count;
    }
    Err(Error::BudgetExhausted(budget))
}
