//! Stepping-rate and attacker-success experiments.

use crate::attack::pss::{pss_attack, PssConfig, PssRunner};
use crate::attack::AttackEnv;
use crate::enclave::{MitigationPhase, PreparedVictim, SecretBinding};
use crate::error::Result;
use crate::fingerprint::trace::InterruptClass;
use crate::interrupt::IpiPlan;
use crate::rng::{derive_seed, stream};
use crate::victims::{make_region_victim, DeltaBranchVictim, Filler};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteppingReport {
    pub filler: Filler,
    pub region_length: usize,
    pub fired: u64,
    /// Ground-truth exits inside the mitigation.
    pub mitigation_landings: u64,
    /// Ground-truth n (instructions since the previous Step-labelled interrupt) per Step label.
    pub histogram: BTreeMap<u64, u64>,
    pub step_labelled: u64,
    pub false_positives: u64,
    pub slide_landings: u64,
    pub slide_labelled_mitigation: u64,
    pub traces: u64,
}

impl SteppingReport {
    pub fn mitigation_fraction(&self) -> f64 {
        self.mitigation_landings as f64 / self.fired.max(1) as f64
    }

    /// Share of n = `n` among Step-labelled interrupts with n >= 1.
    pub fn share(&self, n: u64) -> f64 {
        let total: u64 = self.histogram.iter().filter(|(k, _)| **k >= 1).map(|(_, v)| v).sum();
        if total == 0 {
            return 0.0;
        }
        self.histogram.get(&n).copied().unwrap_or(0) as f64 / total as f64
    }

    pub fn mode(&self) -> Option<u64> {
        self.histogram
            .iter()
            .filter(|(k, _)| **k >= 1)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(k, _)| *k)
    }

    /// Fraction of NOP-slide landings the attacker labelled as mitigation.
    pub fn slide_mitigation_rate(&self) -> f64 {
        if self.slide_landings == 0 {
            return 1.0;
        }
        self.slide_labelled_mitigation as f64 / self.slide_landings as f64
    }
}

/// Traces a straight-line region until `interrupts` IPIs have fired.
pub fn stepping_rate_experiment(
    env: &AttackEnv,
    cfg: &PssConfig,
    plan: IpiPlan,
    filler: Filler,
    region_length: usize,
    interrupts: u64,
    seed: u64,
) -> Result<SteppingReport> {
    let program = make_region_victim(filler, region_length);
    let victim = PreparedVictim::new(&program, &SecretBinding::new(), &env.machine.params)?;
    let mut runner = PssRunner::new(env, cfg, plan);
    let mut rep = SteppingReport {
        filler,
        region_length,
        fired: 0,
        mitigation_landings: 0,
        histogram: BTreeMap::new(),
        step_labelled: 0,
        false_positives: 0,
        slide_landings: 0,
        slide_labelled_mitigation: 0,
        traces: 0,
    };
    let mut trace_id = 0u64;
    while rep.fired < interrupts {
        let mut since_step = 0i64;
        let mut last_pos = 0usize;
        runner.trace_with(&victim, trace_id, seed, |ev, label| {
            if rep.fired >= interrupts {
                return;
            }
            rep.fired += 1;
            since_step += ev.erip.pos as i64 - last_pos as i64;
            last_pos = ev.erip.pos;
            if ev.landing < 0 {
                rep.mitigation_landings += 1;
            }
            if ev.mitigation_phase == Some(MitigationPhase::NopSlide) {
                rep.slide_landings += 1;
                if label == InterruptClass::Mitigation {
                    rep.slide_labelled_mitigation += 1;
                }
            }
            if label == InterruptClass::Step {
                rep.step_labelled += 1;
                if InterruptClass::from_landing(ev.landing) != InterruptClass::Step {
                    rep.false_positives += 1;
                }
                *rep.histogram.entry(since_step as u64).or_insert(0) += 1;
                since_step = 0;
            }
        })?;
        trace_id += 1;
        rep.traces += 1;
    }
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessTrial {
    pub delta: usize,
    pub trial: usize,
    pub secret: u64,
    pub predicted: u64,
    pub mean_short: f64,
    pub mean_long: f64,
    pub interrupts: u64,
}

/// One secret-bit attack per trial on the Δ-unbalanced branch, fresh seeds per trial.
pub fn success_trials(
    env: &AttackEnv,
    cfg: &PssConfig,
    plan: &IpiPlan,
    delta: usize,
    filler: Filler,
    trials: usize,
    seed: u64,
) -> Result<Vec<SuccessTrial>> {
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let tseed = derive_seed(seed, &format!("pss-delta-{delta}"), t as u64);
        let secret: u64 = stream(tseed, u64::MAX).random_range(0..2);
        let candidates = [0u64, 1]
            .iter()
            .map(|&g| {
                let v = DeltaBranchVictim::new(delta, g, filler);
                Ok((g, PreparedVictim::new(&v.program(), &v.binding(secret), &env.machine.params)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut runner = PssRunner::new(env, cfg, plan.clone());
        let res = pss_attack(&mut runner, &candidates, tseed)?;
        let interrupts = res.raw_counts.iter().map(|(_, r)| r.interrupts).sum();
        let mean_of = |g: u64| res.per_guess_mean_counts[g as usize];
        out.push(SuccessTrial {
            delta,
            trial: t,
            secret,
            predicted: res.predicted_secret,
            mean_short: mean_of(secret),
            mean_long: mean_of(1 - secret),
            interrupts,
        });
    }
    Ok(out)
}

pub fn success_rate(trials: &[SuccessTrial]) -> f64 {
    trials.iter().filter(|t| t.predicted == t.secret).count() as f64 / trials.len().max(1) as f64
}
