//! Lower-bounded multi-stepping: with the IPI calibrated to arrive only after
//! the short branch could have finished, any interrupt before the closing
//! boundary reveals the longer branch.

use crate::attack::AttackEnv;
use crate::cycles::Cycles;
use crate::enclave::{mitigation_duration, AexCause, EnclaveState, PreparedVictim};
use crate::error::Result;
use crate::interrupt::{calibrate_lbms, sample_arrival, IpiPlan};
use crate::rng::{derive_seed, stream};
use crate::victims::{DeltaBranchVictim, Filler};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbmsConfig {
    pub lower_bound_cycles: Cycles,
    pub detection_threshold: u64,
    pub ipi_plan: IpiPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub trace_id: u64,
    pub interrupts_before_boundary: u64,
    pub boundary_reached: bool,
    /// Resume-to-fault cycles of the final resume (what a TSC read would show).
    pub final_delta: Cycles,
    /// Evaluation-only: path position of the last interrupted instruction.
    pub last_interrupt_pos: Option<usize>,
}

/// Calibrates against the r = 0 mitigation and the victim's short path.
pub fn lbms_config(
    env: &AttackEnv,
    short_branch_cycles: Cycles,
    epsilon: f64,
    detection_threshold: u64,
) -> Result<LbmsConfig> {
    let end = mitigation_duration(env.mitigation(), false, env.cache_enabled);
    let plan = calibrate_lbms(&env.arrival, end, short_branch_cycles, epsilon)?;
    Ok(LbmsConfig {
        lower_bound_cycles: plan.lbms_lower_bound.expect("lbms plan carries its bound"),
        detection_threshold: detection_threshold.max(1),
        ipi_plan: plan,
    })
}

pub fn lbms_trace<R: Rng + ?Sized>(
    env: &AttackEnv,
    cfg: &LbmsConfig,
    victim: &PreparedVictim,
    trace_id: u64,
    rng: &mut R,
) -> Result<Observation> {
    let mut st = EnclaveState::new(trace_id, env.cache_enabled);
    let mut obs = Observation {
        trace_id,
        interrupts_before_boundary: 0,
        boundary_reached: false,
        final_delta: Cycles::ZERO,
        last_interrupt_pos: None,
    };
    loop {
        if obs.interrupts_before_boundary >= env.cap {
            return Ok(obs);
        }
        let at = sample_arrival(&env.arrival, &cfg.ipi_plan, rng);
        let (next, ev) = env.machine.resume_and_run(&st, victim, Some(at), rng)?;
        if ev.cause == AexCause::PageFault {
            obs.boundary_reached = true;
            obs.final_delta = ev.since_resume;
            return Ok(obs);
        }
        obs.interrupts_before_boundary += 1;
        obs.last_interrupt_pos = Some(ev.erip.pos);
        st = next;
    }
}

pub fn lbms_detect(obs: &Observation, cfg: &LbmsConfig) -> bool {
    obs.interrupts_before_boundary >= cfg.detection_threshold
}

/// Keeps an observation unless its resume-to-fault delta is short enough to
/// indicate the interrupt landed on the final call.
pub fn call_landing_filter(delta: f64, baseline: f64, gap: f64) -> bool {
    delta > (1.0 - gap / 2.0) * baseline
}

/// Synthetic TSC delta: call landings run `gap` shorter on average, with
/// multiplicative Gaussian noise.
pub fn tsc_delta<R: Rng + ?Sized>(baseline: f64, call_landing: bool, gap: f64, noise: f64, rng: &mut R) -> f64 {
    let g: f64 = StandardNormal.sample(rng);
    let mean = if call_landing { baseline * (1.0 - gap) } else { baseline };
    mean * (1.0 + noise * g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbmsBenchRow {
    pub delta: usize,
    pub traces_per_run: usize,
    pub runs: usize,
    pub detections_per_run: Vec<u64>,
    pub mean_detections: f64,
}

/// Detection counts for the longer branch of a Δ-unbalanced nop branch.
pub fn lbms_bench(
    env: &AttackEnv,
    deltas: &[usize],
    epsilon: f64,
    runs: usize,
    traces: usize,
    seed: u64,
) -> Result<Vec<LbmsBenchRow>> {
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        // guess 0 with secret 0 is the short side, secret 1 the long side
        let v = DeltaBranchVictim::new(delta, 0, Filler::Nop);
        let program = v.program();
        let short = PreparedVictim::new(&program, &v.binding(0), &env.machine.params)?;
        let long = PreparedVictim::new(&program, &v.binding(1), &env.machine.params)?;
        let cfg = lbms_config(env, short.total_cycles(env.cache_enabled), epsilon, 1)?;
        let mut per_run = Vec::with_capacity(runs);
        for run in 0..runs {
            let rseed = derive_seed(seed, &format!("lbms-delta-{delta}"), run as u64);
            let mut hits = 0u64;
            for t in 0..traces {
                let mut rng = stream(rseed, t as u64);
                if lbms_detect(&lbms_trace(env, &cfg, &long, t as u64, &mut rng)?, &cfg) {
                    hits += 1;
                }
            }
            per_run.push(hits);
        }
        let mean = per_run.iter().sum::<u64>() as f64 / runs.max(1) as f64;
        rows.push(LbmsBenchRow {
            delta,
            traces_per_run: traces,
            runs,
            detections_per_run: per_run,
            mean_detections: mean,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detect_thresholds() {
        let cfg = LbmsConfig {
            lower_bound_cycles: Cycles::ZERO,
            detection_threshold: 1,
            ipi_plan: IpiPlan {
                fire_delay: Cycles::ZERO,
                mode: crate::interrupt::PlanMode::Lbms,
                lbms_lower_bound: Some(Cycles::ZERO),
            },
        };
        let mut obs = Observation {
            trace_id: 0,
            interrupts_before_boundary: 0,
            boundary_reached: true,
            final_delta: Cycles::ZERO,
            last_interrupt_pos: None,
        };
        assert!(!lbms_detect(&obs, &cfg));
        let cfg2 = LbmsConfig {
            detection_threshold: 2,
            ..cfg
        };
        obs.interrupts_before_boundary = 2;
        assert!(lbms_detect(&obs, &cfg2));
        obs.interrupts_before_boundary = 1;
        assert!(!lbms_detect(&obs, &cfg2));
    }

    #[test]
    fn filter_examples() {
        assert!(call_landing_filter(1000.0, 1000.0, 0.057));
        assert!(!call_landing_filter(943.0, 1000.0, 0.057));
    }

    #[test]
    fn filter_removes_call_landings() {
        let mut rng = stream(8, 0);
        let n = 20_000;
        let removed = (0..n)
            .filter(|_| !call_landing_filter(tsc_delta(2000.0, true, 0.057, 0.01, &mut rng), 2000.0, 0.057))
            .count();
        assert!(removed as f64 / n as f64 >= 0.95);
        let kept = (0..n)
            .filter(|_| call_landing_filter(tsc_delta(2000.0, false, 0.057, 0.01, &mut rng), 2000.0, 0.057))
            .count();
        assert!(kept as f64 / n as f64 >= 0.95);
    }
}
