//! Signature-collection pipelines that feed interrupt-counting observations
//! into lattice key recovery.

use crate::attack::lbms::{call_landing_filter, lbms_config, lbms_detect, lbms_trace, tsc_delta};
use crate::attack::AttackEnv;
use crate::cycles::Cycles;
use crate::ecdsa::bias::{gen_biased_nonce, gen_uniform_nonce, BiasSpec};
use crate::ecdsa::curve::CurveParams;
use crate::ecdsa::recover::recover_key;
use crate::ecdsa::sign::{hash_message, sign, KeyPair, Signature};
use crate::ecdsa::subset::{expected_reductions, subset_search};
use crate::enclave::{mitigation_duration, Opcode, PreparedVictim};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use crate::victims::{LzbVictim, TruncationVictim};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// Every `every`-th nonce is drawn biased; the rest are uniform.
    Forced { every: usize },
    /// Uniform nonces only; bias occurs at its natural rate 2^-width.
    Natural,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub mode: BiasMode,
    pub width: u32,
    pub target_flagged: usize,
    pub subset_size: usize,
    pub signature_budget: u64,
    pub epsilon: f64,
    pub detection_threshold: u64,
    /// True-positive rate the attacker assumes when sizing the reduction budget.
    pub assumed_tp: f64,
    pub budget_factor: f64,
}

impl TruncationConfig {
    pub fn forced() -> Self {
        TruncationConfig {
            mode: BiasMode::Forced { every: 8 },
            width: 15,
            target_flagged: 16,
            subset_size: 12,
            signature_budget: 10_000,
            epsilon: 1e-6,
            detection_threshold: 2,
            assumed_tp: 0.875,
            budget_factor: 5.0,
        }
    }

    /// Reduced-width natural bias; the subset size keeps m * width near 180 bits.
    pub fn natural(width: u32) -> Self {
        let subset_size = 180usize.div_ceil(width.max(1) as usize);
        let target_flagged = subset_size + 4;
        TruncationConfig {
            mode: BiasMode::Natural,
            width,
            target_flagged,
            subset_size,
            signature_budget: (1u64 << width.min(40)) * target_flagged as u64 * 4,
            ..Self::forced()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width > 40 {
            return Err(Error::Config(format!("bias width {} outside 1..=40", self.width)));
        }
        if let BiasMode::Forced { every } = self.mode {
            if every == 0 {
                return Err(Error::Config("forced bias period must be positive".into()));
            }
        }
        if self.subset_size == 0 || self.subset_size > self.target_flagged {
            return Err(Error::Config(format!(
                "subset size {} must be in 1..={}",
                self.subset_size, self.target_flagged
            )));
        }
        if !(self.budget_factor >= 1.0) {
            return Err(Error::Config("budget factor must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedSignature {
    pub index: u64,
    pub interrupts: u64,
    pub truly_biased: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub signatures_used: u64,
    pub biased_signed: u64,
    pub flagged: Vec<FlaggedSignature>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub interrupts_total: u64,
    pub subset_size: usize,
    pub reduction_budget: u64,
    /// Expected reductions given the observed true-positive count.
    pub expected_reductions: f64,
    pub reductions: u64,
    pub recovered_key: String,
    pub verified: bool,
}

/// Signs with fresh nonces, watches each signing with threshold LBMS on the
/// truncation loop, and recovers the key from the flagged signatures.
pub fn e2e_truncation_attack(
    env: &AttackEnv,
    cfg: &TruncationConfig,
    curve: &CurveParams,
    seed: u64,
) -> Result<TruncationReport> {
    cfg.validate()?;
    let key = KeyPair::generate(curve, &mut stream(derive_seed(seed, "trunc-key", 0), 0))?;
    let spec = BiasSpec::msb_ones(cfg.width);
    let victim = TruncationVictim { width: cfg.width };
    let program = victim.program();
    let short = PreparedVictim::new(&program, &crate::victims::binding(&[("biased", 0)]), &env.machine.params)?;
    let long = PreparedVictim::new(&program, &crate::victims::binding(&[("biased", 1)]), &env.machine.params)?;
    // the first interrupt can land no earlier than halfway through the short path,
    // so a second one before the boundary requires the extra iteration
    let half = Cycles::from_ticks(short.total_cycles(env.cache_enabled).ticks() / 2);
    let lcfg = lbms_config(env, half, cfg.epsilon, cfg.detection_threshold)?;

    let mut flagged = Vec::new();
    let mut flagged_sigs: Vec<Signature> = Vec::new();
    let mut interrupts_total = 0u64;
    let mut biased_signed = 0u64;
    let mut used = 0u64;
    while flagged.len() < cfg.target_flagged {
        if used >= cfg.signature_budget {
            return Err(Error::BudgetExhausted(cfg.signature_budget));
        }
        let i = used;
        used += 1;
        let mut rng = stream(derive_seed(seed, "trunc-sig", i), 0);
        let k = match cfg.mode {
            BiasMode::Forced { every } if (i as usize) % every == every - 1 => gen_biased_nonce(&spec, &mut rng),
            _ => gen_uniform_nonce(&mut rng),
        };
        let biased = victim.is_biased(&k);
        biased_signed += biased as u64;
        let prepared = if biased { &long } else { &short };
        let obs = lbms_trace(env, &lcfg, prepared, i, &mut stream(derive_seed(seed, "trunc-lbms", i), 0))?;
        interrupts_total += obs.interrupts_before_boundary;
        if !lbms_detect(&obs, &lcfg) {
            continue;
        }
        let h = hash_message(curve, format!("message-{i}").as_bytes());
        let sig = match sign(curve, &key.private, &h, &k) {
            Ok(s) => s,
            Err(Error::Usage(_)) => continue,
            Err(e) => return Err(e),
        };
        flagged.push(FlaggedSignature {
            index: i,
            interrupts: obs.interrupts_before_boundary,
            truly_biased: biased,
        });
        flagged_sigs.push(sig);
    }

    let f = flagged.len();
    let tp = flagged.iter().filter(|s| s.truly_biased).count();
    let assumed = expected_reductions(f, cfg.assumed_tp, cfg.subset_size)?;
    let budget = (cfg.budget_factor * assumed).ceil() as u64;
    let expected = expected_reductions(f, tp as f64 / f as f64, cfg.subset_size).unwrap_or(f64::INFINITY);
    let mut srng = stream(derive_seed(seed, "trunc-subset", 0), 0);
    let out = subset_search(&flagged_sigs, cfg.subset_size, &spec, budget, &mut srng, curve, &key.public)?;
    Ok(TruncationReport {
        signatures_used: used,
        biased_signed,
        true_positives: tp,
        false_positives: f - tp,
        flagged,
        interrupts_total,
        subset_size: cfg.subset_size,
        reduction_budget: budget,
        expected_reductions: expected,
        reductions: out.reductions,
        verified: out.private == key.private,
        recovered_key: out.private.to_str_radix(16),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LzbConfig {
    pub signatures: u64,
    pub epsilon: f64,
    pub call_gap: f64,
    pub tsc_noise: f64,
    pub subset_size: usize,
    /// Flagged-set size used for the cost projection.
    pub projected_flagged: usize,
}

impl Default for LzbConfig {
    fn default() -> Self {
        LzbConfig {
            signatures: 100_000,
            epsilon: 1e-3,
            call_gap: 0.057,
            tsc_noise: 0.01,
            subset_size: 34,
            projected_flagged: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LzbReport {
    pub signatures: u64,
    pub biased: u64,
    pub flagged_raw: u64,
    pub true_positives_raw: u64,
    pub call_landings_raw: u64,
    pub flagged_kept: u64,
    pub true_positives_kept: u64,
    pub call_landings_kept: u64,
    pub tp_rate_raw: f64,
    pub tp_rate_kept: f64,
    /// Expected reductions at the projected flagged-set size and kept TP rate,
    /// or `None` when that projection is infeasible.
    pub projected_reductions: Option<f64>,
}

fn call_position(prepared_program: &crate::enclave::VictimProgram, lzb: u64) -> Result<usize> {
    let path = prepared_program.resolve(&crate::victims::binding(&[("lzb", lzb)]))?;
    path.instrs
        .iter()
        .position(|p| p.spec.opcode == Opcode::Call)
        .ok_or_else(|| Error::MalformedVictim("lzb gadget has no call".into()))
}

/// Detection statistics for the leading-zero gadget: LBMS flags, then the
/// TSC-delta filter discards interrupts that landed on the call itself.
pub fn lzb_statistics(env: &AttackEnv, cfg: &LzbConfig, seed: u64) -> Result<LzbReport> {
    let victim = LzbVictim::default();
    let program = victim.program();
    let preps = [
        PreparedVictim::new(&program, &crate::victims::binding(&[("lzb", 0)]), &env.machine.params)?,
        PreparedVictim::new(&program, &crate::victims::binding(&[("lzb", 1)]), &env.machine.params)?,
    ];
    let calls = [call_position(&program, 0)?, call_position(&program, 1)?];
    let call_window = env.machine.params.window(&program.blocks[2].instructions[0], env.cache_enabled)?;
    // the bound excludes the call, so late short-path interrupts land on it
    let short = preps[0].total_cycles(env.cache_enabled) - call_window;
    let lcfg = lbms_config(env, short, cfg.epsilon, 1)?;
    let baseline = mitigation_duration(env.mitigation(), false, env.cache_enabled).as_f64();

    let mut r = LzbReport {
        signatures: cfg.signatures,
        biased: 0,
        flagged_raw: 0,
        true_positives_raw: 0,
        call_landings_raw: 0,
        flagged_kept: 0,
        true_positives_kept: 0,
        call_landings_kept: 0,
        tp_rate_raw: 0.0,
        tp_rate_kept: 0.0,
        projected_reductions: None,
    };
    for i in 0..cfg.signatures {
        let mut rng = stream(derive_seed(seed, "lzb-sig", i), 0);
        let k = gen_uniform_nonce(&mut rng);
        let biased = victim.is_biased(&k) as usize;
        r.biased += biased as u64;
        let obs = lbms_trace(env, &lcfg, &preps[biased], i, &mut rng)?;
        if !lbms_detect(&obs, &lcfg) {
            continue;
        }
        let on_call = obs.last_interrupt_pos == Some(calls[biased]);
        r.flagged_raw += 1;
        r.true_positives_raw += biased as u64;
        r.call_landings_raw += on_call as u64;
        let delta = tsc_delta(baseline, on_call, cfg.call_gap, cfg.tsc_noise, &mut rng);
        if call_landing_filter(delta, baseline, cfg.call_gap) {
            r.flagged_kept += 1;
            r.true_positives_kept += biased as u64;
            r.call_landings_kept += on_call as u64;
        }
    }
    let rate = |tp: u64, f: u64| if f == 0 { 0.0 } else { tp as f64 / f as f64 };
    r.tp_rate_raw = rate(r.true_positives_raw, r.flagged_raw);
    r.tp_rate_kept = rate(r.true_positives_kept, r.flagged_kept);
    r.projected_reductions = expected_reductions(cfg.projected_flagged, r.tp_rate_kept, cfg.subset_size).ok();
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeDemoRow {
    pub subset_size: usize,
    pub recovered: bool,
    /// Wall-clock; reported in summaries only.
    pub seconds: f64,
}

/// Tries lattice recovery from all-biased leading-zero signatures at growing
/// sizes, stopping at the first success.
pub fn lzb_lattice_demo(curve: &CurveParams, zeros: u32, sizes: &[usize], seed: u64) -> Result<Vec<LatticeDemoRow>> {
    let spec = BiasSpec::leading_zeros(zeros);
    let mut rng = stream(derive_seed(seed, "lzb-demo", 0), 0);
    let key = KeyPair::generate(curve, &mut rng)?;
    let max = sizes.iter().copied().max().unwrap_or(0);
    let mut sigs = Vec::with_capacity(max);
    let mut i = 0u64;
    while sigs.len() < max {
        let k = gen_biased_nonce(&spec, &mut rng);
        let h = hash_message(curve, format!("lzb-{i}").as_bytes());
        i += 1;
        match sign(curve, &key.private, &h, &k) {
            Ok(s) => sigs.push(s),
            Err(Error::Usage(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut rows = Vec::new();
    for &m in sizes {
        let t0 = Instant::now();
        let got = recover_key(&sigs[..m], &spec, curve, &key.public)?;
        let ok = got.as_ref() == Some(&key.private);
        rows.push(LatticeDemoRow {
            subset_size: m,
            recovered: ok,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if ok {
            break;
        }
    }
    Ok(rows)
}

pub fn key_hex(d: &BigUint) -> String {
    d.to_str_radix(16)
}
