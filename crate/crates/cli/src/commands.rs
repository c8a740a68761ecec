use crate::output::{num, Outcome, Table};
use clap::{Args, Subcommand};
use irqcount_core::attack::lbms::lbms_config;
use irqcount_core::attack::AttackEnv;
use irqcount_core::ecdsa::curve::CurveParams;
use irqcount_core::ecdsa::pipeline::{e2e_truncation_attack, lzb_lattice_demo, lzb_statistics, BiasMode, LzbConfig, TruncationConfig};
use irqcount_core::ecdsa::subset::expected_reductions;
use irqcount_core::enclave::{mitigation_duration, PreparedVictim};
use irqcount_core::experiments::{classify_eval, lbms_table, memcmp, pss_bench, stepping_rate, training_corpus};
use irqcount_core::fingerprint::corpus::{pss_plan, write_csv};
use irqcount_core::fingerprint::metrics::EvalReport;
use irqcount_core::victims::{binding, DeltaBranchVictim, Filler, TruncationVictim};
use irqcount_core::{Cycles, Error, Profile, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

fn parse_filler(s: &str) -> std::result::Result<Filler, String> {
    Filler::parse(s).ok_or_else(|| format!("unknown filler `{s}` (nop, addl, mixed)"))
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// IPI fire delays and bounds the attacks would use under this profile.
    Calibrate(CalibrateArgs),
    /// Held-out, online and cross-filler classifier quality.
    ClassifyEval(ClassifyArgs),
    /// Histogram of instructions retired per Step-labelled interrupt.
    SteppingRate(SteppingArgs),
    /// Two-guess success rate of the step-counting attack per Δ.
    PssBench(PssArgs),
    /// Longer-branch detections per run of traces, per Δ.
    LbmsBench(LbmsArgs),
    /// Recover a memcmp secret by counting steps.
    Memcmp(MemcmpArgs),
    /// Truncation-loop detection feeding subset lattice recovery.
    EcdsaTrunc(TruncArgs),
    /// Leading-zero gadget detection statistics and a lattice sizing run.
    Lzb(LzbArgs),
    /// Expected subset reductions over a grid of true-positive rates.
    ExpectedReductions(ReductionArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Branch imbalances to calibrate LBMS for.
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 16, 32, 64])]
    pub deltas: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ClassifyArgs {
    /// Length of each online exit stream.
    #[arg(long, default_value_t = 20_000)]
    pub online: usize,
    /// Also write the addl training corpus (120 samples + label per row).
    #[arg(long)]
    pub dump_corpus: bool,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct SteppingArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_filler, default_values = ["addl", "nop"])]
    pub filler: Vec<Filler>,
    /// Interrupts fired per filler.
    #[arg(long, default_value_t = 20_000)]
    pub interrupts: u64,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct PssArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 6])]
    pub deltas: Vec<usize>,
    #[arg(long, value_parser = parse_filler, default_value = "nop")]
    pub filler: Filler,
    /// Traces per guess; defaults to the profile's value.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Independent attacks per Δ; defaults to the profile's value.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LbmsArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 8, 16, 32, 64])]
    pub deltas: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct MemcmpArgs {
    #[arg(long, default_value = "SECRET")]
    pub secret: String,
    /// Traces per candidate.
    #[arg(long, default_value_t = 250)]
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncMode {
    /// Every `--every`-th nonce is drawn biased.
    Forced,
    /// Uniform nonces, bias at its natural rate.
    Natural,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TruncArgs {
    #[arg(long, value_enum, default_value_t = TruncMode::Forced)]
    pub mode: TruncMode,
    #[arg(long, default_value_t = 8)]
    pub every: usize,
    /// Bias width in bits.
    #[arg(long, default_value_t = 15)]
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct LzbArgs {
    #[arg(long, default_value_t = 100_000)]
    pub signatures: u64,
    /// Leading zero bits assumed for the lattice sizing run.
    #[arg(long, default_value_t = 8)]
    pub zeros: u32,
    /// Subset sizes tried in order until one recovers the key; empty skips the run.
    #[arg(long, value_delimiter = ',', default_values_t = [22, 26, 30, 34])]
    pub sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct ReductionArgs {
    #[arg(long, default_value_t = 500)]
    pub flagged: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
    pub tp: Vec<f64>,
    #[arg(long, default_value_t = 34)]
    pub subset: usize,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate(_) => "calibrate",
            Command::ClassifyEval(_) => "classify-eval",
            Command::SteppingRate(_) => "stepping-rate",
            Command::PssBench(_) => "pss-bench",
            Command::LbmsBench(_) => "lbms-bench",
            Command::Memcmp(_) => "memcmp",
            Command::EcdsaTrunc(_) => "ecdsa-trunc",
            Command::Lzb(_) => "lzb",
            Command::ExpectedReductions(_) => "expected-reductions",
        }
    }

    pub fn run(&self, profile: &Profile, seed: u64) -> Result<Outcome> {
        match self {
            Command::Calibrate(a) => calibrate(profile, a),
            Command::ClassifyEval(a) => classify(profile, a, seed),
            Command::SteppingRate(a) => stepping(profile, a, seed),
            Command::PssBench(a) => pss(profile, a, seed),
            Command::LbmsBench(a) => lbms(profile, a, seed),
            Command::Memcmp(a) => memcmp_cmd(profile, a, seed),
            Command::EcdsaTrunc(a) => trunc(profile, a, seed),
            Command::Lzb(a) => lzb(profile, a, seed),
            Command::ExpectedReductions(a) => reductions(a),
        }
    }
}

fn cyc(c: Cycles) -> String {
    num(c.as_f64())
}

fn calibrate(profile: &Profile, a: &CalibrateArgs) -> Result<Outcome> {
    let env = AttackEnv::from_profile(profile)?;
    let end = mitigation_duration(env.mitigation(), false, env.cache_enabled);
    let mut t = Table::new(
        "calibration",
        &["target", "mode", "bound_cycles", "fire_delay_cycles", "mean_arrival_cycles", "tail_probability"],
    );
    let pss = pss_plan(profile)?;
    t.push(vec![
        "pss".into(),
        "pss".into(),
        cyc(end),
        cyc(pss.fire_delay),
        cyc(pss.mean_arrival(&env.arrival)),
        num(profile.attack.tail_mass),
    ]);
    let mut lbms_rows = Vec::new();
    for &delta in &a.deltas {
        let v = DeltaBranchVictim::new(delta, 0, Filler::Nop);
        let short = PreparedVictim::new(&v.program(), &v.binding(0), &env.machine.params)?;
        let cfg = lbms_config(&env, short.total_cycles(env.cache_enabled), profile.attack.lbms_epsilon, 1)?;
        t.push(vec![
            format!("lbms-delta-{delta}"),
            "lbms".into(),
            cyc(cfg.lower_bound_cycles),
            cyc(cfg.ipi_plan.fire_delay),
            cyc(cfg.ipi_plan.mean_arrival(&env.arrival)),
            num(profile.attack.lbms_epsilon),
        ]);
        lbms_rows.push(json!({"delta": delta, "bound_cycles": cfg.lower_bound_cycles.as_f64()}));
    }
    let prog = TruncationVictim::default().program();
    let short = PreparedVictim::new(&prog, &binding(&[("biased", 0)]), &env.machine.params)?;
    let half = Cycles::from_ticks(short.total_cycles(env.cache_enabled).ticks() / 2);
    let tc = lbms_config(&env, half, profile.attack.truncation_epsilon, 2)?;
    t.push(vec![
        "truncation".into(),
        "lbms".into(),
        cyc(tc.lower_bound_cycles),
        cyc(tc.ipi_plan.fire_delay),
        cyc(tc.ipi_plan.mean_arrival(&env.arrival)),
        num(profile.attack.truncation_epsilon),
    ]);
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![t],
        summary: json!({
            "mitigation_end_cycles": end.as_f64(),
            "pss_plan": pss,
            "lbms": lbms_rows,
            "truncation_plan": tc.ipi_plan,
        }),
    })
}

fn push_report(t: &mut Table, split: &str, r: &EvalReport) {
    for c in &r.per_class {
        t.push(vec![
            split.into(),
            c.class.name().into(),
            c.support.to_string(),
            c.predicted.to_string(),
            num(c.precision),
            num(c.recall),
            num(c.f1),
        ]);
    }
}

fn classify(profile: &Profile, a: &ClassifyArgs, seed: u64) -> Result<Outcome> {
    let r = classify_eval(profile, a.online, seed)?;
    let mut t = Table::new(
        "classify_eval",
        &["split", "class", "support_traces", "predicted_traces", "precision", "recall", "f1"],
    );
    push_report(&mut t, "heldout", &r.heldout);
    push_report(&mut t, "online", &r.online);
    let mut tr = Table::new("classify_transfer", &["model", "stream", "step_precision"]);
    tr.push(vec!["addl".into(), "nop".into(), num(r.transfer_step_precision)]);
    tr.push(vec!["nop".into(), "nop".into(), num(r.retrained_step_precision)]);
    let mut raw = Vec::new();
    if a.dump_corpus {
        let data = training_corpus(profile, Filler::Addl, seed)?;
        let mut buf = Vec::new();
        write_csv(&mut buf, &data)?;
        raw.push(("corpus_addl".to_string(), buf));
    }
    Ok(Outcome {
        tables: vec![t, tr],
        raw,
        summary: serde_json::to_value(&r).map_err(|e| Error::Serde(e.to_string()))?,
    })
}

fn stepping(profile: &Profile, a: &SteppingArgs, seed: u64) -> Result<Outcome> {
    let mut hist = Table::new("stepping_rate", &["filler", "instructions_per_step", "step_interrupts", "share"]);
    let mut sum = Table::new(
        "stepping_summary",
        &[
            "filler",
            "interrupts_fired",
            "mitigation_landings",
            "mitigation_fraction",
            "step_labelled",
            "false_positive_steps",
            "mode_instructions",
            "single_step_share",
        ],
    );
    let mut reports = Vec::new();
    for &f in &a.filler {
        let r = stepping_rate(profile, f, a.interrupts, seed)?;
        for n in 1..=r.histogram.keys().copied().max().unwrap_or(0) {
            let c = r.histogram.get(&n).copied().unwrap_or(0);
            hist.push(vec![f.name().into(), n.to_string(), c.to_string(), num(r.share(n))]);
        }
        sum.push(vec![
            f.name().into(),
            r.fired.to_string(),
            r.mitigation_landings.to_string(),
            num(r.mitigation_fraction()),
            r.step_labelled.to_string(),
            r.false_positives.to_string(),
            r.mode().map(|m| m.to_string()).unwrap_or_default(),
            num(r.share(1)),
        ]);
        reports.push(r);
    }
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![hist, sum],
        summary: serde_json::to_value(&reports).map_err(|e| Error::Serde(e.to_string()))?,
    })
}

fn pss(profile: &Profile, a: &PssArgs, seed: u64) -> Result<Outcome> {
    let samples = a.samples.unwrap_or(profile.attack.pss_samples);
    let trials = a.trials.unwrap_or(profile.attack.pss_trials);
    let rows = pss_bench(profile, &a.deltas, a.filler, samples, trials, seed)?;
    let mut t = Table::new(
        "pss_trials",
        &[
            "delta_instructions",
            "trial",
            "secret",
            "predicted",
            "correct",
            "mean_steps_short",
            "mean_steps_long",
            "interrupts",
        ],
    );
    let mut s = Table::new("pss_bench", &["delta_instructions", "trials", "samples_per_guess", "success_rate"]);
    for r in &rows {
        for tr in &r.trials {
            t.push(vec![
                tr.delta.to_string(),
                tr.trial.to_string(),
                tr.secret.to_string(),
                tr.predicted.to_string(),
                ((tr.secret == tr.predicted) as u8).to_string(),
                num(tr.mean_short),
                num(tr.mean_long),
                tr.interrupts.to_string(),
            ]);
        }
        s.push(vec![r.delta.to_string(), r.trials.len().to_string(), samples.to_string(), num(r.success_rate)]);
    }
    let rates: Vec<_> = rows.iter().map(|r| json!({"delta": r.delta, "success_rate": r.success_rate})).collect();
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![s, t],
        summary: json!({"filler": a.filler, "samples": samples, "trials": trials, "rows": rates}),
    })
}

fn lbms(profile: &Profile, a: &LbmsArgs, seed: u64) -> Result<Outcome> {
    let rows = lbms_table(profile, &a.deltas, seed)?;
    let mut t = Table::new(
        "lbms_bench",
        &["delta_instructions", "traces_per_run", "runs", "mean_detections", "min_detections", "max_detections"],
    );
    for r in &rows {
        let min = r.detections_per_run.iter().min().copied().unwrap_or(0);
        let max = r.detections_per_run.iter().max().copied().unwrap_or(0);
        t.push(vec![
            r.delta.to_string(),
            r.traces_per_run.to_string(),
            r.runs.to_string(),
            num(r.mean_detections),
            min.to_string(),
            max.to_string(),
        ]);
    }
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![t],
        summary: serde_json::to_value(&rows).map_err(|e| Error::Serde(e.to_string()))?,
    })
}

fn memcmp_cmd(profile: &Profile, a: &MemcmpArgs, seed: u64) -> Result<Outcome> {
    let r = memcmp(profile, &a.secret, a.samples, seed)?;
    let mut t = Table::new("memcmp_scores", &["phase", "input", "samples", "mean_steps", "interrupts"]);
    for s in &r.scores {
        t.push(vec![
            s.phase.clone(),
            s.input.clone(),
            s.samples.to_string(),
            num(s.mean_steps),
            s.interrupts.to_string(),
        ]);
    }
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![t],
        summary: json!({
            "recovered": r.recovered,
            "exact": r.recovered == a.secret,
            "length": r.length,
            "interrupts_total": r.interrupts_total,
            "ambiguous_phases": r.ambiguous_phases,
        }),
    })
}

fn trunc(profile: &Profile, a: &TruncArgs, seed: u64) -> Result<Outcome> {
    let env = AttackEnv::from_profile(profile)?;
    let mut cfg = match a.mode {
        TruncMode::Forced => TruncationConfig {
            mode: BiasMode::Forced { every: a.every },
            width: a.width,
            ..TruncationConfig::forced()
        },
        TruncMode::Natural => TruncationConfig::natural(a.width),
    };
    cfg.epsilon = profile.attack.truncation_epsilon;
    let r = e2e_truncation_attack(&env, &cfg, &CurveParams::secp160r1(), seed)?;
    let mut t = Table::new("ecdsa_trunc_flagged", &["signature_index", "interrupts_before_boundary", "truly_biased"]);
    for f in &r.flagged {
        t.push(vec![f.index.to_string(), f.interrupts.to_string(), (f.truly_biased as u8).to_string()]);
    }
    let mut s = serde_json::to_value(&r).map_err(|e| Error::Serde(e.to_string()))?;
    s.as_object_mut().expect("report is an object").remove("flagged");
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![t],
        summary: json!({"config": cfg, "report": s}),
    })
}

fn lzb(profile: &Profile, a: &LzbArgs, seed: u64) -> Result<Outcome> {
    let env = AttackEnv::from_profile(profile)?;
    let cfg = LzbConfig {
        signatures: a.signatures,
        epsilon: profile.attack.lbms_epsilon,
        call_gap: profile.attack.call_landing_gap,
        tsc_noise: profile.attack.tsc_noise,
        ..LzbConfig::default()
    };
    let r = lzb_statistics(&env, &cfg, seed)?;
    let mut det = Table::new(
        "lzb_detection",
        &["stage", "signatures", "biased", "flagged", "true_positives", "call_landings", "tp_rate"],
    );
    for (stage, f, tp, calls, rate) in [
        ("raw", r.flagged_raw, r.true_positives_raw, r.call_landings_raw, r.tp_rate_raw),
        ("tsc_filtered", r.flagged_kept, r.true_positives_kept, r.call_landings_kept, r.tp_rate_kept),
    ] {
        det.push(vec![
            stage.into(),
            r.signatures.to_string(),
            r.biased.to_string(),
            f.to_string(),
            tp.to_string(),
            calls.to_string(),
            num(rate),
        ]);
    }
    let demo = lzb_lattice_demo(&CurveParams::secp160r1(), a.zeros, &a.sizes, seed)?;
    let mut lat = Table::new("lzb_lattice", &["subset_size", "recovered"]);
    for row in &demo {
        lat.push(vec![row.subset_size.to_string(), (row.recovered as u8).to_string()]);
    }
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![det, lat],
        summary: json!({"config": cfg, "detection": r, "lattice": demo}),
    })
}

fn reductions(a: &ReductionArgs) -> Result<Outcome> {
    let mut t = Table::new("expected_reductions", &["flagged", "tp_rate", "subset_size", "expected_reductions"]);
    let mut rows = Vec::new();
    for &tp in &a.tp {
        // infeasible rates get an empty cell; a bad rate is still a config error
        let v = match expected_reductions(a.flagged, tp, a.subset) {
            Ok(v) => Some(v),
            Err(Error::Infeasible(_)) => None,
            Err(e) => return Err(e),
        };
        t.push(vec![
            a.flagged.to_string(),
            num(tp),
            a.subset.to_string(),
            v.map(num).unwrap_or_default(),
        ]);
        rows.push(json!({"tp_rate": tp, "expected_reductions": v}));
    }
    Ok(Outcome {
        raw: Vec::new(),
        tables: vec![t],
        summary: json!({"flagged": a.flagged, "subset_size": a.subset, "rows": rows}),
    })
}
