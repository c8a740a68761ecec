use irqcount_core::attack::lbms::{lbms_config, lbms_detect, lbms_trace};
use irqcount_core::attack::memcmp::memcmp_attack_with;
use irqcount_core::attack::pss::{PssRunner, PssTraceRecord};
use irqcount_core::attack::stepping::{stepping_rate_experiment, success_rate, success_trials};
use irqcount_core::attack::AttackEnv;
use irqcount_core::enclave::{mitigation_duration, SecretBinding};
use irqcount_core::experiments::{memcmp, pss_config, stepping_rate};
use irqcount_core::fingerprint::corpus::{collect_balanced, pss_plan};
use irqcount_core::fingerprint::trace::{mean_curve, separability_margin, synthesize_trace, TraceMeta, TRACE_LEN};
use irqcount_core::fingerprint::Classifier;
use irqcount_core::rng::{derive_seed, stream};
use irqcount_core::victims::{
    binding, make_region_victim, DeltaBranchVictim, Filler, MemcmpVictim, TruncationVictim,
};
use irqcount_core::{Cycles, InterruptClass, PreparedVictim, Profile};

fn oracle_env(p: &Profile) -> AttackEnv {
    AttackEnv::from_profile(p).unwrap()
}

#[test]
fn traces_are_deterministic_and_fixed_length() {
    let mut p = Profile::paper_like();
    p.trace.noise_std = 0.0;
    p.trace.amplitude_jitter = 0.0;
    let events = collect_balanced(&p, Filler::Addl, 20, 1).unwrap();
    let meta = TraceMeta {
        fire_delay: Cycles::ZERO,
        seed: 0,
    };
    for ev in &events {
        let a = synthesize_trace(ev, &p.mitigation, &p.trace, meta, &mut stream(1, 0));
        let b = synthesize_trace(ev, &p.mitigation, &p.trace, meta, &mut stream(2, 0));
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), TRACE_LEN);
        assert_eq!(TRACE_LEN, 120);
    }
}

#[test]
fn mitigation_and_step_curves_are_separable() {
    let p = Profile::paper_like();
    let events = collect_balanced(&p, Filler::Addl, 50, 2).unwrap();
    let mitig: Vec<_> = events.iter().filter(|e| e.landing < 0).collect();
    let steps: Vec<_> = events.iter().filter(|e| e.landing >= 1).collect();
    assert!(!mitig.is_empty() && !steps.is_empty());
    for (a, b) in mitig.iter().zip(&steps) {
        let ca = mean_curve(a, &p.mitigation, &p.trace);
        let cb = mean_curve(b, &p.mitigation, &p.trace);
        let gap = separability_margin(&ca, &cb, p.trace.noise_std);
        assert!(gap > 5.0 * p.trace.noise_std, "margin {gap}");
    }
}

fn run_traces(env: &AttackEnv, p: &Profile, classifier: Classifier, victim: &PreparedVictim, n: u64, seed: u64) -> Vec<PssTraceRecord> {
    let cfg = pss_config(p, classifier, 1);
    let mut runner = PssRunner::new(env, &cfg, pss_plan(p).unwrap());
    (0..n).map(|t| runner.trace(victim, t, seed).unwrap()).collect()
}

#[test]
fn no_ipi_before_the_boundary_counts_zero() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let cfg = pss_config(&p, Classifier::Oracle, 1);
    let plan = pss_plan(&p).unwrap().delayed(Cycles::from_int(1_000_000));
    let v = DeltaBranchVictim::new(6, 0, Filler::Nop);
    let pv = PreparedVictim::new(&v.program(), &v.binding(1), &env.machine.params).unwrap();
    let mut runner = PssRunner::new(&env, &cfg, plan);
    for t in 0..20 {
        let rec = runner.trace(&pv, t, 3).unwrap();
        assert_eq!((rec.step_count, rec.interrupts), (0, 0));
    }
}

#[test]
fn oracle_counts_order_by_branch_length() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let mean = |delta: usize| {
        let v = DeltaBranchVictim::new(delta, 0, Filler::Nop);
        let pv = PreparedVictim::new(&v.program(), &v.binding(1), &env.machine.params).unwrap();
        let recs = run_traces(&env, &p, Classifier::Oracle, &pv, 40, 4);
        recs.iter().map(|r| r.step_count as f64).sum::<f64>() / 40.0
    };
    let (m0, m6) = (mean(0), mean(6));
    assert!(m6 > m0, "delta 6 mean {m6} vs delta 0 mean {m0}");
}

#[test]
fn most_interrupts_land_in_the_mitigation() {
    let mut p = Profile::paper_like();
    p.attack.classifier = irqcount_core::profile::ClassifierKind::Oracle;
    for filler in [Filler::Nop, Filler::Addl] {
        let r = stepping_rate(&p, filler, 5000, 5).unwrap();
        let f = r.mitigation_fraction();
        assert!((0.85..=0.95).contains(&f), "{filler:?}: {f}");
    }
}

#[test]
fn zero_delta_is_a_coin_flip() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let cfg = pss_config(&p, Classifier::Oracle, 40);
    let trials = success_trials(&env, &cfg, &pss_plan(&p).unwrap(), 0, Filler::Nop, 50, 6).unwrap();
    let s = success_rate(&trials);
    assert!((s - 0.5).abs() <= 0.15, "{s}");
}

#[test]
fn noiseless_profile_single_steps_every_instruction() {
    let p = Profile::noiseless();
    let env = oracle_env(&p);
    let cfg = pss_config(&p, Classifier::Oracle, 1);
    for filler in [Filler::Nop, Filler::Addl] {
        let r = stepping_rate_experiment(&env, &cfg, pss_plan(&p).unwrap(), filler, 50, 500, 7).unwrap();
        assert_eq!(r.mitigation_landings, 0);
        assert_eq!(r.share(1), 1.0, "{filler:?}: {:?}", r.histogram);
    }
}

#[test]
fn noiseless_pss_always_wins() {
    let p = Profile::noiseless();
    let env = oracle_env(&p);
    let cfg = pss_config(&p, Classifier::Oracle, 1);
    for delta in [1, 3] {
        let trials = success_trials(&env, &cfg, &pss_plan(&p).unwrap(), delta, Filler::Nop, 20, 8).unwrap();
        assert_eq!(success_rate(&trials), 1.0);
    }
}

#[test]
fn lbms_short_branch_is_never_interrupted() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let v = DeltaBranchVictim::new(2, 0, Filler::Nop);
    let short = PreparedVictim::new(&v.program(), &v.binding(0), &env.machine.params).unwrap();
    let cfg = lbms_config(&env, short.total_cycles(env.cache_enabled), 1e-6, 1).unwrap();
    let end = mitigation_duration(env.mitigation(), false, env.cache_enabled);
    let bound = cfg.lower_bound_cycles;
    assert_eq!(bound, end + short.total_cycles(env.cache_enabled));
    assert!(cfg.ipi_plan.mean_arrival(&env.arrival).as_f64() >= bound.as_f64() + 475.3);
    let mut hits = 0;
    for t in 0..100_000u64 {
        let obs = lbms_trace(&env, &cfg, &short, t, &mut stream(derive_seed(9, "short", t), 0)).unwrap();
        hits += lbms_detect(&obs, &cfg) as u32;
    }
    assert_eq!(hits, 0);
}

#[test]
fn lbms_long_branch_detection_grows_with_delta() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let rate = |delta: usize| {
        let v = DeltaBranchVictim::new(delta, 0, Filler::Nop);
        let prog = v.program();
        let short = PreparedVictim::new(&prog, &v.binding(0), &env.machine.params).unwrap();
        let long = PreparedVictim::new(&prog, &v.binding(1), &env.machine.params).unwrap();
        let cfg = lbms_config(&env, short.total_cycles(env.cache_enabled), 1e-3, 1).unwrap();
        (0..1000u64)
            .filter(|&t| lbms_detect(&lbms_trace(&env, &cfg, &long, t, &mut stream(10 + delta as u64, t)).unwrap(), &cfg))
            .count()
    };
    let (r2, r64) = (rate(2), rate(64));
    assert!(r2 <= 150, "{r2}");
    assert!(r64 >= 995, "{r64}");
}

/// The threshold-2 detector on the truncation loop never fires for an
/// unbiased nonce at the pipeline's calibration.
#[test]
fn truncation_detector_has_no_false_positives() {
    let p = Profile::paper_like();
    let env = oracle_env(&p);
    let prog = TruncationVictim::default().program();
    let short = PreparedVictim::new(&prog, &binding(&[("biased", 0)]), &env.machine.params).unwrap();
    let long = PreparedVictim::new(&prog, &binding(&[("biased", 1)]), &env.machine.params).unwrap();
    let half = Cycles::from_ticks(short.total_cycles(env.cache_enabled).ticks() / 2);
    let cfg = lbms_config(&env, half, p.attack.truncation_epsilon, 2).unwrap();
    let mut fp = 0;
    for t in 0..100_000u64 {
        let obs = lbms_trace(&env, &cfg, &short, t, &mut stream(derive_seed(11, "fp", t), 0)).unwrap();
        fp += lbms_detect(&obs, &cfg) as u32;
    }
    assert_eq!(fp, 0);
    let tp = (0..200u64)
        .filter(|&t| lbms_detect(&lbms_trace(&env, &cfg, &long, t, &mut stream(12, t)).unwrap(), &cfg))
        .count();
    assert!(tp >= 150, "{tp}/200");
}

#[test]
fn memcmp_trivial_and_noiseless_cases() {
    let p = Profile::noiseless();
    let env = oracle_env(&p);
    let cfg = pss_config(&p, Classifier::Oracle, 1);
    let mut runner = PssRunner::new(&env, &cfg, pss_plan(&p).unwrap());
    let v = MemcmpVictim::new("A").unwrap();
    let r = memcmp_attack_with(&mut runner, &v, 1, 13, b"A").unwrap();
    assert_eq!(r.recovered, "A");

    let r = memcmp(&p, "SECRET", 1, 14).unwrap();
    assert_eq!(r.recovered, "SECRET");
    assert!(r.ambiguous_phases.is_empty());
    assert!(r.interrupts_total < 3_493_950 / 100, "{}", r.interrupts_total);
}

/// Every IPI single-steps; the last instruction retires in the same exit as
/// the closing fault, so one fewer step is counted than the region holds.
#[test]
fn region_victim_is_single_stepped_under_the_noiseless_profile() {
    let p = Profile::noiseless();
    let env = oracle_env(&p);
    let pv = PreparedVictim::new(&make_region_victim(Filler::Mixed, 37), &SecretBinding::new(), &env.machine.params).unwrap();
    let cfg = pss_config(&p, Classifier::Oracle, 1);
    let mut runner = PssRunner::new(&env, &cfg, pss_plan(&p).unwrap());
    for t in 0..3 {
        let mut landings = Vec::new();
        let r = runner.trace_with(&pv, t, 15, |ev, _| landings.push(ev.landing)).unwrap();
        assert!(landings.iter().all(|&l| l == 1), "{landings:?}");
        assert_eq!(r.step_count, 36);
        assert_eq!(r.predicted_mitigation, 0);
    }
    assert_eq!(InterruptClass::from_landing(-1), InterruptClass::Mitigation);
}

#[test]
fn nop_slide_landings_are_labelled_mitigation() {
    let p = Profile::paper_like();
    let r = stepping_rate(&p, Filler::Addl, 20_000, 16).unwrap();
    assert!(r.slide_landings > 200, "{}", r.slide_landings);
    assert!(r.slide_mitigation_rate() >= 0.95, "{}", r.slide_mitigation_rate());
    let eval = irqcount_core::experiments::classify_eval(&p, 20_000, 16).unwrap();
    let m = eval.online.class(InterruptClass::Mitigation);
    assert!(m.precision >= 0.95, "{m:?}");
}
