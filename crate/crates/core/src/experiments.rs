//! Profile-level drivers for each experiment. The CLI and the acceptance
//! tests both go through these, so they see identical seeds and parameters.

use crate::attack::lbms::{lbms_bench, LbmsBenchRow};
use crate::attack::memcmp::{memcmp_attack, MemcmpResult};
use crate::attack::pss::{PssConfig, PssRunner};
use crate::attack::stepping::{stepping_rate_experiment, success_trials, SteppingReport, SuccessTrial};
use crate::attack::AttackEnv;
use crate::error::Result;
use crate::fingerprint::corpus::{collect_balanced, collect_online, pss_plan, stratified_split, synthesize_all, LabeledTrace};
use crate::fingerprint::forest::{train, ClassifierModel};
use crate::fingerprint::metrics::{ConfusionMatrix, EvalReport};
use crate::fingerprint::trace::InterruptClass;
use crate::fingerprint::Classifier;
use crate::profile::{ClassifierKind, Profile};
use crate::rng::derive_seed;
use crate::victims::{Filler, MemcmpVictim};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub heldout: EvalReport,
    pub train_size: usize,
    pub test_size: usize,
}

pub fn predict_all(model: &ClassifierModel, data: &[LabeledTrace]) -> Vec<InterruptClass> {
    data.par_iter().map(|t| model.predict(&t.trace.features())).collect()
}

pub fn evaluate(model: &ClassifierModel, data: &[LabeledTrace]) -> EvalReport {
    let pred = predict_all(model, data);
    ConfusionMatrix::from_pairs(data.iter().map(|t| t.label).zip(pred)).report()
}

/// The balanced labelled corpus `train_classifier` fits on.
pub fn training_corpus(profile: &Profile, filler: Filler, seed: u64) -> Result<Vec<LabeledTrace>> {
    let label = format!("corpus-{}", filler.name());
    let events = collect_balanced(profile, filler, profile.attack.corpus_per_class, derive_seed(seed, &label, 0))?;
    Ok(synthesize_all(profile, &events, derive_seed(seed, &label, 1)))
}

/// Balanced corpus over a `filler` region, stratified split, forest fit.
pub fn train_classifier(profile: &Profile, filler: Filler, seed: u64) -> Result<TrainedClassifier> {
    let label = format!("corpus-{}", filler.name());
    let data = training_corpus(profile, filler, seed)?;
    let (tr, te) = stratified_split(&data, profile.attack.test_fraction, derive_seed(seed, &label, 2));
    let x: Vec<Vec<f64>> = tr.iter().map(|t| t.trace.features()).collect();
    let y: Vec<InterruptClass> = tr.iter().map(|t| t.label).collect();
    let model = train(&x, &y, &profile.forest, derive_seed(seed, &label, 3), &profile.hash())?;
    let heldout = evaluate(&model, &te);
    Ok(TrainedClassifier {
        model,
        heldout,
        train_size: tr.len(),
        test_size: te.len(),
    })
}

/// Exits in collection order over a `filler` region, labelled by ground truth.
pub fn online_stream(profile: &Profile, filler: Filler, count: usize, seed: u64) -> Result<Vec<LabeledTrace>> {
    let label = format!("online-{}", filler.name());
    let events = collect_online(profile, filler, count, derive_seed(seed, &label, 0))?;
    Ok(synthesize_all(profile, &events, derive_seed(seed, &label, 1)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyEval {
    pub train_size: usize,
    pub heldout: EvalReport,
    pub online: EvalReport,
    /// Step precision on the nop stream with the addl-trained model.
    pub transfer_step_precision: f64,
    /// Step precision on the nop stream with a nop-trained model.
    pub retrained_step_precision: f64,
}

pub fn classify_eval(profile: &Profile, online_count: usize, seed: u64) -> Result<ClassifyEval> {
    let addl = train_classifier(profile, Filler::Addl, seed)?;
    let online = evaluate(&addl.model, &online_stream(profile, Filler::Addl, online_count, seed)?);
    let nop = train_classifier(profile, Filler::Nop, seed)?;
    let nop_stream = online_stream(profile, Filler::Nop, online_count, seed)?;
    let transfer = evaluate(&addl.model, &nop_stream);
    let retrained = evaluate(&nop.model, &nop_stream);
    Ok(ClassifyEval {
        train_size: addl.train_size,
        heldout: addl.heldout,
        online,
        transfer_step_precision: transfer.class(InterruptClass::Step).precision,
        retrained_step_precision: retrained.class(InterruptClass::Step).precision,
    })
}

/// The attacker's classifier for traces over `filler`-like code.
pub fn classifier_for(profile: &Profile, filler: Filler, seed: u64) -> Result<Classifier> {
    Ok(match profile.attack.classifier {
        ClassifierKind::Oracle => Classifier::Oracle,
        ClassifierKind::Forest => Classifier::Forest(Arc::new(train_classifier(profile, filler, seed)?.model)),
    })
}

pub fn pss_config(profile: &Profile, classifier: Classifier, samples: usize) -> PssConfig {
    PssConfig {
        samples_per_guess: samples,
        tail_mass: profile.attack.tail_mass,
        max_interrupts_per_trace: profile.attack.max_interrupts_per_trace,
        classifier,
        adapt_nop_slide: profile.attack.adapt_nop_slide,
        adapt_window: profile.attack.adapt_window,
    }
}

pub fn stepping_rate(profile: &Profile, filler: Filler, interrupts: u64, seed: u64) -> Result<SteppingReport> {
    let env = AttackEnv::from_profile(profile)?;
    let cfg = pss_config(profile, classifier_for(profile, filler, seed)?, 1);
    stepping_rate_experiment(
        &env,
        &cfg,
        pss_plan(profile)?,
        filler,
        profile.attack.corpus_region_length,
        interrupts,
        derive_seed(seed, "stepping", 0),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PssBenchRow {
    pub delta: usize,
    pub success_rate: f64,
    pub trials: Vec<SuccessTrial>,
}

/// Success rate of the two-guess attack per Δ; trials run in parallel.
pub fn pss_bench(
    profile: &Profile,
    deltas: &[usize],
    filler: Filler,
    samples: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<PssBenchRow>> {
    let env = AttackEnv::from_profile(profile)?;
    let cfg = pss_config(profile, classifier_for(profile, filler, seed)?, samples);
    let plan = pss_plan(profile)?;
    deltas
        .iter()
        .map(|&delta| {
            let trials: Vec<SuccessTrial> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let tseed = derive_seed(seed, &format!("pss-bench-{delta}"), t as u64);
                    success_trials(&env, &cfg, &plan, delta, filler, 1, tseed).map(|mut v| {
                        let mut tr = v.remove(0);
                        tr.trial = t;
                        tr
                    })
                })
                .collect::<Result<_>>()?;
            let ok = trials.iter().filter(|t| t.predicted == t.secret).count();
            Ok(PssBenchRow {
                delta,
                success_rate: ok as f64 / trials.len().max(1) as f64,
                trials,
            })
        })
        .collect()
}

pub fn lbms_table(profile: &Profile, deltas: &[usize], seed: u64) -> Result<Vec<LbmsBenchRow>> {
    let env = AttackEnv::from_profile(profile)?;
    lbms_bench(
        &env,
        deltas,
        profile.attack.lbms_epsilon,
        profile.attack.lbms_runs,
        profile.attack.lbms_traces,
        derive_seed(seed, "lbms", 0),
    )
}

/// memcmp over the mixed filler the comparison loop resembles.
pub fn memcmp(profile: &Profile, secret: &str, k: usize, seed: u64) -> Result<MemcmpResult> {
    let victim = MemcmpVictim::new(secret)?;
    let env = AttackEnv::from_profile(profile)?;
    let cfg = pss_config(profile, classifier_for(profile, Filler::Mixed, seed)?, k);
    let mut runner = PssRunner::new(&env, &cfg, pss_plan(profile)?);
    memcmp_attack(&mut runner, &victim, k, derive_seed(seed, "memcmp", 0))
}
