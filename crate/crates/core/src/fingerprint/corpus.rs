//! Labeled trace corpora gathered from debug runs over a straight-line region.

use crate::enclave::{AexCause, AexEvent, EnclaveState, Machine, PreparedVictim};
use crate::error::{Error, Result};
use crate::fingerprint::trace::{synthesize_trace, CounterTrace, InterruptClass, TraceMeta, TRACE_LEN};
use crate::interrupt::{calibrate_pss, sample_arrival, IpiPlan};
use crate::profile::Profile;
use crate::rng::{derive_seed, stream};
use crate::victims::{make_region_victim, Filler};
use crate::enclave::{mitigation_duration, SecretBinding};
use rand::seq::SliceRandom;
use std::io::{Read, Write};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrace {
    pub trace: CounterTrace,
    pub label: InterruptClass,
}

/// Calibrated PSS plan for a profile (r = 0 mitigation end).
pub fn pss_plan(profile: &Profile) -> Result<IpiPlan> {
    let end = mitigation_duration(&profile.mitigation, false, profile.enclave.cache_enabled);
    Ok(calibrate_pss(&profile.arrival, end, profile.attack.tail_mass)?.delayed(profile.attack.pss_extra_delay))
}

fn region(profile: &Profile, filler: Filler) -> Result<(Machine, PreparedVictim)> {
    let machine = Machine::new(profile.enclave.clone(), profile.mitigation.clone())?;
    let program = make_region_victim(filler, profile.attack.corpus_region_length);
    let victim = PreparedVictim::new(&program, &SecretBinding::new(), &profile.enclave)?;
    Ok((machine, victim))
}

/// Walks PSS traces over the region and passes every IPI exit to `keep`
/// until it returns false.
fn walk(profile: &Profile, filler: Filler, seed: u64, mut keep: impl FnMut(AexEvent) -> bool) -> Result<()> {
    let (machine, victim) = region(profile, filler)?;
    let plan = pss_plan(profile)?;
    let cap = profile.attack.max_interrupts_per_trace;
    for trace_id in 0u64.. {
        let mut rng = stream(seed, trace_id);
        let mut st = EnclaveState::new(trace_id, profile.enclave.cache_enabled);
        let mut fired = 0u64;
        loop {
            let at = sample_arrival(&profile.arrival, &plan, &mut rng);
            let (next, ev) = machine.resume_and_run(&st, &victim, Some(at), &mut rng)?;
            if ev.cause == AexCause::PageFault {
                break;
            }
            fired += 1;
            if !keep(ev) {
                return Ok(());
            }
            if fired >= cap {
                break;
            }
            st = next;
        }
        if trace_id > 1_000_000 {
            return Err(Error::Inconclusive("corpus collection did not converge".into()));
        }
    }
    Ok(())
}

/// First `per_class` exits of each class, in collection order.
pub fn collect_balanced(profile: &Profile, filler: Filler, per_class: usize, seed: u64) -> Result<Vec<AexEvent>> {
    let mut counts = [0usize; 3];
    let mut out = Vec::with_capacity(3 * per_class);
    walk(profile, filler, seed, |ev| {
        let c = InterruptClass::from_landing(ev.landing).index();
        if counts[c] < per_class {
            counts[c] += 1;
            out.push(ev);
        }
        counts.iter().any(|&n| n < per_class)
    })?;
    Ok(out)
}

/// Every exit in order, as an attacker would see them online.
pub fn collect_online(profile: &Profile, filler: Filler, count: usize, seed: u64) -> Result<Vec<AexEvent>> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    walk(profile, filler, seed, |ev| {
        out.push(ev);
        out.len() < count
    })?;
    Ok(out)
}

pub fn synthesize_all(profile: &Profile, events: &[AexEvent], seed: u64) -> Vec<LabeledTrace> {
    let plan = pss_plan(profile).ok();
    events
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            let s = derive_seed(seed, "trace", i as u64);
            let mut rng = stream(s, 0);
            let meta = TraceMeta {
                fire_delay: plan.as_ref().map(|p| p.fire_delay).unwrap_or_default(),
                seed: s,
            };
            LabeledTrace {
                trace: synthesize_trace(ev, &profile.mitigation, &profile.trace, meta, &mut rng),
                label: InterruptClass::from_landing(ev.landing),
            }
        })
        .collect()
}

/// Shuffled split; the first part gets `1 - test_fraction` of each class.
pub fn stratified_split(data: &[LabeledTrace], test_fraction: f64, seed: u64) -> (Vec<LabeledTrace>, Vec<LabeledTrace>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in InterruptClass::ALL {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == c).collect();
        idx.shuffle(&mut stream(seed, c.index() as u64));
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        for (k, i) in idx.into_iter().enumerate() {
            if k < n_test {
                test.push(data[i].clone());
            } else {
                train.push(data[i].clone());
            }
        }
    }
    (train, test)
}

pub fn write_csv<W: Write>(w: W, data: &[LabeledTrace]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..TRACE_LEN).map(|i| format!("s{i:03}_idle_cycles")).collect();
    header.push("label".into());
    wr.write_record(&header).map_err(csv_err)?;
    for d in data {
        let mut row: Vec<String> = d.trace.samples.iter().map(|v| format!("{v:.6}")).collect();
        row.push(d.label.name().into());
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<LabeledTrace>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != TRACE_LEN + 1 {
            return Err(Error::Serde(format!("expected {} columns, got {}", TRACE_LEN + 1, rec.len())));
        }
        let samples = (0..TRACE_LEN)
            .map(|i| rec[i].parse::<f64>().map_err(|e| Error::Serde(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let label = InterruptClass::parse(&rec[TRACE_LEN])
            .ok_or_else(|| Error::Serde(format!("unknown label {}", &rec[TRACE_LEN])))?;
        out.push(LabeledTrace {
            trace: CounterTrace {
                samples,
                meta: TraceMeta {
                    fire_delay: Default::default(),
                    seed: 0,
                },
            },
            label,
        });
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Serde(e.to_string())
}
