//! Synthetic idle-cycle counter traces.
//!
//! A sibling thread samples "cycles with no uops executed" at a fixed period
//! while the enclave resumes. Each activity has its own idle level; the trace
//! therefore records where in the mitigation the exit happened, whether the
//! mitigation handed control to the victim, and whether a victim instruction
//! retired before the exit.

use crate::cycles::Cycles;
use crate::enclave::{AexEvent, MitigationModel, MitigationPhase, SegmentKind, VictimActivity};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const TRACE_LEN: usize = 120;
pub const FEATURE_LEN: usize = 2 * TRACE_LEN - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterruptClass {
    Mitigation = 0,
    ZeroStep = 1,
    Step = 2,
}

impl InterruptClass {
    pub const ALL: [InterruptClass; 3] = [InterruptClass::Mitigation, InterruptClass::ZeroStep, InterruptClass::Step];

    pub fn from_landing(n: i64) -> Self {
        match n {
            n if n < 0 => InterruptClass::Mitigation,
            0 => InterruptClass::ZeroStep,
            _ => InterruptClass::Step,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            InterruptClass::Mitigation => "mitigation",
            InterruptClass::ZeroStep => "zero_step",
            InterruptClass::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Idle-count levels are per sample period; the generator integrates them over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceShape {
    pub sample_period: Cycles,
    pub trace_start: Cycles,
    pub noise_std: f64,
    pub amplitude_jitter: f64,
    pub level_restore: f64,
    pub level_pte_check: f64,
    pub level_warmup_start: f64,
    pub level_warmup_end: f64,
    pub level_nop_slide: f64,
    pub level_victim_memory: f64,
    pub level_victim_compute: f64,
    pub level_victim_nop: f64,
    pub level_post_aex: f64,
    pub exit_spike: f64,
    pub retire_dip: f64,
}

impl Default for TraceShape {
    fn default() -> Self {
        TraceShape {
            sample_period: Cycles::from_int(18),
            trace_start: Cycles::ZERO,
            noise_std: 1.0,
            amplitude_jitter: 0.03,
            level_restore: 6.0,
            level_pte_check: 11.0,
            level_warmup_start: 9.0,
            level_warmup_end: 14.0,
            level_nop_slide: 3.0,
            level_victim_memory: 16.0,
            level_victim_compute: 5.0,
            level_victim_nop: 3.0,
            level_post_aex: 8.5,
            exit_spike: 10.0,
            retire_dip: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub fire_delay: Cycles,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterTrace {
    pub samples: Vec<f64>,
    pub meta: TraceMeta,
}

impl CounterTrace {
    /// Raw samples followed by first differences.
    pub fn features(&self) -> Vec<f64> {
        features_of(&self.samples)
    }
}

pub fn features_of(samples: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(2 * samples.len().max(1) - 1);
    f.extend_from_slice(samples);
    f.extend(samples.windows(2).map(|w| w[1] - w[0]));
    f
}

impl TraceShape {
    fn level(&self, kind: SegmentKind) -> f64 {
        match kind {
            SegmentKind::Mitigation(MitigationPhase::Restore) => self.level_restore,
            SegmentKind::Mitigation(MitigationPhase::PteCheck) => self.level_pte_check,
            SegmentKind::Mitigation(MitigationPhase::Warmup) => self.level_warmup_start,
            SegmentKind::Mitigation(MitigationPhase::NopSlide) => self.level_nop_slide,
            SegmentKind::Victim(VictimActivity::Memory) => self.level_victim_memory,
            SegmentKind::Victim(VictimActivity::Compute) => self.level_victim_compute,
            SegmentKind::Victim(VictimActivity::Nop) => self.level_victim_nop,
        }
    }
}

struct Grid {
    start: f64,
    period: f64,
}

impl Grid {
    fn index(&self, t: f64) -> Option<usize> {
        let i = ((t - self.start) / self.period).floor();
        (i >= 0.0 && (i as usize) < TRACE_LEN).then_some(i as usize)
    }

    /// Adds the integral of a linear rate over [s, e) to the samples it overlaps.
    fn add_linear(&self, out: &mut [f64], s: f64, e: f64, rate_at: impl Fn(f64) -> f64) {
        if e <= s {
            return;
        }
        let first = (((s - self.start) / self.period).floor().max(0.0)) as usize;
        let mut i = first;
        while i < TRACE_LEN {
            let a = self.start + i as f64 * self.period;
            let b = a + self.period;
            if a >= e {
                break;
            }
            let x = s.max(a);
            let y = e.min(b);
            if y > x {
                out[i] += 0.5 * (rate_at(x) + rate_at(y)) * (y - x);
            }
            i += 1;
        }
    }
}

/// Noise-free expected trace for an exit event.
pub fn mean_curve(event: &AexEvent, m: &MitigationModel, shape: &TraceShape) -> Vec<f64> {
    let mut out = vec![0.0; TRACE_LEN];
    let p = shape.sample_period.as_f64();
    let grid = Grid {
        start: shape.trace_start.as_f64(),
        period: p,
    };
    let warm_len = (m.warmup_iteration_cost(event.cache_enabled) * m.warmup_iterations as i64)
        .as_f64()
        .max(1e-9);
    for seg in &event.timeline {
        let (s, e) = (seg.start.as_f64(), seg.end.as_f64());
        match seg.kind {
            SegmentKind::Mitigation(MitigationPhase::Warmup) => {
                let slope = (shape.level_warmup_end - shape.level_warmup_start) / warm_len;
                let l0 = shape.level_warmup_start;
                grid.add_linear(&mut out, s, e, |t| (l0 + slope * (t - s).min(warm_len)) / p);
            }
            kind => {
                let l = shape.level(kind) / p;
                grid.add_linear(&mut out, s, e, |_| l);
            }
        }
        if seg.retired {
            if let Some(i) = grid.index(e) {
                out[i] -= shape.retire_dip;
            }
        }
    }
    let exit = event.since_resume.as_f64();
    let post = shape.level_post_aex / p;
    grid.add_linear(&mut out, exit, grid.start + TRACE_LEN as f64 * p, |_| post);
    if event.landing >= 0 {
        if let Some(i) = grid.index(event.mitigation_end.as_f64()) {
            out[i] += shape.exit_spike;
        }
    }
    out
}

pub fn synthesize_trace<R: Rng + ?Sized>(
    event: &AexEvent,
    m: &MitigationModel,
    shape: &TraceShape,
    meta: TraceMeta,
    rng: &mut R,
) -> CounterTrace {
    let mut samples = mean_curve(event, m, shape);
    let gain = if shape.amplitude_jitter > 0.0 {
        let g: f64 = StandardNormal.sample(rng);
        1.0 + shape.amplitude_jitter * g
    } else {
        1.0
    };
    for v in samples.iter_mut() {
        let noise: f64 = if shape.noise_std > 0.0 {
            let g: f64 = StandardNormal.sample(rng);
            shape.noise_std * g
        } else {
            0.0
        };
        *v = (*v * gain + noise).max(0.0);
    }
    CounterTrace { samples, meta }
}

/// E[max(0, mu + N(0, sigma^2))].
pub fn clipped_mean(mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.max(0.0);
    }
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let n = Normal::standard();
    let a = mu / sigma;
    mu * n.cdf(a) + sigma * n.pdf(a)
}

/// Largest per-sample gap between the expected observed (clipped) curves.
pub fn separability_margin(a: &[f64], b: &[f64], noise_std: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (clipped_mean(*x, noise_std) - clipped_mean(*y, noise_std)).abs())
        .fold(0.0, f64::max)
}
