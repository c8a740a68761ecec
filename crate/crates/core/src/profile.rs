//! Named simulator profiles and their TOML schema.

use crate::cycles::Cycles;
use crate::enclave::{EnclaveParams, MitigationModel};
use crate::error::{Error, Result};
use crate::fingerprint::forest::ForestParams;
use crate::fingerprint::trace::TraceShape;
use crate::interrupt::ArrivalDistribution;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Forest,
    /// Reads the simulator's ground-truth landing; debugging and noiseless runs only.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    pub classifier: ClassifierKind,
    pub tail_mass: f64,
    /// Added to the calibrated PSS fire delay.
    pub pss_extra_delay: Cycles,
    pub max_interrupts_per_trace: u64,
    pub adapt_nop_slide: bool,
    pub adapt_window: usize,
    pub pss_samples: usize,
    pub pss_trials: usize,
    pub lbms_epsilon: f64,
    pub lbms_runs: usize,
    pub lbms_traces: usize,
    pub truncation_epsilon: f64,
    pub corpus_per_class: usize,
    pub corpus_region_length: usize,
    pub test_fraction: f64,
    /// Mean relative shortfall of the resume-to-fault TSC delta after a call landing.
    pub call_landing_gap: f64,
    pub tsc_noise: f64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            classifier: ClassifierKind::Forest,
            tail_mass: 0.1,
            pss_extra_delay: Cycles::ZERO,
            max_interrupts_per_trace: 10_000,
            adapt_nop_slide: true,
            adapt_window: 200,
            pss_samples: 40,
            pss_trials: 50,
            lbms_epsilon: 1e-3,
            lbms_runs: 10,
            lbms_traces: 1000,
            truncation_epsilon: 1e-6,
            corpus_per_class: 4099,
            corpus_region_length: 500,
            test_fraction: 0.2,
            call_landing_gap: 0.057,
            tsc_noise: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub enclave: EnclaveParams,
    pub mitigation: MitigationModel,
    pub arrival: ArrivalDistribution,
    pub trace: TraceShape,
    pub forest: ForestParams,
    pub attack: AttackParams,
}

pub const PRESETS: [&str; 3] = ["paper-like", "noiseless", "fast"];

impl Profile {
    pub fn paper_like() -> Self {
        Profile {
            name: "paper-like".into(),
            enclave: EnclaveParams::default(),
            mitigation: MitigationModel::default(),
            arrival: ArrivalDistribution::default(),
            trace: TraceShape::default(),
            forest: ForestParams::default(),
            attack: AttackParams::default(),
        }
    }

    /// Deterministic single-stepping: no arrival jitter, no NOP slide, no trace
    /// noise, uniform instruction windows, and ground-truth classification.
    pub fn noiseless() -> Self {
        let mut p = Profile::paper_like();
        p.name = "noiseless".into();
        p.enclave.slowdown = 1.0;
        p.enclave.uncached_fetch_cycles = Cycles::from_int(20);
        p.enclave.retire_slot_cycles = Cycles::ZERO;
        p.mitigation.nop_probability = 0.0;
        p.arrival.std_dev = 0.0;
        p.trace.noise_std = 0.0;
        p.trace.amplitude_jitter = 0.0;
        p.attack.classifier = ClassifierKind::Oracle;
        p.attack.pss_extra_delay = Cycles::from_int(30);
        p.attack.adapt_nop_slide = false;
        p
    }

    /// `paper-like` timing with smaller corpora and ensembles for quick runs.
    pub fn fast() -> Self {
        let mut p = Profile::paper_like();
        p.name = "fast".into();
        p.forest.trees = 30;
        p.attack.corpus_per_class = 1000;
        p.attack.pss_trials = 20;
        p.attack.lbms_runs = 2;
        p
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-like" => Ok(Self::paper_like()),
            "noiseless" => Ok(Self::noiseless()),
            "fast" => Ok(Self::fast()),
            _ => Err(Error::Config(format!(
                "unknown profile `{name}` (presets: {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Profile = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// A preset name, or a path to a TOML profile.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESETS.contains(&name_or_path) {
            return Self::preset(name_or_path);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Self::preset(name_or_path);
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.enclave.validate()?;
        self.mitigation.validate()?;
        self.arrival.validate()?;
        let a = &self.attack;
        let t = &self.trace;
        let checks: [(bool, &str); 12] = [
            (a.tail_mass > 0.0 && a.tail_mass < 0.5, "attack.tail_mass must be in (0, 0.5)"),
            (a.max_interrupts_per_trace >= 1, "attack.max_interrupts_per_trace must be >= 1"),
            (a.pss_samples >= 1, "attack.pss_samples must be >= 1"),
            (a.lbms_epsilon > 0.0 && a.lbms_epsilon <= 1e-3, "attack.lbms_epsilon must be in (0, 1e-3]"),
            (
                a.truncation_epsilon > 0.0 && a.truncation_epsilon <= 1e-3,
                "attack.truncation_epsilon must be in (0, 1e-3]",
            ),
            (a.test_fraction > 0.0 && a.test_fraction < 1.0, "attack.test_fraction must be in (0, 1)"),
            (a.call_landing_gap >= 0.0 && a.call_landing_gap < 1.0, "attack.call_landing_gap must be in [0, 1)"),
            (a.tsc_noise >= 0.0, "attack.tsc_noise must be >= 0"),
            (t.sample_period > Cycles::ZERO, "trace.sample_period must be > 0"),
            (t.noise_std >= 0.0 && t.amplitude_jitter >= 0.0, "trace noise knobs must be >= 0"),
            (self.forest.trees >= 1 && self.forest.max_depth >= 1, "forest needs >= 1 tree and depth >= 1"),
            (!a.pss_extra_delay.is_negative(), "attack.pss_extra_delay must be >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("profile serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for name in PRESETS {
            let p = Profile::preset(name).unwrap();
            p.validate().unwrap();
            let text = p.to_toml_string().unwrap();
            let back = Profile::from_toml_str(&text).unwrap();
            assert_eq!(p, back, "{name}");
            assert_eq!(p.hash(), back.hash());
        }
        assert_ne!(Profile::paper_like().hash(), Profile::fast().hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = Profile::paper_like().to_toml_string().unwrap();
        text = text.replace("[enclave]\n", "[enclave]\nturbo = true\n");
        assert!(matches!(Profile::from_toml_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let text = Profile::paper_like()
            .to_toml_string()
            .unwrap()
            .replace("nop_probability = 0.5", "nop_probability = 1.5");
        assert!(Profile::from_toml_str(&text).is_err());
        assert!(Profile::preset("nope").is_err());
    }
}
