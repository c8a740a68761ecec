//! IPI arrival timing and the attacker's calibration procedures.

use crate::cycles::Cycles;
use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
use std::collections::VecDeque;

/// Arrival time of an IPI measured from enclave resume, before any fire delay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalDistribution {
    pub mean_offset: Cycles,
    pub std_dev: f64,
}

impl Default for ArrivalDistribution {
    fn default() -> Self {
        ArrivalDistribution {
            mean_offset: Cycles::from_int(200),
            std_dev: 100.0,
        }
    }
}

impl ArrivalDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.std_dev >= 0.0) || !self.std_dev.is_finite() {
            return Err(Error::Config(format!("arrival.std_dev must be >= 0, got {}", self.std_dev)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Pss,
    Lbms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpiPlan {
    pub fire_delay: Cycles,
    pub mode: PlanMode,
    pub lbms_lower_bound: Option<Cycles>,
}

impl IpiPlan {
    pub fn mean_arrival(&self, dist: &ArrivalDistribution) -> Cycles {
        dist.mean_offset + self.fire_delay
    }

    pub fn delayed(&self, extra: Cycles) -> IpiPlan {
        IpiPlan {
            fire_delay: self.fire_delay + extra,
            ..self.clone()
        }
    }
}

/// Draws from Normal(mean_offset + fire_delay, std_dev), resampling negative values.
pub fn sample_arrival<R: Rng + ?Sized>(dist: &ArrivalDistribution, plan: &IpiPlan, rng: &mut R) -> Cycles {
    let mean = plan.mean_arrival(dist).as_f64();
    if dist.std_dev == 0.0 {
        return Cycles::from_f64(mean.max(0.0));
    }
    let normal = Normal::new(mean, dist.std_dev).expect("validated std_dev");
    loop {
        let x = normal.sample(rng);
        if x >= 0.0 {
            return Cycles::from_f64(x);
        }
    }
}

/// Standard normal quantile.
pub fn z(p: f64) -> f64 {
    StatNormal::standard().inverse_cdf(p)
}

/// Inverse CDF of the untruncated arrival normal.
pub fn quantile(dist: &ArrivalDistribution, p: f64) -> Result<Cycles> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("quantile probability must be in (0, 1), got {p}")));
    }
    Ok(dist.mean_offset + Cycles::from_f64(dist.std_dev * z(p)))
}

fn plan_for_mean(dist: &ArrivalDistribution, mean: Cycles, mode: PlanMode, lb: Option<Cycles>) -> Result<IpiPlan> {
    let fire_delay = mean - dist.mean_offset;
    if fire_delay.is_negative() {
        return Err(Error::Calibration(format!(
            "target mean arrival {mean} precedes the IPI latency {}",
            dist.mean_offset
        )));
    }
    Ok(IpiPlan {
        fire_delay,
        mode,
        lbms_lower_bound: lb,
    })
}

/// Places the arrival mean so that a `tail_mass` share arrives after `mitigation_end`.
pub fn calibrate_pss(dist: &ArrivalDistribution, mitigation_end: Cycles, tail_mass: f64) -> Result<IpiPlan> {
    if !(tail_mass > 0.0 && tail_mass < 0.5) {
        return Err(Error::Config(format!("tail_mass must be in (0, 0.5), got {tail_mass}")));
    }
    let mean = mitigation_end - Cycles::from_f64(dist.std_dev * z(1.0 - tail_mass));
    plan_for_mean(dist, mean, PlanMode::Pss, None)
}

/// Places the arrival mean so that at most `epsilon` arrives before the short branch completes.
pub fn calibrate_lbms(
    dist: &ArrivalDistribution,
    mitigation_end: Cycles,
    short_branch_cycles: Cycles,
    epsilon: f64,
) -> Result<IpiPlan> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::Config(format!("epsilon must be in (0, 1e-3], got {epsilon}")));
    }
    let bound = mitigation_end + short_branch_cycles;
    let mean = bound + Cycles::from_f64(dist.std_dev * z(1.0 - epsilon));
    plan_for_mean(dist, mean, PlanMode::Lbms, Some(bound))
}

/// Delays the IPI by one NOP slide once the share of mitigation-classified
/// interrupts in a sliding window exceeds the calibrated expectation by 3 sigma.
#[derive(Clone, Debug)]
pub struct NopSlideAdapter {
    window: VecDeque<bool>,
    size: usize,
    threshold: f64,
    shift: Cycles,
    fired: bool,
}

impl NopSlideAdapter {
    pub fn new(size: usize, tail_mass: f64, slide: Cycles) -> Self {
        let expected = 1.0 - tail_mass;
        let sd = (tail_mass * (1.0 - tail_mass) / size as f64).sqrt();
        NopSlideAdapter {
            window: VecDeque::with_capacity(size),
            size,
            threshold: expected + 3.0 * sd,
            shift: slide,
            fired: false,
        }
    }

    /// Records one classified interrupt; returns the extra delay when the adaptation triggers.
    pub fn observe(&mut self, predicted_mitigation: bool) -> Option<Cycles> {
        if self.fired || self.size == 0 {
            return None;
        }
        if self.window.len() == self.size {
            self.window.pop_front();
        }
        self.window.push_back(predicted_mitigation);
        if self.window.len() < self.size {
            return None;
        }
        let share = self.window.iter().filter(|b| **b).count() as f64 / self.size as f64;
        if share > self.threshold {
            self.fired = true;
            Some(self.shift)
        } else {
            None
        }
    }

    pub fn triggered(&self) -> bool {
        self.fired
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn dist(sd: f64) -> ArrivalDistribution {
        ArrivalDistribution {
            mean_offset: Cycles::from_int(200),
            std_dev: sd,
        }
    }

    fn plan(delay: i64) -> IpiPlan {
        IpiPlan {
            fire_delay: Cycles::from_int(delay),
            mode: PlanMode::Pss,
            lbms_lower_bound: None,
        }
    }

    #[test]
    fn degenerate_normal_is_constant() {
        let mut rng = stream(1, 0);
        for _ in 0..10 {
            assert_eq!(sample_arrival(&dist(0.0), &plan(300), &mut rng), Cycles::from_int(500));
        }
    }

    #[test]
    fn sample_mean_within_clt_bound() {
        let mut rng = stream(2, 0);
        let d = dist(100.0);
        let p = plan(1000);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| sample_arrival(&d, &p, &mut rng).as_f64()).sum();
        let mean = sum / n as f64;
        assert!((mean - 1200.0).abs() < 4.0 * 100.0 / 1000.0, "mean {mean}");
    }

    #[test]
    fn truncation_resamples_instead_of_clamping() {
        let mut rng = stream(3, 0);
        let d = ArrivalDistribution {
            mean_offset: Cycles::from_int(-500),
            std_dev: 100.0,
        };
        let p = plan(0);
        let xs: Vec<Cycles> = (0..2000).map(|_| sample_arrival(&d, &p, &mut rng)).collect();
        assert!(xs.iter().all(|x| !x.is_negative()));
        let zeros = xs.iter().filter(|x| **x == Cycles::ZERO).count();
        assert!(zeros < 5);
    }

    #[test]
    fn quantile_examples() {
        let d = dist(100.0);
        assert_eq!(quantile(&d, 0.5).unwrap(), Cycles::from_int(200));
        let q9 = quantile(&d, 0.9).unwrap().as_f64();
        assert!((q9 - 328.155).abs() < 1e-3, "{q9}");
        let q1 = quantile(&d, 0.1).unwrap().as_f64();
        assert!(((q9 + q1) / 2.0 - 200.0).abs() < 1e-3);
        assert!(quantile(&d, 0.0).is_err());
        assert!(quantile(&d, 1.0).is_err());
    }

    #[test]
    fn pss_calibration_examples() {
        let d = dist(100.0);
        let p = calibrate_pss(&d, Cycles::from_int(2000), 0.1).unwrap();
        assert!((p.mean_arrival(&d).as_f64() - 1871.845).abs() < 1e-2);
        let p0 = calibrate_pss(&dist(0.0), Cycles::from_int(2000), 0.1).unwrap();
        assert_eq!(p0.mean_arrival(&dist(0.0)), Cycles::from_int(2000));
        assert!(matches!(
            calibrate_pss(&d, Cycles::from_int(100), 0.1),
            Err(Error::Calibration(_))
        ));
        assert!(calibrate_pss(&d, Cycles::from_int(2000), 0.5).is_err());
    }

    #[test]
    fn pss_tail_fraction_matches() {
        let d = dist(100.0);
        let end = Cycles::from_int(1840);
        let p = calibrate_pss(&d, end, 0.1).unwrap();
        let mut rng = stream(4, 0);
        let n = 100_000;
        let late = (0..n).filter(|_| sample_arrival(&d, &p, &mut rng) > end).count();
        let frac = late as f64 / n as f64;
        assert!((frac - 0.1).abs() < 0.02, "{frac}");
    }

    #[test]
    fn lbms_calibration_examples() {
        let d = dist(100.0);
        let end = Cycles::from_int(1840);
        let short = Cycles::from_int(120);
        let p = calibrate_lbms(&d, end, short, 1e-6).unwrap();
        let bound = p.lbms_lower_bound.unwrap();
        assert_eq!(bound, end + short);
        assert!((p.mean_arrival(&d) - bound).as_f64() >= 475.3);
        let p0 = calibrate_lbms(&dist(0.0), end, short, 1e-4).unwrap();
        assert_eq!(p0.mean_arrival(&dist(0.0)), bound);
        assert!(calibrate_lbms(&d, end, short, 0.01).is_err());

        let p3 = calibrate_lbms(&d, end, short, 1e-3).unwrap();
        let mut rng = stream(5, 0);
        let n = 100_000;
        let early = (0..n).filter(|_| sample_arrival(&d, &p3, &mut rng) < bound).count();
        assert!(early as f64 / n as f64 <= (1e-3f64 * 10.0).max(1e-4));
    }

    #[test]
    fn shifting_delay_shifts_quantiles() {
        let d = dist(100.0);
        let p = plan(500);
        let shifted = p.delayed(Cycles::from_int(37));
        for q in [0.01, 0.3, 0.5, 0.99] {
            let a = quantile(&d, q).unwrap() + p.fire_delay;
            let b = quantile(&d, q).unwrap() + shifted.fire_delay;
            assert_eq!(b - a, Cycles::from_int(37));
        }
    }

    #[test]
    fn adapter_triggers_once_on_excess_mitigation_share() {
        let mut a = NopSlideAdapter::new(200, 0.1, Cycles::from_int(20));
        for i in 0..199 {
            assert_eq!(a.observe(i % 10 != 0), None);
        }
        let mut b = NopSlideAdapter::new(200, 0.1, Cycles::from_int(20));
        let mut got = None;
        for _ in 0..200 {
            got = got.or(b.observe(true));
        }
        assert_eq!(got, Some(Cycles::from_int(20)));
        assert!(b.observe(true).is_none());
    }
}
