use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Sub-cycle resolution of the fixed-point clock.
pub const TICKS_PER_CYCLE: i64 = 4096;

/// Cycle count in fixed point (1/4096 cycle), so quarter-cycle costs compose exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cycles(i64);

impl Cycles {
    pub const ZERO: Cycles = Cycles(0);
    pub const MAX: Cycles = Cycles(i64::MAX);

    pub const fn from_ticks(ticks: i64) -> Self {
        Cycles(ticks)
    }

    pub const fn from_int(cycles: i64) -> Self {
        Cycles(cycles * TICKS_PER_CYCLE)
    }

    /// Rounds to the nearest tick.
    pub fn from_f64(cycles: f64) -> Self {
        Cycles((cycles * TICKS_PER_CYCLE as f64).round() as i64)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / TICKS_PER_CYCLE as f64
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn max(self, other: Cycles) -> Cycles {
        Cycles(self.0.max(other.0))
    }

    pub fn min(self, other: Cycles) -> Cycles {
        Cycles(self.0.min(other.0))
    }

    pub fn saturating_add(self, other: Cycles) -> Cycles {
        Cycles(self.0.saturating_add(other.0))
    }
}

impl Add for Cycles {
    type Output = Cycles;
    fn add(self, rhs: Cycles) -> Cycles {
        Cycles(self.0 + rhs.0)
    }
}

impl AddAssign for Cycles {
    fn add_assign(&mut self, rhs: Cycles) {
        self.0 += rhs.0;
    }
}

impl Sub for Cycles {
    type Output = Cycles;
    fn sub(self, rhs: Cycles) -> Cycles {
        Cycles(self.0 - rhs.0)
    }
}

impl SubAssign for Cycles {
    fn sub_assign(&mut self, rhs: Cycles) {
        self.0 -= rhs.0;
    }
}

impl Neg for Cycles {
    type Output = Cycles;
    fn neg(self) -> Cycles {
        Cycles(-self.0)
    }
}

impl Mul<i64> for Cycles {
    type Output = Cycles;
    fn mul(self, rhs: i64) -> Cycles {
        Cycles(self.0 * rhs)
    }
}

impl Sum for Cycles {
    fn sum<I: Iterator<Item = Cycles>>(iter: I) -> Cycles {
        iter.fold(Cycles::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Cycles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

// Serialized as plain (possibly fractional) cycles so config files stay readable.
impl Serialize for Cycles {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Cycles {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("cycle value must be finite"));
        }
        Ok(Cycles::from_f64(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_cycles_compose_without_drift() {
        let nop = Cycles::from_f64(0.25);
        let total: Cycles = std::iter::repeat(nop).take(4000).sum();
        assert_eq!(total, Cycles::from_int(1000));
    }

    #[test]
    fn ordering_and_arithmetic() {
        let a = Cycles::from_f64(9.75);
        let b = Cycles::from_f64(0.25);
        assert_eq!(a + b, Cycles::from_int(10));
        assert!(a > b);
        assert_eq!((a - b).as_f64(), 9.5);
        assert_eq!(-(a - a), Cycles::ZERO);
    }
}
