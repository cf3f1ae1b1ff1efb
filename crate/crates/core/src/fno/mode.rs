use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::PrecisionSystem;

/// Where the layer's complex operations are quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionMode {
    Full,
    /// Forward transform, contraction and inverse transform under `sys`.
    Mixed(PrecisionSystem),
    /// Contraction under `sys`, transforms in full precision.
    ContractionOnly(PrecisionSystem),
}

impl PrecisionMode {
    pub fn mixed(sys: PrecisionSystem) -> Result<Self> {
        if sys.is_exact() {
            return Err(Error::InvalidPrecision("mixed mode needs a non-exact system".into()));
        }
        Ok(PrecisionMode::Mixed(sys))
    }

    pub fn transform_sys(&self) -> PrecisionSystem {
        match self {
            PrecisionMode::Mixed(s) => s.clone(),
            _ => PrecisionSystem::Exact,
        }
    }

    pub fn contraction_sys(&self) -> PrecisionSystem {
        match self {
            PrecisionMode::Mixed(s) | PrecisionMode::ContractionOnly(s) => s.clone(),
            PrecisionMode::Full => PrecisionSystem::Exact,
        }
    }

    pub fn phase(&self) -> Phase {
        match self {
            PrecisionMode::Full => Phase::Full,
            PrecisionMode::Mixed(_) => Phase::Mixed,
            PrecisionMode::ContractionOnly(_) => Phase::Amp,
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionMode::Full => f.write_str("full"),
            PrecisionMode::Mixed(s) => write!(f, "mixed:{s}"),
            PrecisionMode::ContractionOnly(s) => write!(f, "amp:{s}"),
        }
    }
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(PrecisionMode::Full);
        }
        let sys_of = |t: &str| -> Result<PrecisionSystem> {
            let sys: PrecisionSystem = t.parse()?;
            if sys.is_exact() {
                return Err(Error::InvalidPrecision(format!("`{s}` needs a non-exact system")));
            }
            Ok(sys)
        };
        if let Some(t) = s.strip_prefix("mixed:") {
            return Ok(PrecisionMode::Mixed(sys_of(t)?));
        }
        if let Some(t) = s.strip_prefix("amp:") {
            return Ok(PrecisionMode::ContractionOnly(sys_of(t)?));
        }
        Err(Error::InvalidPrecision(format!("unknown precision mode `{s}`")))
    }
}

impl Serialize for PrecisionMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrecisionMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Mixed,
    Amp,
    Full,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Mixed => "mixed",
            Phase::Amp => "amp",
            Phase::Full => "full",
        }
    }
}

/// Mixed, then contraction-only, then full precision, in contiguous phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionSchedule {
    pub sys: PrecisionSystem,
    pub f_mixed: f64,
    pub f_amp: f64,
    pub f_full: f64,
}

impl PrecisionSchedule {
    pub fn new(sys: PrecisionSystem, f_mixed: f64, f_amp: f64, f_full: f64) -> Result<Self> {
        if sys.is_exact() {
            return Err(Error::InvalidPrecision("schedule needs a non-exact system".into()));
        }
        let fs = [f_mixed, f_amp, f_full];
        if fs.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (fs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parse(format!("schedule fractions {fs:?} must be non-negative and sum to 1")));
        }
        Ok(Self { sys, f_mixed, f_amp, f_full })
    }

    pub fn default_for(sys: PrecisionSystem) -> Result<Self> {
        Self::new(sys, 0.25, 0.5, 0.25)
    }

    /// Last step (exclusive) of the mixed and amp phases.
    pub fn boundaries(&self, total: usize) -> (usize, usize) {
        let t = total as f64;
        let b1 = (t * self.f_mixed).round() as usize;
        let b2 = (t * (self.f_mixed + self.f_amp)).round() as usize;
        (b1.min(total), b2.clamp(b1.min(total), total))
    }

    pub fn mode_at(&self, step: usize, total: usize) -> PrecisionMode {
        let (b1, b2) = self.boundaries(total);
        if step < b1 {
            PrecisionMode::Mixed(self.sys.clone())
        } else if step < b2 {
            PrecisionMode::ContractionOnly(self.sys.clone())
        } else {
            PrecisionMode::Full
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        for t in ["full", "mixed:half", "amp:fp8clip", "mixed:geom:0.5,1,3"] {
            assert_eq!(t.parse::<PrecisionMode>().unwrap().to_string(), t);
        }
        for bad in ["mixed:exact", "amp:exact", "half", "mixed:"] {
            assert!(bad.parse::<PrecisionMode>().is_err(), "{bad}");
        }
    }

    #[test]
    fn schedule_split() {
        let s = PrecisionSchedule::default_for(PrecisionSystem::EmuHalf).unwrap();
        let phases: Vec<Phase> = (0..500).map(|i| s.mode_at(i, 500).phase()).collect();
        let count = |p| phases.iter().filter(|&&q| q == p).count();
        assert_eq!((count(Phase::Mixed), count(Phase::Amp), count(Phase::Full)), (125, 250, 125));
        assert!(phases.windows(2).all(|w| w[0] as u8 <= w[1] as u8));
        assert!(PrecisionSchedule::new(PrecisionSystem::EmuHalf, 0.5, 0.5, 0.5).is_err());
        assert!(PrecisionSchedule::default_for(PrecisionSystem::Exact).is_err());
    }
}
