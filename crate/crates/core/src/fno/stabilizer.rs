use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HARD_CLIP: f64 = 5.0;

/// Bounded elementwise map applied before each forward transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilizerKind {
    None,
    Tanh,
    HardClip(f64),
    TwoSigmaClip,
}

impl StabilizerKind {
    pub fn hard_clip(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Parse(format!("clip bound must be positive and finite, got {c}")));
        }
        Ok(StabilizerKind::HardClip(c))
    }
}

fn mean_sigma(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Apply `kind` to one field in place. Two-sigma bounds use the population deviation.
pub fn stabilize_field(x: &mut [f64], kind: StabilizerKind) {
    match kind {
        StabilizerKind::None => {}
        StabilizerKind::Tanh => x.iter_mut().for_each(|v| *v = v.tanh()),
        StabilizerKind::HardClip(c) => x.iter_mut().for_each(|v| *v = v.clamp(-c, c)),
        StabilizerKind::TwoSigmaClip => {
            if x.is_empty() {
                return;
            }
            let (mean, sigma) = mean_sigma(x);
            let (lo, hi) = (mean - 2.0 * sigma, mean + 2.0 * sigma);
            if lo.is_nan() || hi.is_nan() {
                x.iter_mut().for_each(|v| *v = f64::NAN);
                return;
            }
            x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        }
    }
}

/// Gradient through [`stabilize_field`]: returns `∂L/∂x` given the input `x`
/// and `g = ∂L/∂y`.
pub fn stabilize_backward(x: &[f64], g: &[f64], kind: StabilizerKind) -> Vec<f64> {
    match kind {
        StabilizerKind::None => g.to_vec(),
        StabilizerKind::Tanh => x
            .iter()
            .zip(g)
            .map(|(v, g)| {
                let t = v.tanh();
                g * (1.0 - t * t)
            })
            .collect(),
        StabilizerKind::HardClip(c) => x.iter().zip(g).map(|(v, g)| if v.abs() <= c { *g } else { 0.0 }).collect(),
        StabilizerKind::TwoSigmaClip => two_sigma_backward(x, g),
    }
}

// Clipped outputs equal mean ± 2σ, which depend on every input:
// ∂mean/∂x_i = 1/n, ∂σ/∂x_i = (x_i − mean) / (nσ).
fn two_sigma_backward(x: &[f64], g: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let (mean, sigma) = mean_sigma(x);
    let (lo, hi) = (mean - 2.0 * sigma, mean + 2.0 * sigma);
    let mut direct = vec![0.0; x.len()];
    let (mut g_lo, mut g_hi) = (0.0, 0.0);
    for (k, (&v, &gv)) in x.iter().zip(g).enumerate() {
        if v < lo {
            g_lo += gv;
        } else if v > hi {
            g_hi += gv;
        } else {
            direct[k] = gv;
        }
    }
    if g_lo == 0.0 && g_hi == 0.0 {
        return direct;
    }
    x.iter()
        .zip(direct)
        .map(|(&v, d)| {
            let dsigma = if sigma > 0.0 { (v - mean) / (n * sigma) } else { 0.0 };
            d + g_lo * (1.0 / n - 2.0 * dsigma) + g_hi * (1.0 / n + 2.0 * dsigma)
        })
        .collect()
}

impl fmt::Display for StabilizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StabilizerKind::None => f.write_str("none"),
            StabilizerKind::Tanh => f.write_str("tanh"),
            StabilizerKind::HardClip(c) => write!(f, "clip:{c}"),
            StabilizerKind::TwoSigmaClip => f.write_str("twosigma"),
        }
    }
}

impl FromStr for StabilizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(StabilizerKind::None),
            "tanh" => Ok(StabilizerKind::Tanh),
            "clip" => Ok(StabilizerKind::HardClip(DEFAULT_HARD_CLIP)),
            "twosigma" => Ok(StabilizerKind::TwoSigmaClip),
            other => {
                let c = other
                    .strip_prefix("clip:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown stabilizer `{other}`")))?;
                StabilizerKind::hard_clip(c)
            }
        }
    }
}

impl Serialize for StabilizerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StabilizerKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(x: &[f64], k: StabilizerKind) -> Vec<f64> {
        let mut y = x.to_vec();
        stabilize_field(&mut y, k);
        y
    }

    #[test]
    fn examples() {
        assert_eq!(apply(&[0.0], StabilizerKind::Tanh), vec![0.0]);
        let y = apply(&[1e4], StabilizerKind::Tanh)[0];
        assert!(y <= 1.0 && y > 0.999);
        let x = [0.0, 0.0, 0.0, 100.0];
        assert_eq!(apply(&x, StabilizerKind::TwoSigmaClip), x.to_vec());
        assert_eq!(apply(&[-7.0, 2.0, 9.0], StabilizerKind::HardClip(5.0)), vec![-5.0, 2.0, 5.0]);
        assert_eq!(apply(&[3.0, -1.0], StabilizerKind::None), vec![3.0, -1.0]);
    }

    #[test]
    fn two_sigma_clips_outlier() {
        let mut x = vec![0.0; 20];
        x[0] = 100.0;
        let y = apply(&x, StabilizerKind::TwoSigmaClip);
        let (mean, sigma) = mean_sigma(&x);
        assert!((y[0] - (mean + 2.0 * sigma)).abs() < 1e-12);
        assert_eq!(&y[1..], &x[1..]);
    }

    fn fd_check(x: &[f64], g: &[f64], kind: StabilizerKind) {
        let analytic = stabilize_backward(x, g, kind);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let lp: f64 = apply(&xp, kind).iter().zip(g).map(|(a, b)| a * b).sum();
            let lm: f64 = apply(&xm, kind).iter().zip(g).map(|(a, b)| a * b).sum();
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{kind} i={i}: {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut x: Vec<f64> = (0..24).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.37).collect();
        x[3] = 40.0;
        x[17] = -33.0;
        let g: Vec<f64> = (0..24).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.1).collect();
        for kind in [StabilizerKind::None, StabilizerKind::Tanh, StabilizerKind::HardClip(2.0), StabilizerKind::TwoSigmaClip] {
            fd_check(&x, &g, kind);
        }
    }

    #[test]
    fn tokens() {
        for k in [StabilizerKind::None, StabilizerKind::Tanh, StabilizerKind::HardClip(2.5), StabilizerKind::TwoSigmaClip] {
            assert_eq!(k.to_string().parse::<StabilizerKind>().unwrap(), k);
        }
        assert_eq!("clip".parse::<StabilizerKind>().unwrap(), StabilizerKind::HardClip(5.0));
        for bad in ["clip:0", "clip:-1", "clip:inf", "sigmoid"] {
            assert!(bad.parse::<StabilizerKind>().is_err(), "{bad}");
        }
    }
}
