//! Finite-precision number systems and the nearest-point quantizer `q`.
//!
//! Four kinds are modelled:
//!
//! * `Exact`: the identity map on finite reals (f64 stands in for the reals).
//! * `Geometric`: the abstract `(a0, eps, T)` system whose representable set is
//!   `{0} ∪ {±a0 (1 + eps)^i : 0 ≤ i ≤ T}` with nearest-point rounding.
//! * `EmuHalf`: IEEE 754 binary16 with round-to-nearest-even; overflow gives a
//!   signed infinity.
//! * `EmuFp8Clip`: E5M2 with round-to-nearest-even, out-of-range values clipped
//!   to the largest finite magnitude (57344).
//!
//! Emulated arithmetic everywhere in the crate is "compute in f64, then round".

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest finite binary16 magnitude.
pub const HALF_MAX: f64 = 65504.0;
/// Smallest positive normal binary16 value, 2^-14.
pub const HALF_MIN_NORMAL: f64 = 6.103515625e-5;
/// Largest finite E5M2 magnitude.
pub const FP8_E5M2_MAX: f64 = 57344.0;

const MAX_GEOMETRIC_LEVELS: u32 = 1 << 20;

/// The abstract `(a0, eps, T)` precision system.
#[derive(Debug, Clone)]
pub struct GeometricSystem {
    a0: f64,
    eps: f64,
    t: u32,
    // a0 (1+eps)^i for i = 0..=T, strictly increasing.
    levels: Arc<[f64]>,
}

impl PartialEq for GeometricSystem {
    fn eq(&self, other: &Self) -> bool {
        self.a0 == other.a0 && self.eps == other.eps && self.t == other.t
    }
}

impl GeometricSystem {
    pub fn new(a0: f64, eps: f64, t: u32) -> Result<Self> {
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(Error::InvalidSystem(format!("a0 must be positive, got {a0}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidSystem(format!("eps must be positive, got {eps}")));
        }
        if t >= MAX_GEOMETRIC_LEVELS {
            return Err(Error::InvalidSystem(format!("T={t} exceeds {MAX_GEOMETRIC_LEVELS}")));
        }
        let base = 1.0 + eps;
        let mut levels = Vec::with_capacity(t as usize + 1);
        let mut prev = 0.0;
        for i in 0..=t {
            let level = a0 * base.powi(i as i32);
            if !level.is_finite() || level <= prev {
                return Err(Error::InvalidSystem(format!(
                    "level {i} of geom:{a0},{eps},{t} is not representable as a strictly increasing f64"
                )));
            }
            levels.push(level);
            prev = level;
        }
        Ok(Self { a0, eps, t, levels: levels.into() })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    /// Positive representable values in increasing order.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn round_magnitude(&self, a: f64) -> f64 {
        let levels = &self.levels;
        let first = levels[0];
        let last = levels[levels.len() - 1];
        if a < first {
            // Between 0 and a0; ties go to 0.
            return if a <= first - a { 0.0 } else { first };
        }
        if a >= last {
            return last;
        }
        let idx = levels.partition_point(|&l| l <= a) - 1;
        let lo = levels[idx];
        let hi = levels[idx + 1];
        if a - lo <= hi - a {
            lo
        } else {
            hi
        }
    }
}

/// A finite-precision number system together with its rounding map.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionSystem {
    Exact,
    Geometric(GeometricSystem),
    EmuHalf,
    EmuFp8Clip,
}

impl PrecisionSystem {
    pub fn geometric(a0: f64, eps: f64, t: u32) -> Result<Self> {
        GeometricSystem::new(a0, eps, t).map(PrecisionSystem::Geometric)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, PrecisionSystem::Exact)
    }

    /// Quantize a finite real. Non-finite input is rejected.
    ///
    /// `EmuHalf` can still return an infinity when `x` lies beyond the binary16 range.
    pub fn quantize(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite { value: x, context: format!("quantize under {self}") });
        }
        Ok(self.round(x))
    }

    pub fn quantize_complex(&self, z: Complex64) -> Result<Complex64> {
        Ok(Complex64::new(self.quantize(z.re)?, self.quantize(z.im)?))
    }

    /// Unchecked rounding used inside kernels: non-finite values pass through.
    #[inline]
    pub fn round(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return x;
        }
        match self {
            PrecisionSystem::Exact => x,
            PrecisionSystem::Geometric(g) => {
                g.round_magnitude(x.abs()).copysign(x)
            }
            PrecisionSystem::EmuHalf => round_binary16(x),
            PrecisionSystem::EmuFp8Clip => round_e5m2_clip(x),
        }
    }

    #[inline]
    pub fn round_complex(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.round(z.re), self.round(z.im))
    }

    /// Worst-case relative rounding error on the interior of the representable range.
    pub fn relative_epsilon(&self) -> Result<f64> {
        match self {
            PrecisionSystem::Exact => Err(Error::NoFiniteEpsilon),
            PrecisionSystem::Geometric(g) => Ok(g.eps / 2.0),
            PrecisionSystem::EmuHalf => Ok(2f64.powi(-11)),
            PrecisionSystem::EmuFp8Clip => Ok(2f64.powi(-3)),
        }
    }

    /// Storage width of one real component, used for byte-weighted memory reports.
    pub fn bytes_per_real(&self) -> usize {
        match self {
            PrecisionSystem::Exact | PrecisionSystem::Geometric(_) => 8,
            PrecisionSystem::EmuHalf => 2,
            PrecisionSystem::EmuFp8Clip => 1,
        }
    }

    /// Non-negative representable values up to and including the first one at or
    /// above `upper`, in increasing order. Empty for `Exact`.
    pub fn nonnegative_levels(&self, upper: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut push_until = |values: &mut dyn Iterator<Item = f64>| {
            for v in values {
                out.push(v);
                if v >= upper {
                    break;
                }
            }
        };
        match self {
            PrecisionSystem::Exact => return Vec::new(),
            PrecisionSystem::Geometric(g) => push_until(&mut g.levels.iter().copied()),
            PrecisionSystem::EmuHalf => {
                push_until(&mut (1u16..0x7C00).map(half_bits_to_f64));
            }
            PrecisionSystem::EmuFp8Clip => {
                push_until(&mut (1u8..0x7C).map(e5m2_bits_to_f64));
            }
        }
        out
    }
}

impl fmt::Display for PrecisionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionSystem::Exact => f.write_str("exact"),
            PrecisionSystem::Geometric(g) => write!(f, "geom:{},{},{}", g.a0, g.eps, g.t),
            PrecisionSystem::EmuHalf => f.write_str("half"),
            PrecisionSystem::EmuFp8Clip => f.write_str("fp8clip"),
        }
    }
}

impl FromStr for PrecisionSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let token = s.trim();
        match token {
            "exact" => return Ok(PrecisionSystem::Exact),
            "half" => return Ok(PrecisionSystem::EmuHalf),
            "fp8clip" => return Ok(PrecisionSystem::EmuFp8Clip),
            _ => {}
        }
        let Some(params) = token.strip_prefix("geom:") else {
            return Err(Error::InvalidPrecision(s.to_string()));
        };
        let parts: Vec<&str> = params.split(',').map(str::trim).collect();
        let [a0, eps, t] = parts.as_slice() else {
            return Err(Error::InvalidPrecision(s.to_string()));
        };
        let bad = || Error::InvalidPrecision(s.to_string());
        let a0: f64 = a0.parse().map_err(|_| bad())?;
        let eps: f64 = eps.parse().map_err(|_| bad())?;
        let t: u32 = t.parse().map_err(|_| bad())?;
        PrecisionSystem::geometric(a0, eps, t)
    }
}

impl Serialize for PrecisionSystem {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PrecisionSystem {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Round to the nearest binary16 value (ties to even); overflow gives ±inf.
pub fn round_binary16(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let a = x.abs();
    // 65520 is the midpoint between 65504 and 2^16; the tie goes to the even
    // neighbour 2^16, which is out of range.
    let r = if a >= 65520.0 {
        f64::INFINITY
    } else if a < HALF_MIN_NORMAL {
        round_to_quantum(a, -24)
    } else {
        round_to_quantum(a, f64_exponent(a) - 10)
    };
    r.copysign(x)
}

/// Round to the nearest E5M2 value (ties to even), clipping out-of-range magnitudes.
pub fn round_e5m2_clip(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let a = x.abs();
    let r = if a >= FP8_E5M2_MAX {
        FP8_E5M2_MAX
    } else if a < HALF_MIN_NORMAL {
        round_to_quantum(a, -16)
    } else {
        round_to_quantum(a, f64_exponent(a) - 2)
    };
    r.copysign(x)
}

#[inline]
fn pow2(e: i32) -> f64 {
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Round `a` to a multiple of `2^e`; scaling by powers of two is exact here.
#[inline]
fn round_to_quantum(a: f64, e: i32) -> f64 {
    (a * pow2(-e)).round_ties_even() * pow2(e)
}

#[inline]
fn f64_exponent(a: f64) -> i32 {
    ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023
}

/// Encode an f64 as binary16 bits after round-to-nearest-even.
pub fn f64_to_half_bits(x: f64) -> u16 {
    if x.is_nan() {
        return 0x7E00;
    }
    let sign: u16 = if x.is_sign_negative() { 0x8000 } else { 0 };
    let r = round_binary16(x).abs();
    if r.is_infinite() {
        return sign | 0x7C00;
    }
    if r < HALF_MIN_NORMAL {
        // Subnormal, or exactly 2^-14 which encodes as exponent 1 via the carry.
        return sign | (r / 2f64.powi(-24)) as u16;
    }
    let e = f64_exponent(r);
    let mantissa = (r / 2f64.powi(e - 10)) as u16 - 1024;
    sign | (((e + 15) as u16) << 10) | mantissa
}

/// Decode binary16 bits.
pub fn half_bits_to_f64(bits: u16) -> f64 {
    let sign = if bits & 0x8000 != 0 { -1.0 } else { 1.0 };
    let exp = ((bits >> 10) & 0x1f) as i32;
    let mant = (bits & 0x3ff) as f64;
    let mag = match exp {
        0 => mant * 2f64.powi(-24),
        31 if mant == 0.0 => f64::INFINITY,
        31 => f64::NAN,
        _ => (1.0 + mant / 1024.0) * 2f64.powi(exp - 15),
    };
    sign * mag
}

/// Decode E5M2 bits (1 sign, 5 exponent, 2 mantissa, bias 15).
pub fn e5m2_bits_to_f64(bits: u8) -> f64 {
    let sign = if bits & 0x80 != 0 { -1.0 } else { 1.0 };
    let exp = ((bits >> 2) & 0x1f) as i32;
    let mant = (bits & 0x3) as f64;
    let mag = match exp {
        0 => mant * 2f64.powi(-16),
        31 if mant == 0.0 => f64::INFINITY,
        31 => f64::NAN,
        _ => (1.0 + mant / 4.0) * 2f64.powi(exp - 15),
    };
    sign * mag
}

/// Running statistics of quantization error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantizeStats {
    pub count: u64,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub overflow_count: u64,
}

impl QuantizeStats {
    pub fn record(&mut self, x: f64, q: f64) {
        self.count += 1;
        if !q.is_finite() {
            self.overflow_count += 1;
            return;
        }
        let abs = (x - q).abs();
        self.max_abs_err = self.max_abs_err.max(abs);
        if x != 0.0 {
            self.max_rel_err = self.max_rel_err.max(abs / x.abs());
        }
    }

    /// Quantize `x` under `sys` and record the error.
    pub fn observe(&mut self, sys: &PrecisionSystem, x: f64) -> Result<f64> {
        let q = sys.quantize(x)?;
        self.record(x, q);
        Ok(q)
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            count: self.count + other.count,
            max_abs_err: self.max_abs_err.max(other.max_abs_err),
            max_rel_err: self.max_rel_err.max(other.max_rel_err),
            overflow_count: self.overflow_count + other.overflow_count,
        }
    }
}
