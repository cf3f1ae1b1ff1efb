//! Fourier basis, normalized forward/inverse transforms under a precision
//! system, and low-frequency mode truncation.
//!
//! Conventions: the forward transform uses `φ_ω(x) = exp(+2πi⟨ω, x⟩)` and carries
//! the cell volume `1/n`; the inverse uses the conjugate basis and no factor, so
//! `idft(dft(v)) = v` for real `v`. Coefficients are stored for every index in
//! `{0, …, m-1}^d` (row-major), read as signed frequencies.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::precision::PrecisionSystem;

const PAR_THRESHOLD: usize = 1 << 12;

/// Frequency multi-index `ω ∈ ℤ^d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FreqIndex(pub Vec<i64>);

impl FreqIndex {
    pub fn zero(d: usize) -> Self {
        FreqIndex(vec![0; d])
    }

    /// `(w, …, w)` in `d` dimensions.
    pub fn diagonal(d: usize, w: i64) -> Self {
        FreqIndex(vec![w; d])
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&w| (w * w) as f64).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|w| w.abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    /// Signed frequency of storage slot `j`: index `i` maps to `i` below `m/2`
    /// and to `i - m` from `m/2` upward.
    pub fn from_flat(grid: &Grid, j: usize) -> Self {
        let m = grid.m() as i64;
        FreqIndex(
            grid.multi_index(j)
                .into_iter()
                .map(|i| {
                    let i = i as i64;
                    if 2 * i < m {
                        i
                    } else {
                        i - m
                    }
                })
                .collect(),
        )
    }

    pub fn to_flat(&self, grid: &Grid) -> usize {
        let m = grid.m() as i64;
        self.0.iter().fold(0usize, |acc, &w| acc * grid.m() + w.rem_euclid(m) as usize)
    }
}

/// `exp(2πi t / m)`, exact at quarter turns.
pub fn unit_root(t: i64, m: usize) -> Complex64 {
    let m_i = m as i64;
    let t = t.rem_euclid(m_i);
    if (4 * t) % m_i == 0 {
        return match 4 * t / m_i {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
    }
    if 2 * t > m_i {
        return unit_root(m_i - t, m).conj();
    }
    let (s, c) = (2.0 * PI * t as f64 / m as f64).sin_cos();
    Complex64::new(c, s)
}

/// `exp(2πi⟨ω, x⟩)` at an arbitrary point.
pub fn basis_eval(omega: &FreqIndex, x: &[f64]) -> Complex64 {
    let phase: f64 = omega.0.iter().zip(x).map(|(&w, &xk)| w as f64 * xk).sum();
    // reduce to [0, 1) turns before scaling to keep |result| = 1 accurate
    let turns = phase - phase.floor();
    let (s, c) = (2.0 * PI * turns).sin_cos();
    Complex64::new(c, s)
}

/// Per-anchor phase numerators `⟨ω, i⟩ mod m`.
fn phase_table(grid: &Grid, omega: &FreqIndex) -> Vec<i64> {
    let m = grid.m() as i64;
    let mut out = Vec::with_capacity(grid.n());
    let mut idx = vec![0usize; grid.d()];
    for _ in 0..grid.n() {
        let t = idx.iter().zip(&omega.0).map(|(&i, &w)| (i as i64) * w).sum::<i64>();
        out.push(t.rem_euclid(m));
        for k in (0..grid.d()).rev() {
            idx[k] += 1;
            if idx[k] < grid.m() {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

fn check_omega(grid: &Grid, omega: &FreqIndex) -> Result<()> {
    if omega.d() != grid.d() {
        return Err(Error::ShapeMismatch(format!(
            "frequency {:?} has {} components on a d={} grid",
            omega.0,
            omega.d(),
            grid.d()
        )));
    }
    Ok(())
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFinite { value, context: "transform input".into() }),
        None => Ok(()),
    }
}

/// One normalized forward coefficient `Σ_j v(ξ_j) φ_ω(ξ_j) / n`, with every
/// factor, product and partial sum rounded by `sys`. Terms are scaled by `1/n`
/// before accumulation and summed in anchor order.
pub fn dft_coeff(field: &ScalarField, omega: &FreqIndex, sys: &PrecisionSystem) -> Result<Complex64> {
    let grid = field.grid();
    check_omega(grid, omega)?;
    check_finite(field.values())?;
    forward_sum(grid, field.values(), sys, &root_table(grid.m(), sys), &phase_table(grid, omega))
        .ok_or_else(|| Error::TransformOverflow { omega: omega.0.clone() })
}

fn forward_sum(grid: &Grid, values: &[f64], sys: &PrecisionSystem, roots: &[Complex64], phases: &[i64]) -> Option<Complex64> {
    let scale = sys.round(1.0 / grid.n() as f64);
    let mut acc = Complex64::new(0.0, 0.0);
    for (&v, &t) in values.iter().zip(phases) {
        let vq = sys.round(v);
        let phi = roots[t as usize];
        let prod = Complex64::new(sys.round(vq * phi.re), sys.round(vq * phi.im));
        let term = Complex64::new(sys.round(prod.re * scale), sys.round(prod.im * scale));
        acc = Complex64::new(sys.round(acc.re + term.re), sys.round(acc.im + term.im));
    }
    (acc.re.is_finite() && acc.im.is_finite()).then_some(acc)
}

/// `q(e^{2πi t/m})` for `t` in `0..m`.
fn root_table(m: usize, sys: &PrecisionSystem) -> Vec<Complex64> {
    (0..m).map(|t| sys.round_complex(unit_root(t as i64, m))).collect()
}

/// Forward coefficients at a chosen list of frequencies.
pub fn dft_modes(field: &ScalarField, modes: &[FreqIndex], sys: &PrecisionSystem) -> Result<Vec<Complex64>> {
    dft_modes_values(field.grid(), field.values(), modes, sys)
}

/// [`dft_modes`] on a raw value slice laid out on `grid`.
pub fn dft_modes_values(
    grid: &Grid,
    values: &[f64],
    modes: &[FreqIndex],
    sys: &PrecisionSystem,
) -> Result<Vec<Complex64>> {
    if values.len() != grid.n() {
        return Err(Error::ShapeMismatch(format!("{} values on {} cells", values.len(), grid.n())));
    }
    check_finite(values)?;
    let roots = root_table(grid.m(), sys);
    let one = |omega: &FreqIndex| -> Result<Complex64> {
        check_omega(grid, omega)?;
        forward_sum(grid, values, sys, &roots, &phase_table(grid, omega))
            .ok_or_else(|| Error::TransformOverflow { omega: omega.0.clone() })
    };
    if modes.len() * grid.n() >= PAR_THRESHOLD * 16 {
        modes.par_iter().map(one).collect()
    } else {
        modes.iter().map(one).collect()
    }
}

/// Full normalized forward transform under `sys`.
pub fn dft(field: &ScalarField, sys: &PrecisionSystem) -> Result<Spectrum> {
    let grid = *field.grid();
    let modes: Vec<FreqIndex> = (0..grid.n()).map(|j| FreqIndex::from_flat(&grid, j)).collect();
    let coeffs = dft_modes(field, &modes, sys)?;
    Ok(Spectrum { grid, coeffs, precision: sys.clone() })
}

/// Real part of `Σ_ω c_ω exp(-2πi⟨ω, x⟩)` at every anchor, summing only the
/// listed modes (all other coefficients are taken as zero).
pub fn idft_modes(
    grid: &Grid,
    modes: &[FreqIndex],
    coeffs: &[Complex64],
    sys: &PrecisionSystem,
) -> Result<Vec<f64>> {
    if modes.len() != coeffs.len() {
        return Err(Error::ShapeMismatch(format!("{} modes, {} coefficients", modes.len(), coeffs.len())));
    }
    for c in coeffs {
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite { value: c.re + c.im, context: "inverse transform input".into() });
        }
    }
    for omega in modes {
        check_omega(grid, omega)?;
    }
    let roots = root_table(grid.m(), sys);
    let tables: Vec<Vec<i64>> = modes.iter().map(|w| phase_table(grid, w)).collect();
    let cq: Vec<Complex64> = coeffs.iter().map(|c| sys.round_complex(*c)).collect();
    let point = |j: usize| -> Result<f64> {
        let mut acc = 0.0;
        for (c, table) in cq.iter().zip(&tables) {
            let phi = roots[table[j] as usize];
            // Re(c · conj(φ)) = c.re cos + c.im sin
            let term = sys.round(sys.round(c.re * phi.re) + sys.round(c.im * phi.im));
            acc = sys.round(acc + term);
        }
        if acc.is_finite() {
            Ok(acc)
        } else {
            Err(Error::InverseOverflow { index: j })
        }
    };
    if modes.len() * grid.n() >= PAR_THRESHOLD * 16 {
        (0..grid.n()).into_par_iter().map(point).collect()
    } else {
        (0..grid.n()).map(point).collect()
    }
}

/// Inverse transform back to a real field.
pub fn idft(spec: &Spectrum, sys: &PrecisionSystem) -> Result<ScalarField> {
    let grid = spec.grid;
    let modes: Vec<FreqIndex> = (0..grid.n()).map(|j| FreqIndex::from_flat(&grid, j)).collect();
    let values = idft_modes(&grid, &modes, &spec.coeffs, sys)?;
    ScalarField::new(grid, values)
}

/// Set of kept frequencies. The zero frequency is always kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMask {
    grid: Grid,
    keep: Vec<bool>,
}

impl ModeMask {
    pub fn all(grid: &Grid) -> Self {
        Self { grid: *grid, keep: vec![true; grid.n()] }
    }

    /// `{ω : max_k |ω_k| < cutoff}`.
    pub fn low_pass(grid: &Grid, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidMask("cutoff must be at least 1 so the zero mode is kept".into()));
        }
        let keep = (0..grid.n())
            .map(|j| FreqIndex::from_flat(grid, j).max_abs() < cutoff as i64)
            .collect();
        Ok(Self { grid: *grid, keep })
    }

    pub fn from_modes(grid: &Grid, modes: &[FreqIndex]) -> Result<Self> {
        let mut keep = vec![false; grid.n()];
        for w in modes {
            check_omega(grid, w)?;
            keep[w.to_flat(grid)] = true;
        }
        if !keep[0] {
            return Err(Error::InvalidMask("the zero frequency must be kept".into()));
        }
        Ok(Self { grid: *grid, keep })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, omega: &FreqIndex) -> bool {
        omega.d() == self.grid.d() && self.keep[omega.to_flat(&self.grid)]
    }

    pub fn len(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Kept frequencies in storage order.
    pub fn kept_modes(&self) -> Vec<FreqIndex> {
        self.keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(j, _)| FreqIndex::from_flat(&self.grid, j))
            .collect()
    }
}

/// Coefficients over the full index set of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
    pub precision: PrecisionSystem,
}

impl Spectrum {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.n() {
            return Err(Error::ShapeMismatch(format!("{} coefficients on {} cells", coeffs.len(), grid.n())));
        }
        Ok(Self { grid, coeffs, precision: PrecisionSystem::Exact })
    }

    pub fn coeff(&self, omega: &FreqIndex) -> Complex64 {
        self.coeffs[omega.to_flat(&self.grid)]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.grid.d()).map(|k| format!("omega_{k}")).collect();
        header.push("re".into());
        header.push("im".into());
        writeln!(w, "{}", header.join(","))?;
        for (j, c) in self.coeffs.iter().enumerate() {
            let omega = FreqIndex::from_flat(&self.grid, j);
            let mut cols: Vec<String> = omega.0.iter().map(i64::to_string).collect();
            cols.push(c.re.to_string());
            cols.push(c.im.to_string());
            writeln!(w, "{}", cols.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = reader.headers()?.clone();
        let cols = header.len();
        if cols < 3 {
            return Err(Error::Parse("spectrum header needs omega columns plus re,im".into()));
        }
        let d = cols - 2;
        for (k, name) in header.iter().take(d).enumerate() {
            if name.trim() != format!("omega_{}", k + 1) {
                return Err(Error::Parse(format!("unexpected column `{name}`")));
            }
        }
        if header[d].trim() != "re" || header[d + 1].trim() != "im" {
            return Err(Error::Parse("last columns must be re,im".into()));
        }
        let mut rows: Vec<(Vec<i64>, Complex64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != cols {
                return Err(Error::Parse("ragged row".into()));
            }
            let omega = (0..d)
                .map(|k| record[k].trim().parse::<i64>().map_err(|_| Error::Parse(format!("bad frequency `{}`", &record[k]))))
                .collect::<Result<Vec<_>>>()?;
            let num = |s: &str| -> Result<f64> {
                let v: f64 = s.trim().parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Parse("non-finite coefficient".into()))
                }
            };
            rows.push((omega, Complex64::new(num(&record[d])?, num(&record[d + 1])?)));
        }
        let n = rows.len();
        let m = integer_root(n, d).ok_or_else(|| Error::Parse(format!("{n} rows is not m^{d}")))?;
        let grid = Grid::new(d, m)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        let mut seen = vec![false; n];
        let half = m as i64 / 2;
        for (omega, c) in rows {
            if omega.iter().any(|&w| w < -half || w > half) {
                return Err(Error::Parse(format!("frequency {omega:?} outside the grid")));
            }
            let j = FreqIndex(omega).to_flat(&grid);
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Parse("duplicate frequency".into()));
            }
            coeffs[j] = c;
        }
        Spectrum::new(grid, coeffs)
    }
}

fn integer_root(n: usize, d: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let guess = (n as f64).powf(1.0 / d as f64).round() as usize;
    (guess.saturating_sub(1)..=guess + 1)
        .find(|&m| m > 0 && u32::try_from(d).ok().and_then(|d| m.checked_pow(d)) == Some(n))
}

/// Zero every coefficient outside `mask`; kept coefficients are untouched.
pub fn truncate(spec: &Spectrum, mask: &ModeMask) -> Result<Spectrum> {
    if mask.grid != spec.grid {
        return Err(Error::ShapeMismatch("mask and spectrum grids differ".into()));
    }
    let coeffs = spec
        .coeffs
        .iter()
        .zip(&mask.keep)
        .map(|(&c, &k)| if k { c } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(Spectrum { grid: spec.grid, coeffs, precision: spec.precision.clone() })
}

/// Radix-2 transform applied axis by axis; same result as `dft(field, Exact)`.
pub fn fft_fast(field: &ScalarField) -> Result<Spectrum> {
    let grid = *field.grid();
    let m = grid.m();
    if !m.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(m));
    }
    check_finite(field.values())?;
    let mut data: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let twiddles: Vec<Complex64> = (0..m / 2).map(|k| unit_root(k as i64, m)).collect();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let mut stride = 1;
    for _axis in 0..grid.d() {
        let block = stride * m;
        for base in (0..grid.n()).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[start + k * stride];
                }
                fft_radix2_in_place(&mut line, &twiddles);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
        stride *= m;
    }
    let scale = 1.0 / grid.n() as f64;
    for c in &mut data {
        *c *= scale;
    }
    Spectrum::new(grid, data)
}

/// In-place iterative decimation-in-time FFT with the `+i` sign.
/// `twiddles[k] = exp(2πi k / len)` for `k < len/2`.
fn fft_radix2_in_place(buf: &mut [Complex64], twiddles: &[Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..len / 2 {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
            }
        }
        len <<= 1;
    }
}
