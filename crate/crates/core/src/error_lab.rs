//! Discretization and precision error of the normalized Fourier sum, with the
//! matching upper bounds and explicit lower-bound witnesses.
//!
//! For a function `v` on `[0,1]^d`, a grid with `n = m^d` cells and a frequency `ω`:
//!
//! * `disc = |∫ v φ_ω − Σ_j v(ξ_j) φ_ω(ξ_j) / n|`
//! * `prec = |Σ_j v(ξ_j) φ_ω(ξ_j) / n − Σ_j q(v(ξ_j)) q(φ_ω(ξ_j)) / n|`
//!
//! Upper bounds: `disc ≤ c2 √d (M|ω| + L) n^{-1/d}` and `prec ≤ c ε M`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample, Grid, MultiTone, TestFunction};
use crate::precision::PrecisionSystem;
use crate::spectral::{dft_coeff, unit_root, FreqIndex};

/// Constants multiplying the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Lower-bound constant for `c1 √d M n^{-2/d}`; the default is the product
    /// witness' leading coefficient at d=3, the smallest over d ≤ 3. Reported only.
    pub c1: f64,
    /// Discretization upper-bound constant. 2 bounds the real and imaginary
    /// parts separately; 4 bounds the complex modulus.
    pub c2: f64,
    /// Precision upper-bound constant.
    pub c: f64,
    /// Scale of the ω-free bound `L √d n^{-1/d}`.
    pub general_disc: f64,
    /// Scale of the ω-free bound `ε M`.
    pub general_prec: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        let d = 3.0_f64;
        Self {
            c1: d * (2.0 * PI).powf(-d) * PI * PI / 3.0 / d.sqrt(),
            c2: 2.0,
            c: 4.0,
            general_disc: 1.0,
            general_prec: 1.0,
        }
    }
}

/// `∫_{[0,1]^d} f φ_ω` for the functions with a closed form.
pub fn fourier_integral(f: &TestFunction, omega: &FreqIndex) -> Option<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    match f {
        TestFunction::Product => Some(
            omega
                .0
                .iter()
                .map(|&w| {
                    if w == 0 {
                        Complex64::new(0.5, 0.0)
                    } else {
                        // ∫ x e^{2πiwx} dx = 1 / (2πiw)
                        Complex64::new(0.0, -1.0 / (2.0 * PI * w as f64))
                    }
                })
                .product(),
        ),
        TestFunction::ConstantY(y) => Some(if omega.is_zero() { Complex64::new(*y, 0.0) } else { zero }),
        TestFunction::AliasSine { amplitude, freq } => {
            if omega.0[1..].iter().any(|&w| w != 0) {
                return Some(zero);
            }
            let f = *freq as i64;
            let w = omega.0[0];
            // sin(2πfx) = (e^{2πifx} - e^{-2πifx}) / 2i
            let mut acc = zero;
            if f != 0 && w == -f {
                acc += Complex64::new(0.0, -0.5);
            }
            if f != 0 && w == f {
                acc += Complex64::new(0.0, 0.5);
            }
            Some(acc * *amplitude)
        }
        TestFunction::MultiTone(mt) => Some(multitone_integral(mt, omega)),
        TestFunction::Custom(_) => None,
    }
}

fn multitone_integral(mt: &MultiTone, omega: &FreqIndex) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let first = omega.0[0];
    if omega.0.iter().any(|&w| w != first) {
        return acc;
    }
    for t in &mt.tones {
        let k = t.freq as i64;
        // a cos(2πks + φ) = a/2 (e^{iφ} e^{2πiks} + e^{-iφ} e^{-2πiks})
        if k != 0 && first == -k {
            acc += Complex64::from_polar(t.amplitude / 2.0, t.phase);
        }
        if k != 0 && first == k {
            acc += Complex64::from_polar(t.amplitude / 2.0, -t.phase);
        }
    }
    acc
}

/// Left Riemann sum of `f φ_ω` at `res` points per axis.
fn riemann(f: &TestFunction, d: usize, res: usize, omega: &FreqIndex) -> Result<Complex64> {
    let grid = Grid::new(d, res)?;
    let field = sample(f, &grid)?;
    dft_coeff(&field, omega, &PrecisionSystem::Exact)
}

/// Discretization error `|∫ f φ_ω − Σ_j f(ξ_j) φ_ω(ξ_j) / n|`.
pub fn disc_error(f: &TestFunction, grid: &Grid, omega: &FreqIndex) -> Result<f64> {
    if omega.d() != grid.d() {
        return Err(Error::ShapeMismatch("frequency and grid dimensions differ".into()));
    }
    let field = sample(f, grid)?;
    let discrete = dft_coeff(&field, omega, &PrecisionSystem::Exact)?;
    match fourier_integral(f, omega) {
        Some(integral) => Ok((integral - discrete).norm()),
        None => custom_disc_error(f, grid, omega, discrete),
    }
}

// Richardson-extrapolated left Riemann reference at 16× and 32× the target
// resolution; its error estimate must sit 100× below the measured gap.
fn custom_disc_error(f: &TestFunction, grid: &Grid, omega: &FreqIndex, discrete: Complex64) -> Result<f64> {
    let TestFunction::Custom(custom) = f else {
        unreachable!("only custom functions lack a closed-form integral");
    };
    let budget = custom
        .quadrature_budget
        .ok_or_else(|| Error::Quadrature(format!("`{}` has no reference-quadrature budget", custom.name)))?;
    let (d, m) = (grid.d(), grid.m());
    let finest = u32::try_from(d).ok().and_then(|d| (32 * m).checked_pow(d));
    if finest.is_none_or(|p| p > budget) {
        return Err(Error::Quadrature(format!(
            "reference needs {}^{d} points, budget is {budget}",
            32 * m
        )));
    }
    let i8 = riemann(f, d, 8 * m, omega)?;
    let i16 = riemann(f, d, 16 * m, omega)?;
    let i32 = riemann(f, d, 32 * m, omega)?;
    let fine = i32 * 2.0 - i16;
    let coarse = i16 * 2.0 - i8;
    let estimate = (fine - coarse).norm();
    let gap = (fine - discrete).norm();
    if estimate * 100.0 > gap {
        return Err(Error::Quadrature(format!(
            "reference error estimate {estimate:e} is not 100x below the gap {gap:e}"
        )));
    }
    Ok(gap)
}

/// Precision error with `q` applied to the two factors of each term only.
pub fn prec_error(f: &TestFunction, grid: &Grid, sys: &PrecisionSystem, omega: &FreqIndex) -> Result<f64> {
    if omega.d() != grid.d() {
        return Err(Error::ShapeMismatch("frequency and grid dimensions differ".into()));
    }
    if sys.is_exact() {
        return Ok(0.0);
    }
    let field = sample(f, grid)?;
    let m = grid.m();
    let mut diff = Complex64::new(0.0, 0.0);
    for (j, &v) in field.values().iter().enumerate() {
        let idx = grid.multi_index(j);
        let t: i64 = idx.iter().zip(&omega.0).map(|(&i, &w)| i as i64 * w).sum();
        let phi = unit_root(t, m);
        let exact = phi * v;
        let rounded = sys.quantize_complex(phi)? * sys.quantize(v)?;
        diff += exact - rounded;
    }
    Ok((diff / grid.n() as f64).norm())
}

/// `c2 √d (M|ω| + L) n^{-1/d}`.
pub fn disc_upper_bound(
    bound_m: f64,
    lipschitz_l: f64,
    d: usize,
    n: usize,
    omega_norm: f64,
    consts: &BoundConstants,
) -> f64 {
    consts.c2 * (d as f64).sqrt() * (bound_m * omega_norm + lipschitz_l) * (n as f64).powf(-1.0 / d as f64)
}

/// `c1 √d M n^{-2/d}`.
pub fn disc_lower_bound(bound_m: f64, d: usize, n: usize, consts: &BoundConstants) -> f64 {
    consts.c1 * (d as f64).sqrt() * bound_m * (n as f64).powf(-2.0 / d as f64)
}

/// Closed form of `Σ_j v(ξ_j) ∏_k sin(2π ξ_{j,k}) / n` for `v = x_1⋯x_d`:
/// `(Σ_{i<m} (i/m) sin(2πi/m) / m)^d = (−cot(π/m) / 2m)^d`.
pub fn product_sine_sum_closed_form(d: usize, m: usize) -> f64 {
    if m == 1 {
        return 0.0;
    }
    let m = m as f64;
    (-(PI / m).tan().recip() / (2.0 * m)).powi(d as i32)
}

/// The same sum evaluated term by term over every anchor.
pub fn product_sine_sum_direct(grid: &Grid) -> f64 {
    let m = grid.m();
    let mut total = 0.0;
    for j in 0..grid.n() {
        let term: f64 = grid
            .multi_index(j)
            .into_iter()
            .map(|i| i as f64 / m as f64 * unit_root(i as i64, m).im)
            .product();
        total += term;
    }
    total / grid.n() as f64
}

/// `∫ x_1⋯x_d ∏_k sin(2π x_k) dx = (−1/2π)^d`.
pub fn product_sine_integral(d: usize) -> f64 {
    (-1.0 / (2.0 * PI)).powi(d as i32)
}

/// Sine-part gap of the product witness at ω=1: `|(−1/2π)^d − (−cot(π/m)/2m)^d|`.
pub fn disc_lower_witness(d: usize, m: usize) -> f64 {
    (product_sine_integral(d) - product_sine_sum_closed_form(d, m)).abs()
}

/// `c ε M`; zero under exact arithmetic.
pub fn prec_upper_bound(bound_m: f64, sys: &PrecisionSystem, consts: &BoundConstants) -> f64 {
    match sys.relative_epsilon() {
        Ok(eps) => consts.c * eps * bound_m,
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralBounds {
    pub lower: f64,
    pub upper: f64,
}

/// ω-free bounds for `|∫ f − Σ_j f(ξ_j)/n|`: the upper bound `L √d n^{-1/d}`
/// and, as the lower witness, the directly computed gap of `x_1⋯x_d`.
pub fn general_disc_bounds(lipschitz_l: f64, grid: &Grid, consts: &BoundConstants) -> Result<GeneralBounds> {
    let d = grid.d();
    let upper = consts.general_disc * lipschitz_l * (d as f64).sqrt() * (grid.n() as f64).powf(-1.0 / d as f64);
    Ok(GeneralBounds { lower: general_disc_gap(&TestFunction::Product, grid)?, upper })
}

/// `|∫ f − Σ_j f(ξ_j)/n|` for functions with a closed-form integral.
pub fn general_disc_gap(f: &TestFunction, grid: &Grid) -> Result<f64> {
    disc_error(f, grid, &FreqIndex::zero(grid.d()))
}

/// `|Σ_j f(ξ_j)/n − Σ_j q(f(ξ_j))/n|`.
pub fn general_prec_error(f: &TestFunction, grid: &Grid, sys: &PrecisionSystem) -> Result<f64> {
    prec_error(f, grid, sys, &FreqIndex::zero(grid.d()))
}

/// `general_prec · ε M`.
pub fn general_prec_upper(bound_m: f64, sys: &PrecisionSystem, consts: &BoundConstants) -> f64 {
    sys.relative_epsilon().map(|eps| consts.general_prec * eps * bound_m).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointWitness {
    pub y: f64,
    pub rounding_error: f64,
}

/// Constant `y ∈ (M/2, M)` with the largest rounding error `|y − q(y)|`,
/// scanning midpoints between consecutive representable values.
pub fn worst_midpoint_witness(sys: &PrecisionSystem, bound_m: f64) -> Option<MidpointWitness> {
    if sys.is_exact() || !(bound_m.is_finite() && bound_m > 0.0) {
        return None;
    }
    let levels = sys.nonnegative_levels(bound_m);
    let lo = bound_m / 2.0;
    let mut best: Option<MidpointWitness> = None;
    let mut consider = |y: f64| {
        if y > lo && y < bound_m {
            let rounding_error = (y - sys.round(y)).abs();
            if best.is_none_or(|b| rounding_error > b.rounding_error) {
                best = Some(MidpointWitness { y, rounding_error });
            }
        }
    };
    for w in levels.windows(2) {
        consider((w[0] + w[1]) / 2.0);
    }
    // A representable gap wider than (M/2, M) has no midpoint inside it; the
    // error is then maximised next to an end of the interval.
    consider(lo * (1.0 + 1e-9));
    consider(bound_m * (1.0 - 1e-9));
    best
}

/// Precision error of the worst-midpoint constant at ω=0 on `grid`.
pub fn prec_lower_witness(sys: &PrecisionSystem, bound_m: f64, grid: &Grid) -> Result<f64> {
    match worst_midpoint_witness(sys, bound_m) {
        Some(w) => prec_error(&TestFunction::ConstantY(w.y), grid, sys, &FreqIndex::zero(grid.d())),
        None => Ok(0.0),
    }
}

/// Discretization error of `M sin(2π(m+ω)x)` against `φ_ω` on a 1-d grid.
pub fn aliasing_demo(amplitude: f64, omega: i64, grid: &Grid) -> Result<f64> {
    if grid.d() != 1 {
        return Err(Error::Unsupported("the aliasing witness is defined for d=1 only".into()));
    }
    let freq = u32::try_from(grid.m() as i64 + omega)
        .map_err(|_| Error::Unsupported(format!("alias frequency m+ω must be non-negative (ω={omega})")))?;
    disc_error(&TestFunction::AliasSine { amplitude, freq }, grid, &FreqIndex(vec![omega]))
}

/// Function family for a sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FunctionSpec {
    Product,
    Constant(f64),
    /// `count` tones with frequencies up to `max_freq`, seeded.
    MultiTone { seed: u64, count: usize, max_freq: u32 },
    /// `amplitude · sin(2π(m+ω)x)`, d=1 only.
    Alias { amplitude: f64 },
}

impl FunctionSpec {
    pub fn parse(token: &str, seed: u64) -> Result<Self> {
        let token = token.trim();
        let bad = || Error::Parse(format!("unknown function `{token}`"));
        let (name, args) = token.split_once(':').unwrap_or((token, ""));
        let nums: Vec<&str> = if args.is_empty() { Vec::new() } else { args.split(',').collect() };
        let num = |i: usize| -> Result<f64> {
            let v: f64 = nums.get(i).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match name {
            "product" if nums.is_empty() => Ok(FunctionSpec::Product),
            "constant" if nums.len() <= 1 => {
                Ok(FunctionSpec::Constant(if nums.is_empty() { 1.0 } else { num(0)? }))
            }
            "multitone" if nums.len() <= 2 => {
                let count = if nums.is_empty() { 5.0 } else { num(0)? };
                let max_freq = if nums.len() < 2 { 8.0 } else { num(1)? };
                if !(1.0..=64.0).contains(&count) || !(1.0..=1024.0).contains(&max_freq) {
                    return Err(bad());
                }
                Ok(FunctionSpec::MultiTone { seed, count: count as usize, max_freq: max_freq as u32 })
            }
            "alias" if nums.len() <= 1 => {
                Ok(FunctionSpec::Alias { amplitude: if nums.is_empty() { 1.0 } else { num(0)? } })
            }
            _ => Err(bad()),
        }
    }

    pub fn materialize(&self, grid: &Grid, omega: i64) -> Result<TestFunction> {
        Ok(match self {
            FunctionSpec::Product => TestFunction::Product,
            FunctionSpec::Constant(y) => TestFunction::ConstantY(*y),
            FunctionSpec::MultiTone { seed, count, max_freq } => {
                TestFunction::MultiTone(MultiTone::random(*seed, *count, *max_freq))
            }
            FunctionSpec::Alias { amplitude } => {
                if grid.d() != 1 {
                    return Err(Error::Unsupported("the aliasing witness is defined for d=1 only".into()));
                }
                let freq = u32::try_from(grid.m() as i64 + omega)
                    .map_err(|_| Error::Unsupported("alias frequency must be non-negative".into()))?;
                TestFunction::AliasSine { amplitude: *amplitude, freq }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ds: Vec<usize>,
    pub ms: Vec<usize>,
    /// Scalar frequencies; in d dimensions the row uses `(w, …, w)`.
    pub omegas: Vec<i64>,
    pub systems: Vec<PrecisionSystem>,
    pub functions: Vec<FunctionSpec>,
    pub consts: BoundConstants,
}

impl SweepConfig {
    /// Reject configurations that cannot produce a row.
    pub fn validate(&self) -> Result<()> {
        for f in &self.functions {
            if matches!(f, FunctionSpec::Alias { .. }) && self.ds.iter().any(|&d| d != 1) {
                return Err(Error::Unsupported("the aliasing witness is defined for d=1 only".into()));
            }
        }
        for &d in &self.ds {
            for &m in &self.ms {
                Grid::new(d, m)?;
            }
        }
        Ok(())
    }

    fn rows(&self) -> Vec<(usize, usize, i64, usize, usize)> {
        let mut rows = Vec::new();
        for (fi, _) in self.functions.iter().enumerate() {
            for &w in &self.omegas {
                for &d in &self.ds {
                    for &m in &self.ms {
                        for (si, _) in self.systems.iter().enumerate() {
                            rows.push((fi, d, w, m, si));
                        }
                    }
                }
            }
        }
        rows
    }
}

/// One sweep row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub function: String,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub omega: Vec<i64>,
    #[serde(rename = "M")]
    pub bound_m: f64,
    #[serde(rename = "L")]
    pub lipschitz_l: f64,
    pub sys: String,
    pub disc_err: f64,
    pub disc_upper: f64,
    pub disc_lower_witness: f64,
    pub prec_err: f64,
    pub prec_upper: f64,
    pub prec_lower_witness: f64,
}

pub const ERROR_REPORT_COLUMNS: &str =
    "d,m,n,omega,M,L,sys,disc_err,disc_upper,disc_lower_witness,prec_err,prec_upper,prec_lower_witness";

impl ErrorReport {
    pub fn disc_violated(&self) -> bool {
        self.disc_err > self.disc_upper * (1.0 + 1e-12)
    }

    pub fn prec_violated(&self) -> bool {
        self.prec_err > self.prec_upper * (1.0 + 1e-12)
    }

    pub fn omega_token(&self) -> String {
        self.omega.iter().map(i64::to_string).collect::<Vec<_>>().join(";")
    }
}

/// Write reports as CSV with the fixed column order.
pub fn write_reports_csv<W: Write>(reports: &[ErrorReport], mut w: W) -> Result<()> {
    writeln!(w, "{ERROR_REPORT_COLUMNS}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.d,
            r.m,
            r.n,
            r.omega_token(),
            r.bound_m,
            r.lipschitz_l,
            r.sys,
            r.disc_err,
            r.disc_upper,
            r.disc_lower_witness,
            r.prec_err,
            r.prec_upper,
            r.prec_lower_witness
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Disc,
    Prec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub kind: BoundKind,
    pub function: String,
    pub sys: String,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<ErrorReport>,
    pub violations: Vec<Violation>,
}

impl SweepReport {
    /// Largest `err / bound` per kind, over rows with a positive bound.
    pub fn max_ratios(&self) -> (f64, f64) {
        let ratio = |e: f64, b: f64| if b > 0.0 { e / b } else { 0.0 };
        self.rows.iter().fold((0.0, 0.0), |(d, p), r| {
            (d.max(ratio(r.disc_err, r.disc_upper)), p.max(ratio(r.prec_err, r.prec_upper)))
        })
    }
}

fn evaluate_row(config: &SweepConfig, (fi, d, w, m, si): (usize, usize, i64, usize, usize)) -> Result<ErrorReport> {
    let grid = Grid::new(d, m)?;
    let sys = &config.systems[si];
    let f = config.functions[fi].materialize(&grid, w)?;
    let omega = FreqIndex::diagonal(d, w);
    let bound_m = f.bound_m(d).ok_or_else(|| Error::Unsupported("sweep functions need a known M".into()))?;
    let lipschitz_l = f.lipschitz(d).ok_or_else(|| Error::Unsupported("sweep functions need a known L".into()))?;
    Ok(ErrorReport {
        function: f.name(),
        d,
        m,
        n: grid.n(),
        omega: omega.0.clone(),
        bound_m,
        lipschitz_l,
        sys: sys.to_string(),
        disc_err: disc_error(&f, &grid, &omega)?,
        disc_upper: disc_upper_bound(bound_m, lipschitz_l, d, grid.n(), omega.norm(), &config.consts),
        disc_lower_witness: disc_lower_witness(d, m),
        prec_err: prec_error(&f, &grid, sys, &omega)?,
        prec_upper: prec_upper_bound(bound_m, sys, &config.consts),
        prec_lower_witness: prec_lower_witness(sys, bound_m, &grid)?,
    })
}

/// Evaluate every `(function, ω, d, m, sys)` combination, in that nesting order.
/// Rows are computed in parallel on the current rayon pool and returned in order.
pub fn bounds_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let rows: Vec<ErrorReport> = config
        .rows()
        .into_par_iter()
        .map(|row| evaluate_row(config, row))
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.disc_violated() {
            violations.push(Violation {
                row: i,
                kind: BoundKind::Disc,
                function: r.function.clone(),
                sys: r.sys.clone(),
                value: r.disc_err,
                bound: r.disc_upper,
            });
        }
        if r.prec_violated() {
            violations.push(Violation {
                row: i,
                kind: BoundKind::Prec,
                function: r.function.clone(),
                sys: r.sys.clone(),
                value: r.prec_err,
                bound: r.prec_upper,
            });
        }
    }
    Ok(SweepReport { rows, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Custom};
    use std::sync::Arc;

    fn g(d: usize, m: usize) -> Grid {
        build_grid(d, m).unwrap()
    }

    #[test]
    fn disc_examples() {
        assert!(disc_error(&TestFunction::ConstantY(2.0), &g(2, 5), &FreqIndex::zero(2)).unwrap() < 1e-15);
        let e = disc_error(&TestFunction::Product, &g(1, 4), &FreqIndex(vec![1])).unwrap();
        let want = (Complex64::new(0.0, -1.0 / (2.0 * PI)) - Complex64::new(-0.125, -0.125)).norm();
        assert!((e - want).abs() < 1e-15);
        assert!((e - 0.1296).abs() < 1e-4);
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        // fine Riemann sums converge to the analytic integrals
        let fs = [
            TestFunction::Product,
            TestFunction::MultiTone(MultiTone::random(9, 3, 4)),
            TestFunction::AliasSine { amplitude: 1.5, freq: 3 },
        ];
        for f in &fs {
            for w in [-3, -1, 0, 1, 2, 3] {
                let omega = FreqIndex(vec![w]);
                let exact = fourier_integral(f, &omega).unwrap();
                let approx = riemann(f, 1, 1 << 14, &omega).unwrap();
                assert!((exact - approx).norm() < 2e-4, "{} ω={w}", f.name());
            }
        }
        let mt = TestFunction::MultiTone(MultiTone::random(2, 2, 3));
        for w in [(1, 1), (-2, -2), (1, 0)] {
            let omega = FreqIndex(vec![w.0, w.1]);
            let exact = fourier_integral(&mt, &omega).unwrap();
            let approx = riemann(&mt, 2, 256, &omega).unwrap();
            assert!((exact - approx).norm() < 1e-2);
        }
    }

    #[test]
    fn prec_examples() {
        let grid = g(2, 8);
        let omega = FreqIndex(vec![1, 0]);
        assert_eq!(prec_error(&TestFunction::Product, &grid, &PrecisionSystem::Exact, &omega).unwrap(), 0.0);
        let half = PrecisionSystem::EmuHalf;
        let p = prec_error(&TestFunction::Product, &grid, &half, &omega).unwrap();
        assert!(p > 0.0 && p <= 4.0 * half.relative_epsilon().unwrap());
    }

    #[test]
    fn upper_bound_examples() {
        let c = BoundConstants::default();
        assert_eq!(disc_upper_bound(1.0, 1.0, 1, 4, 1.0, &c), 1.0);
        assert_eq!(disc_upper_bound(0.0, 0.0, 2, 16, 3.0, &c), 0.0);
        let v = disc_upper_bound(1.0, 1.0, 3, 1_000_000, 3f64.sqrt().recip(), &c);
        assert!(v > 0.0);
        let v = disc_upper_bound(1.0, 1.0, 3, 1_000_000, 1.0, &c);
        assert!((v - 2.0 * 3f64.sqrt() * 2.0 * 1e-2).abs() < 1e-12);
        assert!((prec_upper_bound(1.0, &PrecisionSystem::EmuHalf, &c) - 1.953125e-3).abs() < 1e-15);
        assert_eq!(prec_upper_bound(0.0, &PrecisionSystem::EmuHalf, &c), 0.0);
        let geo = PrecisionSystem::geometric(1.0, 0.01, 60).unwrap();
        assert!((prec_upper_bound(2.0, &geo, &c) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn witness_closed_form_matches_direct_sum() {
        for (d, m) in [(1, 4), (1, 7), (2, 8), (2, 5), (3, 6)] {
            let closed = product_sine_sum_closed_form(d, m);
            let direct = product_sine_sum_direct(&g(d, m));
            assert!((closed - direct).abs() < 1e-12, "d={d} m={m}");
        }
        // d=1, m=4: Σ (i/4) sin(πi/2) / 4 = (0.25 − 0.75)/4
        assert!((product_sine_sum_closed_form(1, 4) + 0.125).abs() < 1e-15);
        assert!((disc_lower_witness(1, 4) - (0.125 - 1.0 / (2.0 * PI)).abs()).abs() < 1e-15);
        assert!((disc_lower_witness(2, 1) - (2.0 * PI).powi(-2)).abs() < 1e-17);
    }

    #[test]
    fn witness_rate_is_quadratic_in_m() {
        let ms = [64.0, 128.0, 256.0, 512.0, 1024.0];
        let gaps: Vec<f64> = ms.iter().map(|&m| disc_lower_witness(1, m as usize)).collect();
        let slope = crate::stats::log_log_slope(&ms, &gaps);
        assert!((slope + 2.0).abs() < 0.05, "{slope}");
        // asymptotic constant (π²/3)(2π)^{-1}
        let lead = gaps[4] * 1024.0 * 1024.0;
        assert!((lead - PI / 6.0).abs() < 1e-3);
    }

    #[test]
    fn general_bounds() {
        let b = general_disc_bounds(1.0, &g(1, 4), &BoundConstants::default()).unwrap();
        assert!((b.lower - 0.125).abs() < 1e-15);
        assert_eq!(b.upper, 0.25);
        let b = general_disc_bounds(0.0, &g(2, 4), &BoundConstants::default()).unwrap();
        assert_eq!(b.upper, 0.0);
        assert_eq!(general_disc_gap(&TestFunction::ConstantY(3.0), &g(2, 4)).unwrap(), 0.0);
        let b = general_disc_bounds(2f64.sqrt(), &g(2, 4), &BoundConstants::default()).unwrap();
        // (3/8)^2 against 1/4
        assert!((b.lower - (0.25 - 0.140625)).abs() < 1e-15);
        assert!(b.lower < b.upper && (b.upper - 0.5).abs() < 1e-15);
    }

    #[test]
    fn midpoint_witness() {
        let sys = PrecisionSystem::geometric(1.0, 0.01, 60).unwrap();
        let eps = sys.relative_epsilon().unwrap();
        let w = worst_midpoint_witness(&sys, 1.5).unwrap();
        assert!(w.y > 0.75 && w.y < 1.5);
        let p = prec_lower_witness(&sys, 1.5, &g(1, 4)).unwrap();
        assert!(p >= eps * 1.5 / 4.0);
        let half = PrecisionSystem::EmuHalf;
        let p = prec_lower_witness(&half, 1.0, &g(2, 3)).unwrap();
        assert_eq!(p, 2f64.powi(-12));
        assert!(worst_midpoint_witness(&PrecisionSystem::Exact, 1.0).is_none());
    }

    #[test]
    fn constant_prec_error_is_grid_independent() {
        let sys = PrecisionSystem::geometric(1.0, 0.01, 60).unwrap();
        let f = TestFunction::ConstantY(1.2345);
        let base = prec_error(&f, &g(1, 3), &sys, &FreqIndex::zero(1)).unwrap();
        for m in [4, 8, 16, 64] {
            assert_eq!(prec_error(&f, &g(1, m), &sys, &FreqIndex::zero(1)).unwrap(), base);
        }
    }

    #[test]
    fn aliasing() {
        for w in 1..=3 {
            for m in [8, 16, 32] {
                assert!(aliasing_demo(1.0, w, &g(1, m)).unwrap() >= 0.25);
            }
        }
        assert_eq!(aliasing_demo(0.0, 1, &g(1, 8)).unwrap(), 0.0);
        let one = aliasing_demo(1.0, 2, &g(1, 16)).unwrap();
        let ten = aliasing_demo(10.0, 2, &g(1, 16)).unwrap();
        assert!((ten - 10.0 * one).abs() < 1e-10);
        assert!(aliasing_demo(1.0, 1, &g(2, 8)).is_err());
    }

    #[test]
    fn disc_grows_at_most_linearly_in_omega() {
        let grid = g(1, 32);
        let f = TestFunction::Product;
        let l = f.lipschitz(1).unwrap();
        let ratios: Vec<f64> = (1..=8)
            .map(|w| disc_error(&f, &grid, &FreqIndex(vec![w])).unwrap() / (w as f64 + l))
            .collect();
        let max = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(max < 1.0, "{ratios:?}");
    }

    #[test]
    fn custom_functions_need_budget() {
        let smooth = |budget| {
            TestFunction::Custom(Custom {
                name: "x2".into(),
                func: Arc::new(|x: &[f64]| x[0] * x[0]),
                bound_m: Some(1.0),
                lipschitz_l: Some(2.0),
                quadrature_budget: budget,
            })
        };
        let grid = g(1, 8);
        assert!(matches!(disc_error(&smooth(None), &grid, &FreqIndex(vec![0])), Err(Error::Quadrature(_))));
        assert!(matches!(disc_error(&smooth(Some(10)), &grid, &FreqIndex(vec![0])), Err(Error::Quadrature(_))));
        // ∫x² = 1/3; left sum at m=8 is 35/128
        let gap = disc_error(&smooth(Some(1 << 12)), &grid, &FreqIndex(vec![0])).unwrap();
        // the extrapolated reference carries a 1/(12·(16m)²) bias
        assert!((gap - (1.0 / 3.0 - 35.0 / 128.0)).abs() < 1e-5);
    }

    #[test]
    fn sweep_shapes() {
        let empty = SweepConfig {
            ds: vec![],
            ms: vec![],
            omegas: vec![1],
            systems: vec![PrecisionSystem::EmuHalf],
            functions: vec![FunctionSpec::Product],
            consts: BoundConstants::default(),
        };
        assert!(bounds_sweep(&empty).unwrap().rows.is_empty());
        let cfg = SweepConfig {
            ds: vec![1, 2, 3],
            ms: vec![4, 8, 16],
            omegas: vec![1],
            systems: vec![PrecisionSystem::EmuHalf, PrecisionSystem::EmuFp8Clip],
            functions: vec![FunctionSpec::Product],
            consts: BoundConstants::default(),
        };
        let report = bounds_sweep(&cfg).unwrap();
        assert_eq!(report.rows.len(), 18);
        let disc_violations = report.violations.iter().filter(|v| v.kind == BoundKind::Disc).count();
        assert_eq!(disc_violations, 0);
        assert!(report.violations.is_empty(), "{:?}", report.violations);
        for pair in report.rows.chunks(2) {
            assert_eq!(pair[0].sys, "half");
            assert!(pair[1].prec_err >= pair[0].prec_err, "{pair:?}");
        }
        let mut buf = Vec::new();
        write_reports_csv(&report.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 19);
        assert_eq!(text.lines().next().unwrap(), ERROR_REPORT_COLUMNS);
    }

    #[test]
    fn function_tokens() {
        assert_eq!(FunctionSpec::parse("product", 0).unwrap(), FunctionSpec::Product);
        assert_eq!(FunctionSpec::parse("constant:2.5", 0).unwrap(), FunctionSpec::Constant(2.5));
        assert_eq!(
            FunctionSpec::parse("multitone:3,6", 7).unwrap(),
            FunctionSpec::MultiTone { seed: 7, count: 3, max_freq: 6 }
        );
        for bad in ["", "sine", "product:1", "constant:x", "multitone:0", "alias:nan"] {
            assert!(FunctionSpec::parse(bad, 0).is_err(), "{bad}");
        }
        let cfg = SweepConfig {
            ds: vec![2],
            ms: vec![8],
            omegas: vec![1],
            systems: vec![PrecisionSystem::EmuHalf],
            functions: vec![FunctionSpec::Alias { amplitude: 1.0 }],
            consts: BoundConstants::default(),
        };
        assert!(bounds_sweep(&cfg).is_err());
    }
}
