//! Uniform hypercube partitions of `[0,1]^d` and fields sampled on them.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Upper limit on `n = m^d`, well below anything addressable.
pub const MAX_CELLS: usize = 1 << 28;

/// The partition of `[0,1]^d` into `n = m^d` cubes of side `1/m`.
///
/// Cell `j` is addressed by the multi-index `(i_1, …, i_d)` in row-major order
/// and its anchor is the vertex closest to the origin, `(i_1/m, …, i_d/m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    d: usize,
    m: usize,
    n: usize,
}

impl Grid {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidGrid(format!("d and m must be positive (d={d}, m={m})")));
        }
        let n = u32::try_from(d)
            .ok()
            .and_then(|d32| m.checked_pow(d32))
            .filter(|&n| n <= MAX_CELLS)
            .ok_or(Error::GridTooLarge { d, m })?;
        Ok(Self { d, m, n })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Multi-index of cell `j` (row-major, last axis fastest).
    pub fn multi_index(&self, j: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        let mut rest = j;
        for k in (0..self.d).rev() {
            idx[k] = rest % self.m;
            rest /= self.m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn anchor(&self, j: usize) -> Vec<f64> {
        self.multi_index(j).into_iter().map(|i| i as f64 / self.m as f64).collect()
    }

    pub fn anchors(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|j| self.anchor(j)).collect()
    }
}

/// Sum of `amplitude · cos(2π k ⟨1, x⟩ + phase)` tones.
///
/// In `d > 1` every tone runs along the diagonal direction `(1, …, 1)`, so each
/// tone is a pure Fourier mode at `±(k, …, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTone {
    pub tones: Vec<Tone>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tone {
    pub freq: u32,
    pub amplitude: f64,
    pub phase: f64,
}

impl MultiTone {
    /// Tones at frequencies `1..=max_freq` with amplitudes `scale · r^k`, with the
    /// decay `r ∈ [0.3, 0.7)` and the phases drawn from a seeded generator.
    pub fn decaying(seed: u64, max_freq: u32, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r: f64 = rng.random_range(0.3..0.7);
        let tones = (1..=max_freq)
            .map(|k| Tone {
                freq: k,
                amplitude: scale * r.powi(k as i32),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Self { tones }
    }

    /// At most `count` tones at distinct random frequencies in `1..=max_freq`,
    /// amplitudes uniform in `(0, 1]`.
    pub fn random(seed: u64, count: usize, max_freq: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freqs: Vec<u32> = (1..=max_freq).collect();
        // partial Fisher-Yates
        let take = count.min(freqs.len());
        for i in 0..take {
            let j = rng.random_range(i..freqs.len());
            freqs.swap(i, j);
        }
        let mut tones: Vec<Tone> = freqs[..take]
            .iter()
            .map(|&freq| Tone {
                freq,
                amplitude: 1.0 - rng.random_range(0.0..1.0),
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        tones.sort_by_key(|t| t.freq);
        Self { tones }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        self.tones
            .iter()
            .map(|t| t.amplitude * (2.0 * PI * t.freq as f64 * s + t.phase).cos())
            .sum()
    }

    pub fn max_freq(&self) -> u32 {
        self.tones.iter().map(|t| t.freq).max().unwrap_or(0)
    }

    fn bound(&self) -> f64 {
        self.tones.iter().map(|t| t.amplitude.abs()).sum()
    }

    fn lipschitz(&self, d: usize) -> f64 {
        2.0 * PI
            * (d as f64).sqrt()
            * self.tones.iter().map(|t| t.freq as f64 * t.amplitude.abs()).sum::<f64>()
    }
}

pub type CustomFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A caller-supplied function with optional analytic constants.
#[derive(Clone)]
pub struct Custom {
    pub name: String,
    pub func: CustomFn,
    pub bound_m: Option<f64>,
    pub lipschitz_l: Option<f64>,
    /// Largest number of evaluation points the reference quadrature may use.
    pub quadrature_budget: Option<usize>,
}

impl fmt::Debug for Custom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Custom")
            .field("name", &self.name)
            .field("bound_m", &self.bound_m)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("quadrature_budget", &self.quadrature_budget)
            .finish_non_exhaustive()
    }
}

/// Functions on `[0,1]^d` used as error witnesses and experiment inputs.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `x_1 ⋯ x_d`
    Product,
    /// `amplitude · sin(2π freq x_1)`
    AliasSine { amplitude: f64, freq: u32 },
    ConstantY(f64),
    MultiTone(MultiTone),
    Custom(Custom),
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Product => x.iter().product(),
            TestFunction::AliasSine { amplitude, freq } => {
                amplitude * (2.0 * PI * *freq as f64 * x[0]).sin()
            }
            TestFunction::ConstantY(y) => *y,
            TestFunction::MultiTone(mt) => mt.eval(x),
            TestFunction::Custom(c) => (c.func)(x),
        }
    }

    /// Sup-norm bound on `[0,1]^d` when known analytically.
    pub fn bound_m(&self, _d: usize) -> Option<f64> {
        match self {
            TestFunction::Product => Some(1.0),
            TestFunction::AliasSine { amplitude, .. } => Some(amplitude.abs()),
            TestFunction::ConstantY(y) => Some(y.abs()),
            TestFunction::MultiTone(mt) => Some(mt.bound()),
            TestFunction::Custom(c) => c.bound_m,
        }
    }

    /// Lipschitz constant (Euclidean norm) on `[0,1]^d` when known analytically.
    pub fn lipschitz(&self, d: usize) -> Option<f64> {
        match self {
            TestFunction::Product => Some((d as f64).sqrt()),
            TestFunction::AliasSine { amplitude, freq } => {
                Some(2.0 * PI * *freq as f64 * amplitude.abs())
            }
            TestFunction::ConstantY(_) => Some(0.0),
            TestFunction::MultiTone(mt) => Some(mt.lipschitz(d)),
            TestFunction::Custom(c) => c.lipschitz_l,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::Product => "product".into(),
            TestFunction::AliasSine { amplitude, freq } => format!("alias:{amplitude},{freq}"),
            TestFunction::ConstantY(y) => format!("constant:{y}"),
            TestFunction::MultiTone(mt) => format!("multitone:{}", mt.tones.len()),
            TestFunction::Custom(c) => format!("custom:{}", c.name),
        }
    }
}

/// Values of a function at the anchors of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    bound_m: Option<f64>,
    lipschitz_l: Option<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a grid with {} cells",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values, bound_m: None, lipschitz_l: None })
    }

    /// Attach analytic constants; `bound_m` must dominate every sampled value.
    pub fn with_constants(mut self, bound_m: Option<f64>, lipschitz_l: Option<f64>) -> Result<Self> {
        if let Some(m) = bound_m {
            let max = self.max_abs();
            if max > m * (1.0 + 1e-12) {
                return Err(Error::InvalidGrid(format!("max |value| {max} exceeds bound {m}")));
            }
        }
        self.bound_m = bound_m;
        self.lipschitz_l = lipschitz_l;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bound_m(&self) -> Option<f64> {
        self.bound_m
    }

    pub fn lipschitz_l(&self) -> Option<f64> {
        self.lipschitz_l
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Write as CSV: a `d,m` line followed by one `i1,…,id,value` row per anchor.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},{}", self.grid.d, self.grid.m)?;
        let mut line = String::new();
        for (j, v) in self.values.iter().enumerate() {
            line.clear();
            for i in self.grid.multi_index(j) {
                line.push_str(&i.to_string());
                line.push(',');
            }
            line.push_str(&v.to_string());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
        let mut records = reader.records();
        let header = records.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        if header.len() != 2 {
            return Err(Error::Parse("first line must be `d,m`".into()));
        }
        let parse_usize = |s: &str| -> Result<usize> {
            s.trim().parse().map_err(|_| Error::Parse(format!("not an integer: `{s}`")))
        };
        let grid = Grid::new(parse_usize(&header[0])?, parse_usize(&header[1])?)?;
        let mut values = vec![f64::NAN; grid.n()];
        let mut seen = vec![false; grid.n()];
        let mut idx = vec![0; grid.d()];
        let mut rows = 0;
        for record in records {
            let record = record?;
            if record.len() != grid.d() + 1 {
                return Err(Error::Parse(format!("row {} has {} columns", rows + 1, record.len())));
            }
            for (k, slot) in idx.iter_mut().enumerate() {
                *slot = parse_usize(&record[k])?;
                if *slot >= grid.m() {
                    return Err(Error::Parse(format!("index {} out of range", *slot)));
                }
            }
            let v: f64 = record[grid.d()]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("not a number: `{}`", &record[grid.d()])))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("non-finite value in row {}", rows + 1)));
            }
            let j = grid.flat_index(&idx);
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Parse(format!("duplicate anchor {idx:?}")));
            }
            values[j] = v;
            rows += 1;
        }
        if rows != grid.n() {
            return Err(Error::Parse(format!("expected {} rows, found {rows}", grid.n())));
        }
        ScalarField::new(grid, values)
    }
}

pub fn build_grid(d: usize, m: usize) -> Result<Grid> {
    Grid::new(d, m)
}

/// Evaluate `f` at every anchor of `grid`.
pub fn sample(f: &TestFunction, grid: &Grid) -> Result<ScalarField> {
    let mut values = Vec::with_capacity(grid.n());
    let mut x = vec![0.0; grid.d()];
    for j in 0..grid.n() {
        for (xk, ik) in x.iter_mut().zip(grid.multi_index(j)) {
            *xk = ik as f64 / grid.m() as f64;
        }
        let v = f.eval(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample { index: j });
        }
        values.push(v);
    }
    let field = ScalarField::new(*grid, values)?;
    field.with_constants(f.bound_m(grid.d()), f.lipschitz(grid.d()))
}

/// Finite-difference lower bound on the Lipschitz constant: the largest
/// `|Δ value| · m` over axis-adjacent anchor pairs.
pub fn estimate_lipschitz(field: &ScalarField) -> f64 {
    let grid = field.grid();
    let m = grid.m();
    let values = field.values();
    let mut best: f64 = 0.0;
    let mut stride = 1;
    for _axis in (0..grid.d()).rev() {
        for j in 0..grid.n() {
            // skip the last cell along this axis
            if (j / stride) % m == m - 1 {
                continue;
            }
            best = best.max((values[j + stride] - values[j]).abs() * m as f64);
        }
        stride *= m;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_row_major() {
        let g = build_grid(1, 4).unwrap();
        assert_eq!(g.anchors(), vec![vec![0.0], vec![0.25], vec![0.5], vec![0.75]]);
        let g = build_grid(2, 2).unwrap();
        assert_eq!(
            g.anchors(),
            vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.5, 0.0], vec![0.5, 0.5]]
        );
        assert_eq!(g.n(), 4);
        let g = build_grid(3, 10).unwrap();
        assert_eq!(g.n(), 1000);
        assert_eq!(g.cell_volume(), 0.001);
    }

    #[test]
    fn invalid_grids() {
        assert!(matches!(build_grid(0, 4), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(2, 0), Err(Error::InvalidGrid(_))));
        assert!(matches!(build_grid(40, 1 << 20), Err(Error::GridTooLarge { .. })));
        assert!(matches!(build_grid(usize::MAX, 2), Err(Error::GridTooLarge { .. })));
    }

    #[test]
    fn anchors_are_minimal_vertices() {
        for (d, m) in [(1, 7), (2, 5), (3, 4)] {
            let g = build_grid(d, m).unwrap();
            let anchors = g.anchors();
            for (j, a) in anchors.iter().enumerate() {
                let idx = g.multi_index(j);
                assert_eq!(g.flat_index(&idx), j);
                for (x, i) in a.iter().zip(&idx) {
                    assert_eq!(*x, *i as f64 / m as f64);
                    assert!((0.0..1.0).contains(x));
                }
            }
            let total: f64 = (0..g.n()).map(|_| g.cell_volume()).sum();
            assert!((total - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sample_examples() {
        let f = sample(&TestFunction::Product, &build_grid(1, 4).unwrap()).unwrap();
        assert_eq!(f.values(), &[0.0, 0.25, 0.5, 0.75]);
        assert_eq!(f.bound_m(), Some(1.0));
        let f = sample(&TestFunction::ConstantY(3.0), &build_grid(2, 2).unwrap()).unwrap();
        assert_eq!(f.values(), &[3.0; 4]);
        let alias = TestFunction::AliasSine { amplitude: 1.0, freq: 5 };
        let f = sample(&alias, &build_grid(1, 4).unwrap()).unwrap();
        for (v, want) in f.values().iter().zip([0.0, 1.0, 0.0, -1.0]) {
            assert!((v - want).abs() < 1e-14);
        }
    }

    #[test]
    fn custom_non_finite_reports_anchor() {
        let f = TestFunction::Custom(Custom {
            name: "inv".into(),
            func: Arc::new(|x: &[f64]| 1.0 / (x[0] - 0.5)),
            bound_m: None,
            lipschitz_l: None,
            quadrature_budget: None,
        });
        let err = sample(&f, &build_grid(1, 4).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteSample { index: 2 }));
    }

    #[test]
    fn lipschitz_estimates() {
        let g = build_grid(1, 4).unwrap();
        assert_eq!(estimate_lipschitz(&sample(&TestFunction::Product, &g).unwrap()), 1.0);
        let g2 = build_grid(2, 3).unwrap();
        assert_eq!(estimate_lipschitz(&sample(&TestFunction::ConstantY(3.0), &g2).unwrap()), 0.0);
        let alias = TestFunction::AliasSine { amplitude: 1.0, freq: 5 };
        let est = estimate_lipschitz(&sample(&alias, &g).unwrap());
        assert!((est - 4.0).abs() < 1e-12);
        // along the second axis only
        let f = TestFunction::Custom(Custom {
            name: "y".into(),
            func: Arc::new(|x: &[f64]| 3.0 * x[1]),
            bound_m: None,
            lipschitz_l: None,
            quadrature_budget: None,
        });
        assert!((estimate_lipschitz(&sample(&f, &g2).unwrap()) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn multitone_constants() {
        let mt = MultiTone::random(3, 5, 8);
        assert!(mt.tones.len() == 5 && mt.tones.iter().all(|t| t.amplitude > 0.0 && t.amplitude <= 1.0));
        let f = TestFunction::MultiTone(mt.clone());
        let g = build_grid(2, 16).unwrap();
        let field = sample(&f, &g).unwrap();
        assert!(field.max_abs() <= f.bound_m(2).unwrap());
        assert!(estimate_lipschitz(&field) <= f.lipschitz(2).unwrap());
        assert_eq!(MultiTone::decaying(1, 10, 1.0), MultiTone::decaying(1, 10, 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let g = build_grid(2, 3).unwrap();
        let field = sample(&TestFunction::MultiTone(MultiTone::decaying(4, 3, 1.0)), &g).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2,3\n0,0,"));
        let back = ScalarField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), field.values());
        for bad in ["", "2\n", "1,2\n0,1\n", "1,2\n0,1\n0,2\n", "1,2\n0,1\n5,2\n", "1,2\n0,nan\n1,1\n"] {
            assert!(ScalarField::read_csv(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }
}
