use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::layer::Fields;
use crate::error::{Error, Result};
use crate::grid::{Grid, MultiTone};

/// Periodic Poisson-type operator learning: `û(ω) = f̂(ω) / (1 + 4π²|ω|²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub grid: Grid,
    pub train_inputs: Fields,
    pub train_targets: Fields,
    pub test_inputs: Fields,
    pub test_targets: Fields,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub d: usize,
    pub m: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub tones: usize,
    pub max_freq: u32,
    /// Multiplies every tone amplitude.
    pub amplitude: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self { d: 1, m: 64, n_train: 32, n_test: 16, tones: 3, max_freq: 4, amplitude: 0.2 }
    }
}

/// Poisson multiplier for a diagonal tone of frequency `k` in `d` dimensions.
pub fn poisson_multiplier(k: u32, d: usize) -> f64 {
    let w2 = d as f64 * (k as f64) * (k as f64);
    1.0 / (1.0 + 4.0 * PI * PI * w2)
}

fn sample_pair(grid: &Grid, tone: &MultiTone) -> (Vec<f64>, Vec<f64>) {
    let solved = MultiTone {
        tones: tone
            .tones
            .iter()
            .map(|t| {
                let mut t = *t;
                t.amplitude *= poisson_multiplier(t.freq, grid.d());
                t
            })
            .collect(),
    };
    let anchors = grid.anchors();
    (
        anchors.iter().map(|x| tone.eval(x)).collect(),
        anchors.iter().map(|x| solved.eval(x)).collect(),
    )
}

impl ToyTask {
    pub fn poisson(cfg: &TaskConfig, seed: u64) -> Result<Self> {
        if cfg.n_train == 0 || cfg.n_test == 0 {
            return Err(Error::InvalidGrid("task needs at least one train and one test sample".into()));
        }
        if !(cfg.amplitude.is_finite() && cfg.amplitude > 0.0) || cfg.tones == 0 {
            return Err(Error::InvalidGrid("task needs positive amplitude and at least one tone".into()));
        }
        let grid = Grid::new(cfg.d, cfg.m)?;
        if 2 * cfg.max_freq as usize >= cfg.m {
            return Err(Error::InvalidGrid(format!("max_freq {} is not resolved on m={}", cfg.max_freq, cfg.m)));
        }
        let draw = |offset: u64, count: usize| -> Result<(Fields, Fields)> {
            let mut xs = Vec::with_capacity(count * grid.n());
            let mut ys = Vec::with_capacity(count * grid.n());
            for s in 0..count as u64 {
                let mut tone = MultiTone::random(seed.wrapping_mul(1_000_003).wrapping_add(offset + s), cfg.tones, cfg.max_freq);
                tone.tones.iter_mut().for_each(|t| t.amplitude *= cfg.amplitude);
                let (x, y) = sample_pair(&grid, &tone);
                xs.extend(x);
                ys.extend(y);
            }
            Ok((Fields::new(count, 1, grid, xs)?, Fields::new(count, 1, grid, ys)?))
        };
        let (train_inputs, train_targets) = draw(0, cfg.n_train)?;
        let (test_inputs, test_targets) = draw(500_000, cfg.n_test)?;
        Ok(Self { grid, train_inputs, train_targets, test_inputs, test_targets, seed })
    }

    /// Multiply the input fields by `k`; targets are left unchanged.
    pub fn with_input_scale(mut self, k: f64) -> Self {
        self.train_inputs.scale(k);
        self.test_inputs.scale(k);
        self
    }
}

/// Mean over the batch of `‖p − u‖₂ / ‖u‖₂`, and the gradient with respect to
/// `p` of the smooth training objective `mean ½ (‖p − u‖₂ / ‖u‖₂)²`.
pub fn relative_l2(pred: &Fields, target: &Fields) -> Result<(f64, Fields)> {
    if pred.data.len() != target.data.len() || pred.batch != target.batch {
        return Err(Error::ShapeMismatch("prediction and target shapes differ".into()));
    }
    let per = pred.data.len() / pred.batch.max(1);
    let mut grad = pred.clone();
    let mut total = 0.0;
    for b in 0..pred.batch {
        let p = &pred.data[b * per..(b + 1) * per];
        let u = &target.data[b * per..(b + 1) * per];
        let diff: f64 = p.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        total += diff / norm;
        let g = &mut grad.data[b * per..(b + 1) * per];
        for ((gv, a), t) in g.iter_mut().zip(p).zip(u) {
            *gv = (a - t) / (norm * norm * pred.batch as f64);
        }
    }
    Ok((total / pred.batch as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{dft, FreqIndex};
    use crate::{PrecisionSystem, ScalarField};

    #[test]
    fn targets_are_the_spectral_solve() {
        let cfg = TaskConfig { n_train: 2, n_test: 1, ..TaskConfig::default() };
        let task = ToyTask::poisson(&cfg, 4).unwrap();
        let f = ScalarField::new(task.grid, task.train_inputs.field(0, 0).to_vec()).unwrap();
        let u = ScalarField::new(task.grid, task.train_targets.field(0, 0).to_vec()).unwrap();
        let fs = dft(&f, &PrecisionSystem::Exact).unwrap();
        let us = dft(&u, &PrecisionSystem::Exact).unwrap();
        for w in -10i64..=10 {
            let omega = FreqIndex(vec![w]);
            let want = fs.coeff(&omega) * poisson_multiplier(w.unsigned_abs() as u32, 1);
            assert!((us.coeff(&omega) - want).norm() < 1e-13, "ω={w}");
        }
        assert_eq!(ToyTask::poisson(&cfg, 4).unwrap(), task);
    }

    #[test]
    fn loss_and_gradient() {
        let grid = Grid::new(1, 4).unwrap();
        let t = Fields::new(1, 1, grid, vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        let (l, g) = relative_l2(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data.iter().all(|&x| x == 0.0));
        let p = Fields::new(1, 1, grid, vec![3.0, 5.0, 4.0, 0.0]).unwrap();
        let (l, g) = relative_l2(&p, &t).unwrap();
        assert_eq!(l, 1.0);
        // ‖u‖² = 25
        assert_eq!(g.data, vec![0.0, 0.2, 0.0, 0.0]);
    }
}
