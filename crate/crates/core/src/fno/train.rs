use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, Fields, LayerTape, SpectralLayer};
use super::mode::{Phase, PrecisionMode, PrecisionSchedule};
use super::stabilizer::StabilizerKind;
use super::task::{relative_l2, ToyTask};
use crate::contract::{LoweringMode, PlanCache};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::ModeMask;

pub const MAX_LAYERS: usize = 4;

/// `(grad_R, grad_W)` of one layer.
pub type ParamGrads = (Vec<Complex64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of spectral layers, 1 to 4.
    pub depth: usize,
    /// Hidden channel count.
    pub width: usize,
    /// Low-pass cutoff `K`: modes with `max |ω_k| < K` are kept.
    pub modes: usize,
    pub stabilizer: StabilizerKind,
    pub lowering: LoweringMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { depth: 1, width: 4, modes: 8, stabilizer: StabilizerKind::None, lowering: LoweringMode::default() }
    }
}

/// Stack of spectral layers mapping one channel to one channel. Hidden
/// layers use GELU; the last layer is linear.
#[derive(Debug, Clone)]
pub struct Model {
    pub layers: Vec<SpectralLayer>,
}

#[derive(Debug, Clone)]
pub struct ModelTape {
    tapes: Vec<LayerTape>,
}

impl Model {
    pub fn new(cfg: &ModelConfig, grid: Grid, seed: u64) -> Result<Self> {
        if !(1..=MAX_LAYERS).contains(&cfg.depth) {
            return Err(Error::Unsupported(format!("depth must be 1..={MAX_LAYERS}, got {}", cfg.depth)));
        }
        if cfg.width == 0 {
            return Err(Error::Unsupported("width must be positive".into()));
        }
        let mask = ModeMask::low_pass(&grid, cfg.modes.min(grid.m().div_ceil(2)))?;
        let cache = Arc::new(PlanCache::new());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            let c_in = if l == 0 { 1 } else { cfg.width };
            let c_out = if l + 1 == cfg.depth { 1 } else { cfg.width };
            let mut layer = SpectralLayer::random(c_in, c_out, &mask, Arc::clone(&cache), &mut rng)?;
            layer.activation = if l + 1 == cfg.depth { Activation::Identity } else { Activation::Gelu };
            layer.stabilizer = cfg.stabilizer;
            layer.lowering = cfg.lowering;
            layers.push(layer);
        }
        Ok(Self { layers })
    }

    pub fn set_precision(&mut self, mode: &PrecisionMode) {
        for l in &mut self.layers {
            l.precision = mode.clone();
        }
    }

    pub fn set_stabilizer(&mut self, kind: StabilizerKind) {
        for l in &mut self.layers {
            l.stabilizer = kind;
        }
    }

    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        Ok(Self { layers: self.layers.iter().map(|l| l.with_grid(grid)).collect::<Result<_>>()? })
    }

    pub fn forward(&self, v: &Fields) -> Result<Fields> {
        let mut x = v.clone();
        for l in &self.layers {
            x = l.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_tape(&self, v: &Fields) -> Result<(Fields, ModelTape)> {
        let mut x = v.clone();
        let mut tapes = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (y, t) = l.forward_tape(&x)?;
            tapes.push(t);
            x = y;
        }
        Ok((x, ModelTape { tapes }))
    }

    /// Per-layer `(grad_R, grad_W)` and the input gradient.
    pub fn backward(&self, tape: &ModelTape, upstream: &Fields) -> Result<(Vec<ParamGrads>, Fields)> {
        let mut g = upstream.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, t) in self.layers.iter().zip(&tape.tapes).rev() {
            let lg = l.backward(t, &g)?;
            grads.push((lg.grad_r, lg.grad_w));
            g = lg.grad_v;
        }
        grads.reverse();
        Ok((grads, g))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| 2 * l.r.len() + l.w.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainMode {
    Fixed(PrecisionMode),
    Schedule(PrecisionSchedule),
}

impl TrainMode {
    pub fn mode_at(&self, step: usize, total: usize) -> PrecisionMode {
        match self {
            TrainMode::Fixed(m) => m.clone(),
            TrainMode::Schedule(s) => s.mode_at(step, total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 500, lr: 2e-5, momentum: 0.9, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub phase: Phase,
    pub loss: f64,
    pub nonfinite_stage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
    pub final_test_loss: Option<f64>,
    pub diverged: bool,
}

impl TrainingTrace {
    pub fn first_nonfinite(&self) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.nonfinite_stage.is_some())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,phase,loss,nonfinite_stage")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.step,
                r.phase.as_str(),
                r.loss,
                r.nonfinite_stage.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }
}

fn stage_label(e: &Error) -> Option<String> {
    match e {
        Error::NonFiniteStage { stage } => Some(stage.as_str().to_string()),
        _ => None,
    }
}

/// Test loss under `mode`, or `None` if the forward pass hits a non-finite value.
pub fn evaluate(model: &Model, task: &ToyTask, mode: &PrecisionMode) -> Result<Option<f64>> {
    let mut m = model.clone();
    m.set_precision(mode);
    match m.forward(&task.test_inputs) {
        Ok(pred) => {
            let (loss, _) = relative_l2(&pred, &task.test_targets)?;
            Ok(loss.is_finite().then_some(loss))
        }
        Err(e) if stage_label(&e).is_some() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full-batch SGD with momentum on the relative-L2 loss. A non-finite value
/// ends the run and is recorded in the trace.
pub fn train(task: &ToyTask, model: &mut Model, mode: &TrainMode, cfg: &TrainConfig) -> Result<TrainingTrace> {
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::Unsupported("lr must be positive and momentum in [0, 1)".into()));
    }
    let mut vel: Vec<ParamGrads> = model
        .layers
        .iter()
        .map(|l| (vec![Complex64::new(0.0, 0.0); l.r.len()], vec![0.0; l.w.len()]))
        .collect();
    let mut rows = Vec::with_capacity(cfg.steps);
    let mut last_mode = mode.mode_at(0, cfg.steps.max(1));
    for step in 0..cfg.steps {
        let pm = mode.mode_at(step, cfg.steps);
        model.set_precision(&pm);
        last_mode = pm.clone();
        let phase = pm.phase();
        let fail = |e: Error, loss: f64| -> Result<TraceRow> {
            match stage_label(&e) {
                Some(stage) => Ok(TraceRow { step, phase, loss, nonfinite_stage: Some(stage) }),
                None => Err(e),
            }
        };
        let (pred, tape) = match model.forward_tape(&task.train_inputs) {
            Ok(x) => x,
            Err(e) => {
                rows.push(fail(e, f64::NAN)?);
                return Ok(TrainingTrace { rows, final_test_loss: None, diverged: true });
            }
        };
        let (loss, grad) = relative_l2(&pred, &task.train_targets)?;
        if !loss.is_finite() {
            rows.push(TraceRow { step, phase, loss, nonfinite_stage: Some("loss".into()) });
            return Ok(TrainingTrace { rows, final_test_loss: None, diverged: true });
        }
        let grads = match model.backward(&tape, &grad) {
            Ok((g, _)) => g,
            Err(e) => {
                rows.push(fail(e, loss)?);
                return Ok(TrainingTrace { rows, final_test_loss: None, diverged: true });
            }
        };
        for ((layer, (gr, gw)), (vr, vw)) in model.layers.iter_mut().zip(&grads).zip(&mut vel) {
            for ((r, g), v) in layer.r.iter_mut().zip(gr).zip(vr.iter_mut()) {
                *v = *v * cfg.momentum + g;
                *r -= *v * cfg.lr;
            }
            for ((w, g), v) in layer.w.iter_mut().zip(gw).zip(vw.iter_mut()) {
                *v = *v * cfg.momentum + g;
                *w -= *v * cfg.lr;
            }
        }
        let finite = model
            .layers
            .iter()
            .all(|l| l.r.iter().all(|z| z.re.is_finite() && z.im.is_finite()) && l.w.iter().all(|w| w.is_finite()));
        if !finite {
            rows.push(TraceRow { step, phase, loss, nonfinite_stage: Some("update".into()) });
            return Ok(TrainingTrace { rows, final_test_loss: None, diverged: true });
        }
        rows.push(TraceRow { step, phase, loss, nonfinite_stage: None });
    }
    let final_test_loss = evaluate(model, task, &last_mode)?;
    Ok(TrainingTrace { rows, diverged: final_test_loss.is_none(), final_test_loss })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fno::task::TaskConfig;

    #[test]
    fn short_run_is_deterministic_and_improves() {
        let task = ToyTask::poisson(&TaskConfig { m: 32, n_train: 8, n_test: 4, ..TaskConfig::default() }, 3).unwrap();
        let cfg = TrainConfig { steps: 40, ..TrainConfig::default() };
        let mcfg = ModelConfig { modes: 8, ..ModelConfig::default() };
        let run = || {
            let mut model = Model::new(&mcfg, task.grid, 11).unwrap();
            train(&task, &mut model, &TrainMode::Fixed(PrecisionMode::Full), &cfg).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.rows.len(), 40);
        assert!(a.rows[39].loss < a.rows[0].loss);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 41);
    }

    #[test]
    fn depth_limits() {
        let grid = Grid::new(1, 16).unwrap();
        for depth in [0, 5] {
            assert!(Model::new(&ModelConfig { depth, ..ModelConfig::default() }, grid, 0).is_err());
        }
        let m = Model::new(&ModelConfig { depth: 3, width: 2, modes: 4, ..ModelConfig::default() }, grid, 0).unwrap();
        assert_eq!(m.layers.len(), 3);
        assert_eq!((m.layers[0].c_in, m.layers[2].c_out), (1, 1));
        assert_eq!(m.layers[2].activation, Activation::Identity);
    }
}
