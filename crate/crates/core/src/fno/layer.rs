use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mode::PrecisionMode;
use super::stabilizer::{stabilize_backward, stabilize_field, StabilizerKind};
use crate::contract::{execute, parse, ComplexTensor, LoweringMode, PlanCache};
use crate::error::{Error, Result, Stage};
use crate::grid::Grid;
use crate::precision::PrecisionSystem;
use crate::spectral::{dft_modes_values, idft_modes, FreqIndex, ModeMask};

/// Batch of multi-channel fields laid out `[batch][channel][anchor]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fields {
    pub batch: usize,
    pub channels: usize,
    pub grid: Grid,
    pub data: Vec<f64>,
}

impl Fields {
    pub fn new(batch: usize, channels: usize, grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * grid.n() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {batch}x{channels} fields of {} cells",
                data.len(),
                grid.n()
            )));
        }
        Ok(Self { batch, channels, grid, data })
    }

    pub fn zeros(batch: usize, channels: usize, grid: Grid) -> Self {
        Self { batch, channels, grid, data: vec![0.0; batch * channels * grid.n()] }
    }

    pub fn field(&self, b: usize, c: usize) -> &[f64] {
        let n = self.grid.n();
        let s = (b * self.channels + c) * n;
        &self.data[s..s + n]
    }

    pub fn field_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let n = self.grid.n();
        let s = (b * self.channels + c) * n;
        &mut self.data[s..s + n]
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    Identity,
}

const GELU_K: f64 = 0.044_715;

impl Activation {
    /// GELU uses the tanh approximation.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Gelu => {
                let u = (2.0 / PI).sqrt() * (x + GELU_K * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Gelu => {
                let c = (2.0 / PI).sqrt();
                let t = (c * (x + GELU_K * x * x * x)).tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_K * x * x)
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "gelu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::Parse(format!("unknown activation `{s}`"))),
        }
    }
}

/// `σ(W v + iDFT(R · T_K(DFT(stabilize(v)))))`.
#[derive(Debug, Clone)]
pub struct SpectralLayer {
    pub c_in: usize,
    pub c_out: usize,
    grid: Grid,
    modes: Vec<FreqIndex>,
    /// `[in][out][mode]`
    pub r: Vec<Complex64>,
    /// `[in][out]`
    pub w: Vec<f64>,
    pub stabilizer: StabilizerKind,
    pub precision: PrecisionMode,
    pub activation: Activation,
    pub lowering: LoweringMode,
    cache: Arc<PlanCache>,
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTape {
    input: Fields,
    #[allow(dead_code)]
    stabilized: Fields,
    spectra: ComplexTensor,
    pre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub grad_v: Fields,
    pub grad_r: Vec<Complex64>,
    pub grad_w: Vec<f64>,
}

fn stage_of(e: Error) -> Error {
    match e {
        Error::TransformOverflow { .. } => Error::NonFiniteStage { stage: Stage::Fft },
        Error::ContractionOverflow { .. } => Error::NonFiniteStage { stage: Stage::Contraction },
        Error::InverseOverflow { .. } => Error::NonFiniteStage { stage: Stage::Ifft },
        other => other,
    }
}

impl SpectralLayer {
    /// Layer with zero weights.
    pub fn zeros(c_in: usize, c_out: usize, mask: &ModeMask, cache: Arc<PlanCache>) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::ShapeMismatch("channel counts must be positive".into()));
        }
        let modes = mask.kept_modes();
        Ok(Self {
            c_in,
            c_out,
            grid: *mask.grid(),
            r: vec![Complex64::new(0.0, 0.0); c_in * c_out * modes.len()],
            w: vec![0.0; c_in * c_out],
            modes,
            stabilizer: StabilizerKind::None,
            precision: PrecisionMode::Full,
            activation: Activation::Gelu,
            lowering: LoweringMode::default(),
            cache,
        })
    }

    /// Gaussian weights with std `1/√(c_in·K)` for `W` and each part of `R`.
    pub fn random<G: Rng>(c_in: usize, c_out: usize, mask: &ModeMask, cache: Arc<PlanCache>, rng: &mut G) -> Result<Self> {
        let mut layer = Self::zeros(c_in, c_out, mask, cache)?;
        let k = layer.modes.len();
        let normal = Normal::new(0.0, 1.0 / ((c_in * k) as f64).sqrt()).expect("positive std");
        for z in layer.r.iter_mut() {
            *z = Complex64::new(normal.sample(rng), normal.sample(rng));
        }
        for w in layer.w.iter_mut() {
            *w = normal.sample(rng);
        }
        Ok(layer)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> &[FreqIndex] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn r_index(&self, i: usize, o: usize, k: usize) -> usize {
        (i * self.c_out + o) * self.modes.len() + k
    }

    /// The same weights on another grid of the same dimension. Every kept mode
    /// must be resolvable there.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        if grid.d() != self.grid.d() {
            return Err(Error::ShapeMismatch("grid dimension differs".into()));
        }
        if self.modes.iter().any(|w| 2 * w.max_abs() as usize >= grid.m()) {
            return Err(Error::InvalidMask(format!("kept modes do not fit on m={}", grid.m())));
        }
        let mut out = self.clone();
        out.grid = grid;
        Ok(out)
    }

    pub fn set_modes(&mut self, modes: Vec<FreqIndex>) -> Result<()> {
        if modes.len() * self.c_in * self.c_out != self.r.len() {
            return Err(Error::ShapeMismatch("mode count does not match weights".into()));
        }
        ModeMask::from_modes(&self.grid, &modes)?;
        self.modes = modes;
        Ok(())
    }

    fn check_input(&self, v: &Fields) -> Result<()> {
        if v.channels != self.c_in || v.grid != self.grid {
            return Err(Error::ShapeMismatch(format!(
                "layer expects {} channels on m={}, got {} on m={}",
                self.c_in,
                self.grid.m(),
                v.channels,
                v.grid.m()
            )));
        }
        if let Some(&value) = v.data.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite { value, context: "layer input".into() });
        }
        Ok(())
    }

    fn contract(&self, eq: &str, a: ComplexTensor, b: ComplexTensor, sys: &PrecisionSystem) -> Result<ComplexTensor> {
        let spec = parse(eq, &[a.shape.clone(), b.shape.clone()])?;
        let plan = self.cache.get_or_plan(&spec, sys, self.lowering)?;
        execute(&plan, &[a, b], sys, self.lowering).map_err(stage_of)
    }

    fn r_tensor(&self) -> ComplexTensor {
        ComplexTensor { shape: vec![self.c_in, self.c_out, self.modes.len()], data: self.r.clone() }
    }

    pub fn forward(&self, v: &Fields) -> Result<Fields> {
        self.forward_tape(v).map(|(out, _)| out)
    }

    pub fn forward_tape(&self, v: &Fields) -> Result<(Fields, LayerTape)> {
        self.check_input(v)?;
        let (nb, n, k) = (v.batch, self.grid.n(), self.modes.len());
        let tsys = self.precision.transform_sys();
        let csys = self.precision.contraction_sys();

        let mut s = v.clone();
        for b in 0..nb {
            for c in 0..self.c_in {
                stabilize_field(s.field_mut(b, c), self.stabilizer);
            }
        }
        if !s.is_finite() {
            return Err(Error::NonFiniteStage { stage: Stage::PreFft });
        }

        let spectra: Vec<Vec<Complex64>> = (0..nb * self.c_in)
            .into_par_iter()
            .map(|bc| dft_modes_values(&self.grid, s.field(bc / self.c_in, bc % self.c_in), &self.modes, &tsys))
            .collect::<Result<_>>()
            .map_err(stage_of)?;
        let a = ComplexTensor { shape: vec![nb, self.c_in, k], data: spectra.concat() };

        let bspec = self.contract("bim,iom->bom", a.clone(), self.r_tensor(), &csys)?;

        let spatial: Vec<Vec<f64>> = (0..nb * self.c_out)
            .into_par_iter()
            .map(|bo| idft_modes(&self.grid, &self.modes, &bspec.data[bo * k..(bo + 1) * k], &tsys))
            .collect::<Result<_>>()
            .map_err(stage_of)?;

        let mut pre = vec![0.0; nb * self.c_out * n];
        for b in 0..nb {
            for o in 0..self.c_out {
                let dst = &mut pre[(b * self.c_out + o) * n..][..n];
                for i in 0..self.c_in {
                    let wio = self.w[i * self.c_out + o];
                    for (d, x) in dst.iter_mut().zip(v.field(b, i)) {
                        *d += wio * x;
                    }
                }
                if dst.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteStage { stage: Stage::Skip });
                }
                for (d, y) in dst.iter_mut().zip(&spatial[b * self.c_out + o]) {
                    *d += y;
                }
            }
        }
        if pre.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteStage { stage: Stage::Skip });
        }
        let out = Fields {
            batch: nb,
            channels: self.c_out,
            grid: self.grid,
            data: pre.iter().map(|&x| self.activation.apply(x)).collect(),
        };
        let tape = LayerTape { input: v.clone(), stabilized: s, spectra: a, pre };
        Ok((out, tape))
    }

    /// Gradients of a scalar loss given `upstream = ∂L/∂output`. The transform
    /// and contraction adjoints run under the layer's precision mode; weight
    /// gradients accumulate in full precision.
    pub fn backward(&self, tape: &LayerTape, upstream: &Fields) -> Result<LayerGrads> {
        let (nb, n, k) = (tape.input.batch, self.grid.n(), self.modes.len());
        if upstream.batch != nb || upstream.channels != self.c_out || upstream.grid != self.grid {
            return Err(Error::ShapeMismatch("upstream gradient does not match layer output".into()));
        }
        let tsys = self.precision.transform_sys();
        let csys = self.precision.contraction_sys();
        let gp: Vec<f64> = upstream.data.iter().zip(&tape.pre).map(|(g, &x)| g * self.activation.derivative(x)).collect();

        let mut grad_w = vec![0.0; self.c_in * self.c_out];
        let mut grad_v = Fields::zeros(nb, self.c_in, self.grid);
        for b in 0..nb {
            for o in 0..self.c_out {
                let g = &gp[(b * self.c_out + o) * n..][..n];
                for i in 0..self.c_in {
                    let x = tape.input.field(b, i);
                    grad_w[i * self.c_out + o] += g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    let wio = self.w[i * self.c_out + o];
                    for (d, gv) in grad_v.field_mut(b, i).iter_mut().zip(g) {
                        *d += wio * gv;
                    }
                }
            }
        }

        // y = Re Σ_k B_k e^{-iθ_k}  ⇒  ∂L/∂B_k = Σ_x g(x) e^{iθ_k(x)} = n · DFT(g)_k
        let nf = n as f64;
        let gb: Vec<Vec<Complex64>> = (0..nb * self.c_out)
            .into_par_iter()
            .map(|bo| dft_modes_values(&self.grid, &gp[bo * n..(bo + 1) * n], &self.modes, &tsys))
            .collect::<Result<_>>()
            .map_err(stage_of)?;
        let gb = ComplexTensor {
            shape: vec![nb, self.c_out, k],
            data: gb.concat().into_iter().map(|z| z * nf).collect(),
        };
        if gb.data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFiniteStage { stage: Stage::Fft });
        }

        let mut grad_r = vec![Complex64::new(0.0, 0.0); self.r.len()];
        for b in 0..nb {
            for i in 0..self.c_in {
                for o in 0..self.c_out {
                    for kk in 0..k {
                        let a = tape.spectra.data[(b * self.c_in + i) * k + kk];
                        let g = gb.data[(b * self.c_out + o) * k + kk];
                        grad_r[self.r_index(i, o, kk)] += g * a.conj();
                    }
                }
            }
        }

        let r_conj = ComplexTensor {
            shape: vec![self.c_in, self.c_out, k],
            data: self.r.iter().map(|z| z.conj()).collect(),
        };
        let ga = self.contract("bom,iom->bim", gb, r_conj, &csys)?;

        // A_k = (1/n) Σ_x s(x) e^{iθ_k(x)}  ⇒  ∂L/∂s = (1/n) Re Σ_k G_k e^{-iθ_k}
        let gs: Vec<Vec<f64>> = (0..nb * self.c_in)
            .into_par_iter()
            .map(|bi| idft_modes(&self.grid, &self.modes, &ga.data[bi * k..(bi + 1) * k], &tsys))
            .collect::<Result<_>>()
            .map_err(stage_of)?;
        for b in 0..nb {
            for i in 0..self.c_in {
                let g: Vec<f64> = gs[b * self.c_in + i].iter().map(|x| x / nf).collect();
                let back = stabilize_backward(tape.input.field(b, i), &g, self.stabilizer);
                for (d, x) in grad_v.field_mut(b, i).iter_mut().zip(back) {
                    *d += x;
                }
            }
        }
        Ok(LayerGrads { grad_v, grad_r, grad_w })
    }
}
