use num_complex::Complex64;

use super::plan::{EinsumPlan, LoweringMode};
use super::spec::EinsumSpec;
use crate::error::{Error, Result};
use crate::precision::PrecisionSystem;

/// Dense row-major complex tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub shape: Vec<usize>,
    pub data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> Complex64) -> Self {
        let n: usize = shape.iter().product();
        Self { shape, data: (0..n).map(&mut f).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Largest elementwise modulus of the difference, relative to `other`'s largest modulus.
    pub fn max_rel_diff(&self, other: &ComplexTensor) -> f64 {
        let scale = other.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / scale
    }
}

fn strides_for(labels: &[u8], shape: &[usize], axes: &[u8]) -> Vec<usize> {
    let mut row = vec![0usize; labels.len()];
    let mut s = 1;
    for k in (0..labels.len()).rev() {
        row[k] = s;
        s *= shape[k];
    }
    axes.iter()
        .map(|a| labels.iter().position(|l| l == a).map_or(0, |k| row[k]))
        .collect()
}

/// Visit every index of `dims` in row-major order, passing the flat offset of
/// each tensor described by `strides`.
fn walk(dims: &[usize], strides: &[Vec<usize>], base: &[usize], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims.len()];
    let mut off = base.to_vec();
    loop {
        f(&off);
        let mut ax = dims.len();
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            for (o, s) in off.iter_mut().zip(strides) {
                *o += s[ax];
            }
            if idx[ax] < dims[ax] {
                break;
            }
            for (o, s) in off.iter_mut().zip(strides) {
                *o -= s[ax] * dims[ax];
            }
            idx[ax] = 0;
        }
    }
}

/// `(a+bi)(c+di) = (ac − bd) + (ad + bc)i` with every real product and sum rounded.
pub fn complex_mul_via_real(x: Complex64, y: Complex64, sys: &PrecisionSystem) -> Complex64 {
    let ac = sys.round(x.re * y.re);
    let bd = sys.round(x.im * y.im);
    let ad = sys.round(x.re * y.im);
    let bc = sys.round(x.im * y.re);
    Complex64::new(sys.round(ac - bd), sys.round(ad + bc))
}

struct Pair<'a> {
    a: &'a ComplexTensor,
    la: &'a [u8],
    b: &'a ComplexTensor,
    lb: &'a [u8],
    lr: &'a [u8],
}

fn contract_pair(spec: &EinsumSpec, p: Pair<'_>, real: bool, sys: &PrecisionSystem) -> ComplexTensor {
    let summed: Vec<u8> = p
        .la
        .iter()
        .chain(p.lb)
        .copied()
        .filter(|l| !p.lr.contains(l))
        .fold(Vec::new(), |mut v, l| {
            if !v.contains(&l) {
                v.push(l);
            }
            v
        });
    let out_dims: Vec<usize> = p.lr.iter().map(|&l| spec.dim(l)).collect();
    let sum_dims: Vec<usize> = summed.iter().map(|&l| spec.dim(l)).collect();
    let outer = vec![
        strides_for(p.la, &p.a.shape, p.lr),
        strides_for(p.lb, &p.b.shape, p.lr),
    ];
    let inner = vec![
        strides_for(p.la, &p.a.shape, &summed),
        strides_for(p.lb, &p.b.shape, &summed),
    ];
    let mut out = ComplexTensor::zeros(out_dims.clone());
    let mut r = 0usize;
    walk(&out_dims, &outer, &[0, 0], |base| {
        let value = if real {
            // four real contractions over the split operands
            let (mut rr, mut ii, mut ri, mut ir) = (0.0, 0.0, 0.0, 0.0);
            walk(&sum_dims, &inner, base, |o| {
                let (x, y) = (p.a.data[o[0]], p.b.data[o[1]]);
                rr = sys.round(rr + sys.round(x.re * y.re));
                ii = sys.round(ii + sys.round(x.im * y.im));
                ri = sys.round(ri + sys.round(x.re * y.im));
                ir = sys.round(ir + sys.round(x.im * y.re));
            });
            Complex64::new(sys.round(rr - ii), sys.round(ri + ir))
        } else {
            let mut acc = Complex64::new(0.0, 0.0);
            walk(&sum_dims, &inner, base, |o| {
                let prod = sys.round_complex(p.a.data[o[0]] * p.b.data[o[1]]);
                acc = sys.round_complex(acc + prod);
            });
            acc
        };
        out.data[r] = value;
        r += 1;
    });
    out
}

fn check_operands(spec: &EinsumSpec, operands: &[ComplexTensor]) -> Result<()> {
    if operands.len() != spec.num_operands() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} operands, got {}",
            spec.num_operands(),
            operands.len()
        )));
    }
    for (k, (t, s)) in operands.iter().zip(spec.shapes()).enumerate() {
        if &t.shape != s || t.data.len() != s.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!("operand {k} has shape {:?}, expected {s:?}", t.shape)));
        }
        if let Some(z) = t.data.iter().find(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite { value: if z.re.is_finite() { z.im } else { z.re }, context: format!("operand {k}") });
        }
    }
    Ok(())
}

fn all_labels(spec: &EinsumSpec) -> Vec<u8> {
    let mut labels = spec.output().to_vec();
    for t in spec.inputs() {
        for &l in t {
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
    }
    labels
}

/// Single-shot contraction over every label at once. `real` multiplies
/// through [`complex_mul_via_real`]; otherwise native complex products.
fn monolithic(spec: &EinsumSpec, operands: &[ComplexTensor], sys: &PrecisionSystem, real: bool) -> ComplexTensor {
    let labels = all_labels(spec);
    let out_dims = spec.output_shape();
    let summed = &labels[spec.output().len()..];
    let sum_dims: Vec<usize> = summed.iter().map(|&l| spec.dim(l)).collect();
    let outer: Vec<Vec<usize>> =
        spec.inputs().iter().zip(operands).map(|(l, t)| strides_for(l, &t.shape, spec.output())).collect();
    let inner: Vec<Vec<usize>> =
        spec.inputs().iter().zip(operands).map(|(l, t)| strides_for(l, &t.shape, summed)).collect();
    let zero = vec![0usize; operands.len()];
    let mut out = ComplexTensor::zeros(out_dims.clone());
    let mut r = 0usize;
    walk(&out_dims, &outer, &zero, |base| {
        let mut acc = Complex64::new(0.0, 0.0);
        walk(&sum_dims, &inner, base, |o| {
            let mut prod = operands[0].data[o[0]];
            for (t, &off) in operands.iter().zip(o).skip(1) {
                prod = if real {
                    complex_mul_via_real(prod, t.data[off], sys)
                } else {
                    sys.round_complex(prod * t.data[off])
                };
            }
            acc = sys.round_complex(acc + prod);
        });
        out.data[r] = acc;
        r += 1;
    });
    out
}

/// Exact single-shot contraction.
pub fn reference_contract(spec: &EinsumSpec, operands: &[ComplexTensor]) -> Result<ComplexTensor> {
    check_operands(spec, operands)?;
    Ok(monolithic(spec, operands, &PrecisionSystem::Exact, false))
}

fn finite(t: &ComplexTensor) -> bool {
    t.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Run `plan` on `operands`, rounding every multiply and accumulate under `sys`.
pub fn execute(
    plan: &EinsumPlan,
    operands: &[ComplexTensor],
    sys: &PrecisionSystem,
    mode: LoweringMode,
) -> Result<ComplexTensor> {
    let spec = &plan.spec;
    check_operands(spec, operands)?;
    if mode == LoweringMode::AllReal {
        let out = monolithic(spec, operands, sys, true);
        return if finite(&out) { Ok(out) } else { Err(Error::ContractionOverflow { step: 0 }) };
    }
    let k = spec.num_operands();
    let mut slots: Vec<Option<(ComplexTensor, Vec<u8>)>> =
        operands.iter().cloned().zip(spec.inputs().iter().cloned()).map(Some).collect();
    for (s, step) in plan.steps.iter().enumerate() {
        let (a, la) = slots[step.left].take().ok_or_else(|| Error::Einsum(format!("operand {} reused", step.left)))?;
        let (b, lb) = slots[step.right].take().ok_or_else(|| Error::Einsum(format!("operand {} reused", step.right)))?;
        let lr: Vec<u8> = step.equation.rsplit("->").next().unwrap_or("").bytes().collect();
        let real = mode.step_is_real(lr.len());
        let out = contract_pair(spec, Pair { a: &a, la: &la, b: &b, lb: &lb, lr: &lr }, real, sys);
        if !finite(&out) {
            return Err(Error::ContractionOverflow { step: s });
        }
        debug_assert_eq!(slots.len(), k + s);
        slots.push(Some((out, lr)));
    }
    let (out, _) = slots.pop().flatten().ok_or_else(|| Error::Einsum("empty plan".into()))?;
    Ok(out)
}
