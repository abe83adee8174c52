use std::collections::BTreeMap;

use super::layers::{
    activation_backward, activation_forward, conv2d_periodic, conv2d_periodic_backward, conv_transpose2d_periodic,
    conv_transpose2d_periodic_backward, spectral_conv, spectral_conv_backward,
};
use super::{Activation, ModelWeights, NeuralError, Tensor4};
use crate::allen_cahn::double_well;
use crate::dendrite::{interp_h, DendriteParams};

/// One node of a fixed feed-forward network. Operands refer to earlier nodes.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input(usize),
    Conv { x: usize, weight: String, bias: Option<String>, stride: usize },
    ConvT { x: usize, weight: String, bias: Option<String>, stride: usize },
    Spectral { x: usize, re: String, im: String, modes: usize },
    Act { x: usize, act: Activation },
    Add(usize, usize),
    Concat(usize, usize),
    /// `φ − (dt/τ)∇φE2(φ, U)` on the channels of two nodes.
    Reaction { phi: usize, u: usize, params: DendriteParams },
}

/// Reverse-mode gradients of a scalar probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: BTreeMap<String, Vec<f64>>,
    pub inputs: Vec<Tensor4>,
}

/// A network as an ordered list of layer applications; the last node is the output.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Op>,
    inputs: usize,
}

fn kernel_dims(w: &ModelWeights, name: &str) -> Result<[usize; 4], NeuralError> {
    let t = w.get(name)?;
    match t.shape[..] {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(NeuralError::WeightMismatch(format!("{name} must have rank 4, got {:?}", t.shape))),
    }
}

fn bias<'a>(w: &'a ModelWeights, name: &Option<String>) -> Result<Option<&'a [f64]>, NeuralError> {
    name.as_ref().map(|n| w.get(n).map(|t| t.data.as_slice())).transpose()
}

fn reaction_terms(f: f64, t: f64, p: &DendriteParams) -> (f64, f64, f64) {
    let e2 = p.eps * p.eps;
    let s = p.dt / p.tau;
    let ch = p.lambda0 / p.eps;
    let value = f - s * ((double_well(f).1 - p.beta * f) / e2 + ch * interp_h(f).1 * t);
    let d_phi = 1.0 - s * ((3.0 * f * f - 1.0 - p.beta) / e2 + ch * 4.0 * f * (f * f - 1.0) * t);
    let d_u = -s * ch * interp_h(f).1;
    (value, d_phi, d_u)
}

impl Tape {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    pub(crate) fn push(&mut self, op: Op) -> usize {
        if let Op::Input(i) = op {
            self.inputs = self.inputs.max(i + 1);
        }
        self.nodes.push(op);
        self.nodes.len() - 1
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Evaluates every node and keeps all activations for [`Tape::backward`].
    pub fn forward(&self, w: &ModelWeights, inputs: &[Tensor4]) -> Result<Vec<Tensor4>, NeuralError> {
        if inputs.len() != self.inputs {
            return Err(NeuralError::Shape(format!("expected {} inputs, got {}", self.inputs, inputs.len())));
        }
        let mut acts: Vec<Tensor4> = Vec::with_capacity(self.nodes.len());
        for op in &self.nodes {
            let out = match op {
                Op::Input(i) => inputs[*i].clone(),
                Op::Conv { x, weight, bias: b, stride } => {
                    let wd = kernel_dims(w, weight)?;
                    conv2d_periodic(&acts[*x], &w.get(weight)?.data, wd, bias(w, b)?, *stride)?
                }
                Op::ConvT { x, weight, bias: b, stride } => {
                    let wd = kernel_dims(w, weight)?;
                    conv_transpose2d_periodic(&acts[*x], &w.get(weight)?.data, wd, bias(w, b)?, *stride)?
                }
                Op::Spectral { x, re, im, modes } => {
                    let r = w.get(re)?;
                    let (ci, co) = (r.shape[0], r.shape[1]);
                    spectral_conv(&acts[*x], &r.data, &w.get(im)?.data, ci, co, *modes)?
                }
                Op::Act { x, act } => activation_forward(&acts[*x], *act),
                Op::Add(a, b) => {
                    if acts[*a].dims() != acts[*b].dims() {
                        return Err(NeuralError::Shape("add operands differ".into()));
                    }
                    let mut out = acts[*a].clone();
                    out.add_assign(&acts[*b]);
                    out
                }
                Op::Concat(a, b) => Tensor4::concat(&acts[*a], &acts[*b])?,
                Op::Reaction { phi, u, params } => {
                    let (f, t) = (&acts[*phi], &acts[*u]);
                    if f.dims() != t.dims() {
                        return Err(NeuralError::Shape(format!("phi {:?} vs U {:?}", f.dims(), t.dims())));
                    }
                    let data = f.data().iter().zip(t.data()).map(|(&a, &b)| reaction_terms(a, b, params).0).collect();
                    Tensor4::from_vec(f.dims(), data)?
                }
            };
            acts.push(out);
        }
        Ok(acts)
    }

    /// Pulls the output cotangent `g` back through the recorded activations.
    pub fn backward(&self, w: &ModelWeights, acts: &[Tensor4], g: Tensor4) -> Result<Gradients, NeuralError> {
        let last = self.nodes.len().checked_sub(1).ok_or_else(|| NeuralError::Shape("empty network".into()))?;
        if acts.len() != self.nodes.len() || acts[last].dims() != g.dims() {
            return Err(NeuralError::Shape("cotangent does not match the recorded forward pass".into()));
        }
        let mut cot: Vec<Option<Tensor4>> = vec![None; self.nodes.len()];
        cot[last] = Some(g);
        let mut params: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut inputs: Vec<Option<Tensor4>> = vec![None; self.inputs];
        let accumulate = |slot: &mut Option<Tensor4>, t: Tensor4| match slot {
            Some(s) => s.add_assign(&t),
            None => *slot = Some(t),
        };
        let mut add_param = |name: &str, v: Vec<f64>| match params.get_mut(name) {
            Some(acc) => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
            None => {
                params.insert(name.to_string(), v);
            }
        };
        for idx in (0..self.nodes.len()).rev() {
            let Some(gy) = cot[idx].take() else { continue };
            match &self.nodes[idx] {
                Op::Input(i) => accumulate(&mut inputs[*i], gy),
                Op::Conv { x, weight, bias: b, stride } => {
                    let wd = kernel_dims(w, weight)?;
                    let gr = conv2d_periodic_backward(&acts[*x], &w.get(weight)?.data, wd, *stride, &gy)?;
                    add_param(weight, gr.weight);
                    if let Some(bn) = b {
                        add_param(bn, gr.bias);
                    }
                    accumulate(&mut cot[*x], gr.input);
                }
                Op::ConvT { x, weight, bias: b, stride } => {
                    let wd = kernel_dims(w, weight)?;
                    let gr = conv_transpose2d_periodic_backward(&acts[*x], &w.get(weight)?.data, wd, *stride, &gy)?;
                    add_param(weight, gr.weight);
                    if let Some(bn) = b {
                        add_param(bn, gr.bias);
                    }
                    accumulate(&mut cot[*x], gr.input);
                }
                Op::Spectral { x, re, im, modes } => {
                    let r = w.get(re)?;
                    let (ci, co) = (r.shape[0], r.shape[1]);
                    let gr = spectral_conv_backward(&acts[*x], &r.data, &w.get(im)?.data, ci, co, *modes, &gy)?;
                    add_param(re, gr.re);
                    add_param(im, gr.im);
                    accumulate(&mut cot[*x], gr.input);
                }
                Op::Act { x, act } => {
                    let gx = activation_backward(&acts[*x], *act, &gy);
                    accumulate(&mut cot[*x], gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut cot[*b], gy.clone());
                    accumulate(&mut cot[*a], gy);
                }
                Op::Concat(a, b) => {
                    let (ga, gb) = gy.split_channels(acts[*a].channels());
                    accumulate(&mut cot[*b], gb);
                    accumulate(&mut cot[*a], ga);
                }
                Op::Reaction { phi, u, params: p } => {
                    let (f, t) = (&acts[*phi], &acts[*u]);
                    let mut gf = Vec::with_capacity(gy.data().len());
                    let mut gu = Vec::with_capacity(gy.data().len());
                    for ((&a, &b), &c) in f.data().iter().zip(t.data()).zip(gy.data()) {
                        let (_, dp, du) = reaction_terms(a, b, p);
                        gf.push(dp * c);
                        gu.push(du * c);
                    }
                    accumulate(&mut cot[*u], Tensor4::from_vec(t.dims(), gu)?);
                    accumulate(&mut cot[*phi], Tensor4::from_vec(f.dims(), gf)?);
                }
            }
        }
        // Parameters the output does not depend on get zero gradients.
        for (name, t) in w.iter() {
            params.entry(name.clone()).or_insert_with(|| vec![0.0; t.data.len()]);
        }
        let mut shapes = vec![[1usize; 4]; self.inputs];
        for (op, a) in self.nodes.iter().zip(acts) {
            if let Op::Input(i) = op {
                shapes[*i] = a.dims();
            }
        }
        let inputs = inputs.into_iter().zip(shapes).map(|(t, d)| t.unwrap_or_else(|| Tensor4::zeros(d))).collect();
        Ok(Gradients { params, inputs })
    }
}
