use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Model, ModelWeights, NeuralError, Tensor4};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `|a − f| / max(|a|, |f|, 1e-3·scale)`; the floor keeps entries with
/// near-zero derivatives from dominating.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error_params: f64,
    pub max_rel_error_input: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_params.max(self.max_rel_error_input)
    }
}

/// At most `cap` evenly spaced indices of `0..len`.
fn sample(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        (0..len).collect()
    } else {
        (0..cap).map(|i| i * len / cap).collect()
    }
}

fn max_error(pairs: &[(f64, f64)]) -> f64 {
    let scale = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    pairs.iter().map(|&(a, f)| relative_error(a, f, scale)).fold(0.0, f64::max)
}

/// Compares reverse-mode gradients of `⟨c, model(inputs)⟩` for a fixed random
/// cotangent `c` with central differences. At most `per_tensor` entries of each
/// parameter tensor and input are perturbed.
pub fn grad_check(
    model: &Model,
    weights: &ModelWeights,
    inputs: &[Tensor4],
    seed: u64,
    per_tensor: usize,
) -> Result<GradCheckReport, NeuralError> {
    let cache = model.forward_cached(weights, inputs)?;
    let out_dims = cache.output().dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cot: Vec<f64> = (0..out_dims.iter().product::<usize>()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let probe = |w: &ModelWeights, x: &[Tensor4]| -> Result<f64, NeuralError> {
        let y = model.forward(w, x)?;
        Ok(y.data().iter().zip(&cot).map(|(a, b)| a * b).sum())
    };
    let grads = model.backward(weights, &cache, Tensor4::from_vec(out_dims, cot.clone())?)?;

    let mut param_pairs = Vec::new();
    let mut w = weights.clone();
    let names: Vec<String> = weights.iter().map(|(n, _)| n.clone()).collect();
    for name in &names {
        let len = weights.get(name)?.data.len();
        for i in sample(len, per_tensor) {
            let orig = weights.get(name)?.data[i];
            w.get_mut(name)?.data[i] = orig + FD_STEP;
            let plus = probe(&w, inputs)?;
            w.get_mut(name)?.data[i] = orig - FD_STEP;
            let minus = probe(&w, inputs)?;
            w.get_mut(name)?.data[i] = orig;
            param_pairs.push((grads.params[name][i], (plus - minus) / (2.0 * FD_STEP)));
        }
    }

    let mut input_pairs = Vec::new();
    let mut xs = inputs.to_vec();
    for k in 0..inputs.len() {
        for i in sample(inputs[k].data().len(), per_tensor) {
            let orig = inputs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_STEP;
            let plus = probe(weights, &xs)?;
            xs[k].data_mut()[i] = orig - FD_STEP;
            let minus = probe(weights, &xs)?;
            xs[k].data_mut()[i] = orig;
            input_pairs.push((grads.inputs[k].data()[i], (plus - minus) / (2.0 * FD_STEP)));
        }
    }

    Ok(GradCheckReport {
        max_rel_error_params: max_error(&param_pairs),
        max_rel_error_input: max_error(&input_pairs),
        checked: param_pairs.len() + input_pairs.len(),
    })
}
