use std::collections::BTreeMap;

use crate::neural::ModelWeights;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, moments: BTreeMap::new() }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Advances the step counter; call once before the updates of one step.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Updates one named parameter slice in place.
    pub fn update(&mut self, name: &str, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len(), "gradient length for {name}");
        assert!(self.t > 0, "begin_step must precede update");
        let (m, v) = self
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; params.len()], vec![0.0; params.len()]));
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
        }
    }

    /// One step over every tensor of `w`, in name order.
    pub fn step(&mut self, w: &mut ModelWeights, grads: &BTreeMap<String, Vec<f64>>) {
        self.begin_step();
        for (name, t) in w.iter_mut() {
            if let Some(g) = grads.get(name) {
                self.update(name, &mut t.data, g);
            }
        }
    }
}
