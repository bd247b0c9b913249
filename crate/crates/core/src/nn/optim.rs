use alloc::vec::Vec;

use super::{Gradients, ModelGraph, NnError, Params};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f32, beta2: f32, epsilon: f32 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::adam(), learning_rate: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    steps: u64,
    first_moment: Vec<Option<Params>>,
    second_moment: Vec<Option<Params>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig) -> Result<Self, NnError> {
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(NnError::LearningRate(config.learning_rate));
        }
        Ok(Self { config, steps: 0, first_moment: Vec::new(), second_moment: Vec::new() })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Adam first moments, once at least one step has run.
    pub fn first_moment(&self) -> &[Option<Params>] {
        &self.first_moment
    }

    pub fn step(&mut self, model: &mut ModelGraph, grads: &Gradients) -> Result<(), NnError> {
        if grads.layers.len() != model.layers().len() {
            return Err(NnError::ParameterShape { layer: grads.layers.len().min(model.layers().len()) });
        }
        for (i, (p, g)) in model.params().iter().zip(&grads.layers).enumerate() {
            let ok = match (p, g) {
                (None, None) => true,
                (Some(p), Some(g)) => p.weight.len() == g.weight.len() && p.bias.len() == g.bias.len(),
                _ => false,
            };
            if !ok {
                return Err(NnError::ParameterShape { layer: i });
            }
        }
        self.steps += 1;
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in model.params_mut().iter_mut().zip(&grads.layers) {
                    if let (Some(p), Some(g)) = (p, g) {
                        for (v, d) in p.values_mut().zip(g.values()) {
                            *v -= lr * d;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.first_moment.is_empty() {
                    let zeros: Vec<Option<Params>> = grads
                        .layers
                        .iter()
                        .map(|g| g.as_ref().map(|g| Params::zeros(g.weight.len(), g.bias.len())))
                        .collect();
                    self.first_moment = zeros.clone();
                    self.second_moment = zeros;
                }
                let t = self.steps as f64;
                let bc1 = (1.0 - libm::pow(beta1 as f64, t)) as f32;
                let bc2 = (1.0 - libm::pow(beta2 as f64, t)) as f32;
                let layers = model
                    .params_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()));
                for ((p, g), (m, v)) in layers {
                    if let (Some(p), Some(g), Some(m), Some(v)) = (p, g, m, v) {
                        let it = p.values_mut().zip(g.values()).zip(m.values_mut().zip(v.values_mut()));
                        for ((theta, &grad), (m, v)) in it {
                            *m = beta1 * *m + (1.0 - beta1) * grad;
                            *v = beta2 * *v + (1.0 - beta2) * grad * grad;
                            let m_hat = *m / bc1;
                            let v_hat = *v / bc2;
                            *theta -= lr * m_hat / (libm::sqrtf(v_hat) + epsilon);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
