use serde::{Deserialize, Serialize};

use crate::nn::params::{Grads, ParamSet};
use crate::nn::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OptimizerKind {
    /// Heavy-ball momentum 0.9, no weight decay.
    #[default]
    SgdMomentum,
    Adam,
}

/// Updates only the parameters flagged trainable; the rest are never written.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    learning_rate: T,
    momentum: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: i32,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ParamSet<T>) -> Self {
        let zeros = || params.entries().iter().map(|e| vec![T::zero(); e.value.len()]).collect();
        Optimizer {
            kind,
            learning_rate: T::lit(learning_rate),
            momentum: T::lit(0.9),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            first: zeros(),
            second: if kind == OptimizerKind::Adam { zeros() } else { Vec::new() },
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>, trainable: &[bool]) {
        self.steps += 1;
        let lr = self.learning_rate;
        for (i, entry) in params.entries_mut().iter_mut().enumerate() {
            if !trainable[i] {
                continue;
            }
            let g = &grads.0[i];
            match self.kind {
                OptimizerKind::SgdMomentum => {
                    for ((p, v), &gj) in entry.value.iter_mut().zip(&mut self.first[i]).zip(g) {
                        *v = self.momentum * *v + gj;
                        *p = *p - lr * *v;
                    }
                }
                OptimizerKind::Adam => {
                    let c1 = T::one() - self.beta1.powi(self.steps);
                    let c2 = T::one() - self.beta2.powi(self.steps);
                    for (((p, m), v), &gj) in entry
                        .value
                        .iter_mut()
                        .zip(&mut self.first[i])
                        .zip(&mut self.second[i])
                        .zip(g)
                    {
                        *m = self.beta1 * *m + (T::one() - self.beta1) * gj;
                        *v = self.beta2 * *v + (T::one() - self.beta2) * gj * gj;
                        *p = *p - lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_momentum_accumulates_velocity() {
        let mut params = ParamSet::<f64>::new();
        params.add("w".into(), vec![1], vec![1.0]);
        let grads = Grads(vec![vec![1.0]]);
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, 0.1, &params);
        opt.step(&mut params, &grads, &[true]);
        assert!((params.entries()[0].value[0] - 0.9).abs() < 1e-12);
        opt.step(&mut params, &grads, &[true]);
        // velocity 1.9 after the second step
        assert!((params.entries()[0].value[0] - 0.71).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut params = ParamSet::<f64>::new();
        params.add("w".into(), vec![2], vec![0.0, 0.0]);
        let grads = Grads(vec![vec![3.0, -0.5]]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, &params);
        opt.step(&mut params, &grads, &[true]);
        let v = &params.entries()[0].value;
        assert!((v[0] + 0.01).abs() < 1e-8 && (v[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn masked_parameters_are_untouched() {
        let mut params = ParamSet::<f32>::new();
        params.add("a".into(), vec![1], vec![0.5]);
        params.add("b".into(), vec![1], vec![0.5]);
        let grads = Grads(vec![vec![1.0], vec![1.0]]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, &params);
        opt.step(&mut params, &grads, &[false, true]);
        assert_eq!(params.entries()[0].value[0].to_bits(), 0.5f32.to_bits());
        assert_ne!(params.entries()[1].value[0], 0.5);
    }
}
