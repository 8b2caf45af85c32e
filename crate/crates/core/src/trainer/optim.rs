use serde::Serialize;

use super::{OptimizerKind, TrainConfig, TrainError};
use crate::numerics::Tensor;

/// Outcome of [`clip_gradients`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClipReport {
    /// Global L2 norm before clipping.
    pub norm: f64,
    /// Factor every gradient was multiplied by (1 when not clipped).
    pub scale: f64,
    pub clipped: bool,
}

/// Rescales all gradients together when their global L2 norm exceeds `max_norm`.
pub fn clip_gradients(grads: &mut [Tensor], max_norm: f64) -> Result<ClipReport, TrainError> {
    if !(max_norm > 0.0) {
        return Err(TrainError::Config(format!("clip norm must be positive, got {max_norm}")));
    }
    let norm = grads.iter().map(Tensor::squared_norm).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        Ok(ClipReport {
            norm,
            scale,
            clipped: true,
        })
    } else {
        Ok(ClipReport {
            norm,
            scale: 1.0,
            clipped: false,
        })
    }
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    },
}

impl Optimizer {
    pub fn new(config: &TrainConfig, shapes: &[&Tensor]) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd {
                lr: config.learning_rate,
            },
            OptimizerKind::Adam => Optimizer::Adam {
                lr: config.learning_rate,
                beta1: config.adam_beta1,
                beta2: config.adam_beta2,
                eps: config.adam_epsilon,
                t: 0,
                m: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
                v: shapes.iter().map(|t| vec![0.0; t.len()]).collect(),
            },
        }
    }

    /// One update of every parameter from its gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient counts differ");
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= *lr * d;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                t,
                m,
                v,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (mk, vk) = (&mut m[k], &mut v[k]);
                    for (i, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        mk[i] = *beta1 * mk[i] + (1.0 - *beta1) * d;
                        vk[i] = *beta2 * vk[i] + (1.0 - *beta2) * d * d;
                        let m_hat = mk[i] / bc1;
                        let v_hat = vk[i] / bc2;
                        *w -= *lr * m_hat / (v_hat.sqrt() + *eps);
                    }
                }
            }
        }
    }
}
