//! Relative mean-squared-error loss and the AdamW optimizer with decoupled
//! weight decay.

use crate::error::{Error, Result};
use ndarray::Array2;

/// Denominator floor of the relative MSE, preventing blow-up at zero
/// reference entries.
pub const REL_MSE_EPS: f64 = 1e-4;

/// (1/m) sum_i (pred_i - ref_i)^2 / (ref_i^2 + eps), averaged over every
/// scalar entry of the batch.
pub fn rel_mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    Ok(rel_mse_loss_grad(pred, target)?.0)
}

/// Loss together with its gradient with respect to the prediction.
pub fn rel_mse_loss_grad(
    pred: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Dimension {
            expected: target.len(),
            got: pred.len(),
        });
    }
    let count = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.raw_dim());
    for ((g, &p), &t) in grad.iter_mut().zip(pred.iter()).zip(target.iter()) {
        let denom = t * t + REL_MSE_EPS;
        let diff = p - t;
        loss += diff * diff / denom;
        *g = 2.0 * diff / (denom * count);
    }
    Ok((loss / count, grad))
}

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// AdamW: bias-corrected first/second moments plus weight decay applied
/// directly to the parameters (not through the gradient).
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    /// `block_sizes` mirrors the flat parameter blocks of the model.
    pub fn new(cfg: AdamWConfig, block_sizes: &[usize]) -> Self {
        AdamW {
            cfg,
            step: 0,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameter blocks. Gradients must be finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                expected: self.m.len(),
                got: params.len(),
            });
        }
        for g in grads.iter() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::OptStep("non-finite gradient".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p_block, g_block), (m_block, v_block)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p_block.len() {
                let g = g_block[i];
                m_block[i] = c.beta1 * m_block[i] + (1.0 - c.beta1) * g;
                v_block[i] = c.beta2 * v_block[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m_block[i] / bc1;
                let v_hat = v_block[i] / bc2;
                p_block[i] -=
                    c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * p_block[i]);
            }
        }
        Ok(())
    }
}
