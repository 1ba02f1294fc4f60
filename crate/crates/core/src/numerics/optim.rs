use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Adam moments for a fixed list of parameter matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(shapes: &[(usize, usize)], lr: f64) -> Self {
        OptimizerState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            second: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&Matrix], lr: f64) -> Self {
        let shapes: Vec<_> = params.iter().map(|m| m.shape()).collect();
        Self::new(&shapes, lr)
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut OptimizerState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::invalid(format!(
            "adam_step: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first[k].shape() {
            return Err(Error::invalid(format!(
                "adam_step: shape mismatch at parameter {k}: {:?} vs {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite gradient at parameter {k}"
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first[k].as_mut_slice();
        let v = state.second[k].as_mut_slice();
        for (((pi, gi), mi), vi) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *pi -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
    }
    Ok(())
}
