use rand::Rng;

use super::{Matrix, RngStream};
use crate::error::{Error, Result};

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("softmax input must be finite"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place softmax for callers that already validated their input.
pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `gamma ⊙ (v − mean)/sqrt(var + eps) + beta`, population variance.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gamma.len() != v.len() || beta.len() != v.len() {
        return Err(Error::invalid(format!(
            "layer_norm: lengths v={}, gamma={}, beta={}",
            v.len(),
            gamma.len(),
            beta.len()
        )));
    }
    if v.is_empty() {
        return Err(Error::invalid("layer_norm of an empty vector"));
    }
    if eps <= 0.0 {
        return Err(Error::invalid("layer_norm eps must be positive"));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    Ok(v.iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| g * (x - mean) * inv + b)
        .collect())
}

/// Central-difference gradient of `loss` at `params`.
pub fn finite_diff_grad<F>(mut loss: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite difference step must be positive"));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Evaluation(format!(
                "loss not finite around coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Glorot-uniform matrix: entries in `[-a, a]` with `a = sqrt(6/(rows+cols))`.
pub fn xavier_init(rows: usize, cols: usize, stream: RngStream) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("xavier_init needs nonzero dimensions"));
    }
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = stream.rng();
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Relative error `‖a−b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-300 {
        0.0
    } else {
        diff / denom
    }
}
