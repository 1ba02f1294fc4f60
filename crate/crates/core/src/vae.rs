//! Per-modality variational autoencoders over genes.
//!
//! Each gene is one instance: its input vector is that gene's expression
//! across the modality's samples. The posterior mean is used as the gene's
//! latent embedding, and the three modality latents are concatenated.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{ExpressionMatrix, Modality};
use crate::error::{Error, Result};
use crate::numerics::tape::{elbo_parts, Tape, Var};
use crate::numerics::{adam_step, xavier_init, Matrix, OptimizerState, RngStream};

/// `mu + exp(logvar/2) ⊙ eps`
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::invalid(format!(
            "reparameterize: lengths mu={}, logvar={}, eps={}",
            mu.len(),
            logvar.len(),
            eps.len()
        )));
    }
    if logvar.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("logvar must be finite"));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, l), e)| m + (0.5 * l).exp() * e)
        .collect())
}

/// Loss terms of one instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Mean squared reconstruction error plus KL to the standard normal.
pub fn elbo_loss(x: &[f64], xhat: &[f64], mu: &[f64], logvar: &[f64]) -> Result<ElboTerms> {
    if x.len() != xhat.len() || mu.len() != logvar.len() {
        return Err(Error::invalid("elbo_loss: length mismatch"));
    }
    let all = x.iter().chain(xhat).chain(mu).chain(logvar);
    if all.clone().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("elbo_loss: non-finite input".into()));
    }
    let (total, recon, kl) = elbo_parts(x, xhat, mu, logvar);
    Ok(ElboTerms { total, recon, kl })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub d_z: usize,
    pub hidden: usize,
    pub epochs: usize,
    /// Genes per step; 0 means full batch.
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            d_z: 16,
            hidden: 64,
            epochs: 300,
            batch: 0,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Weights stored as (out × in), biases as 1 × out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub modality: Modality,
    pub enc_w: Matrix,
    pub enc_b: Matrix,
    pub mu_w: Matrix,
    pub mu_b: Matrix,
    pub logvar_w: Matrix,
    pub logvar_b: Matrix,
    pub dec_w1: Matrix,
    pub dec_b1: Matrix,
    pub dec_w2: Matrix,
    pub dec_b2: Matrix,
}

/// Genes × d_z posterior means, rows in vocabulary order.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentMatrix {
    pub modality: Modality,
    pub values: Matrix,
}

struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    fn get(&self, k: usize) -> Var {
        self.vars[k]
    }
}

impl VaeParams {
    pub fn init(
        modality: Modality,
        input_dim: usize,
        hidden: usize,
        d_z: usize,
        stream: RngStream,
    ) -> Result<Self> {
        let w = |k: u64, r: usize, c: usize| xavier_init(r, c, stream.derive(k));
        Ok(VaeParams {
            modality,
            enc_w: w(0, hidden, input_dim)?,
            enc_b: Matrix::zeros(1, hidden),
            mu_w: w(1, d_z, hidden)?,
            mu_b: Matrix::zeros(1, d_z),
            logvar_w: w(2, d_z, hidden)?,
            logvar_b: Matrix::zeros(1, d_z),
            dec_w1: w(3, hidden, d_z)?,
            dec_b1: Matrix::zeros(1, hidden),
            dec_w2: w(4, input_dim, hidden)?,
            dec_b2: Matrix::zeros(1, input_dim),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.enc_w.cols()
    }

    pub fn d_z(&self) -> usize {
        self.mu_w.rows()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![
            &self.enc_w,
            &self.enc_b,
            &self.mu_w,
            &self.mu_b,
            &self.logvar_w,
            &self.logvar_b,
            &self.dec_w1,
            &self.dec_b1,
            &self.dec_w2,
            &self.dec_b2,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.mu_w,
            &mut self.mu_b,
            &mut self.logvar_w,
            &mut self.logvar_b,
            &mut self.dec_w1,
            &mut self.dec_b1,
            &mut self.dec_w2,
            &mut self.dec_b2,
        ]
    }

    fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self
                .params()
                .into_iter()
                .map(|m| tape.leaf(m.clone()))
                .collect(),
        }
    }

    fn encode_on(&self, tape: &mut Tape, b: &Bound, x: Var) -> (Var, Var) {
        let h = tape.linear(x, b.get(0), b.get(1));
        let h = tape.relu(h);
        let mu = tape.linear(h, b.get(2), b.get(3));
        let lv = tape.linear(h, b.get(4), b.get(5));
        (mu, lv)
    }

    fn decode_on(&self, tape: &mut Tape, b: &Bound, z: Var) -> Var {
        let h = tape.linear(z, b.get(6), b.get(7));
        let h = tape.relu(h);
        tape.linear(h, b.get(8), b.get(9))
    }

    /// Records the batch ELBO for rows `x` with noise `eps` on a tape.
    fn loss_on(&self, tape: &mut Tape, x: &Matrix, eps: Matrix) -> (Bound, Var) {
        let b = self.bind(tape);
        let xv = tape.leaf(x.clone());
        let (mu, lv) = self.encode_on(tape, &b, xv);
        let z = tape.reparam(mu, lv, eps);
        let xhat = self.decode_on(tape, &b, z);
        let loss = tape.elbo(x.clone(), xhat, mu, lv);
        (b, loss)
    }

    /// Batch-mean ELBO with fixed noise.
    pub fn loss(&self, x: &Matrix, eps: &Matrix) -> f64 {
        let mut tape = Tape::new();
        let (_, l) = self.loss_on(&mut tape, x, eps.clone());
        tape.scalar(l)
    }

    /// Loss and gradients (in [`VaeParams::params`] order) with fixed noise.
    pub fn loss_and_grads(&self, x: &Matrix, eps: &Matrix) -> (f64, Vec<Matrix>) {
        let mut tape = Tape::new();
        let (b, l) = self.loss_on(&mut tape, x, eps.clone());
        let mut grads = tape.backward(l);
        let shapes: Vec<_> = self.params().iter().map(|m| m.shape()).collect();
        let g = b
            .vars
            .iter()
            .zip(shapes)
            .map(|(&v, s)| grads.take_or_zeros(v, s))
            .collect();
        (tape.scalar(l), g)
    }

    /// Posterior means for every row of `x`.
    pub fn encode_mu(&self, x: &Matrix) -> Matrix {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let (mu, _) = self.encode_on(&mut tape, &b, xv);
        tape.value(mu).clone()
    }

    pub fn decode(&self, z: &Matrix) -> Matrix {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let zv = tape.leaf(z.clone());
        let out = self.decode_on(&mut tape, &b, zv);
        tape.value(out).clone()
    }
}

/// log1p for count-like modalities, then per-gene z-scores (population
/// standard deviation; constant rows become zeros).
pub fn preprocess(expr: &ExpressionMatrix) -> Matrix {
    let mut m = expr.values.clone();
    if expr.modality.is_count_like() {
        m.as_mut_slice().iter_mut().for_each(|v| *v = v.ln_1p());
    }
    let cols = m.cols() as f64;
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let mean = row.iter().sum::<f64>() / cols;
        let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols).sqrt();
        for v in row.iter_mut() {
            *v = if sd > 1e-12 { (*v - mean) / sd } else { 0.0 };
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct VaeRun {
    pub params: VaeParams,
    pub latent: LatentMatrix,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
}

fn gaussian(rows: usize, cols: usize, stream: RngStream) -> Matrix {
    let mut rng = stream.rng();
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("gaussian draws are finite")
}

pub fn train_vae(expr: &ExpressionMatrix, cfg: &VaeConfig) -> Result<VaeRun> {
    let genes = expr.values.rows();
    let samples = expr.values.cols();
    if genes == 0 || samples == 0 {
        return Err(Error::invalid("train_vae: empty expression matrix"));
    }
    if cfg.d_z == 0 || cfg.hidden == 0 {
        return Err(Error::config("VAE d_z and hidden must be positive"));
    }
    if cfg.d_z >= samples {
        return Err(Error::config(format!(
            "VAE d_z={} must be below the sample count {samples} of {}",
            cfg.d_z,
            expr.modality.as_str()
        )));
    }
    let root = RngStream::new(cfg.seed, expr.modality as u64 + 1);
    let x = preprocess(expr);
    let mut params = VaeParams::init(expr.modality, samples, cfg.hidden, cfg.d_z, root.derive(0))?;
    let mut opt = OptimizerState::for_params(&params.params(), cfg.lr);
    let batch = if cfg.batch == 0 {
        genes
    } else {
        cfg.batch.min(genes)
    };
    let mut order: Vec<usize> = (0..genes).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let es = root.derive_path(&[1, epoch as u64]);
        if batch < genes {
            order.shuffle(&mut es.derive(0).rng());
        }
        let mut sum = 0.0;
        let mut steps = 0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let xb = if batch == genes {
                x.clone()
            } else {
                x.select_rows(chunk)
            };
            let eps = gaussian(xb.rows(), cfg.d_z, es.derive(b as u64 + 1));
            let (loss, grads) = params.loss_and_grads(&xb, &eps);
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "VAE loss diverged at epoch {epoch} ({})",
                    expr.modality.as_str()
                )));
            }
            adam_step(&mut params.params_mut(), &grads, &mut opt)?;
            sum += loss;
            steps += 1;
        }
        history.push(sum / steps as f64);
    }

    let latent = LatentMatrix {
        modality: expr.modality,
        values: params.encode_mu(&x),
    };
    if !latent.values.is_finite() {
        return Err(Error::numeric("VAE latent means are not finite"));
    }
    Ok(VaeRun {
        params,
        latent,
        history,
    })
}

/// Column-wise concatenation in modality order microarray, scrna, snrna.
pub fn fuse_latents(latents: &[LatentMatrix]) -> Result<Matrix> {
    if latents.is_empty() {
        return Err(Error::invalid("fuse_latents: nothing to fuse"));
    }
    let rows = latents[0].values.rows();
    if latents.iter().any(|l| l.values.rows() != rows) {
        return Err(Error::invalid(
            "fuse_latents: latent matrices differ in gene count",
        ));
    }
    let mut sorted: Vec<&LatentMatrix> = latents.iter().collect();
    sorted.sort_by_key(|l| l.modality);
    let parts: Vec<&Matrix> = sorted.iter().map(|l| &l.values).collect();
    Matrix::hcat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::GeneVocab;
    use crate::numerics::{finite_diff_grad, relative_error};

    fn expr(genes: usize, samples: usize, modality: Modality, seed: u64) -> ExpressionMatrix {
        let mut rng = RngStream::new(seed, 0).rng();
        let factor: Vec<f64> = (0..samples)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut data = Vec::new();
        for g in 0..genes {
            let load = (g % 3) as f64 - 1.0;
            for f in &factor {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = load * f + 0.3 * noise;
                data.push(if modality.is_count_like() { v.exp() } else { v });
            }
        }
        ExpressionMatrix::new(
            modality,
            GeneVocab::new((0..genes).map(|g| format!("G{g}")).collect()).unwrap(),
            (0..samples).map(|s| format!("s{s}")).collect(),
            Matrix::from_vec(genes, samples, data).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn reparameterize_examples() {
        assert_eq!(
            reparameterize(&[1.5, -2.0], &[0.3, 0.1], &[0.0, 0.0]).unwrap(),
            vec![1.5, -2.0]
        );
        assert_eq!(
            reparameterize(&[0.0, 0.0], &[0.0, 0.0], &[1.0, -1.0]).unwrap(),
            vec![1.0, -1.0]
        );
        let z = reparameterize(&[0.0], &[2.0 * 2f64.ln()], &[1.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        assert!(reparameterize(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn elbo_examples() {
        let t = elbo_loss(&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(t.kl, 0.0);
        assert!((t.recon - 2.5).abs() < 1e-12);
        let t = elbo_loss(&[1.0, 2.0], &[1.0, 2.0], &[0.3], &[0.2]).unwrap();
        assert_eq!(t.recon, 0.0);
        let t = elbo_loss(&[0.0], &[0.0], &[1.0], &[0.0]).unwrap();
        assert!((t.kl - 0.5).abs() < 1e-12);
        assert!(elbo_loss(&[f64::NAN], &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn kl_is_nonnegative() {
        for k in 0..200 {
            let m = ((k as f64) * 0.37).sin() * 3.0;
            let l = ((k as f64) * 0.71).cos() * 4.0;
            let t = elbo_loss(&[0.0], &[0.0], &[m, -m / 2.0], &[l, -l]).unwrap();
            assert!(t.kl >= -1e-9);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let e = expr(5, 3, Modality::Microarray, 4);
        let x = preprocess(&e);
        let params = VaeParams::init(Modality::Microarray, 3, 4, 2, RngStream::new(9, 9)).unwrap();
        let eps = gaussian(5, 2, RngStream::new(1, 2));
        let (_, grads) = params.loss_and_grads(&x, &eps);
        for (k, g) in grads.iter().enumerate() {
            let orig = params.params()[k].clone();
            let fd = finite_diff_grad(
                |p| {
                    let mut q = params.clone();
                    *q.params_mut()[k] =
                        Matrix::from_vec(orig.rows(), orig.cols(), p.to_vec()).unwrap();
                    q.loss(&x, &eps)
                },
                orig.as_slice(),
                1e-5,
            )
            .unwrap();
            let err = relative_error(g.as_slice(), &fd);
            assert!(err < 1e-4, "param {k}: rel err {err}");
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let e = expr(50, 10, Modality::Microarray, 1);
        let cfg = VaeConfig {
            d_z: 4,
            hidden: 16,
            epochs: 200,
            lr: 5e-3,
            seed: 3,
            ..VaeConfig::default()
        };
        let run = train_vae(&e, &cfg).unwrap();
        assert_eq!(run.history.len(), 200);
        assert!(run.history.last().unwrap() < &run.history[0]);
        assert_eq!(run.latent.values.shape(), (50, 4));
        let again = train_vae(&e, &cfg).unwrap();
        assert_eq!(run.latent, again.latent);

        // Single-sample noise makes per-epoch values jitter; compare
        // consecutive 10-epoch means instead.
        let means: Vec<f64> = run
            .history
            .chunks(10)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        for w in means.windows(2) {
            assert!(w[1] <= w[0] * 1.05, "{w:?}");
        }

        let recon = run.params.decode(&run.latent.values);
        assert_eq!(recon.shape(), (50, 10));
    }

    #[test]
    fn sparse_modalities_are_log_transformed() {
        let e = expr(20, 8, Modality::Scrna, 2);
        let run = train_vae(
            &e,
            &VaeConfig {
                d_z: 3,
                hidden: 8,
                epochs: 20,
                ..VaeConfig::default()
            },
        )
        .unwrap();
        assert!(run.latent.values.is_finite());
    }

    #[test]
    fn d_z_must_compress() {
        let e = expr(10, 4, Modality::Microarray, 1);
        let err = train_vae(
            &e,
            &VaeConfig {
                d_z: 4,
                ..VaeConfig::default()
            },
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn fusion() {
        let l = |m, w: usize| LatentMatrix {
            modality: m,
            values: Matrix::filled(3, w, m as u8 as f64),
        };
        let f = fuse_latents(&[
            l(Modality::Snrna, 4),
            l(Modality::Microarray, 4),
            l(Modality::Scrna, 4),
        ])
        .unwrap();
        assert_eq!(f.cols(), 12);
        assert_eq!(f.row(0)[0], 0.0);
        assert_eq!(f.row(0)[11], 2.0);
        let single = l(Modality::Scrna, 2);
        assert_eq!(fuse_latents(&[single.clone()]).unwrap(), single.values);
        let bad = LatentMatrix {
            modality: Modality::Snrna,
            values: Matrix::zeros(2, 2),
        };
        assert!(fuse_latents(&[single, bad]).is_err());
    }
}
