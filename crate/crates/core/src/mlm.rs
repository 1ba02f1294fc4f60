//! Masked-token transformer encoder over the walk corpus.
//!
//! Token embeddings ξ double as the output layer: logits at a masked
//! position are the final hidden state dotted with every gene row of ξ.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::{adam_step, xavier_init, Matrix, OptimizerState, RngStream};
use crate::walks::Corpus;

const LN_EPS: f64 = 1e-5;

/// Standard transformer sinusoidal encoding of one position.
pub fn sinusoidal_pe(position: usize, d_n: usize) -> Result<Vec<f64>> {
    if d_n == 0 || d_n % 2 == 1 {
        return Err(Error::config(format!(
            "positional width {d_n} must be even and positive"
        )));
    }
    let pos = position as f64;
    let mut v = vec![0.0; d_n];
    for i in 0..d_n / 2 {
        let angle = pos / 10000f64.powf(2.0 * i as f64 / d_n as f64);
        v[2 * i] = angle.sin();
        v[2 * i + 1] = angle.cos();
    }
    Ok(v)
}

fn pe_block(seq_len: usize, d_n: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(seq_len * d_n);
    for t in 0..seq_len {
        data.extend(sinusoidal_pe(t, d_n)?);
    }
    Matrix::from_vec(seq_len, d_n, data)
}

/// Masked positions and their original tokens, per sequence.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MaskPlan {
    pub positions: Vec<Vec<usize>>,
    pub originals: Vec<Vec<usize>>,
}

impl MaskPlan {
    pub fn total(&self) -> usize {
        self.positions.iter().map(Vec::len).sum()
    }

    /// Originals in sequence-major order; matches the logit row order.
    pub fn targets(&self) -> Vec<usize> {
        self.originals.iter().flatten().copied().collect()
    }
}

/// Number of tokens masked out of `maskable`: round half up, at least one.
pub fn mask_count(maskable: usize, rate: f64) -> usize {
    if maskable == 0 {
        return 0;
    }
    let k = (rate * maskable as f64 + 0.5 + 1e-9).floor() as usize;
    k.clamp(1, maskable)
}

/// Replaces a uniform subset of each sequence's gene tokens with [MASK].
pub fn mask_corpus(corpus: &Corpus, rate: f64, stream: RngStream) -> Result<(Corpus, MaskPlan)> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::config(format!("mask rate {rate} not in (0, 1)")));
    }
    let mut out = corpus.clone();
    let mut plan = MaskPlan::default();
    let mut rng = stream.rng();
    for seq in out.sequences.iter_mut() {
        let maskable: Vec<usize> = (0..seq.len()).filter(|&t| corpus.is_gene(seq[t])).collect();
        let k = mask_count(maskable.len(), rate);
        let mut chosen: Vec<usize> = index::sample(&mut rng, maskable.len(), k)
            .into_iter()
            .map(|i| maskable[i])
            .collect();
        chosen.sort_unstable();
        let originals = chosen.iter().map(|&t| seq[t]).collect();
        for &t in &chosen {
            seq[t] = corpus.mask();
        }
        plan.positions.push(chosen);
        plan.originals.push(originals);
    }
    Ok((out, plan))
}

/// Mean cross-entropy over masked positions; rows of `logits` follow
/// [`MaskPlan::targets`].
pub fn mlm_loss(logits: &Matrix, plan: &MaskPlan) -> Result<f64> {
    let targets = plan.targets();
    if targets.is_empty() {
        log::warn!("mlm_loss: no masked positions, loss defined as 0");
        return Ok(0.0);
    }
    if logits.rows() != targets.len() {
        return Err(Error::invalid(format!(
            "mlm_loss: {} logit rows for {} masked positions",
            logits.rows(),
            targets.len()
        )));
    }
    let mut tape = Tape::new();
    let l = tape.leaf(logits.clone());
    if targets.iter().any(|&t| t >= logits.cols()) {
        return Err(Error::invalid("mlm_loss: target outside the logit range"));
    }
    let loss = tape.softmax_xent(l, targets);
    Ok(tape.scalar(loss))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub d_n: usize,
    pub layers: usize,
    pub heads: usize,
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch: usize,
    pub lr: f64,
    pub mask_rate: f64,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            d_n: 32,
            layers: 2,
            heads: 4,
            epochs: 50,
            batch: 64,
            lr: 1e-3,
            mask_rate: 0.2,
            seed: 0,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_n == 0 || self.d_n % 2 == 1 {
            return Err(Error::config(format!(
                "mlm d_n={} must be even and positive",
                self.d_n
            )));
        }
        if self.heads == 0 || self.d_n % self.heads != 0 {
            return Err(Error::config(format!(
                "mlm d_n={} is not divisible by heads={}",
                self.d_n, self.heads
            )));
        }
        if self.layers == 0 || self.batch == 0 {
            return Err(Error::config("mlm layers and batch must be at least 1"));
        }
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::config("mlm mask_rate must be in (0, 1)"));
        }
        Ok(())
    }
}

/// One post-norm encoder layer. Projections are (out × in) without bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmLayer {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
}

impl MlmLayer {
    fn init(d: usize, stream: RngStream) -> Result<Self> {
        let w = |k: u64, r: usize, c: usize| xavier_init(r, c, stream.derive(k));
        Ok(MlmLayer {
            wq: w(0, d, d)?,
            wk: w(1, d, d)?,
            wv: w(2, d, d)?,
            wo: w(3, d, d)?,
            ln1_g: Matrix::filled(1, d, 1.0),
            ln1_b: Matrix::zeros(1, d),
            w1: w(4, 4 * d, d)?,
            b1: Matrix::zeros(1, 4 * d),
            w2: w(5, d, 4 * d)?,
            b2: Matrix::zeros(1, d),
            ln2_g: Matrix::filled(1, d, 1.0),
            ln2_b: Matrix::zeros(1, d),
        })
    }

    fn params(&self) -> [&Matrix; 12] {
        [
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln1_g,
            &self.ln1_b,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.ln2_g,
            &self.ln2_b,
        ]
    }

    fn params_mut(&mut self) -> [&mut Matrix; 12] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlmParams {
    pub n_genes: usize,
    pub heads: usize,
    /// (|V| + 3) × d_n; gene rows first, then [CLS], [MASK], [PAD].
    pub xi: Matrix,
    pub layers: Vec<MlmLayer>,
}

/// Output of one forward pass.
pub struct MlmForward {
    /// Hidden states, one row per (sequence, position).
    pub hidden: Matrix,
    /// Logits at masked positions over the gene vocabulary.
    pub logits: Matrix,
    pub loss: f64,
    /// Per layer: probs indexed `((b·H + h)·T + t)·T + u`.
    pub attention: Vec<Vec<f64>>,
    pub seq_len: usize,
}

impl MlmParams {
    pub fn init(n_genes: usize, cfg: &MlmConfig) -> Result<Self> {
        cfg.validate()?;
        let root = RngStream::new(cfg.seed, 0x4d4c4d);
        let xi = xavier_init(n_genes + 3, cfg.d_n, root.derive(0))?;
        let layers = (0..cfg.layers)
            .map(|l| MlmLayer::init(cfg.d_n, root.derive_path(&[1, l as u64])))
            .collect::<Result<_>>()?;
        Ok(MlmParams {
            n_genes,
            heads: cfg.heads,
            xi,
            layers,
        })
    }

    pub fn d_n(&self) -> usize {
        self.xi.cols()
    }

    pub fn pad(&self) -> usize {
        self.n_genes + 2
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.xi];
        for l in &self.layers {
            v.extend(l.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.xi];
        for l in self.layers.iter_mut() {
            v.extend(l.params_mut());
        }
        v
    }

    /// Records the encoder on `tape`. Sequences shorter than the longest
    /// are right-padded with [PAD].
    fn record(&self, tape: &mut Tape, seqs: &[&[usize]], plan: &MaskPlan) -> Result<Recorded> {
        let d = self.d_n();
        let t_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        if t_len == 0 {
            return Err(Error::invalid("mlm forward: no tokens"));
        }
        let mut ids = Vec::with_capacity(seqs.len() * t_len);
        for s in seqs {
            ids.extend_from_slice(s);
            ids.extend(std::iter::repeat_n(self.pad(), t_len - s.len()));
        }
        if ids.iter().any(|&t| t >= self.n_genes + 3) {
            return Err(Error::invalid("mlm forward: token id out of range"));
        }
        let key_valid: Vec<bool> = ids.iter().map(|&t| t != self.pad()).collect();
        let block = pe_block(t_len, d)?;
        let mut pe = Matrix::zeros(ids.len(), d);
        for b in 0..seqs.len() {
            for t in 0..t_len {
                pe.row_mut(b * t_len + t).copy_from_slice(block.row(t));
            }
        }

        let pv: Vec<Var> = self
            .params()
            .into_iter()
            .map(|m| tape.leaf(m.clone()))
            .collect();
        let xi = pv[0];
        let emb = tape.gather_rows(xi, ids);
        let pe = tape.leaf(pe);
        let mut x = tape.add(emb, pe);
        let mut att = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let p = &pv[1 + 12 * l..1 + 12 * (l + 1)];
            let q = tape.matmul_t(x, p[0]);
            let k = tape.matmul_t(x, p[1]);
            let v = tape.matmul_t(x, p[2]);
            let a = tape.seq_attention(q, k, v, self.heads, t_len, &key_valid);
            att.push(a);
            let a = tape.matmul_t(a, p[3]);
            let r = tape.add(x, a);
            let h = tape.layer_norm(r, p[4], p[5], LN_EPS);
            let f = tape.linear(h, p[6], p[7]);
            let f = tape.relu(f);
            let f = tape.linear(f, p[8], p[9]);
            let r = tape.add(h, f);
            x = tape.layer_norm(r, p[10], p[11], LN_EPS);
        }

        let mut rows = Vec::with_capacity(plan.total());
        for (b, pos) in plan.positions.iter().enumerate() {
            rows.extend(pos.iter().map(|&t| b * t_len + t));
        }
        let hm = tape.gather_rows(x, rows);
        let genes = tape.gather_rows(xi, (0..self.n_genes).collect());
        let logits = tape.matmul_t(hm, genes);
        let loss = tape.softmax_xent(logits, plan.targets());
        Ok(Recorded {
            params: pv,
            hidden: x,
            logits,
            loss,
            attention: att,
            seq_len: t_len,
        })
    }

    /// Forward pass over `seqs` (already masked) scoring the positions in
    /// `plan`.
    pub fn forward(&self, seqs: &[&[usize]], plan: &MaskPlan) -> Result<MlmForward> {
        let mut tape = Tape::new();
        let r = self.record(&mut tape, seqs, plan)?;
        Ok(MlmForward {
            hidden: tape.value(r.hidden).clone(),
            logits: tape.value(r.logits).clone(),
            loss: tape.scalar(r.loss),
            attention: r
                .attention
                .iter()
                .map(|&a| tape.attention_probs(a).expect("attention node").to_vec())
                .collect(),
            seq_len: r.seq_len,
        })
    }

    /// Loss and gradients in [`MlmParams::params`] order.
    pub fn loss_and_grads(&self, seqs: &[&[usize]], plan: &MaskPlan) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let r = self.record(&mut tape, seqs, plan)?;
        let mut grads = tape.backward(r.loss);
        let g = r
            .params
            .iter()
            .zip(self.params())
            .map(|(&v, m)| grads.take_or_zeros(v, m.shape()))
            .collect();
        Ok((tape.scalar(r.loss), g))
    }
}

struct Recorded {
    params: Vec<Var>,
    hidden: Var,
    logits: Var,
    loss: Var,
    attention: Vec<Var>,
    seq_len: usize,
}

/// Rows 0..|V| of ξ.
pub fn extract_embeddings(params: &MlmParams) -> Matrix {
    params
        .xi
        .select_rows(&(0..params.n_genes).collect::<Vec<_>>())
}

#[derive(Clone, Debug)]
pub struct MlmRun {
    pub params: MlmParams,
    /// Mean batch loss per epoch.
    pub history: Vec<f64>,
}

/// Masked-token loss and accuracy of `params` over a whole corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmEval {
    pub loss: f64,
    pub accuracy: f64,
    pub masked: usize,
}

pub fn evaluate_mlm(
    params: &MlmParams,
    corpus: &Corpus,
    mask_rate: f64,
    stream: RngStream,
) -> Result<MlmEval> {
    let (masked, plan) = mask_corpus(corpus, mask_rate, stream)?;
    let (mut loss_sum, mut hits, mut total) = (0.0, 0usize, 0usize);
    for (chunk, start) in masked.sequences.chunks(256).zip((0..).step_by(256)) {
        let seqs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
        let sub = MaskPlan {
            positions: plan.positions[start..start + chunk.len()].to_vec(),
            originals: plan.originals[start..start + chunk.len()].to_vec(),
        };
        let m = sub.total();
        if m == 0 {
            continue;
        }
        let f = params.forward(&seqs, &sub)?;
        for (r, &t) in sub.targets().iter().enumerate() {
            let row = f.logits.row(r);
            let arg = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            hits += usize::from(arg == t);
        }
        loss_sum += f.loss * m as f64;
        total += m;
    }
    if total == 0 {
        return Ok(MlmEval {
            loss: 0.0,
            accuracy: 0.0,
            masked: 0,
        });
    }
    Ok(MlmEval {
        loss: loss_sum / total as f64,
        accuracy: hits as f64 / total as f64,
        masked: total,
    })
}

pub fn train_mlm(corpus: &Corpus, cfg: &MlmConfig) -> Result<MlmRun> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("train_mlm: empty corpus"));
    }
    let mut params = MlmParams::init(corpus.n_genes, cfg)?;
    let mut opt = OptimizerState::for_params(&params.params(), cfg.lr);
    let root = RngStream::new(cfg.seed, 0x4d4c4d + 1);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let es = root.derive(epoch as u64);
        order.shuffle(&mut es.derive(0).rng());
        let (masked, plan) = mask_corpus(corpus, cfg.mask_rate, es.derive(1))?;
        let (mut sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let seqs: Vec<&[usize]> = chunk
                .iter()
                .map(|&i| masked.sequences[i].as_slice())
                .collect();
            let sub = MaskPlan {
                positions: chunk.iter().map(|&i| plan.positions[i].clone()).collect(),
                originals: chunk.iter().map(|&i| plan.originals[i].clone()).collect(),
            };
            if sub.total() == 0 {
                continue;
            }
            let (loss, grads) = params.loss_and_grads(&seqs, &sub)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "MLM loss diverged at epoch {epoch}"
                )));
            }
            adam_step(&mut params.params_mut(), &grads, &mut opt)?;
            sum += loss;
            steps += 1;
        }
        let mean = if steps == 0 { 0.0 } else { sum / steps as f64 };
        log::debug!("mlm epoch {epoch}: loss {mean:.5}");
        history.push(mean);
    }
    Ok(MlmRun { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error};

    fn tiny_cfg(layers: usize, heads: usize, d_n: usize) -> MlmConfig {
        MlmConfig {
            d_n,
            layers,
            heads,
            epochs: 1,
            batch: 4,
            lr: 1e-2,
            mask_rate: 0.2,
            seed: 5,
        }
    }

    fn corpus(n: usize, seqs: Vec<Vec<usize>>) -> Corpus {
        let sources = vec![0; seqs.len()];
        Corpus {
            n_genes: n,
            sequences: seqs,
            sources,
        }
    }

    #[test]
    fn sinusoid_examples() {
        let p0 = sinusoidal_pe(0, 8).unwrap();
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p1 = sinusoidal_pe(1, 8).unwrap();
        assert!((p1[0] - 0.841_470_984_807_896_5).abs() < 1e-12);
        for pos in [0, 3, 17, 400] {
            assert!(sinusoidal_pe(pos, 16)
                .unwrap()
                .iter()
                .all(|v| v.abs() <= 1.0));
        }
        assert!(matches!(sinusoidal_pe(1, 7), Err(Error::Config(_))));
    }

    #[test]
    fn masking() {
        assert_eq!(mask_count(20, 0.2), 4);
        assert_eq!(mask_count(3, 0.2), 1);
        assert_eq!(mask_count(0, 0.2), 0);
        assert_eq!(mask_count(5, 0.5), 3);
        let n = 30;
        let mut seq = vec![n];
        seq.extend(0..20);
        let c = corpus(n, vec![seq, vec![n, n + 2, n + 2]]);
        let (m, plan) = mask_corpus(&c, 0.2, RngStream::new(1, 1)).unwrap();
        assert_eq!(plan.positions[0].len(), 4);
        assert!(plan.positions[1].is_empty());
        for (&t, &o) in plan.positions[0].iter().zip(&plan.originals[0]) {
            assert_eq!(m.sequences[0][t], c.mask());
            assert_eq!(c.sequences[0][t], o);
            assert!(t > 0);
        }
        let (_, again) = mask_corpus(&c, 0.2, RngStream::new(1, 1)).unwrap();
        assert_eq!(plan, again);
    }

    #[test]
    fn loss_examples() {
        let plan = MaskPlan {
            positions: vec![vec![1]],
            originals: vec![vec![3]],
        };
        let l = mlm_loss(&Matrix::zeros(1, 8), &plan).unwrap();
        assert!((l - 8f64.ln()).abs() < 1e-12);
        let mut peaked = Matrix::zeros(1, 8);
        peaked.set(0, 3, 60.0);
        assert!(mlm_loss(&peaked, &plan).unwrap() < 1e-20);

        let two = MaskPlan {
            positions: vec![vec![1, 2]],
            originals: vec![vec![0, 1]],
        };
        let logits = Matrix::from_rows(&[vec![2.0, 0.0, -1.0], vec![0.5, 0.1, 0.3]]).unwrap();
        let single = |r: usize, t: usize| {
            let p = MaskPlan {
                positions: vec![vec![1]],
                originals: vec![vec![t]],
            };
            mlm_loss(&logits.select_rows(&[r]), &p).unwrap()
        };
        let want = (single(0, 0) + single(1, 1)) / 2.0;
        assert!((mlm_loss(&logits, &two).unwrap() - want).abs() < 1e-12);
        assert_eq!(
            mlm_loss(&Matrix::zeros(0, 8), &MaskPlan::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 6;
        let cfg = tiny_cfg(2, 1, 8);
        let params = MlmParams::init(n, &cfg).unwrap();
        let seqs = vec![
            vec![n, 0, n + 1, 2, 3],
            vec![n, 4, 5, n + 1, 1],
            vec![n, n + 1, 2, n + 2, n + 2],
        ];
        let plan = MaskPlan {
            positions: vec![vec![2], vec![3], vec![1]],
            originals: vec![vec![1], vec![0], vec![5]],
        };
        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        let (_, grads) = params.loss_and_grads(&refs, &plan).unwrap();
        for (k, g) in grads.iter().enumerate() {
            let orig = params.params()[k].clone();
            let fd = finite_diff_grad(
                |p| {
                    let mut q = params.clone();
                    *q.params_mut()[k] =
                        Matrix::from_vec(orig.rows(), orig.cols(), p.to_vec()).unwrap();
                    q.forward(&refs, &plan).unwrap().loss
                },
                orig.as_slice(),
                1e-5,
            )
            .unwrap();
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if scale < 1e-10 {
                assert!(g.as_slice().iter().all(|v| v.abs() < 1e-8), "param {k}");
                continue;
            }
            let err = relative_error(g.as_slice(), &fd);
            assert!(err < 1e-4, "param {k}: rel err {err}");
        }
    }

    #[test]
    fn attention_rows_are_stochastic_and_pads_are_ignored() {
        let n = 10;
        let cfg = tiny_cfg(2, 2, 8);
        let params = MlmParams::init(n, &cfg).unwrap();
        let short = vec![n, 3, n + 1, 7];
        let mut long = short.clone();
        long.extend([n + 2, n + 2, n + 2]);
        let plan = MaskPlan {
            positions: vec![vec![2]],
            originals: vec![vec![5]],
        };
        let a = params.forward(&[&short], &plan).unwrap();
        let b = params.forward(&[&long], &plan).unwrap();
        for t in 0..short.len() {
            for (x, y) in a.hidden.row(t).iter().zip(b.hidden.row(t)) {
                assert!((x - y).abs() < 1e-9);
            }
        }
        for (x, y) in a.logits.as_slice().iter().zip(b.logits.as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
        let t = b.seq_len;
        for probs in &b.attention {
            for row in probs.chunks(t) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[short.len()..].iter().all(|&p| p == 0.0));
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let n = 12;
        let mut seqs = Vec::new();
        for s in 0..40 {
            let mut seq = vec![n];
            for t in 0..10 {
                seq.push((s + t) % n);
            }
            seqs.push(seq);
        }
        let c = corpus(n, seqs);
        let cfg = MlmConfig {
            epochs: 1,
            ..tiny_cfg(1, 2, 8)
        };
        let eval_stream = RngStream::new(77, 0);
        let before =
            evaluate_mlm(&MlmParams::init(n, &cfg).unwrap(), &c, 0.2, eval_stream).unwrap();
        let run = train_mlm(&c, &cfg).unwrap();
        let after = evaluate_mlm(&run.params, &c, 0.2, eval_stream).unwrap();
        assert!(
            after.loss < before.loss,
            "{} -> {}",
            before.loss,
            after.loss
        );
        let again = train_mlm(&c, &cfg).unwrap();
        assert_eq!(run.params.xi, again.params.xi);
        assert_eq!(run.history, again.history);
    }

    #[test]
    fn embeddings_are_gene_rows() {
        let params = MlmParams::init(7, &tiny_cfg(1, 2, 4)).unwrap();
        let e = extract_embeddings(&params);
        assert_eq!(e.shape(), (7, 4));
        assert_eq!(e.row(3), params.xi.row(3));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            MlmParams::init(5, &tiny_cfg(1, 3, 8)),
            Err(Error::Config(_))
        ));
        assert!(train_mlm(&Corpus::empty(4), &tiny_cfg(1, 2, 8)).is_err());
    }
}
