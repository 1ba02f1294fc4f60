//! Link-prediction training of the graph transformer, AUROC tracking and
//! the generated network.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{write_text, WGraph};
use crate::error::{Error, Result};
use crate::gtcore::{neighborhoods, AttentionTensor, BoundGt, GtConfig, GtParams};
use crate::numerics::tape::{sigmoid, Neighborhoods, Tape, Var};
use crate::numerics::{adam_step, xavier_init, Matrix, OptimizerState, RngStream};

/// Pair MLP: `[h_i ‖ h_j] → ReLU(d_h) → scalar`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl DecoderParams {
    pub fn init(d: usize, d_h: usize, stream: RngStream) -> Result<Self> {
        if d_h == 0 {
            return Err(Error::config("decoder hidden width must be at least 1"));
        }
        Ok(DecoderParams {
            w1: xavier_init(d_h, 2 * d, stream.derive(0))?,
            b1: Matrix::zeros(1, d_h),
            w2: xavier_init(1, d_h, stream.derive(1))?,
            b2: Matrix::zeros(1, 1),
        })
    }

    pub fn zeros(d: usize, d_h: usize) -> Self {
        DecoderParams {
            w1: Matrix::zeros(d_h, 2 * d),
            b1: Matrix::zeros(1, d_h),
            w2: Matrix::zeros(1, d_h),
            b2: Matrix::zeros(1, 1),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.cols() / 2
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn logit(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = x.len();
        let mut out = self.b2.get(0, 0);
        for r in 0..self.w1.rows() {
            let w = self.w1.row(r);
            let mut s = self.b1.get(0, r);
            for c in 0..d {
                s += w[c] * x[c] + w[d + c] * y[c];
            }
            if s > 0.0 {
                out += self.w2.get(0, r) * s;
            }
        }
        out
    }
}

/// `(σ(MLP[h_i‖h_j]) + σ(MLP[h_j‖h_i])) / 2`
pub fn decode_pair(hi: &[f64], hj: &[f64], dec: &DecoderParams) -> Result<f64> {
    let d = dec.input_width();
    if hi.len() != d || hj.len() != d {
        return Err(Error::invalid(format!(
            "decode_pair: embeddings of width {} and {}, decoder expects {d}",
            hi.len(),
            hj.len()
        )));
    }
    Ok(0.5 * (sigmoid(dec.logit(hi, hj)) + sigmoid(dec.logit(hj, hi))))
}

type Pair = (usize, usize);

fn norm_pair(a: usize, b: usize) -> Pair {
    (a.min(b), a.max(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub n: usize,
    pub train_pos: Vec<Pair>,
    /// Input weights of the training positives.
    pub train_weights: Vec<f64>,
    pub val_pos: Vec<Pair>,
    pub train_neg: Vec<Pair>,
    pub val_neg: Vec<Pair>,
    pub neg_ratio: usize,
}

impl EdgeSplit {
    /// Training positives with their input weights. Attention ignores the
    /// weights; the positional encoding uses them.
    pub fn train_graph(&self) -> WGraph {
        WGraph::from_edges(
            self.n,
            self.train_pos
                .iter()
                .zip(&self.train_weights)
                .map(|(&(a, b), &w)| (a, b, w)),
        )
        .expect("split pairs are in range")
        .0
    }
}

fn largest_component(n: usize, edges: &[Pair]) -> usize {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut size = vec![0usize; n];
    for x in 0..n {
        let r = find(&mut parent, x);
        size[r] += 1;
    }
    size.into_iter().max().unwrap_or(0)
}

fn sample_non_edges<R: Rng>(
    rng: &mut R,
    n: usize,
    count: usize,
    taken: &mut HashSet<Pair>,
) -> Result<Vec<Pair>> {
    let free = n * (n - 1) / 2 - taken.len().min(n * (n - 1) / 2);
    if count > free {
        return Err(Error::data(format!(
            "cannot draw {count} negatives: only {free} non-edges"
        )));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let p = norm_pair(a, b);
        if taken.insert(p) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Holds out `round(val_fraction·|E|)` edges while keeping the training
/// graph's largest component within 90% of the input's.
pub fn make_split(
    graph: &WGraph,
    val_fraction: f64,
    neg_ratio: usize,
    stream: RngStream,
) -> Result<EdgeSplit> {
    if !(val_fraction > 0.0 && val_fraction <= 0.5) {
        return Err(Error::config(format!(
            "val_fraction {val_fraction} not in (0, 0.5]"
        )));
    }
    if neg_ratio == 0 {
        return Err(Error::config("neg_ratio must be at least 1"));
    }
    let m = graph.edge_count();
    if m < 10 {
        return Err(Error::data(format!(
            "link prediction needs at least 10 edges, graph has {m}"
        )));
    }
    let n = graph.n();
    let all: Vec<Pair> = graph.edges().iter().map(|&(i, j, _)| (i, j)).collect();
    let target = 0.9 * largest_component(n, &all) as f64;
    let n_val = ((val_fraction * m as f64).round() as usize).max(1);
    let mut rng = stream.rng();
    for _attempt in 0..100 {
        let mut held: Vec<usize> = index::sample(&mut rng, m, n_val).into_vec();
        held.sort_unstable();
        let mut is_val = vec![false; m];
        for &k in &held {
            is_val[k] = true;
        }
        let train_pos: Vec<Pair> = (0..m).filter(|&k| !is_val[k]).map(|k| all[k]).collect();
        let train_weights: Vec<f64> = (0..m)
            .filter(|&k| !is_val[k])
            .map(|k| graph.edges()[k].2)
            .collect();
        if (largest_component(n, &train_pos) as f64) < target {
            continue;
        }
        let val_pos: Vec<Pair> = held.iter().map(|&k| all[k]).collect();
        let mut taken: HashSet<Pair> = all.iter().copied().collect();
        let val_neg = sample_non_edges(&mut rng, n, n_val * neg_ratio, &mut taken)?;
        let train_neg = sample_non_edges(&mut rng, n, train_pos.len() * neg_ratio, &mut taken)?;
        return Ok(EdgeSplit {
            n,
            train_pos,
            train_weights,
            val_pos,
            train_neg,
            val_neg,
            neg_ratio,
        });
    }
    Err(Error::data(
        "no validation split keeps the training graph's largest component within 90% after 100 attempts",
    ))
}

/// Rank-statistic AUROC; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("auroc: scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid(
            "auroc needs both positive and negative labels",
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("auroc: NaN score"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && scores[idx[e + 1]] == scores[idx[k]] {
            e += 1;
        }
        let avg = (k + e) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=e] {
            if labels[i] {
                rank_sum += avg;
            }
        }
        k = e + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPredConfig {
    pub gt: GtConfig,
    pub d_h: usize,
    pub epochs: usize,
    pub lr: f64,
    pub val_fraction: f64,
    pub neg_ratio: usize,
    pub seed: u64,
}

impl Default for LinkPredConfig {
    fn default() -> Self {
        LinkPredConfig {
            gt: GtConfig::default(),
            d_h: 32,
            epochs: 100,
            lr: 5e-3,
            val_fraction: 0.1,
            neg_ratio: 1,
            seed: 0,
        }
    }
}

/// Per-node inputs to the graph transformer.
#[derive(Clone, Debug)]
pub struct NodeInputs<'a> {
    pub expression: &'a Matrix,
    pub global: &'a Matrix,
    pub positional: &'a Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_auroc: f64,
}

#[derive(Clone, Debug)]
pub struct LinkPredRun {
    pub gt: GtParams,
    pub decoder: DecoderParams,
    /// Final embeddings at the best-AUROC parameters.
    pub embeddings: Matrix,
    pub attention: AttentionTensor,
    /// Entry 0 is the untrained model; entry e follows e optimizer steps.
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl LinkPredRun {
    pub fn best_auroc(&self) -> f64 {
        self.history[self.best_epoch].val_auroc
    }
}

struct Model<'a> {
    gt: &'a GtParams,
    dec: &'a DecoderParams,
}

struct Recorded {
    gt: BoundGt,
    dec: Vec<Var>,
    h: Var,
    atts: Vec<Var>,
    loss: Option<Var>,
}

impl Model<'_> {
    fn record(
        &self,
        tape: &mut Tape,
        x: &NodeInputs,
        nbrs: &Arc<Neighborhoods>,
        pairs: &[Pair],
        labels: &[f64],
    ) -> Recorded {
        let gt = self.gt.bind(tape);
        let dec: Vec<Var> = self
            .dec
            .params()
            .into_iter()
            .map(|m| tape.leaf(m.clone()))
            .collect();
        let z = tape.leaf(x.expression.clone());
        let xi = tape.leaf(x.global.clone());
        let lam = tape.leaf(x.positional.clone());
        let h0 = gt.fuse(tape, z, xi, lam);
        let (h, atts) = gt.forward(tape, h0, nbrs);
        let loss = (!pairs.is_empty()).then(|| {
            let hi = tape.gather_rows(h, pairs.iter().map(|p| p.0).collect());
            let hj = tape.gather_rows(h, pairs.iter().map(|p| p.1).collect());
            let mut logit = |a: Var, b: Var| {
                let cat = tape.concat_cols(&[a, b]);
                let hid = tape.linear(cat, dec[0], dec[1]);
                let hid = tape.relu(hid);
                tape.linear(hid, dec[2], dec[3])
            };
            let fwd = logit(hi, hj);
            let rev = logit(hj, hi);
            tape.sym_bce(fwd, rev, labels.to_vec())
        });
        Recorded {
            gt,
            dec,
            h,
            atts,
            loss,
        }
    }
}

fn check_inputs(x: &NodeInputs, n: usize, gt: &GtParams) -> Result<()> {
    for (name, m, w) in [
        ("expression", x.expression, gt.s0.cols()),
        ("global", x.global, gt.t0.cols()),
        ("positional", x.positional, gt.u0.cols()),
    ] {
        if m.rows() != n || m.cols() != w {
            return Err(Error::invalid(format!(
                "{name} features are {}x{}, expected {n}x{w}",
                m.rows(),
                m.cols()
            )));
        }
    }
    Ok(())
}

/// Loss and gradients of the symmetrized BCE over `pairs`, with gradients
/// in GT order followed by decoder order.
pub fn linkpred_loss_and_grads(
    gt: &GtParams,
    dec: &DecoderParams,
    x: &NodeInputs,
    nbrs: &Arc<Neighborhoods>,
    pairs: &[Pair],
    labels: &[f64],
) -> (f64, Vec<Matrix>) {
    let mut tape = Tape::new();
    let r = Model { gt, dec }.record(&mut tape, x, nbrs, pairs, labels);
    let loss = r.loss.expect("non-empty pair list");
    let mut grads = tape.backward(loss);
    let shapes: Vec<_> = gt
        .params()
        .iter()
        .chain(dec.params().iter())
        .map(|m| m.shape())
        .collect();
    let g =
        r.gt.vars
            .iter()
            .chain(&r.dec)
            .zip(shapes)
            .map(|(&v, s)| grads.take_or_zeros(v, s))
            .collect();
    (tape.scalar(loss), g)
}

/// Loss only; used by gradient checks.
pub fn linkpred_loss(
    gt: &GtParams,
    dec: &DecoderParams,
    x: &NodeInputs,
    nbrs: &Arc<Neighborhoods>,
    pairs: &[Pair],
    labels: &[f64],
) -> f64 {
    let mut tape = Tape::new();
    let r = Model { gt, dec }.record(&mut tape, x, nbrs, pairs, labels);
    tape.scalar(r.loss.expect("non-empty pair list"))
}

fn embed(
    gt: &GtParams,
    dec: &DecoderParams,
    x: &NodeInputs,
    nbrs: &Arc<Neighborhoods>,
) -> (Matrix, AttentionTensor) {
    let mut tape = Tape::new();
    let r = Model { gt, dec }.record(&mut tape, x, nbrs, &[], &[]);
    let mut weights = Vec::new();
    for &a in &r.atts {
        weights.extend_from_slice(tape.attention_probs(a).expect("graph attention node"));
    }
    let att = AttentionTensor {
        layers: r.atts.len(),
        heads: gt.heads,
        nbrs: (**nbrs).clone(),
        weights,
    };
    (tape.value(r.h).clone(), att)
}

fn score_pairs(h: &Matrix, dec: &DecoderParams, pairs: &[Pair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(a, b)| decode_pair(h.row(a), h.row(b), dec).expect("widths checked"))
        .collect()
}

fn validation_auroc(h: &Matrix, dec: &DecoderParams, split: &EdgeSplit) -> Result<f64> {
    let mut scores = score_pairs(h, dec, &split.val_pos);
    scores.extend(score_pairs(h, dec, &split.val_neg));
    let mut labels = vec![true; split.val_pos.len()];
    labels.resize(scores.len(), false);
    auroc(&scores, &labels)
}

/// Full-batch training on the split's training positives and per-epoch
/// negatives. Attention runs over the training graph only.
pub fn train_gt_linkpred(
    split: &EdgeSplit,
    x: &NodeInputs,
    cfg: &LinkPredConfig,
) -> Result<LinkPredRun> {
    cfg.gt.validate()?;
    let n = split.n;
    let root = RngStream::new(cfg.seed, 0x4754);
    let mut gt = GtParams::init(
        x.expression.cols(),
        x.global.cols(),
        &cfg.gt,
        root.derive(0),
    )?;
    check_inputs(x, n, &gt)?;
    if split.val_neg.is_empty() || split.val_pos.is_empty() {
        return Err(Error::data(
            "link prediction split has an empty validation class",
        ));
    }
    let mut dec = DecoderParams::init(cfg.gt.d, cfg.d_h, root.derive(1))?;
    let nbrs = neighborhoods(&split.train_graph());
    let mut opt = OptimizerState::for_params(
        &gt.params()
            .into_iter()
            .chain(dec.params())
            .collect::<Vec<_>>(),
        cfg.lr,
    );

    // Negatives never drawn from positives or validation negatives.
    let mut reserved: HashSet<Pair> = split
        .train_pos
        .iter()
        .chain(&split.val_pos)
        .chain(&split.val_neg)
        .copied()
        .collect();
    reserved.shrink_to_fit();
    let n_neg = split.train_pos.len() * split.neg_ratio;

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut negatives = split.train_neg.clone();
    let (h, _) = embed(&gt, &dec, x, &nbrs);
    let mut best = (
        validation_auroc(&h, &dec, split)?,
        0usize,
        gt.clone(),
        dec.clone(),
    );
    let mut labels = vec![1.0; split.train_pos.len()];
    labels.resize(split.train_pos.len() + n_neg, 0.0);

    for epoch in 0..=cfg.epochs {
        if epoch > 1 {
            let mut taken = reserved.clone();
            negatives = sample_non_edges(
                &mut root.derive_path(&[2, epoch as u64]).rng(),
                n,
                n_neg,
                &mut taken,
            )?;
        }
        let mut pairs = split.train_pos.clone();
        pairs.extend_from_slice(&negatives);
        let (loss, grads) = linkpred_loss_and_grads(&gt, &dec, x, &nbrs, &pairs, &labels);
        if !loss.is_finite() {
            return Err(Error::numeric(format!(
                "link-prediction loss diverged at epoch {epoch}"
            )));
        }
        if epoch == 0 {
            history.push(EpochRecord {
                epoch,
                loss,
                val_auroc: best.0,
            });
            continue;
        }
        let mut params: Vec<&mut Matrix> = gt.params_mut();
        params.extend(dec.params_mut());
        adam_step(&mut params, &grads, &mut opt)?;
        let (h, _) = embed(&gt, &dec, x, &nbrs);
        let val = validation_auroc(&h, &dec, split)?;
        history.push(EpochRecord {
            epoch,
            loss,
            val_auroc: val,
        });
        log::debug!("linkpred epoch {epoch}: loss {loss:.5} val auroc {val:.4}");
        if val > best.0 {
            best = (val, epoch, gt.clone(), dec.clone());
        }
    }
    let (_, best_epoch, gt, dec) = best;
    let (embeddings, attention) = embed(&gt, &dec, x, &nbrs);
    Ok(LinkPredRun {
        gt,
        decoder: dec,
        embeddings,
        attention,
        history,
        best_epoch,
    })
}

/// Symmetrized scores of every unordered pair, row-major over `i < j`.
pub fn all_pair_scores(h: &Matrix, dec: &DecoderParams) -> Result<Vec<f64>> {
    let n = h.rows();
    let d = dec.input_width();
    if h.cols() != d {
        return Err(Error::invalid(format!(
            "embeddings have width {}, decoder expects {d}",
            h.cols()
        )));
    }
    // W1·[x‖y] = W1a·x + W1b·y, so both halves are projected once per node.
    let d_h = dec.w1.rows();
    let mut left = Matrix::zeros(d_h, d);
    let mut right = Matrix::zeros(d_h, d);
    for r in 0..d_h {
        left.row_mut(r).copy_from_slice(&dec.w1.row(r)[..d]);
        right.row_mut(r).copy_from_slice(&dec.w1.row(r)[d..]);
    }
    let a = h.matmul_t(&left);
    let b = h.matmul_t(&right);
    let (b1, w2, b2) = (dec.b1.as_slice(), dec.w2.as_slice(), dec.b2.get(0, 0));
    let logit = |x: &[f64], y: &[f64]| {
        let mut s = b2;
        for k in 0..d_h {
            let v = x[k] + y[k] + b1[k];
            if v > 0.0 {
                s += w2[k] * v;
            }
        }
        s
    };
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let fwd = logit(a.row(i), b.row(j));
            let rev = logit(a.row(j), b.row(i));
            out.push(0.5 * (sigmoid(fwd) + sigmoid(rev)));
        }
    }
    Ok(out)
}

/// The `m`-th largest pair score, so thresholding keeps about `m` edges.
pub fn matching_threshold(scores: &[f64], m: usize) -> Result<f64> {
    if m == 0 || m > scores.len() {
        return Err(Error::invalid(format!(
            "cannot match {m} edges among {} pairs",
            scores.len()
        )));
    }
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s[m - 1])
}

/// Pairs scoring at least `tau`, weighted by their score.
pub fn generate_network(h: &Matrix, dec: &DecoderParams, tau: f64) -> Result<WGraph> {
    let scores = all_pair_scores(h, dec)?;
    let n = h.rows();
    let mut edges = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if scores[k] >= tau {
                edges.push((i, j, scores[k]));
            }
            k += 1;
        }
    }
    Ok(WGraph::from_edges(n, edges)?.0)
}

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss,val_auroc\n");
    for r in history {
        writeln!(s, "{},{},{}", r.epoch, r.loss, r.val_auroc).unwrap();
    }
    s
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    write_text(path, &history_to_csv(history))
}
