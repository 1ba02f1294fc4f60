//! Minimal reverse-mode differentiation over dense matrices.
//!
//! Nodes are recorded in evaluation order on a [`Tape`]; [`Tape::backward`]
//! walks them in reverse. The op set is exactly what the three training
//! losses need: affine maps, ReLU, layer norm, embedding lookup, masked
//! sequence attention, neighbourhood graph attention, and fused losses.

use std::sync::Arc;

use super::ops::softmax_in_place;
use super::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Compressed adjacency: `targets[offsets[i]..offsets[i+1]]` are the nodes
/// that node `i` attends to (self included), ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhoods {
    pub offsets: Vec<usize>,
    pub targets: Vec<usize>,
}

impl Neighborhoods {
    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.targets.len()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    SeqAttention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        probs: Vec<f64>,
    },
    GraphAttention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        nbrs: Arc<Neighborhoods>,
        probs: Vec<f64>,
    },
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
    SymBce {
        a: Var,
        b: Var,
        labels: Vec<f64>,
    },
    Elbo {
        x: Matrix,
        xhat: Var,
        mu: Var,
        logvar: Var,
    },
    Reparam {
        mu: Var,
        logvar: Var,
        eps: Matrix,
    },
    WeightedSum {
        a: Var,
        w: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` when a node did not influence the loss.
pub struct Grads(Vec<Option<Matrix>>);

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.0[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `shape` when it had no influence.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Matrix {
        self.0[v.0]
            .take()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    /// Attention probabilities recorded by an attention node.
    ///
    /// Sequence attention: index `((b·H + h)·T + t)·T + u`.
    /// Graph attention: index `h·nnz + e` for the `e`-th CSR entry.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::SeqAttention { probs, .. } | Op::GraphAttention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`; with `b` a weight stored as (out × in) this is a linear map.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    /// Adds the 1×n row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut out = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!(b.rows(), 1);
        assert_eq!(b.cols(), out.cols());
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    /// `x · wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul_t(x, w);
        self.add_row(y, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    /// Row-wise layer normalization with 1×d `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
        }
        let g = self.value(gamma).as_slice();
        let b = self.value(beta).as_slice();
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, gi), bi) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gi + bi;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn gather_rows(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let out = self.value(table).select_rows(&ids);
        self.push(out, Op::Gather { table, ids })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Matrix::hcat(&mats).expect("concat_cols row mismatch");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Multi-head scaled dot-product attention inside consecutive blocks of
    /// `seq_len` rows. Keys with `key_valid == false` receive zero weight.
    pub fn seq_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        key_valid: &[bool],
    ) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qm.shape();
        assert_eq!(rows % seq_len, 0);
        assert_eq!(d % heads, 0);
        assert_eq!(key_valid.len(), rows);
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let blocks = rows / seq_len;
        let mut probs = vec![0.0; blocks * heads * seq_len * seq_len];
        let mut out = Matrix::zeros(rows, d);
        let mut scores = vec![0.0; seq_len];
        for b in 0..blocks {
            let base = b * seq_len;
            for h in 0..heads {
                let cols = h * dk..(h + 1) * dk;
                for t in 0..seq_len {
                    let qi = &qm.row(base + t)[cols.clone()];
                    let mut max = f64::NEG_INFINITY;
                    for u in 0..seq_len {
                        if key_valid[base + u] {
                            let kj = &km.row(base + u)[cols.clone()];
                            let s = dot(qi, kj) * scale;
                            scores[u] = s;
                            max = max.max(s);
                        }
                    }
                    let mut sum = 0.0;
                    for u in 0..seq_len {
                        scores[u] = if key_valid[base + u] {
                            let e = (scores[u] - max).exp();
                            sum += e;
                            e
                        } else {
                            0.0
                        };
                    }
                    let pbase = ((b * heads + h) * seq_len + t) * seq_len;
                    for u in 0..seq_len {
                        let p = scores[u] / sum;
                        probs[pbase + u] = p;
                        if p != 0.0 {
                            let vj = &vm.row(base + u)[cols.clone()];
                            let orow = &mut out.row_mut(base + t)[cols.clone()];
                            for (o, x) in orow.iter_mut().zip(vj) {
                                *o += p * x;
                            }
                        }
                    }
                }
            }
        }
        self.push(
            out,
            Op::SeqAttention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            },
        )
    }

    /// Multi-head scaled dot-product attention where node `i` attends over
    /// `nbrs.of(i)`.
    pub fn graph_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        nbrs: Arc<Neighborhoods>,
    ) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let (n, d) = qm.shape();
        assert_eq!(n, nbrs.n());
        assert_eq!(d % heads, 0);
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let nnz = nbrs.nnz();
        let mut probs = vec![0.0; heads * nnz];
        let mut out = Matrix::zeros(n, d);
        for h in 0..heads {
            let cols = h * dk..(h + 1) * dk;
            for i in 0..n {
                let (lo, hi) = (nbrs.offsets[i], nbrs.offsets[i + 1]);
                let qi = &qm.row(i)[cols.clone()];
                let row = &mut probs[h * nnz + lo..h * nnz + hi];
                for (p, &j) in row.iter_mut().zip(&nbrs.targets[lo..hi]) {
                    *p = dot(qi, &km.row(j)[cols.clone()]) * scale;
                }
                softmax_in_place(row);
                let orow = &mut out.row_mut(i)[cols.clone()];
                for (p, &j) in row.iter().zip(&nbrs.targets[lo..hi]) {
                    for (o, x) in orow.iter_mut().zip(&vm.row(j)[cols.clone()]) {
                        *o += p * x;
                    }
                }
            }
        }
        self.push(
            out,
            Op::GraphAttention {
                q,
                k,
                v,
                heads,
                nbrs,
                probs,
            },
        )
    }

    /// Mean cross-entropy of row-wise softmax(logits) against `targets`.
    pub fn softmax_xent(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let lm = self.value(logits);
        assert_eq!(lm.rows(), targets.len());
        let mut probs = lm.clone();
        let m = targets.len();
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = probs.row_mut(r);
            softmax_in_place(row);
            loss -= row[t].max(f64::MIN_POSITIVE).ln();
        }
        let loss = if m == 0 { 0.0 } else { loss / m as f64 };
        self.push(
            Matrix::filled(1, 1, loss),
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Mean binary cross-entropy of `p = (σ(a) + σ(b))/2` against labels,
    /// with `a`, `b` column vectors of logits.
    pub fn sym_bce(&mut self, a: Var, b: Var, labels: Vec<f64>) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), labels.len());
        assert_eq!(bv.rows(), labels.len());
        let m = labels.len().max(1) as f64;
        let mut loss = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            let p = sym_prob(av.get(r, 0), bv.get(r, 0));
            loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        }
        self.push(Matrix::filled(1, 1, loss / m), Op::SymBce { a, b, labels })
    }

    /// Batch-mean ELBO: per row `Σ(x−x̂)²/len + KL(N(μ, e^logvar) ‖ N(0, I))`.
    pub fn elbo(&mut self, x: Matrix, xhat: Var, mu: Var, logvar: Var) -> Var {
        let (xh, mv, lv) = (self.value(xhat), self.value(mu), self.value(logvar));
        assert_eq!(x.shape(), xh.shape());
        let rows = x.rows();
        let mut total = 0.0;
        for r in 0..rows {
            let (_, recon, kl) = elbo_parts(x.row(r), xh.row(r), mv.row(r), lv.row(r));
            total += recon + kl;
        }
        let total = total / rows.max(1) as f64;
        self.push(
            Matrix::filled(1, 1, total),
            Op::Elbo {
                x,
                xhat,
                mu,
                logvar,
            },
        )
    }

    /// `mu + exp(logvar/2) ⊙ eps`
    pub fn reparam(&mut self, mu: Var, logvar: Var, eps: Matrix) -> Var {
        let mut out = self.value(mu).clone();
        let lv = self.value(logvar);
        for ((o, l), e) in out
            .as_mut_slice()
            .iter_mut()
            .zip(lv.as_slice())
            .zip(eps.as_slice())
        {
            *o += (0.5 * l).exp() * e;
        }
        self.push(out, Op::Reparam { mu, logvar, eps })
    }

    /// `Σ a ⊙ w` for a fixed weight matrix; a scalar readout for tests.
    pub fn weighted_sum(&mut self, a: Var, w: Matrix) -> Var {
        let s = self
            .value(a)
            .as_slice()
            .iter()
            .zip(w.as_slice())
            .map(|(x, y)| x * y)
            .sum();
        self.push(Matrix::filled(1, 1, s), Op::WeightedSum { a, w })
    }

    /// Gradients of the 1×1 node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads(grads)
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate_with(grads, *a, av.shape(), |acc| acc.add_matmul_t(g, bv));
                accumulate_with(grads, *b, bv.shape(), |acc| acc.add_t_matmul(av, g));
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate_with(grads, *a, av.shape(), |acc| acc.add_matmul(g, bv));
                accumulate_with(grads, *b, bv.shape(), |acc| acc.add_t_matmul(g, av));
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g);
                accumulate(grads, *b, g);
            }
            Op::AddRow(a, bias) => {
                accumulate(grads, *a, g);
                let mut gb = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gb.as_mut_slice().iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                accumulate(grads, *bias, &gb);
            }
            Op::Scale(a, c) => {
                let mut ga = g.clone();
                ga.scale_in_place(*c);
                accumulate(grads, *a, &ga);
            }
            Op::Relu(a) => {
                let mut ga = g.clone();
                for (o, y) in ga.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                    if *y <= 0.0 {
                        *o = 0.0;
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.value(*gamma).as_slice();
                let (rows, cols) = g.shape();
                let mut gg = Matrix::zeros(1, cols);
                let mut gbeta = Matrix::zeros(1, cols);
                let mut gx = Matrix::zeros(rows, cols);
                let mut dxhat = vec![0.0; cols];
                for r in 0..rows {
                    let gr = g.row(r);
                    let xr = xhat.row(r);
                    for c in 0..cols {
                        gg.as_mut_slice()[c] += gr[c] * xr[c];
                        gbeta.as_mut_slice()[c] += gr[c];
                        dxhat[c] = gr[c] * gam[c];
                    }
                    let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                    let mean_dx =
                        dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = inv_std[r] * (dxhat[c] - mean_d - xr[c] * mean_dx);
                    }
                }
                accumulate(grads, *x, &gx);
                accumulate(grads, *gamma, &gg);
                accumulate(grads, *beta, &gbeta);
            }
            Op::Gather { table, ids } => {
                let tv = self.value(*table);
                accumulate_with(grads, *table, tv.shape(), |acc| {
                    for (k, &i) in ids.iter().enumerate() {
                        for (o, x) in acc.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    let mut gp = Matrix::zeros(g.rows(), cols);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                    }
                    accumulate(grads, p, &gp);
                    off += cols;
                }
            }
            Op::SeqAttention {
                q,
                k,
                v,
                heads,
                seq_len,
                probs,
            } => {
                let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                let (rows, d) = qm.shape();
                let (heads, seq_len) = (*heads, *seq_len);
                let dk = d / heads;
                let scale = 1.0 / (dk as f64).sqrt();
                let mut gq = Matrix::zeros(rows, d);
                let mut gk = Matrix::zeros(rows, d);
                let mut gv = Matrix::zeros(rows, d);
                let mut dp = vec![0.0; seq_len];
                for b in 0..rows / seq_len {
                    let base = b * seq_len;
                    for h in 0..heads {
                        let c0 = h * dk;
                        for t in 0..seq_len {
                            let pbase = ((b * heads + h) * seq_len + t) * seq_len;
                            let p = &probs[pbase..pbase + seq_len];
                            let go = &g.row(base + t)[c0..c0 + dk];
                            let mut weighted = 0.0;
                            for u in 0..seq_len {
                                if p[u] == 0.0 {
                                    dp[u] = 0.0;
                                    continue;
                                }
                                dp[u] = dot(go, &vm.row(base + u)[c0..c0 + dk]);
                                weighted += p[u] * dp[u];
                                let gvr = &mut gv.row_mut(base + u)[c0..c0 + dk];
                                for (o, x) in gvr.iter_mut().zip(go) {
                                    *o += p[u] * x;
                                }
                            }
                            for u in 0..seq_len {
                                if p[u] == 0.0 {
                                    continue;
                                }
                                let ds = p[u] * (dp[u] - weighted) * scale;
                                let kr = &km.row(base + u)[c0..c0 + dk];
                                let gqr = &mut gq.row_mut(base + t)[c0..c0 + dk];
                                for (o, x) in gqr.iter_mut().zip(kr) {
                                    *o += ds * x;
                                }
                                let qr = &qm.row(base + t)[c0..c0 + dk];
                                let gkr = &mut gk.row_mut(base + u)[c0..c0 + dk];
                                for (o, x) in gkr.iter_mut().zip(qr) {
                                    *o += ds * x;
                                }
                            }
                        }
                    }
                }
                accumulate(grads, *q, &gq);
                accumulate(grads, *k, &gk);
                accumulate(grads, *v, &gv);
            }
            Op::GraphAttention {
                q,
                k,
                v,
                heads,
                nbrs,
                probs,
            } => {
                let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                let (n, d) = qm.shape();
                let dk = d / *heads;
                let scale = 1.0 / (dk as f64).sqrt();
                let nnz = nbrs.nnz();
                let mut gq = Matrix::zeros(n, d);
                let mut gk = Matrix::zeros(n, d);
                let mut gv = Matrix::zeros(n, d);
                let mut dp = Vec::new();
                for h in 0..*heads {
                    let c0 = h * dk;
                    for i in 0..n {
                        let (lo, hi) = (nbrs.offsets[i], nbrs.offsets[i + 1]);
                        let targets = &nbrs.targets[lo..hi];
                        let p = &probs[h * nnz + lo..h * nnz + hi];
                        let go = &g.row(i)[c0..c0 + dk];
                        dp.clear();
                        let mut weighted = 0.0;
                        for (&pj, &j) in p.iter().zip(targets) {
                            let dpj = dot(go, &vm.row(j)[c0..c0 + dk]);
                            weighted += pj * dpj;
                            dp.push(dpj);
                            let gvr = &mut gv.row_mut(j)[c0..c0 + dk];
                            for (o, x) in gvr.iter_mut().zip(go) {
                                *o += pj * x;
                            }
                        }
                        for ((&pj, &j), &dpj) in p.iter().zip(targets).zip(&dp) {
                            let ds = pj * (dpj - weighted) * scale;
                            let gqr = &mut gq.row_mut(i)[c0..c0 + dk];
                            for (o, x) in gqr.iter_mut().zip(&km.row(j)[c0..c0 + dk]) {
                                *o += ds * x;
                            }
                            let gkr = &mut gk.row_mut(j)[c0..c0 + dk];
                            for (o, x) in gkr.iter_mut().zip(&qm.row(i)[c0..c0 + dk]) {
                                *o += ds * x;
                            }
                        }
                    }
                }
                accumulate(grads, *q, &gq);
                accumulate(grads, *k, &gk);
                accumulate(grads, *v, &gv);
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let m = targets.len().max(1) as f64;
                let up = g.get(0, 0) / m;
                let mut gl = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    let row = gl.row_mut(r);
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= up);
                }
                accumulate(grads, *logits, &gl);
            }
            Op::SymBce { a, b, labels } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let m = labels.len().max(1) as f64;
                let up = g.get(0, 0) / m;
                let mut ga = Matrix::zeros(labels.len(), 1);
                let mut gb = Matrix::zeros(labels.len(), 1);
                for (r, &y) in labels.iter().enumerate() {
                    let (sa, sb) = (sigmoid(av.get(r, 0)), sigmoid(bv.get(r, 0)));
                    let p = sym_prob(av.get(r, 0), bv.get(r, 0));
                    let dldp = (p - y) / (p * (1.0 - p));
                    ga.set(r, 0, up * dldp * 0.5 * sa * (1.0 - sa));
                    gb.set(r, 0, up * dldp * 0.5 * sb * (1.0 - sb));
                }
                accumulate(grads, *a, &ga);
                accumulate(grads, *b, &gb);
            }
            Op::Elbo {
                x,
                xhat,
                mu,
                logvar,
            } => {
                let (xh, mv, lv) = (self.value(*xhat), self.value(*mu), self.value(*logvar));
                let rows = x.rows().max(1) as f64;
                let up = g.get(0, 0) / rows;
                let len = x.cols() as f64;
                let mut gx = Matrix::zeros(xh.rows(), xh.cols());
                for ((o, a), b) in gx
                    .as_mut_slice()
                    .iter_mut()
                    .zip(x.as_slice())
                    .zip(xh.as_slice())
                {
                    *o = up * (-2.0) * (a - b) / len;
                }
                let mut gm = mv.clone();
                gm.scale_in_place(up);
                let mut gl = lv.clone();
                gl.as_mut_slice()
                    .iter_mut()
                    .for_each(|l| *l = up * (-0.5) * (1.0 - l.exp()));
                accumulate(grads, *xhat, &gx);
                accumulate(grads, *mu, &gm);
                accumulate(grads, *logvar, &gl);
            }
            Op::Reparam { mu, logvar, eps } => {
                accumulate(grads, *mu, g);
                let lv = self.value(*logvar);
                let mut gl = g.clone();
                for ((o, l), e) in gl
                    .as_mut_slice()
                    .iter_mut()
                    .zip(lv.as_slice())
                    .zip(eps.as_slice())
                {
                    *o *= e * 0.5 * (0.5 * l).exp();
                }
                accumulate(grads, *logvar, &gl);
            }
            Op::WeightedSum { a, w } => {
                let mut ga = w.clone();
                ga.scale_in_place(g.get(0, 0));
                accumulate(grads, *a, &ga);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: &Matrix) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn accumulate_with(
    grads: &mut [Option<Matrix>],
    v: Var,
    shape: (usize, usize),
    f: impl FnOnce(&mut Matrix),
) {
    let slot = &mut grads[v.0];
    if slot.is_none() {
        *slot = Some(Matrix::zeros(shape.0, shape.1));
    }
    f(slot.as_mut().unwrap());
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Symmetrized edge probability, clamped away from 0 and 1.
#[inline]
pub(crate) fn sym_prob(a: f64, b: f64) -> f64 {
    (0.5 * (sigmoid(a) + sigmoid(b))).clamp(1e-12, 1.0 - 1e-12)
}

/// `(total, recon, kl)` for one instance.
pub(crate) fn elbo_parts(x: &[f64], xhat: &[f64], mu: &[f64], logvar: &[f64]) -> (f64, f64, f64) {
    let recon = x
        .iter()
        .zip(xhat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.len().max(1) as f64;
    let kl = -0.5
        * mu.iter()
            .zip(logvar)
            .map(|(m, l)| 1.0 + l - m * m - l.exp())
            .sum::<f64>();
    (recon + kl, recon, kl)
}
