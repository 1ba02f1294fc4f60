//! Laplacian positional encodings, input fusion, and the neighbourhood
//! graph-transformer stack with attention capture.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datamodel::{GeneVocab, WGraph};
use crate::error::{Error, Result};
use crate::numerics::tape::{Neighborhoods, Tape, Var};
use crate::numerics::{sym_eig, xavier_init, Matrix, RngStream};

pub const LN_EPS: f64 = 1e-5;
const DEGREE_FLOOR: f64 = 1e-12;
const TRIVIAL_EIG: f64 = 1e-9;

/// `I - D^{-1/2} A D^{-1/2}` with weighted degrees floored at 1e-12.
pub fn normalized_laplacian(g: &WGraph) -> Matrix {
    let n = g.n();
    let inv_sqrt: Vec<f64> = g
        .weighted_degrees()
        .into_iter()
        .map(|d| 1.0 / d.max(DEGREE_FLOOR).sqrt())
        .collect();
    let mut l = Matrix::identity(n);
    for &(i, j, w) in g.edges() {
        let v = -w * inv_sqrt[i] * inv_sqrt[j];
        l.set(i, j, v);
        l.set(j, i, v);
    }
    l
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPe {
    /// Selected non-trivial eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// n × p; row i is gene i's encoding.
    pub encoding: Matrix,
}

/// Eigenvectors of the `p` smallest normalized-Laplacian eigenvalues above
/// the trivial threshold 1e-9.
pub fn laplacian_pe(g: &WGraph, p: usize) -> Result<LaplacianPe> {
    let n = g.n();
    if p == 0 || p >= n {
        return Err(Error::config(format!(
            "positional dimension p={p} must be in 1..{n}"
        )));
    }
    let eig = sym_eig(&normalized_laplacian(g))?;
    let chosen: Vec<usize> = (0..n)
        .filter(|&k| eig.values[k] > TRIVIAL_EIG)
        .take(p)
        .collect();
    if chosen.len() < p {
        return Err(Error::config(format!(
            "only {} non-trivial Laplacian eigenvectors available, p={p} requested",
            chosen.len()
        )));
    }
    let mut enc = Matrix::zeros(n, p);
    for (c, &k) in chosen.iter().enumerate() {
        for r in 0..n {
            enc.set(r, c, eig.vectors.get(r, k));
        }
    }
    Ok(LaplacianPe {
        eigenvalues: chosen.iter().map(|&k| eig.values[k]).collect(),
        encoding: enc,
    })
}

/// Attention neighbourhoods: each node's neighbours plus itself, ascending.
pub fn neighborhoods(g: &WGraph) -> Arc<Neighborhoods> {
    let adj = g.neighbors();
    let mut offsets = Vec::with_capacity(g.n() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for (i, nb) in adj.iter().enumerate() {
        let mut row: Vec<usize> = nb.iter().copied().chain(std::iter::once(i)).collect();
        row.sort_unstable();
        row.dedup();
        targets.extend(row);
        offsets.push(targets.len());
    }
    Arc::new(Neighborhoods { offsets, targets })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtConfig {
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub pe_dim: usize,
}

impl Default for GtConfig {
    fn default() -> Self {
        GtConfig {
            d: 32,
            heads: 4,
            layers: 2,
            pe_dim: 8,
        }
    }
}

impl GtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::config(format!(
                "graph transformer d={} must be a positive multiple of heads={}",
                self.d, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::config("graph transformer needs at least one layer"));
        }
        if self.pe_dim == 0 {
            return Err(Error::config("positional dimension must be at least 1"));
        }
        Ok(())
    }
}

/// Weights of one layer, stored (out × in). Rows `k·d_k..(k+1)·d_k` of
/// `wq`, `wk`, `wv` are head k's projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtLayer {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub ln1_g: Matrix,
    pub ln1_b: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub ln2_g: Matrix,
    pub ln2_b: Matrix,
}

const LAYER_PARAMS: usize = 10;

impl GtLayer {
    fn init(d: usize, s: RngStream) -> Result<Self> {
        Ok(GtLayer {
            wq: xavier_init(d, d, s.derive(0))?,
            wk: xavier_init(d, d, s.derive(1))?,
            wv: xavier_init(d, d, s.derive(2))?,
            wo: xavier_init(d, d, s.derive(3))?,
            ln1_g: Matrix::filled(1, d, 1.0),
            ln1_b: Matrix::zeros(1, d),
            w1: xavier_init(2 * d, d, s.derive(4))?,
            w2: xavier_init(d, 2 * d, s.derive(5))?,
            ln2_g: Matrix::filled(1, d, 1.0),
            ln2_b: Matrix::zeros(1, d),
        })
    }

    fn params(&self) -> [&Matrix; LAYER_PARAMS] {
        [
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln1_g,
            &self.ln1_b,
            &self.w1,
            &self.w2,
            &self.ln2_g,
            &self.ln2_b,
        ]
    }

    fn params_mut(&mut self) -> [&mut Matrix; LAYER_PARAMS] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.w1,
            &mut self.w2,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtParams {
    pub heads: usize,
    /// Expression projection (d × Σd_z) and bias.
    pub s0: Matrix,
    pub s0_b: Matrix,
    /// Global-embedding projection (d × d_n) and bias.
    pub t0: Matrix,
    pub t0_b: Matrix,
    /// Positional projection (d × p) and bias.
    pub u0: Matrix,
    pub u0_b: Matrix,
    pub layers: Vec<GtLayer>,
}

impl GtParams {
    pub fn init(
        expr_dim: usize,
        global_dim: usize,
        cfg: &GtConfig,
        stream: RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        Ok(GtParams {
            heads: cfg.heads,
            s0: xavier_init(d, expr_dim, stream.derive(0))?,
            s0_b: Matrix::zeros(1, d),
            t0: xavier_init(d, global_dim, stream.derive(1))?,
            t0_b: Matrix::zeros(1, d),
            u0: xavier_init(d, cfg.pe_dim, stream.derive(2))?,
            u0_b: Matrix::zeros(1, d),
            layers: (0..cfg.layers)
                .map(|l| GtLayer::init(d, stream.derive_path(&[3, l as u64])))
                .collect::<Result<_>>()?,
        })
    }

    pub fn d(&self) -> usize {
        self.s0.rows()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut v = vec![
            &self.s0, &self.s0_b, &self.t0, &self.t0_b, &self.u0, &self.u0_b,
        ];
        for l in &self.layers {
            v.extend(l.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![
            &mut self.s0,
            &mut self.s0_b,
            &mut self.t0,
            &mut self.t0_b,
            &mut self.u0,
            &mut self.u0_b,
        ];
        for l in self.layers.iter_mut() {
            v.extend(l.params_mut());
        }
        v
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundGt {
        BoundGt {
            vars: self
                .params()
                .into_iter()
                .map(|m| tape.leaf(m.clone()))
                .collect(),
            heads: self.heads,
            layers: self.layers.len(),
        }
    }
}

/// Tape handles of a [`GtParams`], in [`GtParams::params`] order.
pub struct BoundGt {
    pub vars: Vec<Var>,
    heads: usize,
    layers: usize,
}

impl BoundGt {
    fn layer(&self, l: usize) -> &[Var] {
        &self.vars[6 + LAYER_PARAMS * l..6 + LAYER_PARAMS * (l + 1)]
    }

    pub fn fuse(&self, tape: &mut Tape, z: Var, xi: Var, lambda: Var) -> Var {
        let a = tape.linear(z, self.vars[0], self.vars[1]);
        let b = tape.linear(xi, self.vars[2], self.vars[3]);
        let c = tape.linear(lambda, self.vars[4], self.vars[5]);
        let ab = tape.add(a, b);
        tape.add(ab, c)
    }

    /// One layer: `Norm(ĥ + W2·ReLU(W1·Norm(h + ĥ)))`. Returns the output
    /// and the attention node.
    pub fn layer_forward(
        &self,
        tape: &mut Tape,
        h: Var,
        l: usize,
        nbrs: &Arc<Neighborhoods>,
    ) -> (Var, Var) {
        let p = self.layer(l);
        let q = tape.matmul_t(h, p[0]);
        let k = tape.matmul_t(h, p[1]);
        let v = tape.matmul_t(h, p[2]);
        let att = tape.graph_attention(q, k, v, self.heads, Arc::clone(nbrs));
        let hhat = tape.matmul_t(att, p[3]);
        let r = tape.add(h, hhat);
        let n1 = tape.layer_norm(r, p[4], p[5], LN_EPS);
        let f = tape.matmul_t(n1, p[6]);
        let f = tape.relu(f);
        let f = tape.matmul_t(f, p[7]);
        let r2 = tape.add(hhat, f);
        (tape.layer_norm(r2, p[8], p[9], LN_EPS), att)
    }

    pub fn forward(&self, tape: &mut Tape, h0: Var, nbrs: &Arc<Neighborhoods>) -> (Var, Vec<Var>) {
        let mut h = h0;
        let mut atts = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let (next, a) = self.layer_forward(tape, h, l, nbrs);
            atts.push(a);
            h = next;
        }
        (h, atts)
    }
}

fn check_rows(parts: &[(&str, &Matrix)]) -> Result<()> {
    let n = parts[0].1.rows();
    for (name, m) in parts {
        if m.rows() != n {
            return Err(Error::invalid(format!(
                "{name} has {} rows, expected {n}",
                m.rows()
            )));
        }
    }
    Ok(())
}

/// `h0_i = (S⁰Z_i + s⁰) + (T⁰ξ_i + t⁰) + (U⁰λ_i + u⁰)`
pub fn fuse_node_features(
    z: &Matrix,
    xi: &Matrix,
    lambda: &Matrix,
    params: &GtParams,
) -> Result<Matrix> {
    check_rows(&[
        ("expression latents", z),
        ("global embeddings", xi),
        ("positional encodings", lambda),
    ])?;
    for (name, m, w) in [
        ("expression", z, &params.s0),
        ("global", xi, &params.t0),
        ("positional", lambda, &params.u0),
    ] {
        if m.cols() != w.cols() {
            return Err(Error::invalid(format!(
                "{name} features have width {}, projection expects {}",
                m.cols(),
                w.cols()
            )));
        }
    }
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let (zv, xv, lv) = (
        tape.leaf(z.clone()),
        tape.leaf(xi.clone()),
        tape.leaf(lambda.clone()),
    );
    let h = b.fuse(&mut tape, zv, xv, lv);
    Ok(tape.value(h).clone())
}

/// Per-layer, per-head weights over the directed pairs of `nbrs`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTensor {
    pub layers: usize,
    pub heads: usize,
    pub nbrs: Neighborhoods,
    /// Indexed `(layer·H + head)·nnz + e`, where edge `e` runs over
    /// `nbrs.targets` in CSR order.
    pub weights: Vec<f64>,
}

impl AttentionTensor {
    pub fn n(&self) -> usize {
        self.nbrs.n()
    }

    pub fn entry_count(&self) -> usize {
        self.weights.len()
    }

    pub fn slice(&self, layer: usize, head: usize) -> &[f64] {
        let nnz = self.nbrs.nnz();
        let k = layer * self.heads + head;
        &self.weights[k * nnz..(k + 1) * nnz]
    }

    /// Weight of `src → dst` in one head map, if `dst` is attended by `src`.
    pub fn weight(&self, layer: usize, head: usize, src: usize, dst: usize) -> Option<f64> {
        let (lo, hi) = (self.nbrs.offsets[src], self.nbrs.offsets[src + 1]);
        let e = self.nbrs.targets[lo..hi].binary_search(&dst).ok()?;
        Some(self.slice(layer, head)[lo + e])
    }

    /// Head-summed weight of every directed pair in one layer.
    pub fn head_sum(&self, layer: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nbrs.nnz()];
        for h in 0..self.heads {
            for (o, w) in out.iter_mut().zip(self.slice(layer, h)) {
                *o += w;
            }
        }
        out
    }
}

fn collect_attention(
    tape: &Tape,
    atts: &[Var],
    heads: usize,
    nbrs: &Neighborhoods,
) -> AttentionTensor {
    let mut weights = Vec::with_capacity(atts.len() * heads * nbrs.nnz());
    for &a in atts {
        weights.extend_from_slice(tape.attention_probs(a).expect("graph attention node"));
    }
    AttentionTensor {
        layers: atts.len(),
        heads,
        nbrs: nbrs.clone(),
        weights,
    }
}

/// Attention captured from a single layer.
pub type LayerAttention = AttentionTensor;

pub fn gt_layer_forward(
    h: &Matrix,
    nbrs: &Arc<Neighborhoods>,
    params: &GtParams,
    layer: usize,
    capture: bool,
) -> Result<(Matrix, Option<LayerAttention>)> {
    if h.cols() != params.d() || h.rows() != nbrs.n() {
        return Err(Error::invalid(format!(
            "layer input is {}x{}, expected {}x{}",
            h.rows(),
            h.cols(),
            nbrs.n(),
            params.d()
        )));
    }
    if layer >= params.layers.len() {
        return Err(Error::invalid(format!("layer {layer} out of range")));
    }
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let hv = tape.leaf(h.clone());
    let (out, att) = b.layer_forward(&mut tape, hv, layer, nbrs);
    let captured = capture.then(|| collect_attention(&tape, &[att], params.heads, nbrs));
    Ok((tape.value(out).clone(), captured))
}

pub fn gt_forward(
    h0: &Matrix,
    nbrs: &Arc<Neighborhoods>,
    params: &GtParams,
) -> Result<(Matrix, AttentionTensor)> {
    if h0.cols() != params.d() || h0.rows() != nbrs.n() {
        return Err(Error::invalid(format!(
            "graph transformer input is {}x{}, expected {}x{}",
            h0.rows(),
            h0.cols(),
            nbrs.n(),
            params.d()
        )));
    }
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let hv = tape.leaf(h0.clone());
    let (out, atts) = b.forward(&mut tape, hv, nbrs);
    let att = collect_attention(&tape, &atts, params.heads, nbrs);
    Ok((tape.value(out).clone(), att))
}

/// Rows `layer head src dst weight` with gene symbols, CSR order.
pub fn attention_to_string(att: &AttentionTensor, vocab: &GeneVocab) -> String {
    let mut s = String::from("layer\thead\tsrc\tdst\tweight\n");
    let nnz = att.nbrs.nnz();
    for l in 0..att.layers {
        for h in 0..att.heads {
            let w = att.slice(l, h);
            for i in 0..att.n() {
                for e in att.nbrs.offsets[i]..att.nbrs.offsets[i + 1] {
                    let j = att.nbrs.targets[e];
                    writeln!(
                        s,
                        "{l}\t{h}\t{}\t{}\t{:e}",
                        vocab.symbol(i),
                        vocab.symbol(j),
                        w[e]
                    )
                    .unwrap();
                }
            }
        }
    }
    debug_assert_eq!(s.lines().count(), 1 + att.layers * att.heads * nnz);
    s
}

pub fn save_attention(path: &Path, att: &AttentionTensor, vocab: &GeneVocab) -> Result<()> {
    std::fs::write(path, attention_to_string(att, vocab)).map_err(|e| Error::io(path, e))
}

pub fn load_attention(path: &Path, vocab: &GeneVocab) -> Result<AttentionTensor> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        col: 1,
        msg,
    };
    let mut rows: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(perr(
                ln + 1,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| perr(ln + 1, format!("bad integer '{s}'")))
        };
        let gene = |s: &str| {
            vocab
                .id(s)
                .ok_or_else(|| perr(ln + 1, format!("unknown gene '{s}'")))
        };
        let w = f[4]
            .parse::<f64>()
            .ok()
            .filter(|w| w.is_finite())
            .ok_or_else(|| perr(ln + 1, format!("bad weight '{}'", f[4])))?;
        rows.push((num(f[0])?, num(f[1])?, gene(f[2])?, gene(f[3])?, w));
    }
    let layers = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let heads = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if layers == 0 {
        return Err(Error::data(format!(
            "{}: no attention rows",
            path.display()
        )));
    }
    let n = vocab.len();
    let mut offsets = vec![0usize; n + 1];
    let mut targets = Vec::new();
    for &(l, h, i, j, _) in &rows {
        if l == 0 && h == 0 {
            offsets[i + 1] += 1;
            targets.push((i, j));
        }
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    targets.sort_unstable();
    let nbrs = Neighborhoods {
        offsets,
        targets: targets.iter().map(|t| t.1).collect(),
    };
    let nnz = nbrs.nnz();
    if rows.len() != layers * heads * nnz {
        return Err(Error::data(format!(
            "{}: {} rows do not cover {layers} layers x {heads} heads x {nnz} pairs",
            path.display(),
            rows.len()
        )));
    }
    let mut att = AttentionTensor {
        layers,
        heads,
        nbrs,
        weights: vec![f64::NAN; layers * heads * nnz],
    };
    for &(l, h, i, j, w) in &rows {
        let (lo, hi) = (att.nbrs.offsets[i], att.nbrs.offsets[i + 1]);
        let e = att.nbrs.targets[lo..hi].binary_search(&j).map_err(|_| {
            Error::data(format!(
                "{}: pair {i}->{j} missing from layer 0 head 0",
                path.display()
            ))
        })?;
        att.weights[(l * heads + h) * nnz + lo + e] = w;
    }
    if att.weights.iter().any(|w| w.is_nan()) {
        return Err(Error::data(format!(
            "{}: incomplete attention slices",
            path.display()
        )));
    }
    Ok(att)
}
