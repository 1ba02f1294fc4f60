//! Synthetic benchmarks: scale-free graphs with a planted module, matched
//! expression for each modality, noisy network views and gene sets.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    save_edgelist, save_expression, save_gmt, write_text, ExpressionMatrix, GeneSet, GeneSetDB,
    GeneVocab, Modality, WGraph,
};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

pub const PLANTED_SET: &str = "PLANTED_MODULE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub n: usize,
    pub m: usize,
    pub module_size: usize,
    pub p_in: f64,
    /// Samples for microarray, scRNA and snRNA.
    pub samples: [usize; 3],
    pub dropout_sc: f64,
    pub dropout_sn: f64,
    pub noise: f64,
    /// Extra loading of the planted genes on their shared factor.
    pub module_strength: f64,
    pub views: usize,
    /// Probability that a view keeps a true edge.
    pub view_keep: f64,
    /// Spurious edges per view, as a fraction of the true edge count.
    pub view_noise: f64,
    pub n_decoys: usize,
    pub decoy_size: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            n: 300,
            m: 2,
            module_size: 20,
            p_in: 0.6,
            samples: [30, 40, 60],
            dropout_sc: 0.5,
            dropout_sn: 0.6,
            noise: 0.5,
            module_strength: 1.0,
            views: 3,
            view_keep: 0.9,
            view_noise: 0.1,
            n_decoys: 20,
            decoy_size: 20,
            seed: 0,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n {
            return Err(Error::config(format!(
                "attachment m = {} must satisfy 1 <= m < n = {}",
                self.m, self.n
            )));
        }
        if self.module_size == 0 || self.module_size >= self.n {
            return Err(Error::config(format!(
                "module size {} must be in [1, n)",
                self.module_size
            )));
        }
        if !(self.p_in > 0.0 && self.p_in <= 1.0) {
            return Err(Error::config(format!("p_in = {} not in (0, 1]", self.p_in)));
        }
        for (name, d) in [
            ("dropout_sc", self.dropout_sc),
            ("dropout_sn", self.dropout_sn),
        ] {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::config(format!("{name} = {d} not in [0, 1)")));
            }
        }
        if self.samples.iter().any(|&s| s < 2) {
            return Err(Error::config("every modality needs at least two samples"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0 && self.module_strength.is_finite()) {
            return Err(Error::config(
                "noise and module strength must be finite, noise nonnegative",
            ));
        }
        if self.views == 0
            || !(self.view_keep > 0.0 && self.view_keep <= 1.0)
            || !(self.view_noise >= 0.0)
        {
            return Err(Error::config(
                "need at least one view, view_keep in (0, 1], view_noise >= 0",
            ));
        }
        if self.decoy_size == 0 || self.decoy_size > self.n {
            return Err(Error::config(format!(
                "decoy size {} must be in [1, n]",
                self.decoy_size
            )));
        }
        Ok(())
    }

    fn samples_for(&self, m: Modality) -> usize {
        self.samples[m as usize]
    }

    fn dropout_for(&self, m: Modality) -> f64 {
        match m {
            Modality::Microarray => 0.0,
            Modality::Scrna => self.dropout_sc,
            Modality::Snrna => self.dropout_sn,
        }
    }
}

/// Preferential attachment from an `m`-clique; unit weights.
pub fn gen_scale_free(n: usize, m: usize, stream: RngStream) -> Result<WGraph> {
    if m == 0 || m >= n {
        return Err(Error::config(format!(
            "attachment m = {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    let mut rng = stream.rng();
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // Every endpoint once per incident edge: uniform draws are degree-weighted.
    let mut ends: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for i in 0..m {
        for j in i + 1..m {
            edges.push((i, j, 1.0));
            ends.extend([i, j]);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for t in m..n {
        chosen.clear();
        while chosen.len() < m {
            let v = if ends.is_empty() {
                rng.random_range(0..t)
            } else {
                ends[rng.random_range(0..ends.len())]
            };
            if !chosen.contains(&v) {
                chosen.push(v);
            }
        }
        for &v in &chosen {
            edges.push((v, t, 1.0));
            ends.extend([v, t]);
        }
    }
    Ok(WGraph::from_edges(n, edges)?.0)
}

/// Adds each absent within-module pair with probability `p_in`.
pub fn plant_module(
    g: &WGraph,
    size: usize,
    p_in: f64,
    stream: RngStream,
) -> Result<(WGraph, Vec<usize>)> {
    if size == 0 || size > g.n() {
        return Err(Error::config(format!(
            "module size {size} with {} nodes",
            g.n()
        )));
    }
    if !(p_in > 0.0 && p_in <= 1.0) {
        return Err(Error::config(format!("p_in = {p_in} not in (0, 1]")));
    }
    let mut rng = stream.rng();
    let mut members = index::sample(&mut rng, g.n(), size).into_vec();
    members.sort_unstable();
    let mut edges = g.edges().to_vec();
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            // The draw happens for every pair so membership alone fixes the stream.
            let keep = rng.random::<f64>() < p_in;
            if keep && !g.has_edge(i, j) {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok((WGraph::from_edges(g.n(), edges)?.0, members))
}

pub fn gene_symbols(n: usize) -> GeneVocab {
    let width = n.to_string().len().max(4);
    GeneVocab::new((0..n).map(|i| format!("G{i:0width$}")).collect()).expect("distinct symbols")
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Sample factors smoothed by one neighbour-averaging step, a shared factor
/// on planted genes, then modality-specific noise and dropout.
pub fn simulate_expression(
    g: &WGraph,
    vocab: &GeneVocab,
    planted: &[usize],
    spec: &BenchmarkSpec,
    modality: Modality,
    stream: RngStream,
) -> Result<ExpressionMatrix> {
    spec.validate()?;
    let n = g.n();
    if vocab.len() != n {
        return Err(Error::invalid(format!(
            "{} symbols for {n} genes",
            vocab.len()
        )));
    }
    let s = spec.samples_for(modality);
    let mut rng = stream.rng();
    let mut gauss = |r: usize, c: usize| -> Matrix {
        let v = (0..r * c)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix::from_vec(r, c, v).expect("shape")
    };
    let f = gauss(n, s);
    let shared = gauss(1, s);
    let noise = gauss(n, s);
    let drop_draws: Vec<f64> = (0..n * s).map(|_| rng.random::<f64>()).collect();

    let adj = g.adjacency();
    let mut x = f.clone();
    for i in 0..n {
        if adj[i].is_empty() {
            continue;
        }
        let k = adj[i].len() as f64;
        let row = x.row_mut(i);
        for &(j, _) in &adj[i] {
            for (o, v) in row.iter_mut().zip(f.row(j)) {
                *o += v / k;
            }
        }
    }
    for &p in planted {
        for (o, v) in x.row_mut(p).iter_mut().zip(shared.row(0)) {
            *o += spec.module_strength * v;
        }
    }
    let dropout = spec.dropout_for(modality);
    let mut values = Matrix::zeros(n, s);
    for i in 0..n {
        for c in 0..s {
            let (sig, eps) = (x.get(i, c), noise.get(i, c));
            let v = if modality.is_count_like() {
                if drop_draws[i * s + c] < dropout {
                    0.0
                } else {
                    softplus(sig) * (spec.noise * eps).exp()
                }
            } else {
                sig + spec.noise * eps
            };
            values.set(i, c, v);
        }
    }
    let samples = (0..s)
        .map(|c| format!("{}_s{:02}", modality.as_str(), c + 1))
        .collect();
    ExpressionMatrix::new(modality, vocab.clone(), samples, values)
}

/// The planted set plus `n_decoys` uniform random sets.
pub fn gen_gene_sets(
    planted: &[usize],
    vocab: &GeneVocab,
    n_decoys: usize,
    decoy_size: usize,
    stream: RngStream,
) -> Result<GeneSetDB> {
    if decoy_size == 0 || decoy_size > vocab.len() {
        return Err(Error::config(format!(
            "decoy size {decoy_size} with {} genes",
            vocab.len()
        )));
    }
    let mut rng = stream.rng();
    let mut sets = vec![GeneSet {
        name: PLANTED_SET.into(),
        description: "planted module".into(),
        members: planted
            .iter()
            .map(|&i| vocab.symbol(i).to_string())
            .collect(),
    }];
    for d in 0..n_decoys {
        let mut ids = index::sample(&mut rng, vocab.len(), decoy_size).into_vec();
        ids.sort_unstable();
        sets.push(GeneSet {
            name: format!("DECOY_{:02}", d + 1),
            description: "random genes".into(),
            members: ids
                .into_iter()
                .map(|i| vocab.symbol(i).to_string())
                .collect(),
        });
    }
    GeneSetDB::new(sets)
}

/// Independent noisy observations of `g`: kept edges weigh in [0.5, 1],
/// spurious ones in [0, 0.5).
pub fn noisy_views(g: &WGraph, spec: &BenchmarkSpec, stream: RngStream) -> Result<Vec<WGraph>> {
    let n = g.n();
    let total = n * (n - 1) / 2;
    let spurious =
        ((spec.view_noise * g.edge_count() as f64).round() as usize).min(total - g.edge_count());
    (0..spec.views)
        .map(|v| {
            let mut rng = stream.derive(v as u64).rng();
            let mut edges = Vec::with_capacity(g.edge_count() + spurious);
            for &(i, j, _) in g.edges() {
                if rng.random::<f64>() < spec.view_keep {
                    edges.push((i, j, rng.random_range(0.5..=1.0)));
                }
            }
            let mut added = BTreeSet::new();
            while added.len() < spurious {
                let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
                let p = (a.min(b), a.max(b));
                if a != b && !g.has_edge(p.0, p.1) && added.insert(p) {
                    edges.push((p.0, p.1, rng.random_range(0.0..0.5)));
                }
            }
            Ok(WGraph::from_edges(n, edges)?.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub vocab: GeneVocab,
    pub truth: WGraph,
    pub planted: Vec<usize>,
    pub expressions: Vec<ExpressionMatrix>,
    pub views: Vec<WGraph>,
    pub gene_sets: GeneSetDB,
}

pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.validate()?;
    let root = RngStream::new(spec.seed, 0x5359);
    let base = gen_scale_free(spec.n, spec.m, root.derive(0))?;
    let (truth, planted) = plant_module(&base, spec.module_size, spec.p_in, root.derive(1))?;
    let vocab = gene_symbols(spec.n);
    let expressions = Modality::ALL
        .iter()
        .map(|&m| {
            simulate_expression(
                &truth,
                &vocab,
                &planted,
                spec,
                m,
                root.derive_path(&[2, m as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let views = noisy_views(&truth, spec, root.derive(3))?;
    let gene_sets = gen_gene_sets(
        &planted,
        &vocab,
        spec.n_decoys,
        spec.decoy_size,
        root.derive(4),
    )?;
    Ok(Benchmark {
        spec: spec.clone(),
        vocab,
        truth,
        planted,
        expressions,
        views,
        gene_sets,
    })
}

/// Paths written by [`write_benchmark`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchmarkFiles {
    pub expressions: Vec<(Modality, PathBuf)>,
    pub networks: Vec<PathBuf>,
    pub gene_sets: PathBuf,
    pub truth: PathBuf,
    pub planted: PathBuf,
}

pub fn write_benchmark(b: &Benchmark, dir: &Path) -> Result<BenchmarkFiles> {
    let mut files = BenchmarkFiles {
        expressions: Vec::new(),
        networks: Vec::new(),
        gene_sets: dir.join("gene_sets.gmt"),
        truth: dir.join("truth_network.tsv"),
        planted: dir.join("planted.txt"),
    };
    for e in &b.expressions {
        let p = dir.join(format!("expr_{}.tsv", e.modality.as_str()));
        save_expression(&p, e)?;
        files.expressions.push((e.modality, p));
    }
    for (k, v) in b.views.iter().enumerate() {
        let p = dir.join(format!("network_{:02}.tsv", k + 1));
        save_edgelist(&p, v, &b.vocab)?;
        files.networks.push(p);
    }
    save_gmt(&files.gene_sets, &b.gene_sets)?;
    save_edgelist(&files.truth, &b.truth, &b.vocab)?;
    let mut planted: String = b
        .planted
        .iter()
        .map(|&i| format!("{}\n", b.vocab.symbol(i)))
        .collect();
    if planted.is_empty() {
        planted.push('\n');
    }
    write_text(&files.planted, &planted)?;
    Ok(files)
}
