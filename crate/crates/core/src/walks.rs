//! Second-order biased random walks and the multi-network token corpus.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::WGraph;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    /// Gene tokens per walk, excluding the leading [CLS].
    pub walk_length: usize,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 20,
            p: 1.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return Err(Error::config(
                "walks_per_node and walk_length must be at least 1",
            ));
        }
        if !(self.p > 0.0 && self.q > 0.0) || !self.p.is_finite() || !self.q.is_finite() {
            return Err(Error::config(format!(
                "walk p={} and q={} must be positive",
                self.p, self.q
            )));
        }
        Ok(())
    }
}

/// Token sequences over a vocabulary of `n_genes` genes. Special ids follow
/// the gene ids: [CLS] = n, [MASK] = n+1, [PAD] = n+2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub n_genes: usize,
    pub sequences: Vec<Vec<usize>>,
    /// Index of the network each sequence was sampled from.
    pub sources: Vec<usize>,
}

impl Corpus {
    pub fn empty(n_genes: usize) -> Self {
        Corpus {
            n_genes,
            sequences: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn cls(&self) -> usize {
        self.n_genes
    }

    pub fn mask(&self) -> usize {
        self.n_genes + 1
    }

    pub fn pad(&self) -> usize {
        self.n_genes + 2
    }

    pub fn token_count(&self) -> usize {
        self.n_genes + 3
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn is_gene(&self, t: usize) -> bool {
        t < self.n_genes
    }
}

struct Walker<'a> {
    adj: &'a [Vec<(usize, f64)>],
    inv_p: f64,
    inv_q: f64,
}

impl Walker<'_> {
    fn linked(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search_by_key(&b, |e| e.0).is_ok()
    }

    fn bias(&self, prev: usize, x: usize) -> f64 {
        if x == prev {
            self.inv_p
        } else if self.linked(prev, x) {
            1.0
        } else {
            self.inv_q
        }
    }

    fn step<R: Rng>(&self, rng: &mut R, prev: Option<usize>, cur: usize) -> usize {
        let nbrs = &self.adj[cur];
        let weight = |&(x, w): &(usize, f64)| match prev {
            None => w,
            Some(p) => w * self.bias(p, x),
        };
        let total: f64 = nbrs.iter().map(weight).sum();
        let mut u = rng.random::<f64>() * total;
        for e in nbrs {
            u -= weight(e);
            if u < 0.0 {
                return e.0;
            }
        }
        nbrs[nbrs.len() - 1].0
    }
}

fn walks_for(graph: &WGraph, cfg: &WalkConfig, root: RngStream, source: usize, out: &mut Corpus) {
    let n = graph.n();
    let adj = graph.adjacency();
    let walker = Walker {
        adj: &adj,
        inv_p: 1.0 / cfg.p,
        inv_q: 1.0 / cfg.q,
    };
    for start in 0..n {
        for r in 0..cfg.walks_per_node {
            let mut seq = Vec::with_capacity(cfg.walk_length + 1);
            seq.push(out.cls());
            seq.push(start);
            if adj[start].is_empty() {
                seq.resize(cfg.walk_length + 1, out.pad());
            } else {
                let mut rng = root.derive_path(&[start as u64, r as u64]).rng();
                let mut prev = None;
                let mut cur = start;
                while seq.len() < cfg.walk_length + 1 {
                    let next = walker.step(&mut rng, prev, cur);
                    seq.push(next);
                    prev = Some(cur);
                    cur = next;
                }
            }
            out.sequences.push(seq);
            out.sources.push(source);
        }
    }
}

/// `walks_per_node` walks from every node of one graph, tagged as source 0.
pub fn sample_walks(graph: &WGraph, cfg: &WalkConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut c = Corpus::empty(graph.n());
    walks_for(graph, cfg, RngStream::new(cfg.seed, 0), 0, &mut c);
    Ok(c)
}

/// Concatenated corpora of all graphs; graph `k` uses stream `(seed, k)`.
pub fn build_corpus(graphs: &[WGraph], n_genes: usize, cfg: &WalkConfig) -> Result<Corpus> {
    cfg.validate()?;
    if let Some(g) = graphs.iter().find(|g| g.n() != n_genes) {
        return Err(Error::invalid(format!(
            "build_corpus: graph has {} nodes but the vocabulary has {n_genes}",
            g.n()
        )));
    }
    let mut c = Corpus::empty(n_genes);
    for (k, g) in graphs.iter().enumerate() {
        walks_for(g, cfg, RngStream::new(cfg.seed, k as u64), k, &mut c);
    }
    Ok(c)
}

/// One line per sequence: `source<TAB>tok tok ...`, preceded by a
/// `#genes <n>` header.
pub fn corpus_to_string(c: &Corpus) -> String {
    let mut s = format!("#genes\t{}\n", c.n_genes);
    for (seq, src) in c.sequences.iter().zip(&c.sources) {
        write!(s, "{src}\t").unwrap();
        for (k, t) in seq.iter().enumerate() {
            if k > 0 {
                s.push(' ');
            }
            write!(s, "{t}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn save_corpus(path: &Path, c: &Corpus) -> Result<()> {
    std::fs::write(path, corpus_to_string(c)).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, col: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        col,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let n_genes = match lines.next() {
        Some((_, h)) => h
            .strip_prefix("#genes\t")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| perr(1, 1, "expected '#genes<TAB><count>' header".into()))?,
        None => return Err(perr(1, 1, "empty corpus file".into())),
    };
    let mut c = Corpus::empty(n_genes);
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (src, toks) = line
            .split_once('\t')
            .ok_or_else(|| perr(ln + 1, 1, "missing source tag".into()))?;
        let src = src
            .parse::<usize>()
            .map_err(|_| perr(ln + 1, 1, format!("bad source tag '{src}'")))?;
        let mut seq = Vec::new();
        let mut col = src.to_string().len() + 2;
        for t in toks.split(' ') {
            let id = t
                .parse::<usize>()
                .ok()
                .filter(|&v| v < c.token_count())
                .ok_or_else(|| perr(ln + 1, col, format!("bad token '{t}'")))?;
            seq.push(id);
            col += t.len() + 1;
        }
        if seq.first() != Some(&c.cls()) {
            return Err(perr(ln + 1, col, "sequence must start with [CLS]".into()));
        }
        c.sequences.push(seq);
        c.sources.push(src);
    }
    Ok(c)
}
