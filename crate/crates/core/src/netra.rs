//! Influence scores from captured attention, and ranked gene tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{write_text, GeneVocab};
use crate::error::{Error, Result};
use crate::gtcore::AttentionTensor;

/// Total incoming attention per node over every layer, head and source,
/// self-loops included.
pub fn netra_scores(att: &AttentionTensor) -> Result<Vec<f64>> {
    let nnz = att.nbrs.nnz();
    let want = att.layers * att.heads * nnz;
    if att.layers == 0 || att.heads == 0 || att.weights.len() != want {
        return Err(Error::data(format!(
            "attention tensor holds {} weights, expected {} ({} layers × {} heads × {} pairs)",
            att.weights.len(),
            want,
            att.layers,
            att.heads,
            nnz
        )));
    }
    let mut a = vec![0.0; att.n()];
    for chunk in att.weights.chunks_exact(nnz.max(1)) {
        for (&dst, &w) in att.nbrs.targets.iter().zip(chunk) {
            a[dst] += w;
        }
    }
    Ok(a)
}

/// `|Σ_j A_j − n·H·L|`, which is zero up to rounding for softmax weights.
pub fn conservation_gap(att: &AttentionTensor, scores: &[f64]) -> f64 {
    let expected = (att.n() * att.heads * att.layers) as f64;
    (scores.iter().sum::<f64>() - expected).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedGene {
    pub symbol: String,
    pub id: usize,
    pub raw: f64,
    pub log2: f64,
    pub rank: usize,
    pub baselines: Vec<f64>,
}

/// Rows in rank order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedGeneTable {
    pub baseline_names: Vec<String>,
    pub rows: Vec<RankedGene>,
}

/// A named per-gene score vector indexed like the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct Baseline<'a> {
    pub name: &'a str,
    pub scores: &'a [f64],
}

/// Descending by raw score, ties by ascending symbol.
pub fn rank_genes(
    vocab: &GeneVocab,
    scores: &[f64],
    baselines: &[Baseline],
) -> Result<RankedGeneTable> {
    if scores.len() != vocab.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} genes",
            scores.len(),
            vocab.len()
        )));
    }
    if let Some((i, s)) = scores
        .iter()
        .enumerate()
        .find(|(_, s)| !(s.is_finite() && **s > 0.0))
    {
        return Err(Error::data(format!(
            "score of {} is {s}; influence scores must be finite and positive",
            vocab.symbol(i)
        )));
    }
    for b in baselines {
        if b.scores.len() != vocab.len() {
            return Err(Error::invalid(format!(
                "baseline {} has {} scores",
                b.name,
                b.scores.len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| vocab.symbol(a).cmp(vocab.symbol(b)))
    });
    let rows = order
        .into_iter()
        .enumerate()
        .map(|(r, id)| RankedGene {
            symbol: vocab.symbol(id).to_string(),
            id,
            raw: scores[id],
            log2: scores[id].log2(),
            rank: r + 1,
            baselines: baselines.iter().map(|b| b.scores[id]).collect(),
        })
        .collect();
    Ok(RankedGeneTable {
        baseline_names: baselines.iter().map(|b| b.name.to_string()).collect(),
        rows,
    })
}

pub fn top_k(table: &RankedGeneTable, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > table.rows.len() {
        return Err(Error::invalid(format!(
            "top_k: k = {k} with {} genes",
            table.rows.len()
        )));
    }
    Ok(table.rows[..k].iter().map(|r| r.symbol.clone()).collect())
}

pub fn ranked_to_tsv(table: &RankedGeneTable) -> String {
    let mut s = String::from("symbol\traw\tlog2\trank");
    for b in &table.baseline_names {
        s.push('\t');
        s.push_str(b);
    }
    s.push('\n');
    for r in &table.rows {
        write!(s, "{}\t{}\t{}\t{}", r.symbol, r.raw, r.log2, r.rank).unwrap();
        for v in &r.baselines {
            write!(s, "\t{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn save_ranked(path: &Path, table: &RankedGeneTable) -> Result<()> {
    write_text(path, &ranked_to_tsv(table))
}
