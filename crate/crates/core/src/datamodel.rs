//! Gene vocabulary, expression matrices, weighted graphs, gene-set
//! collections and their text formats.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Ordered, unique gene symbols with dense ids. Three special tokens sit
/// just past the gene ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl GeneVocab {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::data(format!("empty gene symbol at position {i}")));
            }
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate gene symbol {s:?}")));
            }
        }
        Ok(GeneVocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn cls(&self) -> usize {
        self.len()
    }

    pub fn mask(&self) -> usize {
        self.len() + 1
    }

    pub fn pad(&self) -> usize {
        self.len() + 2
    }

    /// Gene ids plus the three special tokens.
    pub fn token_count(&self) -> usize {
        self.len() + 3
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Microarray,
    Scrna,
    Snrna,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Microarray, Modality::Scrna, Modality::Snrna];

    pub fn as_str(&self) -> &'static str {
        match self {
            Modality::Microarray => "microarray",
            Modality::Scrna => "scrna",
            Modality::Snrna => "snrna",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "microarray" => Ok(Modality::Microarray),
            "scrna" => Ok(Modality::Scrna),
            "snrna" => Ok(Modality::Snrna),
            other => Err(Error::config(format!("unknown modality {other:?}"))),
        }
    }

    /// Whether values are counts-like (nonnegative, zero-inflated).
    pub fn is_count_like(&self) -> bool {
        !matches!(self, Modality::Microarray)
    }
}

/// Genes × samples expression values for one modality.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    pub modality: Modality,
    pub genes: GeneVocab,
    pub samples: Vec<String>,
    pub values: Matrix,
}

impl ExpressionMatrix {
    pub fn new(
        modality: Modality,
        genes: GeneVocab,
        samples: Vec<String>,
        values: Matrix,
    ) -> Result<Self> {
        if values.rows() != genes.len() || values.cols() != samples.len() {
            return Err(Error::data(format!(
                "expression shape {:?} does not match {} genes × {} samples",
                values.shape(),
                genes.len(),
                samples.len()
            )));
        }
        if !values.is_finite() {
            return Err(Error::data("expression matrix contains non-finite values"));
        }
        if modality.is_count_like() && values.as_slice().iter().any(|v| *v < 0.0) {
            return Err(Error::data(format!(
                "{} values must be nonnegative",
                modality.as_str()
            )));
        }
        Ok(ExpressionMatrix {
            modality,
            genes,
            samples,
            values,
        })
    }

    /// Restricts and reorders rows to `vocab` (every symbol must be present).
    pub fn reindex(&self, vocab: &GeneVocab) -> Result<ExpressionMatrix> {
        let ids = vocab
            .symbols()
            .iter()
            .map(|s| {
                self.genes.id(s).ok_or_else(|| {
                    Error::data(format!(
                        "gene {s:?} missing from {}",
                        self.modality.as_str()
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ExpressionMatrix::new(
            self.modality,
            vocab.clone(),
            self.samples.clone(),
            self.values.select_rows(&ids),
        )
    }
}

/// Undirected weighted graph; edges stored once as `(i, j, w)` with `i < j`,
/// sorted, unique, weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

/// What [`WGraph::from_edges`] had to fix.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub self_edges: usize,
    pub clamped: usize,
    pub duplicates: usize,
}

impl WGraph {
    pub fn empty(n: usize) -> Self {
        WGraph {
            n,
            edges: Vec::new(),
        }
    }

    /// Normalizes arbitrary edges: endpoints ordered, self-edges dropped,
    /// duplicates merged keeping the larger weight, weights clamped to [0, 1].
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<(Self, EdgeCleanup)> {
        let mut cleanup = EdgeCleanup::default();
        let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for n={n}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has non-finite weight"
                )));
            }
            if a == b {
                cleanup.self_edges += 1;
                continue;
            }
            let w = if (0.0..=1.0).contains(&w) {
                w
            } else {
                cleanup.clamped += 1;
                w.clamp(0.0, 1.0)
            };
            let key = (a.min(b), a.max(b));
            match best.get_mut(&key) {
                Some(old) => {
                    cleanup.duplicates += 1;
                    if w > *old {
                        *old = w;
                    }
                }
                None => {
                    best.insert(key, w);
                }
            }
        }
        let edges = best.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        Ok((WGraph { n, edges }, cleanup))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neighbour lists with weights, each sorted by neighbour id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(j, _)| j);
        }
        adj
    }

    /// Unweighted neighbour lists, sorted.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        self.adjacency()
            .into_iter()
            .map(|l| l.into_iter().map(|(j, _)| j).collect())
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j, _) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(i, j, w) in &self.edges {
            d[i] += w;
            d[j] += w;
        }
        d
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(i, j, _)| (i, j).cmp(&key))
            .is_ok()
    }

    /// Dense symmetric weighted adjacency.
    pub fn dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.edges {
            m.set(i, j, w);
            m.set(j, i, w);
        }
        m
    }

    /// Keeps edges with weight ≥ `tau`, all with weight 1.
    pub fn binarize(&self, tau: f64) -> WGraph {
        WGraph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .filter(|e| e.2 >= tau)
                .map(|&(i, j, _)| (i, j, 1.0))
                .collect(),
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> WGraph {
        let (g, _) = WGraph::from_edges(
            self.n,
            self.edges.iter().map(|&(i, j, w)| (perm[i], perm[j], w)),
        )
        .expect("permutation keeps edges valid");
        g
    }

    /// Same graph with these undirected pairs removed.
    pub fn without_pairs(&self, pairs: &[(usize, usize)]) -> WGraph {
        let drop: BTreeSet<(usize, usize)> =
            pairs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        WGraph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(i, j, _)| !drop.contains(&(i, j)))
                .collect(),
        }
    }
}

/// A graph paired with the vocabulary its node ids refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub vocab: GeneVocab,
    pub graph: WGraph,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    pub members: Vec<String>,
}

/// Named gene sets, names unique, members as symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSetDB {
    sets: Vec<GeneSet>,
}

impl GeneSetDB {
    pub fn new(sets: Vec<GeneSet>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(sets.len());
        for mut s in sets {
            if !seen.insert(s.name.clone()) {
                return Err(Error::data(format!("duplicate gene set name {:?}", s.name)));
            }
            let mut uniq = BTreeSet::new();
            s.members.retain(|m| uniq.insert(m.clone()));
            if s.members.is_empty() {
                warn!("gene set {:?} has no members; dropped", s.name);
                continue;
            }
            out.push(s);
        }
        Ok(GeneSetDB { sets: out })
    }

    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn get(&self, name: &str) -> Option<&GeneSet> {
        self.sets.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub(crate) fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        col: e.utf8_error().valid_up_to(),
        msg: "file is not valid UTF-8".into(),
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        col,
        msg: msg.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Reads a tab-separated genes × samples table. The header holds sample
/// labels, optionally preceded by a corner cell.
pub fn load_expression(path: &Path, modality: Modality) -> Result<ExpressionMatrix> {
    let (genes, samples, values) = read_labeled_table(path)?;
    let vocab = GeneVocab::new(genes)?;
    ExpressionMatrix::new(modality, vocab, samples, values)
}

pub fn save_expression(path: &Path, expr: &ExpressionMatrix) -> Result<()> {
    write_labeled_table(
        path,
        "gene",
        &expr.samples,
        expr.genes.symbols(),
        &expr.values,
    )
}

/// Reads `label \t v1 \t v2 ...` rows under a header row.
pub fn read_labeled_table(path: &Path) -> Result<(Vec<String>, Vec<String>, Matrix)> {
    let text = read_utf8(path)?;
    let mut lines = data_lines(&text);
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, 1, "empty file: header row expected"))?;
    let mut head: Vec<String> = header.split('\t').map(str::to_string).collect();
    let rows: Vec<(usize, &str)> = lines.collect();
    if rows.is_empty() {
        return Err(parse_err(path, 2, 1, "no data rows"));
    }
    let width = rows[0].1.split('\t').count();
    if head.len() == width {
        head.remove(0);
    }
    let cols = head.len();
    let mut labels = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (line, row) in rows {
        let mut fields = row.split('\t');
        let label = fields.next().unwrap_or_default().trim().to_string();
        if label.is_empty() {
            return Err(parse_err(path, line, 1, "missing row label"));
        }
        if !seen.insert(label.clone()) {
            return Err(Error::data(format!(
                "duplicate row {label:?} in {} (line {line})",
                path.display()
            )));
        }
        let mut count = 0;
        for (c, f) in fields.enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, c + 2, format!("non-numeric cell {f:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    line,
                    c + 2,
                    format!("non-finite cell {f:?}"),
                ));
            }
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(parse_err(
                path,
                line,
                count + 2,
                format!("expected {cols} values, found {count}"),
            ));
        }
        labels.push(label);
    }
    let m = Matrix::from_vec(labels.len(), cols, data)?;
    Ok((labels, head, m))
}

pub fn write_labeled_table(
    path: &Path,
    corner: &str,
    columns: &[String],
    labels: &[String],
    values: &Matrix,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(corner);
    for c in columns {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(label);
        for v in values.row(r) {
            write!(out, "\t{v}").unwrap();
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Gene-labelled matrix with generated column names (`prefix0`, `prefix1`, ...).
pub fn save_gene_matrix(path: &Path, vocab: &GeneVocab, prefix: &str, m: &Matrix) -> Result<()> {
    let cols: Vec<String> = (0..m.cols()).map(|c| format!("{prefix}{c}")).collect();
    write_labeled_table(path, "gene", &cols, vocab.symbols(), m)
}

/// Loads a gene-labelled matrix, checking its rows follow `vocab`.
pub fn load_gene_matrix(path: &Path, vocab: &GeneVocab) -> Result<Matrix> {
    let (labels, _, m) = read_labeled_table(path)?;
    if labels != vocab.symbols() {
        return Err(Error::data(format!(
            "{}: row labels do not match the vocabulary",
            path.display()
        )));
    }
    Ok(m)
}

/// Problems found while reading an edge list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeListReport {
    pub unknown_symbols: BTreeSet<String>,
    pub self_edges: usize,
    pub clamped: usize,
    pub duplicates: usize,
}

fn parse_edge_rows(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let text = read_utf8(path)?;
    let mut rows = Vec::new();
    for (line, row) in data_lines(&text) {
        let fields: Vec<&str> = row.split_whitespace().collect();
        let w = match fields.len() {
            2 => 1.0,
            3 => {
                let w: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, line, 3, format!("bad weight {:?}", fields[2])))?;
                if !w.is_finite() {
                    return Err(parse_err(path, line, 3, "non-finite weight"));
                }
                w
            }
            k => {
                return Err(parse_err(
                    path,
                    line,
                    1,
                    format!("expected 'geneA geneB [weight]', found {k} fields"),
                ))
            }
        };
        rows.push((fields[0].to_string(), fields[1].to_string(), w));
    }
    Ok(rows)
}

fn finish_edges(
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    mut report: EdgeListReport,
    path: &Path,
) -> Result<(WGraph, EdgeListReport)> {
    let (g, cleanup) = WGraph::from_edges(n, edges)?;
    report.self_edges = cleanup.self_edges;
    report.clamped = cleanup.clamped;
    report.duplicates = cleanup.duplicates;
    if report.self_edges > 0 {
        warn!(
            "{}: dropped {} self-edge rows",
            path.display(),
            report.self_edges
        );
    }
    if report.clamped > 0 {
        warn!(
            "{}: clamped {} weights into [0, 1]",
            path.display(),
            report.clamped
        );
    }
    if !report.unknown_symbols.is_empty() {
        warn!(
            "{}: {} unknown symbols skipped",
            path.display(),
            report.unknown_symbols.len()
        );
    }
    Ok((g, report))
}

/// Reads `geneA geneB [weight]` rows against an existing vocabulary.
pub fn load_edgelist(path: &Path, vocab: &GeneVocab) -> Result<(WGraph, EdgeListReport)> {
    let mut report = EdgeListReport::default();
    let mut edges = Vec::new();
    for (a, b, w) in parse_edge_rows(path)? {
        match (vocab.id(&a), vocab.id(&b)) {
            (Some(i), Some(j)) => edges.push((i, j, w)),
            (ia, ib) => {
                if ia.is_none() {
                    report.unknown_symbols.insert(a);
                }
                if ib.is_none() {
                    report.unknown_symbols.insert(b);
                }
            }
        }
    }
    finish_edges(vocab.len(), edges, report, path)
}

/// Reads an edge list and builds its own vocabulary (symbols sorted).
pub fn load_labeled_edgelist(path: &Path) -> Result<(LabeledGraph, EdgeListReport)> {
    let rows = parse_edge_rows(path)?;
    let symbols: BTreeSet<&String> = rows.iter().flat_map(|(a, b, _)| [a, b]).collect();
    let vocab = GeneVocab::new(symbols.into_iter().cloned().collect())?;
    let edges = rows
        .iter()
        .map(|(a, b, w)| (vocab.id(a).unwrap(), vocab.id(b).unwrap(), *w))
        .collect();
    let (graph, report) = finish_edges(vocab.len(), edges, EdgeListReport::default(), path)?;
    Ok((LabeledGraph { vocab, graph }, report))
}

pub fn save_edgelist(path: &Path, graph: &WGraph, vocab: &GeneVocab) -> Result<()> {
    let mut out = String::new();
    for &(i, j, w) in graph.edges() {
        writeln!(out, "{}\t{}\t{}", vocab.symbol(i), vocab.symbol(j), w).unwrap();
    }
    write_text(path, &out)
}

pub fn load_gmt(path: &Path) -> Result<GeneSetDB> {
    let text = read_utf8(path)?;
    let mut sets = Vec::new();
    for (line, row) in data_lines(&text) {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() < 2 || fields[0].trim().is_empty() {
            return Err(parse_err(
                path,
                line,
                1,
                "GMT row needs a name and a description",
            ));
        }
        sets.push(GeneSet {
            name: fields[0].trim().to_string(),
            description: fields[1].to_string(),
            members: fields[2..]
                .iter()
                .map(|m| m.trim())
                .filter(|m| !m.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    GeneSetDB::new(sets)
}

pub fn save_gmt(path: &Path, db: &GeneSetDB) -> Result<()> {
    let mut out = String::new();
    for s in db.sets() {
        out.push_str(&s.name);
        out.push('\t');
        out.push_str(&s.description);
        for m in &s.members {
            out.push('\t');
            out.push_str(m);
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Genes dropped from each source by [`align_vocab`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub vocab_size: usize,
    /// Source name → symbols in that source but not in the final vocabulary.
    pub dropped: BTreeMap<String, Vec<String>>,
    /// Gene set name → members absent from the final vocabulary.
    pub unmapped_set_members: BTreeMap<String, Vec<String>>,
}

impl CoverageReport {
    /// Distinct genes dropped from any source.
    pub fn total_dropped(&self) -> usize {
        self.dropped
            .values()
            .flatten()
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aligned {
    pub vocab: GeneVocab,
    pub expressions: Vec<ExpressionMatrix>,
    pub graphs: Vec<WGraph>,
    pub report: CoverageReport,
}

/// Builds the shared vocabulary: genes present in every expression matrix
/// and in at least one graph. Order follows the first expression matrix
/// (or the first graph when there is none).
pub fn align_vocab(
    expressions: &[ExpressionMatrix],
    graphs: &[LabeledGraph],
    sets: &GeneSetDB,
) -> Result<Aligned> {
    if graphs.is_empty() {
        return Err(Error::invalid("align_vocab needs at least one graph"));
    }
    let in_graphs: BTreeSet<&str> = graphs
        .iter()
        .flat_map(|g| g.vocab.symbols().iter().map(String::as_str))
        .collect();
    let order: &[String] = match expressions.first() {
        Some(e) => e.genes.symbols(),
        None => graphs[0].vocab.symbols(),
    };
    let mut keep: Vec<String> = order
        .iter()
        .filter(|s| in_graphs.contains(s.as_str()))
        .filter(|s| expressions.iter().all(|e| e.genes.id(s).is_some()))
        .cloned()
        .collect();
    if expressions.is_empty() {
        // Graph-only input: the union of graph nodes, first graph's order first.
        let mut seen: BTreeSet<String> = keep.iter().cloned().collect();
        for g in &graphs[1..] {
            for s in g.vocab.symbols() {
                if seen.insert(s.clone()) {
                    keep.push(s.clone());
                }
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::data(
            "no gene is shared by all expression matrices and the graphs",
        ));
    }
    let vocab = GeneVocab::new(keep)?;

    let mut report = CoverageReport {
        vocab_size: vocab.len(),
        ..Default::default()
    };
    let dropped_from = |symbols: &[String]| -> Vec<String> {
        symbols
            .iter()
            .filter(|s| vocab.id(s).is_none())
            .cloned()
            .collect()
    };
    let mut out_expr = Vec::with_capacity(expressions.len());
    for (k, e) in expressions.iter().enumerate() {
        report.dropped.insert(
            format!("expression:{}:{}", k, e.modality.as_str()),
            dropped_from(e.genes.symbols()),
        );
        out_expr.push(e.reindex(&vocab)?);
    }
    let mut out_graphs = Vec::with_capacity(graphs.len());
    for (k, g) in graphs.iter().enumerate() {
        report
            .dropped
            .insert(format!("graph:{k}"), dropped_from(g.vocab.symbols()));
        let edges = g.graph.edges().iter().filter_map(|&(i, j, w)| {
            Some((
                vocab.id(g.vocab.symbol(i))?,
                vocab.id(g.vocab.symbol(j))?,
                w,
            ))
        });
        out_graphs.push(WGraph::from_edges(vocab.len(), edges)?.0);
    }
    for s in sets.sets() {
        let missing = dropped_from(&s.members);
        if !missing.is_empty() {
            report.unmapped_set_members.insert(s.name.clone(), missing);
        }
    }
    Ok(Aligned {
        vocab,
        expressions: out_expr,
        graphs: out_graphs,
        report,
    })
}
