//! Pipeline stages, their artifacts, and the cached runner.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use netra_core::datamodel::{
    align_vocab, load_edgelist, load_expression, load_gene_matrix, load_gmt, load_labeled_edgelist,
    save_edgelist, save_expression, save_gene_matrix, save_gmt, ExpressionMatrix, GeneSetDB,
    GeneVocab, Modality, WGraph,
};
use netra_core::ensemble::consensus;
use netra_core::evalsuite::{
    centralities, curve_to_csv, degree_histogram, gsea_all, gsea_to_tsv, heavy_tailed,
    histogram_to_tsv, intersections_to_tsv, jaccard_matrix, jaccard_to_tsv, rank_sum_greater,
    sir_influence, topology_stats, topology_to_tsv, GseaResult, HistBin, Overlap, Ranking,
    TopologyStats,
};
use netra_core::gtcore::{laplacian_pe, load_attention, save_attention};
use netra_core::linkpred::{
    all_pair_scores, generate_network, history_to_csv, make_split, matching_threshold,
    train_gt_linkpred, DecoderParams, EdgeSplit, EpochRecord, NodeInputs,
};
use netra_core::mlm::{extract_embeddings, train_mlm};
use netra_core::netra::{conservation_gap, netra_scores, rank_genes, save_ranked, Baseline};
use netra_core::numerics::RngStream;
use netra_core::synth::{generate_benchmark, write_benchmark, PLANTED_SET};
use netra_core::vae::{fuse_latents, train_vae, LatentMatrix};
use netra_core::walks::{build_corpus, load_corpus, save_corpus};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::{digest_file, digest_json, Manifest, StageRecord};
use crate::config::RunConfig;
use crate::error::{json_err, CliError, Result};

pub const STAGES: [&str; 12] = [
    "synth",
    "align",
    "vae",
    "fuse",
    "consensus",
    "walk",
    "mlm",
    "pe",
    "train",
    "score",
    "gen-net",
    "eval",
];

/// Ranking methods compared by enrichment, NETRA first.
pub const METHODS: [&str; 6] = [
    "netra",
    "degree",
    "betweenness",
    "eigenvector",
    "pagerank",
    "sir",
];

pub fn deps(stage: &str, cfg: &RunConfig) -> &'static [&'static str] {
    match stage {
        "synth" => &[],
        "align" if cfg.synth => &["synth"],
        "align" => &[],
        "vae" | "consensus" | "walk" => &["align"],
        "fuse" => &["align", "vae"],
        "mlm" => &["align", "walk"],
        "pe" => &["align", "consensus"],
        "train" => &["align", "fuse", "mlm", "pe"],
        "score" | "gen-net" => &["align", "consensus", "train"],
        "eval" => &["align", "consensus", "score", "gen-net"],
        _ => unreachable!("unknown stage {stage}"),
    }
}

/// Stages in pipeline order, restricted to `selection` when nonempty.
pub fn plan(cfg: &RunConfig, selection: &[String]) -> Result<Vec<&'static str>> {
    for s in selection {
        if !STAGES.contains(&s.as_str()) {
            return Err(netra_core::Error::config(format!(
                "unknown stage {s:?}; expected one of {}",
                STAGES.join(", ")
            ))
            .into());
        }
        if s == "synth" && !cfg.synth {
            return Err(
                netra_core::Error::config("stage synth requested but synth = false").into(),
            );
        }
    }
    Ok(STAGES
        .iter()
        .copied()
        .filter(|s| cfg.synth || *s != "synth")
        .filter(|s| selection.is_empty() || selection.iter().any(|x| x == s))
        .collect())
}

/// The configuration keys a stage depends on.
fn config_slice(cfg: &RunConfig, stage: &str) -> serde_json::Value {
    match stage {
        "synth" => json!(cfg.benchmark_spec()),
        "align" => json!({
            "synth": cfg.synth,
            "expr": [&cfg.expr_microarray, &cfg.expr_scrna, &cfg.expr_snrna],
            "networks": &cfg.networks,
            "gene_sets": &cfg.gene_sets,
        }),
        "vae" => json!(cfg.vae_config()),
        "fuse" => json!({}),
        "consensus" => json!(cfg.diffusion_config()),
        "walk" => json!(cfg.walk_config()),
        "mlm" => json!(cfg.mlm_config()),
        "pe" => json!({
            "edge_threshold": cfg.edge_threshold,
            "val_fraction": cfg.lp_val_fraction,
            "neg_ratio": cfg.lp_neg_ratio,
            "seed": cfg.split_seed(),
            "pe_dim": cfg.pe_dim,
        }),
        "train" => json!(cfg.linkpred_config()),
        "score" => json!({ "sir": cfg.sir_config(), "seed": cfg.sir_seed() }),
        "gen-net" => json!({ "gen_threshold": cfg.gen_threshold }),
        "eval" => json!({ "gsea": cfg.gsea_config(), "seed": cfg.gsea_seed(), "top_k": cfg.top_k }),
        _ => unreachable!(),
    }
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub ws: &'a Path,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.ws.join(rel)
    }

    fn write(&self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d).map_err(|e| netra_core::Error::io(d, e))?;
        }
        std::fs::write(&p, text).map_err(|e| netra_core::Error::io(&p, e))?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, rel: &str, v: &T) -> Result<()> {
        self.write(
            rel,
            &(serde_json::to_string_pretty(v).expect("serializable") + "\n"),
        )
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let p = self.path(rel);
        let text = std::fs::read_to_string(&p).map_err(|e| netra_core::Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| json_err(&p, e))
    }

    fn vocab(&self) -> Result<GeneVocab> {
        let p = self.path(VOCAB);
        let text = std::fs::read_to_string(&p).map_err(|e| netra_core::Error::io(&p, e))?;
        Ok(GeneVocab::new(text.lines().map(str::to_string).collect())?)
    }

    fn layout(&self) -> Result<Layout> {
        self.read_json(LAYOUT)
    }

    fn networks(&self, vocab: &GeneVocab) -> Result<Vec<WGraph>> {
        let layout = self.layout()?;
        (0..layout.networks)
            .map(|k| Ok(load_edgelist(&self.path(&aligned_network(k)), vocab)?.0))
            .collect()
    }

    fn consensus(&self, vocab: &GeneVocab) -> Result<WGraph> {
        Ok(load_edgelist(&self.path(CONSENSUS), vocab)?.0)
    }
}

const VOCAB: &str = "aligned/vocab.txt";
const LAYOUT: &str = "aligned/layout.json";
const GENE_SETS: &str = "aligned/gene_sets.gmt";
const COVERAGE: &str = "aligned/coverage.json";
const FUSED: &str = "fuse/fused_latent.tsv";
const CONSENSUS: &str = "consensus/consensus.tsv";
const CORPUS: &str = "walk/corpus.txt";
const MLM_EMB: &str = "mlm/embeddings.tsv";
const MLM_HIST: &str = "mlm/history.csv";
const SPLIT: &str = "pe/split.json";
const POSITIONAL: &str = "pe/positional.tsv";
const ATTENTION: &str = "train/attention.tsv";
const EMBEDDINGS: &str = "train/embeddings.tsv";
const DECODER: &str = "train/decoder.json";
const GT_PARAMS: &str = "train/gt_params.json";
pub(crate) const LP_HIST: &str = "train/history.csv";
pub(crate) const TRAIN_SUMMARY: &str = "train/summary.json";
pub(crate) const SCORES: &str = "score/scores.json";
const RANKED: &str = "score/ranked_genes.tsv";
const GENERATED: &str = "gen/generated_network.tsv";
pub(crate) const GEN_SUMMARY: &str = "gen/summary.json";
pub(crate) const EVAL_SUMMARY: &str = "eval/summary.json";

fn aligned_expr(m: Modality) -> String {
    format!("aligned/expr_{}.tsv", m.as_str())
}

fn aligned_network(k: usize) -> String {
    format!("aligned/network_{:02}.tsv", k + 1)
}

fn latent_path(m: Modality) -> String {
    format!("vae/latent_{}.tsv", m.as_str())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layout {
    modalities: Vec<Modality>,
    networks: usize,
}

struct Sources {
    expr: Vec<(Modality, PathBuf)>,
    networks: Vec<PathBuf>,
    gene_sets: Option<PathBuf>,
}

fn sources(ctx: &Ctx) -> Sources {
    let c = ctx.cfg;
    if c.synth {
        Sources {
            expr: Modality::ALL
                .iter()
                .map(|&m| (m, ctx.path(&format!("inputs/expr_{}.tsv", m.as_str()))))
                .collect(),
            networks: (0..c.synth_views)
                .map(|k| ctx.path(&format!("inputs/network_{:02}.tsv", k + 1)))
                .collect(),
            gene_sets: Some(ctx.path("inputs/gene_sets.gmt")),
        }
    } else {
        Sources {
            expr: [
                (Modality::Microarray, &c.expr_microarray),
                (Modality::Scrna, &c.expr_scrna),
                (Modality::Snrna, &c.expr_snrna),
            ]
            .into_iter()
            .filter_map(|(m, p)| p.clone().map(|p| (m, p)))
            .collect(),
            networks: c.networks.clone(),
            gene_sets: c.gene_sets.clone(),
        }
    }
}

/// Input files read from outside the workspace, keyed for the manifest.
fn external_inputs(ctx: &Ctx, stage: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if stage == "align" && !ctx.cfg.synth {
        let s = sources(ctx);
        let files = s
            .expr
            .iter()
            .map(|(_, p)| p)
            .chain(&s.networks)
            .chain(&s.gene_sets);
        for p in files {
            if !p.exists() {
                return Err(CliError::orchestration(
                    "align",
                    format!("input file {} does not exist", p.display()),
                ));
            }
            out.insert(format!("source:{}", p.display()), digest_file(p)?);
        }
    }
    Ok(out)
}

fn rel(ctx: &Ctx, p: &Path) -> String {
    p.strip_prefix(ctx.ws)
        .unwrap_or(p)
        .to_string_lossy()
        .replace('\\', "/")
}

fn stage_synth(ctx: &Ctx) -> Result<Vec<String>> {
    let b = generate_benchmark(&ctx.cfg.benchmark_spec())?;
    let f = write_benchmark(&b, &ctx.path("inputs"))?;
    let mut out: Vec<String> = f.expressions.iter().map(|(_, p)| rel(ctx, p)).collect();
    out.extend(f.networks.iter().map(|p| rel(ctx, p)));
    out.extend([&f.gene_sets, &f.truth, &f.planted].map(|p| rel(ctx, p)));
    Ok(out)
}

fn stage_align(ctx: &Ctx) -> Result<Vec<String>> {
    let s = sources(ctx);
    let exprs = s
        .expr
        .iter()
        .map(|(m, p)| load_expression(p, *m))
        .collect::<netra_core::Result<Vec<ExpressionMatrix>>>()?;
    let graphs = s
        .networks
        .iter()
        .map(|p| Ok(load_labeled_edgelist(p)?.0))
        .collect::<netra_core::Result<Vec<_>>>()?;
    let sets = match &s.gene_sets {
        Some(p) => load_gmt(p)?,
        None => GeneSetDB::default(),
    };
    let a = align_vocab(&exprs, &graphs, &sets)?;
    let mut out = vec![VOCAB.to_string()];
    let mut text = a.vocab.symbols().join("\n");
    text.push('\n');
    ctx.write(VOCAB, &text)?;
    for e in &a.expressions {
        let r = aligned_expr(e.modality);
        save_expression(&ctx.path(&r), e)?;
        out.push(r);
    }
    for (k, g) in a.graphs.iter().enumerate() {
        let r = aligned_network(k);
        save_edgelist(&ctx.path(&r), g, &a.vocab)?;
        out.push(r);
    }
    save_gmt(&ctx.path(GENE_SETS), &sets)?;
    ctx.write_json(COVERAGE, &a.report)?;
    ctx.write_json(
        LAYOUT,
        &Layout {
            modalities: a.expressions.iter().map(|e| e.modality).collect(),
            networks: a.graphs.len(),
        },
    )?;
    out.extend([GENE_SETS, COVERAGE, LAYOUT].map(String::from));
    Ok(out)
}

fn stage_vae(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let cfg = ctx.cfg.vae_config();
    let mut out = Vec::new();
    for m in ctx.layout()?.modalities {
        let expr = load_expression(&ctx.path(&aligned_expr(m)), m)?;
        let run = train_vae(&expr, &cfg)?;
        let r = latent_path(m);
        save_gene_matrix(&ctx.path(&r), &vocab, "z", &run.latent.values)?;
        let h = format!("vae/history_{}.csv", m.as_str());
        let mut csv = String::from("epoch,loss\n");
        for (e, l) in run.history.iter().enumerate() {
            writeln!(csv, "{},{}", e + 1, l).unwrap();
        }
        ctx.write(&h, &csv)?;
        out.extend([r, h]);
    }
    Ok(out)
}

fn stage_fuse(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let latents = ctx
        .layout()?
        .modalities
        .into_iter()
        .map(|m| {
            Ok(LatentMatrix {
                modality: m,
                values: load_gene_matrix(&ctx.path(&latent_path(m)), &vocab)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let z = fuse_latents(&latents)?;
    save_gene_matrix(&ctx.path(FUSED), &vocab, "z", &z)?;
    Ok(vec![FUSED.into()])
}

fn stage_consensus(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let g = consensus(&ctx.networks(&vocab)?, &ctx.cfg.diffusion_config())?;
    save_edgelist(&ctx.path(CONSENSUS), &g, &vocab)?;
    Ok(vec![CONSENSUS.into()])
}

fn stage_walk(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let c = build_corpus(&ctx.networks(&vocab)?, vocab.len(), &ctx.cfg.walk_config())?;
    save_corpus(&ctx.path(CORPUS), &c)?;
    Ok(vec![CORPUS.into()])
}

fn stage_mlm(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let corpus = load_corpus(&ctx.path(CORPUS))?;
    if corpus.n_genes != vocab.len() {
        return Err(CliError::orchestration(
            "mlm",
            "corpus vocabulary differs from the aligned vocabulary",
        ));
    }
    let run = train_mlm(&corpus, &ctx.cfg.mlm_config())?;
    save_gene_matrix(
        &ctx.path(MLM_EMB),
        &vocab,
        "xi",
        &extract_embeddings(&run.params),
    )?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in run.history.iter().enumerate() {
        writeln!(csv, "{},{}", e + 1, l).unwrap();
    }
    ctx.write(MLM_HIST, &csv)?;
    Ok(vec![MLM_EMB.into(), MLM_HIST.into()])
}

fn stage_pe(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let g = ctx.consensus(&vocab)?;
    let tau = ctx.cfg.edge_threshold;
    let g = WGraph::from_edges(g.n(), g.edges().iter().copied().filter(|e| e.2 >= tau))?.0;
    let split = make_split(
        &g,
        ctx.cfg.lp_val_fraction,
        ctx.cfg.lp_neg_ratio,
        RngStream::new(ctx.cfg.split_seed(), 0),
    )?;
    let pe = laplacian_pe(&split.train_graph(), ctx.cfg.pe_dim)?;
    ctx.write_json(SPLIT, &split)?;
    save_gene_matrix(&ctx.path(POSITIONAL), &vocab, "pe", &pe.encoding)?;
    Ok(vec![SPLIT.into(), POSITIONAL.into()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epoch0_auroc: f64,
    pub best_auroc: f64,
    pub best_epoch: usize,
    pub last_auroc: f64,
    pub train_edges: usize,
    pub val_edges: usize,
}

fn stage_train(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let z = load_gene_matrix(&ctx.path(FUSED), &vocab)?;
    let xi = load_gene_matrix(&ctx.path(MLM_EMB), &vocab)?;
    let pe = load_gene_matrix(&ctx.path(POSITIONAL), &vocab)?;
    let split: EdgeSplit = ctx.read_json(SPLIT)?;
    let x = NodeInputs {
        expression: &z,
        global: &xi,
        positional: &pe,
    };
    let run = train_gt_linkpred(&split, &x, &ctx.cfg.linkpred_config())?;
    save_attention(&ctx.path(ATTENTION), &run.attention, &vocab)?;
    save_gene_matrix(&ctx.path(EMBEDDINGS), &vocab, "h", &run.embeddings)?;
    ctx.write_json(DECODER, &run.decoder)?;
    ctx.write_json(GT_PARAMS, &run.gt)?;
    ctx.write(LP_HIST, &history_to_csv(&run.history))?;
    let h: &[EpochRecord] = &run.history;
    ctx.write_json(
        TRAIN_SUMMARY,
        &TrainSummary {
            epoch0_auroc: h[0].val_auroc,
            best_auroc: run.best_auroc(),
            best_epoch: run.best_epoch,
            last_auroc: h[h.len() - 1].val_auroc,
            train_edges: split.train_pos.len(),
            val_edges: split.val_pos.len(),
        },
    )?;
    Ok([
        ATTENTION,
        EMBEDDINGS,
        DECODER,
        GT_PARAMS,
        LP_HIST,
        TRAIN_SUMMARY,
    ]
    .map(String::from)
    .to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub conservation_sum: f64,
    pub conservation_expected: f64,
    pub conservation_gap: f64,
    /// Method name → per-gene scores in vocabulary order, in [`METHODS`] order.
    pub methods: Vec<(String, Vec<f64>)>,
}

fn stage_score(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let att = load_attention(&ctx.path(ATTENTION), &vocab)?;
    let a = netra_scores(&att)?;
    let g = ctx.consensus(&vocab)?;
    let c = centralities(&g)?;
    let sir = sir_influence(
        &g,
        &ctx.cfg.sir_config(),
        RngStream::new(ctx.cfg.sir_seed(), 0),
    )?;
    let expected = (att.n() * att.heads * att.layers) as f64;
    let summary = ScoreSummary {
        conservation_sum: a.iter().sum(),
        conservation_expected: expected,
        conservation_gap: conservation_gap(&att, &a),
        methods: vec![
            ("netra".into(), a.clone()),
            ("degree".into(), c.degree),
            ("betweenness".into(), c.betweenness),
            ("eigenvector".into(), c.eigenvector),
            ("pagerank".into(), c.pagerank),
            ("sir".into(), sir),
        ],
    };
    let baselines: Vec<Baseline> = summary.methods[1..]
        .iter()
        .map(|(n, s)| Baseline { name: n, scores: s })
        .collect();
    let table = rank_genes(&vocab, &a, &baselines)?;
    save_ranked(&ctx.path(RANKED), &table)?;
    ctx.write_json(SCORES, &summary)?;
    Ok(vec![RANKED.into(), SCORES.into()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub threshold: f64,
    pub matched: bool,
    pub edges: usize,
}

fn stage_gen(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let h = load_gene_matrix(&ctx.path(EMBEDDINGS), &vocab)?;
    let dec: DecoderParams = ctx.read_json(DECODER)?;
    let (tau, matched) = match ctx.cfg.gen_threshold {
        Some(t) => (t, false),
        None => {
            let target = ctx.consensus(&vocab)?.edge_count();
            (
                matching_threshold(&all_pair_scores(&h, &dec)?, target)?,
                true,
            )
        }
    };
    let g = generate_network(&h, &dec, tau)?;
    save_edgelist(&ctx.path(GENERATED), &g, &vocab)?;
    ctx.write_json(
        GEN_SUMMARY,
        &GenSummary {
            threshold: tau,
            matched,
            edges: g.edge_count(),
        },
    )?;
    Ok(vec![GENERATED.into(), GEN_SUMMARY.into()])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GseaRow {
    pub set: String,
    pub size: usize,
    pub es: Option<f64>,
    pub nes: Option<f64>,
    pub p_value: Option<f64>,
    pub fdr: Option<f64>,
    pub leading_edge: usize,
}

impl From<&GseaResult> for GseaRow {
    fn from(r: &GseaResult) -> Self {
        GseaRow {
            set: r.set.clone(),
            size: r.size,
            es: r.testable.then_some(r.es),
            nes: r.nes,
            p_value: r.p_value,
            fdr: r.fdr,
            leading_edge: r.leading_edge.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEnrichment {
    pub method: String,
    pub sets: Vec<GseaRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub enrichment: Vec<MethodEnrichment>,
    /// Rank-sum p-value of the planted genes' NETRA scores, when planted.
    pub planted_rank_sum_p: Option<f64>,
    pub topology_consensus: TopologyStats,
    pub topology_generated: TopologyStats,
    pub hist_consensus: Vec<HistBin>,
    pub hist_generated: Vec<HistBin>,
    pub heavy_tailed_consensus: bool,
    pub heavy_tailed_generated: bool,
    pub top_k_overlap: Overlap,
}

fn stage_eval(ctx: &Ctx) -> Result<Vec<String>> {
    let vocab = ctx.vocab()?;
    let scores: ScoreSummary = ctx.read_json(SCORES)?;
    let sets = load_gmt(&ctx.path(GENE_SETS))?;
    let cons = ctx.consensus(&vocab)?;
    let gen = load_edgelist(&ctx.path(GENERATED), &vocab)?.0;
    let cfg = ctx.cfg.gsea_config();
    let mut out = Vec::new();
    let mut enrichment = Vec::new();
    let mut tops = Vec::new();
    for (k, (method, s)) in scores.methods.iter().enumerate() {
        let ranking = Ranking::from_scores(&vocab, s)?;
        let res = gsea_all(
            &ranking,
            &sets,
            &cfg,
            RngStream::new(ctx.cfg.gsea_seed(), k as u64),
        )?;
        let r = format!("eval/gsea_{method}.tsv");
        ctx.write(&r, &gsea_to_tsv(&res))?;
        out.push(r);
        if let Some(p) = res.iter().find(|r| r.set == PLANTED_SET && r.testable) {
            let r = format!("eval/curve_{method}.csv");
            ctx.write(&r, &curve_to_csv(p))?;
            out.push(r);
        }
        enrichment.push(MethodEnrichment {
            method: method.clone(),
            sets: res.iter().map(GseaRow::from).collect(),
        });
        let k = ctx.cfg.top_k.min(vocab.len());
        tops.push((
            method.clone(),
            ranking.symbols()[..k]
                .iter()
                .cloned()
                .collect::<BTreeSet<_>>(),
        ));
    }
    let planted_rank_sum_p = match sets.get(PLANTED_SET) {
        Some(set) => {
            let ids: BTreeSet<usize> = set.members.iter().filter_map(|m| vocab.id(m)).collect();
            let a = &scores.methods[0].1;
            let (g, r): (Vec<_>, Vec<_>) = (0..a.len()).partition(|i| ids.contains(i));
            let pick = |v: &[usize]| v.iter().map(|&i| a[i]).collect::<Vec<f64>>();
            if g.is_empty() || r.is_empty() {
                None
            } else {
                Some(rank_sum_greater(&pick(&g), &pick(&r))?)
            }
        }
        None => None,
    };
    let tc = topology_stats(&cons)?;
    let tg = topology_stats(&gen)?;
    ctx.write(
        "eval/topology.tsv",
        &topology_to_tsv(&[("consensus", &tc), ("generated", &tg)]),
    )?;
    let hc = degree_histogram(&cons, true)?;
    let hg = degree_histogram(&gen, true)?;
    ctx.write("eval/degree_hist_consensus.tsv", &histogram_to_tsv(&hc))?;
    ctx.write("eval/degree_hist_generated.tsv", &histogram_to_tsv(&hg))?;
    let overlap = jaccard_matrix(&tops)?;
    ctx.write("eval/top_k_jaccard.tsv", &jaccard_to_tsv(&overlap))?;
    ctx.write(
        "eval/top_k_intersections.tsv",
        &intersections_to_tsv(&overlap),
    )?;
    out.extend(
        [
            "eval/topology.tsv",
            "eval/degree_hist_consensus.tsv",
            "eval/degree_hist_generated.tsv",
            "eval/top_k_jaccard.tsv",
            "eval/top_k_intersections.tsv",
            EVAL_SUMMARY,
        ]
        .map(String::from),
    );
    ctx.write_json(
        EVAL_SUMMARY,
        &EvalSummary {
            enrichment,
            planted_rank_sum_p,
            heavy_tailed_consensus: heavy_tailed(&hc),
            heavy_tailed_generated: heavy_tailed(&hg),
            topology_consensus: tc,
            topology_generated: tg,
            hist_consensus: hc,
            hist_generated: hg,
            top_k_overlap: overlap,
        },
    )?;
    Ok(out)
}

fn run_stage(ctx: &Ctx, stage: &str) -> Result<Vec<String>> {
    let dir = ctx.path(match stage {
        "synth" => "inputs",
        "align" => "aligned",
        "gen-net" => "gen",
        s => s,
    });
    std::fs::create_dir_all(&dir).map_err(|e| netra_core::Error::io(&dir, e))?;
    match stage {
        "synth" => stage_synth(ctx),
        "align" => stage_align(ctx),
        "vae" => stage_vae(ctx),
        "fuse" => stage_fuse(ctx),
        "consensus" => stage_consensus(ctx),
        "walk" => stage_walk(ctx),
        "mlm" => stage_mlm(ctx),
        "pe" => stage_pe(ctx),
        "train" => stage_train(ctx),
        "score" => stage_score(ctx),
        "gen-net" => stage_gen(ctx),
        "eval" => stage_eval(ctx),
        _ => unreachable!(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Computed,
    Cached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub name: String,
    pub status: Status,
    pub seconds: f64,
}

pub const RUN_LOG: &str = "run_log.json";

/// Runs `stages` in order, reusing cached artifacts where the stage's
/// config slice and input digests are unchanged and no upstream stage was
/// recomputed in this invocation.
pub fn run_stages(
    cfg: &RunConfig,
    ws: &Path,
    stages: &[&str],
    force: bool,
) -> Result<Vec<StageOutcome>> {
    std::fs::create_dir_all(ws).map_err(|e| netra_core::Error::io(ws, e))?;
    let ctx = Ctx { cfg, ws };
    let mut manifest = Manifest::load(ws)?;
    let mut computed: BTreeSet<&str> = BTreeSet::new();
    let mut outcomes = Vec::new();
    for &stage in stages {
        let t0 = Instant::now();
        let mut inputs = external_inputs(&ctx, stage)?;
        for &dep in deps(stage, cfg) {
            let rec = manifest.stages.get(dep).ok_or_else(|| {
                CliError::orchestration(
                    stage,
                    format!("needs the output of stage {dep}; run it first"),
                )
            })?;
            for (art, want) in &rec.outputs {
                let p = ws.join(art);
                if !p.exists() {
                    return Err(CliError::orchestration(
                        stage,
                        format!("artifact {art} from stage {dep} is missing; rerun {dep}"),
                    ));
                }
                let got = if computed.contains(dep) {
                    want.clone()
                } else {
                    digest_file(&p)?
                };
                if &got != want && !force {
                    return Err(CliError::StaleCache {
                        stage: dep.to_string(),
                        artifact: art.clone(),
                    });
                }
                inputs.insert(art.clone(), got);
            }
        }
        let config_digest = digest_json(&config_slice(cfg, stage));
        let upstream_fresh = deps(stage, cfg).iter().any(|d| computed.contains(d));
        let mut status = Status::Computed;
        if let (false, false, Some(rec)) = (force, upstream_fresh, manifest.stages.get(stage)) {
            if rec.config_digest == config_digest
                && rec.inputs == inputs
                && rec.outputs.keys().all(|a| ws.join(a).exists())
            {
                for (art, want) in &rec.outputs {
                    if &digest_file(&ws.join(art))? != want {
                        return Err(CliError::StaleCache {
                            stage: stage.to_string(),
                            artifact: art.clone(),
                        });
                    }
                }
                status = Status::Cached;
            }
        }
        if status == Status::Computed {
            info!("stage {stage}: computing");
            let written = run_stage(&ctx, stage)?;
            let mut outputs = BTreeMap::new();
            for art in written {
                let d = digest_file(&ws.join(&art))?;
                outputs.insert(art, d);
            }
            manifest.stages.insert(
                stage.to_string(),
                StageRecord {
                    config_digest,
                    inputs,
                    outputs,
                },
            );
            manifest.save(ws)?;
            computed.insert(stage);
        } else {
            info!("stage {stage}: cached");
        }
        outcomes.push(StageOutcome {
            name: stage.to_string(),
            status,
            seconds: t0.elapsed().as_secs_f64(),
        });
    }
    let mut log: Vec<StageOutcome> = if ws.join(RUN_LOG).exists() {
        ctx.read_json(RUN_LOG)?
    } else {
        Vec::new()
    };
    for o in &outcomes {
        match log.iter_mut().find(|l| l.name == o.name) {
            Some(l) => *l = o.clone(),
            None => log.push(o.clone()),
        }
    }
    log.sort_by_key(|l| STAGES.iter().position(|s| *s == l.name));
    ctx.write_json(RUN_LOG, &log)?;
    Ok(outcomes)
}

pub(crate) fn read_json_in<T: DeserializeOwned>(ws: &Path, rel: &str) -> Result<T> {
    let cfg = RunConfig::default();
    Ctx { cfg: &cfg, ws }.read_json(rel)
}
