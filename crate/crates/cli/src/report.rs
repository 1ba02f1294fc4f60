//! Run reports assembled from a workspace's manifest and stage summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cache::Manifest;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::stages::{
    read_json_in, EvalSummary, GenSummary, ScoreSummary, StageOutcome, Status, TrainSummary,
    EVAL_SUMMARY, GEN_SUMMARY, RUN_LOG, SCORES, STAGES, TRAIN_SUMMARY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "text" => Ok(Format::Text),
            _ => Err(format!("unknown format {s:?}; expected json or text")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub status: Option<Status>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conservation {
    pub sum: f64,
    pub expected: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub train: Option<TrainSummary>,
    pub conservation: Option<Conservation>,
    pub generation: Option<GenSummary>,
    pub eval: Option<EvalSummary>,
}

/// Everything a run produced except wall-clock timings, so two runs with
/// the same config serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub stages: Vec<StageReport>,
    pub metrics: Metrics,
}

fn optional<T: serde::de::DeserializeOwned>(
    ws: &Path,
    rel: &str,
    m: &Manifest,
) -> Result<Option<T>> {
    let recorded = m.stages.values().any(|r| r.outputs.contains_key(rel));
    if recorded && ws.join(rel).exists() {
        read_json_in(ws, rel).map(Some)
    } else {
        Ok(None)
    }
}

pub fn build_report(cfg: &RunConfig, ws: &Path) -> Result<RunReport> {
    let manifest = Manifest::load(ws)?;
    if manifest.stages.is_empty() {
        return Err(CliError::orchestration(
            "report",
            format!("no stage has run in workspace {}", ws.display()),
        ));
    }
    let log: Vec<StageOutcome> = if ws.join(RUN_LOG).exists() {
        read_json_in(ws, RUN_LOG)?
    } else {
        Vec::new()
    };
    let stages = STAGES
        .iter()
        .filter_map(|s| {
            manifest.stages.get(*s).map(|r| StageReport {
                name: s.to_string(),
                status: log.iter().find(|l| l.name == *s).map(|l| l.status),
                inputs: r.inputs.clone(),
                outputs: r.outputs.clone(),
            })
        })
        .collect();
    let score: Option<ScoreSummary> = optional(ws, SCORES, &manifest)?;
    Ok(RunReport {
        config: cfg.portable(),
        stages,
        metrics: Metrics {
            train: optional(ws, TRAIN_SUMMARY, &manifest)?,
            conservation: score.map(|s| Conservation {
                sum: s.conservation_sum,
                expected: s.conservation_expected,
                gap: s.conservation_gap,
            }),
            generation: optional(ws, GEN_SUMMARY, &manifest)?,
            eval: optional(ws, EVAL_SUMMARY, &manifest)?,
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

pub fn render(report: &RunReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("serializable") + "\n",
        Format::Text => render_text(report),
    }
}

fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    writeln!(s, "stages").unwrap();
    for st in &r.stages {
        let status = match st.status {
            Some(Status::Computed) => "computed",
            Some(Status::Cached) => "cached",
            None => "-",
        };
        writeln!(
            s,
            "  {:<10} {:<9} {} outputs",
            st.name,
            status,
            st.outputs.len()
        )
        .unwrap();
    }
    let m = &r.metrics;
    if let Some(t) = &m.train {
        writeln!(s, "\nlink prediction").unwrap();
        writeln!(s, "  train/val edges   {}/{}", t.train_edges, t.val_edges).unwrap();
        writeln!(s, "  AUROC epoch 0     {:.4}", t.epoch0_auroc).unwrap();
        writeln!(
            s,
            "  AUROC best        {:.4} (epoch {})",
            t.best_auroc, t.best_epoch
        )
        .unwrap();
        writeln!(s, "  AUROC last        {:.4}", t.last_auroc).unwrap();
    }
    if let Some(c) = &m.conservation {
        writeln!(
            s,
            "\nattention mass      {:.6} of {} (gap {:.2e})",
            c.sum, c.expected, c.gap
        )
        .unwrap();
    }
    if let Some(g) = &m.generation {
        let how = if g.matched {
            "edge-count matched"
        } else {
            "fixed"
        };
        writeln!(
            s,
            "generated network   {} edges at threshold {:.6} ({how})",
            g.edges, g.threshold
        )
        .unwrap();
    }
    if let Some(e) = &m.eval {
        writeln!(s, "\nNES by gene set").unwrap();
        write!(s, "  {:<24}", "set").unwrap();
        for me in &e.enrichment {
            write!(s, " {:>12}", me.method).unwrap();
        }
        writeln!(s).unwrap();
        if let Some(first) = e.enrichment.first() {
            for (i, row) in first.sets.iter().enumerate() {
                write!(s, "  {:<24}", row.set).unwrap();
                for me in &e.enrichment {
                    write!(s, " {:>12}", opt(me.sets[i].nes)).unwrap();
                }
                writeln!(s).unwrap();
            }
        }
        if let Some(p) = e.planted_rank_sum_p {
            writeln!(s, "\nplanted genes rank-sum p (NETRA)  {p:.3e}").unwrap();
        }
        writeln!(
            s,
            "\ntopology            {:>12} {:>12}",
            "consensus", "generated"
        )
        .unwrap();
        let (a, b) = (&e.topology_consensus, &e.topology_generated);
        let rows = [
            ("nodes", a.nodes as f64, b.nodes as f64),
            ("edges", a.edges as f64, b.edges as f64),
            ("max degree", a.max_degree as f64, b.max_degree as f64),
            ("triangles", a.triangles as f64, b.triangles as f64),
            ("clustering", a.clustering, b.clustering),
            ("efficiency", a.efficiency, b.efficiency),
        ];
        for (name, x, y) in rows {
            writeln!(s, "  {name:<18}{x:>12.4} {y:>12.4}").unwrap();
        }
        writeln!(
            s,
            "  {:<18}{:>12} {:>12}",
            "heavy-tailed", e.heavy_tailed_consensus, e.heavy_tailed_generated
        )
        .unwrap();
    }
    s
}
