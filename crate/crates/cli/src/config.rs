//! Flat key-value run configuration.

use std::path::{Path, PathBuf};

use netra_core::ensemble::DiffusionConfig;
use netra_core::evalsuite::{GseaConfig, SirConfig};
use netra_core::gtcore::GtConfig;
use netra_core::linkpred::LinkPredConfig;
use netra_core::mlm::MlmConfig;
use netra_core::numerics::splitmix64;
use netra_core::synth::BenchmarkSpec;
use netra_core::vae::VaeConfig;
use netra_core::walks::WalkConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every tunable, one key each. Unknown keys are rejected on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workspace: Option<PathBuf>,
    /// Stages to run; empty means all.
    pub stages: Vec<String>,

    /// Generate a benchmark instead of reading inputs.
    pub synth: bool,
    pub expr_microarray: Option<PathBuf>,
    pub expr_scrna: Option<PathBuf>,
    pub expr_snrna: Option<PathBuf>,
    pub networks: Vec<PathBuf>,
    pub gene_sets: Option<PathBuf>,

    pub synth_n: usize,
    pub synth_m: usize,
    pub synth_module_size: usize,
    pub synth_p_in: f64,
    pub synth_samples_microarray: usize,
    pub synth_samples_scrna: usize,
    pub synth_samples_snrna: usize,
    pub synth_dropout_sc: f64,
    pub synth_dropout_sn: f64,
    pub synth_noise: f64,
    pub synth_module_strength: f64,
    pub synth_views: usize,
    pub synth_view_keep: f64,
    pub synth_view_noise: f64,
    pub synth_decoys: usize,
    pub synth_decoy_size: usize,

    pub vae_d_z: usize,
    pub vae_hidden: usize,
    pub vae_epochs: usize,
    pub vae_batch: usize,
    pub vae_lr: f64,

    pub diffusion_alpha: f64,
    pub diffusion_max_iter: usize,
    pub diffusion_tol: f64,
    pub consensus_top_k: usize,

    pub walk_per_node: usize,
    pub walk_length: usize,
    pub walk_p: f64,
    pub walk_q: f64,

    pub mlm_d_n: usize,
    pub mlm_layers: usize,
    pub mlm_heads: usize,
    pub mlm_epochs: usize,
    pub mlm_batch: usize,
    pub mlm_lr: f64,
    pub mlm_mask_rate: f64,

    pub pe_dim: usize,
    pub gt_d: usize,
    pub gt_heads: usize,
    pub gt_layers: usize,
    /// Consensus edges below this weight are dropped before attention.
    pub edge_threshold: f64,

    pub lp_hidden: usize,
    pub lp_epochs: usize,
    pub lp_lr: f64,
    pub lp_val_fraction: f64,
    pub lp_neg_ratio: usize,
    /// Fixed generated-network threshold; unset matches the consensus edge count.
    pub gen_threshold: Option<f64>,

    pub gsea_weight: f64,
    pub gsea_nperm: usize,
    pub sir_beta: f64,
    pub sir_gamma: f64,
    pub sir_nsim: usize,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BenchmarkSpec::default();
        let v = VaeConfig::default();
        let d = DiffusionConfig::default();
        let w = WalkConfig::default();
        let m = MlmConfig::default();
        let lp = LinkPredConfig::default();
        let g = GseaConfig::default();
        let s = SirConfig::default();
        RunConfig {
            seed: 0,
            workspace: None,
            stages: Vec::new(),
            synth: true,
            expr_microarray: None,
            expr_scrna: None,
            expr_snrna: None,
            networks: Vec::new(),
            gene_sets: None,
            synth_n: b.n,
            synth_m: b.m,
            synth_module_size: b.module_size,
            synth_p_in: b.p_in,
            synth_samples_microarray: b.samples[0],
            synth_samples_scrna: b.samples[1],
            synth_samples_snrna: b.samples[2],
            synth_dropout_sc: b.dropout_sc,
            synth_dropout_sn: b.dropout_sn,
            synth_noise: b.noise,
            synth_module_strength: b.module_strength,
            synth_views: b.views,
            synth_view_keep: b.view_keep,
            synth_view_noise: b.view_noise,
            synth_decoys: b.n_decoys,
            synth_decoy_size: b.decoy_size,
            vae_d_z: v.d_z,
            vae_hidden: v.hidden,
            vae_epochs: v.epochs,
            vae_batch: v.batch,
            vae_lr: v.lr,
            diffusion_alpha: d.alpha,
            diffusion_max_iter: d.max_iter,
            diffusion_tol: d.tol,
            consensus_top_k: d.top_k,
            walk_per_node: w.walks_per_node,
            walk_length: w.walk_length,
            walk_p: w.p,
            walk_q: w.q,
            mlm_d_n: m.d_n,
            mlm_layers: m.layers,
            mlm_heads: m.heads,
            mlm_epochs: m.epochs,
            mlm_batch: m.batch,
            mlm_lr: m.lr,
            mlm_mask_rate: m.mask_rate,
            pe_dim: lp.gt.pe_dim,
            gt_d: lp.gt.d,
            gt_heads: lp.gt.heads,
            gt_layers: lp.gt.layers,
            edge_threshold: 0.0,
            lp_hidden: lp.d_h,
            lp_epochs: lp.epochs,
            lp_lr: lp.lr,
            lp_val_fraction: lp.val_fraction,
            lp_neg_ratio: lp.neg_ratio,
            gen_threshold: None,
            gsea_weight: g.weight_exp,
            gsea_nperm: g.nperm,
            sir_beta: s.beta,
            sir_gamma: s.gamma,
            sir_nsim: s.nsim,
            top_k: 40,
        }
    }
}

/// Per-stage seed tags; streams never overlap across stages.
#[derive(Clone, Copy, Debug)]
pub(crate) enum SeedTag {
    Synth = 1,
    Vae,
    Walk,
    Mlm,
    Split,
    Train,
    Gsea,
    Sir,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Core(netra_core::Error::config(msg))
}

impl RunConfig {
    /// Parses TOML text. Relative input paths resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if let Some(base) = base {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            for p in [
                &mut cfg.expr_microarray,
                &mut cfg.expr_scrna,
                &mut cfg.expr_snrna,
                &mut cfg.gene_sets,
                &mut cfg.workspace,
            ]
            .into_iter()
            .flatten()
            {
                fix(p);
            }
            cfg.networks.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        RunConfig::from_toml(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub(crate) fn stage_seed(&self, tag: SeedTag) -> u64 {
        splitmix64(self.seed ^ splitmix64(tag as u64))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.synth {
            if self.networks.is_empty() {
                return Err(config_err(
                    "without synth, at least one entry in `networks` is required",
                ));
            }
            if self.expr_microarray.is_none()
                && self.expr_scrna.is_none()
                && self.expr_snrna.is_none()
            {
                return Err(config_err(
                    "without synth, at least one expression matrix is required",
                ));
            }
        } else {
            self.benchmark_spec().validate()?;
        }
        self.diffusion_config().validate()?;
        self.mlm_config().validate()?;
        self.gt_config().validate()?;
        self.sir_config().validate()?;
        if self.top_k == 0 {
            return Err(config_err("top_k must be at least 1"));
        }
        if !(self.edge_threshold.is_finite() && (0.0..=1.0).contains(&self.edge_threshold)) {
            return Err(config_err("edge_threshold must be in [0, 1]"));
        }
        if let Some(t) = self.gen_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(config_err("gen_threshold must be in (0, 1)"));
            }
        }
        if self.gsea_nperm < 100 {
            return Err(config_err("gsea_nperm must be at least 100"));
        }
        Ok(())
    }

    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            n: self.synth_n,
            m: self.synth_m,
            module_size: self.synth_module_size,
            p_in: self.synth_p_in,
            samples: [
                self.synth_samples_microarray,
                self.synth_samples_scrna,
                self.synth_samples_snrna,
            ],
            dropout_sc: self.synth_dropout_sc,
            dropout_sn: self.synth_dropout_sn,
            noise: self.synth_noise,
            module_strength: self.synth_module_strength,
            views: self.synth_views,
            view_keep: self.synth_view_keep,
            view_noise: self.synth_view_noise,
            n_decoys: self.synth_decoys,
            decoy_size: self.synth_decoy_size,
            seed: self.stage_seed(SeedTag::Synth),
        }
    }

    pub fn vae_config(&self) -> VaeConfig {
        VaeConfig {
            d_z: self.vae_d_z,
            hidden: self.vae_hidden,
            epochs: self.vae_epochs,
            batch: self.vae_batch,
            lr: self.vae_lr,
            seed: self.stage_seed(SeedTag::Vae),
        }
    }

    pub fn diffusion_config(&self) -> DiffusionConfig {
        DiffusionConfig {
            alpha: self.diffusion_alpha,
            max_iter: self.diffusion_max_iter,
            tol: self.diffusion_tol,
            top_k: self.consensus_top_k,
        }
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            walks_per_node: self.walk_per_node,
            walk_length: self.walk_length,
            p: self.walk_p,
            q: self.walk_q,
            seed: self.stage_seed(SeedTag::Walk),
        }
    }

    pub fn mlm_config(&self) -> MlmConfig {
        MlmConfig {
            d_n: self.mlm_d_n,
            layers: self.mlm_layers,
            heads: self.mlm_heads,
            epochs: self.mlm_epochs,
            batch: self.mlm_batch,
            lr: self.mlm_lr,
            mask_rate: self.mlm_mask_rate,
            seed: self.stage_seed(SeedTag::Mlm),
        }
    }

    pub fn gt_config(&self) -> GtConfig {
        GtConfig {
            d: self.gt_d,
            heads: self.gt_heads,
            layers: self.gt_layers,
            pe_dim: self.pe_dim,
        }
    }

    pub fn linkpred_config(&self) -> LinkPredConfig {
        LinkPredConfig {
            gt: self.gt_config(),
            d_h: self.lp_hidden,
            epochs: self.lp_epochs,
            lr: self.lp_lr,
            val_fraction: self.lp_val_fraction,
            neg_ratio: self.lp_neg_ratio,
            seed: self.stage_seed(SeedTag::Train),
        }
    }

    pub(crate) fn split_seed(&self) -> u64 {
        self.stage_seed(SeedTag::Split)
    }

    pub(crate) fn gsea_seed(&self) -> u64 {
        self.stage_seed(SeedTag::Gsea)
    }

    pub(crate) fn sir_seed(&self) -> u64 {
        self.stage_seed(SeedTag::Sir)
    }

    pub fn gsea_config(&self) -> GseaConfig {
        GseaConfig {
            weight_exp: self.gsea_weight,
            nperm: self.gsea_nperm,
        }
    }

    pub fn sir_config(&self) -> SirConfig {
        SirConfig {
            beta: self.sir_beta,
            gamma: self.sir_gamma,
            nsim: self.sir_nsim,
        }
    }

    /// The config without run-location fields, as recorded in reports.
    pub fn portable(&self) -> RunConfig {
        RunConfig {
            workspace: None,
            stages: Vec::new(),
            ..self.clone()
        }
    }
}
