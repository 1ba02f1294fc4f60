use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use netra_cli::{build_report, plan, render, run_stages, CliError, Format, RunConfig, Status};

#[derive(Parser)]
#[command(
    name = "netra",
    version,
    about = "Attention-based gene influence ranking over fused multi-omic networks"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured workspace directory.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Recompute even when cached artifacts are current.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic benchmark inputs.
    Synth,
    /// Intersect gene vocabularies and write aligned inputs.
    Align,
    /// Train one VAE per modality.
    Vae,
    /// Average the per-modality latents.
    Fuse,
    /// Build the consensus network by diffusion.
    Consensus,
    /// Sample biased random walks.
    Walk,
    /// Train the masked-language model over walks.
    Mlm,
    /// Split edges and compute Laplacian positional encodings.
    Pe,
    /// Train the graph transformer by link prediction.
    Train,
    /// Score genes from attention and compute baselines.
    Score,
    /// Decode a network from the trained embeddings.
    #[command(name = "gen-net")]
    GenNet,
    /// Enrichment, topology and overlap evaluation.
    Eval,
    /// Run every stage, or those named with --stage.
    Pipeline {
        #[arg(long = "stage")]
        stages: Vec<String>,
    },
    /// Summarize the workspace.
    Report {
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.common.workspace {
        cfg.workspace = Some(w);
    }
    cfg.validate()?;
    let ws = cfg
        .workspace
        .clone()
        .unwrap_or_else(|| PathBuf::from("netra_workspace"));
    let selection: Vec<String> = match &cli.cmd {
        Cmd::Report { format } => {
            print!("{}", render(&build_report(&cfg, &ws)?, *format));
            return Ok(());
        }
        Cmd::ShowConfig => {
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Cmd::Pipeline { stages } if stages.is_empty() => cfg.stages.clone(),
        Cmd::Pipeline { stages } => stages.clone(),
        Cmd::Synth => vec!["synth".into()],
        Cmd::Align => vec!["align".into()],
        Cmd::Vae => vec!["vae".into()],
        Cmd::Fuse => vec!["fuse".into()],
        Cmd::Consensus => vec!["consensus".into()],
        Cmd::Walk => vec!["walk".into()],
        Cmd::Mlm => vec!["mlm".into()],
        Cmd::Pe => vec!["pe".into()],
        Cmd::Train => vec!["train".into()],
        Cmd::Score => vec!["score".into()],
        Cmd::GenNet => vec!["gen-net".into()],
        Cmd::Eval => vec!["eval".into()],
    };
    let stages = plan(&cfg, &selection)?;
    for o in run_stages(&cfg, &ws, &stages, cli.common.force)? {
        let status = match o.status {
            Status::Computed => "computed",
            Status::Cached => "cached",
        };
        println!("{:<10} {:<9} {:>8.2}s", o.name, status, o.seconds);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
