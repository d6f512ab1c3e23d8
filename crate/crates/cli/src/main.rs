//! `hotsearch`: analyze, detect, search and verify from the command line.

mod commands;
mod inputs;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hotsearch",
    version,
    about = "FPGA-aware compression and accelerator co-search"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Manifest path, or comma-separated builtin names (alexnet, tinynet, random:<seed>:<depth>).
    #[arg(long, default_value = "alexnet,tinynet")]
    pub zoo: String,
    /// FPGA resource JSON; ZCU102 when absent.
    #[arg(long)]
    pub fpga: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Default)]
pub struct DesignArgs {
    /// Fixed design `tm,tn,tr,tc[,tm_d]` instead of the optimized one.
    #[arg(long)]
    pub design: Option<String>,
    /// Lane split `ifm,ofm,weight` for `--design`.
    #[arg(long)]
    pub lanes: Option<String>,
}

#[derive(Args, Clone, Default)]
pub struct SearchArgs {
    /// Search config JSON; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "t-ms")]
    pub t_ms: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<u32>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// `surrogate`, `table:<csv>`, `table-fallback:<csv>` or `external:<cmd>`.
    #[arg(long)]
    pub evaluator: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimized design and latency per zoo model (analyze.csv).
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Flag models slower than this.
        #[arg(long = "t-ms")]
        t_ms: Option<f64>,
    },
    /// Per-layer bottleneck labels for one model (detect.json).
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        design: DesignArgs,
        /// Model name; the first zoo entry when absent.
        #[arg(long)]
        model: Option<String>,
    },
    /// Search space built for one model (space.json).
    Space {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        model: Option<String>,
    },
    /// Backbone screening then policy-gradient co-search.
    Search {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Oracle battery; nonzero exit on any failure.
    Verify {
        /// Deliberately break the model under test.
        #[arg(long, hide = true)]
        mutate: Option<verify::Mutation>,
    },
}

/// Exit status for an error: 1 infeasible, 2 bad input, 3 internal.
fn exit_code(err: &anyhow::Error) -> u8 {
    use hotsearch_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::DesignInfeasible { .. } | E::NoFeasibleDesign(..) => 1,
                E::Io { .. }
                | E::Parse { .. }
                | E::Validation { .. }
                | E::UnsupportedTopology { .. }
                | E::UnknownNetwork(_)
                | E::InvalidPattern(_)
                | E::InvalidCompression(_)
                | E::Config(_)
                | E::SpaceTooLarge(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Analyze { common, t_ms } => commands::analyze(&common, t_ms),
        Command::Detect { common, design, model } => commands::detect(&common, &design, model.as_deref()),
        Command::Space { common, search, model } => commands::space(&common, &search, model.as_deref()),
        Command::Search { common, search } => commands::search(&common, &search),
        Command::Verify { mutate } => verify::run(mutate),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
