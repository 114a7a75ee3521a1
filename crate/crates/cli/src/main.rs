use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use taskgrasp_cli::commands::{self, ArtifactPaths};
use taskgrasp_cli::config::Config;
use taskgrasp_cli::demo;
use taskgrasp_cli::plan::{PlanMode, PlanStatus};

/// Task-relevant grasp planning for categories of small parts.
#[derive(Parser)]
#[command(name = "taskgrasp", version)]
struct Cli {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the root seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for intermediate PLY/JSON exports.
    #[arg(long, global = true)]
    debug_dir: Option<PathBuf>,
    /// Directory holding gripper.json and meshes; built from config otherwise.
    #[arg(long, global = true)]
    gripper: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Mode {
    /// Rank grasps by stability alone.
    #[arg(long)]
    no_affordance: bool,
    /// Fit one isotropic scale during alignment.
    #[arg(long)]
    uniform_scale: bool,
}

impl From<&Mode> for PlanMode {
    fn from(m: &Mode) -> Self {
        PlanMode {
            no_affordance: m.no_affordance,
            uniform_scale: m.uniform_scale,
        }
    }
}

#[derive(Args)]
struct Arts {
    #[arg(long)]
    canonical: PathBuf,
    #[arg(long)]
    codebook: PathBuf,
    /// Required unless --no-affordance is given.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

impl Arts {
    fn paths(&self) -> ArtifactPaths<'_> {
        ArtifactPaths {
            canonical: &self.canonical,
            codebook: &self.codebook,
            heatmap: self.heatmap.as_deref(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write demo screw models, tasks and a config.
    InitDemo {
        #[arg(long)]
        out: PathBuf,
    },
    BuildCanonical {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    BuildCodebook {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        canonical: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    BuildHeatmap {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        canonical: PathBuf,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Task JSON shared by all models, or a directory of <id>.json.
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    GenScenes {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a grasp on one saved scene; exits 2 when nothing is found.
    Plan {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        arts: Arts,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mode: Mode,
    },
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[command(flatten)]
        arts: Arts,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        mode: Mode,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let debug = cli.debug_dir.as_deref();
    let grip = || commands::gripper(&cfg, cli.gripper.as_deref());
    match &cli.command {
        Command::InitDemo { out } => demo::init_demo(out)?,
        Command::BuildCanonical { models, out } => {
            commands::build_canonical(&cfg, models, out)?;
        }
        Command::BuildCodebook { models, canonical, out } => {
            commands::build_codebook(&cfg, models, canonical, &grip()?, out)?;
        }
        Command::BuildHeatmap { models, canonical, codebook, task, out } => {
            commands::build_heatmap(&cfg, models, canonical, codebook.as_deref(), task, &grip()?, out, debug)?;
        }
        Command::GenScenes { models, n, out } => commands::gen_scenes(&cfg, models, *n, out)?,
        Command::Plan { scene, arts, out, mode } => {
            let r = commands::plan_scene(&cfg, scene, &arts.paths(), &grip()?, mode.into(), out, debug)?;
            if r.status == PlanStatus::NoGraspFound {
                log::warn!("no grasp found");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Eval { dataset, models, task, arts, report, mode } => {
            let r = commands::eval(&cfg, dataset, models, task, &arts.paths(), &grip()?, mode.into(), report)?;
            log::info!(
                "task-relevant rate {:.3}, stable rate {:.3}",
                r.task_relevant_rate,
                r.stable_rate
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
