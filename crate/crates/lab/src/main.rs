use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rohil_core::datasets::relight_dataset;
use rohil_core::learners::{finetune, AnchorHead, LearnerConfig};
use rohil_lab::config::LabConfig;
use rohil_lab::formats::{
    read_checkpoint, read_dataset, write_checkpoint, write_dataset, Checkpoint,
};
use rohil_lab::harness::{self, Experiment, PreparedSeed, SeedDatasets};
use rohil_lab::report::{emit_report, load_report, ReportRow};

#[derive(Parser)]
#[command(
    name = "rohil",
    version,
    about = "Illumination-robust offline fine-tuning laboratory"
)]
struct Cli {
    /// Flat key = value config; defaults apply to absent keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Head {
    Mse,
    Kl,
    None,
}

impl From<Head> for AnchorHead {
    fn from(h: Head) -> Self {
        match h {
            Head::Mse => AnchorHead::Mse,
            Head::Kl => AnchorHead::Kl,
            Head::None => AnchorHead::None,
        }
    }
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Report path; a `.json` twin is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Cache of prepared seeds (source checkpoint plus pools) reused across runs.
    #[arg(long)]
    work: Option<PathBuf>,
    /// Concurrent fine-tunes per seed.
    #[arg(long, default_value_t = harness::default_jobs())]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Online source training with oracle interventions; writes source.rohc and the four buffers.
    TrainSource {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-render a dataset under the four relighting configs.
    Relight {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory; the file keeps its stem with a `.relit.rohl` suffix.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Offline anchored fine-tune from a source checkpoint.
    Finetune {
        #[arg(long)]
        source: PathBuf,
        /// Directory holding rl.rohl, demos.rohl, rl.relit.rohl and demos.relit.rohl.
        #[arg(long)]
        pools: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        anchor: Option<Head>,
        /// Learner steps; overrides `learner.T`.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-policy evaluation at one shift intensity.
    Eval {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        shift: f64,
        #[arg(long)]
        episodes: Option<u32>,
        /// Let the stall oracle take over and report the intervention rate.
        #[arg(long)]
        intervention: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the result as a one-row report (CSV plus JSON twin).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Retention coefficient sweep over `plan.alphas`.
    SweepAlpha(SweepArgs),
    /// Final-A/B/C/D: retention replay × anchors.
    #[command(name = "ablate-2x2")]
    Ablate2x2(SweepArgs),
    /// MSE against KL actor anchor.
    CompareAnchorHead(SweepArgs),
    /// Anchored and unanchored curves every 1000 fine-tune steps.
    SweepIterations(SweepArgs),
    /// Source agent and Final-A/B/C/D over the 11-point shift gradient.
    SweepShift(SweepArgs),
    /// Merge report CSVs into one sorted table.
    Report {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_pools(dir: &Path) -> Result<rohil_core::replay::PoolSet> {
    SeedDatasets::read(dir)?.pools()
}

fn sweep(cfg: &LabConfig, experiment: Experiment, args: &SweepArgs) -> Result<()> {
    let rows = harness::run_experiment(cfg, experiment, args.work.as_deref(), args.jobs, |msg| {
        eprintln!("{msg}")
    })?;
    let (csv, json) = emit_report(&rows, &args.out)?;
    eprintln!(
        "{} rows -> {}, {}",
        rows.len(),
        csv.display(),
        json.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => LabConfig::load(path)?,
        None => LabConfig::default(),
    };
    match cli.command {
        Command::TrainSource { out, seed } => {
            let prep: PreparedSeed = harness::prepare_seed(&cfg, seed, |step, sr| {
                eprintln!("step {step}: source success {sr:.2}")
            })?;
            harness::save_seed(&cfg, &prep, &out)?;
            eprintln!(
                "best checkpoint at step {} -> {}",
                prep.best_step,
                out.join("source.rohc").display()
            );
        }
        Command::Relight { dataset, out, seed } => {
            let ds =
                read_dataset(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let relit = relight_dataset(
                &ds,
                &cfg.relight_lights,
                harness::relight_options(&cfg, seed),
            )?;
            std::fs::create_dir_all(&out)?;
            let stem = dataset
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("dataset");
            let path = out.join(format!("{stem}.relit.rohl"));
            write_dataset(&path, &relit)?;
            eprintln!(
                "{} -> {} records at {}",
                ds.len(),
                relit.len(),
                path.display()
            );
        }
        Command::Finetune {
            source,
            pools,
            alpha,
            anchor,
            steps,
            seed,
            out,
        } => {
            let agent = read_checkpoint(&source)?.to_agent()?;
            let pools = load_pools(&pools)?;
            let base = LearnerConfig {
                alpha: alpha.unwrap_or(cfg.learner.alpha),
                anchor_head: anchor.map_or(cfg.learner.anchor_head, AnchorHead::from),
                horizon: steps.unwrap_or(cfg.learner.horizon),
                ..cfg.learner
            };
            let learner = harness::seeded(&base, seed);
            let run = finetune(&agent, &pools, &learner, |t, _| {
                if t > 0 {
                    eprintln!("step {t}");
                }
                Ok(())
            })?;
            write_checkpoint(
                &out,
                &Checkpoint::from_agent(&run.agent, learner.horizon, cfg.hash()),
            )?;
            eprintln!(
                "anchor checksum {:016x}; agent -> {}",
                run.anchor_checksum,
                out.display()
            );
        }
        Command::Eval {
            agent,
            shift,
            episodes,
            intervention,
            seed,
            report,
        } => {
            let mut cfg = cfg;
            cfg.eval.episodes = episodes.unwrap_or(cfg.eval.episodes);
            cfg.eval.intervention |= intervention;
            if cfg.eval.episodes == 0 {
                bail!("--episodes must be positive");
            }
            let ck = read_checkpoint(&agent)?;
            let r = harness::evaluate_at(&cfg, &ck.to_agent()?, seed, shift)?;
            println!(
                "shift {}%: success {}/{} = {}; mean success steps {}; intervention rate {}",
                r.shift_pct(),
                r.successes,
                r.episodes,
                r.success_rate,
                r.mean_success_steps.map_or("-".into(), |m| m.to_string()),
                r.intervention_rate.map_or("-".into(), |m| m.to_string()),
            );
            if let Some(path) = report {
                let label = agent
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("agent");
                emit_report(
                    &[ReportRow::from_eval(
                        label,
                        None,
                        None,
                        seed,
                        Some(ck.step),
                        &r,
                    )],
                    path,
                )?;
            }
        }
        Command::SweepAlpha(args) => sweep(&cfg, Experiment::AlphaSweep, &args)?,
        Command::Ablate2x2(args) => sweep(&cfg, Experiment::Ablation, &args)?,
        Command::CompareAnchorHead(args) => sweep(&cfg, Experiment::AnchorHead, &args)?,
        Command::SweepIterations(args) => sweep(&cfg, Experiment::Iterations, &args)?,
        Command::SweepShift(args) => sweep(&cfg, Experiment::ShiftSweep, &args)?,
        Command::Report { inputs, out } => {
            if inputs.is_empty() {
                bail!("no input reports given");
            }
            let mut rows = Vec::new();
            for path in &inputs {
                rows.extend(load_report(path)?);
            }
            let (csv, _) = emit_report(&rows, &out)?;
            eprintln!("{} rows -> {}", rows.len(), csv.display());
        }
    }
    Ok(())
}
