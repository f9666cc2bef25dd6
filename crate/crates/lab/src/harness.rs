//! Experiment orchestration: source preparation, fine-tune cells and the
//! sweeps built from them.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{ensure, Context, Result};
use rohil_core::datasets::{relight_dataset, RelightOptions, TrajectoryDataset};
use rohil_core::eval::{evaluate, EvalReport, EvalSetup};
use rohil_core::learners::{finetune, train_source, AnchorHead, LearnerConfig, CHECK_EVERY};
use rohil_core::nets::Agent;
use rohil_core::replay::PoolSet;
use rohil_core::rng::derive_seed;

use crate::config::LabConfig;
use crate::formats::{read_checkpoint, read_dataset, write_checkpoint, write_dataset, Checkpoint};
use crate::report::ReportRow;

const RELIGHT_STREAM: u64 = 0x4E_11;
const EVAL_STREAM: u64 = 0xE7_A1;

/// The 2×2 grid over retention replay and anchoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// α = 0, no anchors: plain SAC fine-tune on relit data.
    FinalA,
    /// α = 0 with anchors.
    FinalB,
    /// Retention replay without anchors.
    FinalC,
    /// Retention replay with anchors.
    FinalD,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::FinalA,
        Variant::FinalB,
        Variant::FinalC,
        Variant::FinalD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::FinalA => "final-a",
            Variant::FinalB => "final-b",
            Variant::FinalC => "final-c",
            Variant::FinalD => "final-d",
        }
    }

    pub fn retains(self) -> bool {
        matches!(self, Variant::FinalC | Variant::FinalD)
    }

    pub fn anchored(self) -> bool {
        matches!(self, Variant::FinalB | Variant::FinalD)
    }

    /// Learner settings for this cell. "On" keeps the base α and head; a base
    /// head of `None` falls back to MSE for the anchored cells.
    pub fn config(self, base: &LearnerConfig) -> LearnerConfig {
        let head = match (self.anchored(), base.anchor_head) {
            (false, _) => AnchorHead::None,
            (true, AnchorHead::None) => AnchorHead::Mse,
            (true, h) => h,
        };
        LearnerConfig {
            alpha: if self.retains() { base.alpha } else { 0.0 },
            anchor_head: head,
            ..*base
        }
    }
}

/// Source datasets of one seed: `R⁰`, `D⁰` and their relit copies.
pub struct SeedDatasets {
    pub rl: TrajectoryDataset,
    pub demos: TrajectoryDataset,
    pub rl_relit: TrajectoryDataset,
    pub demos_relit: TrajectoryDataset,
}

impl SeedDatasets {
    pub const FILES: [&'static str; 4] =
        ["rl.rohl", "demos.rohl", "rl.relit.rohl", "demos.relit.rohl"];

    pub fn pools(&self) -> Result<PoolSet> {
        Ok(PoolSet::from_datasets(
            [&self.rl, &self.rl_relit],
            [&self.demos, &self.demos_relit],
        )?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, ds) in
            Self::FILES
                .iter()
                .zip([&self.rl, &self.demos, &self.rl_relit, &self.demos_relit])
        {
            let path = dir.join(name);
            write_dataset(&path, ds).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let load = |name: &str| {
            let path = dir.join(name);
            read_dataset(&path).with_context(|| format!("reading {}", path.display()))
        };
        Ok(Self {
            rl: load(Self::FILES[0])?,
            demos: load(Self::FILES[1])?,
            rl_relit: load(Self::FILES[2])?,
            demos_relit: load(Self::FILES[3])?,
        })
    }
}

/// Everything the fine-tune experiments of one seed share.
pub struct PreparedSeed {
    pub seed: u64,
    /// Best source checkpoint; θ₀ of every fine-tune.
    pub source: Agent<f32>,
    pub best_step: u64,
    /// `(env step, source success)` at each selection point.
    pub selection: Vec<(u64, f64)>,
    pub pools: PoolSet,
    /// Kept for persistence; drop with `take()` once written.
    pub datasets: Option<SeedDatasets>,
}

pub fn relight_options(cfg: &LabConfig, seed: u64) -> RelightOptions {
    RelightOptions {
        noise: cfg.relight_noise,
        seed: derive_seed(derive_seed(cfg.relight_seed, seed), RELIGHT_STREAM),
    }
}

/// Train the source agent for `seed`, relight its buffers and fill the pools.
pub fn prepare_seed(
    cfg: &LabConfig,
    seed: u64,
    on_eval: impl FnMut(u64, f64),
) -> Result<PreparedSeed> {
    let run = train_source(&cfg.source_config(seed), on_eval)
        .with_context(|| format!("source training, seed {seed}"))?;
    let options = relight_options(cfg, seed);
    let rl_relit = relight_dataset(&run.rl, &cfg.relight_lights, options)?;
    let demos_relit = relight_dataset(&run.demos, &cfg.relight_lights, options)?;
    let datasets = SeedDatasets {
        rl: run.rl,
        demos: run.demos,
        rl_relit,
        demos_relit,
    };
    Ok(PreparedSeed {
        seed,
        source: run.agent,
        best_step: run.best_step,
        selection: run.selection,
        pools: datasets.pools()?,
        datasets: Some(datasets),
    })
}

/// Persist a prepared seed under `dir`.
pub fn save_seed(cfg: &LabConfig, prep: &PreparedSeed, dir: &Path) -> Result<()> {
    let datasets = prep
        .datasets
        .as_ref()
        .context("prepared seed no longer holds its datasets")?;
    datasets.write(dir)?;
    write_checkpoint(
        dir.join("source.rohc"),
        &Checkpoint::from_agent(&prep.source, prep.best_step, cfg.hash()),
    )?;
    Ok(())
}

pub fn load_seed(seed: u64, dir: &Path) -> Result<PreparedSeed> {
    let ck = read_checkpoint(dir.join("source.rohc"))
        .with_context(|| format!("loading source of seed {seed}"))?;
    let datasets = SeedDatasets::read(dir)?;
    Ok(PreparedSeed {
        seed,
        source: ck.to_agent()?,
        best_step: ck.step,
        selection: Vec::new(),
        pools: datasets.pools()?,
        datasets: Some(datasets),
    })
}

/// Reuse `work/seed-N` when a matching run is already there, else prepare
/// and save it.
pub fn prepare_or_load(
    cfg: &LabConfig,
    seed: u64,
    work: Option<&Path>,
    on_eval: impl FnMut(u64, f64),
) -> Result<PreparedSeed> {
    let Some(work) = work else {
        return prepare_seed(cfg, seed, on_eval);
    };
    let dir = work.join(format!("seed-{seed}"));
    if let Ok(ck) = read_checkpoint(dir.join("source.rohc")) {
        if ck.config_hash == cfg.hash() {
            return load_seed(seed, &dir);
        }
    }
    let prep = prepare_seed(cfg, seed, on_eval)?;
    save_seed(cfg, &prep, &dir)?;
    Ok(prep)
}

pub fn eval_setup(cfg: &LabConfig) -> EvalSetup {
    EvalSetup {
        env: cfg.env,
        source: cfg.source_light,
        deploy: cfg.deploy_light,
    }
}

/// Evaluation stream of a seed; shared across variants and shifts.
pub fn eval_seed(cfg: &LabConfig, seed: u64) -> u64 {
    derive_seed(derive_seed(cfg.eval.seed, seed), EVAL_STREAM)
}

pub fn evaluate_at(
    cfg: &LabConfig,
    agent: &Agent<f32>,
    seed: u64,
    shift: f64,
) -> rohil_core::Result<EvalReport> {
    let rule = cfg.intervention_rule();
    let intervention = cfg.eval.intervention.then_some(&rule);
    evaluate(
        agent,
        &eval_setup(cfg),
        shift,
        cfg.eval.episodes,
        eval_seed(cfg, seed),
        intervention,
    )
}

/// Fine-tune learner settings for a seed: seeds derived, everything else as given.
pub fn seeded(learner: &LearnerConfig, seed: u64) -> LearnerConfig {
    LearnerConfig {
        seed: derive_seed(seed, learner.seed),
        replay_seed: derive_seed(seed, learner.replay_seed),
        ..*learner
    }
}

/// One fine-tune and its evaluations.
#[derive(Clone, Debug)]
pub struct Cell {
    pub variant: String,
    pub learner: LearnerConfig,
    /// Shifts evaluated on the final agent.
    pub shifts: Vec<f64>,
    /// Also evaluate every checkpoint (step 0 and every `CHECK_EVERY` steps).
    pub curve: bool,
}

impl Cell {
    pub fn new(variant: impl Into<String>, learner: LearnerConfig, shifts: &[f64]) -> Self {
        Self {
            variant: variant.into(),
            learner,
            shifts: shifts.to_vec(),
            curve: false,
        }
    }

    pub fn with_curve(mut self) -> Self {
        self.curve = true;
        self
    }
}

fn rows_for(
    cfg: &LabConfig,
    cell: &Cell,
    seed: u64,
    step: u64,
    agent: &Agent<f32>,
) -> rohil_core::Result<Vec<ReportRow>> {
    let head = cell.learner.anchor_head.name();
    cell.shifts
        .iter()
        .map(|&s| {
            let r = evaluate_at(cfg, agent, seed, s)?;
            Ok(ReportRow::from_eval(
                &cell.variant,
                Some(cell.learner.alpha),
                Some(head),
                seed,
                Some(step),
                &r,
            ))
        })
        .collect()
}

/// Fine-tune from the prepared source and evaluate.
pub fn run_cell(
    cfg: &LabConfig,
    prep: &PreparedSeed,
    cell: &Cell,
) -> Result<(Agent<f32>, Vec<ReportRow>)> {
    let learner = seeded(&cell.learner, prep.seed);
    let mut rows = Vec::new();
    let run = finetune(&prep.source, &prep.pools, &learner, |t, agent| {
        if cell.curve {
            rows.extend(rows_for(cfg, cell, prep.seed, t, agent)?);
        }
        Ok(())
    })
    .with_context(|| format!("fine-tune `{}`, seed {}", cell.variant, prep.seed))?;
    let horizon = learner.horizon;
    if !cell.curve || !horizon.is_multiple_of(CHECK_EVERY) {
        rows.extend(rows_for(cfg, cell, prep.seed, horizon, &run.agent)?);
    }
    Ok((run.agent, rows))
}

/// Run independent cells on up to `jobs` threads; rows come back in cell order.
pub fn run_cells(
    cfg: &LabConfig,
    prep: &PreparedSeed,
    cells: &[Cell],
    jobs: usize,
) -> Result<Vec<ReportRow>> {
    let jobs = jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        let mut rows = Vec::new();
        for cell in cells {
            rows.extend(run_cell(cfg, prep, cell)?.1);
        }
        return Ok(rows);
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<Vec<ReportRow>>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let out = run_cell(cfg, prep, cell).map(|(_, rows)| rows);
                results.lock().unwrap()[i] = Some(out);
            });
        }
    });
    let mut rows = Vec::new();
    for r in results.into_inner().unwrap() {
        rows.extend(r.expect("every cell ran")?);
    }
    Ok(rows)
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Source agent rows (no fine-tune) at each shift.
pub fn source_rows(cfg: &LabConfig, prep: &PreparedSeed, shifts: &[f64]) -> Result<Vec<ReportRow>> {
    shifts
        .iter()
        .map(|&s| {
            let r = evaluate_at(cfg, &prep.source, prep.seed, s)?;
            Ok(ReportRow::from_eval(
                "source", None, None, prep.seed, None, &r,
            ))
        })
        .collect()
}

/// Shifts used by the two-light comparisons: source light and the headline shift.
pub fn two_lights(cfg: &LabConfig) -> Vec<f64> {
    let mut v = vec![0.0, cfg.eval.shift];
    v.dedup();
    v
}

/// The 11-point shift gradient `{0, 0.1, …, 1}`.
pub fn shift_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

pub fn alpha_sweep_cells(cfg: &LabConfig) -> Vec<Cell> {
    let head = Variant::FinalD.config(&cfg.learner).anchor_head;
    cfg.plan
        .alphas
        .iter()
        .map(|&alpha| {
            Cell::new(
                "alpha-sweep",
                LearnerConfig {
                    alpha,
                    anchor_head: head,
                    ..cfg.learner
                },
                &cfg.plan.shifts,
            )
        })
        .collect()
}

pub fn ablation_cells(cfg: &LabConfig) -> Vec<Cell> {
    Variant::ALL
        .iter()
        .map(|v| Cell::new(v.name(), v.config(&cfg.learner), &cfg.plan.shifts))
        .collect()
}

pub fn anchor_head_cells(cfg: &LabConfig) -> Vec<Cell> {
    [AnchorHead::Mse, AnchorHead::Kl]
        .iter()
        .map(|&h| {
            Cell::new(
                "anchor-head",
                LearnerConfig {
                    anchor_head: h,
                    ..cfg.learner
                },
                &two_lights(cfg),
            )
        })
        .collect()
}

pub fn iteration_sweep_cells(cfg: &LabConfig) -> Vec<Cell> {
    let lights = two_lights(cfg);
    vec![
        Cell::new("anchored", Variant::FinalD.config(&cfg.learner), &lights).with_curve(),
        Cell::new("unanchored", Variant::FinalC.config(&cfg.learner), &lights).with_curve(),
    ]
}

/// Source agent and the four variants across the full shift gradient.
pub fn shift_sweep_cells(cfg: &LabConfig) -> Vec<Cell> {
    Variant::ALL
        .iter()
        .map(|v| Cell::new(v.name(), v.config(&cfg.learner), &shift_grid()))
        .collect()
}

/// Which experiment a CLI subcommand runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    AlphaSweep,
    Ablation,
    AnchorHead,
    Iterations,
    ShiftSweep,
}

impl Experiment {
    pub fn cells(self, cfg: &LabConfig) -> Vec<Cell> {
        match self {
            Experiment::AlphaSweep => alpha_sweep_cells(cfg),
            Experiment::Ablation => ablation_cells(cfg),
            Experiment::AnchorHead => anchor_head_cells(cfg),
            Experiment::Iterations => iteration_sweep_cells(cfg),
            Experiment::ShiftSweep => shift_sweep_cells(cfg),
        }
    }

    /// Shifts at which the untouched source agent is reported alongside.
    pub fn source_shifts(self, cfg: &LabConfig) -> Vec<f64> {
        match self {
            Experiment::AnchorHead | Experiment::Iterations => two_lights(cfg),
            Experiment::ShiftSweep => shift_grid(),
            _ => cfg.plan.shifts.clone(),
        }
    }
}

/// Run an experiment over every plan seed. Seeds run one after another so
/// only one seed's pools are resident; cells within a seed fan out.
pub fn run_experiment(
    cfg: &LabConfig,
    experiment: Experiment,
    work: Option<&Path>,
    jobs: usize,
    mut progress: impl FnMut(&str),
) -> Result<Vec<ReportRow>> {
    let cells = experiment.cells(cfg);
    ensure!(!cells.is_empty(), "experiment grid is empty");
    let mut rows = Vec::new();
    for &seed in &cfg.plan.seeds {
        progress(&format!("seed {seed}: preparing source"));
        let mut prep = prepare_or_load(cfg, seed, work, |step, sr| {
            progress(&format!("seed {seed}: source step {step} success {sr:.2}"));
        })?;
        prep.datasets = None;
        rows.extend(source_rows(cfg, &prep, &experiment.source_shifts(cfg))?);
        progress(&format!("seed {seed}: {} fine-tunes", cells.len()));
        rows.extend(run_cells(cfg, &prep, &cells, jobs)?);
    }
    Ok(rows)
}
