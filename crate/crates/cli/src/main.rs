//! Command-line front end for the quiet-gait stack: training, evaluation
//! protocols, gain calibration, report generation, and the internal
//! consistency checks.
//!
//! Every command starts from the same configuration (defaults, an optional
//! file, then `--set` overrides), echoes the effective configuration into
//! its output directory, and derives all randomness from the single
//! `run.seed`, so any result can be reproduced from the directory alone.
//!
//! Exit codes: 0 success, 1 a check or report found failures, 2 bad
//! configuration or input, 3 numerical failure at runtime.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quietgait::acoustics::SurfaceKind;
use quietgait::check::{run_checks, CheckOptions};
use quietgait::config::RunConfig;
use quietgait::eval::calibrate::{calibrate_gains, CalibrationSpec};
use quietgait::eval::report::generate_report;
use quietgait::eval::{
    beta_sweep, run_long_walk, run_surface_trials, speed_sweep, write_long_walk_outcome,
    write_surface_outcome, write_sweep_outcome, Controller, ControllerSpec, ExperimentSummary,
    LongWalkSpec, LongWalkSummary, SurfaceSummary, SurfaceTrialsSpec,
};
use quietgait::records::ExperimentDir;
use quietgait::trainer::{train_with_progress, IterationMetrics};
use quietgait::{Error, Result};

#[derive(Parser)]
#[command(
    name = "quietgait",
    version,
    about = "Planar quadruped gait training with an impact-noise model and a quiet-factor command"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the estimator and policy from scratch.
    Train(TrainArgs),
    /// Run an evaluation protocol with a trained policy or the scripted baseline.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Fit per-surface impact gains to the configured level anchors.
    Calibrate(CalibrateArgs),
    /// Collect experiment directories into plot-ready CSV tables.
    Report(ReportArgs),
    /// Run the internal consistency checks (gradients, oracles, identities).
    Check(CheckArgs),
}

/// Configuration source shared by every command.
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; defaults are used when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set ppo.clip=0.25 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed override (run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for rollouts and trials (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for spec in &self.set {
            cfg.apply_set(spec)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.finalize()?;
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(Error::invalid("--jobs must be at least 1"));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| Error::invalid(format!("cannot size the thread pool: {e}")))?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory for checkpoints, metrics, and the config echo.
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
    /// Override the iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Full-scale profile: 4096 parallel environments, 6000 iterations.
    #[arg(long)]
    full_scale: bool,
}

/// Controller selection where exactly one controller runs.
#[derive(Args)]
struct ControllerArgs {
    /// Checkpoint to evaluate.
    #[arg(long, value_name = "FILE", conflicts_with = "baseline_trot")]
    checkpoint: Option<PathBuf>,
    /// Evaluate the scripted diagonal-trot baseline instead.
    #[arg(long)]
    baseline_trot: bool,
}

impl ControllerArgs {
    fn spec(&self) -> Result<ControllerSpec> {
        match (&self.checkpoint, self.baseline_trot) {
            (Some(path), false) => Ok(ControllerSpec::Checkpoint(path.clone())),
            (None, true) => Ok(ControllerSpec::Trot),
            _ => Err(Error::invalid("pass --checkpoint FILE or --baseline-trot")),
        }
    }
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Repeated trials on one flat surface.
    Surface(SurfaceArgs),
    /// Surface trials across a grid of commanded speeds.
    SweepSpeed(SweepSpeedArgs),
    /// Surface trials across a grid of quiet factors.
    SweepBeta(SweepBetaArgs),
    /// One continuous walk across a mixed-surface route.
    Longwalk(LongwalkArgs),
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Surface to walk on.
    #[arg(long, default_value = "wood")]
    surface: SurfaceKind,
    /// Commanded speed (m/s); default eval.surface_speed.
    #[arg(long)]
    speed: Option<f64>,
    /// Quiet factor in [0, 1]; default eval.surface_beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Trials; default eval.trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Recorded seconds per trial; default eval.duration_s.
    #[arg(long)]
    duration: Option<f64>,
    /// Unrecorded walk-in seconds; default eval.warmup_s.
    #[arg(long)]
    warmup: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "runs/surface")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepSpeedArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Checkpoint to evaluate (can be combined with --baseline-trot).
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Also run the scripted diagonal-trot baseline.
    #[arg(long)]
    baseline_trot: bool,
    /// Surface to walk on.
    #[arg(long, default_value = "wood")]
    surface: SurfaceKind,
    /// Commanded speeds; default eval.sweep_speeds.
    #[arg(long, value_delimiter = ',')]
    speeds: Vec<f64>,
    /// Quiet factor for every row; default eval.surface_beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "runs/sweep-speed")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepBetaArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Surface to walk on.
    #[arg(long, default_value = "wood")]
    surface: SurfaceKind,
    /// Quiet factors; default eval.sweep_betas.
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    /// Commanded speed for every row; default eval.beta_sweep_speed.
    #[arg(long)]
    speed: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "runs/sweep-beta")]
    out: PathBuf,
}

#[derive(Args)]
struct LongwalkArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    controller: ControllerArgs,
    /// Route as surface:meters segments, e.g. wood:20,tiles:20.
    /// Default eval.longwalk_route.
    #[arg(long)]
    route: Option<String>,
    /// Commanded speed (m/s); default eval.longwalk_speed.
    #[arg(long)]
    speed: Option<f64>,
    /// Quiet factor; default eval.longwalk_beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Listener distance (m); default eval.listener_distance_m.
    #[arg(long)]
    listener: Option<f64>,
    /// Hard time cap in seconds (default: twice the nominal route time).
    #[arg(long)]
    max_duration: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "runs/longwalk")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Calibrate with a trained policy instead of the scripted baseline.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Write the configuration with the fitted gains to this file.
    #[arg(long, value_name = "FILE")]
    write_config: Option<PathBuf>,
    /// Output directory for the calibration record.
    #[arg(long, default_value = "runs/calibrate")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory whose subdirectories hold experiment results.
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    /// Output directory for the generated tables.
    #[arg(long, default_value = "report")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Seed for the randomized comparisons.
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Deliberately perturb a reward weight so the reward check must fail;
    /// proves the comparison has teeth.
    #[arg(long, hide = true)]
    mutate_reward: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(EvalCmd::Surface(args)) => cmd_surface(args),
        Cmd::Eval(EvalCmd::SweepSpeed(args)) => cmd_sweep_speed(args),
        Cmd::Eval(EvalCmd::SweepBeta(args)) => cmd_sweep_beta(args),
        Cmd::Eval(EvalCmd::Longwalk(args)) => cmd_longwalk(args),
        Cmd::Calibrate(args) => cmd_calibrate(args),
        Cmd::Report(args) => cmd_report(args),
        Cmd::Check(args) => cmd_check(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = args.cfg.load()?;
    if args.full_scale {
        cfg.trainer.rollout.num_envs = 4096;
        cfg.trainer.iterations = 6000;
    }
    if let Some(iters) = args.iterations {
        cfg.trainer.iterations = iters;
    }
    cfg.finalize()?;

    std::fs::create_dir_all(&args.out)?;
    cfg.save(&args.out.join("config.txt"))?;
    println!(
        "training: seed {}, {} envs x {} steps, {} iterations -> {}",
        cfg.seed,
        cfg.trainer.rollout.num_envs,
        cfg.trainer.rollout.horizon,
        cfg.trainer.iterations,
        args.out.display()
    );

    let outcome = train_with_progress(&cfg.trainer, &args.out, print_iteration)?;
    println!(
        "done: {} iterations, final checkpoint {}, deploy checkpoint {}",
        outcome.iterations_run,
        outcome.final_checkpoint.display(),
        outcome.deploy_checkpoint.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn print_iteration(m: &IterationMetrics) {
    println!(
        "iter {:>4}  reward {:>8.4}  tracking {:>7.4}  phase {:>9.5}  falls {:>3}  level {} (vx<={:.2})  est-loss {:>8.4}  kl {:>7.4}",
        m.iteration,
        m.mean_reward,
        m.mean_tracking,
        m.mean_phase_term,
        m.falls,
        m.curriculum_level,
        m.vx_max,
        m.estimator.total,
        m.ppo.approx_kl,
    );
}

fn cmd_surface(args: SurfaceArgs) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let spec = SurfaceTrialsSpec {
        surface: args.surface,
        speed: args.speed.unwrap_or(cfg.eval.surface_speed),
        beta: args.beta.unwrap_or(cfg.eval.surface_beta),
        duration_s: args.duration.unwrap_or(cfg.eval.duration_s),
        warmup_s: args.warmup.unwrap_or(cfg.eval.warmup_s),
        trials: args.trials.unwrap_or(cfg.eval.trials),
        seed: cfg.seed,
    };
    let (mut controller, method) = args.controller.spec()?.build(&cfg.trainer.sim)?;
    let outcome = run_surface_trials(
        &spec,
        &mut controller,
        &method,
        &cfg.trainer.sim,
        &cfg.acoustics,
        &cfg.materials,
    )?;
    let exp = write_surface_outcome(&args.out, &outcome)?;
    exp.write_config_echo(&cfg.to_text())?;
    print_surface(&outcome.summary);
    println!("written: {}", exp.path().display());
    Ok(ExitCode::SUCCESS)
}

fn print_surface(s: &SurfaceSummary) {
    println!(
        "{} | {} @ {} m/s, quiet factor {}",
        s.method, s.surface, s.speed_cmd, s.beta
    );
    println!(
        "  {} of {} trials completed ({} falls), {} s recorded each",
        s.aggregate.completed,
        s.trials.len(),
        s.falls,
        s.duration_s
    );
    if s.aggregate.completed > 0 {
        println!(
            "  mean level {:.2} +/- {:.2} dBA   peak {:.2} +/- {:.2} dBA   energy mean {:.2} dBA",
            s.aggregate.mnl_mean,
            s.aggregate.mnl_std,
            s.aggregate.pnl_mean,
            s.aggregate.pnl_std,
            s.aggregate.leq_mean
        );
        println!(
            "  achieved speed {:.3} m/s   tracking error {:.4} (m/s)^2",
            s.aggregate.achieved_speed_mean, s.aggregate.tracking_sqerr_mean
        );
    }
}

fn cmd_sweep_speed(args: SweepSpeedArgs) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let speeds =
        if args.speeds.is_empty() { cfg.eval.sweep_speeds.clone() } else { args.speeds.clone() };
    let base = SurfaceTrialsSpec {
        surface: args.surface,
        speed: speeds[0],
        beta: args.beta.unwrap_or(cfg.eval.surface_beta),
        duration_s: cfg.eval.duration_s,
        warmup_s: cfg.eval.warmup_s,
        trials: cfg.eval.trials,
        seed: cfg.seed,
    };
    let mut controllers: Vec<(String, Controller)> = Vec::new();
    if let Some(path) = &args.checkpoint {
        let (c, label) = ControllerSpec::Checkpoint(path.clone()).build(&cfg.trainer.sim)?;
        controllers.push((label, c));
    }
    if args.baseline_trot {
        let (c, label) = ControllerSpec::Trot.build(&cfg.trainer.sim)?;
        controllers.push((label, c));
    }
    if controllers.is_empty() {
        return Err(Error::invalid("pass --checkpoint FILE and/or --baseline-trot"));
    }
    let outcome = speed_sweep(
        &speeds,
        &base,
        &mut controllers,
        &cfg.trainer.sim,
        &cfg.acoustics,
        &cfg.materials,
    )?;
    let exp = write_sweep_outcome(&args.out, &outcome, true)?;
    exp.write_config_echo(&cfg.to_text())?;
    for row in &outcome.summary.rows {
        print_surface(row);
    }
    println!("written: {}", exp.path().display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_beta(args: SweepBetaArgs) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let betas =
        if args.betas.is_empty() { cfg.eval.sweep_betas.clone() } else { args.betas.clone() };
    let base = SurfaceTrialsSpec {
        surface: args.surface,
        speed: args.speed.unwrap_or(cfg.eval.beta_sweep_speed),
        beta: betas[0],
        duration_s: cfg.eval.duration_s,
        warmup_s: cfg.eval.warmup_s,
        trials: cfg.eval.trials,
        seed: cfg.seed,
    };
    let (mut controller, method) = args.controller.spec()?.build(&cfg.trainer.sim)?;
    let outcome = beta_sweep(
        &betas,
        &base,
        &mut controller,
        &method,
        &cfg.trainer.sim,
        &cfg.acoustics,
        &cfg.materials,
    )?;
    let exp = write_sweep_outcome(&args.out, &outcome, false)?;
    exp.write_config_echo(&cfg.to_text())?;
    for row in &outcome.summary.rows {
        print_surface(row);
    }
    println!("written: {}", exp.path().display());
    Ok(ExitCode::SUCCESS)
}

fn parse_route(text: &str) -> Result<Vec<(SurfaceKind, f64)>> {
    let mut route = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        let (kind, len) = item
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("route item '{item}' is not surface:meters")))?;
        let meters: f64 = len
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("route length '{len}' is not a number")))?;
        route.push((kind.trim().parse::<SurfaceKind>()?, meters));
    }
    Ok(route)
}

fn cmd_longwalk(args: LongwalkArgs) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let spec = LongWalkSpec {
        route: match &args.route {
            Some(text) => parse_route(text)?,
            None => cfg.eval.longwalk_route.clone(),
        },
        speed: args.speed.unwrap_or(cfg.eval.longwalk_speed),
        beta: args.beta.unwrap_or(cfg.eval.longwalk_beta),
        listener_distance_m: args.listener.unwrap_or(cfg.eval.listener_distance_m),
        seed: cfg.seed,
        max_duration_s: args.max_duration,
    };
    let (mut controller, method) = args.controller.spec()?.build(&cfg.trainer.sim)?;
    let outcome = run_long_walk(
        &spec,
        &mut controller,
        &method,
        &cfg.trainer.sim,
        &cfg.acoustics,
        &cfg.materials,
    )?;
    let exp = write_long_walk_outcome(&args.out, &outcome)?;
    exp.write_config_echo(&cfg.to_text())?;
    print_long_walk(&outcome.summary);
    println!("written: {}", exp.path().display());
    Ok(ExitCode::SUCCESS)
}

fn print_long_walk(s: &LongWalkSummary) {
    let route: Vec<String> = s.route.iter().map(|(k, l)| format!("{k}:{l}")).collect();
    println!("{} | route {} @ {} m/s, quiet factor {}", s.method, route.join(","), s.speed_cmd, s.beta);
    match s.fall {
        None if s.completed => println!(
            "  completed {:.1} m in {:.1} s (mean speed {:.3} m/s), {} impacts",
            s.distance_m, s.duration_s, s.mean_speed, s.impacts
        ),
        None => println!(
            "  time cap reached at {:.1} m of {:.1} s walking (mean speed {:.3} m/s)",
            s.distance_m, s.duration_s, s.mean_speed
        ),
        Some(fall) => println!("  FELL at x = {:.2} m, t = {:.1} s", fall.x, fall.t),
    }
    println!(
        "  mean level {:.2} dBA   peak {:.2} dBA   energy mean {:.2} dBA   at listener ({} m): {:.2} dBA",
        s.mnl, s.pnl, s.leq, s.listener_distance_m, s.perceived_mnl
    );
    println!(
        "  {} the {:.0} dBA threshold",
        if s.below_threshold { "BELOW" } else { "ABOVE" },
        s.threshold_dba
    );
    println!("  segment      x-range          mean    peak    energy  listener");
    let mut energy_num = 0.0;
    let mut energy_den = 0.0;
    for seg in &s.segments {
        let fmt = |v: Option<f64>| match v {
            Some(v) => format!("{v:>6.2}"),
            None => "     -".to_string(),
        };
        println!(
            "  {:<12} {:>5.1}-{:<7.1}  {}  {}  {}  {}",
            seg.surface,
            seg.x_start,
            seg.x_end,
            fmt(seg.mnl),
            fmt(seg.pnl),
            fmt(seg.leq),
            fmt(seg.perceived_mnl),
        );
        if let Some(leq) = seg.leq {
            energy_num += seg.samples as f64 * 10f64.powf(leq / 10.0);
            energy_den += seg.samples as f64;
        }
    }
    if energy_den > 0.0 {
        let combined = 10.0 * (energy_num / energy_den).log10();
        println!(
            "  segment energy means recombine to {combined:.6} dBA (overall {:.6} dBA)",
            s.leq
        );
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    let mut cfg = args.cfg.load()?;
    let spec = CalibrationSpec {
        speed: cfg.eval.surface_speed,
        duration_s: cfg.eval.duration_s,
        warmup_s: cfg.eval.warmup_s,
        trials: cfg.eval.trials,
        seed: cfg.seed,
        targets: cfg.eval.calibration,
    };
    let controller_spec = match &args.checkpoint {
        Some(path) => ControllerSpec::Checkpoint(path.clone()),
        None => ControllerSpec::Trot,
    };
    let (mut controller, method) = controller_spec.build(&cfg.trainer.sim)?;
    let outcome = calibrate_gains(
        &spec,
        &mut controller,
        &method,
        &cfg.trainer.sim,
        &cfg.acoustics,
        &cfg.materials,
    )?;

    println!("calibrated gains ({} at {} m/s):", method, spec.speed);
    for row in &outcome.summary.rows {
        println!(
            "  {:<9} gain {:.4}  target {:.2} dBA  achieved {:.2} dBA  ({} trials, {} falls)",
            row.surface, row.gain, row.target_dba, row.achieved_dba, row.completed_trials, row.falls
        );
    }
    println!(
        "  {:<9} gain {:.4}  interpolated between wood and tiles (no anchor; flagged uncalibrated)",
        "concrete", outcome.summary.concrete_gain
    );

    cfg.materials = outcome.table;
    let exp = ExperimentDir::create(&args.out)?;
    exp.write_summary(&ExperimentSummary::Calibration(outcome.summary.clone()))?;
    exp.write_config_echo(&cfg.to_text())?;
    println!("written: {}", exp.path().display());
    if let Some(path) = &args.write_config {
        cfg.save(path)?;
        println!("updated configuration written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let outcome = generate_report(&args.runs, &args.out)?;
    for name in &outcome.experiments {
        println!("read: {name}");
    }
    for file in &outcome.written {
        println!("wrote: {}", args.out.join(file).display());
    }
    if outcome.errors.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for err in &outcome.errors {
            eprintln!("problem: {err}");
        }
        Ok(ExitCode::from(1))
    }
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    let opts = CheckOptions { seed: args.seed, mutate_reward: args.mutate_reward };
    let report = run_checks(&opts)?;
    print!("{}", report.render());
    Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
