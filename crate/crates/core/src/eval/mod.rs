//! Evaluation harness: surface trials, speed and quiet-factor sweeps, the
//! long mixed-surface walk, gain calibration, and report generation.
//!
//! Every driver shares one trial protocol ([`run_trial`]): domain
//! randomization on, external pushes off, a warm-up that is excluded from
//! the recording, and a microphone trace synthesized from the recorded
//! touchdowns. Trials use seeds derived from a master seed, so identical
//! invocations reproduce every artifact byte for byte. Fallen trials are
//! excluded from aggregates and counted.

pub mod calibrate;
pub mod report;
pub mod trot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustics::{
    impact_pressure, level_at_distance, synthesize_trace, AcousticConfig, Impact, MaterialTable,
    NoiseTrace, SurfaceKind,
};
use crate::error::{Error, Result};
use crate::phase::estimator::Estimator;
use crate::phase::ObservationHistory;
use crate::policy::{action_to_targets, actor_input, normalize_obs, ActorCritic};
use crate::records::{EventRow, ExperimentDir, StepRow};
use crate::sim::{observe, Command, EventKind, SimConfig, Simulator, NUM_JOINTS};
use crate::sim::terrain::Terrain;
use crate::stats::{mean, std_dev};
use crate::trainer::load_policy;
use trot::{TrotConfig, TrotController};

/// Loudness threshold (dBA) the long-walk report checks the overall mean
/// level against.
pub const SAFE_THRESHOLD_DBA: f64 = 70.0;

// ---------------------------------------------------------------------------
// Controllers
// ---------------------------------------------------------------------------

/// How to obtain a controller for an evaluation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControllerSpec {
    /// Open-loop diagonal trot baseline.
    Trot,
    /// Trained policy loaded from a checkpoint file.
    Checkpoint(PathBuf),
}

impl ControllerSpec {
    /// Builds the controller and a short method label for reports.
    pub fn build(&self, scfg: &SimConfig) -> Result<(Controller, String)> {
        match self {
            ControllerSpec::Trot => Ok((
                Controller::Trot(TrotController::new(scfg, TrotConfig::default())),
                "scripted-trot baseline".to_string(),
            )),
            ControllerSpec::Checkpoint(path) => {
                let (_, estimator, policy) = load_policy(path)?;
                Ok((
                    Controller::Policy(Box::new(PolicyController::new(estimator, policy))),
                    "learned policy".to_string(),
                ))
            }
        }
    }
}

/// Deployed closed-loop controller: proprioception through the gait-state
/// estimator into the deterministic actor mean. It never sees privileged
/// simulator state — only the observation vector a real robot would have.
#[derive(Debug, Clone)]
pub struct PolicyController {
    estimator: Estimator,
    policy: ActorCritic,
    history: ObservationHistory,
    prev_action: [f64; NUM_JOINTS],
    fresh: bool,
}

impl PolicyController {
    pub fn new(estimator: Estimator, policy: ActorCritic) -> Self {
        let window = estimator.cfg.window;
        PolicyController {
            estimator,
            policy,
            history: ObservationHistory::new(window).expect("window validated by config"),
            prev_action: [0.0; NUM_JOINTS],
            fresh: true,
        }
    }

    fn reset(&mut self) {
        self.prev_action = [0.0; NUM_JOINTS];
        self.fresh = true;
    }

    /// One deployment step: observe → estimate → actor mean → PD targets.
    fn act(&mut self, sim: &Simulator, cmd: &Command) -> Result<[f64; NUM_JOINTS]> {
        let obs = observe(sim.state(), cmd, &self.prev_action);
        let norm = normalize_obs(&obs, sim.config());
        if self.fresh {
            self.history.reset(&norm);
            self.fresh = false;
        } else {
            self.history.push(&norm);
        }
        let est = self.estimator.estimate(&self.history.snapshot())?;
        let action = self.policy.actor_mean(&actor_input(&norm, &est))?;
        for (slot, a) in self.prev_action.iter_mut().zip(&action) {
            *slot = *a;
        }
        Ok(action_to_targets(&action, &self.policy.cfg, sim.config()))
    }
}

/// A controller under evaluation.
#[derive(Debug, Clone)]
pub enum Controller {
    Policy(Box<PolicyController>),
    Trot(TrotController),
}

impl Controller {
    fn reset(&mut self) {
        match self {
            Controller::Policy(p) => p.reset(),
            Controller::Trot(t) => t.reset(),
        }
    }

    fn act(&mut self, sim: &Simulator, cmd: &Command) -> Result<[f64; NUM_JOINTS]> {
        match self {
            Controller::Policy(p) => p.act(sim, cmd),
            Controller::Trot(t) => Ok(t.step(cmd.vx, sim.config().control_dt)),
        }
    }
}

// ---------------------------------------------------------------------------
// Seeds and shared protocol
// ---------------------------------------------------------------------------

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-trial simulator seed, distinct across trials and surfaces but a pure
/// function of the master seed so reruns are identical.
pub fn trial_seed(master: u64, surface: SurfaceKind, trial: usize) -> u64 {
    let surface_idx = SurfaceKind::ALL
        .iter()
        .position(|&k| k == surface)
        .expect("surface is one of the known kinds") as u64;
    splitmix64(master ^ splitmix64(surface_idx.wrapping_add(1)) ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Evaluation variant of a simulator configuration: domain randomization
/// stays on (trial-to-trial spread), external pushes are disabled (a push
/// is indistinguishable from a footfall in the noise record).
pub fn eval_sim_config(base: &SimConfig) -> SimConfig {
    let mut cfg = base.clone();
    cfg.domain_randomization = true;
    cfg.push_randomization = false;
    cfg
}

/// Everything recorded about one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// Simulator seed the trial ran with.
    pub seed: u64,
    /// Recorded control steps (post-warm-up).
    pub steps: Vec<StepRow>,
    /// Synthesized microphone trace; `None` if the robot fell before any
    /// sample was recorded.
    pub trace: Option<NoiseTrace>,
    /// Whether the robot fell at any point (including warm-up).
    pub fell: bool,
    /// Fall time relative to recording start (negative = during warm-up).
    pub fall_time: Option<f64>,
    /// Mean forward speed over the recorded window (m/s).
    pub achieved_speed: f64,
    /// Mean squared forward-velocity tracking error ((m/s)²).
    pub tracking_sqerr: f64,
    /// Number of recorded touchdowns.
    pub impacts: usize,
    /// Recorded duration (s).
    pub duration_s: f64,
}

/// Runs one trial of `duration_s` recorded seconds after `warmup_s` of
/// unrecorded walking, returning steps, trace, and summary numbers.
pub fn run_trial(
    scfg: &SimConfig,
    acfg: &AcousticConfig,
    terrain: &Terrain,
    controller: &mut Controller,
    cmd: &Command,
    seed: u64,
    duration_s: f64,
    warmup_s: f64,
) -> Result<TrialOutcome> {
    acfg.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid("trial duration must be positive"));
    }
    if !(warmup_s.is_finite() && warmup_s >= 0.0) {
        return Err(Error::invalid("warm-up must be non-negative"));
    }
    let mut sim = Simulator::new(eval_sim_config(scfg), terrain.clone(), seed)?;
    controller.reset();

    let dt = sim.config().control_dt;
    let warmup_steps = (warmup_s / dt).round() as usize;
    let record_steps = (duration_s / dt).round().max(1.0) as usize;

    let mut fell = false;
    let mut fall_time = None;

    // Warm-up: walk without recording.
    let mut done_warmup = 0;
    for _ in 0..warmup_steps {
        let q_des = controller.act(&sim, cmd)?;
        sim.step(&q_des)?;
        done_warmup += 1;
        if sim.is_fallen() {
            fell = true;
            break;
        }
    }
    let t0 = sim.state().time;
    let x0 = sim.state().trunk_pos[0];
    if fell {
        return Ok(TrialOutcome {
            seed,
            steps: Vec::new(),
            trace: None,
            fell: true,
            fall_time: Some((done_warmup as f64 - warmup_steps as f64) * dt),
            achieved_speed: 0.0,
            tracking_sqerr: 0.0,
            impacts: 0,
            duration_s: 0.0,
        });
    }

    let mut steps: Vec<StepRow> = Vec::with_capacity(record_steps);
    let mut impacts: Vec<Impact> = Vec::new();
    let mut sq_err = 0.0;
    for _ in 0..record_steps {
        let q_des = controller.act(&sim, cmd)?;
        let outcome = sim.step(&q_des)?;
        let state = sim.state();
        let mut events = Vec::new();
        for ev in &outcome.events {
            if ev.kind == EventKind::Touchdown {
                impacts.push(Impact {
                    time: (ev.time - t0).max(0.0),
                    pressure: impact_pressure(
                        ev.impact_velocity,
                        sim.config().foot_effective_mass,
                        ev.material.gain,
                    )?,
                });
                events.push(EventRow {
                    leg: ev.leg,
                    impact_velocity: ev.impact_velocity,
                    surface: ev.material.kind.name().to_string(),
                });
            }
        }
        steps.push(StepRow {
            t: state.time - t0,
            x: state.trunk_pos[0],
            z: state.trunk_pos[1],
            pitch: state.pitch,
            vx: state.trunk_vel[0],
            events,
        });
        sq_err += (state.trunk_vel[0] - cmd.vx).powi(2);
        if sim.is_fallen() {
            fell = true;
            fall_time = Some(state.time - t0);
            break;
        }
    }

    let elapsed = sim.state().time - t0;
    let trace = if elapsed > 0.0 {
        // Clamp impact times into the recorded span (events land in
        // (t0, t_end] by construction; this guards float edges).
        let impacts: Vec<Impact> = impacts
            .into_iter()
            .map(|i| Impact { time: i.time.min(elapsed), ..i })
            .collect();
        Some(synthesize_trace(&impacts, elapsed, acfg)?)
    } else {
        None
    };
    let n_impacts = steps.iter().map(|s| s.events.len()).sum();
    let tracking_sqerr = if steps.is_empty() { 0.0 } else { sq_err / steps.len() as f64 };
    Ok(TrialOutcome {
        seed,
        steps,
        trace,
        fell,
        fall_time,
        achieved_speed: if elapsed > 0.0 {
            (sim.state().trunk_pos[0] - x0) / elapsed
        } else {
            0.0
        },
        tracking_sqerr,
        impacts: n_impacts,
        duration_s: elapsed,
    })
}

// ---------------------------------------------------------------------------
// Surface trials
// ---------------------------------------------------------------------------

/// Protocol parameters for a block of repeated trials on one surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTrialsSpec {
    /// Surface the (flat) terrain is made of.
    pub surface: SurfaceKind,
    /// Commanded forward speed (m/s).
    pub speed: f64,
    /// Quiet-factor command in `[0, 1]`.
    pub beta: f64,
    /// Recorded seconds per trial (≥ 10).
    pub duration_s: f64,
    /// Unrecorded walk-in seconds per trial.
    pub warmup_s: f64,
    /// Number of trials (≥ 1), each with a distinct derived seed.
    pub trials: usize,
    /// Master seed all trial seeds derive from.
    pub seed: u64,
}

impl SurfaceTrialsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_s < 10.0 {
            return Err(Error::invalid(format!(
                "trial duration {} s is below the 10 s minimum",
                self.duration_s
            )));
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::invalid("speed must be finite and ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("quiet factor {} outside [0, 1]", self.beta)));
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0) {
            return Err(Error::invalid("warm-up must be non-negative"));
        }
        Ok(())
    }
}

impl Default for SurfaceTrialsSpec {
    fn default() -> Self {
        SurfaceTrialsSpec {
            surface: SurfaceKind::Wood,
            speed: 0.5,
            beta: 0.0,
            duration_s: 20.0,
            warmup_s: 2.0,
            trials: 5,
            seed: 0,
        }
    }
}

/// One trial's row in a summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub fell: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fall_time: Option<f64>,
    /// Mean noise level (dBA); absent if no samples were recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnl: Option<f64>,
    /// Peak noise level (dBA); absent if no samples were recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnl: Option<f64>,
    /// Energy-equivalent level (dBA); absent if no samples were recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leq: Option<f64>,
    pub achieved_speed: f64,
    pub tracking_sqerr: f64,
    pub impacts: usize,
    pub duration_s: f64,
}

/// Mean ± standard deviation over the completed (non-fallen) trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mnl_mean: f64,
    pub mnl_std: f64,
    pub pnl_mean: f64,
    pub pnl_std: f64,
    pub leq_mean: f64,
    pub achieved_speed_mean: f64,
    pub tracking_sqerr_mean: f64,
    /// Trials contributing to the means.
    pub completed: usize,
}

/// Results of one surface-trial block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    /// Method label for reports (controller identity).
    pub method: String,
    pub surface: String,
    pub speed_cmd: f64,
    pub beta: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub trials: Vec<TrialRow>,
    /// Fallen-trial count (excluded from `aggregate`).
    pub falls: usize,
    pub aggregate: Aggregate,
}

/// In-memory result of [`run_surface_trials`]: the summary plus the raw
/// artifacts (traces and step logs) for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceOutcome {
    pub summary: SurfaceSummary,
    /// One trace per trial, in trial order; fallen-in-warm-up trials have
    /// empty traces (zero samples).
    pub traces: Vec<NoiseTrace>,
    pub steps: Vec<Vec<StepRow>>,
}

/// Runs `spec.trials` repeated trials on one flat surface and aggregates
/// mean ± std over the completed ones. Fallen trials are excluded from the
/// aggregate and counted; the run fails only if *every* trial falls.
pub fn run_surface_trials(
    spec: &SurfaceTrialsSpec,
    controller: &mut Controller,
    method: &str,
    scfg: &SimConfig,
    acfg: &AcousticConfig,
    materials: &MaterialTable,
) -> Result<SurfaceOutcome> {
    spec.validate()?;
    let terrain = Terrain::flat(materials.material(spec.surface));
    let cmd = Command::new(spec.speed, 0.0, spec.beta)?;

    let mut rows = Vec::with_capacity(spec.trials);
    let mut traces = Vec::with_capacity(spec.trials);
    let mut steps = Vec::with_capacity(spec.trials);
    for trial in 0..spec.trials {
        let seed = trial_seed(spec.seed, spec.surface, trial);
        let out = run_trial(
            scfg,
            acfg,
            &terrain,
            controller,
            &cmd,
            seed,
            spec.duration_s,
            spec.warmup_s,
        )?;
        rows.push(TrialRow {
            trial,
            seed,
            fell: out.fell,
            fall_time: out.fall_time,
            mnl: out.trace.as_ref().map(|t| t.mnl()),
            pnl: out.trace.as_ref().map(|t| t.pnl()),
            leq: out.trace.as_ref().map(|t| t.leq()),
            achieved_speed: out.achieved_speed,
            tracking_sqerr: out.tracking_sqerr,
            impacts: out.impacts,
            duration_s: out.duration_s,
        });
        traces.push(out.trace.unwrap_or(NoiseTrace { dt: 1.0 / acfg.sample_rate_hz, samples: Vec::new() }));
        steps.push(out.steps);
    }

    let completed: Vec<&TrialRow> = rows.iter().filter(|r| !r.fell).collect();
    let falls = rows.len() - completed.len();
    if completed.is_empty() {
        return Err(Error::invalid(format!(
            "all {} trials fell (surface {}, speed {}, beta {})",
            spec.trials,
            spec.surface.name(),
            spec.speed,
            spec.beta
        )));
    }
    let col = |f: fn(&TrialRow) -> f64| -> Vec<f64> { completed.iter().map(|r| f(r)).collect() };
    let mnls = col(|r| r.mnl.expect("completed trials have traces"));
    let pnls = col(|r| r.pnl.expect("completed trials have traces"));
    let leqs = col(|r| r.leq.expect("completed trials have traces"));
    let aggregate = Aggregate {
        mnl_mean: mean(&mnls),
        mnl_std: std_dev(&mnls),
        pnl_mean: mean(&pnls),
        pnl_std: std_dev(&pnls),
        leq_mean: mean(&leqs),
        achieved_speed_mean: mean(&col(|r| r.achieved_speed)),
        tracking_sqerr_mean: mean(&col(|r| r.tracking_sqerr)),
        completed: completed.len(),
    };

    Ok(SurfaceOutcome {
        summary: SurfaceSummary {
            method: method.to_string(),
            surface: spec.surface.name().to_string(),
            speed_cmd: spec.speed,
            beta: spec.beta,
            duration_s: spec.duration_s,
            warmup_s: spec.warmup_s,
            seed: spec.seed,
            trials: rows,
            falls,
            aggregate,
        },
        traces,
        steps,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Sweep results: one surface-trial block per grid point (and method).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Swept quantity: `"speed"` or `"beta"`.
    pub axis: String,
    pub rows: Vec<SurfaceSummary>,
}

/// In-memory sweep result with raw per-row artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub rows: Vec<SurfaceOutcome>,
}

fn sweep_outcome(axis: &str, rows: Vec<SurfaceOutcome>) -> SweepOutcome {
    SweepOutcome {
        summary: SweepSummary {
            axis: axis.to_string(),
            rows: rows.iter().map(|r| r.summary.clone()).collect(),
        },
        rows,
    }
}

/// Runs the surface-trial protocol at each commanded speed for each
/// controller. A single speed and controller reduces exactly to
/// [`run_surface_trials`].
pub fn speed_sweep(
    speeds: &[f64],
    base: &SurfaceTrialsSpec,
    controllers: &mut [(String, Controller)],
    scfg: &SimConfig,
    acfg: &AcousticConfig,
    materials: &MaterialTable,
) -> Result<SweepOutcome> {
    if speeds.is_empty() {
        return Err(Error::invalid("speed sweep needs at least one speed"));
    }
    let mut rows = Vec::new();
    for (method, controller) in controllers.iter_mut() {
        for &speed in speeds {
            let spec = SurfaceTrialsSpec { speed, ..*base };
            rows.push(run_surface_trials(&spec, controller, method, scfg, acfg, materials)?);
        }
    }
    Ok(sweep_outcome("speed", rows))
}

/// Runs the surface-trial protocol at each quiet factor. A single beta
/// reduces exactly to [`run_surface_trials`].
pub fn beta_sweep(
    betas: &[f64],
    base: &SurfaceTrialsSpec,
    controller: &mut Controller,
    method: &str,
    scfg: &SimConfig,
    acfg: &AcousticConfig,
    materials: &MaterialTable,
) -> Result<SweepOutcome> {
    if betas.is_empty() {
        return Err(Error::invalid("quiet-factor sweep needs at least one value"));
    }
    let mut rows = Vec::new();
    for &beta in betas {
        let spec = SurfaceTrialsSpec { beta, ..*base };
        rows.push(run_surface_trials(&spec, controller, method, scfg, acfg, materials)?);
    }
    Ok(sweep_outcome("beta", rows))
}

// ---------------------------------------------------------------------------
// Long walk
// ---------------------------------------------------------------------------

/// Parameters of the continuous mixed-surface walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongWalkSpec {
    /// Surface segments as (kind, length in m), walked left to right.
    pub route: Vec<(SurfaceKind, f64)>,
    /// Commanded forward speed (m/s).
    pub speed: f64,
    /// Quiet-factor command.
    pub beta: f64,
    /// Listener distance (m) for the perceived-level column.
    pub listener_distance_m: f64,
    /// Master seed.
    pub seed: u64,
    /// Hard time cap (s); `None` = twice the nominal route time (or 30 s
    /// when the commanded speed is zero).
    pub max_duration_s: Option<f64>,
}

impl Default for LongWalkSpec {
    fn default() -> Self {
        LongWalkSpec {
            route: vec![
                (SurfaceKind::Wood, 20.0),
                (SurfaceKind::Tiles, 20.0),
                (SurfaceKind::Carpet, 20.0),
                (SurfaceKind::Concrete, 20.0),
                (SurfaceKind::Wood, 11.7),
            ],
            speed: 0.36,
            beta: 1.0,
            listener_distance_m: 2.0,
            seed: 0,
            max_duration_s: None,
        }
    }
}

impl LongWalkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.route.is_empty() {
            return Err(Error::invalid("route needs at least one segment"));
        }
        for (kind, len) in &self.route {
            if !(len.is_finite() && *len > 0.0) {
                return Err(Error::invalid(format!(
                    "route segment {} must have positive length",
                    kind.name()
                )));
            }
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::invalid("speed must be finite and ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("quiet factor outside [0, 1]"));
        }
        if !(self.listener_distance_m.is_finite() && self.listener_distance_m > 0.0) {
            return Err(Error::invalid("listener distance must be positive"));
        }
        Ok(())
    }

    /// Total route length (m).
    pub fn total_length(&self) -> f64 {
        self.route.iter().map(|(_, l)| l).sum()
    }
}

/// Where a long walk failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallPoint {
    pub t: f64,
    pub x: f64,
}

/// Per-segment levels of the long walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub segment: usize,
    pub surface: String,
    pub x_start: f64,
    pub x_end: f64,
    /// Microphone samples attributed to this segment (by trunk position).
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_enter: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_exit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mnl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pnl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leq: Option<f64>,
    /// Segment mean level re-projected to the listener distance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceived_mnl: Option<f64>,
    pub impacts: usize,
}

/// Aggregate results of a long walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongWalkSummary {
    pub method: String,
    pub route: Vec<(String, f64)>,
    pub speed_cmd: f64,
    pub beta: f64,
    pub listener_distance_m: f64,
    pub seed: u64,
    /// Whether the trunk reached the end of the route.
    pub completed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fall: Option<FallPoint>,
    pub duration_s: f64,
    pub distance_m: f64,
    pub mean_speed: f64,
    pub mnl: f64,
    pub pnl: f64,
    pub leq: f64,
    /// Overall mean level re-projected to the listener distance.
    pub perceived_mnl: f64,
    /// Pass/fail against [`SAFE_THRESHOLD_DBA`].
    pub threshold_dba: f64,
    pub below_threshold: bool,
    pub segments: Vec<SegmentRow>,
    pub impacts: usize,
}

/// One plot-ready sample of the walk: time, trunk position, surface under
/// the trunk, and the sampled level.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub surface: String,
    pub dba: f64,
}

/// In-memory long-walk result with raw artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct LongWalkOutcome {
    pub summary: LongWalkSummary,
    pub trace: NoiseTrace,
    pub steps: Vec<StepRow>,
    pub path: Vec<PathPoint>,
}

/// Walks the route in one continuous episode, recording from the first
/// step, and attributes microphone samples to route segments by trunk
/// position. A fall produces a partial report with the failure point.
pub fn run_long_walk(
    spec: &LongWalkSpec,
    controller: &mut Controller,
    method: &str,
    scfg: &SimConfig,
    acfg: &AcousticConfig,
    materials: &MaterialTable,
) -> Result<LongWalkOutcome> {
    spec.validate()?;
    acfg.validate()?;
    let terrain = Terrain::route(&spec.route, materials)?;
    let cmd = Command::new(spec.speed, 0.0, spec.beta)?;
    let total = spec.total_length();
    let max_duration = spec.max_duration_s.unwrap_or(if spec.speed > 0.0 {
        2.0 * total / spec.speed
    } else {
        30.0
    });

    let mut sim = Simulator::new(eval_sim_config(scfg), terrain, splitmix64(spec.seed))?;
    controller.reset();
    let dt = sim.config().control_dt;
    let t0 = sim.state().time;
    let x_start = sim.state().trunk_pos[0];

    let mut steps: Vec<StepRow> = Vec::new();
    let mut impacts: Vec<Impact> = Vec::new();
    // Trunk trajectory sampled at control steps, for interpolation onto
    // microphone sample times: (t, x) starting at the pre-step state.
    let mut traj: Vec<(f64, f64)> = vec![(0.0, x_start)];
    let mut completed = false;
    let mut fall: Option<FallPoint> = None;
    let max_steps = (max_duration / dt).round() as usize;

    for _ in 0..max_steps {
        let q_des = controller.act(&sim, &cmd)?;
        let outcome = sim.step(&q_des)?;
        let state = sim.state();
        let mut events = Vec::new();
        for ev in &outcome.events {
            if ev.kind == EventKind::Touchdown {
                impacts.push(Impact {
                    time: (ev.time - t0).max(0.0),
                    pressure: impact_pressure(
                        ev.impact_velocity,
                        sim.config().foot_effective_mass,
                        ev.material.gain,
                    )?,
                });
                events.push(EventRow {
                    leg: ev.leg,
                    impact_velocity: ev.impact_velocity,
                    surface: ev.material.kind.name().to_string(),
                });
            }
        }
        steps.push(StepRow {
            t: state.time - t0,
            x: state.trunk_pos[0],
            z: state.trunk_pos[1],
            pitch: state.pitch,
            vx: state.trunk_vel[0],
            events,
        });
        traj.push((state.time - t0, state.trunk_pos[0]));
        if sim.is_fallen() {
            fall = Some(FallPoint {
                t: state.time - t0,
                x: state.trunk_pos[0],
            });
            break;
        }
        if state.trunk_pos[0] - x_start >= total {
            completed = true;
            break;
        }
    }

    let elapsed = sim.state().time - t0;
    let impacts_clamped: Vec<Impact> = impacts
        .iter()
        .map(|i| Impact { time: i.time.min(elapsed), ..*i })
        .collect();
    let trace = synthesize_trace(&impacts_clamped, elapsed.max(dt), acfg)?;

    // Segment boundaries along x (first segment also owns x < x_start).
    let mut bounds = vec![x_start];
    for (_, len) in &spec.route {
        bounds.push(bounds.last().unwrap() + len);
    }
    let seg_of_x = |x: f64| -> usize {
        let mut seg = 0;
        for k in 0..spec.route.len() {
            if x >= bounds[k] {
                seg = k;
            }
        }
        seg
    };
    let x_at = |ts: f64| -> f64 {
        match traj.binary_search_by(|(t, _)| t.partial_cmp(&ts).expect("finite times")) {
            Ok(i) => traj[i].1,
            Err(0) => traj[0].1,
            Err(i) if i >= traj.len() => traj[traj.len() - 1].1,
            Err(i) => {
                let (ta, xa) = traj[i - 1];
                let (tb, xb) = traj[i];
                xa + (xb - xa) * (ts - ta) / (tb - ta)
            }
        }
    };

    // Partition microphone samples into segments.
    let n_seg = spec.route.len();
    let mut seg_samples: Vec<Vec<f64>> = vec![Vec::new(); n_seg];
    let mut seg_times: Vec<Vec<f64>> = vec![Vec::new(); n_seg];
    let mut path = Vec::with_capacity(trace.samples.len());
    for (k, &level) in trace.samples.iter().enumerate() {
        let ts = k as f64 * trace.dt;
        let x = x_at(ts);
        let seg = seg_of_x(x);
        seg_samples[seg].push(level);
        seg_times[seg].push(ts);
        path.push(PathPoint {
            t: ts,
            x,
            surface: spec.route[seg].0.name().to_string(),
            dba: level,
        });
    }
    // Impacts per segment, by the trunk position of the step that saw them.
    let mut seg_impacts = vec![0usize; n_seg];
    for step in &steps {
        if !step.events.is_empty() {
            seg_impacts[seg_of_x(step.x)] += step.events.len();
        }
    }

    let segments: Vec<SegmentRow> = (0..n_seg)
        .map(|k| {
            let sub = NoiseTrace { dt: trace.dt, samples: seg_samples[k].clone() };
            let has = !sub.samples.is_empty();
            SegmentRow {
                segment: k,
                surface: spec.route[k].0.name().to_string(),
                x_start: bounds[k],
                x_end: bounds[k + 1],
                samples: sub.samples.len(),
                t_enter: seg_times[k].first().copied(),
                t_exit: seg_times[k].last().copied(),
                mnl: has.then(|| sub.mnl()),
                pnl: has.then(|| sub.pnl()),
                leq: has.then(|| sub.leq()),
                perceived_mnl: if has {
                    Some(
                        level_at_distance(
                            sub.mnl(),
                            spec.listener_distance_m,
                            acfg.reference_distance_m,
                        )
                        .expect("validated distances"),
                    )
                } else {
                    None
                },
                impacts: seg_impacts[k],
            }
        })
        .collect();

    let mnl = trace.mnl();
    let summary = LongWalkSummary {
        method: method.to_string(),
        route: spec.route.iter().map(|(k, l)| (k.name().to_string(), *l)).collect(),
        speed_cmd: spec.speed,
        beta: spec.beta,
        listener_distance_m: spec.listener_distance_m,
        seed: spec.seed,
        completed,
        fall,
        duration_s: elapsed,
        distance_m: sim.state().trunk_pos[0] - x_start,
        mean_speed: if elapsed > 0.0 {
            (sim.state().trunk_pos[0] - x_start) / elapsed
        } else {
            0.0
        },
        mnl,
        pnl: trace.pnl(),
        leq: trace.leq(),
        perceived_mnl: level_at_distance(
            mnl,
            spec.listener_distance_m,
            acfg.reference_distance_m,
        )?,
        threshold_dba: SAFE_THRESHOLD_DBA,
        below_threshold: mnl < SAFE_THRESHOLD_DBA,
        segments,
        impacts: steps.iter().map(|s| s.events.len()).sum(),
    };
    Ok(LongWalkOutcome { summary, trace, steps, path })
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Tagged union stored in every experiment's `summary.json`, so the report
/// generator can classify results by shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSummary {
    Surface(SurfaceSummary),
    SpeedSweep(SweepSummary),
    BetaSweep(SweepSummary),
    LongWalk(LongWalkSummary),
    Calibration(calibrate::CalibrationSummary),
}

/// Writes a surface-trial experiment directory (step logs, stacked trace
/// CSV, summary).
pub fn write_surface_outcome(dir: &Path, outcome: &SurfaceOutcome) -> Result<ExperimentDir> {
    let exp = ExperimentDir::create(dir)?;
    for (i, steps) in outcome.steps.iter().enumerate() {
        exp.write_trial_steps(i, steps)?;
    }
    exp.write_trace_csv(&outcome.traces)?;
    exp.write_summary(&ExperimentSummary::Surface(outcome.summary.clone()))?;
    Ok(exp)
}

/// Writes a sweep experiment directory; trials are numbered row-major
/// (row index × trials + trial).
pub fn write_sweep_outcome(dir: &Path, outcome: &SweepOutcome, axis_is_speed: bool) -> Result<ExperimentDir> {
    let exp = ExperimentDir::create(dir)?;
    let mut traces = Vec::new();
    let mut idx = 0;
    for row in &outcome.rows {
        for steps in &row.steps {
            exp.write_trial_steps(idx, steps)?;
            idx += 1;
        }
        traces.extend(row.traces.iter().cloned());
    }
    exp.write_trace_csv(&traces)?;
    let summary = if axis_is_speed {
        ExperimentSummary::SpeedSweep(outcome.summary.clone())
    } else {
        ExperimentSummary::BetaSweep(outcome.summary.clone())
    };
    exp.write_summary(&summary)?;
    Ok(exp)
}

/// Writes a long-walk experiment directory, including the plot-ready
/// `path.csv` (t, x, surface, dBA per microphone sample).
pub fn write_long_walk_outcome(dir: &Path, outcome: &LongWalkOutcome) -> Result<ExperimentDir> {
    let exp = ExperimentDir::create(dir)?;
    exp.write_trial_steps(0, &outcome.steps)?;
    exp.write_trace_csv(std::slice::from_ref(&outcome.trace))?;
    let rows: Vec<String> = outcome
        .path
        .iter()
        .map(|p| format!("{},{},{},{}", p.t, p.x, p.surface, p.dba))
        .collect();
    exp.write_csv("path.csv", "t,x,surface,dba", &rows)?;
    exp.write_summary(&ExperimentSummary::LongWalk(outcome.summary.clone()))?;
    Ok(exp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trot_controller(scfg: &SimConfig) -> Controller {
        Controller::Trot(TrotController::new(scfg, TrotConfig::default()))
    }

    #[test]
    fn stationary_trial_sits_at_the_floor_level_exactly() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = SurfaceTrialsSpec {
            speed: 0.0,
            duration_s: 10.0,
            warmup_s: 1.0,
            trials: 2,
            ..SurfaceTrialsSpec::default()
        };
        let mut ctrl = trot_controller(&scfg);
        let out =
            run_surface_trials(&spec, &mut ctrl, "scripted-trot baseline", &scfg, &acfg, &materials)
                .unwrap();
        assert_eq!(out.summary.falls, 0);
        assert_eq!(out.summary.aggregate.mnl_mean, 55.0);
        assert_eq!(out.summary.aggregate.pnl_mean, 55.0);
        assert_eq!(out.summary.aggregate.mnl_std, 0.0);
        for row in &out.summary.trials {
            assert_eq!(row.mnl, Some(55.0));
            assert_eq!(row.pnl, Some(55.0));
            assert_eq!(row.impacts, 0);
        }
    }

    #[test]
    fn trot_tracks_half_meter_per_second_within_thirty_percent() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = SurfaceTrialsSpec {
            trials: 2,
            duration_s: 10.0,
            ..SurfaceTrialsSpec::default()
        };
        let mut ctrl = trot_controller(&scfg);
        let out =
            run_surface_trials(&spec, &mut ctrl, "scripted-trot baseline", &scfg, &acfg, &materials)
                .unwrap();
        assert_eq!(out.summary.falls, 0, "trot fell: {:?}", out.summary.trials);
        let v = out.summary.aggregate.achieved_speed_mean;
        assert!(
            (v - 0.5).abs() <= 0.15,
            "achieved speed {v} not within 30% of 0.5"
        );
        assert!(out.summary.aggregate.mnl_mean > 55.0, "walking must make noise");
    }

    #[test]
    fn trials_are_deterministic_and_seed_sensitive() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = SurfaceTrialsSpec {
            trials: 1,
            duration_s: 10.0,
            warmup_s: 0.5,
            ..SurfaceTrialsSpec::default()
        };
        let run = |seed: u64| {
            let mut ctrl = trot_controller(&scfg);
            run_surface_trials(
                &SurfaceTrialsSpec { seed, ..spec },
                &mut ctrl,
                "m",
                &scfg,
                &acfg,
                &materials,
            )
            .unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a, b);
        let c = run(8);
        assert_ne!(
            a.summary.trials[0].mnl, c.summary.trials[0].mnl,
            "different master seeds should randomize domain parameters"
        );
    }

    #[test]
    fn single_point_sweeps_reduce_to_surface_trials() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let base = SurfaceTrialsSpec {
            trials: 1,
            duration_s: 10.0,
            warmup_s: 0.5,
            speed: 0.5,
            beta: 0.25,
            ..SurfaceTrialsSpec::default()
        };

        let mut ctrl = trot_controller(&scfg);
        let direct =
            run_surface_trials(&base, &mut ctrl, "m", &scfg, &acfg, &materials).unwrap();

        let mut entries = vec![("m".to_string(), trot_controller(&scfg))];
        let sweep =
            speed_sweep(&[0.5], &base, &mut entries, &scfg, &acfg, &materials).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        assert_eq!(sweep.rows[0], direct);

        let mut ctrl2 = trot_controller(&scfg);
        let bsweep =
            beta_sweep(&[0.25], &base, &mut ctrl2, "m", &scfg, &acfg, &materials).unwrap();
        assert_eq!(bsweep.rows.len(), 1);
        assert_eq!(bsweep.rows[0], direct);
    }

    #[test]
    fn zero_speed_long_walk_reports_floor_level() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = LongWalkSpec {
            route: vec![(SurfaceKind::Wood, 5.0)],
            speed: 0.0,
            max_duration_s: Some(5.0),
            ..LongWalkSpec::default()
        };
        let mut ctrl = trot_controller(&scfg);
        let out = run_long_walk(&spec, &mut ctrl, "m", &scfg, &acfg, &materials).unwrap();
        assert!(!out.summary.completed);
        assert!(out.summary.fall.is_none());
        assert_eq!(out.summary.mnl, 55.0);
        assert_eq!(out.summary.pnl, 55.0);
        assert!(out.summary.below_threshold);
        assert_eq!(out.summary.impacts, 0);
    }

    #[test]
    fn long_walk_segments_partition_samples_and_combine_to_overall_leq() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = LongWalkSpec {
            route: vec![(SurfaceKind::Wood, 2.5), (SurfaceKind::Tiles, 2.5)],
            speed: 0.5,
            seed: 3,
            ..LongWalkSpec::default()
        };
        let mut ctrl = trot_controller(&scfg);
        let out = run_long_walk(&spec, &mut ctrl, "m", &scfg, &acfg, &materials).unwrap();
        assert!(out.summary.completed, "trot should finish 5 m: {:?}", out.summary.fall);
        let n: usize = out.summary.segments.iter().map(|s| s.samples).sum();
        assert_eq!(n, out.trace.samples.len());

        // Duration-weighted power combination of segment energy levels
        // reproduces the overall energy level.
        let total = out.trace.samples.len() as f64;
        let mut power = 0.0;
        for seg in &out.summary.segments {
            if let Some(leq) = seg.leq {
                power += seg.samples as f64 / total * 10f64.powf(leq / 10.0);
            }
        }
        let combined = 10.0 * power.log10();
        assert!(
            (combined - out.summary.leq).abs() < 1e-6,
            "combined {combined} vs overall {}",
            out.summary.leq
        );
        // The walk must actually cross into the second segment.
        assert!(out.summary.segments[1].samples > 0);
        assert_eq!(out.path.len(), out.trace.samples.len());
    }

    #[test]
    fn trial_seeds_are_distinct_across_trials_and_surfaces() {
        let mut seen = std::collections::BTreeSet::new();
        for surface in SurfaceKind::ALL {
            for trial in 0..16 {
                assert!(seen.insert(trial_seed(42, surface, trial)));
            }
        }
    }

    #[test]
    fn surface_artifacts_round_trip_through_disk() {
        let scfg = SimConfig::default();
        let acfg = AcousticConfig::default();
        let materials = MaterialTable::default();
        let spec = SurfaceTrialsSpec {
            trials: 1,
            duration_s: 10.0,
            warmup_s: 0.0,
            ..SurfaceTrialsSpec::default()
        };
        let mut ctrl = trot_controller(&scfg);
        let out = run_surface_trials(&spec, &mut ctrl, "m", &scfg, &acfg, &materials).unwrap();

        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("exp");
        write_surface_outcome(&dir, &out).unwrap();
        let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
        let parsed: ExperimentSummary = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, ExperimentSummary::Surface(out.summary.clone()));
        assert!(dir.join("trial_00.jsonl").exists());
        assert!(dir.join("trace.csv").exists());
    }
}
