//! Plain-text run configuration: `[section]` headers over flat
//! `key = value` lines, covering every tunable in the stack.
//!
//! One field table drives parsing, rendering, and command-line `--set`
//! overrides, so the three can never drift apart. Floats render with the
//! shortest decimal that reparses to the same bits, so
//! `parse(to_text(c)) == c` holds exactly.
//!
//! Two values are derived rather than set directly: `run.seed` is the single
//! seed for the whole run (it overwrites the trainer's), and the latent width
//! under `[estimator]` is mirrored into the policy input so the two can never
//! disagree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::acoustics::{AcousticConfig, MaterialTable, SurfaceKind};
use crate::eval::calibrate::CalibrationTargets;
use crate::sim::NUM_JOINTS;
use crate::trainer::rollout::PhaseSource;
use crate::trainer::TrainerConfig;
use crate::{Error, Result};

/// Evaluation-protocol defaults: trial counts, sweep grids, the long mixed
/// route, and the calibration anchors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Repeated trials per surface condition.
    pub trials: usize,
    /// Recorded seconds per trial.
    pub duration_s: f64,
    /// Unrecorded walk-in seconds per trial.
    pub warmup_s: f64,
    /// Commanded speed (m/s) for single-surface trials and calibration.
    pub surface_speed: f64,
    /// Quiet factor for single-surface trials.
    pub surface_beta: f64,
    /// Commanded speeds for the speed sweep.
    pub sweep_speeds: Vec<f64>,
    /// Quiet factors for the quiet-factor sweep.
    pub sweep_betas: Vec<f64>,
    /// Commanded speed the quiet-factor sweep runs at.
    pub beta_sweep_speed: f64,
    /// Commanded speed for the long mixed-surface walk.
    pub longwalk_speed: f64,
    /// Quiet factor for the long walk.
    pub longwalk_beta: f64,
    /// Long-walk route as (surface, meters) segments.
    pub longwalk_route: Vec<(SurfaceKind, f64)>,
    /// Listener distance (m) for perceived-level reporting.
    pub listener_distance_m: f64,
    /// Mean-level anchors (dBA) gain calibration must reproduce.
    pub calibration: CalibrationTargets,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            trials: 5,
            duration_s: 20.0,
            warmup_s: 2.0,
            surface_speed: 0.5,
            surface_beta: 1.0,
            sweep_speeds: vec![0.4, 0.6, 0.8, 1.0],
            sweep_betas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            beta_sweep_speed: 0.8,
            longwalk_speed: 0.36,
            longwalk_beta: 1.0,
            longwalk_route: vec![
                (SurfaceKind::Wood, 20.0),
                (SurfaceKind::Tiles, 20.0),
                (SurfaceKind::Carpet, 20.0),
                (SurfaceKind::Concrete, 20.0),
                (SurfaceKind::Wood, 11.7),
            ],
            listener_distance_m: 2.0,
            calibration: CalibrationTargets::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("eval.trials must be at least 1"));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 10.0) {
            return Err(Error::config("eval.duration_s must be at least 10"));
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0) {
            return Err(Error::config("eval.warmup_s must be non-negative"));
        }
        for (name, v) in [
            ("eval.surface_speed", self.surface_speed),
            ("eval.beta_sweep_speed", self.beta_sweep_speed),
            ("eval.longwalk_speed", self.longwalk_speed),
            ("eval.listener_distance_m", self.listener_distance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.sweep_speeds.is_empty() || self.sweep_speeds.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::config("eval.sweep_speeds needs positive entries"));
        }
        for &b in [self.surface_beta, self.longwalk_beta].iter().chain(&self.sweep_betas) {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::config("quiet factors must lie in [0, 1]"));
            }
        }
        if self.sweep_betas.is_empty() {
            return Err(Error::config("eval.sweep_betas needs at least one entry"));
        }
        if self.longwalk_route.is_empty()
            || self.longwalk_route.iter().any(|&(_, len)| !(len.is_finite() && len > 0.0))
        {
            return Err(Error::config("eval.longwalk_route needs positive segment lengths"));
        }
        for (name, t) in [
            ("eval.target_wood", self.calibration.wood),
            ("eval.target_carpet", self.calibration.carpet),
            ("eval.target_tiles", self.calibration.tiles),
        ] {
            if !t.is_finite() {
                return Err(Error::config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Everything one run needs: the single seed, training stack, microphone
/// and surface models, and the evaluation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; the trainer's seed is always overwritten with this.
    pub seed: u64,
    pub trainer: TrainerConfig,
    pub acoustics: AcousticConfig,
    pub materials: MaterialTable,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 1,
            trainer: TrainerConfig::default(),
            acoustics: AcousticConfig::default(),
            materials: MaterialTable::default(),
            eval: EvalConfig::default(),
        };
        cfg.finalize().expect("default configuration is valid");
        cfg
    }
}

impl RunConfig {
    /// Parses the text form. Unknown sections or keys are errors that name
    /// the offender; omitted keys keep their defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            seed: 1,
            trainer: TrainerConfig::default(),
            acoustics: AcousticConfig::default(),
            materials: MaterialTable::default(),
            eval: EvalConfig::default(),
        };
        apply_text(&mut cfg, text)?;
        cfg.finalize()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Renders every key grouped by section. The output reparses to an
    /// identical configuration.
    pub fn to_text(&self) -> String {
        let mut copy = self.clone();
        let table = field_table(&mut copy);
        let mut out = String::new();
        let mut current = "";
        for (key, field) in &table {
            let (section, name) = key.split_once('.').expect("keys are section.name");
            if section != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{name} = {}\n", field.render()));
        }
        out
    }

    /// Applies one `section.key=value` override through the same assignment
    /// path the file parser uses. Call [`RunConfig::finalize`] after the
    /// last override.
    pub fn apply_set(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override '{spec}' is not section.key=value")))?;
        let key = key.trim();
        let value = value.trim();
        let mut table = field_table(self);
        match table.iter_mut().find(|(k, _)| *k == key) {
            Some((k, field)) => field.assign(value, k),
            None => Err(Error::config(format!("unknown config key '{key}'"))),
        }
    }

    /// Propagates the derived values (run seed into the trainer, estimator
    /// latent width into the policy) and validates everything.
    pub fn finalize(&mut self) -> Result<()> {
        self.trainer.seed = self.seed;
        self.trainer.policy.latent = self.trainer.estimator.latent;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.acoustics.validate()?;
        self.materials.validate()?;
        self.eval.validate()?;
        Ok(())
    }
}

/// A mutable view of one configurable field, tagged with how to print and
/// parse it.
enum Field<'a> {
    F64(&'a mut f64),
    U64(&'a mut u64),
    Usize(&'a mut usize),
    Bool(&'a mut bool),
    F64List(&'a mut Vec<f64>),
    F64Pair(&'a mut [f64; 2]),
    F64Joints(&'a mut [f64; NUM_JOINTS]),
    Phase(&'a mut PhaseSource),
    Route(&'a mut Vec<(SurfaceKind, f64)>),
}

impl Field<'_> {
    fn render(&self) -> String {
        fn join(vals: &[f64]) -> String {
            vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        }
        match self {
            Field::F64(v) => v.to_string(),
            Field::U64(v) => v.to_string(),
            Field::Usize(v) => v.to_string(),
            Field::Bool(v) => v.to_string(),
            Field::F64List(v) => join(v),
            Field::F64Pair(v) => join(&v[..]),
            Field::F64Joints(v) => join(&v[..]),
            Field::Phase(v) => v.name().to_string(),
            Field::Route(v) => v
                .iter()
                .map(|(kind, len)| format!("{kind}:{len}"))
                .collect::<Vec<_>>()
                .join(", "),
        }
    }

    fn assign(&mut self, raw: &str, key: &str) -> Result<()> {
        match self {
            Field::F64(slot) => **slot = parse_f64(raw, key)?,
            Field::U64(slot) => {
                **slot = raw
                    .parse::<u64>()
                    .map_err(|_| bad_value(key, raw, "an unsigned integer"))?;
            }
            Field::Usize(slot) => {
                **slot = raw
                    .parse::<usize>()
                    .map_err(|_| bad_value(key, raw, "an unsigned integer"))?;
            }
            Field::Bool(slot) => {
                **slot = match raw {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad_value(key, raw, "true or false")),
                };
            }
            Field::F64List(slot) => **slot = parse_f64_list(raw, key)?,
            Field::F64Pair(slot) => {
                let vals = parse_f64_list(raw, key)?;
                if vals.len() != 2 {
                    return Err(bad_value(key, raw, "exactly 2 comma-separated numbers"));
                }
                slot.copy_from_slice(&vals);
            }
            Field::F64Joints(slot) => {
                let vals = parse_f64_list(raw, key)?;
                if vals.len() != NUM_JOINTS {
                    return Err(bad_value(
                        key,
                        raw,
                        "exactly 8 comma-separated numbers (hip, knee per leg)",
                    ));
                }
                slot.copy_from_slice(&vals);
            }
            Field::Phase(slot) => **slot = raw.parse()?,
            Field::Route(slot) => {
                let mut route = Vec::new();
                for item in raw.split(',') {
                    let item = item.trim();
                    let (kind, len) = item
                        .split_once(':')
                        .ok_or_else(|| bad_value(key, item, "surface:meters items"))?;
                    route.push((kind.trim().parse::<SurfaceKind>()?, parse_f64(len.trim(), key)?));
                }
                if route.is_empty() {
                    return Err(bad_value(key, raw, "at least one surface:meters item"));
                }
                **slot = route;
            }
        }
        Ok(())
    }
}

fn bad_value(key: &str, raw: &str, wanted: &str) -> Error {
    Error::config(format!("key '{key}': expected {wanted}, got '{raw}'"))
}

fn parse_f64(raw: &str, key: &str) -> Result<f64> {
    let v = raw.trim().parse::<f64>().map_err(|_| bad_value(key, raw, "a number"))?;
    if !v.is_finite() {
        return Err(bad_value(key, raw, "a finite number"));
    }
    Ok(v)
}

fn parse_f64_list(raw: &str, key: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|item| parse_f64(item, key)).collect()
}

/// The single source of truth for every configurable key, in file order.
fn field_table(cfg: &mut RunConfig) -> Vec<(&'static str, Field<'_>)> {
    use Field::*;
    let t = &mut cfg.trainer;
    let a = &mut cfg.acoustics;
    let m = &mut cfg.materials;
    let e = &mut cfg.eval;
    vec![
        ("run.seed", U64(&mut cfg.seed)),
        // Rigid-body, contact, and actuation model.
        ("sim.physics_dt", F64(&mut t.sim.physics_dt)),
        ("sim.control_dt", F64(&mut t.sim.control_dt)),
        ("sim.trunk_mass", F64(&mut t.sim.trunk_mass)),
        ("sim.trunk_length", F64(&mut t.sim.trunk_length)),
        ("sim.trunk_inertia", F64(&mut t.sim.trunk_inertia)),
        ("sim.foot_effective_mass", F64(&mut t.sim.foot_effective_mass)),
        ("sim.rotor_inertia", F64(&mut t.sim.rotor_inertia)),
        ("sim.thigh_len", F64(&mut t.sim.thigh_len)),
        ("sim.shank_len", F64(&mut t.sim.shank_len)),
        ("sim.hip_offset_x", F64(&mut t.sim.hip_offset_x)),
        ("sim.contact_stiffness", F64(&mut t.sim.contact_stiffness)),
        ("sim.contact_damping", F64(&mut t.sim.contact_damping)),
        ("sim.ground_friction", F64(&mut t.sim.ground_friction)),
        ("sim.tangential_damping", F64(&mut t.sim.tangential_damping)),
        ("sim.touchdown_force_n", F64(&mut t.sim.touchdown_force_n)),
        ("sim.kp", F64(&mut t.sim.kp)),
        ("sim.kd", F64(&mut t.sim.kd)),
        ("sim.torque_limit", F64(&mut t.sim.torque_limit)),
        ("sim.hip_limits", F64Pair(&mut t.sim.hip_limits)),
        ("sim.knee_limits", F64Pair(&mut t.sim.knee_limits)),
        ("sim.q_stand", F64Joints(&mut t.sim.q_stand)),
        ("sim.push_randomization", Bool(&mut t.sim.push_randomization)),
        ("sim.push_interval_s", F64(&mut t.sim.push_interval_s)),
        ("sim.push_magnitude", F64(&mut t.sim.push_magnitude)),
        ("sim.domain_randomization", Bool(&mut t.sim.domain_randomization)),
        ("sim.gravity", F64(&mut t.sim.gravity)),
        // Microphone and ambient noise model.
        ("acoustics.sample_rate_hz", F64(&mut a.sample_rate_hz)),
        ("acoustics.decay_tau_s", F64(&mut a.decay_tau_s)),
        ("acoustics.noise_floor_dba", F64(&mut a.noise_floor_dba)),
        ("acoustics.reference_distance_m", F64(&mut a.reference_distance_m)),
        // Per-surface impact gains.
        ("materials.wood", F64(&mut m.wood)),
        ("materials.carpet", F64(&mut m.carpet)),
        ("materials.tiles", F64(&mut m.tiles)),
        ("materials.concrete", F64(&mut m.concrete)),
        ("materials.concrete_calibrated", Bool(&mut m.concrete_calibrated)),
        // State-estimation network. Interface widths (observation, velocity,
        // scan, leg count) are structural and not configurable.
        ("estimator.hidden", Usize(&mut t.estimator.hidden)),
        ("estimator.latent", Usize(&mut t.estimator.latent)),
        ("estimator.head_hidden", Usize(&mut t.estimator.head_hidden)),
        ("estimator.window", Usize(&mut t.estimator.window)),
        // Actor-critic network.
        ("policy.hidden", Usize(&mut t.policy.hidden)),
        ("policy.action_scale", F64(&mut t.policy.action_scale)),
        ("policy.action_clip", F64(&mut t.policy.action_clip)),
        ("policy.log_std_init", F64(&mut t.policy.log_std_init)),
        ("policy.log_std_min", F64(&mut t.policy.log_std_min)),
        ("policy.log_std_max", F64(&mut t.policy.log_std_max)),
        // Reward weights and shaping constants.
        ("reward.lin_tracking", F64(&mut t.reward.lin_tracking)),
        ("reward.ang_tracking", F64(&mut t.reward.ang_tracking)),
        ("reward.lin_vel_z", F64(&mut t.reward.lin_vel_z)),
        ("reward.ang_vel_xy", F64(&mut t.reward.ang_vel_xy)),
        ("reward.joint_power", F64(&mut t.reward.joint_power)),
        ("reward.joint_accel", F64(&mut t.reward.joint_accel)),
        ("reward.action_rate", F64(&mut t.reward.action_rate)),
        ("reward.collision", F64(&mut t.reward.collision)),
        ("reward.body_height", F64(&mut t.reward.body_height)),
        ("reward.orientation", F64(&mut t.reward.orientation)),
        ("reward.phase_drop", F64(&mut t.reward.phase_drop)),
        ("reward.phase_raise", F64(&mut t.reward.phase_raise)),
        ("reward.tracking_sharpness", F64(&mut t.reward.tracking_sharpness)),
        ("reward.target_height", F64(&mut t.reward.target_height)),
        ("reward.quiet_tradeoff", F64(&mut t.reward.quiet_tradeoff)),
        // Policy-gradient optimizer.
        ("ppo.gamma", F64(&mut t.ppo.gamma)),
        ("ppo.lam", F64(&mut t.ppo.lam)),
        ("ppo.clip", F64(&mut t.ppo.clip)),
        ("ppo.entropy_coef", F64(&mut t.ppo.entropy_coef)),
        ("ppo.epochs", Usize(&mut t.ppo.epochs)),
        ("ppo.minibatches", Usize(&mut t.ppo.minibatches)),
        ("ppo.actor_lr", F64(&mut t.ppo.actor_lr)),
        ("ppo.critic_lr", F64(&mut t.ppo.critic_lr)),
        ("ppo.max_grad_norm", F64(&mut t.ppo.max_grad_norm)),
        ("ppo.kl_warn", F64(&mut t.ppo.kl_warn)),
        // Experience collection.
        ("rollout.num_envs", Usize(&mut t.rollout.num_envs)),
        ("rollout.horizon", Usize(&mut t.rollout.horizon)),
        ("rollout.max_episode_steps", Usize(&mut t.rollout.max_episode_steps)),
        ("rollout.zero_command_prob", F64(&mut t.rollout.zero_command_prob)),
        ("rollout.reward_phase_source", Phase(&mut t.rollout.reward_phase_source)),
        // Speed curriculum.
        ("curriculum.level_max_speed", F64List(&mut t.curriculum.level_max_speed)),
        ("curriculum.vx_min", F64(&mut t.curriculum.vx_min)),
        ("curriculum.promote_fraction", F64(&mut t.curriculum.promote_fraction)),
        ("curriculum.demote_fraction", F64(&mut t.curriculum.demote_fraction)),
        ("curriculum.patience", Usize(&mut t.curriculum.patience)),
        // Training loop.
        ("trainer.iterations", Usize(&mut t.iterations)),
        ("trainer.est_lr", F64(&mut t.est_lr)),
        ("trainer.est_minibatch", Usize(&mut t.est_minibatch)),
        ("trainer.est_batches", Usize(&mut t.est_batches)),
        ("trainer.est_fwd_weight", F64(&mut t.est_weights.fwd)),
        ("trainer.est_phase_weight", F64(&mut t.est_weights.phase)),
        ("trainer.est_kl_weight", F64(&mut t.est_weights.kl)),
        ("trainer.checkpoint_every", Usize(&mut t.checkpoint_every)),
        // Evaluation protocol.
        ("eval.trials", Usize(&mut e.trials)),
        ("eval.duration_s", F64(&mut e.duration_s)),
        ("eval.warmup_s", F64(&mut e.warmup_s)),
        ("eval.surface_speed", F64(&mut e.surface_speed)),
        ("eval.surface_beta", F64(&mut e.surface_beta)),
        ("eval.sweep_speeds", F64List(&mut e.sweep_speeds)),
        ("eval.sweep_betas", F64List(&mut e.sweep_betas)),
        ("eval.beta_sweep_speed", F64(&mut e.beta_sweep_speed)),
        ("eval.longwalk_speed", F64(&mut e.longwalk_speed)),
        ("eval.longwalk_beta", F64(&mut e.longwalk_beta)),
        ("eval.longwalk_route", Route(&mut e.longwalk_route)),
        ("eval.listener_distance_m", F64(&mut e.listener_distance_m)),
        ("eval.target_wood", F64(&mut e.calibration.wood)),
        ("eval.target_carpet", F64(&mut e.calibration.carpet)),
        ("eval.target_tiles", F64(&mut e.calibration.tiles)),
    ]
}

fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<()> {
    let mut table = field_table(cfg);
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let name = inner
                .strip_suffix(']')
                .ok_or_else(|| {
                    Error::config(format!("line {line_no}: unterminated section header '{line}'"))
                })?
                .trim();
            let prefix = format!("{name}.");
            if !table.iter().any(|(k, _)| k.starts_with(&prefix)) {
                return Err(Error::config(format!("line {line_no}: unknown section '[{name}]'")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {line_no}: expected 'key = value', got '{line}'"))
        })?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(Error::config(format!(
                "line {line_no}: key '{key}' appears before any [section] header"
            )));
        }
        let full = format!("{section}.{key}");
        match table.iter_mut().find(|(k, _)| *k == full) {
            Some((k, field)) => field.assign(value, k)?,
            None => return Err(Error::config(format!("unknown config key '{full}'"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_text_round_trips_exactly() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let back = RunConfig::parse(&text).expect("rendered config parses");
        assert_eq!(back, cfg);
        // Stable under a second round.
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn mutated_values_round_trip_exactly() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.trainer.sim.kp = 23.456789012345678;
        cfg.trainer.sim.hip_limits = [-1.1, 1.7];
        cfg.trainer.sim.q_stand = [0.7, -1.4, 0.71, -1.41, 0.72, -1.42, 0.73, -1.43];
        cfg.trainer.sim.push_randomization = false;
        cfg.trainer.estimator.latent = 8;
        cfg.trainer.rollout.reward_phase_source = PhaseSource::Estimator;
        cfg.trainer.curriculum.level_max_speed = vec![0.2, 0.9];
        cfg.trainer.est_weights.kl = 0.025;
        cfg.materials.concrete_calibrated = true;
        cfg.eval.sweep_betas = vec![0.1, 0.9];
        cfg.eval.longwalk_route = vec![(SurfaceKind::Carpet, 3.25), (SurfaceKind::Concrete, 7.5)];
        cfg.finalize().expect("mutated config is valid");

        let back = RunConfig::parse(&cfg.to_text()).expect("rendered config parses");
        assert_eq!(back, cfg);
        assert_eq!(back.trainer.policy.latent, 8);
        assert_eq!(back.trainer.seed, 99);
    }

    #[test]
    fn unknown_keys_and_sections_are_named() {
        let err = RunConfig::parse("[sim]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("sim.bogus"), "{err}");
        let err = RunConfig::parse("[warp]\nspeed = 9\n").unwrap_err();
        assert!(err.to_string().contains("[warp]"), "{err}");
        let err = RunConfig::parse("seed = 1\n").unwrap_err();
        assert!(err.to_string().contains("before any [section]"), "{err}");
        let err = RunConfig::parse("[run]\nseed\n").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
    }

    #[test]
    fn value_errors_name_key_and_expectation() {
        let err = RunConfig::parse("[run]\nseed = banana\n").unwrap_err();
        assert!(err.to_string().contains("run.seed"), "{err}");
        let err = RunConfig::parse("[sim]\nhip_limits = 1, 2, 3\n").unwrap_err();
        assert!(err.to_string().contains("exactly 2"), "{err}");
        let err = RunConfig::parse("[sim]\ngravity = inf\n").unwrap_err();
        assert!(err.to_string().contains("finite"), "{err}");
        let err = RunConfig::parse("[rollout]\nreward_phase_source = psychic\n").unwrap_err();
        assert!(err.to_string().contains("psychic"), "{err}");
    }

    #[test]
    fn comments_and_spacing_are_ignored() {
        let text = "\n# top comment\n[ppo]\n  clip = 0.3   # trailing note\n\n[run]\nseed=7\n";
        let cfg = RunConfig::parse(text).expect("parses");
        assert_eq!(cfg.trainer.ppo.clip, 0.3);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.trainer.seed, 7);
    }

    #[test]
    fn apply_set_shares_the_parse_path() {
        let mut cfg = RunConfig::default();
        cfg.apply_set("ppo.clip=0.3").expect("valid override");
        cfg.apply_set("estimator.latent = 8").expect("valid override");
        cfg.apply_set("eval.sweep_speeds=0.5, 0.7").expect("valid override");
        cfg.finalize().expect("overridden config is valid");
        assert_eq!(cfg.trainer.ppo.clip, 0.3);
        assert_eq!(cfg.trainer.policy.latent, 8);
        assert_eq!(cfg.eval.sweep_speeds, vec![0.5, 0.7]);

        let err = cfg.apply_set("ppo.clips=0.3").unwrap_err();
        assert!(err.to_string().contains("ppo.clips"), "{err}");
        let err = cfg.apply_set("just-a-word").unwrap_err();
        assert!(err.to_string().contains("section.key=value"), "{err}");
    }

    #[test]
    fn finalize_rejects_invalid_settings() {
        let mut cfg = RunConfig::default();
        cfg.apply_set("eval.trials=0").expect("assignment itself succeeds");
        assert!(cfg.finalize().is_err());

        let mut cfg = RunConfig::default();
        cfg.apply_set("materials.wood=-1").expect("assignment itself succeeds");
        assert!(cfg.finalize().is_err());
    }
}
