//! Vectorized experience collection with hindsight phase labelling.
//!
//! Each environment runs its own simulator, observation history, and RNG,
//! so a pool stepped in parallel produces bitwise-identical data no matter
//! how work is scheduled. Steps are buffered per episode and only turned
//! into training records once their surrounding contact events are known,
//! because both the phase reward and the critic's privileged input depend
//! on labels that are defined in hindsight. Steps flushed at a rollout
//! boundary use the events seen so far (the labeller's hold rules cover
//! the tail).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::phase::estimator::{Estimator, EstimatorSample};
use crate::phase::{EventLog, ObservationHistory, PhaseLabeler, PhaseVector};
use crate::policy::{
    action_to_targets, actor_input, critic_input, normalize_obs, ActMode, ActorCritic,
};
use crate::rewards::{self, RewardInput, RewardWeights};
use crate::sim::{
    observe, sample_height_scan, Command, SimConfig, Simulator, Terrain, NUM_JOINTS, NUM_LEGS,
};
use crate::{Error, Result};

/// Which per-leg phase signal feeds the impact-shaping reward terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSource {
    /// Hindsight labels from contact events (exact, training-time only).
    #[default]
    Truth,
    /// The deployed network's own phase output, making the shaping signal
    /// available outside simulation at the price of estimation error.
    Estimator,
}

impl PhaseSource {
    pub fn name(self) -> &'static str {
        match self {
            PhaseSource::Truth => "truth",
            PhaseSource::Estimator => "estimator",
        }
    }
}

impl std::str::FromStr for PhaseSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth" => Ok(PhaseSource::Truth),
            "estimator" => Ok(PhaseSource::Estimator),
            other => Err(Error::config(format!(
                "unknown phase source '{other}' (expected truth|estimator)"
            ))),
        }
    }
}

/// Experience-collection shape and episode command distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub num_envs: usize,
    /// Control steps collected per environment per call.
    pub horizon: usize,
    /// Episodes end (as if terminal) after this many control steps.
    pub max_episode_steps: usize,
    /// Probability that an episode is commanded to stand still.
    pub zero_command_prob: f64,
    /// Phase signal driving the impact-shaping reward terms.
    pub reward_phase_source: PhaseSource,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            num_envs: 64,
            horizon: 48,
            max_episode_steps: 1000,
            zero_command_prob: 0.1,
            reward_phase_source: PhaseSource::Truth,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_envs == 0 || self.horizon == 0 || self.max_episode_steps == 0 {
            return Err(Error::config("rollout sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.zero_command_prob) {
            return Err(Error::config("zero_command_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One labelled step, ready for advantage estimation.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub actor_in: Vec<f64>,
    pub critic_in: Vec<f64>,
    pub action: Vec<f64>,
    pub logp: f64,
    pub reward: f64,
    /// Episode ended after this step (fall or timeout).
    pub done: bool,
    /// The episode ended by falling (subset of `done`).
    pub fell: bool,
    /// Unblended tracking-group reward (curriculum signal).
    pub tracking: f64,
    /// Unblended phase-group reward.
    pub phase_term: f64,
    /// Σ v² over touchdowns in this step (impact-energy proxy).
    pub impact_v2: f64,
    pub beta: f64,
    pub vx_cmd: f64,
    pub est_sample: EstimatorSample,
}

/// One environment's chronological slice for an iteration.
#[derive(Debug, Clone)]
pub struct EnvSlice {
    pub steps: Vec<StepRecord>,
    /// Critic input for the state after the final step (bootstrap).
    pub bootstrap_critic_in: Vec<f64>,
    /// Weighted reward-term values summed over `steps` (for logging).
    pub term_sums: BTreeMap<String, f64>,
}

/// Raw per-step data buffered until labels are available.
struct RawStep {
    window: Vec<Vec<f64>>,
    actor_in: Vec<f64>,
    action: Vec<f64>,
    logp: f64,
    // State summaries at the pre-step time (critic / estimator targets).
    pre_time: f64,
    pre_vel: [f64; 2],
    pre_scan: Vec<f64>,
    pre_contact: [bool; NUM_LEGS],
    // Post-step values (reward ingredients).
    post_time: f64,
    reward_seed: RewardSeed,
    next_obs_norm: Vec<f64>,
    /// Post-step phase estimate, filled only when the reward is driven by
    /// the estimator instead of hindsight labels.
    est_phase: Option<PhaseVector>,
    impact_v2: f64,
    done: bool,
    fell: bool,
}

/// Reward inputs sans the hindsight phase.
struct RewardSeed {
    trunk_vel: [f64; 2],
    pitch: f64,
    pitch_rate: f64,
    height: f64,
    tau: [f64; NUM_JOINTS],
    qd: [f64; NUM_JOINTS],
    qdd: [f64; NUM_JOINTS],
    action: [f64; NUM_JOINTS],
    prev_action: [f64; NUM_JOINTS],
    n_collision: usize,
    foot_vel_z: [f64; NUM_LEGS],
}

/// A persistent environment: simulator, history, episode bookkeeping.
pub struct EnvRunner {
    pub sim: Simulator,
    history: ObservationHistory,
    labeler: PhaseLabeler,
    rng: ChaCha8Rng,
    cmd: Command,
    prev_action: [f64; NUM_JOINTS],
    episode_steps: usize,
    events: EventLog,
    pending: Vec<RawStep>,
    vx_range: [f64; 2],
    zero_command_prob: f64,
    phase_source: PhaseSource,
}

impl EnvRunner {
    pub fn new(
        sim_cfg: SimConfig,
        terrain: Terrain,
        window: usize,
        zero_command_prob: f64,
        phase_source: PhaseSource,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim_seed = rng.random::<u64>();
        let sim = Simulator::new(sim_cfg, terrain, sim_seed)?;
        let mut env = EnvRunner {
            sim,
            history: ObservationHistory::new(window)?,
            labeler: PhaseLabeler::default(),
            rng,
            cmd: Command::new(0.0, 0.0, 0.0)?,
            prev_action: [0.0; NUM_JOINTS],
            episode_steps: 0,
            events: EventLog::new(),
            pending: Vec::new(),
            vx_range: [0.0, 0.3],
            zero_command_prob,
            phase_source,
        };
        env.begin_episode()?;
        Ok(env)
    }

    /// Updates the command-speed range (curriculum); takes effect at the
    /// next episode.
    pub fn set_vx_range(&mut self, range: [f64; 2]) {
        self.vx_range = range;
    }

    pub fn command(&self) -> &Command {
        &self.cmd
    }

    fn begin_episode(&mut self) -> Result<()> {
        let seed = self.rng.random::<u64>();
        self.sim.reset(seed)?;
        let vx = if self.rng.random_range(0.0..1.0) < self.zero_command_prob {
            0.0
        } else {
            self.rng.random_range(self.vx_range[0]..=self.vx_range[1])
        };
        let beta = self.rng.random_range(0.0..=1.0);
        self.cmd = Command::new(vx, 0.0, beta)?;
        self.prev_action = [0.0; NUM_JOINTS];
        self.episode_steps = 0;
        self.events.clear();
        self.pending.clear();
        let obs = observe(self.sim.state(), &self.cmd, &self.prev_action);
        let norm = normalize_obs(&obs, self.sim.config());
        self.history.reset(&norm);
        Ok(())
    }

    /// Runs `horizon` steps, flushing labelled records as episodes end and
    /// once more at the end of the slice.
    pub fn collect(
        &mut self,
        horizon: usize,
        max_episode_steps: usize,
        estimator: &Estimator,
        policy: &ActorCritic,
        weights: &RewardWeights,
    ) -> Result<EnvSlice> {
        let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
        let mut term_sums = BTreeMap::new();
        for _ in 0..horizon {
            let raw = self.step_once(max_episode_steps, estimator, policy)?;
            let done = raw.done;
            self.pending.push(raw);
            if done {
                self.flush(weights, &mut steps, &mut term_sums);
                self.begin_episode()?;
            }
        }
        // Bootstrap from the post-step state before flushing the tail.
        let bootstrap_critic_in = self.bootstrap_input(estimator)?;
        self.flush(weights, &mut steps, &mut term_sums);
        Ok(EnvSlice { steps, bootstrap_critic_in, term_sums })
    }

    /// One policy step; returns the raw buffered record.
    fn step_once(
        &mut self,
        max_episode_steps: usize,
        estimator: &Estimator,
        policy: &ActorCritic,
    ) -> Result<RawStep> {
        let pre = self.sim.state().clone();
        let pre_scan = sample_height_scan(&pre, self.sim.terrain()).to_vec();
        let window = self.history.snapshot();
        let est = estimator.estimate(&window)?;
        let obs_norm = window.last().expect("history is never empty").clone();
        let actor_in = actor_input(&obs_norm, &est);
        let sample = policy.act(&actor_in, ActMode::Sample, &mut self.rng)?;

        let mut action_arr = [0.0; NUM_JOINTS];
        action_arr.copy_from_slice(&sample.action);
        let q_des = action_to_targets(&sample.action, &policy.cfg, self.sim.config());
        let outcome = self.sim.step(&q_des)?;
        let mut impact_v2 = 0.0;
        for ev in &outcome.events {
            self.events.push(ev.clone())?;
            impact_v2 += ev.impact_velocity * ev.impact_velocity;
        }

        self.episode_steps += 1;
        let post = self.sim.state().clone();
        let fell = self.sim.is_fallen();
        let done = fell || self.episode_steps >= max_episode_steps;

        let reward_seed = RewardSeed {
            trunk_vel: post.trunk_vel,
            pitch: post.pitch,
            pitch_rate: post.pitch_rate,
            height: self.sim.height_above_ground(),
            tau: post.tau,
            qd: post.qd,
            qdd: post.qdd,
            action: action_arr,
            prev_action: self.prev_action,
            n_collision: post.n_collision as usize,
            foot_vel_z: [
                post.foot_vel[0][1],
                post.foot_vel[1][1],
                post.foot_vel[2][1],
                post.foot_vel[3][1],
            ],
        };

        self.prev_action = action_arr;
        let next_obs = observe(&post, &self.cmd, &self.prev_action);
        let next_obs_norm = normalize_obs(&next_obs, self.sim.config());
        self.history.push(&next_obs_norm);

        // When the reward runs off the network's own phase, estimate it at
        // the post-step time so it lines up with the other reward inputs.
        let est_phase = if self.phase_source == PhaseSource::Estimator {
            let post_est = estimator.estimate(&self.history.snapshot())?;
            let mut phi = [0.0; NUM_LEGS];
            phi.copy_from_slice(&post_est.phase);
            Some(PhaseVector(phi))
        } else {
            None
        };

        Ok(RawStep {
            window,
            actor_in,
            action: sample.action,
            logp: sample.logp,
            pre_time: pre.time,
            pre_vel: pre.trunk_vel,
            pre_scan,
            pre_contact: pre.foot_contact,
            post_time: post.time,
            reward_seed,
            next_obs_norm,
            est_phase,
            impact_v2,
            done,
            fell,
        })
    }

    /// Critic input for the current (post-step) state, used as the GAE
    /// bootstrap. Mirrors what the next `step_once` would assemble.
    fn bootstrap_input(&self, estimator: &Estimator) -> Result<Vec<f64>> {
        let state = self.sim.state();
        let window = self.history.snapshot();
        let est = estimator.estimate(&window)?;
        let obs_norm = window.last().expect("history is never empty").clone();
        let actor_in = actor_input(&obs_norm, &est);
        let scan = sample_height_scan(state, self.sim.terrain());
        let phase = self.labeler.label(&self.events, state.time);
        Ok(critic_input(&actor_in, &state.trunk_vel, &scan, &state.foot_contact, &phase))
    }

    /// Labels, scores, and moves all pending steps into `out`, folding each
    /// step's weighted term values into `term_sums`.
    fn flush(
        &mut self,
        weights: &RewardWeights,
        out: &mut Vec<StepRecord>,
        term_sums: &mut BTreeMap<String, f64>,
    ) {
        for raw in self.pending.drain(..) {
            let phase_pre = self.labeler.label(&self.events, raw.pre_time);
            let phase_post = match raw.est_phase {
                Some(est) => est,
                None => self.labeler.label(&self.events, raw.post_time),
            };
            let input = RewardInput {
                cmd: self.cmd,
                trunk_vel: raw.reward_seed.trunk_vel,
                pitch: raw.reward_seed.pitch,
                pitch_rate: raw.reward_seed.pitch_rate,
                height: raw.reward_seed.height,
                tau: raw.reward_seed.tau,
                qd: raw.reward_seed.qd,
                qdd: raw.reward_seed.qdd,
                action: raw.reward_seed.action,
                prev_action: raw.reward_seed.prev_action,
                n_collision: raw.reward_seed.n_collision,
                foot_vel_z: raw.reward_seed.foot_vel_z,
                phase: phase_post,
            };
            let r = rewards::compute(&input, weights);
            for (name, value) in &r.terms {
                *term_sums.entry(name.clone()).or_insert(0.0) += value;
            }
            let critic_in = critic_input(
                &raw.actor_in,
                &raw.pre_vel,
                &raw.pre_scan,
                &raw.pre_contact,
                &phase_pre,
            );
            let est_sample = EstimatorSample {
                window: raw.window,
                next_obs: raw.next_obs_norm,
                vel: raw.pre_vel.to_vec(),
                scan: raw.pre_scan,
                phase: phase_pre.0.to_vec(),
            };
            out.push(StepRecord {
                actor_in: raw.actor_in,
                critic_in,
                action: raw.action,
                logp: raw.logp,
                reward: r.total,
                done: raw.done,
                fell: raw.fell,
                tracking: r.tracking,
                phase_term: r.phase,
                impact_v2: raw.impact_v2,
                beta: self.cmd.beta,
                vx_cmd: self.cmd.vx,
                est_sample,
            });
        }
    }
}

/// A set of independent environments stepped in parallel.
pub struct EnvPool {
    pub envs: Vec<EnvRunner>,
}

impl EnvPool {
    pub fn new(
        sim_cfg: SimConfig,
        terrain: &Terrain,
        rollout: &RolloutConfig,
        window: usize,
        seed: u64,
    ) -> Result<Self> {
        rollout.validate()?;
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let envs: Result<Vec<EnvRunner>> = (0..rollout.num_envs)
            .map(|_| {
                let s = seeder.random::<u64>();
                EnvRunner::new(
                    sim_cfg,
                    terrain.clone(),
                    window,
                    rollout.zero_command_prob,
                    rollout.reward_phase_source,
                    s,
                )
            })
            .collect();
        Ok(EnvPool { envs: envs? })
    }

    pub fn set_vx_range(&mut self, range: [f64; 2]) {
        for env in &mut self.envs {
            env.set_vx_range(range);
        }
    }

    /// Collects one slice from every environment in parallel. Output order
    /// is by environment index, so results are schedule-independent.
    pub fn collect(
        &mut self,
        rollout: &RolloutConfig,
        estimator: &Estimator,
        policy: &ActorCritic,
        weights: &RewardWeights,
    ) -> Result<Vec<EnvSlice>> {
        self.envs
            .par_iter_mut()
            .map(|env| {
                env.collect(rollout.horizon, rollout.max_episode_steps, estimator, policy, weights)
            })
            .collect()
    }
}
