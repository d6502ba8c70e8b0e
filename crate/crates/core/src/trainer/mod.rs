//! Training loop: parallel rollouts with hindsight labelling, advantage
//! estimation, clipped-surrogate policy updates, supervised estimator
//! updates, and a speed curriculum — all driven by one seed, so a run is
//! reproducible end to end.

pub mod curriculum;
pub mod gae;
pub mod ppo;
pub mod rollout;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{MaterialTable, SurfaceKind};
use crate::checkpoint::{self, CheckpointKind, CheckpointMeta};
use crate::nn::Adam;
use crate::phase::estimator::{
    draw_eps, Estimator, EstimatorConfig, EstimatorSample, LossBreakdown, LossWeights,
};
use crate::policy::{ActorCritic, PolicyConfig};
use crate::rewards::RewardWeights;
use crate::sim::{SimConfig, Terrain};
use crate::trainer::curriculum::{Curriculum, CurriculumConfig};
use crate::trainer::ppo::{PpoConfig, PpoSample, PpoStats};
use crate::trainer::rollout::{EnvPool, EnvSlice, RolloutConfig};
use crate::{Error, Result};

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub iterations: usize,
    pub seed: u64,
    pub sim: SimConfig,
    pub estimator: EstimatorConfig,
    pub policy: PolicyConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub rollout: RolloutConfig,
    pub curriculum: CurriculumConfig,
    pub est_lr: f64,
    pub est_minibatch: usize,
    /// Estimator minibatches per iteration.
    pub est_batches: usize,
    pub est_weights: LossWeights,
    /// Save a numbered checkpoint every N iterations (0 = final only).
    pub checkpoint_every: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        let mut sim = SimConfig::default();
        sim.domain_randomization = true;
        sim.push_randomization = true;
        TrainerConfig {
            iterations: 1000,
            seed: 1,
            sim,
            estimator: EstimatorConfig::default(),
            policy: PolicyConfig::default(),
            reward: RewardWeights::default(),
            ppo: PpoConfig::default(),
            rollout: RolloutConfig::default(),
            curriculum: CurriculumConfig::default(),
            est_lr: 1e-3,
            est_minibatch: 32,
            est_batches: 8,
            est_weights: LossWeights::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("need at least one training iteration"));
        }
        self.sim.validate()?;
        self.estimator.validate()?;
        self.policy.validate()?;
        self.ppo.validate()?;
        self.rollout.validate()?;
        self.curriculum.validate()?;
        if self.est_lr <= 0.0 || self.est_minibatch == 0 {
            return Err(Error::config("estimator learning settings must be positive"));
        }
        if self.estimator.latent != self.policy.latent
            || self.estimator.vel_dim != self.policy.vel_dim
            || self.estimator.scan_dim != self.policy.scan_dim
            || self.estimator.obs_dim != self.policy.obs_dim
        {
            return Err(Error::config("estimator and policy interface dimensions disagree"));
        }
        Ok(())
    }
}

/// Per-iteration log line (JSONL in `metrics.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_reward: f64,
    /// Mean unblended tracking-group reward per step.
    pub mean_tracking: f64,
    pub mean_phase_term: f64,
    /// Touchdown kinetic-energy proxy per simulated second.
    pub impact_v2_per_s: f64,
    pub falls: usize,
    pub episodes_ended: usize,
    pub curriculum_level: usize,
    pub vx_max: f64,
    pub ppo: PpoStats,
    pub estimator: LossBreakdown,
    /// Mean weighted value of every reward term per step.
    pub reward_terms: BTreeMap<String, f64>,
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub iterations_run: usize,
    pub final_checkpoint: PathBuf,
    pub deploy_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub last: IterationMetrics,
}

/// Trains from scratch, writing metrics and checkpoints under `out_dir`.
pub fn train(cfg: &TrainerConfig, out_dir: &Path) -> Result<TrainOutcome> {
    train_with_progress(cfg, out_dir, |_| {})
}

/// As [`train`], invoking `progress` after each iteration (CLI display).
pub fn train_with_progress(
    cfg: &TrainerConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&IterationMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut est_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut pol_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut ppo_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut batch_rng = ChaCha8Rng::seed_from_u64(master.random());
    let pool_seed: u64 = master.random();

    let mut estimator = Estimator::new(cfg.estimator, &mut est_rng)?;
    let mut policy = ActorCritic::new(cfg.policy, &mut pol_rng)?;
    let mut est_adam = Adam::new(&estimator.params, cfg.est_lr);
    let mut actor_adam = Adam::new(&policy.actor, cfg.ppo.actor_lr);
    let mut critic_adam = Adam::new(&policy.critic, cfg.ppo.critic_lr);

    let terrain = training_terrain();
    let mut pool = EnvPool::new(cfg.sim, &terrain, &cfg.rollout, cfg.estimator.window, pool_seed)?;
    let mut curriculum = Curriculum::new(cfg.curriculum.clone(), &cfg.reward)?;
    pool.set_vx_range(curriculum.vx_range());

    let metrics_path = out_dir.join("metrics.jsonl");
    let mut metrics_file = BufWriter::new(File::create(&metrics_path)?);
    let mut last_metrics: Option<IterationMetrics> = None;

    for iter in 0..cfg.iterations {
        let slices = pool.collect(&cfg.rollout, &estimator, &policy, &cfg.reward)?;
        let (mut ppo_samples, est_samples, summary) =
            assemble(&slices, &policy, &cfg.ppo, cfg.sim.control_dt)?;

        let ppo_stats = ppo::update(
            &mut policy,
            &mut ppo_samples,
            &cfg.ppo,
            &mut actor_adam,
            &mut critic_adam,
            &mut ppo_rng,
        )?;
        let est_losses = update_estimator(
            &mut estimator,
            &est_samples,
            cfg,
            &mut est_adam,
            &mut batch_rng,
        )?;

        if curriculum.observe(summary.mean_tracking) {
            pool.set_vx_range(curriculum.vx_range());
        }

        let metrics = IterationMetrics {
            iteration: iter,
            env_steps: summary.env_steps,
            mean_reward: summary.mean_reward,
            mean_tracking: summary.mean_tracking,
            mean_phase_term: summary.mean_phase_term,
            impact_v2_per_s: summary.impact_v2_per_s,
            falls: summary.falls,
            episodes_ended: summary.episodes_ended,
            curriculum_level: curriculum.level(),
            vx_max: curriculum.vx_range()[1],
            ppo: ppo_stats,
            estimator: est_losses,
            reward_terms: summary.reward_terms,
        };
        serde_json::to_writer(&mut metrics_file, &metrics)?;
        metrics_file.write_all(b"\n")?;
        metrics_file.flush()?;
        progress(&metrics);

        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            let path = out_dir.join(format!("checkpoint_{:06}.ck", iter + 1));
            save_training(&path, cfg, iter as u64 + 1, curriculum.level() as u64, &estimator, &policy)?;
        }
        last_metrics = Some(metrics);
    }

    let final_checkpoint = out_dir.join("checkpoint_final.ck");
    save_training(
        &final_checkpoint,
        cfg,
        cfg.iterations as u64,
        curriculum.level() as u64,
        &estimator,
        &policy,
    )?;
    let deploy_checkpoint = out_dir.join("policy_deploy.ck");
    let deploy_meta = CheckpointMeta {
        kind: CheckpointKind::Deploy,
        iteration: cfg.iterations as u64,
        seed: cfg.seed,
        curriculum_level: curriculum.level() as u64,
        sim: cfg.sim,
        estimator: cfg.estimator,
        policy: cfg.policy,
        reward: cfg.reward,
    };
    checkpoint::save(
        &deploy_checkpoint,
        &deploy_meta,
        &[("estimator", &estimator.params), ("actor", &policy.actor)],
    )?;

    Ok(TrainOutcome {
        iterations_run: cfg.iterations,
        final_checkpoint,
        deploy_checkpoint,
        metrics_path,
        last: last_metrics.expect("at least one iteration ran"),
    })
}

/// Flat wood: the training floor.
pub fn training_terrain() -> Terrain {
    Terrain::flat(MaterialTable::default().material(SurfaceKind::Wood))
}

/// Loads a trained policy + estimator pair from any checkpoint kind.
pub fn load_policy(path: &Path) -> Result<(CheckpointMeta, Estimator, ActorCritic)> {
    let (meta, mut sets) = checkpoint::load(path)?;
    let est_params = sets
        .remove("estimator")
        .ok_or_else(|| Error::Checkpoint("checkpoint has no estimator set".into()))?;
    let actor = sets
        .remove("actor")
        .ok_or_else(|| Error::Checkpoint("checkpoint has no actor set".into()))?;
    let estimator = Estimator::from_params(meta.estimator, est_params)?;
    let policy = match sets.remove("critic") {
        Some(critic) => ActorCritic::from_params(meta.policy, actor, critic)?,
        None => {
            // Deploy checkpoints carry no critic; rebuild a fresh one so the
            // struct is whole (only evaluation uses these, never the value).
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let fresh = ActorCritic::new(meta.policy, &mut rng)?;
            ActorCritic::from_params(meta.policy, actor, fresh.critic)?
        }
    };
    Ok((meta, estimator, policy))
}

fn save_training(
    path: &Path,
    cfg: &TrainerConfig,
    iteration: u64,
    level: u64,
    estimator: &Estimator,
    policy: &ActorCritic,
) -> Result<()> {
    let meta = CheckpointMeta {
        kind: CheckpointKind::Training,
        iteration,
        seed: cfg.seed,
        curriculum_level: level,
        sim: cfg.sim,
        estimator: cfg.estimator,
        policy: cfg.policy,
        reward: cfg.reward,
    };
    checkpoint::save(
        path,
        &meta,
        &[
            ("estimator", &estimator.params),
            ("actor", &policy.actor),
            ("critic", &policy.critic),
        ],
    )
}

/// Scalar rollout summary used for logging and the curriculum.
struct RolloutSummary {
    env_steps: usize,
    mean_reward: f64,
    mean_tracking: f64,
    mean_phase_term: f64,
    impact_v2_per_s: f64,
    falls: usize,
    episodes_ended: usize,
    reward_terms: BTreeMap<String, f64>,
}

/// Turns labelled slices into flat PPO samples (computing advantages) and
/// collects the estimator's supervised batch.
fn assemble(
    slices: &[EnvSlice],
    policy: &ActorCritic,
    ppo_cfg: &PpoConfig,
    control_dt: f64,
) -> Result<(Vec<PpoSample>, Vec<EstimatorSample>, RolloutSummary)> {
    // Values are a pure function of the critic, so this parallel map is
    // deterministic regardless of scheduling.
    let per_env: Vec<Result<(Vec<f64>, f64)>> = slices
        .par_iter()
        .map(|slice| {
            let values: Result<Vec<f64>> =
                slice.steps.iter().map(|s| policy.value(&s.critic_in)).collect();
            let bootstrap = policy.value(&slice.bootstrap_critic_in)?;
            Ok((values?, bootstrap))
        })
        .collect();

    let mut ppo_samples = Vec::new();
    let mut est_samples = Vec::new();
    let mut sum_reward = 0.0;
    let mut sum_tracking = 0.0;
    let mut sum_phase = 0.0;
    let mut sum_impact = 0.0;
    let mut falls = 0;
    let mut episodes_ended = 0;
    let mut env_steps = 0;
    let mut term_sums: BTreeMap<String, f64> = BTreeMap::new();

    for (slice, env_vals) in slices.iter().zip(per_env) {
        let (values, bootstrap) = env_vals?;
        for (name, value) in &slice.term_sums {
            *term_sums.entry(name.clone()).or_insert(0.0) += value;
        }
        let rewards: Vec<f64> = slice.steps.iter().map(|s| s.reward).collect();
        let dones: Vec<bool> = slice.steps.iter().map(|s| s.done).collect();
        let (adv, ret) =
            gae::gae(&rewards, &values, &dones, bootstrap, ppo_cfg.gamma, ppo_cfg.lam)?;
        for (i, step) in slice.steps.iter().enumerate() {
            ppo_samples.push(PpoSample {
                actor_in: step.actor_in.clone(),
                critic_in: step.critic_in.clone(),
                action: step.action.clone(),
                old_logp: step.logp,
                advantage: adv[i],
                value_target: ret[i],
            });
            est_samples.push(step.est_sample.clone());
            sum_reward += step.reward;
            sum_tracking += step.tracking;
            sum_phase += step.phase_term;
            sum_impact += step.impact_v2;
            falls += step.fell as usize;
            episodes_ended += step.done as usize;
            env_steps += 1;
        }
    }
    if env_steps == 0 {
        return Err(Error::invalid("rollout produced no steps"));
    }
    let n = env_steps as f64;
    for value in term_sums.values_mut() {
        *value /= n;
    }
    let summary = RolloutSummary {
        env_steps,
        mean_reward: sum_reward / n,
        mean_tracking: sum_tracking / n,
        mean_phase_term: sum_phase / n,
        impact_v2_per_s: sum_impact / (n * control_dt),
        falls,
        episodes_ended,
        reward_terms: term_sums,
    };
    Ok((ppo_samples, est_samples, summary))
}

/// Runs the configured number of supervised minibatches on the estimator.
fn update_estimator(
    estimator: &mut Estimator,
    samples: &[EstimatorSample],
    cfg: &TrainerConfig,
    adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    indices.shuffle(rng);
    let take = (cfg.est_minibatch * cfg.est_batches).min(samples.len());
    let mut acc = LossBreakdown::default();
    let mut batches = 0.0;
    for chunk in indices[..take].chunks(cfg.est_minibatch) {
        let batch: Vec<EstimatorSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
        let eps = draw_eps(rng, batch.len(), cfg.estimator.latent);
        let b = estimator.update(&batch, &eps, &cfg.est_weights, adam)?;
        acc.total += b.total;
        acc.est += b.est;
        acc.recon += b.recon;
        acc.kl += b.kl;
        acc.phase += b.phase;
        batches += 1.0;
    }
    if batches > 0.0 {
        acc.total /= batches;
        acc.est /= batches;
        acc.recon /= batches;
        acc.kl /= batches;
        acc.phase /= batches;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A deliberately tiny configuration for smoke tests.
    fn smoke_cfg() -> TrainerConfig {
        TrainerConfig {
            iterations: 2,
            seed: 11,
            estimator: EstimatorConfig {
                hidden: 8,
                latent: 4,
                head_hidden: 8,
                window: 4,
                ..EstimatorConfig::default()
            },
            policy: PolicyConfig { latent: 4, hidden: 16, ..PolicyConfig::default() },
            rollout: RolloutConfig { num_envs: 2, horizon: 10, ..RolloutConfig::default() },
            ppo: PpoConfig { epochs: 2, minibatches: 2, ..PpoConfig::default() },
            est_minibatch: 8,
            est_batches: 1,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn two_iterations_produce_metrics_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_cfg();
        let out = train(&cfg, dir.path()).unwrap();
        assert_eq!(out.iterations_run, 2);
        assert!(out.final_checkpoint.exists());
        assert!(out.deploy_checkpoint.exists());
        let lines: Vec<String> = std::fs::read_to_string(&out.metrics_path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        assert_eq!(lines.len(), 2);
        let m: IterationMetrics = serde_json::from_str(&lines[1]).unwrap();
        assert_eq!(m.iteration, 1);
        assert!(m.mean_reward.is_finite());
        assert_eq!(m.env_steps, 20);
        // Every reward term is logged, and their group sums reproduce the
        // unblended means.
        for key in ["lin_tracking", "ang_tracking", "phase_drop", "phase_raise", "joint_power"] {
            assert!(m.reward_terms.contains_key(key), "missing term {key}");
        }
        let phase_sum = m.reward_terms["phase_drop"] + m.reward_terms["phase_raise"];
        assert!((phase_sum - m.mean_phase_term).abs() < 1e-9);

        // The saved policy loads back and acts.
        let (meta, est, pol) = load_policy(&out.deploy_checkpoint).unwrap();
        assert_eq!(meta.kind, CheckpointKind::Deploy);
        let window = vec![vec![0.0; cfg.estimator.obs_dim]; cfg.estimator.window];
        let e = est.estimate(&window).unwrap();
        let x = crate::policy::actor_input(&window[0], &e);
        pol.actor_mean(&x).unwrap();
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let cfg = smoke_cfg();
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            let out = train(&cfg, dir.path()).unwrap();
            let metrics = std::fs::read_to_string(&out.metrics_path).unwrap();
            let ck = std::fs::read(&out.final_checkpoint).unwrap();
            (metrics, ck)
        };
        let (m1, c1) = run();
        let (m2, c2) = run();
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn interface_dimension_mismatch_is_rejected() {
        let mut cfg = smoke_cfg();
        cfg.policy.latent = 5;
        assert!(train(&cfg, Path::new("/nonexistent")).is_err());
    }
}
