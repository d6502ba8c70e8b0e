//! Clipped-surrogate policy optimization on the reverse-mode tape.
//!
//! Actor and critic are optimized separately (the critic sees privileged
//! input, so they share no parameters). Each minibatch builds one tape:
//! per-sample probability ratios feed the clipped surrogate, the shared
//! state-independent Gaussian entropy is added once, and gradients flow
//! through `backward` into the parameter sets.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Tape, Var};
use crate::policy::ActorCritic;
use crate::trainer::gae::normalize_advantages;
use crate::{Error, Result};

/// Optimization hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Global gradient-norm ceiling (0 disables).
    pub max_grad_norm: f64,
    /// Advisory threshold: mean KL above this is reported as a drift flag.
    pub kl_warn: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            entropy_coef: 0.005,
            epochs: 5,
            minibatches: 4,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            max_grad_norm: 1.0,
            kl_warn: 0.05,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lam) {
            return Err(Error::config("discount factors must lie in [0, 1]"));
        }
        if self.clip <= 0.0 || self.epochs == 0 || self.minibatches == 0 {
            return Err(Error::config("clip must be positive and epoch counts nonzero"));
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return Err(Error::config("learning rates must be positive"));
        }
        Ok(())
    }
}

/// One flattened training sample.
#[derive(Debug, Clone)]
pub struct PpoSample {
    pub actor_in: Vec<f64>,
    pub critic_in: Vec<f64>,
    pub action: Vec<f64>,
    pub old_logp: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Aggregate statistics over one update (all epochs).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of samples whose ratio left the clip interval.
    pub clip_fraction: f64,
    /// Mean of `old_logp − new_logp` (a cheap KL proxy).
    pub approx_kl: f64,
    /// True when `approx_kl` exceeded the advisory threshold.
    pub kl_drift: bool,
}

/// Runs the full PPO update (epochs × minibatches) in place.
pub fn update(
    policy: &mut ActorCritic,
    samples: &mut [PpoSample],
    cfg: &PpoConfig,
    actor_adam: &mut Adam,
    critic_adam: &mut Adam,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("ppo update needs at least one sample"));
    }
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    normalize_advantages(&mut adv);
    for (s, a) in samples.iter_mut().zip(&adv) {
        s.advantage = *a;
    }

    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut stat_actor = 0.0;
    let mut stat_value = 0.0;
    let mut stat_entropy = 0.0;
    let mut stat_clip = 0.0;
    let mut stat_kl = 0.0;
    let mut batches = 0.0;

    for _ in 0..cfg.epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(samples.len().div_ceil(cfg.minibatches)) {
            let (al, ent, clip_frac, kl) =
                actor_minibatch(policy, samples, chunk, cfg, actor_adam)?;
            let vl = critic_minibatch(policy, samples, chunk, cfg, critic_adam)?;
            stat_actor += al;
            stat_value += vl;
            stat_entropy += ent;
            stat_clip += clip_frac;
            stat_kl += kl;
            batches += 1.0;
        }
    }
    let approx_kl = stat_kl / batches;
    Ok(PpoStats {
        actor_loss: stat_actor / batches,
        value_loss: stat_value / batches,
        entropy: stat_entropy / batches,
        clip_fraction: stat_clip / batches,
        approx_kl,
        kl_drift: approx_kl > cfg.kl_warn,
    })
}

/// Builds the clipped-surrogate graph for one minibatch and steps the
/// actor. Returns `(loss, entropy, clip_fraction, approx_kl)`.
/// Per-minibatch actor statistics measured while building the loss graph.
#[derive(Debug, Clone, Copy)]
pub struct ActorBatchStats {
    /// Policy entropy (nats).
    pub entropy: f64,
    /// Fraction of samples whose probability ratio left the clip interval.
    pub clip_fraction: f64,
    /// Mean `old_logp − logp`, a cheap KL-divergence proxy.
    pub approx_kl: f64,
}

/// Builds the clipped-surrogate actor loss (negated objective plus entropy
/// bonus, so lower is better) for the selected samples on `tape`.
///
/// `bound` must come from [`ActorCritic::bind_actor`] on the same tape.
pub fn actor_loss_graph(
    tape: &mut Tape,
    bound: &[Var],
    policy: &ActorCritic,
    samples: &[PpoSample],
    idx: &[usize],
    cfg: &PpoConfig,
) -> (Var, ActorBatchStats) {
    let log_std = policy.log_std_tape(tape, bound);
    let mut objectives: Vec<Var> = Vec::with_capacity(idx.len());
    let mut clipped = 0usize;
    let mut kl_sum = 0.0;
    for &i in idx {
        let s = &samples[i];
        let mu = policy.actor_mean_tape(tape, bound, &s.actor_in);
        let logp = ActorCritic::logp_tape(tape, mu, log_std, &s.action);
        let shifted = tape.offset(logp, -s.old_logp);
        let ratio = tape.exp(shifted);
        let r_val = tape.scalar_value(ratio);
        if (r_val - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        kl_sum += s.old_logp - tape.scalar_value(logp);
        let surr1 = tape.scale(ratio, s.advantage);
        let ratio_clip = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        let surr2 = tape.scale(ratio_clip, s.advantage);
        objectives.push(tape.min_pair(surr1, surr2));
    }
    let cat = tape.concat(&objectives);
    let mean_obj = tape.mean(cat);
    let entropy = policy.entropy_tape(tape, log_std);
    let ent_term = tape.scale(entropy, cfg.entropy_coef);
    let gain = tape.add(mean_obj, ent_term);
    // Minimize the negative objective.
    let loss = tape.scale(gain, -1.0);
    let stats = ActorBatchStats {
        entropy: tape.scalar_value(entropy),
        clip_fraction: clipped as f64 / idx.len().max(1) as f64,
        approx_kl: kl_sum / idx.len().max(1) as f64,
    };
    (loss, stats)
}

/// Builds the mean-squared value-regression loss for the selected samples.
///
/// `bound` must come from [`ActorCritic::bind_critic`] on the same tape.
pub fn critic_loss_graph(
    tape: &mut Tape,
    bound: &[Var],
    policy: &ActorCritic,
    samples: &[PpoSample],
    idx: &[usize],
) -> Var {
    let mut preds: Vec<Var> = Vec::with_capacity(idx.len());
    let targets: Vec<f64> = idx.iter().map(|&i| samples[i].value_target).collect();
    for &i in idx {
        preds.push(policy.value_tape(tape, bound, &samples[i].critic_in));
    }
    let cat = tape.concat(&preds);
    tape.mse(cat, &targets)
}

fn actor_minibatch(
    policy: &mut ActorCritic,
    samples: &[PpoSample],
    idx: &[usize],
    cfg: &PpoConfig,
    adam: &mut Adam,
) -> Result<(f64, f64, f64, f64)> {
    let mut tape = Tape::new();
    let bound = policy.bind_actor(&mut tape);
    let (loss, stats) = actor_loss_graph(&mut tape, &bound, policy, samples, idx, cfg);
    let loss_val = tape.scalar_value(loss);
    if !loss_val.is_finite() {
        return Err(Error::Numeric("actor loss is not finite".into()));
    }
    policy.actor.zero_grads();
    tape.backward(loss);
    tape.accumulate_param_grads(&mut policy.actor);
    clip_grad_norm(&mut policy.actor, cfg.max_grad_norm);
    adam.step(&mut policy.actor)?;
    Ok((loss_val, stats.entropy, stats.clip_fraction, stats.approx_kl))
}

/// Mean-squared value regression for one minibatch.
fn critic_minibatch(
    policy: &mut ActorCritic,
    samples: &[PpoSample],
    idx: &[usize],
    cfg: &PpoConfig,
    adam: &mut Adam,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = policy.bind_critic(&mut tape);
    let loss = critic_loss_graph(&mut tape, &bound, policy, samples, idx);
    let loss_val = tape.scalar_value(loss);
    if !loss_val.is_finite() {
        return Err(Error::Numeric("value loss is not finite".into()));
    }
    policy.critic.zero_grads();
    tape.backward(loss);
    tape.accumulate_param_grads(&mut policy.critic);
    clip_grad_norm(&mut policy.critic, cfg.max_grad_norm);
    adam.step(&mut policy.critic)?;
    Ok(loss_val)
}

fn clip_grad_norm(params: &mut crate::nn::ParamSet, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = params.grad_norm();
    if norm > max_norm {
        params.scale_grads(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyConfig;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_policy(rng: &mut ChaCha8Rng) -> ActorCritic {
        let cfg = PolicyConfig {
            obs_dim: 4,
            vel_dim: 2,
            scan_dim: 3,
            latent: 2,
            num_legs: 4,
            act_dim: 2,
            hidden: 6,
            ..PolicyConfig::default()
        };
        let mut ac = ActorCritic::new(cfg, rng).unwrap();
        // Non-zero output head so gradients reach every layer.
        for idx in [4, 5] {
            for v in &mut ac.actor.at_mut(idx).values {
                *v = rng.random_range(-0.3..0.3);
            }
            for v in &mut ac.critic.at_mut(idx).values {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        ac
    }

    fn random_samples(ac: &ActorCritic, n: usize, rng: &mut ChaCha8Rng) -> Vec<PpoSample> {
        (0..n)
            .map(|_| {
                let actor_in: Vec<f64> =
                    (0..ac.cfg.actor_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let critic_in: Vec<f64> =
                    (0..ac.cfg.critic_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let action: Vec<f64> =
                    (0..ac.cfg.act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                // Offset old_logp from the current value so ratios start
                // away from the clip kinks.
                let old_logp = ac.action_logp(&actor_in, &action).unwrap()
                    + rng.random_range(-0.05..0.05);
                PpoSample {
                    actor_in,
                    critic_in,
                    action,
                    old_logp,
                    advantage: rng.random_range(-1.0..1.0),
                    value_target: rng.random_range(-1.0..1.0),
                }
            })
            .collect()
    }

    /// The actor minibatch gradient must match finite differences of the
    /// clipped-surrogate loss evaluated without the tape.
    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut ac = tiny_policy(&mut rng);
        let samples = random_samples(&ac, 6, &mut rng);
        let idx: Vec<usize> = (0..samples.len()).collect();
        let cfg = PpoConfig::default();

        // Plain re-computation of the loss for the FD baseline.
        let eval_loss = |ac: &ActorCritic| -> f64 {
            let mut obj = 0.0;
            for s in &samples {
                let logp = ac.action_logp(&s.actor_in, &s.action).unwrap();
                let ratio = (logp - s.old_logp).exp();
                let surr1 = ratio * s.advantage;
                let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * s.advantage;
                obj += surr1.min(surr2);
            }
            obj /= samples.len() as f64;
            let ent: f64 = ac.log_std().iter().sum::<f64>()
                + 0.5 * ac.cfg.act_dim as f64 * (1.0 + crate::policy::LN_2PI);
            -(obj + cfg.entropy_coef * ent)
        };

        // Build the graph exactly as the update does, but skip the step.
        let mut tape = Tape::new();
        let bound = ac.bind_actor(&mut tape);
        let log_std = ac.log_std_tape(&mut tape, &bound);
        let mut objectives = Vec::new();
        for s in &samples {
            let mu = ac.actor_mean_tape(&mut tape, &bound, &s.actor_in);
            let logp = ActorCritic::logp_tape(&mut tape, mu, log_std, &s.action);
            let shifted = tape.offset(logp, -s.old_logp);
            let ratio = tape.exp(shifted);
            let surr1 = tape.scale(ratio, s.advantage);
            let rclip = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            let surr2 = tape.scale(rclip, s.advantage);
            objectives.push(tape.min_pair(surr1, surr2));
        }
        let cat = tape.concat(&objectives);
        let mean_obj = tape.mean(cat);
        let entropy = ac.entropy_tape(&mut tape, log_std);
        let ent_term = tape.scale(entropy, cfg.entropy_coef);
        let gain = tape.add(mean_obj, ent_term);
        let loss = tape.scale(gain, -1.0);
        assert_relative_eq!(tape.scalar_value(loss), eval_loss(&ac), epsilon = 1e-10);

        ac.actor.zero_grads();
        tape.backward(loss);
        tape.accumulate_param_grads(&mut ac.actor);

        let h = 1e-6;
        for pidx in 0..ac.actor.len() {
            let n = ac.actor.at(pidx).len();
            for i in (0..n).step_by(n.div_ceil(3).max(1)) {
                let orig = ac.actor.at(pidx).values[i];
                ac.actor.at_mut(pidx).values[i] = orig + h;
                let up = eval_loss(&ac);
                ac.actor.at_mut(pidx).values[i] = orig - h;
                let dn = eval_loss(&ac);
                ac.actor.at_mut(pidx).values[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = ac.actor.at(pidx).grad[i];
                assert!(
                    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-3,
                    "array {pidx} elem {i}: analytic {an:.8e} vs fd {fd:.8e}"
                );
            }
        }
        let _ = idx;
    }

    #[test]
    fn update_improves_the_surrogate_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut ac = tiny_policy(&mut rng);
        let mut samples = random_samples(&ac, 32, &mut rng);
        let cfg = PpoConfig { epochs: 3, minibatches: 2, ..PpoConfig::default() };
        let mut a_adam = Adam::new(&ac.actor, cfg.actor_lr);
        let mut c_adam = Adam::new(&ac.critic, cfg.critic_lr);

        // Value regression target: measure before/after.
        let value_mse = |ac: &ActorCritic, ss: &[PpoSample]| -> f64 {
            ss.iter()
                .map(|s| {
                    let v = ac.value(&s.critic_in).unwrap();
                    (v - s.value_target) * (v - s.value_target)
                })
                .sum::<f64>()
                / ss.len() as f64
        };
        let before = value_mse(&ac, &samples);
        let stats = update(&mut ac, &mut samples, &cfg, &mut a_adam, &mut c_adam, &mut rng).unwrap();
        let after = value_mse(&ac, &samples);
        assert!(after < before, "value mse {before:.4} → {after:.4}");
        assert!(stats.actor_loss.is_finite());
        assert!(stats.clip_fraction >= 0.0 && stats.clip_fraction <= 1.0);
    }

    #[test]
    fn update_is_deterministic_for_a_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ac0 = tiny_policy(&mut rng);
        let samples0 = random_samples(&ac0, 16, &mut rng);
        let cfg = PpoConfig { epochs: 2, minibatches: 2, ..PpoConfig::default() };

        let run = |mut ac: ActorCritic, mut samples: Vec<PpoSample>| -> (Vec<f64>, PpoStats) {
            let mut a = Adam::new(&ac.actor, cfg.actor_lr);
            let mut c = Adam::new(&ac.critic, cfg.critic_lr);
            let mut r = ChaCha8Rng::seed_from_u64(77);
            let stats = update(&mut ac, &mut samples, &cfg, &mut a, &mut c, &mut r).unwrap();
            (ac.actor.at(0).values.clone(), stats)
        };
        let (w1, s1) = run(ac0.clone(), samples0.clone());
        let (w2, s2) = run(ac0, samples0);
        assert_eq!(w1, w2);
        assert_eq!(s1, s2);
    }
}
