//! Self-contained runtime verification of the numerical core.
//!
//! Every check pits the production implementation against an independent
//! reference: central finite differences for tape gradients, Monte-Carlo
//! estimates for the closed-form divergence, nested-sum definitions for
//! advantage estimation, direct per-term formulas for rewards, brute-force
//! summation for trace synthesis, and hand-computed values for phase labels
//! and loudness identities. Each outcome reports its tolerance and the worst
//! observed deviation so a regression is visible at a glance. The suite is
//! deterministic for a given seed and finishes in a few seconds.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acoustics::{
    impact_pressure, level_at_distance, power_sum, pressure_from_level, sound_pressure_level,
    synthesize_trace, AcousticConfig, Impact, MaterialTable, SurfaceKind, P_REF,
};
use crate::checkpoint::{self, CheckpointKind, CheckpointMeta};
use crate::nn::{ParamSet, Tape};
use crate::phase::estimator::{
    draw_eps, kl_standard_normal, Estimator, EstimatorConfig, EstimatorSample, LossWeights,
};
use crate::phase::PhaseLabeler;
use crate::phase::PhaseVector;
use crate::policy::{ActMode, ActorCritic, PolicyConfig};
use crate::rewards::{self, RewardInput, RewardWeights};
use crate::sim::{Command, ContactEvent, EventKind, SimConfig, NUM_JOINTS, NUM_LEGS};
use crate::trainer::gae::gae;
use crate::trainer::ppo::{actor_loss_graph, critic_loss_graph, PpoConfig, PpoSample};
use crate::{Error, Result};

/// Result of one named consistency check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Largest deviation the check accepts.
    pub tolerance: f64,
    /// Worst deviation actually measured.
    pub observed: f64,
    pub passed: bool,
    /// What was compared and how the deviation is measured.
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, tolerance: f64, observed: f64, detail: impl Into<String>) -> Self {
        // A NaN deviation means the comparison itself broke down: fail.
        let passed = observed <= tolerance;
        CheckOutcome { name: name.into(), tolerance, observed, passed, detail: detail.into() }
    }
}

/// All outcomes from one run of the suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub checks: Vec<CheckOutcome>,
    pub elapsed_s: f64,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Plain-text table, one line per check plus a summary line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{status}  {:<34} tolerance {:>9.2e}  observed {:>10.3e}  {}",
                c.name, c.tolerance, c.observed, c.detail
            );
        }
        let n_pass = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(
            out,
            "{n_pass}/{} checks passed in {:.2} s",
            self.checks.len(),
            self.elapsed_s
        );
        out
    }
}

/// Knobs for [`run_checks`].
#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seed: u64,
    /// Deliberately perturb one reward weight before comparing against the
    /// reference formulas. The reward check must then fail; this proves the
    /// oracle actually has teeth.
    pub mutate_reward: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { seed: 2024, mutate_reward: false }
    }
}

/// Runs every consistency check. Failures are reported in the returned
/// [`CheckReport`], not as errors; `Err` means a check could not even run.
pub fn run_checks(opts: &CheckOptions) -> Result<CheckReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();
    checks.push(estimator_gradients(&mut rng)?);
    checks.push(actor_gradients(&mut rng)?);
    checks.push(critic_gradients(&mut rng)?);
    checks.push(kl_monte_carlo(&mut rng)?);
    checks.push(gae_nested_sum(&mut rng)?);
    checks.push(reward_formulas(&mut rng, opts.mutate_reward)?);
    checks.extend(loudness_identities(&mut rng)?);
    checks.push(silence_floor()?);
    checks.push(trace_brute_force(&mut rng)?);
    checks.push(phase_label_exactness()?);
    checks.push(checkpoint_roundtrip(&mut rng, opts.seed)?);
    Ok(CheckReport { checks, elapsed_s: start.elapsed().as_secs_f64() })
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

fn gauss_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            x * scale
        })
        .collect()
}

/// Up to `k` distinct coordinates of an array of length `len`.
fn sample_coords(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<usize> {
    let mut coords: Vec<usize> = Vec::new();
    let mut guard = 0;
    while coords.len() < k.min(len) && guard < 100 {
        let c = rng.random_range(0..len);
        if !coords.contains(&c) {
            coords.push(c);
        }
        guard += 1;
    }
    coords
}

const FD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn random_estimator_sample(cfg: &EstimatorConfig, rng: &mut ChaCha8Rng) -> EstimatorSample {
    EstimatorSample {
        window: (0..cfg.window).map(|_| gauss_vec(rng, cfg.obs_dim, 0.5)).collect(),
        next_obs: gauss_vec(rng, cfg.obs_dim, 0.5),
        vel: gauss_vec(rng, cfg.vel_dim, 0.5),
        scan: gauss_vec(rng, cfg.scan_dim, 0.2),
        phase: (0..cfg.num_legs).map(|_| rng.random_range(0.05..0.95)).collect(),
    }
}

/// Reverse-mode gradients of the full estimator loss versus central finite
/// differences of the same loss evaluated as a pure function of the weights.
fn estimator_gradients(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let cfg = EstimatorConfig {
        obs_dim: 10,
        hidden: 8,
        latent: 4,
        vel_dim: 2,
        scan_dim: 5,
        num_legs: NUM_LEGS,
        head_hidden: 8,
        window: 4,
    };
    let mut est = Estimator::new(cfg, rng)?;
    let batch: Vec<EstimatorSample> =
        (0..4).map(|_| random_estimator_sample(&cfg, rng)).collect();
    let eps = draw_eps(rng, batch.len(), cfg.latent);
    let w = LossWeights::default();

    est.params.zero_grads();
    let mut tape = Tape::new();
    let (total, _) = est.loss_graph(&mut tape, &batch, &eps, &w)?;
    tape.backward(total);
    tape.accumulate_param_grads(&mut est.params);
    let grads: Vec<Vec<f64>> = est.params.iter().map(|a| a.grad.clone()).collect();

    let mut worst: f64 = 0.0;
    let mut n_coords = 0;
    for a in 0..est.params.len() {
        let len = est.params.at(a).values.len();
        for c in sample_coords(rng, len, 3) {
            let orig = est.params.at(a).values[c];
            est.params.at_mut(a).values[c] = orig + FD_STEP;
            let up = est.eval_loss(&batch, &eps, &w)?.total;
            est.params.at_mut(a).values[c] = orig - FD_STEP;
            let dn = est.eval_loss(&batch, &eps, &w)?.total;
            est.params.at_mut(a).values[c] = orig;
            let fd = (up - dn) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[a][c], fd));
            n_coords += 1;
        }
    }
    Ok(CheckOutcome::new(
        "estimator_loss_gradients",
        GRAD_TOL,
        worst,
        format!("worst relative error over {n_coords} sampled weight coordinates"),
    ))
}

fn small_policy(rng: &mut ChaCha8Rng) -> Result<(ActorCritic, PolicyConfig)> {
    let cfg = PolicyConfig {
        obs_dim: 6,
        scan_dim: 3,
        latent: 2,
        act_dim: 4,
        hidden: 8,
        ..PolicyConfig::default()
    };
    Ok((ActorCritic::new(cfg, rng)?, cfg))
}

fn random_ppo_samples(
    policy: &ActorCritic,
    cfg: &PolicyConfig,
    rng: &mut ChaCha8Rng,
    n: usize,
) -> Result<Vec<PpoSample>> {
    (0..n)
        .map(|_| {
            let x = gauss_vec(rng, cfg.actor_in(), 0.6);
            let s = policy.act(&x, ActMode::Sample, rng)?;
            // Jitter the stored log-probability so the importance ratio is
            // not exactly 1 but stays far inside the clip interval, where
            // the surrogate is smooth.
            let jitter = rng.random_range(-0.05..0.05);
            let adv: f64 = StandardNormal.sample(rng);
            let vt: f64 = StandardNormal.sample(rng);
            Ok(PpoSample {
                actor_in: x,
                critic_in: gauss_vec(rng, cfg.critic_in(), 0.6),
                action: s.action,
                old_logp: s.logp + jitter,
                advantage: adv,
                value_target: vt,
            })
        })
        .collect()
}

/// Reverse-mode gradients of the clipped-surrogate actor loss versus central
/// finite differences, with ratios kept inside the clip interval so the loss
/// is differentiable at the evaluation point.
fn actor_gradients(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let (mut policy, cfg) = small_policy(rng)?;
    let samples = random_ppo_samples(&policy, &cfg, rng, 6)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let pp = PpoConfig::default();

    policy.actor.zero_grads();
    let mut tape = Tape::new();
    let bound = policy.bind_actor(&mut tape);
    let (loss, _) = actor_loss_graph(&mut tape, &bound, &policy, &samples, &idx, &pp);
    tape.backward(loss);
    tape.accumulate_param_grads(&mut policy.actor);
    let grads: Vec<Vec<f64>> = policy.actor.iter().map(|a| a.grad.clone()).collect();

    let eval = |policy: &ActorCritic| -> f64 {
        let mut t = Tape::new();
        let b = policy.bind_actor(&mut t);
        let (l, _) = actor_loss_graph(&mut t, &b, policy, &samples, &idx, &pp);
        t.scalar_value(l)
    };

    let mut worst: f64 = 0.0;
    let mut n_coords = 0;
    for a in 0..policy.actor.len() {
        let len = policy.actor.at(a).values.len();
        for c in sample_coords(rng, len, 3) {
            let orig = policy.actor.at(a).values[c];
            policy.actor.at_mut(a).values[c] = orig + FD_STEP;
            let up = eval(&policy);
            policy.actor.at_mut(a).values[c] = orig - FD_STEP;
            let dn = eval(&policy);
            policy.actor.at_mut(a).values[c] = orig;
            let fd = (up - dn) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[a][c], fd));
            n_coords += 1;
        }
    }
    Ok(CheckOutcome::new(
        "actor_surrogate_gradients",
        GRAD_TOL,
        worst,
        format!("worst relative error over {n_coords} sampled weight coordinates"),
    ))
}

/// Reverse-mode gradients of the critic regression loss versus central
/// finite differences.
fn critic_gradients(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let (mut policy, cfg) = small_policy(rng)?;
    let samples = random_ppo_samples(&policy, &cfg, rng, 6)?;
    let idx: Vec<usize> = (0..samples.len()).collect();

    policy.critic.zero_grads();
    let mut tape = Tape::new();
    let bound = policy.bind_critic(&mut tape);
    let loss = critic_loss_graph(&mut tape, &bound, &policy, &samples, &idx);
    tape.backward(loss);
    tape.accumulate_param_grads(&mut policy.critic);
    let grads: Vec<Vec<f64>> = policy.critic.iter().map(|a| a.grad.clone()).collect();

    let eval = |policy: &ActorCritic| -> f64 {
        let mut t = Tape::new();
        let b = policy.bind_critic(&mut t);
        let l = critic_loss_graph(&mut t, &b, policy, &samples, &idx);
        t.scalar_value(l)
    };

    let mut worst: f64 = 0.0;
    let mut n_coords = 0;
    for a in 0..policy.critic.len() {
        let len = policy.critic.at(a).values.len();
        for c in sample_coords(rng, len, 3) {
            let orig = policy.critic.at(a).values[c];
            policy.critic.at_mut(a).values[c] = orig + FD_STEP;
            let up = eval(&policy);
            policy.critic.at_mut(a).values[c] = orig - FD_STEP;
            let dn = eval(&policy);
            policy.critic.at_mut(a).values[c] = orig;
            let fd = (up - dn) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(grads[a][c], fd));
            n_coords += 1;
        }
    }
    Ok(CheckOutcome::new(
        "critic_value_gradients",
        GRAD_TOL,
        worst,
        format!("worst relative error over {n_coords} sampled weight coordinates"),
    ))
}

/// Closed-form diagonal-Gaussian-to-standard-normal divergence versus a
/// Monte-Carlo estimate of `E[log q(z) − log p(z)]` under `z ~ q`.
fn kl_monte_carlo(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let dim = 8;
    let n = 100_000;
    let trials = 5;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mu: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let logvar: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..0.5)).collect();
        let closed = kl_standard_normal(&mu, &logvar);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let mut term = 0.0;
            for d in 0..dim {
                let e: f64 = StandardNormal.sample(rng);
                let z = mu[d] + (0.5 * logvar[d]).exp() * e;
                // log q(z) − log p(z); the 2π constants cancel.
                term += 0.5 * (z * z - e * e - logvar[d]);
            }
            sum += term;
            sumsq += term * term;
        }
        let mc = sum / n as f64;
        let var = (sumsq / n as f64 - mc * mc).max(0.0);
        let se = (var / n as f64).sqrt().max(1e-12);
        worst = worst.max((mc - closed).abs() / (3.0 * se));
    }
    Ok(CheckOutcome::new(
        "kl_closed_form_vs_monte_carlo",
        1.0,
        worst,
        format!("worst |MC − closed| over {trials} trials, in units of 3 standard errors at n={n}"),
    ))
}

/// Backward-recursive advantage estimator versus the O(T²) nested-sum
/// definition with episode-boundary masking.
fn gae_nested_sum(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let t_max = 40;
    let gamma = 0.99;
    let lam = 0.95;
    let rewards: Vec<f64> = (0..t_max).map(|_| rng.random_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..t_max).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bootstrap = rng.random_range(-1.0..1.0);
    let mut dones: Vec<bool> = (0..t_max).map(|_| rng.random_bool(0.15)).collect();
    // Guarantee an interior episode cut and a bootstrapped open tail.
    dones[13] = true;
    dones[t_max - 1] = false;

    let (adv, ret) = gae(&rewards, &values, &dones, bootstrap, gamma, lam)?;

    let mut worst: f64 = 0.0;
    for t in 0..t_max {
        let mut a = 0.0;
        let mut w = 1.0;
        for l in t..t_max {
            let next_v = if l + 1 < t_max { values[l + 1] } else { bootstrap };
            let mask = if dones[l] { 0.0 } else { 1.0 };
            let delta = rewards[l] + gamma * next_v * mask - values[l];
            a += w * delta;
            if dones[l] {
                break;
            }
            w *= gamma * lam;
        }
        worst = worst.max((adv[t] - a).abs());
        worst = worst.max((ret[t] - (a + values[t])).abs());
    }
    Ok(CheckOutcome::new(
        "advantage_nested_sum",
        1e-10,
        worst,
        format!("worst |recursive − nested sum| over {t_max} steps with episode cuts"),
    ))
}

/// Direct transliteration of every reward term, written independently of the
/// production code path.
fn reward_total_reference(i: &RewardInput, w: &RewardWeights) -> f64 {
    let e_v = i.cmd.vx - i.trunk_vel[0];
    let e_w = i.cmd.pitch_rate - i.pitch_rate;
    let tracking = w.lin_tracking * (-w.tracking_sharpness * e_v * e_v).exp()
        + w.ang_tracking * (-w.tracking_sharpness * e_w * e_w).exp();

    let mut phase = 0.0;
    for leg in 0..NUM_LEGS {
        let phi = i.phase.0[leg];
        let vz = i.foot_vel_z[leg];
        if vz < 0.0 {
            phase += w.phase_drop * phi.exp() * vz * vz;
        } else {
            phase += w.phase_raise * (-phi).exp() * vz * vz;
        }
    }

    let mut other = w.lin_vel_z * i.trunk_vel[1] * i.trunk_vel[1];
    other += w.ang_vel_xy * i.pitch_rate * i.pitch_rate;
    let mut power = 0.0;
    let mut accel = 0.0;
    let mut rate = 0.0;
    for j in 0..NUM_JOINTS {
        power += i.tau[j].abs() * i.qd[j].abs();
        accel += i.qdd[j] * i.qdd[j];
        let d = i.action[j] - i.prev_action[j];
        rate += d * d;
    }
    other += w.joint_power * power + w.joint_accel * accel + w.action_rate * rate;
    other += w.collision * i.n_collision as f64;
    let h_err = w.target_height - i.height;
    other += w.body_height * h_err * h_err;
    other += w.orientation * i.pitch.sin().powi(2);

    i.cmd.beta * phase + (1.0 - w.quiet_tradeoff * i.cmd.beta) * tracking + other
}

fn random_reward_input(rng: &mut ChaCha8Rng) -> Result<RewardInput> {
    let mut arr8 = |span: f64| {
        let mut a = [0.0; NUM_JOINTS];
        for v in &mut a {
            *v = rng.random_range(-span..span);
        }
        a
    };
    let tau = arr8(3.0);
    let qd = arr8(3.0);
    let qdd = arr8(300.0);
    let action = arr8(3.0);
    let prev_action = arr8(3.0);
    let mut foot_vel_z = [0.0; NUM_LEGS];
    let mut phase = [0.0; NUM_LEGS];
    for leg in 0..NUM_LEGS {
        foot_vel_z[leg] = rng.random_range(-1.0..1.0);
        phase[leg] = rng.random_range(0.0..1.0);
    }
    Ok(RewardInput {
        cmd: Command::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.5..0.5),
            rng.random_range(0.0..1.0),
        )?,
        trunk_vel: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        pitch: rng.random_range(-0.3..0.3),
        pitch_rate: rng.random_range(-1.0..1.0),
        height: rng.random_range(0.2..0.4),
        tau,
        qd,
        qdd,
        action,
        prev_action,
        n_collision: rng.random_range(0..3),
        foot_vel_z,
        phase: PhaseVector(phase),
    })
}

/// Production reward totals versus the independent term-by-term reference on
/// random inputs. With `mutate` set, one weight fed to the production path is
/// perturbed by 1% while the reference keeps the original, so this check must
/// report a failure — proving the comparison is not vacuous.
fn reward_formulas(rng: &mut ChaCha8Rng, mutate: bool) -> Result<CheckOutcome> {
    let w = RewardWeights::default();
    let mut w_used = w.clone();
    if mutate {
        w_used.phase_drop *= 1.01;
    }
    let n = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let input = random_reward_input(rng)?;
        let b = rewards::compute(&input, &w_used);
        let want = reward_total_reference(&input, &w);
        worst = worst.max((b.total - want).abs());
        // The blend of the reported groups must reproduce the total.
        let blend = input.cmd.beta * b.phase
            + (1.0 - w_used.quiet_tradeoff * input.cmd.beta) * b.tracking
            + b.other;
        worst = worst.max((b.total - blend).abs());
    }
    let detail = if mutate {
        format!("worst |production − reference| over {n} inputs; one weight deliberately perturbed, failure expected")
    } else {
        format!("worst |production − reference| over {n} random inputs, including group-blend consistency")
    };
    Ok(CheckOutcome::new("reward_terms_vs_reference", 1e-12, worst, detail))
}

/// Textbook loudness identities: a pressure ratio of 2.512 is 8 dB, doubling
/// the distance drops a spherically spreading level by 6.02 dB, two equal
/// incoherent sources sum to +3.01 dB, and impact pressure is linear in the
/// surface gain.
fn loudness_identities(rng: &mut ChaCha8Rng) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let p = pressure_from_level(70.0);
    let lo = sound_pressure_level(p)?;
    let hi = sound_pressure_level(2.512 * p)?;
    out.push(CheckOutcome::new(
        "pressure_ratio_2512_is_8_db",
        0.08,
        ((hi - lo) - 8.0).abs(),
        "level difference for a 2.512× pressure ratio vs 8 dB (1% of 8 dB allowed)",
    ));

    let doubled = level_at_distance(70.0, 1.0, 0.5)?;
    out.push(CheckOutcome::new(
        "distance_doubling_drops_6_db",
        0.01,
        ((doubled - 70.0) + 6.02).abs(),
        "spherical-spreading drop from 0.5 m to 1.0 m vs −6.02 dB",
    ));

    let two = power_sum(&[70.0, 70.0])?;
    out.push(CheckOutcome::new(
        "equal_sources_add_3_db",
        0.01,
        ((two - 70.0) - 3.01).abs(),
        "incoherent sum of two equal 70 dB sources vs +3.01 dB",
    ));

    let mut worst: f64 = 0.0;
    for _ in 0..60 {
        let v = rng.random_range(0.01..3.0);
        let m = rng.random_range(0.05..0.5);
        let g = rng.random_range(0.5..3.0);
        let one = impact_pressure(v, m, g)?;
        let two = impact_pressure(v, m, 2.0 * g)?;
        worst = worst.max((two - 2.0 * one).abs());
    }
    out.push(CheckOutcome::new(
        "impact_gain_linearity",
        0.0,
        worst,
        "doubling the surface gain must double the impact pressure bit-exactly",
    ));

    Ok(out)
}

/// With no impacts at all, every synthesized sample, the mean level, and the
/// peak level must equal the configured noise floor exactly.
fn silence_floor() -> Result<CheckOutcome> {
    let cfg = AcousticConfig::default();
    let tr = synthesize_trace(&[], 10.0, &cfg)?;
    let mut worst: f64 = 0.0;
    for &s in &tr.samples {
        worst = worst.max((s - cfg.noise_floor_dba).abs());
    }
    worst = worst.max((tr.mnl() - cfg.noise_floor_dba).abs());
    worst = worst.max((tr.pnl() - cfg.noise_floor_dba).abs());
    Ok(CheckOutcome::new(
        "silence_sits_on_noise_floor",
        0.0,
        worst,
        format!("all {} samples, mean and peak vs the {} dBA floor", tr.samples.len(), cfg.noise_floor_dba),
    ))
}

/// The incremental exponential-decay recurrence in trace synthesis versus a
/// brute-force sum over all past impacts at every sample.
fn trace_brute_force(rng: &mut ChaCha8Rng) -> Result<CheckOutcome> {
    let cfg = AcousticConfig::default();
    let duration = 3.0;
    let impacts: Vec<Impact> = (0..25)
        .map(|_| Impact {
            time: rng.random_range(0.0..duration),
            pressure: pressure_from_level(rng.random_range(60.0..90.0)),
        })
        .collect();
    let tr = synthesize_trace(&impacts, duration, &cfg)?;
    let floor_p2 = pressure_from_level(cfg.noise_floor_dba).powi(2);

    let mut worst: f64 = 0.0;
    for (k, &s) in tr.samples.iter().enumerate() {
        let t = k as f64 * tr.dt;
        let mut p2 = floor_p2;
        for imp in &impacts {
            if imp.time <= t {
                p2 += imp.pressure.powi(2) * (-2.0 * (t - imp.time) / cfg.decay_tau_s).exp();
            }
        }
        let want = 10.0 * (p2 / (P_REF * P_REF)).log10();
        worst = worst.max((s - want).abs());
    }
    Ok(CheckOutcome::new(
        "trace_recurrence_vs_brute_force",
        1e-9,
        worst,
        format!("worst per-sample level difference over {} samples, {} impacts", tr.samples.len(), impacts.len()),
    ))
}

/// Hand-computed phase labels at and between contact events, chosen at
/// dyadic times so every expected value is exact in floating point.
fn phase_label_exactness() -> Result<CheckOutcome> {
    let labeler = PhaseLabeler::default();
    let material = MaterialTable::default().material(SurfaceKind::Wood);
    let ev = |kind: EventKind, time: f64| ContactEvent {
        leg: 0,
        kind,
        time,
        impact_velocity: if kind == EventKind::Touchdown { 0.5 } else { 0.0 },
        material,
    };
    let events = vec![
        ev(EventKind::Liftoff, 1.0),
        ev(EventKind::Touchdown, 1.5),
        ev(EventKind::Liftoff, 2.0),
        ev(EventKind::Touchdown, 2.25),
    ];
    let cases: &[(f64, f64)] = &[
        (0.0, 1.0),   // stance decay starts at 1 before any event
        (0.125, 0.5), // halfway through the nominal stance window
        (0.25, 0.0),  // nominal stance exhausted
        (0.5, 0.0),   // clamped until the first event
        (1.0, 0.0),   // liftoff instant
        (1.25, 0.5),  // mid swing, rising
        (1.5, 1.0),   // touchdown instant
        (1.75, 0.5),  // mid stance, falling
        (2.0, 0.0),   // next liftoff
        (2.125, 0.5), // mid swing of the short cycle
        (2.25, 1.0),  // final touchdown
        (3.0, 1.0),   // holds at full stance after the last event
    ];
    let mut worst: f64 = 0.0;
    for &(t, want) in cases {
        worst = worst.max((labeler.label_leg(&events, t) - want).abs());
    }
    Ok(CheckOutcome::new(
        "phase_labels_at_events",
        0.0,
        worst,
        format!("{} hand-computed labels at dyadic times must match exactly", cases.len()),
    ))
}

/// Save → load → compare against f32-quantized originals → re-save must be
/// byte-identical.
fn checkpoint_roundtrip(rng: &mut ChaCha8Rng, seed: u64) -> Result<CheckOutcome> {
    let est_cfg = EstimatorConfig {
        obs_dim: 10,
        hidden: 8,
        latent: 4,
        vel_dim: 2,
        scan_dim: 5,
        num_legs: NUM_LEGS,
        head_hidden: 8,
        window: 4,
    };
    let est = Estimator::new(est_cfg, rng)?;
    let (policy, pol_cfg) = small_policy(rng)?;
    let meta = CheckpointMeta {
        kind: CheckpointKind::Training,
        iteration: 7,
        seed,
        curriculum_level: 2,
        sim: SimConfig::default(),
        estimator: est_cfg,
        policy: pol_cfg,
        reward: RewardWeights::default(),
    };

    let dir = std::env::temp_dir().join(format!("gait-check-{}-{seed}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let result = (|| -> Result<f64> {
        let path = dir.join("roundtrip.ckpt");
        let sets: Vec<(&str, &ParamSet)> =
            vec![("estimator", &est.params), ("actor", &policy.actor), ("critic", &policy.critic)];
        checkpoint::save(&path, &meta, &sets)?;
        let bytes_first = std::fs::read(&path)?;
        let (meta_back, loaded) = checkpoint::load(&path)?;

        let mut worst: f64 = 0.0;
        for (name, original) in &sets {
            let back = loaded
                .get(*name)
                .ok_or_else(|| Error::Checkpoint(format!("reloaded file lacks set '{name}'")))?;
            for (oa, la) in original.iter().zip(back.iter()) {
                if oa.name != la.name || oa.values.len() != la.values.len() {
                    return Err(Error::Checkpoint(format!(
                        "array layout changed across reload in set '{name}'"
                    )));
                }
                for (o, l) in oa.values.iter().zip(&la.values) {
                    worst = worst.max((l - (*o as f32 as f64)).abs());
                }
            }
        }

        let path2 = dir.join("roundtrip-again.ckpt");
        let again: Vec<(&str, &ParamSet)> = sets
            .iter()
            .map(|(n, _)| (*n, loaded.get(*n).expect("set present")))
            .collect();
        checkpoint::save(&path2, &meta_back, &again)?;
        let bytes_second = std::fs::read(&path2)?;
        if bytes_first != bytes_second {
            worst = worst.max(1.0);
        }
        Ok(worst)
    })();
    let _ = std::fs::remove_dir_all(&dir);
    let worst = result?;
    Ok(CheckOutcome::new(
        "checkpoint_roundtrip_bytes",
        0.0,
        worst,
        "reloaded weights equal f32-quantized originals; re-serialization is byte-identical",
    ))
}
