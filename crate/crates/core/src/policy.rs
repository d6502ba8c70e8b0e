//! Actor-critic networks and observation conditioning.
//!
//! The actor sees the normalized proprioceptive observation concatenated
//! with the estimator's outputs (velocity, height scan, latent mean); the
//! critic additionally receives privileged simulator state (true scan,
//! true velocity, contact flags, hindsight phase) that only exists during
//! training. Actions are offsets around the gravity-compensated standing
//! pose, so a zero action stands still.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{Init, ParamSet, Tape, Var};
use crate::phase::estimator::Estimate;
use crate::phase::PhaseVector;
use crate::sim::{
    gravity_compensated_stand, obs_layout, Observation, SimConfig, NUM_JOINTS, NUM_LEGS, OBS_DIM,
    SCAN_POINTS,
};
use crate::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Network and action-mapping dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub obs_dim: usize,
    pub vel_dim: usize,
    pub scan_dim: usize,
    pub latent: usize,
    pub num_legs: usize,
    pub act_dim: usize,
    pub hidden: usize,
    /// Radians of joint-target offset per unit of (clipped) action.
    pub action_scale: f64,
    /// Raw actions are clipped to ±this before scaling.
    pub action_clip: f64,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            obs_dim: OBS_DIM,
            vel_dim: 2,
            scan_dim: SCAN_POINTS,
            latent: 16,
            num_legs: NUM_LEGS,
            act_dim: NUM_JOINTS,
            hidden: 128,
            action_scale: 0.25,
            action_clip: 3.0,
            log_std_init: -1.0,
            log_std_min: -4.0,
            log_std_max: 1.0,
        }
    }
}

impl PolicyConfig {
    pub fn actor_in(&self) -> usize {
        self.obs_dim + self.vel_dim + self.scan_dim + self.latent
    }

    pub fn critic_in(&self) -> usize {
        self.actor_in() + self.vel_dim + self.scan_dim + self.num_legs + self.num_legs
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.act_dim == 0 || self.obs_dim == 0 {
            return Err(Error::config("policy dimensions must be positive"));
        }
        if self.action_scale <= 0.0 || self.action_clip <= 0.0 {
            return Err(Error::config("action scale and clip must be positive"));
        }
        if self.log_std_min >= self.log_std_max {
            return Err(Error::config("log_std bounds are inverted"));
        }
        Ok(())
    }
}

/// Scales raw observation entries into comparable ranges. Applied before
/// pushing into the estimator history and before feeding the actor.
pub fn normalize_obs(obs: &Observation, cfg: &SimConfig) -> Vec<f64> {
    let mut o = obs.0.clone();
    o[obs_layout::PITCH_RATE] *= 0.25;
    for (i, v) in o[obs_layout::Q].iter_mut().enumerate() {
        *v -= cfg.q_stand[i];
    }
    for v in &mut o[obs_layout::QD] {
        *v *= 0.05;
    }
    o
}

/// Actor input: `[obs, v̂, ĥ, ẑ]`.
pub fn actor_input(obs_norm: &[f64], est: &Estimate) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs_norm.len() + est.vel.len() + est.scan.len() + est.z.len());
    x.extend_from_slice(obs_norm);
    x.extend_from_slice(&est.vel);
    x.extend_from_slice(&est.scan);
    x.extend_from_slice(&est.z);
    x
}

/// Critic input: the actor input plus privileged ground truth
/// `[true_vel, true_scan, contact, phase]`.
pub fn critic_input(
    actor_in: &[f64],
    true_vel: &[f64; 2],
    true_scan: &[f64],
    contact: &[bool; NUM_LEGS],
    phase: &PhaseVector,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(actor_in.len() + 2 + true_scan.len() + 2 * NUM_LEGS);
    x.extend_from_slice(actor_in);
    x.extend_from_slice(true_vel);
    x.extend_from_slice(true_scan);
    x.extend(contact.iter().map(|&c| if c { 1.0 } else { 0.0 }));
    x.extend_from_slice(&phase.0);
    x
}

/// How to draw the action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    /// Gaussian sample (training rollouts).
    Sample,
    /// Distribution mean (evaluation / deployment).
    Mean,
}

/// An action with the log-probability it was drawn with.
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub logp: f64,
}

/// Gaussian-policy actor and a separate value network.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub cfg: PolicyConfig,
    pub actor: ParamSet,
    pub critic: ParamSet,
}

/// Index of the log-std array inside [`ActorCritic::actor`]; the three
/// affine layers occupy indices 0..6 in registration order.
const A_LOG_STD: usize = 6;

impl ActorCritic {
    pub fn new(cfg: PolicyConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut actor = ParamSet::new();
        actor.add("actor.w1", cfg.hidden, cfg.actor_in(), Init::Xavier, rng)?;
        actor.add("actor.b1", cfg.hidden, 1, Init::Zeros, rng)?;
        actor.add("actor.w2", cfg.hidden, cfg.hidden, Init::Xavier, rng)?;
        actor.add("actor.b2", cfg.hidden, 1, Init::Zeros, rng)?;
        // Zero-init output layer: the policy starts at the standing pose.
        actor.add("actor.w3", cfg.act_dim, cfg.hidden, Init::Zeros, rng)?;
        actor.add("actor.b3", cfg.act_dim, 1, Init::Zeros, rng)?;
        actor.add("actor.log_std", cfg.act_dim, 1, Init::Constant(cfg.log_std_init), rng)?;

        let mut critic = ParamSet::new();
        critic.add("critic.w1", cfg.hidden, cfg.critic_in(), Init::Xavier, rng)?;
        critic.add("critic.b1", cfg.hidden, 1, Init::Zeros, rng)?;
        critic.add("critic.w2", cfg.hidden, cfg.hidden, Init::Xavier, rng)?;
        critic.add("critic.b2", cfg.hidden, 1, Init::Zeros, rng)?;
        critic.add("critic.w3", 1, cfg.hidden, Init::Zeros, rng)?;
        critic.add("critic.b3", 1, 1, Init::Zeros, rng)?;
        Ok(ActorCritic { cfg, actor, critic })
    }

    /// Rebuilds from loaded parameter sets, validating shapes.
    pub fn from_params(cfg: PolicyConfig, actor: ParamSet, critic: ParamSet) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fresh = ActorCritic::new(cfg, &mut rng)?;
        for (have, want) in [(&actor, &fresh.actor), (&critic, &fresh.critic)] {
            if have.len() != want.len() {
                return Err(Error::Checkpoint("policy parameter count mismatch".into()));
            }
            for (a, b) in have.iter().zip(want.iter()) {
                if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                    return Err(Error::Checkpoint(format!(
                        "policy array {:?} has unexpected shape",
                        a.name
                    )));
                }
            }
        }
        Ok(ActorCritic { cfg, actor, critic })
    }

    fn affine_plain(set: &ParamSet, w: usize, b: usize, x: &[f64]) -> Vec<f64> {
        let w = set.at(w);
        let b = set.at(b);
        debug_assert_eq!(w.cols, x.len());
        (0..w.rows)
            .map(|r| {
                let row = &w.values[r * w.cols..(r + 1) * w.cols];
                b.values[r] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect()
    }

    fn mlp3_plain(set: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut h = Self::affine_plain(set, 0, 1, x);
        for v in &mut h {
            *v = v.tanh();
        }
        let mut h2 = Self::affine_plain(set, 2, 3, &h);
        for v in &mut h2 {
            *v = v.tanh();
        }
        Self::affine_plain(set, 4, 5, &h2)
    }

    /// Mean action for an actor input.
    pub fn actor_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cfg.actor_in() {
            return Err(Error::invalid(format!(
                "actor input length {} != {}",
                x.len(),
                self.cfg.actor_in()
            )));
        }
        Ok(Self::mlp3_plain(&self.actor, x))
    }

    /// Per-dimension log standard deviation, clamped to the configured range.
    pub fn log_std(&self) -> Vec<f64> {
        self.actor
            .at(A_LOG_STD)
            .values
            .iter()
            .map(|v| v.clamp(self.cfg.log_std_min, self.cfg.log_std_max))
            .collect()
    }

    /// Draws (or takes the mean) action and returns its log-probability
    /// under the current Gaussian.
    pub fn act(&self, x: &[f64], mode: ActMode, rng: &mut ChaCha8Rng) -> Result<ActionSample> {
        let mu = self.actor_mean(x)?;
        let log_std = self.log_std();
        let action: Vec<f64> = match mode {
            ActMode::Mean => mu.clone(),
            ActMode::Sample => mu
                .iter()
                .zip(&log_std)
                .map(|(&m, &ls)| {
                    let n: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * n
                })
                .collect(),
        };
        let logp = gaussian_logp(&action, &mu, &log_std);
        Ok(ActionSample { action, logp })
    }

    /// Log-probability of an arbitrary action at input `x`.
    pub fn action_logp(&self, x: &[f64], action: &[f64]) -> Result<f64> {
        let mu = self.actor_mean(x)?;
        if action.len() != mu.len() {
            return Err(Error::invalid("action length mismatch"));
        }
        Ok(gaussian_logp(action, &mu, &self.log_std()))
    }

    /// Value estimate for a privileged critic input.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.cfg.critic_in() {
            return Err(Error::invalid(format!(
                "critic input length {} != {}",
                x.len(),
                self.cfg.critic_in()
            )));
        }
        Ok(Self::mlp3_plain(&self.critic, x)[0])
    }

    // ---- tape graphs (training path) -----------------------------------

    /// Binds every actor array onto the tape; index by the `A_*` constants.
    pub fn bind_actor(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.actor.len()).map(|i| tape.param(&self.actor, i)).collect()
    }

    pub fn bind_critic(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.critic.len()).map(|i| tape.param(&self.critic, i)).collect()
    }

    fn mlp3_t(set: &ParamSet, tape: &mut Tape, bound: &[Var], x: Var) -> Var {
        let dims = |i: usize| (set.at(i).rows, set.at(i).cols);
        let (r1, c1) = dims(0);
        let a1 = tape.affine(bound[0], bound[1], x, r1, c1);
        let t1 = tape.tanh(a1);
        let (r2, c2) = dims(2);
        let a2 = tape.affine(bound[2], bound[3], t1, r2, c2);
        let t2 = tape.tanh(a2);
        let (r3, c3) = dims(4);
        tape.affine(bound[4], bound[5], t2, r3, c3)
    }

    /// Mean-action node for one input.
    pub fn actor_mean_tape(&self, tape: &mut Tape, bound: &[Var], x: &[f64]) -> Var {
        let xv = tape.constant(x.to_vec());
        Self::mlp3_t(&self.actor, tape, bound, xv)
    }

    /// Clamped log-std node (shared across a batch).
    pub fn log_std_tape(&self, tape: &mut Tape, bound: &[Var]) -> Var {
        tape.clamp(bound[A_LOG_STD], self.cfg.log_std_min, self.cfg.log_std_max)
    }

    /// Gaussian log-probability node of `action` given mean and log-std nodes.
    pub fn logp_tape(tape: &mut Tape, mu: Var, log_std: Var, action: &[f64]) -> Var {
        let n = action.len();
        let a = tape.constant(action.to_vec());
        let d = tape.sub(a, mu);
        let neg_ls = tape.scale(log_std, -1.0);
        let inv_sigma = tape.exp(neg_ls);
        let z = tape.mul(d, inv_sigma);
        let zz = tape.mul(z, z);
        let szz = tape.sum(zz);
        let quad = tape.scale(szz, -0.5);
        let sls = tape.sum(log_std);
        let t = tape.sub(quad, sls);
        tape.offset(t, -0.5 * n as f64 * LN_2PI)
    }

    /// Entropy node of the Gaussian: `Σ log σ + n/2·(1 + ln 2π)`.
    pub fn entropy_tape(&self, tape: &mut Tape, log_std: Var) -> Var {
        let n = self.cfg.act_dim as f64;
        let s = tape.sum(log_std);
        tape.offset(s, 0.5 * n * (1.0 + LN_2PI))
    }

    /// Value node for one privileged input.
    pub fn value_tape(&self, tape: &mut Tape, bound: &[Var], x: &[f64]) -> Var {
        let xv = tape.constant(x.to_vec());
        Self::mlp3_t(&self.critic, tape, bound, xv)
    }
}

/// Diagonal-Gaussian log density.
pub fn gaussian_logp(action: &[f64], mu: &[f64], log_std: &[f64]) -> f64 {
    let mut acc = -0.5 * action.len() as f64 * LN_2PI;
    for ((a, m), ls) in action.iter().zip(mu).zip(log_std) {
        let z = (a - m) / ls.exp();
        acc += -0.5 * z * z - ls;
    }
    acc
}

/// Maps a raw policy action to joint-position targets: clipped, scaled,
/// and centred on the gravity-compensated standing pose, then clamped to
/// the joint limits.
pub fn action_to_targets(action: &[f64], pcfg: &PolicyConfig, scfg: &SimConfig) -> [f64; NUM_JOINTS] {
    let stand = gravity_compensated_stand(scfg);
    let mut q_des = [0.0; NUM_JOINTS];
    for j in 0..NUM_JOINTS {
        let a = action[j].clamp(-pcfg.action_clip, pcfg.action_clip);
        let raw = stand[j] + pcfg.action_scale * a;
        let (lo, hi) = if j % 2 == 0 {
            (scfg.hip_limits[0], scfg.hip_limits[1])
        } else {
            (scfg.knee_limits[0], scfg.knee_limits[1])
        };
        q_des[j] = raw.clamp(lo, hi);
    }
    q_des
}

use rand::SeedableRng;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn setup() -> (ActorCritic, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ac = ActorCritic::new(PolicyConfig::default(), &mut rng).unwrap();
        (ac, rng)
    }

    #[test]
    fn input_dimensions_compose() {
        let cfg = PolicyConfig::default();
        assert_eq!(cfg.actor_in(), 59);
        assert_eq!(cfg.critic_in(), 80);
    }

    #[test]
    fn zero_initialized_head_starts_at_standing_pose() {
        let (ac, _) = setup();
        let x = vec![0.3; ac.cfg.actor_in()];
        let mu = ac.actor_mean(&x).unwrap();
        assert!(mu.iter().all(|&m| m == 0.0));
        let scfg = SimConfig::default();
        let targets = action_to_targets(&mu, &ac.cfg, &scfg);
        let stand = gravity_compensated_stand(&scfg);
        for j in 0..NUM_JOINTS {
            assert_relative_eq!(targets[j], stand[j]);
        }
    }

    #[test]
    fn gaussian_logp_matches_hand_computation() {
        // 1-D: a = 1, μ = 0, σ = 1 → −½ − ½ln2π.
        let got = gaussian_logp(&[1.0], &[0.0], &[0.0]);
        assert_relative_eq!(got, -0.5 - 0.5 * LN_2PI, epsilon = 1e-15);
        // σ = e (log_std = 1): −½e⁻² − 1 − ½ln2π.
        let got = gaussian_logp(&[1.0], &[0.0], &[1.0]);
        assert_relative_eq!(got, -0.5 * (-2.0f64).exp() - 1.0 - 0.5 * LN_2PI, epsilon = 1e-15);
    }

    #[test]
    fn sampled_action_logp_agrees_with_direct_evaluation() {
        let (ac, mut rng) = setup();
        let x: Vec<f64> = (0..ac.cfg.actor_in()).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = ac.act(&x, ActMode::Sample, &mut rng).unwrap();
        let direct = ac.action_logp(&x, &s.action).unwrap();
        assert_relative_eq!(s.logp, direct, epsilon = 1e-12);
        let m = ac.act(&x, ActMode::Mean, &mut rng).unwrap();
        // Mean of a zero-init head is the zero action.
        assert!(m.action.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn tape_and_plain_paths_agree_and_gradients_check_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Small nets keep the finite-difference loop cheap.
        let cfg = PolicyConfig {
            obs_dim: 4,
            vel_dim: 2,
            scan_dim: 3,
            latent: 2,
            num_legs: 4,
            act_dim: 3,
            hidden: 5,
            ..PolicyConfig::default()
        };
        let mut ac = ActorCritic::new(cfg, &mut rng).unwrap();
        // Give the zero-init layers some structure.
        for idx in [4, 5] {
            for v in &mut ac.actor.at_mut(idx).values {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let x: Vec<f64> = (0..cfg.actor_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let action: Vec<f64> = (0..cfg.act_dim).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let bound = ac.bind_actor(&mut tape);
        let mu = ac.actor_mean_tape(&mut tape, &bound, &x);
        let ls = ac.log_std_tape(&mut tape, &bound);
        let lp = ActorCritic::logp_tape(&mut tape, mu, ls, &action);
        assert_relative_eq!(
            tape.scalar_value(lp),
            ac.action_logp(&x, &action).unwrap(),
            epsilon = 1e-12
        );

        tape.backward(lp);
        ac.actor.zero_grads();
        tape.accumulate_param_grads(&mut ac.actor);
        let h = 1e-6;
        for idx in 0..ac.actor.len() {
            let n = ac.actor.at(idx).len();
            for i in (0..n).step_by(n.div_ceil(3).max(1)) {
                let orig = ac.actor.at(idx).values[i];
                ac.actor.at_mut(idx).values[i] = orig + h;
                let up = ac.action_logp(&x, &action).unwrap();
                ac.actor.at_mut(idx).values[i] = orig - h;
                let dn = ac.action_logp(&x, &action).unwrap();
                ac.actor.at_mut(idx).values[i] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = ac.actor.at(idx).grad[i];
                assert!(
                    (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6) < 1e-4,
                    "array {idx} elem {i}: analytic {an:.8e} vs fd {fd:.8e}"
                );
            }
        }

        // Critic path.
        let cx: Vec<f64> = (0..cfg.critic_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for idx in [4, 5] {
            for v in &mut ac.critic.at_mut(idx).values {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let mut tape = Tape::new();
        let cbound = ac.bind_critic(&mut tape);
        let v = ac.value_tape(&mut tape, &cbound, &cx);
        assert_relative_eq!(tape.scalar_value(v), ac.value(&cx).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn log_std_respects_clamp_bounds() {
        let (mut ac, _) = setup();
        for v in &mut ac.actor.at_mut(A_LOG_STD).values {
            *v = 9.0;
        }
        assert!(ac.log_std().iter().all(|&v| v == ac.cfg.log_std_max));
        for v in &mut ac.actor.at_mut(A_LOG_STD).values {
            *v = -9.0;
        }
        assert!(ac.log_std().iter().all(|&v| v == ac.cfg.log_std_min));
    }

    #[test]
    fn normalization_recentres_joints_and_scales_rates() {
        let scfg = SimConfig::default();
        let mut raw = vec![0.0; OBS_DIM];
        raw[obs_layout::PITCH_RATE] = 2.0;
        for (k, i) in obs_layout::Q.enumerate() {
            raw[i] = scfg.q_stand[k] + 0.1;
        }
        for i in obs_layout::QD {
            raw[i] = 10.0;
        }
        let o = normalize_obs(&Observation(raw), &scfg);
        assert_relative_eq!(o[obs_layout::PITCH_RATE], 0.5);
        for v in &o[obs_layout::Q] {
            assert_relative_eq!(*v, 0.1, epsilon = 1e-12);
        }
        for v in &o[obs_layout::QD] {
            assert_relative_eq!(*v, 0.5);
        }
    }

    #[test]
    fn deployed_actions_never_depend_on_privileged_state() {
        let (mut ac, mut rng) = setup();
        let x: Vec<f64> = (0..ac.cfg.actor_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let before = ac.actor_mean(&x).unwrap();

        // The critic is the only consumer of ground-truth state. Scrambling
        // all of its weights must leave the deployed action untouched.
        for i in 0..ac.critic.len() {
            for v in &mut ac.critic.at_mut(i).values {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        assert_eq!(ac.actor_mean(&x).unwrap(), before);

        // Sanity: the critic itself does read the privileged tail of its
        // input, so the asymmetry is real rather than vacuous.
        let mut cx: Vec<f64> = (0..ac.cfg.critic_in()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v1 = ac.value(&cx).unwrap();
        for slot in cx.iter_mut().skip(ac.cfg.actor_in()) {
            *slot += 0.5;
        }
        let v2 = ac.value(&cx).unwrap();
        assert!((v1 - v2).abs() > 1e-12);
    }

    #[test]
    fn action_mapping_respects_joint_limits() {
        let pcfg = PolicyConfig::default();
        let scfg = SimConfig::default();
        let big = vec![100.0; NUM_JOINTS];
        let t = action_to_targets(&big, &pcfg, &scfg);
        for j in 0..NUM_JOINTS {
            let (lo, hi) = if j % 2 == 0 {
                (scfg.hip_limits[0], scfg.hip_limits[1])
            } else {
                (scfg.knee_limits[0], scfg.knee_limits[1])
            };
            assert!(t[j] >= lo && t[j] <= hi);
            // Clip at ±3 then scale 0.25 → at most 0.75 from stand.
            let stand = gravity_compensated_stand(&scfg)[j];
            assert!((t[j] - stand).abs() <= pcfg.action_scale * pcfg.action_clip + 1e-12);
        }
    }
}
