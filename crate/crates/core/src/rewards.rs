//! Step reward: velocity-tracking terms, regularization penalties, and a
//! per-leg phase-shaped foot-speed term, blended by the commanded quiet
//! factor β.
//!
//! Terms are grouped into three sums — tracking (`r_v`), phase (`r_phi`),
//! and other (`r_o`) — and combined as
//! `r = β·r_phi + (1 − k·β)·r_v + r_o`,
//! so β = 0 recovers the plain locomotion objective and β = 1 trades
//! tracking fidelity for quiet foot placement. The phase term penalizes
//! downward foot speed approaching touchdown (weight `e^{φ}`) and pays for
//! upward foot speed right after liftoff (weight `e^{−φ}`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::phase::PhaseVector;
use crate::sim::{Command, NUM_JOINTS, NUM_LEGS};

/// Weights and shaping constants. Positive weights reward, negative
/// penalize; `tracking_sharpness` is the exponent factor in the
/// tracking kernels `exp(−sharpness·err²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub lin_tracking: f64,
    pub ang_tracking: f64,
    pub lin_vel_z: f64,
    pub ang_vel_xy: f64,
    pub joint_power: f64,
    pub joint_accel: f64,
    pub action_rate: f64,
    pub collision: f64,
    pub body_height: f64,
    pub orientation: f64,
    pub phase_drop: f64,
    pub phase_raise: f64,
    pub tracking_sharpness: f64,
    pub target_height: f64,
    /// `k` in the blend `(1 − k·β)·r_v`: how much tracking reward the
    /// quietest command is allowed to sacrifice.
    pub quiet_tradeoff: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lin_tracking: 1.0,
            ang_tracking: 0.5,
            lin_vel_z: -2.0,
            ang_vel_xy: -0.05,
            joint_power: -2.0e-5,
            joint_accel: -2.5e-7,
            action_rate: -0.01,
            collision: -0.1,
            body_height: -1.0,
            orientation: -0.2,
            phase_drop: -0.05,
            phase_raise: 0.01,
            tracking_sharpness: 4.0,
            target_height: 0.30,
            quiet_tradeoff: 0.2,
        }
    }
}

/// Everything a single reward evaluation needs. Assembled by the rollout
/// code after hindsight phase labelling, which is why this is a plain
/// value type rather than a view of the simulator.
#[derive(Debug, Clone)]
pub struct RewardInput {
    pub cmd: Command,
    /// Trunk velocity `[vx, vz]` (world frame).
    pub trunk_vel: [f64; 2],
    pub pitch: f64,
    pub pitch_rate: f64,
    /// Trunk height above the ground directly below.
    pub height: f64,
    pub tau: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub qdd: [f64; NUM_JOINTS],
    pub action: [f64; NUM_JOINTS],
    pub prev_action: [f64; NUM_JOINTS],
    /// Undesired-contact count this control step.
    pub n_collision: usize,
    /// World-frame vertical foot velocities.
    pub foot_vel_z: [f64; NUM_LEGS],
    pub phase: PhaseVector,
}

/// Weighted value of every term plus the group sums and blended total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: BTreeMap<String, f64>,
    /// Velocity-tracking group (scaled by `1 − k·β` in the total).
    pub tracking: f64,
    /// Phase-shaped foot-speed group (scaled by β in the total).
    pub phase: f64,
    /// Everything else, applied unconditionally.
    pub other: f64,
    pub total: f64,
}

/// Evaluates all terms and blends them with the commanded quiet factor.
pub fn compute(input: &RewardInput, w: &RewardWeights) -> RewardBreakdown {
    let mut terms = BTreeMap::new();

    // Tracking group.
    let lin_err = input.cmd.vx - input.trunk_vel[0];
    let lin = w.lin_tracking * (-w.tracking_sharpness * lin_err * lin_err).exp();
    let ang_err = input.cmd.pitch_rate - input.pitch_rate;
    let ang = w.ang_tracking * (-w.tracking_sharpness * ang_err * ang_err).exp();
    terms.insert("lin_tracking".into(), lin);
    terms.insert("ang_tracking".into(), ang);
    let tracking = lin + ang;

    // Phase group.
    let mut drop = 0.0;
    let mut raise = 0.0;
    for leg in 0..NUM_LEGS {
        let phi = input.phase.0[leg];
        let vz = input.foot_vel_z[leg];
        let v_drop = (-vz).max(0.0);
        let v_raise = vz.max(0.0);
        drop += phi.exp() * v_drop * v_drop;
        raise += (-phi).exp() * v_raise * v_raise;
    }
    let drop = w.phase_drop * drop;
    let raise = w.phase_raise * raise;
    terms.insert("phase_drop".into(), drop);
    terms.insert("phase_raise".into(), raise);
    let phase = drop + raise;

    // Unconditional group.
    let vz2 = w.lin_vel_z * input.trunk_vel[1] * input.trunk_vel[1];
    let wxy = w.ang_vel_xy * input.pitch_rate * input.pitch_rate;
    let power: f64 =
        w.joint_power * input.tau.iter().zip(&input.qd).map(|(t, v)| t.abs() * v.abs()).sum::<f64>();
    let accel: f64 = w.joint_accel * input.qdd.iter().map(|a| a * a).sum::<f64>();
    let rate: f64 = w.action_rate
        * input
            .action
            .iter()
            .zip(&input.prev_action)
            .map(|(a, p)| (a - p) * (a - p))
            .sum::<f64>();
    let coll = w.collision * input.n_collision as f64;
    let h_err = w.target_height - input.height;
    let height = w.body_height * h_err * h_err;
    let orient = w.orientation * input.pitch.sin().powi(2);
    terms.insert("lin_vel_z".into(), vz2);
    terms.insert("ang_vel_xy".into(), wxy);
    terms.insert("joint_power".into(), power);
    terms.insert("joint_accel".into(), accel);
    terms.insert("action_rate".into(), rate);
    terms.insert("collision".into(), coll);
    terms.insert("body_height".into(), height);
    terms.insert("orientation".into(), orient);
    let other = vz2 + wxy + power + accel + rate + coll + height + orient;

    let beta = input.cmd.beta;
    let total = beta * phase + (1.0 - w.quiet_tradeoff * beta) * tracking + other;
    RewardBreakdown { terms, tracking, phase, other, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arr8(rng: &mut ChaCha8Rng, span: f64) -> [f64; NUM_JOINTS] {
        let mut a = [0.0; NUM_JOINTS];
        for v in &mut a {
            *v = rng.random_range(-span..span);
        }
        a
    }

    fn random_input(rng: &mut ChaCha8Rng) -> RewardInput {
        let tau = arr8(rng, 3.0);
        let qd = arr8(rng, 3.0);
        let qdd = arr8(rng, 300.0);
        let action = arr8(rng, 3.0);
        let prev_action = arr8(rng, 3.0);
        let mut foot_vel_z = [0.0; NUM_LEGS];
        for v in &mut foot_vel_z {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut phase = [0.0; NUM_LEGS];
        for v in &mut phase {
            *v = rng.random_range(0.0..1.0);
        }
        RewardInput {
            cmd: Command::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(0.0..1.0))
                .unwrap(),
            trunk_vel: [rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)],
            pitch: rng.random_range(-0.5..0.5),
            pitch_rate: rng.random_range(-2.0..2.0),
            height: rng.random_range(0.2..0.4),
            tau,
            qd,
            qdd,
            action,
            prev_action,
            n_collision: rng.random_range(0..4),
            foot_vel_z,
            phase: PhaseVector(phase),
        }
    }

    /// Independent naive re-computation of every term.
    fn brute_force(i: &RewardInput, w: &RewardWeights) -> f64 {
        let r_v = w.lin_tracking
            * (-w.tracking_sharpness * (i.cmd.vx - i.trunk_vel[0]).powi(2)).exp()
            + w.ang_tracking * (-w.tracking_sharpness * (i.cmd.pitch_rate - i.pitch_rate).powi(2)).exp();
        let mut r_phi = 0.0;
        for leg in 0..NUM_LEGS {
            let vz = i.foot_vel_z[leg];
            if vz < 0.0 {
                r_phi += w.phase_drop * i.phase.0[leg].exp() * vz * vz;
            } else {
                r_phi += w.phase_raise * (-i.phase.0[leg]).exp() * vz * vz;
            }
        }
        let mut r_o = 0.0;
        r_o += w.lin_vel_z * i.trunk_vel[1].powi(2);
        r_o += w.ang_vel_xy * i.pitch_rate.powi(2);
        for j in 0..NUM_JOINTS {
            r_o += w.joint_power * (i.tau[j] * i.qd[j]).abs();
            r_o += w.joint_accel * i.qdd[j].powi(2);
            r_o += w.action_rate * (i.action[j] - i.prev_action[j]).powi(2);
        }
        r_o += w.collision * i.n_collision as f64;
        r_o += w.body_height * (w.target_height - i.height).powi(2);
        r_o += w.orientation * i.pitch.sin().powi(2);
        i.cmd.beta * r_phi + (1.0 - w.quiet_tradeoff * i.cmd.beta) * r_v + r_o
    }

    #[test]
    fn matches_independent_computation_on_random_states() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let input = random_input(&mut rng);
            let got = compute(&input, &w);
            let want = brute_force(&input, &w);
            assert_relative_eq!(got.total, want, epsilon = 1e-12, max_relative = 1e-12);
            let group_sum = input.cmd.beta * got.phase
                + (1.0 - w.quiet_tradeoff * input.cmd.beta) * got.tracking
                + got.other;
            assert_relative_eq!(got.total, group_sum, epsilon = 1e-12);
            let term_sum: f64 = got.terms.values().sum();
            assert_relative_eq!(
                got.tracking + got.phase + got.other,
                term_sum,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn perfect_tracking_earns_full_tracking_reward() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut input = random_input(&mut rng);
        input.cmd = Command::new(0.5, 0.0, 0.0).unwrap();
        input.trunk_vel[0] = 0.5;
        input.pitch_rate = 0.0;
        let r = compute(&input, &w);
        assert_relative_eq!(r.tracking, w.lin_tracking + w.ang_tracking);
        assert_relative_eq!(r.terms["lin_tracking"], 1.0);
    }

    #[test]
    fn beta_zero_ignores_phase_and_keeps_full_tracking() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut input = random_input(&mut rng);
        input.cmd = Command::new(0.4, 0.0, 0.0).unwrap();
        let r = compute(&input, &w);
        assert_relative_eq!(r.total, r.tracking + r.other, epsilon = 1e-12);
    }

    #[test]
    fn quiet_command_discounts_tracking_by_the_tradeoff_factor() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut input = random_input(&mut rng);
        input.cmd = Command::new(0.4, 0.0, 1.0).unwrap();
        let r = compute(&input, &w);
        assert_relative_eq!(
            r.total,
            r.phase + (1.0 - w.quiet_tradeoff) * r.tracking + r.other,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dropping_foot_near_touchdown_costs_more_than_early_in_swing() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut input = random_input(&mut rng);
        input.cmd = Command::new(0.4, 0.0, 1.0).unwrap();
        input.foot_vel_z = [-0.5, 0.0, 0.0, 0.0];
        input.phase = PhaseVector([0.95, 0.5, 0.5, 0.5]);
        let late = compute(&input, &w).phase;
        input.phase = PhaseVector([0.1, 0.5, 0.5, 0.5]);
        let early = compute(&input, &w).phase;
        assert!(late < early, "late drop {late} should cost more than early {early}");
    }

    #[test]
    fn collisions_are_linear_in_count() {
        let w = RewardWeights::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut input = random_input(&mut rng);
        input.n_collision = 0;
        let r0 = compute(&input, &w).terms["collision"];
        input.n_collision = 3;
        let r3 = compute(&input, &w).terms["collision"];
        assert_relative_eq!(r0, 0.0);
        assert_relative_eq!(r3, 3.0 * w.collision);
    }
}
