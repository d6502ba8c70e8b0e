//! Open-loop diagonal trot used as the evaluation baseline.
//!
//! Diagonal leg pairs (front-left with rear-right, front-right with
//! rear-left) move half a cycle apart. Each leg swings its hip sinusoidally
//! forward while flexing the knee for ground clearance, extends the leg and
//! starts sweeping it backward just before touchdown (so the foot does not
//! brake the trunk), then continues the linear backward sweep through stance
//! with the knee at its loaded standing angle. Stride frequency scales with
//! the commanded speed. Nothing in the trajectory softens the vertical
//! touchdown velocity, which is what makes this gait a useful loudness
//! baseline.

use crate::sim::{gravity_compensated_stand, SimConfig, NUM_JOINTS, NUM_LEGS};

/// Cycle offsets implementing the diagonal pairing.
const PHASE_OFFSET: [f64; NUM_LEGS] = [0.0, 0.5, 0.5, 0.0];

/// Gait-shape parameters of the scripted trot.
#[derive(Debug, Clone, Copy)]
pub struct TrotConfig {
    /// Hip swing amplitude around the standing angle (rad).
    pub hip_amplitude: f64,
    /// Peak knee flexion added during swing for ground clearance (rad).
    pub knee_lift: f64,
    /// Nominal forward travel per full gait cycle (m); sets the stride
    /// frequency as `speed / cycle_stride_m`.
    pub cycle_stride_m: f64,
    /// Upper bound on stride frequency (Hz).
    pub max_frequency_hz: f64,
    /// Amplitude ramp-in time from standing (s), softening the first steps.
    pub ramp_s: f64,
    /// Trailing fraction of the swing spent sweeping the extended leg
    /// backward at the stance rate, so the foot meets the ground with
    /// little relative velocity instead of braking the trunk.
    pub retract_fraction: f64,
}

impl Default for TrotConfig {
    fn default() -> Self {
        TrotConfig {
            hip_amplitude: 0.40,
            knee_lift: 0.55,
            cycle_stride_m: 0.28,
            max_frequency_hz: 2.5,
            ramp_s: 0.6,
            retract_fraction: 0.25,
        }
    }
}

/// Stateful open-loop trot; call [`TrotController::step`] once per control
/// step to get joint targets.
#[derive(Debug, Clone)]
pub struct TrotController {
    cfg: TrotConfig,
    q_base: [f64; NUM_JOINTS],
    hip_limits: [f64; 2],
    knee_limits: [f64; 2],
    /// Master cycle phase in [0, 1).
    phase: f64,
    /// Time spent walking since the last reset (s), for the amplitude ramp.
    walk_time: f64,
}

impl TrotController {
    /// Builds the controller around the simulator's loaded standing pose.
    pub fn new(scfg: &SimConfig, cfg: TrotConfig) -> Self {
        TrotController {
            cfg,
            q_base: gravity_compensated_stand(scfg),
            hip_limits: scfg.hip_limits,
            knee_limits: scfg.knee_limits,
            phase: 0.0,
            walk_time: 0.0,
        }
    }

    /// Returns to the standing state (phase and ramp cleared).
    pub fn reset(&mut self) {
        self.phase = 0.0;
        self.walk_time = 0.0;
    }

    /// Advances the gait by `dt` and returns the joint targets for a
    /// forward speed command of `vx` (m/s). Non-positive commands hold the
    /// standing pose exactly and do not advance the cycle.
    pub fn step(&mut self, vx: f64, dt: f64) -> [f64; NUM_JOINTS] {
        if vx <= 0.0 {
            return self.q_base;
        }
        let freq = (vx / self.cfg.cycle_stride_m).min(self.cfg.max_frequency_hz);
        self.phase = (self.phase + freq * dt).rem_euclid(1.0);
        self.walk_time += dt;
        let ramp = if self.cfg.ramp_s > 0.0 {
            (self.walk_time / self.cfg.ramp_s).min(1.0)
        } else {
            1.0
        };

        let mut q = self.q_base;
        let amp = self.cfg.hip_amplitude;
        let r = self.cfg.retract_fraction.clamp(0.0, 0.9);
        // Backward sweep rate (rad per unit half-cycle) shared by late swing
        // and stance, so the foot arrives at the ground already matching the
        // stance sweep instead of braking the trunk.
        let sweep = 2.0 * amp / (1.0 + r);
        let touchdown_hip = amp - sweep * r;
        for leg in 0..NUM_LEGS {
            let u = (self.phase + PHASE_OFFSET[leg]).rem_euclid(1.0);
            let (hip, knee) = if u < 0.5 {
                let s = u / 0.5;
                if s < 1.0 - r {
                    // Swing: hip travels back-to-front on a half cosine while
                    // the knee flexes and re-extends for clearance.
                    let p = std::f64::consts::PI * s / (1.0 - r);
                    (-amp * p.cos(), -self.cfg.knee_lift * p.sin())
                } else {
                    // Late swing: leg extended, hip already sweeping back.
                    (amp - sweep * (s - (1.0 - r)), 0.0)
                }
            } else {
                // Stance: hip sweeps front-to-back linearly, knee loaded.
                let s = (u - 0.5) / 0.5;
                (touchdown_hip - sweep * s, 0.0)
            };
            q[2 * leg] =
                (q[2 * leg] + ramp * hip).clamp(self.hip_limits[0], self.hip_limits[1]);
            q[2 * leg + 1] =
                (q[2 * leg + 1] + ramp * knee).clamp(self.knee_limits[0], self.knee_limits[1]);
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_command_holds_exact_stand() {
        let scfg = SimConfig::default();
        let mut trot = TrotController::new(&scfg, TrotConfig::default());
        for _ in 0..100 {
            let q = trot.step(0.0, scfg.control_dt);
            assert_eq!(q, gravity_compensated_stand(&scfg));
        }
    }

    #[test]
    fn diagonal_pairs_move_in_phase() {
        let scfg = SimConfig::default();
        let mut trot = TrotController::new(&scfg, TrotConfig {
            ramp_s: 0.0,
            ..TrotConfig::default()
        });
        for _ in 0..500 {
            let q = trot.step(0.5, scfg.control_dt);
            // Front-left tracks rear-right; front-right tracks rear-left.
            assert_relative_eq!(q[0], q[6], epsilon = 1e-12);
            assert_relative_eq!(q[1], q[7], epsilon = 1e-12);
            assert_relative_eq!(q[2], q[4], epsilon = 1e-12);
            assert_relative_eq!(q[3], q[5], epsilon = 1e-12);
        }
    }

    #[test]
    fn contralateral_pairs_are_antiphase() {
        let scfg = SimConfig::default();
        let stand = gravity_compensated_stand(&scfg);
        let mut a = TrotController::new(&scfg, TrotConfig {
            ramp_s: 0.0,
            ..TrotConfig::default()
        });
        let mut b = a.clone();
        // Advance `b` by exactly half a cycle at a fixed frequency, then
        // leg 0 of `a` must mirror leg 1 of `b`.
        let freq = 0.5 / TrotConfig::default().cycle_stride_m;
        let half_cycle_steps = (0.5 / (freq * scfg.control_dt)).round() as usize;
        for _ in 0..half_cycle_steps {
            b.step(0.5, scfg.control_dt);
        }
        for _ in 0..200 {
            let qa = a.step(0.5, scfg.control_dt);
            let qb = b.step(0.5, scfg.control_dt);
            assert_relative_eq!(qa[0] - stand[0], qb[2] - stand[2], epsilon = 1e-9);
            assert_relative_eq!(qa[1] - stand[1], qb[3] - stand[3], epsilon = 1e-9);
        }
    }

    #[test]
    fn targets_respect_joint_limits() {
        let scfg = SimConfig::default();
        let mut trot = TrotController::new(&scfg, TrotConfig {
            hip_amplitude: 5.0,
            knee_lift: 5.0,
            ..TrotConfig::default()
        });
        for _ in 0..300 {
            let q = trot.step(1.0, scfg.control_dt);
            for leg in 0..NUM_LEGS {
                assert!(q[2 * leg] >= scfg.hip_limits[0] && q[2 * leg] <= scfg.hip_limits[1]);
                assert!(
                    q[2 * leg + 1] >= scfg.knee_limits[0] && q[2 * leg + 1] <= scfg.knee_limits[1]
                );
            }
        }
    }
}
