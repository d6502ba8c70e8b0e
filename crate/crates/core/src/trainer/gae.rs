//! Generalized advantage estimation over a rollout slice.

use crate::{Error, Result};

/// Computes advantages and value targets for one environment's
/// chronological slice.
///
/// `values[t]` is the critic's estimate at state `t`; `bootstrap` is the
/// estimate for the state after the final step, used only when the slice
/// does not end an episode. `dones[t]` marks that the episode terminated
/// at step `t` (fall or timeout), which stops credit from flowing across
/// the boundary.
///
/// Returns `(advantages, returns)` with `returns[t] = advantages[t] + values[t]`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_max = rewards.len();
    if values.len() != t_max || dones.len() != t_max {
        return Err(Error::invalid("gae inputs must have equal length"));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lam) {
        return Err(Error::invalid("gae discount factors must lie in [0, 1]"));
    }
    let mut adv = vec![0.0; t_max];
    let mut acc = 0.0;
    for t in (0..t_max).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < t_max { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * next_v * not_done - values[t];
        acc = delta + gamma * lam * not_done * acc;
        adv[t] = acc;
    }
    let ret: Vec<f64> = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Normalizes advantages to zero mean and unit standard deviation
/// (no-op for fewer than two samples or zero variance).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let mean = crate::stats::mean(adv);
    let sd = crate::stats::std_dev(adv);
    if sd > 1e-12 {
        for a in adv {
            *a = (*a - mean) / sd;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the defining sum: A_t = Σ_l (γλ)^l δ_{t+l},
    /// truncated at the first episode boundary.
    fn brute_force(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lam: f64,
    ) -> Vec<f64> {
        let t_max = rewards.len();
        let delta = |t: usize| {
            let next_v = if dones[t] {
                0.0
            } else if t + 1 < t_max {
                values[t + 1]
            } else {
                bootstrap
            };
            rewards[t] + gamma * next_v - values[t]
        };
        (0..t_max)
            .map(|t| {
                let mut acc = 0.0;
                let mut w = 1.0;
                for l in t..t_max {
                    acc += w * delta(l);
                    if dones[l] {
                        break;
                    }
                    w *= gamma * lam;
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation_with_episode_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let t_max = rng.random_range(1..40);
            let rewards: Vec<f64> = (0..t_max).map(|_| rng.random_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..t_max).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dones: Vec<bool> = (0..t_max).map(|_| rng.random_range(0.0..1.0) < 0.15).collect();
            let bootstrap = rng.random_range(-1.0..1.0);
            let (adv, ret) = gae(&rewards, &values, &dones, bootstrap, 0.99, 0.95).unwrap();
            let want = brute_force(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
            for t in 0..t_max {
                assert_relative_eq!(adv[t], want[t], epsilon = 1e-10, max_relative = 1e-10);
                assert_relative_eq!(ret[t], adv[t] + values[t], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_step_reduces_to_td_error() {
        let (adv, _) = gae(&[1.0], &[0.4], &[false], 0.5, 0.9, 0.8).unwrap();
        assert_relative_eq!(adv[0], 1.0 + 0.9 * 0.5 - 0.4);
        let (adv, _) = gae(&[1.0], &[0.4], &[true], 0.5, 0.9, 0.8).unwrap();
        assert_relative_eq!(adv[0], 1.0 - 0.4);
    }

    #[test]
    fn lambda_one_gamma_one_gives_reward_to_go() {
        let rewards = [1.0, 2.0, 3.0];
        let values = [0.0, 0.0, 0.0];
        let dones = [false, false, true];
        let (adv, _) = gae(&rewards, &values, &dones, 9.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(adv[0], 6.0);
        assert_relative_eq!(adv[1], 5.0);
        assert_relative_eq!(adv[2], 3.0);
    }

    #[test]
    fn normalization_centres_and_scales() {
        let mut adv = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut adv);
        assert_relative_eq!(crate::stats::mean(&adv), 0.0, epsilon = 1e-12);
        assert_relative_eq!(crate::stats::std_dev(&adv), 1.0, epsilon = 1e-12);
        // Constant advantages stay untouched rather than dividing by ~0.
        let mut flat = vec![2.0, 2.0, 2.0];
        normalize_advantages(&mut flat);
        assert_eq!(flat, vec![2.0, 2.0, 2.0]);
    }
}
