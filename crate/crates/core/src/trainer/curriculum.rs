//! Command-speed curriculum driven by tracking performance.
//!
//! Training starts with slow commands and widens the speed range as the
//! policy tracks well, stepping back if tracking collapses. The signal is
//! the mean unblended tracking-group reward per step, compared against its
//! ceiling (the sum of the two tracking weights).

use serde::{Deserialize, Serialize};

use crate::rewards::RewardWeights;
use crate::{Error, Result};

/// Promotion/demotion rules over a fixed ladder of speed ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// Upper command speed (m/s) per level; lower bound is `vx_min`.
    pub level_max_speed: Vec<f64>,
    pub vx_min: f64,
    /// Promote when mean tracking exceeds this fraction of its ceiling.
    pub promote_fraction: f64,
    /// Demote when it falls below this fraction.
    pub demote_fraction: f64,
    /// Iterations a level must persist before it can change again.
    pub patience: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            level_max_speed: vec![0.3, 0.45, 0.6, 0.7, 0.8],
            vx_min: 0.1,
            promote_fraction: 0.8,
            demote_fraction: 0.4,
            patience: 10,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level_max_speed.is_empty() {
            return Err(Error::config("curriculum needs at least one level"));
        }
        if !self
            .level_max_speed
            .windows(2)
            .all(|w| w[1] > w[0])
        {
            return Err(Error::config("curriculum speeds must increase"));
        }
        if self.vx_min < 0.0 || self.vx_min >= self.level_max_speed[0] {
            return Err(Error::config("vx_min must be below the first level speed"));
        }
        if !(0.0 < self.demote_fraction
            && self.demote_fraction < self.promote_fraction
            && self.promote_fraction < 1.0)
        {
            return Err(Error::config("need 0 < demote < promote < 1"));
        }
        Ok(())
    }
}

/// Mutable curriculum state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    cfg: CurriculumConfig,
    level: usize,
    since_change: usize,
    /// Ceiling of the tracking-group reward.
    ceiling: f64,
}

impl Curriculum {
    pub fn new(cfg: CurriculumConfig, weights: &RewardWeights) -> Result<Self> {
        cfg.validate()?;
        let ceiling = weights.lin_tracking + weights.ang_tracking;
        if ceiling <= 0.0 {
            return Err(Error::config("tracking weights must sum positive"));
        }
        Ok(Curriculum { cfg, level: 0, since_change: 0, ceiling })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Current command-speed sampling range.
    pub fn vx_range(&self) -> [f64; 2] {
        [self.cfg.vx_min, self.cfg.level_max_speed[self.level]]
    }

    /// Feeds one iteration's mean tracking reward; returns true when the
    /// level changed.
    pub fn observe(&mut self, mean_tracking: f64) -> bool {
        self.since_change += 1;
        if self.since_change < self.cfg.patience {
            return false;
        }
        let frac = mean_tracking / self.ceiling;
        if frac > self.cfg.promote_fraction && self.level + 1 < self.cfg.level_max_speed.len() {
            self.level += 1;
            self.since_change = 0;
            true
        } else if frac < self.cfg.demote_fraction && self.level > 0 {
            self.level -= 1;
            self.since_change = 0;
            true
        } else {
            false
        }
    }
}
