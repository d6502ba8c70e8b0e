//! Impact-noise model: sound pressure of foot impacts, decibel arithmetic,
//! and microphone-rate noise traces.
//!
//! The model is intentionally simple and fully deterministic:
//!
//! - a touchdown at vertical speed `v` of an effective foot mass `m` on a
//!   surface with acoustic gain `g` radiates a peak sound pressure
//!   `p = g · v · sqrt(m)` at the reference microphone distance, so
//!   radiated pressure scales with the square root of impact energy;
//! - pressures decay exponentially with time constant `decay_tau_s` and
//!   combine energetically (sum of squared pressures) on top of an
//!   always-on machine noise floor;
//! - the microphone samples at a fixed rate; the mean of the sampled
//!   decibel trace is the mean noise level (MNL) and its maximum the peak
//!   noise level (PNL).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reference sound pressure (Pa) for 0 dB SPL.
pub const P_REF: f64 = 2e-5;

/// Surface types feet can land on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Wood,
    Carpet,
    Tiles,
    Concrete,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 4] = [
        SurfaceKind::Wood,
        SurfaceKind::Carpet,
        SurfaceKind::Tiles,
        SurfaceKind::Concrete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Wood => "wood",
            SurfaceKind::Carpet => "carpet",
            SurfaceKind::Tiles => "tiles",
            SurfaceKind::Concrete => "concrete",
        }
    }
}

impl std::fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SurfaceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wood" => Ok(SurfaceKind::Wood),
            "carpet" => Ok(SurfaceKind::Carpet),
            "tiles" | "tile" => Ok(SurfaceKind::Tiles),
            "concrete" => Ok(SurfaceKind::Concrete),
            other => Err(Error::invalid(format!("unknown surface {other:?}"))),
        }
    }
}

/// A surface kind together with its acoustic gain (Pa·s/(m·√kg)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMaterial {
    pub kind: SurfaceKind,
    pub gain: f64,
}

/// Acoustic gain per surface kind.
///
/// Gains are placeholders until [`crate::eval::calibrate_gains`] fits them
/// to the floor-level anchors; `concrete_calibrated` records whether the
/// concrete entry came from calibration (it never does directly — no anchor
/// exists for it — so it is interpolated and flagged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    pub wood: f64,
    pub carpet: f64,
    pub tiles: f64,
    pub concrete: f64,
    pub concrete_calibrated: bool,
}

impl Default for MaterialTable {
    fn default() -> Self {
        MaterialTable {
            wood: 2.0,
            carpet: 1.2,
            tiles: 1.8,
            concrete: 1.9,
            concrete_calibrated: false,
        }
    }
}

impl MaterialTable {
    pub fn gain(&self, kind: SurfaceKind) -> f64 {
        match kind {
            SurfaceKind::Wood => self.wood,
            SurfaceKind::Carpet => self.carpet,
            SurfaceKind::Tiles => self.tiles,
            SurfaceKind::Concrete => self.concrete,
        }
    }

    pub fn set_gain(&mut self, kind: SurfaceKind, gain: f64) {
        match kind {
            SurfaceKind::Wood => self.wood = gain,
            SurfaceKind::Carpet => self.carpet = gain,
            SurfaceKind::Tiles => self.tiles = gain,
            SurfaceKind::Concrete => self.concrete = gain,
        }
    }

    pub fn material(&self, kind: SurfaceKind) -> SurfaceMaterial {
        SurfaceMaterial { kind, gain: self.gain(kind) }
    }

    /// Gains must be positive and finite. No cross-surface ordering is
    /// imposed: calibrated tables take whatever ordering the measured
    /// per-surface targets dictate.
    pub fn validate(&self) -> Result<()> {
        for kind in SurfaceKind::ALL {
            let g = self.gain(kind);
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::config(format!("material gain for {kind} must be positive")));
            }
        }
        Ok(())
    }
}

/// Parameters of the microphone and ambient-noise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticConfig {
    /// Microphone sampling rate (Hz).
    pub sample_rate_hz: f64,
    /// Exponential pressure decay time constant of an impact (s).
    pub decay_tau_s: f64,
    /// Always-on machine noise floor (dBA) from motors and fans.
    pub noise_floor_dba: f64,
    /// Reference microphone distance (m) at which impact pressures are
    /// defined; perceived levels elsewhere follow spherical spreading.
    pub reference_distance_m: f64,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        AcousticConfig {
            sample_rate_hz: 20.0,
            decay_tau_s: 0.025,
            noise_floor_dba: 55.0,
            reference_distance_m: 0.5,
        }
    }
}

impl AcousticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::config("sample_rate_hz must be positive"));
        }
        if !(self.decay_tau_s.is_finite() && self.decay_tau_s > 0.0) {
            return Err(Error::config("decay_tau_s must be positive"));
        }
        if !self.noise_floor_dba.is_finite() {
            return Err(Error::config("noise_floor_dba must be finite"));
        }
        if !(self.reference_distance_m.is_finite() && self.reference_distance_m > 0.0) {
            return Err(Error::config("reference_distance_m must be positive"));
        }
        Ok(())
    }
}

/// Peak sound pressure (Pa) of one touchdown at the reference distance.
///
/// `v` is the downward impact speed (m/s, ≥ 0), `m` the effective foot
/// mass (kg, > 0), `gain` the surface's acoustic gain (> 0).
pub fn impact_pressure(v: f64, m: f64, gain: f64) -> Result<f64> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::invalid(format!("impact speed {v} must be ≥ 0")));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::invalid(format!("foot mass {m} must be > 0")));
    }
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::invalid(format!("surface gain {gain} must be > 0")));
    }
    Ok(gain * v * m.sqrt())
}

/// Sound pressure level (dB) of pressure `p` (Pa, > 0).
pub fn sound_pressure_level(p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::invalid(format!("pressure {p} must be > 0")));
    }
    Ok(20.0 * (p / P_REF).log10())
}

/// Pressure (Pa) corresponding to a sound pressure level (dB).
pub fn pressure_from_level(level: f64) -> f64 {
    P_REF * 10.0_f64.powf(level / 20.0)
}

/// Energetic sum of incoherent sources: `10·log10(Σ 10^(Lᵢ/10))`.
pub fn power_sum(levels: &[f64]) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::invalid("power_sum of no sources"));
    }
    let s: f64 = levels.iter().map(|l| 10.0_f64.powf(l / 10.0)).sum();
    Ok(10.0 * s.log10())
}

/// Level perceived at distance `d` given the level at `d_ref`
/// (spherical spreading: −6 dB per doubling of distance).
pub fn level_at_distance(level_at_ref: f64, d: f64, d_ref: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0 && d_ref.is_finite() && d_ref > 0.0) {
        return Err(Error::invalid("distances must be positive"));
    }
    Ok(level_at_ref - 20.0 * (d / d_ref).log10())
}

/// One foot impact as seen by the microphone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    /// Time of the touchdown (s) relative to the trace start.
    pub time: f64,
    /// Peak pressure (Pa) at the reference distance.
    pub pressure: f64,
}

/// A sampled decibel trace with derived summary levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    /// Sampling interval (s).
    pub dt: f64,
    /// Sampled levels (dBA), sample `k` taken at `t = k·dt`.
    pub samples: Vec<f64>,
}

impl NoiseTrace {
    /// Mean noise level: arithmetic mean of the sampled decibel values.
    pub fn mnl(&self) -> f64 {
        crate::stats::mean(&self.samples)
    }

    /// Peak noise level: maximum sampled decibel value.
    pub fn pnl(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Energy-equivalent level: `10·log10(mean(10^(Lₖ/10)))`. Emphasizes
    /// peaks more than [`NoiseTrace::mnl`].
    pub fn leq(&self) -> f64 {
        let n = self.samples.len().max(1) as f64;
        let s: f64 = self.samples.iter().map(|l| 10.0_f64.powf(l / 10.0)).sum();
        10.0 * (s / n).log10()
    }

    /// Sample times, for serialization.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }
}

/// Renders the microphone trace for a set of impacts over `[0, duration)`.
///
/// Sample `k` is taken at `t = k / sample_rate`; an impact contributes to
/// every sample at or after its time, with its squared pressure decayed by
/// `exp(−2·(t − t_impact)/τ)` and added energetically to the machine noise
/// floor. With no impacts every sample equals the floor exactly.
pub fn synthesize_trace(
    impacts: &[Impact],
    duration: f64,
    cfg: &AcousticConfig,
) -> Result<NoiseTrace> {
    cfg.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("trace duration {duration} must be > 0")));
    }
    for imp in impacts {
        if !(imp.time.is_finite() && imp.time >= 0.0 && imp.time <= duration) {
            return Err(Error::invalid(format!(
                "impact time {} outside [0, {duration}]",
                imp.time
            )));
        }
        if !(imp.pressure.is_finite() && imp.pressure >= 0.0) {
            return Err(Error::invalid(format!("impact pressure {} must be ≥ 0", imp.pressure)));
        }
    }
    let mut sorted: Vec<Impact> = impacts.to_vec();
    sorted.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));

    let dt = 1.0 / cfg.sample_rate_hz;
    let n = (duration * cfg.sample_rate_hz).round().max(1.0) as usize;
    let floor_p2 = pressure_from_level(cfg.noise_floor_dba).powi(2);
    let decay_per_sample = (-2.0 * dt / cfg.decay_tau_s).exp();

    let mut samples = Vec::with_capacity(n);
    let mut impact_p2 = 0.0; // decayed squared-pressure carried between samples
    let mut next = 0;
    for k in 0..n {
        let t = k as f64 * dt;
        if k > 0 {
            impact_p2 *= decay_per_sample;
        }
        while next < sorted.len() && sorted[next].time <= t {
            let age = t - sorted[next].time;
            impact_p2 += sorted[next].pressure.powi(2) * (-2.0 * age / cfg.decay_tau_s).exp();
            next += 1;
        }
        let p2 = floor_p2 + impact_p2;
        samples.push(10.0 * (p2 / (P_REF * P_REF)).log10());
    }
    Ok(NoiseTrace { dt, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn impact_pressure_hand_value() {
        // v = 0.3 m/s on a gain-2.0 surface with a 0.15 kg foot:
        // p = 2.0 · 0.3 · sqrt(0.15) ≈ 0.2324 Pa ≈ 81.3 dB.
        let p = impact_pressure(0.3, 0.15, 2.0).unwrap();
        assert_relative_eq!(p, 0.232_379_000_772_445_3, max_relative = 1e-12);
        let l = sound_pressure_level(p).unwrap();
        assert_relative_eq!(l, 81.303, epsilon = 1e-3);
    }

    #[test]
    fn impact_pressure_rejects_bad_inputs() {
        assert!(impact_pressure(-0.1, 0.15, 2.0).is_err());
        assert!(impact_pressure(0.1, 0.0, 2.0).is_err());
        assert!(impact_pressure(0.1, 0.15, 0.0).is_err());
        assert!(impact_pressure(f64::NAN, 0.15, 2.0).is_err());
    }

    #[test]
    fn level_round_trip() {
        for &l in &[0.0, 55.0, 73.51, 94.0] {
            let p = pressure_from_level(l);
            assert_relative_eq!(sound_pressure_level(p).unwrap(), l, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_sources_add_three_decibels() {
        let s = power_sum(&[70.0, 70.0]).unwrap();
        assert_relative_eq!(s, 70.0 + 10.0 * 2.0_f64.log10(), epsilon = 1e-12);
        assert!((s - 73.0103).abs() < 1e-4);
    }

    #[test]
    fn doubling_distance_loses_six_decibels() {
        let l = level_at_distance(80.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(l, 80.0 - 20.0 * 2.0_f64.log10(), epsilon = 1e-12);
        assert!((80.0 - l - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn silent_trace_sits_on_the_floor_exactly() {
        let cfg = AcousticConfig::default();
        let tr = synthesize_trace(&[], 10.0, &cfg).unwrap();
        assert_eq!(tr.samples.len(), 200);
        assert!(tr.samples.iter().all(|&s| s == 55.0));
        assert_eq!(tr.mnl(), 55.0);
        assert_eq!(tr.pnl(), 55.0);
        assert_relative_eq!(tr.leq(), 55.0, epsilon = 1e-12);
    }

    #[test]
    fn single_impact_peaks_then_decays_to_floor() {
        let cfg = AcousticConfig::default();
        let p = impact_pressure(0.3, 0.15, 2.0).unwrap();
        // Impact exactly at sample 20 (t = 1.0 s).
        let tr = synthesize_trace(&[Impact { time: 1.0, pressure: p }], 10.0, &cfg).unwrap();
        let expected_peak =
            10.0 * ((pressure_from_level(55.0).powi(2) + p * p) / (P_REF * P_REF)).log10();
        assert_relative_eq!(tr.pnl(), expected_peak, epsilon = 1e-9);
        assert_relative_eq!(tr.samples[20], expected_peak, epsilon = 1e-9);
        // Two samples later the impact has decayed by e^{-8} in power; by
        // sample 30 (0.5 s ≈ 20 τ) it is numerically at the floor.
        assert!(tr.samples[30] - 55.0 < 1e-6);
        assert!(tr.mnl() > 55.0 && tr.mnl() < expected_peak);
    }

    #[test]
    fn impact_between_samples_is_scored_with_partial_decay() {
        let cfg = AcousticConfig::default();
        let p = 0.5;
        // dt = 50 ms; impact at t = 1.010 s is first seen at t = 1.05 s
        // with 40 ms of decay.
        let tr = synthesize_trace(&[Impact { time: 1.010, pressure: p }], 2.0, &cfg).unwrap();
        let age: f64 = 0.040;
        let expected = 10.0
            * ((pressure_from_level(55.0).powi(2)
                + p * p * (-2.0 * age / cfg.decay_tau_s).exp())
                / (P_REF * P_REF))
                .log10();
        assert_relative_eq!(tr.samples[21], expected, epsilon = 1e-9);
        assert_eq!(tr.samples[20], 55.0);
    }

    #[test]
    fn trace_rejects_out_of_range_impacts() {
        let cfg = AcousticConfig::default();
        let bad = [Impact { time: 11.0, pressure: 0.1 }];
        assert!(synthesize_trace(&bad, 10.0, &cfg).is_err());
        let neg = [Impact { time: -0.5, pressure: 0.1 }];
        assert!(synthesize_trace(&neg, 10.0, &cfg).is_err());
    }

    #[test]
    fn leq_exceeds_mnl_for_impulsive_traces() {
        let cfg = AcousticConfig::default();
        let tr = synthesize_trace(&[Impact { time: 1.0, pressure: 0.8 }], 10.0, &cfg).unwrap();
        assert!(tr.leq() > tr.mnl());
    }

    #[test]
    fn material_table_validation() {
        let table = MaterialTable::default();
        assert!(table.validate().is_ok());
        // The stock gains make carpet the quietest surface and wood the
        // loudest of the hard anchors.
        assert!(table.carpet < table.tiles && table.tiles < table.wood);
        let mut zero = MaterialTable::default();
        zero.wood = 0.0;
        assert!(zero.validate().is_err());
        let mut nan = MaterialTable::default();
        nan.concrete = f64::NAN;
        assert!(nan.validate().is_err());
    }

    #[test]
    fn surface_kind_parses_and_prints() {
        for kind in SurfaceKind::ALL {
            let s = kind.to_string();
            assert_eq!(s.parse::<SurfaceKind>().unwrap(), kind);
        }
        assert!("lava".parse::<SurfaceKind>().is_err());
    }
}
