//! Recurrent state estimator: a single-layer LSTM encodes a window of
//! proprioceptive observations; from the final hidden state the model
//! predicts body velocity and the terrain height scan, and a variational
//! latent (trained with a next-observation forward model) feeds a phase
//! head that outputs per-leg gait phases through a logistic squash.
//!
//! Two forward paths exist on purpose: a plain, allocation-light pass for
//! rollouts ([`Estimator::estimate`]) and a tape pass used to train
//! ([`Estimator::loss_graph`]). Their agreement is covered by tests, and
//! the tape gradients are finite-difference-checked.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Init, ParamSet, Tape, Var};
use crate::sim::NUM_LEGS;
use crate::{Error, Result};

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub obs_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub vel_dim: usize,
    pub scan_dim: usize,
    pub num_legs: usize,
    pub head_hidden: usize,
    /// Observation history length fed to the encoder.
    pub window: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            obs_dim: crate::sim::OBS_DIM,
            hidden: 64,
            latent: 16,
            vel_dim: 2,
            scan_dim: crate::sim::SCAN_POINTS,
            num_legs: NUM_LEGS,
            head_hidden: 64,
            window: 20,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("obs_dim", self.obs_dim),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("vel_dim", self.vel_dim),
            ("scan_dim", self.scan_dim),
            ("num_legs", self.num_legs),
            ("head_hidden", self.head_hidden),
            ("window", self.window),
        ] {
            if v == 0 {
                return Err(Error::config(format!("estimator {name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Loss term weights: total = est + fwd·(recon + kl·KL) + phase·phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub fwd: f64,
    pub phase: f64,
    pub kl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { fwd: 1.0, phase: 1.0, kl: 0.01 }
    }
}

/// One training sample: an observation window, the following observation,
/// and the privileged targets at the window's final step.
#[derive(Debug, Clone)]
pub struct EstimatorSample {
    pub window: Vec<Vec<f64>>,
    pub next_obs: Vec<f64>,
    pub vel: Vec<f64>,
    pub scan: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Averaged loss values for one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Velocity + height-scan regression.
    pub est: f64,
    /// Next-observation reconstruction.
    pub recon: f64,
    /// KL of the latent posterior against the standard normal.
    pub kl: f64,
    /// Phase regression.
    pub phase: f64,
}

/// Inference output.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub vel: Vec<f64>,
    pub scan: Vec<f64>,
    pub phase: Vec<f64>,
    /// Latent mean, used as the deployment latent.
    pub z: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Indices of every parameter array inside the set (registration order).
#[derive(Debug, Clone, Copy)]
struct Ids {
    wi: usize,
    bi: usize,
    wf: usize,
    bf: usize,
    wo: usize,
    bo: usize,
    wg: usize,
    bg: usize,
    mu_w: usize,
    mu_b: usize,
    lv_w: usize,
    lv_b: usize,
    dec_w1: usize,
    dec_b1: usize,
    dec_w2: usize,
    dec_b2: usize,
    vel_w1: usize,
    vel_b1: usize,
    vel_w2: usize,
    vel_b2: usize,
    scan_w1: usize,
    scan_b1: usize,
    scan_w2: usize,
    scan_b2: usize,
    ph_w1: usize,
    ph_b1: usize,
    ph_w2: usize,
    ph_b2: usize,
}

/// The estimator network.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub cfg: EstimatorConfig,
    pub params: ParamSet,
    ids: Ids,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut p = ParamSet::new();
        let h = cfg.hidden;
        let xin = cfg.obs_dim + cfg.hidden;
        let hh = cfg.head_hidden;
        let ids = Ids {
            wi: p.add("lstm.wi", h, xin, Init::Xavier, rng)?,
            bi: p.add("lstm.bi", h, 1, Init::Zeros, rng)?,
            wf: p.add("lstm.wf", h, xin, Init::Xavier, rng)?,
            // Forget gate starts open so early training does not wash out
            // the window.
            bf: p.add("lstm.bf", h, 1, Init::Constant(1.0), rng)?,
            wo: p.add("lstm.wo", h, xin, Init::Xavier, rng)?,
            bo: p.add("lstm.bo", h, 1, Init::Zeros, rng)?,
            wg: p.add("lstm.wg", h, xin, Init::Xavier, rng)?,
            bg: p.add("lstm.bg", h, 1, Init::Zeros, rng)?,
            mu_w: p.add("lat.mu_w", cfg.latent, h, Init::Xavier, rng)?,
            mu_b: p.add("lat.mu_b", cfg.latent, 1, Init::Zeros, rng)?,
            lv_w: p.add("lat.lv_w", cfg.latent, h, Init::Xavier, rng)?,
            lv_b: p.add("lat.lv_b", cfg.latent, 1, Init::Zeros, rng)?,
            dec_w1: p.add("dec.w1", hh, cfg.latent, Init::Xavier, rng)?,
            dec_b1: p.add("dec.b1", hh, 1, Init::Zeros, rng)?,
            dec_w2: p.add("dec.w2", cfg.obs_dim, hh, Init::Xavier, rng)?,
            dec_b2: p.add("dec.b2", cfg.obs_dim, 1, Init::Zeros, rng)?,
            vel_w1: p.add("vel.w1", hh, h, Init::Xavier, rng)?,
            vel_b1: p.add("vel.b1", hh, 1, Init::Zeros, rng)?,
            vel_w2: p.add("vel.w2", cfg.vel_dim, hh, Init::Xavier, rng)?,
            vel_b2: p.add("vel.b2", cfg.vel_dim, 1, Init::Zeros, rng)?,
            scan_w1: p.add("scan.w1", hh, h, Init::Xavier, rng)?,
            scan_b1: p.add("scan.b1", hh, 1, Init::Zeros, rng)?,
            scan_w2: p.add("scan.w2", cfg.scan_dim, hh, Init::Xavier, rng)?,
            scan_b2: p.add("scan.b2", cfg.scan_dim, 1, Init::Zeros, rng)?,
            ph_w1: p.add(
                "phase.w1",
                hh,
                cfg.vel_dim + cfg.scan_dim + cfg.latent,
                Init::Xavier,
                rng,
            )?,
            ph_b1: p.add("phase.b1", hh, 1, Init::Zeros, rng)?,
            ph_w2: p.add("phase.w2", cfg.num_legs, hh, Init::Xavier, rng)?,
            ph_b2: p.add("phase.b2", cfg.num_legs, 1, Init::Zeros, rng)?,
        };
        Ok(Estimator { cfg, params: p, ids })
    }

    /// Rebuilds the index table after loading weights; shapes must match
    /// the given config.
    pub fn from_params(cfg: EstimatorConfig, params: ParamSet) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fresh = Estimator::new(cfg, &mut rng)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Checkpoint("estimator parameter count mismatch".into()));
        }
        for (a, b) in fresh.params.iter().zip(params.iter()) {
            if a.name != b.name || a.rows != b.rows || a.cols != b.cols {
                return Err(Error::Checkpoint(format!(
                    "estimator array {:?} has unexpected shape",
                    b.name
                )));
            }
        }
        Ok(Estimator { cfg, params, ids: fresh.ids })
    }

    // ---- plain forward (rollout path) ---------------------------------

    fn affine_plain(&self, idx_w: usize, idx_b: usize, x: &[f64], out: &mut Vec<f64>) {
        let w = self.params.at(idx_w);
        let b = self.params.at(idx_b);
        debug_assert_eq!(w.cols, x.len());
        out.clear();
        for r in 0..w.rows {
            let row = &w.values[r * w.cols..(r + 1) * w.cols];
            let mut acc = b.values[r];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }

    /// Runs the LSTM over a window and returns `(h_final, mu, logvar)`.
    fn encode_plain(&self, window: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if window.is_empty() {
            return Err(Error::invalid("estimator window is empty"));
        }
        for o in window {
            if o.len() != self.cfg.obs_dim {
                return Err(Error::invalid(format!(
                    "observation length {} does not match estimator obs_dim {}",
                    o.len(),
                    self.cfg.obs_dim
                )));
            }
        }
        let hdim = self.cfg.hidden;
        let mut h = vec![0.0; hdim];
        let mut c = vec![0.0; hdim];
        let mut xh = vec![0.0; self.cfg.obs_dim + hdim];
        let (mut gi, mut gf, mut go, mut gg) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for x in window {
            xh[..self.cfg.obs_dim].copy_from_slice(x);
            xh[self.cfg.obs_dim..].copy_from_slice(&h);
            self.affine_plain(self.ids.wi, self.ids.bi, &xh, &mut gi);
            self.affine_plain(self.ids.wf, self.ids.bf, &xh, &mut gf);
            self.affine_plain(self.ids.wo, self.ids.bo, &xh, &mut go);
            self.affine_plain(self.ids.wg, self.ids.bg, &xh, &mut gg);
            for j in 0..hdim {
                let i_g = sigmoid(gi[j]);
                let f_g = sigmoid(gf[j]);
                let o_g = sigmoid(go[j]);
                let g_g = gg[j].tanh();
                c[j] = f_g * c[j] + i_g * g_g;
                h[j] = o_g * c[j].tanh();
            }
        }
        let mut mu = Vec::new();
        let mut lv = Vec::new();
        self.affine_plain(self.ids.mu_w, self.ids.mu_b, &h, &mut mu);
        self.affine_plain(self.ids.lv_w, self.ids.lv_b, &h, &mut lv);
        Ok((h, mu, lv))
    }

    fn mlp2_plain(
        &self,
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
        x: &[f64],
    ) -> Vec<f64> {
        let mut a1 = Vec::new();
        self.affine_plain(w1, b1, x, &mut a1);
        for v in &mut a1 {
            *v = v.tanh();
        }
        let mut out = Vec::new();
        self.affine_plain(w2, b2, &a1, &mut out);
        out
    }

    /// Deployment inference: deterministic latent (`z = μ`), logistic
    /// phase outputs.
    pub fn estimate(&self, window: &[Vec<f64>]) -> Result<Estimate> {
        let (h, mu, logvar) = self.encode_plain(window)?;
        let vel = self.mlp2_plain(self.ids.vel_w1, self.ids.vel_b1, self.ids.vel_w2, self.ids.vel_b2, &h);
        let scan =
            self.mlp2_plain(self.ids.scan_w1, self.ids.scan_b1, self.ids.scan_w2, self.ids.scan_b2, &h);
        let mut ph_in = Vec::with_capacity(vel.len() + scan.len() + mu.len());
        ph_in.extend_from_slice(&vel);
        ph_in.extend_from_slice(&scan);
        ph_in.extend_from_slice(&mu);
        let mut phase =
            self.mlp2_plain(self.ids.ph_w1, self.ids.ph_b1, self.ids.ph_w2, self.ids.ph_b2, &ph_in);
        for p in &mut phase {
            *p = sigmoid(*p);
        }
        Ok(Estimate { vel, scan, phase, z: mu, logvar })
    }

    /// Next-observation prediction from a latent (used in diagnostics).
    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.mlp2_plain(self.ids.dec_w1, self.ids.dec_b1, self.ids.dec_w2, self.ids.dec_b2, z)
    }

    // ---- tape forward (training path) ----------------------------------

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.params.len()).map(|i| tape.param(&self.params, i)).collect()
    }

    fn affine_t(&self, tape: &mut Tape, bound: &[Var], w: usize, b: usize, x: Var) -> Var {
        let (rows, cols) = {
            let arr = self.params.at(w);
            (arr.rows, arr.cols)
        };
        tape.affine(bound[w], bound[b], x, rows, cols)
    }

    fn mlp2_t(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        w1: usize,
        b1: usize,
        w2: usize,
        b2: usize,
        x: Var,
    ) -> Var {
        let a1 = self.affine_t(tape, bound, w1, b1, x);
        let t1 = tape.tanh(a1);
        self.affine_t(tape, bound, w2, b2, t1)
    }

    fn encode_t(&self, tape: &mut Tape, bound: &[Var], window: &[Vec<f64>]) -> (Var, Var, Var) {
        let hdim = self.cfg.hidden;
        let mut h = tape.constant(vec![0.0; hdim]);
        let mut c = tape.constant(vec![0.0; hdim]);
        for x in window {
            let xv = tape.constant(x.clone());
            let xh = tape.concat(&[xv, h]);
            let ai = self.affine_t(tape, bound, self.ids.wi, self.ids.bi, xh);
            let i_g = tape.sigmoid(ai);
            let af = self.affine_t(tape, bound, self.ids.wf, self.ids.bf, xh);
            let f_g = tape.sigmoid(af);
            let ao = self.affine_t(tape, bound, self.ids.wo, self.ids.bo, xh);
            let o_g = tape.sigmoid(ao);
            let ag = self.affine_t(tape, bound, self.ids.wg, self.ids.bg, xh);
            let g_g = tape.tanh(ag);
            let fc = tape.mul(f_g, c);
            let ig = tape.mul(i_g, g_g);
            c = tape.add(fc, ig);
            let ct = tape.tanh(c);
            h = tape.mul(o_g, ct);
        }
        let mu = self.affine_t(tape, bound, self.ids.mu_w, self.ids.mu_b, h);
        let lv = self.affine_t(tape, bound, self.ids.lv_w, self.ids.lv_b, h);
        (h, mu, lv)
    }

    /// Builds the batch loss graph. `eps` supplies one standard-normal
    /// latent noise vector per sample, making the loss a pure function of
    /// the parameters (required for finite-difference checks).
    ///
    /// Returns the total-loss node and the component values.
    pub fn loss_graph(
        &self,
        tape: &mut Tape,
        batch: &[EstimatorSample],
        eps: &[Vec<f64>],
        w: &LossWeights,
    ) -> Result<(Var, LossBreakdown)> {
        if batch.is_empty() {
            return Err(Error::invalid("estimator batch is empty"));
        }
        if eps.len() != batch.len() {
            return Err(Error::invalid("need one latent noise vector per sample"));
        }
        for (s, e) in batch.iter().zip(eps) {
            if s.next_obs.len() != self.cfg.obs_dim
                || s.vel.len() != self.cfg.vel_dim
                || s.scan.len() != self.cfg.scan_dim
                || s.phase.len() != self.cfg.num_legs
                || e.len() != self.cfg.latent
            {
                return Err(Error::invalid("estimator sample has wrong target dimensions"));
            }
        }
        let bound = self.bind(tape);
        let mut est_terms = Vec::with_capacity(batch.len());
        let mut recon_terms = Vec::with_capacity(batch.len());
        let mut kl_terms = Vec::with_capacity(batch.len());
        let mut phase_terms = Vec::with_capacity(batch.len());
        for (sample, e) in batch.iter().zip(eps) {
            let (h, mu, lv) = self.encode_t(tape, &bound, &sample.window);

            // KL(q ‖ N(0, I)) = ½ Σ (σ² + μ² − 1 − log σ²).
            let var = tape.exp(lv);
            let musq = tape.mul(mu, mu);
            let s1 = tape.add(var, musq);
            let s2 = tape.offset(s1, -1.0);
            let s3 = tape.sub(s2, lv);
            let ssum = tape.sum(s3);
            let kl = tape.scale(ssum, 0.5);
            kl_terms.push(kl);

            // Reparameterized latent: z = μ + exp(½ log σ²) ⊙ ε.
            let half_lv = tape.scale(lv, 0.5);
            let sd = tape.exp(half_lv);
            let noise = tape.constant(e.clone());
            let sn = tape.mul(sd, noise);
            let z = tape.add(mu, sn);

            let recon = self.mlp2_t(tape, &bound, self.ids.dec_w1, self.ids.dec_b1, self.ids.dec_w2, self.ids.dec_b2, z);
            recon_terms.push(tape.mse(recon, &sample.next_obs));

            let vel = self.mlp2_t(tape, &bound, self.ids.vel_w1, self.ids.vel_b1, self.ids.vel_w2, self.ids.vel_b2, h);
            let scan = self.mlp2_t(tape, &bound, self.ids.scan_w1, self.ids.scan_b1, self.ids.scan_w2, self.ids.scan_b2, h);
            let ev = tape.mse(vel, &sample.vel);
            let es = tape.mse(scan, &sample.scan);
            est_terms.push(tape.add(ev, es));

            let ph_in = tape.concat(&[vel, scan, z]);
            let logits = self.mlp2_t(tape, &bound, self.ids.ph_w1, self.ids.ph_b1, self.ids.ph_w2, self.ids.ph_b2, ph_in);
            let ph = tape.sigmoid(logits);
            phase_terms.push(tape.mse(ph, &sample.phase));
        }
        let mean_of = |tape: &mut Tape, terms: &[Var]| {
            let cat = tape.concat(terms);
            tape.mean(cat)
        };
        let est = mean_of(tape, &est_terms);
        let recon = mean_of(tape, &recon_terms);
        let kl = mean_of(tape, &kl_terms);
        let phase = mean_of(tape, &phase_terms);

        let kl_w = tape.scale(kl, w.kl);
        let fwd = tape.add(recon, kl_w);
        let fwd_w = tape.scale(fwd, w.fwd);
        let phase_w = tape.scale(phase, w.phase);
        let t1 = tape.add(est, fwd_w);
        let total = tape.add(t1, phase_w);

        let breakdown = LossBreakdown {
            total: tape.scalar_value(total),
            est: tape.scalar_value(est),
            recon: tape.scalar_value(recon),
            kl: tape.scalar_value(kl),
            phase: tape.scalar_value(phase),
        };
        Ok((total, breakdown))
    }

    /// Loss values without gradients.
    pub fn eval_loss(
        &self,
        batch: &[EstimatorSample],
        eps: &[Vec<f64>],
        w: &LossWeights,
    ) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let (_, breakdown) = self.loss_graph(&mut tape, batch, eps, w)?;
        Ok(breakdown)
    }

    /// One optimization step on a batch; returns the (pre-step) losses.
    pub fn update(
        &mut self,
        batch: &[EstimatorSample],
        eps: &[Vec<f64>],
        w: &LossWeights,
        adam: &mut Adam,
    ) -> Result<LossBreakdown> {
        self.params.zero_grads();
        let mut tape = Tape::new();
        let (total, breakdown) = self.loss_graph(&mut tape, batch, eps, w)?;
        if !breakdown.total.is_finite() {
            return Err(Error::Numeric(format!(
                "estimator loss is not finite: {:?}",
                breakdown
            )));
        }
        tape.backward(total);
        tape.accumulate_param_grads(&mut self.params);
        self.params.assert_finite()?;
        adam.step(&mut self.params)?;
        Ok(breakdown)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Closed-form KL divergence of `N(μ, diag σ²)` from `N(0, I)`:
/// `½ Σ (σ² + μ² − 1 − log σ²)`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
        .sum()
}

/// Draws one standard-normal latent noise vector per sample.
pub fn draw_eps(rng: &mut ChaCha8Rng, samples: usize, latent: usize) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|_| (0..latent).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}
