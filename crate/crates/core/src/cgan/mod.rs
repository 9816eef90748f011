//! Beauty-conditioned progressive GAN: a generator fed `z ‖ ratings`, and
//! a Wasserstein critic with an auxiliary β̂ regression head.

mod checkpoint;
mod loss;
mod net;
mod train;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{discriminator_forward, generate_sequence, generator_forward, GanCheckpoint, ProgressState};
pub use loss::{discriminator_loss, generator_loss, DiscriminatorBatch, DiscriminatorLoss, GeneratorLoss, LossWeights};
pub use net::{DiscTape, Discriminator, GenTape, Generator};
pub use train::{schedule, train, train_until, NoObserver, StepLog, TrainObserver, LOG_HEADER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub latent_dim: usize,
    /// Length K of the rating-vector condition.
    pub cond_dim: usize,
    pub image_channels: usize,
    /// Resolutions per stage, starting at 4 and doubling.
    pub ladder: Vec<usize>,
    /// Feature maps per stage.
    pub channels: Vec<usize>,
    /// Steps per stage, fade-in included.
    pub steps_per_stage: u64,
    pub fade_in_steps: u64,
    pub lambda_cond: f64,
    pub lambda_gp: f64,
    /// Apply the gradient penalty every this many critic steps, scaled by
    /// the interval so its average weight is unchanged (1 = every step).
    pub gp_interval: u64,
    /// Also apply the conditioning loss to fakes inside the critic loss.
    pub cond_on_fakes: bool,
    pub batch_size: usize,
    pub g_lr: f64,
    pub d_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub equalized_lr: bool,
    pub pixel_norm: bool,
    pub minibatch_std: bool,
    /// Emit a checkpoint every this many steps (0 disables).
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            cond_dim: 1,
            image_channels: 3,
            ladder: vec![4, 8, 16, 32],
            channels: vec![32, 32, 16, 16],
            steps_per_stage: 1000,
            fade_in_steps: 500,
            lambda_cond: 1.0,
            lambda_gp: 10.0,
            gp_interval: 1,
            cond_on_fakes: false,
            batch_size: 16,
            g_lr: 1e-3,
            d_lr: 1e-3,
            adam_beta1: 0.0,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            equalized_lr: true,
            pixel_norm: true,
            minibatch_std: true,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.latent_dim == 0 || self.cond_dim == 0 || self.image_channels == 0 {
            return bad("latent_dim, cond_dim and image_channels must be positive".into());
        }
        if self.ladder.first() != Some(&4) {
            return bad(format!("ladder must start at 4, got {:?}", self.ladder));
        }
        if self.ladder.windows(2).any(|w| w[1] != 2 * w[0]) {
            return bad(format!("ladder must double at every stage, got {:?}", self.ladder));
        }
        if self.channels.len() != self.ladder.len() || self.channels.contains(&0) {
            return bad("channels needs one positive entry per ladder stage".into());
        }
        if self.steps_per_stage == 0 || self.fade_in_steps == 0 || self.fade_in_steps > self.steps_per_stage {
            return bad("need 0 < fade_in_steps <= steps_per_stage".into());
        }
        if self.gp_interval == 0 {
            return bad("gp_interval must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        let positive = [self.g_lr, self.d_lr, self.adam_eps];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("learning rates and adam_eps must be positive".into());
        }
        if !(self.lambda_cond >= 0.0 && self.lambda_gp >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn max_resolution(&self) -> usize {
        *self.ladder.last().unwrap_or(&0)
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_stage * self.ladder.len() as u64
    }

    /// Loss weights in effect at `step`, with lazy penalty scheduling applied.
    pub fn loss_weights(&self, step: u64) -> LossWeights {
        let lambda_gp = if step.is_multiple_of(self.gp_interval) {
            self.lambda_gp * self.gp_interval as f64
        } else {
            0.0
        };
        LossWeights {
            lambda_cond: self.lambda_cond,
            lambda_gp,
            cond_on_fakes: self.cond_on_fakes,
        }
    }
}

/// Generator input: a Gaussian latent and the rating-vector condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub z: Vec<f64>,
    pub condition: Vec<f64>,
}

impl LatentCode {
    pub fn new(z: Vec<f64>, condition: Vec<f64>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("latent contains non-finite entries".into()));
        }
        if condition.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range("condition entries must lie in [0, 1]".into()));
        }
        Ok(Self { z, condition })
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, latent_dim: usize, condition: Vec<f64>) -> Result<Self> {
        Self::new(sample_latent(rng, latent_dim), condition)
    }

    pub fn beta(&self) -> f64 {
        self.condition.iter().sum::<f64>() / self.condition.len().max(1) as f64
    }
}

pub fn sample_latent<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Critic output for one image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorOutput {
    pub realness: f64,
    pub beta_hat: f64,
}

/// Broadcasts a scalar beauty score to a K-long condition.
pub fn scalar_to_condition(beta: f64, k: usize) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Range(format!("beta {beta} outside [0, 1]")));
    }
    Ok(vec![beta; k])
}

/// `(β − β̂)²`.
pub fn conditioning_loss(beta: f64, beta_hat: f64) -> f64 {
    (beta - beta_hat).powi(2)
}

/// Vector condition form: β is the mean of the condition.
pub fn conditioning_loss_vec(condition: &[f64], beta_hat: f64) -> f64 {
    let beta = condition.iter().sum::<f64>() / condition.len().max(1) as f64;
    conditioning_loss(beta, beta_hat)
}
