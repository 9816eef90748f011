use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cgan::{discriminator_loss, generator_loss, DiscriminatorBatch, GanCheckpoint, GanConfig, ProgressState};
use crate::dataset::Corpus;
use crate::error::{Error, Result};
use crate::nn::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "step,stage,fade_alpha,d_loss,g_loss,cond_loss";

/// Stage index and fade coefficient in effect for `step`. Within a stage the
/// coefficient ramps linearly from 0 to 1 over the fade-in window, then holds.
pub fn schedule(config: &GanConfig, step: u64) -> (usize, f64) {
    let last = config.ladder.len().saturating_sub(1);
    let stage = ((step / config.steps_per_stage) as usize).min(last);
    if stage == 0 {
        return (0, 1.0);
    }
    let local = step - stage as u64 * config.steps_per_stage;
    (stage, (local as f64 / config.fade_in_steps as f64).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub stage: usize,
    pub resolution: usize,
    pub fade_alpha: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Unweighted conditioning loss on the real batch.
    pub cond_loss: f64,
}

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.step, self.stage, self.fade_alpha, self.d_loss, self.g_loss, self.cond_loss
        )
    }
}

pub trait TrainObserver<T: Scalar> {
    fn on_step(&mut self, _log: &StepLog) -> Result<()> {
        Ok(())
    }

    /// Called every `checkpoint_every` steps with the state after that step.
    fn on_checkpoint(&mut self, _ckpt: &GanCheckpoint<T>) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl<T: Scalar> TrainObserver<T> for NoObserver {}

impl<T: Scalar, F: FnMut(&StepLog)> TrainObserver<T> for F {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        self(log);
        Ok(())
    }
}

/// Real images downsampled to every ladder resolution.
struct RealPyramid {
    levels: Vec<Tensor<f32>>,
    betas: Vec<f64>,
    ratings: Vec<Vec<f64>>,
}

impl RealPyramid {
    fn new(corpus: &Corpus, config: &GanConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Training("cannot train on an empty corpus".into()));
        }
        if corpus.resolution < config.max_resolution() {
            return Err(Error::Config(format!(
                "corpus resolution {} is below the ladder maximum {}",
                corpus.resolution,
                config.max_resolution()
            )));
        }
        if corpus.rater_count != config.cond_dim || corpus.channels != config.image_channels {
            return Err(Error::Config(format!(
                "corpus has K={} and {} channels, config expects K={} and {}",
                corpus.rater_count, corpus.channels, config.cond_dim, config.image_channels
            )));
        }
        let mut cur = Tensor::stack(corpus.items.iter().map(|it| &it.pixels))?;
        while cur.h > config.max_resolution() {
            cur = ops::downsample_forward(&cur);
        }
        let mut levels = vec![cur];
        for _ in 1..config.ladder.len() {
            let next = ops::downsample_forward(levels.last().expect("non-empty"));
            levels.push(next);
        }
        levels.reverse();
        Ok(Self {
            levels,
            betas: corpus.mean_scores(),
            ratings: corpus.items.iter().map(|it| it.ratings.clone()).collect(),
        })
    }

    fn gather(&self, stage: usize, idx: &[usize]) -> Tensor<f32> {
        let level = &self.levels[stage];
        Tensor::stack(idx.iter().map(|&i| level.sample(i)).collect::<Vec<_>>().iter()).expect("same shapes")
    }

    /// Reals at the stage resolution, blended with the upsampled previous
    /// level during a fade exactly as the generator output is.
    fn batch<T: Scalar>(&self, stage: usize, alpha: f64, idx: &[usize]) -> Tensor<T> {
        let hi = self.gather(stage, idx).cast::<T>();
        if stage == 0 || alpha >= 1.0 {
            return hi;
        }
        let lo = ops::upsample_forward(&self.gather(stage - 1, idx).cast::<T>());
        ops::lerp(&lo, &hi, T::lit(alpha))
    }
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    rng
}

/// Builds `z ‖ condition` rows for random corpus rating vectors; returns the
/// input and each condition's mean.
fn fake_inputs<T: Scalar>(rng: &mut ChaCha8Rng, reals: &RealPyramid, config: &GanConfig) -> (Tensor<T>, Vec<T>) {
    let n = config.batch_size;
    let width = config.latent_dim + config.cond_dim;
    let mut data = Vec::with_capacity(n * width);
    let mut betas = Vec::with_capacity(n);
    for _ in 0..n {
        data.extend((0..config.latent_dim).map(|_| T::lit(rng.sample(StandardNormal))));
        let j = rng.random_range(0..reals.ratings.len());
        data.extend(reals.ratings[j].iter().map(|&r| T::lit(r)));
        betas.push(T::lit(reals.betas[j]));
    }
    (Tensor::rows(n, width, data).expect("sized above"), betas)
}

/// Runs the whole progressive schedule from a fresh initialization.
pub fn train<T: Scalar>(corpus: &Corpus, config: &GanConfig, observer: &mut impl TrainObserver<T>) -> Result<GanCheckpoint<T>> {
    let ckpt = GanCheckpoint::init(config.clone())?;
    train_until(ckpt, corpus, config.total_steps(), observer)
}

/// Continues training from `ckpt` until `until` steps have completed. Every
/// step draws its randomness from `(seed, step)` alone, so stopping and
/// resuming reproduces an uninterrupted run.
pub fn train_until<T: Scalar>(
    mut ckpt: GanCheckpoint<T>,
    corpus: &Corpus,
    until: u64,
    observer: &mut impl TrainObserver<T>,
) -> Result<GanCheckpoint<T>> {
    let config = ckpt.config.clone();
    config.validate()?;
    let until = until.min(config.total_steps());
    if ckpt.state.step >= until {
        return Ok(ckpt);
    }
    let reals = RealPyramid::new(corpus, &config)?;
    let n = config.batch_size;
    for step in ckpt.state.step..until {
        let (stage, alpha_f) = schedule(&config, step);
        let alpha = T::lit(alpha_f);
        let weights = config.loss_weights(step);
        let mut rng = step_rng(config.seed, step);

        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..corpus.len())).collect();
        let real = reals.batch::<T>(stage, alpha_f, &idx);
        let real_beta: Vec<T> = idx.iter().map(|&i| T::lit(reals.betas[i])).collect();
        let (input, fake_beta) = fake_inputs::<T>(&mut rng, &reals, &config);
        let fake = ckpt.generator.infer(&ckpt.g_params, &input, stage, alpha);
        let mix: Vec<T> = (0..n).map(|_| T::lit(rng.random::<f64>())).collect();
        let batch = DiscriminatorBatch {
            real: &real,
            real_beta: &real_beta,
            fake: &fake,
            fake_beta: &fake_beta,
            mix: &mix,
        };
        let (d_loss, d_grads) = discriminator_loss(&ckpt.discriminator, &ckpt.d_params, &batch, &weights, stage, alpha);
        if !d_loss.total.is_finite() || d_grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                step,
                what: "critic loss is not finite".into(),
            });
        }
        ckpt.d_opt.step(&mut ckpt.d_params, &d_grads);

        let (input, cond_beta) = fake_inputs::<T>(&mut rng, &reals, &config);
        let (g_loss, g_grads) = generator_loss(
            &ckpt.generator,
            &ckpt.g_params,
            &ckpt.discriminator,
            &ckpt.d_params,
            &input,
            &cond_beta,
            &weights,
            stage,
            alpha,
        );
        if !g_loss.total.is_finite() || g_grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical {
                step,
                what: "generator loss is not finite".into(),
            });
        }
        ckpt.g_opt.step(&mut ckpt.g_params, &g_grads);
        if ckpt.g_params.iter().chain(&ckpt.d_params).any(|p| !p.is_finite()) {
            return Err(Error::Numerical {
                step,
                what: "parameters became non-finite".into(),
            });
        }

        ckpt.state = ProgressState::at(&config, step + 1);
        observer.on_step(&StepLog {
            step,
            stage,
            resolution: config.ladder[stage],
            fade_alpha: alpha_f,
            d_loss: d_loss.total.as_f64(),
            g_loss: g_loss.total.as_f64(),
            cond_loss: d_loss.cond_real.as_f64(),
        })?;
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            observer.on_checkpoint(&ckpt)?;
        }
    }
    Ok(ckpt)
}
