use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cgan::{scalar_to_condition, schedule, Discriminator, DiscriminatorOutput, GanConfig, Generator, LatentCode};
use crate::error::{Error, Result};
use crate::nn::{cast_params, Adam, NamedBlock};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "facegen.gan/1";

/// Where the progressive schedule stands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressState {
    pub stage: usize,
    pub resolution: usize,
    pub fade_alpha: f64,
    /// Completed training steps.
    pub step: u64,
}

impl ProgressState {
    pub fn at(config: &GanConfig, step: u64) -> Self {
        let (stage, fade_alpha) = schedule(config, step);
        Self {
            stage,
            resolution: config.ladder[stage],
            fade_alpha,
            step,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanCheckpoint<T: Scalar = f32> {
    pub config: GanConfig,
    pub state: ProgressState,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_params: Vec<T>,
    pub d_params: Vec<T>,
    pub g_opt: Adam<T>,
    pub d_opt: Adam<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Serialize + DeserializeOwned")]
struct CheckpointFile<T> {
    format: String,
    config: GanConfig,
    state: ProgressState,
    generator: Vec<NamedBlock<T>>,
    discriminator: Vec<NamedBlock<T>>,
    g_opt: Adam<T>,
    d_opt: Adam<T>,
}

impl<T: Scalar> GanCheckpoint<T> {
    /// Freshly initialized networks at step 0.
    pub fn init(config: GanConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(&config);
        let discriminator = Discriminator::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        let g_params: Vec<T> = generator.layout.init(&mut rng);
        let d_params: Vec<T> = discriminator.layout.init(&mut rng);
        let adam = |len, lr| Adam::new(len, lr, config.adam_beta1, config.adam_beta2, config.adam_eps);
        let g_opt = adam(g_params.len(), config.g_lr);
        let d_opt = adam(d_params.len(), config.d_lr);
        Ok(Self {
            state: ProgressState::at(&config, 0),
            config,
            generator,
            discriminator,
            g_params,
            d_params,
            g_opt,
            d_opt,
        })
    }

    pub fn resolution(&self) -> usize {
        self.state.resolution
    }

    pub fn alpha(&self) -> T {
        T::lit(self.state.fade_alpha)
    }

    /// Stacks codes into the `n × (d + K) × 1 × 1` generator input.
    pub fn input_batch(&self, codes: &[LatentCode]) -> Result<Tensor<T>> {
        let (d, k) = (self.config.latent_dim, self.config.cond_dim);
        let mut data = Vec::with_capacity(codes.len() * (d + k));
        for code in codes {
            if code.z.len() != d || code.condition.len() != k {
                return Err(Error::Shape(format!(
                    "latent code has d={} K={}, model expects d={d} K={k}",
                    code.z.len(),
                    code.condition.len()
                )));
            }
            data.extend(code.z.iter().chain(&code.condition).map(|&v| T::lit(v)));
        }
        Tensor::rows(codes.len(), d + k, data)
    }

    /// Batched generation at the current stage and fade.
    pub fn generate(&self, codes: &[LatentCode]) -> Result<Tensor<T>> {
        let input = self.input_batch(codes)?;
        Ok(self.generator.infer(&self.g_params, &input, self.state.stage, self.alpha()))
    }

    /// Converts parameters (and optimizer state) to another scalar type.
    pub fn cast<U: Scalar>(&self) -> GanCheckpoint<U> {
        let opt = |o: &Adam<T>| Adam {
            m: cast_params(&o.m),
            v: cast_params(&o.v),
            ..Adam::new(0, o.lr, o.beta1, o.beta2, o.eps)
        };
        let mut g_opt = opt(&self.g_opt);
        let mut d_opt = opt(&self.d_opt);
        g_opt.t = self.g_opt.t;
        d_opt.t = self.d_opt.t;
        GanCheckpoint {
            config: self.config.clone(),
            state: self.state.clone(),
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            g_params: cast_params(&self.g_params),
            d_params: cast_params(&self.d_params),
            g_opt,
            d_opt,
        }
    }
}

impl<T: Scalar + Serialize + DeserializeOwned> GanCheckpoint<T> {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            state: self.state.clone(),
            generator: self.generator.layout.export(&self.g_params),
            discriminator: self.discriminator.layout.export(&self.d_params),
            g_opt: self.g_opt.clone(),
            d_opt: self.d_opt.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile<T> = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("unknown checkpoint format {:?}", file.format)));
        }
        let mut ckpt = Self::init(file.config)?;
        ckpt.g_params = ckpt.generator.layout.import(&file.generator)?;
        ckpt.d_params = ckpt.discriminator.layout.import(&file.discriminator)?;
        if file.g_opt.m.len() != ckpt.g_params.len() || file.d_opt.m.len() != ckpt.d_params.len() {
            return Err(Error::Schema("optimizer state does not match parameter count".into()));
        }
        if ckpt.config.ladder.get(file.state.stage) != Some(&file.state.resolution) || !(0.0..=1.0).contains(&file.state.fade_alpha) {
            return Err(Error::Schema(format!("inconsistent progress state {:?}", file.state)));
        }
        ckpt.state = file.state;
        ckpt.g_opt = file.g_opt;
        ckpt.d_opt = file.d_opt;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// One image for one latent code, at the checkpoint's current resolution.
pub fn generator_forward<T: Scalar>(ckpt: &GanCheckpoint<T>, code: &LatentCode) -> Result<Tensor<T>> {
    ckpt.generate(std::slice::from_ref(code))
}

/// Critic outputs for a batch of images at the current resolution.
pub fn discriminator_forward<T: Scalar>(ckpt: &GanCheckpoint<T>, pixels: &Tensor<T>) -> Result<Vec<DiscriminatorOutput>> {
    let r = ckpt.resolution();
    if pixels.h != r || pixels.w != r || pixels.c != ckpt.config.image_channels {
        return Err(Error::Shape(format!(
            "critic at stage {} expects {}x{r}x{r} images, got {pixels:?}",
            ckpt.state.stage, ckpt.config.image_channels
        )));
    }
    let out = ckpt.discriminator.infer(&ckpt.d_params, pixels, ckpt.state.stage, ckpt.alpha());
    Ok((0..out.n)
        .map(|s| DiscriminatorOutput {
            realness: out.data[2 * s].as_f64(),
            beta_hat: out.data[2 * s + 1].as_f64(),
        })
        .collect())
}

/// One image per β, all sharing `z`, conditioned on the broadcast score.
pub fn generate_sequence<T: Scalar>(ckpt: &GanCheckpoint<T>, z: &[f64], betas: &[f64]) -> Result<Vec<Tensor<T>>> {
    let codes = betas
        .iter()
        .map(|&b| LatentCode::new(z.to_vec(), scalar_to_condition(b, ckpt.config.cond_dim)?))
        .collect::<Result<Vec<_>>>()?;
    if codes.is_empty() {
        return Ok(Vec::new());
    }
    Ok(ckpt.generate(&codes)?.samples().collect())
}
