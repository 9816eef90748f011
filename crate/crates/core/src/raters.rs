//! Per-rater beauty predictors and the ensemble that labels unrated faces.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, RatedImage};
use crate::error::{Error, Result};
use crate::inversion::FeatureExtractor;
use crate::nn::{cast_params, Layer, Momentum, NamedBlock, ParamLayout, Stack, StackBuilder, Tape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Convolutional regressor shape: one 3×3 conv + 2× pool per entry of
/// `conv_channels`, then a hidden dense layer (the feature trunk ends
/// there) and a sigmoid output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterArch {
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
}

impl Default for RaterArch {
    fn default() -> Self {
        Self {
            conv_channels: vec![8, 16, 16],
            hidden: 32,
        }
    }
}

impl RaterArch {
    pub fn tag(&self) -> String {
        let convs: Vec<String> = self.conv_channels.iter().map(|c| c.to_string()).collect();
        format!("conv{}-h{}", convs.join("-"), self.hidden)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaterNet {
    pub arch: RaterArch,
    pub resolution: usize,
    pub channels: usize,
    layout: ParamLayout,
    trunk: Stack,
    head: Stack,
}

impl RaterNet {
    pub fn new(arch: &RaterArch, resolution: usize, channels: usize) -> Result<Self> {
        let pools = arch.conv_channels.len();
        if arch.conv_channels.is_empty() || arch.hidden == 0 || arch.conv_channels.contains(&0) {
            return Err(Error::Config(format!("invalid rater architecture {arch:?}")));
        }
        if !resolution.is_multiple_of(1 << pools) || resolution >> pools == 0 {
            return Err(Error::Config(format!("resolution {resolution} cannot be pooled {pools} times")));
        }
        let mut layout = ParamLayout::new();
        let gain = 2f64.sqrt();
        let mut b = StackBuilder::new(&mut layout, "trunk", false);
        let mut cin = channels;
        for (i, &c) in arch.conv_channels.iter().enumerate() {
            b = b
                .conv(&format!("conv{i}"), cin, c, 3, gain)
                .layer(Layer::LeakyRelu)
                .layer(Layer::Downsample);
            cin = c;
        }
        let side = resolution >> pools;
        let flat = cin * side * side;
        let trunk = b
            .layer(Layer::Reshape { c: flat, h: 1, w: 1 })
            .dense("hidden", flat, arch.hidden, gain)
            .layer(Layer::LeakyRelu)
            .build();
        let head = StackBuilder::new(&mut layout, "head", false)
            .dense("out", arch.hidden, 1, 1.0)
            .layer(Layer::Sigmoid)
            .build();
        Ok(Self {
            arch: arch.clone(),
            resolution,
            channels,
            layout,
            trunk,
            head,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn check_input<T: Scalar>(&self, x: &Tensor<T>) -> Result<()> {
        if x.h != self.resolution || x.w != self.resolution || x.c != self.channels {
            return Err(Error::Shape(format!(
                "rater expects {}x{}x{} input, got {x:?}",
                self.channels, self.resolution, self.resolution
            )));
        }
        Ok(())
    }

    pub fn predict<T: Scalar>(&self, params: &[T], x: &Tensor<T>) -> Result<Vec<T>> {
        self.check_input(x)?;
        let features = self.trunk.infer(params, x);
        Ok(self.head.infer(params, &features).data)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaterModel {
    pub rater_index: usize,
    pub net: RaterNet,
    pub params: Vec<f32>,
    /// Full-corpus MSE before training, then the running MSE of each epoch.
    pub train_loss_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RaterTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub arch: RaterArch,
}

impl Default for RaterTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
            arch: RaterArch::default(),
        }
    }
}

/// What a rater model regresses onto.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RaterTarget {
    /// One human rater's column.
    Rater(usize),
    /// Mean of all ratings.
    MeanScore,
    /// The synthetic ground-truth knob (oracle rater).
    GroundTruth,
}

fn targets(corpus: &Corpus, target: RaterTarget) -> Result<Vec<f64>> {
    match target {
        RaterTarget::Rater(r) => {
            if r >= corpus.rater_count {
                return Err(Error::Range(format!("rater index {r} outside 0..{}", corpus.rater_count)));
            }
            Ok(corpus.rater_column(r))
        }
        RaterTarget::MeanScore => Ok(corpus.mean_scores()),
        RaterTarget::GroundTruth => corpus
            .ground_truth
            .clone()
            .ok_or_else(|| Error::Input("corpus has no ground truth to train an oracle on".into())),
    }
}

fn batch_of(items: &[RatedImage], idx: &[usize]) -> Tensor<f32> {
    Tensor::stack(idx.iter().map(|&i| &items[i].pixels)).expect("corpus images share a shape")
}

/// Trains one regressor by minibatch SGD with momentum on squared error.
pub fn train_regressor(corpus: &Corpus, target: RaterTarget, config: &RaterTrainConfig) -> Result<RaterModel> {
    if corpus.is_empty() {
        return Err(Error::Training("cannot train a rater on an empty corpus".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let y = targets(corpus, target)?;
    let net = RaterNet::new(&config.arch, corpus.resolution, corpus.channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params: Vec<f32> = net.layout.init(&mut rng);
    let mut opt = Momentum::new(params.len(), config.lr, config.momentum);
    let mut trace = vec![corpus_mse(&net, &params, corpus, &y)];
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut grads = vec![0.0f32; params.len()];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sq = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = batch_of(&corpus.items, chunk);
            let (feat, trunk_tape) = net.trunk.forward(&params, &x);
            let (pred, head_tape) = net.head.forward(&params, &feat);
            let inv_n = 1.0 / chunk.len() as f32;
            let mut g = Tensor::zeros(pred.n, 1, 1, 1);
            for (k, &i) in chunk.iter().enumerate() {
                let err = pred.data[k] - y[i] as f32;
                epoch_sq += (err * err) as f64;
                g.data[k] = 2.0 * err * inv_n;
            }
            grads.iter_mut().for_each(|v| *v = 0.0);
            let gf = net.head.backward(&params, &head_tape, &g, &mut grads);
            net.trunk.backward(&params, &trunk_tape, &gf, &mut grads);
            opt.step(&mut params, &grads);
        }
        let mse = epoch_sq / corpus.len() as f64;
        if !mse.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical {
                step: epoch as u64,
                what: "rater training diverged".into(),
            });
        }
        trace.push(mse);
    }
    let rater_index = match target {
        RaterTarget::Rater(r) => r,
        _ => 0,
    };
    Ok(RaterModel {
        rater_index,
        net,
        params,
        train_loss_trace: trace,
    })
}

fn corpus_mse(net: &RaterNet, params: &[f32], corpus: &Corpus, y: &[f64]) -> f64 {
    let mut sq = 0.0;
    let idx: Vec<usize> = (0..corpus.len()).collect();
    for chunk in idx.chunks(64) {
        let pred = net.predict(params, &batch_of(&corpus.items, chunk)).expect("corpus matches net");
        for (p, &i) in pred.iter().zip(chunk) {
            sq += (*p as f64 - y[i]).powi(2);
        }
    }
    sq / corpus.len() as f64
}

/// Trains the model for one human rater's column.
pub fn train_rater(corpus: &Corpus, rater_index: usize, epochs: usize, seed: u64) -> Result<RaterModel> {
    let config = RaterTrainConfig {
        epochs,
        seed,
        ..RaterTrainConfig::default()
    };
    train_regressor(corpus, RaterTarget::Rater(rater_index), &config)
}

impl RaterModel {
    pub fn resolution(&self) -> usize {
        self.net.resolution
    }

    /// Scores in `[0, 1]` for each image of the batch.
    pub fn predict(&self, x: &Tensor<f32>) -> Result<Vec<f32>> {
        self.net.predict(&self.params, x)
    }

    pub fn predict_one(&self, x: &Tensor<f32>) -> Result<f64> {
        Ok(self.predict(x)?[0] as f64)
    }

    pub fn final_loss(&self) -> f64 {
        *self.train_loss_trace.last().unwrap_or(&f64::NAN)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = RaterFile {
            format: "facegen.rater/1".into(),
            rater_index: self.rater_index,
            resolution: self.net.resolution,
            channels: self.net.channels,
            arch: self.net.arch.clone(),
            train_loss_trace: self.train_loss_trace.clone(),
            params: self.net.layout.export(&self.params),
        };
        write_json(path, &file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: RaterFile = read_json(path)?;
        let net = RaterNet::new(&file.arch, file.resolution, file.channels)?;
        let params = net.layout.import(&file.params)?;
        Ok(Self {
            rater_index: file.rater_index,
            net,
            params,
            train_loss_trace: file.train_loss_trace,
        })
    }
}

/// Trunk activations of a rater (output layer removed) as image features.
pub struct TrunkTape<T> {
    params: Vec<T>,
    tape: Tape<T>,
}

impl FeatureExtractor for RaterModel {
    type Tape<T: Scalar> = TrunkTape<T>;

    fn resolution(&self) -> usize {
        self.net.resolution
    }

    fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, TrunkTape<T>)> {
        self.net.check_input(x)?;
        let params: Vec<T> = cast_params(&self.params);
        let (f, tape) = self.net.trunk.forward(&params, x);
        Ok((f, TrunkTape { params, tape }))
    }

    fn backward<T: Scalar>(&self, tape: &TrunkTape<T>, grad: &Tensor<T>) -> Tensor<T> {
        let mut scratch = vec![T::zero(); tape.params.len()];
        self.net.trunk.backward(&tape.params, &tape.tape, grad, &mut scratch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaterEnsemble {
    pub models: Vec<RaterModel>,
    pub resolution: usize,
}

#[derive(Serialize, Deserialize)]
struct RaterFile {
    format: String,
    rater_index: usize,
    resolution: usize,
    channels: usize,
    arch: RaterArch,
    train_loss_trace: Vec<f64>,
    params: Vec<NamedBlock<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub rater_count: usize,
    pub resolution: usize,
    pub channels: usize,
    pub architecture: String,
    pub files: Vec<String>,
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string(value)?).map_err(|e| Error::io(path, e))
}

fn read_json<S: for<'de> Deserialize<'de>>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl RaterEnsemble {
    pub fn new(mut models: Vec<RaterModel>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::Input("ensemble needs at least one model".into()))?;
        let resolution = first.resolution();
        models.sort_by_key(|m| m.rater_index);
        for (i, m) in models.iter().enumerate() {
            if m.rater_index != i {
                return Err(Error::Schema(format!("ensemble is missing rater {i}")));
            }
            if m.resolution() != resolution {
                return Err(Error::Shape("ensemble models disagree on resolution".into()));
            }
        }
        Ok(Self { models, resolution })
    }

    /// One model per rater column of the corpus.
    pub fn train(corpus: &Corpus, config: &RaterTrainConfig) -> Result<Self> {
        let models = (0..corpus.rater_count)
            .map(|r| {
                let cfg = RaterTrainConfig {
                    seed: config.seed.wrapping_add(r as u64),
                    ..config.clone()
                };
                train_regressor(corpus, RaterTarget::Rater(r), &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Per-rater predictions for one image and their mean.
    pub fn predict_ratings(&self, pixels: &Tensor<f32>) -> Result<(Vec<f64>, f64)> {
        if pixels.n != 1 {
            return Err(Error::Shape(format!("predict_ratings takes one image, got {pixels:?}")));
        }
        let ratings = self.models.iter().map(|m| m.predict_one(pixels)).collect::<Result<Vec<f64>>>()?;
        let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
        Ok((ratings, mean))
    }

    /// Rates every image with the ensemble; the result has no ground truth.
    pub fn label_corpus(&self, images: &[(String, Tensor<f32>)]) -> Result<Corpus> {
        let channels = self.models[0].net.channels;
        let mut items = Vec::with_capacity(images.len());
        for (id, px) in images {
            let (ratings, _) = self.predict_ratings(px)?;
            items.push(RatedImage::new(id.clone(), px.clone(), ratings)?);
        }
        Corpus::new(items, self.len(), self.resolution, channels)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.len());
        for m in &self.models {
            let name = format!("rater_{:03}.json", m.rater_index);
            m.save(&dir.join(&name))?;
            files.push(name);
        }
        let manifest = EnsembleManifest {
            format: "facegen.ensemble/1".into(),
            rater_count: self.len(),
            resolution: self.resolution,
            channels: self.models[0].net.channels,
            architecture: self.models[0].net.arch.tag(),
            files,
        };
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: EnsembleManifest = read_json(&dir.join("manifest.json"))?;
        let models = manifest
            .files
            .iter()
            .map(|f| RaterModel::load(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        if models.len() != manifest.rater_count {
            return Err(Error::Schema("ensemble manifest count does not match files".into()));
        }
        Self::new(models)
    }
}
