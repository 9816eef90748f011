//! Latent inversion: recover `(ẑ, β̂)` for a target image by gradient descent
//! on a pixel + feature reconstruction loss, then re-synthesize at higher β.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cgan::{sample_latent, GanCheckpoint, GenTape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Maps images to feature vectors with a reverse pass for the loss gradient.
pub trait FeatureExtractor {
    type Tape<T: Scalar>;

    fn resolution(&self) -> usize;

    fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Self::Tape<T>)>;

    /// Gradient w.r.t. the images given the gradient w.r.t. the features.
    fn backward<T: Scalar>(&self, tape: &Self::Tape<T>, grad: &Tensor<T>) -> Tensor<T>;

    fn embed<T: Scalar>(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x)?.0)
    }
}

/// Features of a single image as a flat vector.
pub fn feature_embed<T: Scalar, E: FeatureExtractor>(extractor: &E, pixels: &Tensor<T>) -> Result<Vec<T>> {
    if pixels.n != 1 {
        return Err(Error::Shape(format!("feature_embed takes one image, got {pixels:?}")));
    }
    Ok(extractor.embed(pixels)?.data)
}

/// Empty feature space; the feature term of the loss is then always zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoFeatures;

impl FeatureExtractor for NoFeatures {
    type Tape<T: Scalar> = (usize, usize, usize, usize);

    fn resolution(&self) -> usize {
        0
    }

    fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Self::Tape<T>)> {
        Ok((Tensor::zeros(x.n, 0, 1, 1), (x.n, x.c, x.h, x.w)))
    }

    fn backward<T: Scalar>(&self, &(n, c, h, w): &Self::Tape<T>, _grad: &Tensor<T>) -> Tensor<T> {
        Tensor::zeros(n, c, h, w)
    }
}

fn check_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, alpha: f64) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!("candidate {a:?} and target {b:?} differ")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Range(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// `α·‖a − b‖² + (1 − α)·‖φ(a) − φ(b)‖²`.
pub fn combined_loss<T: Scalar, E: FeatureExtractor>(extractor: &E, candidate: &Tensor<T>, target: &Tensor<T>, alpha: f64) -> Result<T> {
    check_pair(candidate, target, alpha)?;
    let pixel = candidate.zip_map(target, |a, b| a - b).sum_sq();
    let feature = if alpha < 1.0 {
        extractor
            .embed(candidate)?
            .zip_map(&extractor.embed(target)?, |a, b| a - b)
            .sum_sq()
    } else {
        T::zero()
    };
    Ok(T::lit(alpha) * pixel + T::lit(1.0 - alpha) * feature)
}

/// Combined loss against fixed target features, with its candidate gradient.
fn loss_and_grad<T: Scalar, E: FeatureExtractor>(
    extractor: &E,
    candidate: &Tensor<T>,
    target: &Tensor<T>,
    target_features: Option<&Tensor<T>>,
    alpha: f64,
) -> Result<(T, Tensor<T>)> {
    let a = T::lit(alpha);
    let two = T::lit(2.0);
    let diff = candidate.zip_map(target, |x, y| x - y);
    let mut loss = a * diff.sum_sq();
    let mut grad = diff.map(|v| two * a * v);
    if let Some(tf) = target_features {
        let b = T::lit(1.0 - alpha);
        let (f, tape) = extractor.forward(candidate)?;
        let fdiff = f.zip_map(tf, |x, y| x - y);
        loss += b * fdiff.sum_sq();
        let back = extractor.backward(&tape, &fdiff.map(|v| two * b * v));
        for (g, v) in grad.data.iter_mut().zip(&back.data) {
            *g += *v;
        }
    }
    Ok((loss, grad))
}

/// Public form of the candidate gradient, for testing and reuse.
pub fn combined_loss_grad<T: Scalar, E: FeatureExtractor>(
    extractor: &E,
    candidate: &Tensor<T>,
    target: &Tensor<T>,
    alpha: f64,
) -> Result<(T, Tensor<T>)> {
    check_pair(candidate, target, alpha)?;
    let tf = if alpha < 1.0 { Some(extractor.embed(target)?) } else { None };
    loss_and_grad(extractor, candidate, target, tf.as_ref(), alpha)
}

/// A differentiable map `(z, condition) → image` for a single image.
pub trait Synthesizer<T: Scalar> {
    type Tape;

    fn latent_dim(&self) -> usize;

    fn cond_dim(&self) -> usize;

    fn synthesize(&self, z: &[T], condition: &[T]) -> (Tensor<T>, Self::Tape);

    /// Gradient w.r.t. `z ‖ condition`.
    fn input_grad(&self, tape: &Self::Tape, grad_image: &Tensor<T>) -> Vec<T>;
}

impl<T: Scalar> Synthesizer<T> for GanCheckpoint<T> {
    type Tape = GenTape<T>;

    fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn cond_dim(&self) -> usize {
        self.config.cond_dim
    }

    fn synthesize(&self, z: &[T], condition: &[T]) -> (Tensor<T>, GenTape<T>) {
        let input = Tensor::rows(1, z.len() + condition.len(), z.iter().chain(condition).copied().collect()).expect("one row");
        self.generator.forward(&self.g_params, &input, self.state.stage, self.alpha())
    }

    fn input_grad(&self, tape: &GenTape<T>, grad_image: &Tensor<T>) -> Vec<T> {
        let mut scratch = vec![T::zero(); self.g_params.len()];
        self.generator.backward(&self.g_params, tape, grad_image, &mut scratch).data
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `z` and `β` step together.
    Simultaneous,
    /// Even steps move `z`, odd steps move `β`.
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub eta: f64,
    /// Weight of the pixel term; the feature term gets `1 − alpha`.
    pub alpha: f64,
    pub max_steps: usize,
    pub restarts: usize,
    /// Stop once the loss improves by less than this fraction over 20 steps (0 disables).
    pub tolerance: f64,
    pub mode: UpdateMode,
    /// Classical momentum coefficient (0 is plain gradient descent).
    pub momentum: f64,
    /// Reject a step that raises the loss and halve η instead.
    pub backtrack: bool,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            alpha: 0.5,
            max_steps: 400,
            restarts: 3,
            tolerance: 0.0,
            mode: UpdateMode::Simultaneous,
            momentum: 0.0,
            backtrack: true,
            seed: 0,
        }
    }
}

impl InversionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Range(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.tolerance >= 0.0) {
            return Err(Error::Config("momentum must lie in [0, 1) and tolerance be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InversionResult<T> {
    pub z_hat: Vec<f64>,
    pub beta_hat: f64,
    /// Combined loss at initialization and after every step.
    pub loss_trace: Vec<f64>,
    pub reconstruction: Tensor<T>,
    /// Which restart won.
    pub restart: usize,
    pub restart_losses: Vec<f64>,
}

impl<T> InversionResult<T> {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the initial loss")
    }
}

struct Objective<'a, T: Scalar, G, E: FeatureExtractor> {
    generator: &'a G,
    extractor: &'a E,
    target: &'a Tensor<T>,
    target_features: Option<Tensor<T>>,
    alpha: f64,
}

struct Point<T> {
    z: Vec<T>,
    beta: T,
    loss: T,
    grad_z: Vec<T>,
    grad_beta: T,
}

impl<T: Scalar, G: Synthesizer<T>, E: FeatureExtractor> Objective<'_, T, G, E> {
    fn eval(&self, z: Vec<T>, beta: T) -> Result<Point<T>> {
        let k = self.generator.cond_dim();
        let (img, tape) = self.generator.synthesize(&z, &vec![beta; k]);
        let (loss, grad_img) = loss_and_grad(self.extractor, &img, self.target, self.target_features.as_ref(), self.alpha)?;
        let g = self.generator.input_grad(&tape, &grad_img);
        let d = z.len();
        // The broadcast condition shares β, so its gradient sums.
        let grad_beta = g[d..].iter().copied().sum();
        Ok(Point {
            z,
            beta,
            loss,
            grad_z: g[..d].to_vec(),
            grad_beta,
        })
    }
}

/// Inversion objective at `(z, β)` with its gradient w.r.t. `z` and `β`.
pub fn objective_grad<T: Scalar, G: Synthesizer<T>, E: FeatureExtractor>(
    target: &Tensor<T>,
    generator: &G,
    extractor: &E,
    alpha: f64,
    z: &[T],
    beta: T,
) -> Result<(T, Vec<T>, T)> {
    let target_features = if alpha < 1.0 { Some(extractor.embed(target)?) } else { None };
    let objective = Objective {
        generator,
        extractor,
        target,
        target_features,
        alpha,
    };
    let p = objective.eval(z.to_vec(), beta)?;
    Ok((p.loss, p.grad_z, p.grad_beta))
}

fn project(beta: f64) -> f64 {
    beta.clamp(0.0, 1.0)
}

/// Gradient descent on `(z, β)` from `z₀ ~ N(0, I)`, `β₀ = 0.5`, with β
/// projected to `[0, 1]` after each step. Returns the best of the restarts.
pub fn invert_with<T: Scalar, G: Synthesizer<T>, E: FeatureExtractor>(
    target: &Tensor<T>,
    generator: &G,
    extractor: &E,
    config: &InversionConfig,
) -> Result<InversionResult<T>> {
    config.validate()?;
    let d = generator.latent_dim();
    let probe = generator
        .synthesize(&vec![T::zero(); d], &vec![T::lit(0.5); generator.cond_dim()])
        .0;
    if target.n != 1 || !probe.same_shape(target) {
        return Err(Error::Shape(format!("target {target:?} does not match generator output {probe:?}")));
    }
    let target_features = if config.alpha < 1.0 { Some(extractor.embed(target)?) } else { None };
    let objective = Objective {
        generator,
        extractor,
        target,
        target_features,
        alpha: config.alpha,
    };

    let mut best: Option<InversionResult<T>> = None;
    let mut restart_losses = Vec::with_capacity(config.restarts);
    let mut failures = Vec::new();
    for r in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        let z0: Vec<T> = sample_latent(&mut rng, d).into_iter().map(T::lit).collect();
        match descend(&objective, z0, config) {
            Ok((point, trace)) => {
                let final_loss = *trace.last().expect("non-empty");
                restart_losses.push(final_loss);
                if best.as_ref().is_none_or(|b| final_loss < b.final_loss()) {
                    let reconstruction = generator.synthesize(&point.z, &vec![point.beta; generator.cond_dim()]).0;
                    best = Some(InversionResult {
                        z_hat: point.z.iter().map(|v| v.as_f64()).collect(),
                        beta_hat: point.beta.as_f64(),
                        loss_trace: trace,
                        reconstruction,
                        restart: r,
                        restart_losses: Vec::new(),
                    });
                }
            }
            Err(e) => {
                restart_losses.push(f64::NAN);
                failures.push(format!("restart {r}: {e}"));
            }
        }
    }
    let mut result = best.ok_or_else(|| Error::Inversion(format!("all restarts failed ({})", failures.join("; "))))?;
    result.restart_losses = restart_losses;
    Ok(result)
}

fn descend<T: Scalar, G: Synthesizer<T>, E: FeatureExtractor>(
    objective: &Objective<'_, T, G, E>,
    z0: Vec<T>,
    config: &InversionConfig,
) -> Result<(Point<T>, Vec<f64>)> {
    let mut cur = objective.eval(z0, T::lit(0.5))?;
    if !cur.loss.is_finite() {
        return Err(Error::Inversion("non-finite loss at initialization".into()));
    }
    let mut trace = vec![cur.loss.as_f64()];
    let mut eta = config.eta;
    let mu = T::lit(config.momentum);
    let mut vz = vec![T::zero(); cur.z.len()];
    let mut vb = T::zero();
    for step in 0..config.max_steps {
        let (move_z, move_b) = match config.mode {
            UpdateMode::Simultaneous => (true, true),
            UpdateMode::Alternating => (step % 2 == 0, step % 2 == 1),
        };
        let lr = T::lit(eta);
        let mut z = cur.z.clone();
        if move_z {
            for ((zi, v), &g) in z.iter_mut().zip(&mut vz).zip(&cur.grad_z) {
                *v = mu * *v - lr * g;
                *zi += *v;
            }
        }
        let mut beta = cur.beta;
        if move_b {
            vb = mu * vb - lr * cur.grad_beta;
            beta = T::lit(project((cur.beta + vb).as_f64()));
        }
        let next = objective.eval(z, beta)?;
        let accept = next.loss.is_finite() && (!config.backtrack || next.loss <= cur.loss);
        if accept {
            cur = next;
        } else if config.backtrack {
            eta *= 0.5;
            vz.iter_mut().for_each(|v| *v = T::zero());
            vb = T::zero();
        } else {
            return Err(Error::Inversion(format!("non-finite loss at step {step}")));
        }
        trace.push(cur.loss.as_f64());
        if config.tolerance > 0.0 && trace.len() > 20 {
            let old = trace[trace.len() - 21];
            if old - cur.loss.as_f64() < config.tolerance * old.abs() {
                break;
            }
        }
    }
    Ok((cur, trace))
}

/// [`invert_with`] against a GAN checkpoint at its current stage.
pub fn invert<T: Scalar, E: FeatureExtractor>(
    target: &Tensor<T>,
    ckpt: &GanCheckpoint<T>,
    extractor: &E,
    config: &InversionConfig,
) -> Result<InversionResult<T>> {
    invert_with(target, ckpt, extractor, config)
}

/// Inverts `target`, then re-synthesizes at `clip(β̂ + Δ, 0, 1)` for each Δ.
pub fn beautify<T: Scalar, E: FeatureExtractor>(
    target: &Tensor<T>,
    ckpt: &GanCheckpoint<T>,
    extractor: &E,
    config: &InversionConfig,
    deltas: &[f64],
) -> Result<(InversionResult<T>, Vec<Tensor<T>>)> {
    if let Some(bad) = deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::Input(format!("beautify deltas must be positive, got {bad}")));
    }
    let result = invert(target, ckpt, extractor, config)?;
    let z: Vec<T> = result.z_hat.iter().map(|&v| T::lit(v)).collect();
    let images = deltas
        .iter()
        .map(|&delta| {
            let beta = T::lit(project(result.beta_hat + delta));
            ckpt.synthesize(&z, &vec![beta; ckpt.config.cond_dim]).0
        })
        .collect();
    Ok((result, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgan::GanConfig;
    use crate::nn::{Layer, ParamLayout, Stack, StackBuilder, Tape};
    use rand::Rng;

    /// Tiny conv feature net used as a stand-in extractor.
    struct ConvFeatures {
        stack: Stack,
        params: Vec<f64>,
    }

    impl ConvFeatures {
        fn new(seed: u64) -> Self {
            let mut layout = ParamLayout::new();
            let stack = StackBuilder::new(&mut layout, "f", false)
                .conv("c", 3, 2, 3, 1.4)
                .layer(Layer::LeakyRelu)
                .layer(Layer::Downsample)
                .build();
            let params = layout.init(&mut ChaCha8Rng::seed_from_u64(seed));
            Self { stack, params }
        }
    }

    impl FeatureExtractor for ConvFeatures {
        type Tape<T: Scalar> = (Vec<T>, Tape<T>);

        fn resolution(&self) -> usize {
            4
        }

        fn forward<T: Scalar>(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Self::Tape<T>)> {
            let p: Vec<T> = crate::nn::cast_params(&self.params);
            let (f, t) = self.stack.forward(&p, x);
            Ok((f, (p, t)))
        }

        fn backward<T: Scalar>(&self, (p, t): &Self::Tape<T>, grad: &Tensor<T>) -> Tensor<T> {
            let mut scratch = vec![T::zero(); p.len()];
            self.stack.backward(p, t, grad, &mut scratch)
        }
    }

    /// `x = A·[z; c] + b` reshaped to an image.
    struct Linear {
        a: Vec<f64>,
        b: Vec<f64>,
        d: usize,
        k: usize,
        side: usize,
    }

    impl Synthesizer<f64> for Linear {
        type Tape = ();

        fn latent_dim(&self) -> usize {
            self.d
        }

        fn cond_dim(&self) -> usize {
            self.k
        }

        fn synthesize(&self, z: &[f64], c: &[f64]) -> (Tensor<f64>, ()) {
            let input: Vec<f64> = z.iter().chain(c).copied().collect();
            let m = input.len();
            let out = self
                .b
                .iter()
                .enumerate()
                .map(|(i, b)| b + (0..m).map(|j| self.a[i * m + j] * input[j]).sum::<f64>())
                .collect();
            (Tensor::from_vec(1, 1, self.side, self.side, out).unwrap(), ())
        }

        fn input_grad(&self, _: &(), g: &Tensor<f64>) -> Vec<f64> {
            let m = self.d + self.k;
            (0..m)
                .map(|j| g.data.iter().enumerate().map(|(i, gi)| self.a[i * m + j] * gi).sum())
                .collect()
        }
    }

    fn random_image(seed: u64, side: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            1,
            3,
            side,
            side,
            (0..3 * side * side).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn combined_loss_endpoints() {
        let f = ConvFeatures::new(1);
        let (x, y) = (random_image(1, 4), random_image(2, 4));
        for alpha in [0.0, 0.3, 1.0] {
            assert_eq!(combined_loss(&f, &x, &x, alpha).unwrap(), 0.0);
            let ab = combined_loss(&f, &x, &y, alpha).unwrap();
            assert!(ab > 0.0 && (ab - combined_loss(&f, &y, &x, alpha).unwrap()).abs() < 1e-12);
        }
        let direct: f64 = x.data.iter().zip(&y.data).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((combined_loss(&f, &x, &y, 1.0).unwrap() - direct).abs() < 1e-12);
        let fx = feature_embed(&f, &x).unwrap();
        let fy = feature_embed(&f, &y).unwrap();
        let feat: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((combined_loss(&f, &x, &y, 0.0).unwrap() - feat).abs() < 1e-12);
        assert!(matches!(combined_loss(&f, &x, &random_image(3, 8), 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_generator_reaches_least_squares() {
        // Two latent dims and one condition; the target lies off the range so
        // the optimum is the unconstrained least-squares point (β inside [0,1]).
        let (d, k, side) = (2, 1, 2);
        let a = vec![1.0, 0.0, 0.5, 0.0, 1.0, -0.5, 1.0, 1.0, 1.0, 0.5, -1.0, 2.0];
        let g = Linear {
            a: a.clone(),
            b: vec![0.1, -0.2, 0.0, 0.3],
            d,
            k,
            side,
        };
        let target = Tensor::from_vec(1, 1, 2, 2, vec![0.9, 0.2, 1.4, 1.1]).unwrap();
        // Normal equations AᵀA u = Aᵀ(t − b), solved by Cramer's rule.
        let m = 3;
        let rhs: Vec<f64> = (0..4).map(|i| target.data[i] - g.b[i]).collect();
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        for i in 0..4 {
            for p in 0..m {
                atb[p] += a[i * m + p] * rhs[i];
                for q in 0..m {
                    ata[p][q] += a[i * m + p] * a[i * m + q];
                }
            }
        }
        let det3 = |mm: [[f64; 3]; 3]| {
            mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
                + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0])
        };
        let det = det3(ata);
        let solve = |col: usize| {
            let mut mm = ata;
            (0..3).for_each(|r| mm[r][col] = atb[r]);
            det3(mm) / det
        };
        let exact = [solve(0), solve(1), solve(2)];
        assert!((0.0..=1.0).contains(&exact[2]), "{exact:?}");
        let cfg = InversionConfig {
            alpha: 1.0,
            eta: 0.05,
            max_steps: 5000,
            restarts: 2,
            ..InversionConfig::default()
        };
        let r = invert_with(&target, &g, &NoFeatures, &cfg).unwrap();
        assert!(
            (r.z_hat[0] - exact[0]).abs() < 1e-4 && (r.z_hat[1] - exact[1]).abs() < 1e-4,
            "{:?} vs {exact:?}",
            r.z_hat
        );
        assert!((r.beta_hat - exact[2]).abs() < 1e-4);
        {
            let mode = UpdateMode::Alternating;
            let r = invert_with(
                &target,
                &g,
                &NoFeatures,
                &InversionConfig {
                    mode,
                    momentum: 0.5,
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert!((r.beta_hat - exact[2]).abs() < 1e-4);
        }
    }

    fn toy_checkpoint() -> GanCheckpoint<f64> {
        let cfg = GanConfig {
            latent_dim: 3,
            cond_dim: 2,
            ladder: vec![4],
            channels: vec![3],
            ..GanConfig::default()
        };
        GanCheckpoint::init(cfg).unwrap()
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let ckpt = toy_checkpoint();
        let target = random_image(4, 4);
        let cfg = InversionConfig {
            max_steps: 0,
            restarts: 1,
            ..InversionConfig::default()
        };
        let r = invert(&target, &ckpt, &ConvFeatures::new(2), &cfg).unwrap();
        assert_eq!(r.loss_trace.len(), 1);
        assert_eq!(r.beta_hat, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        rng.set_stream(0);
        assert_eq!(r.z_hat, sample_latent(&mut rng, 3));
    }

    #[test]
    fn trace_never_rises_and_beta_stays_projected() {
        let ckpt = toy_checkpoint();
        let target = random_image(5, 4).map(|v| v * 0.5);
        let cfg = InversionConfig {
            max_steps: 60,
            eta: 5.0,
            ..InversionConfig::default()
        };
        let (r, imgs) = beautify(&target, &ckpt, &ConvFeatures::new(2), &cfg, &[0.1, 0.2, 2.0]).unwrap();
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.final_loss() <= r.initial_loss());
        assert!((0.0..=1.0).contains(&r.beta_hat));
        assert_eq!(imgs.len(), 3);
        let clipped = ckpt.synthesize(&r.z_hat, &[1.0, 1.0]).0;
        assert_eq!(imgs[2], clipped);
        assert!(matches!(
            beautify(&target, &ckpt, &NoFeatures, &cfg, &[0.1, -0.1]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn wrong_target_size_is_shape_error() {
        let ckpt = toy_checkpoint();
        let err = invert(&random_image(1, 8), &ckpt, &NoFeatures, &InversionConfig::default());
        assert!(matches!(err, Err(Error::Shape(_))));
    }
}
