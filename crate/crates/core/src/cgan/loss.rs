use serde::{Deserialize, Serialize};

use crate::cgan::{Discriminator, Generator};
use crate::scalar::{Dual, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cond: f64,
    pub lambda_gp: f64,
    pub cond_on_fakes: bool,
}

/// Inputs to one critic update. `mix[i]` is the interpolation weight of
/// real sample `i` in the gradient-penalty point.
pub struct DiscriminatorBatch<'a, T> {
    pub real: &'a Tensor<T>,
    pub real_beta: &'a [T],
    pub fake: &'a Tensor<T>,
    pub fake_beta: &'a [T],
    pub mix: &'a [T],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorLoss<T> {
    pub total: T,
    /// `mean(fake) − mean(real)`.
    pub wasserstein: T,
    pub gradient_penalty: T,
    /// Unweighted mean `(β − β̂)²` on real images.
    pub cond_real: T,
    pub cond_fake: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorLoss<T> {
    pub total: T,
    pub adversarial: T,
    pub cond: T,
}

fn column<T: Scalar>(out: &Tensor<T>, c: usize) -> impl Iterator<Item = T> + '_ {
    (0..out.n).map(move |s| out.data[s * 2 + c])
}

/// Mean conditioning loss, and its gradient scaled by `weight` written into
/// the β̂ channel of `grad`.
fn cond_term<T: Scalar>(out: &Tensor<T>, beta: &[T], weight: T, grad: &mut Tensor<T>) -> T {
    let inv_n = T::one() / T::from_usize_lossy(out.n);
    let mut sum = T::zero();
    for (s, (bh, &b)) in column(out, 1).zip(beta).enumerate() {
        let diff = bh - b;
        sum += diff * diff;
        grad.data[s * 2 + 1] = weight * T::lit(2.0) * diff * inv_n;
    }
    sum * inv_n
}

/// Critic loss `mean(D(fake)) − mean(D(real)) + λ_gp·GP + λ_cond·mean((β̂ − β)²)`
/// and its gradient w.r.t. the critic parameters.
pub fn discriminator_loss<T: Scalar>(
    d: &Discriminator,
    params: &[T],
    batch: &DiscriminatorBatch<'_, T>,
    weights: &LossWeights,
    stage: usize,
    alpha: T,
) -> (DiscriminatorLoss<T>, Vec<T>) {
    let n = batch.real.n;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let lambda_cond = T::lit(weights.lambda_cond);
    let mut grads = vec![T::zero(); params.len()];

    let (out_r, tape_r) = d.forward(params, batch.real, stage, alpha);
    let mut g_r = Tensor::zeros(n, 2, 1, 1);
    let cond_real = cond_term(&out_r, batch.real_beta, lambda_cond, &mut g_r);
    (0..n).for_each(|s| g_r.data[s * 2] = -inv_n);
    d.backward(params, &tape_r, &g_r, &mut grads);

    let (out_f, tape_f) = d.forward(params, batch.fake, stage, alpha);
    let mut g_f = Tensor::zeros(n, 2, 1, 1);
    let cond_fake = cond_term(&out_f, batch.fake_beta, lambda_cond, &mut g_f);
    if !weights.cond_on_fakes {
        (0..n).for_each(|s| g_f.data[s * 2 + 1] = T::zero());
    }
    (0..n).for_each(|s| g_f.data[s * 2] = inv_n);
    d.backward(params, &tape_f, &g_f, &mut grads);

    let wasserstein = (column(&out_f, 0).sum::<T>() - column(&out_r, 0).sum::<T>()) * inv_n;
    let gradient_penalty = if weights.lambda_gp > 0.0 {
        gradient_penalty(d, params, batch, T::lit(weights.lambda_gp), stage, alpha, &mut grads)
    } else {
        T::zero()
    };
    let mut total = wasserstein + T::lit(weights.lambda_gp) * gradient_penalty + lambda_cond * cond_real;
    if weights.cond_on_fakes {
        total += lambda_cond * cond_fake;
    }
    (
        DiscriminatorLoss {
            total,
            wasserstein,
            gradient_penalty,
            cond_real,
            cond_fake,
        },
        grads,
    )
}

/// `GP = mean_i (‖∇ₓ Σ_j D(x̂_j)‖_i − 1)²` at the interpolates, adding
/// `λ·∇_θ GP` to `grads`.
///
/// With `v = ∂(λ·GP)/∂g` held fixed, `∇_θ(λ·GP) = ∇_θ (v · ∇ₓF)`, which is the
/// directional derivative of `∇_θ F` along `v` in input space. One reverse
/// pass over dual numbers whose input tangent is `v` yields it exactly.
fn gradient_penalty<T: Scalar>(
    d: &Discriminator,
    params: &[T],
    batch: &DiscriminatorBatch<'_, T>,
    lambda: T,
    stage: usize,
    alpha: T,
    grads: &mut [T],
) -> T {
    let n = batch.real.n;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let per = batch.real.sample_len();
    let mut xhat = batch.real.clone();
    for s in 0..n {
        let e = batch.mix[s];
        let fake = batch.fake.sample_slice(s);
        for (v, &f) in xhat.sample_slice_mut(s).iter_mut().zip(fake) {
            *v = e * *v + (T::one() - e) * f;
        }
    }
    let mut seed = Tensor::zeros(n, 2, 1, 1);
    (0..n).for_each(|s| seed.data[s * 2] = T::one());

    let (_, tape) = d.forward(params, &xhat, stage, alpha);
    let mut scratch = vec![T::zero(); params.len()];
    let gx = d.backward(params, &tape, &seed, &mut scratch);

    let mut gp = T::zero();
    let mut tangent = vec![T::zero(); xhat.len()];
    for s in 0..n {
        let g = gx.sample_slice(s);
        let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        gp += (norm - T::one()) * (norm - T::one());
        if norm > T::zero() {
            let k = lambda * T::lit(2.0) * (norm - T::one()) * inv_n / norm;
            for (t, &v) in tangent[s * per..(s + 1) * per].iter_mut().zip(g) {
                *t = k * v;
            }
        }
    }

    let dual_params: Vec<Dual<T>> = params.iter().map(|&p| Dual::real(p)).collect();
    let data = xhat.data.iter().zip(&tangent).map(|(&x, &t)| Dual::new(x, t)).collect();
    let dual_x = Tensor::from_vec(xhat.n, xhat.c, xhat.h, xhat.w, data).expect("same shape as xhat");
    let (_, dual_tape) = d.forward(&dual_params, &dual_x, stage, Dual::real(alpha));
    let dual_seed = seed.map(Dual::real);
    let mut dual_grads = vec![Dual::<T>::default(); params.len()];
    d.backward(&dual_params, &dual_tape, &dual_seed, &mut dual_grads);
    for (g, dg) in grads.iter_mut().zip(&dual_grads) {
        *g += dg.eps;
    }
    gp * inv_n
}

/// Generator loss `−mean(D(G(z|c))) + λ_cond·mean((β_c − β̂)²)` and its
/// gradient w.r.t. the generator parameters.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<T: Scalar>(
    g: &Generator,
    g_params: &[T],
    d: &Discriminator,
    d_params: &[T],
    input: &Tensor<T>,
    cond_beta: &[T],
    weights: &LossWeights,
    stage: usize,
    alpha: T,
) -> (GeneratorLoss<T>, Vec<T>) {
    let n = input.n;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let (fake, tape_g) = g.forward(g_params, input, stage, alpha);
    let (out, tape_d) = d.forward(d_params, &fake, stage, alpha);
    let lambda_cond = T::lit(weights.lambda_cond);
    let mut grad_out = Tensor::zeros(n, 2, 1, 1);
    let cond = cond_term(&out, cond_beta, lambda_cond, &mut grad_out);
    (0..n).for_each(|s| grad_out.data[s * 2] = -inv_n);
    let adversarial = -column(&out, 0).sum::<T>() * inv_n;
    let mut scratch = vec![T::zero(); d_params.len()];
    let g_img = d.backward(d_params, &tape_d, &grad_out, &mut scratch);
    let mut grads = vec![T::zero(); g_params.len()];
    g.backward(g_params, &tape_g, &g_img, &mut grads);
    (
        GeneratorLoss {
            total: adversarial + lambda_cond * cond,
            adversarial,
            cond,
        },
        grads,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgan::GanConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> GanConfig {
        GanConfig {
            latent_dim: 3,
            cond_dim: 2,
            ladder: vec![4, 8],
            channels: vec![2, 2],
            ..GanConfig::default()
        }
    }

    fn images(n: usize, side: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_vec(
            n,
            3,
            side,
            side,
            (0..n * 3 * side * side).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_batches_cancel_without_conditioning() {
        let cfg = toy();
        let d = Discriminator::new(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params: Vec<f64> = d.layout.init(&mut rng);
        let x = images(3, 8, &mut rng);
        let beta = [0.2, 0.5, 0.9];
        let batch = DiscriminatorBatch {
            real: &x,
            real_beta: &beta,
            fake: &x,
            fake_beta: &beta,
            mix: &[0.3, 0.5, 0.1],
        };
        let w = LossWeights {
            lambda_cond: 0.0,
            lambda_gp: 0.0,
            cond_on_fakes: false,
        };
        let (loss, grads) = discriminator_loss(&d, &params, &batch, &w, 1, 0.5);
        assert!(loss.wasserstein.abs() < 1e-12);
        assert!(grads.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn penalty_is_zero_for_unit_norm_critic() {
        // A critic that is linear in its input with a unit-norm weight has
        // unit input gradient everywhere.
        let cfg = GanConfig {
            minibatch_std: false,
            ..toy()
        };
        let d = Discriminator::new(&cfg);
        let mut params = vec![0.0f64; d.layout.total()];
        // Route one input pixel through every layer with unit gain; LeakyReLU
        // sees only positive activations thanks to the biases.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = images(2, 4, &mut rng).map(|v| v * 0.1);
        for block in d.layout.blocks() {
            let r = block.range();
            // Stored value that makes the runtime-scaled weight exactly 1.
            let scale = |fan_in: usize| (fan_in as f64).sqrt() / std::f64::consts::SQRT_2;
            match block.name.as_str() {
                "d.from_rgb0.conv.weight" => params[r.start] = scale(3),
                "d.from_rgb0.conv.bias" => params[r.start] = 10.0,
                // centre tap of channel 0 → 0
                "d.head.conv.weight" => params[r.start + 4] = scale(2 * 9),
                "d.head.dense.weight" => params[r.start + 5] = scale(32),
                "d.head.out.weight" => params[r.start] = 2f64.sqrt(),
                _ => {}
            }
        }
        let gx = {
            let (_, t) = d.forward(&params, &x, 0, 1.0);
            let mut seed = Tensor::zeros(2, 2, 1, 1);
            seed.data[0] = 1.0;
            seed.data[2] = 1.0;
            let mut scratch = vec![0.0; params.len()];
            d.backward(&params, &t, &seed, &mut scratch)
        };
        for s in 0..2 {
            let norm = gx.sample_slice(s).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "{norm}");
        }
        let beta = [0.5, 0.5];
        let batch = DiscriminatorBatch {
            real: &x,
            real_beta: &beta,
            fake: &x,
            fake_beta: &beta,
            mix: &[0.4, 0.7],
        };
        let w = LossWeights {
            lambda_cond: 0.0,
            lambda_gp: 10.0,
            cond_on_fakes: false,
        };
        let (loss, _) = discriminator_loss(&d, &params, &batch, &w, 0, 1.0);
        assert!(loss.gradient_penalty.abs() < 1e-20);
    }
}
