use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Conventional five-scale weights.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Pixel range is `[-1, 1]`.
pub const DYNAMIC_RANGE: f64 = 2.0;
const FILTER_SIZE: usize = 11;
const FILTER_SIGMA: f64 = 1.5;
/// Smallest side that still leaves two scales.
pub const MIN_MS_SSIM_SIZE: usize = 4;

/// Number of scales used for a given side length: at most five, with the
/// coarsest scale at least 2 pixels wide.
pub fn scale_count(side: usize) -> usize {
    let mut m = 1;
    while m < MS_SSIM_WEIGHTS.len() && side >> m >= 2 {
        m += 1;
    }
    m
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable 'valid' filtering of one plane.
fn filter_valid<T: Scalar>(plane: &[T], h: usize, w: usize, k: &[T]) -> (Vec<T>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut tmp = vec![T::zero(); h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..n).map(|t| k[t] * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|t| k[t] * tmp[(y + t) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM and contrast-structure over all channels at one scale.
fn ssim_cs<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> (T, T) {
    let size = FILTER_SIZE.min(a.h).min(a.w);
    let sigma = FILTER_SIGMA * size as f64 / FILTER_SIZE as f64;
    let k: Vec<T> = gaussian_window(size, sigma).into_iter().map(T::lit).collect();
    let c1 = T::lit((0.01 * DYNAMIC_RANGE).powi(2));
    let c2 = T::lit((0.03 * DYNAMIC_RANGE).powi(2));
    let two = T::lit(2.0);
    let plane = a.plane();
    let (mut ssim_sum, mut cs_sum, mut count) = (T::zero(), T::zero(), 0usize);
    for c in 0..a.c {
        let pa = &a.sample_slice(0)[c * plane..(c + 1) * plane];
        let pb = &b.sample_slice(0)[c * plane..(c + 1) * plane];
        let aa: Vec<T> = pa.iter().map(|&v| v * v).collect();
        let bb: Vec<T> = pb.iter().map(|&v| v * v).collect();
        let ab: Vec<T> = pa.iter().zip(pb).map(|(&x, &y)| x * y).collect();
        let (mu_a, ..) = filter_valid(pa, a.h, a.w, &k);
        let (mu_b, ..) = filter_valid(pb, a.h, a.w, &k);
        let (e_aa, ..) = filter_valid(&aa, a.h, a.w, &k);
        let (e_bb, ..) = filter_valid(&bb, a.h, a.w, &k);
        let (e_ab, ..) = filter_valid(&ab, a.h, a.w, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let cs = (two * cov + c2) / (var_a + var_b + c2);
            let lum = (two * ma * mb + c1) / (ma * ma + mb * mb + c1);
            ssim_sum += lum * cs;
            cs_sum += cs;
        }
        count += mu_a.len();
    }
    let inv = T::one() / T::from_usize_lossy(count);
    (ssim_sum * inv, cs_sum * inv)
}

fn halve<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    crate::nn::ops::downsample_forward(x)
}

/// Multi-scale structural similarity of two single images in `[-1, 1]`.
pub fn ms_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    if !a.same_shape(b) || a.n != 1 {
        return Err(Error::Shape(format!(
            "ms_ssim needs two single images of equal shape, got {a:?} and {b:?}"
        )));
    }
    let side = a.h.min(a.w);
    if side < MIN_MS_SSIM_SIZE || !a.h.is_multiple_of(2) || !a.w.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "ms_ssim needs even sides of at least {MIN_MS_SSIM_SIZE}, got {}x{}",
            a.h, a.w
        )));
    }
    let scales = scale_count(side);
    let wsum: f64 = MS_SSIM_WEIGHTS[..scales].iter().sum();
    let mut cur_a = a.clone();
    let mut cur_b = b.clone();
    let mut result = T::one();
    for (s, &weight) in MS_SSIM_WEIGHTS[..scales].iter().enumerate() {
        let (ssim, cs) = ssim_cs(&cur_a, &cur_b);
        let w = T::lit(weight / wsum);
        if s + 1 == scales {
            result *= ssim.max(T::zero()).powf(w);
        } else {
            result *= cs.max(T::zero()).powf(w);
            cur_a = halve(&cur_a);
            cur_b = halve(&cur_b);
        }
    }
    Ok(result.min(T::one()))
}

/// Mean MS-SSIM over `pairs` random distinct pairs; lower means a more
/// diverse sample set.
pub fn ms_ssim_diversity<T: Scalar>(images: &[Tensor<T>], pairs: usize, seed: u64) -> Result<T> {
    if images.len() < 2 {
        return Err(Error::Input(format!("diversity needs at least 2 images, got {}", images.len())));
    }
    if pairs == 0 {
        return Err(Error::Config("pairs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = T::zero();
    for _ in 0..pairs {
        let i = rng.random_range(0..images.len());
        let mut j = rng.random_range(0..images.len() - 1);
        if j >= i {
            j += 1;
        }
        total += ms_ssim(&images[i], &images[j])?;
    }
    Ok(total / T::from_usize_lossy(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn noise_image(seed: u64, side: usize) -> Tensor<f64> {
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
    fn scale_count_adapts() {
        assert_eq!(scale_count(32), 5);
        assert_eq!(scale_count(128), 5);
        assert_eq!(scale_count(16), 4);
        assert_eq!(scale_count(4), 2);
    }

    #[test]
    fn identical_images_score_one() {
        let x = noise_image(1, 32);
        assert!((ms_ssim(&x, &x).unwrap() - 1.0).abs() < 1e-6);
        let flat = Tensor::from_vec(1, 3, 16, 16, vec![0.25f64; 768]).unwrap();
        assert!((ms_ssim(&flat, &flat.clone()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_decreasing_in_noise() {
        let base = crate::dataset::synth_face(3, 0.6, 32).unwrap().cast::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let field: Vec<f64> = (0..base.len()).map(|_| rng.sample(StandardNormal)).collect();
        let mut last = 1.0;
        for sigma in [0.01, 0.05, 0.1, 0.2] {
            let noisy = Tensor::from_vec(1, 3, 32, 32, base.data.iter().zip(&field).map(|(v, e)| v + sigma * e).collect()).unwrap();
            let s = ms_ssim(&base, &noisy).unwrap();
            assert!((s - ms_ssim(&noisy, &base).unwrap()).abs() < 1e-12);
            assert!(s < last, "sigma {sigma}: {s} >= {last}");
            last = s;
        }
    }

    #[test]
    fn mismatched_or_tiny_inputs_are_rejected() {
        assert!(ms_ssim(&noise_image(1, 8), &noise_image(1, 16)).is_err());
        assert!(ms_ssim(&noise_image(1, 2), &noise_image(2, 2)).is_err());
    }

    #[test]
    fn diversity_of_noise_is_low_and_seeded() {
        let set: Vec<Tensor<f64>> = (0..6).map(|s| noise_image(s, 32)).collect();
        let d = ms_ssim_diversity(&set, 10, 1).unwrap();
        assert!(d < 0.5, "{d}");
        assert_eq!(d, ms_ssim_diversity(&set, 10, 1).unwrap());
        let same = vec![noise_image(9, 16); 3];
        assert!((ms_ssim_diversity(&same, 5, 2).unwrap() - 1.0).abs() < 1e-9);
        assert!(ms_ssim_diversity(&set[..1], 5, 2).is_err());
    }
}
