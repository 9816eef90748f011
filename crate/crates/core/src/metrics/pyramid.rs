use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const BINOMIAL: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];

/// Mirror about the edge samples without repeating them (`-1 → 1`).
fn clamp_index(i: isize, len: usize) -> usize {
    let last = len as isize - 1;
    let r = if i < 0 {
        -i
    } else if i > last {
        2 * last - i
    } else {
        i
    };
    r.clamp(0, last) as usize
}

/// Separable 5-tap binomial blur with mirrored borders, scaled by `gain`.
fn blur<T: Scalar>(x: &Tensor<T>, gain: T) -> Tensor<T> {
    let k: Vec<T> = BINOMIAL.iter().map(|&v| T::lit(v / 16.0)).collect();
    let (h, w) = (x.h, x.w);
    let mut tmp = Tensor::zeros(x.n, x.c, h, w);
    let mut out = Tensor::zeros(x.n, x.c, h, w);
    for s in 0..x.n {
        for c in 0..x.c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = T::zero();
                    for (t, &kv) in k.iter().enumerate() {
                        acc += kv * x.at(s, c, y, clamp_index(xx as isize + t as isize - 2, w));
                    }
                    *tmp.at_mut(s, c, y, xx) = acc;
                }
            }
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = T::zero();
                    for (t, &kv) in k.iter().enumerate() {
                        acc += kv * tmp.at(s, c, clamp_index(y as isize + t as isize - 2, h), xx);
                    }
                    *out.at_mut(s, c, y, xx) = acc * gain;
                }
            }
        }
    }
    out
}

/// Blur then keep every second pixel.
pub fn pyr_down<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let b = blur(x, T::one());
    let mut out = Tensor::zeros(x.n, x.c, x.h / 2, x.w / 2);
    for s in 0..x.n {
        for c in 0..x.c {
            for y in 0..out.h {
                for xx in 0..out.w {
                    *out.at_mut(s, c, y, xx) = b.at(s, c, 2 * y, 2 * xx);
                }
            }
        }
    }
    out
}

/// Zero-insertion upsampling followed by a gain-4 blur.
pub fn pyr_up<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut z = Tensor::zeros(x.n, x.c, x.h * 2, x.w * 2);
    for s in 0..x.n {
        for c in 0..x.c {
            for y in 0..x.h {
                for xx in 0..x.w {
                    *z.at_mut(s, c, 2 * y, 2 * xx) = x.at(s, c, y, xx);
                }
            }
        }
    }
    blur(&z, T::lit(4.0))
}

/// Band-pass decomposition: `levels − 1` detail bands (finest first)
/// followed by the low-pass residual.
pub fn laplacian_pyramid<T: Scalar>(pixels: &Tensor<T>, levels: usize) -> Result<Vec<Tensor<T>>> {
    if levels == 0 {
        return Err(Error::Shape("pyramid needs at least one level".into()));
    }
    let factor = 1usize << (levels - 1);
    let coarse_ok = |d: usize| d.is_multiple_of(factor) && d / factor >= 2;
    if !coarse_ok(pixels.h) || !coarse_ok(pixels.w) {
        return Err(Error::Shape(format!(
            "{}x{} image cannot hold {levels} pyramid levels (needs a multiple of {factor} with a coarsest level of at least 2)",
            pixels.h, pixels.w
        )));
    }
    let mut bands = Vec::with_capacity(levels);
    let mut cur = pixels.clone();
    for _ in 1..levels {
        let down = pyr_down(&cur);
        let up = pyr_up(&down);
        bands.push(cur.zip_map(&up, |a, b| a - b));
        cur = down;
    }
    bands.push(cur);
    Ok(bands)
}

/// Inverse of [`laplacian_pyramid`].
pub fn reconstruct<T: Scalar>(bands: &[Tensor<T>]) -> Result<Tensor<T>> {
    let (last, details) = bands.split_last().ok_or_else(|| Error::Shape("empty pyramid".into()))?;
    let mut cur = last.clone();
    for band in details.iter().rev() {
        let up = pyr_up(&cur);
        if !up.same_shape(band) {
            return Err(Error::Shape(format!("band {band:?} does not match upsampled {up:?}")));
        }
        cur = up.zip_map(band, |a, b| a + b);
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_image_has_empty_detail_bands() {
        let img = Tensor::from_vec(1, 3, 16, 16, vec![0.3f64; 768]).unwrap();
        let bands = laplacian_pyramid(&img, 3).unwrap();
        for b in &bands[..2] {
            assert!(b.data.iter().all(|v| v.abs() < 1e-12));
        }
        assert!(bands[2].data.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn round_trip_is_exact_to_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Tensor::from_vec(2, 3, 32, 32, (0..6144).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap();
        let bands = laplacian_pyramid(&img, 4).unwrap();
        assert_eq!(bands.iter().map(|b| b.h).collect::<Vec<_>>(), vec![32, 16, 8, 4]);
        assert!(reconstruct(&bands).unwrap().max_abs_diff(&img) < 1e-5);
    }

    #[test]
    fn too_many_levels_is_shape_error() {
        let img = Tensor::<f64>::zeros(1, 1, 32, 32);
        assert!(matches!(laplacian_pyramid(&img, 6), Err(Error::Shape(_))));
        assert!(laplacian_pyramid(&img, 5).is_ok());
        assert!(laplacian_pyramid(&Tensor::<f64>::zeros(1, 1, 20, 20), 4).is_err());
    }
}
