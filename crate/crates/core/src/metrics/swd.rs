use std::cmp::Ordering;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const PATCH: usize = 7;
/// Standard-deviation floor used when normalizing flat patches.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Row-major sample matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptors<T> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Descriptors<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of width {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self { dim: self.dim, data }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchDescriptorSet<T> {
    pub descriptors: Descriptors<T>,
    /// Resolution of the band the patches came from.
    pub scale: usize,
    pub normalized: bool,
}

/// Samples `patches_per_image` random 7×7 patches from every image of the
/// band and normalizes each patch to zero mean, unit variance per channel.
pub fn extract_descriptors<T: Scalar>(band: &Tensor<T>, patches_per_image: usize, seed: u64) -> Result<PatchDescriptorSet<T>> {
    if band.h < PATCH || band.w < PATCH {
        return Err(Error::Shape(format!(
            "band {}x{} is smaller than a {PATCH}x{PATCH} patch",
            band.h, band.w
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = PATCH * PATCH;
    let dim = band.c * area;
    let mut data = Vec::with_capacity(band.n * patches_per_image * dim);
    let inv_area = T::one() / T::from_usize_lossy(area);
    let floor = T::lit(SIGMA_FLOOR);
    for s in 0..band.n {
        for _ in 0..patches_per_image {
            let y0 = rng.random_range(0..=band.h - PATCH);
            let x0 = rng.random_range(0..=band.w - PATCH);
            for c in 0..band.c {
                let start = data.len();
                for dy in 0..PATCH {
                    for dx in 0..PATCH {
                        data.push(band.at(s, c, y0 + dy, x0 + dx));
                    }
                }
                let chunk = &mut data[start..];
                let mean = chunk.iter().copied().sum::<T>() * inv_area;
                let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_area;
                let sd = var.sqrt().max(floor);
                chunk.iter_mut().for_each(|v| *v = (*v - mean) / sd);
            }
        }
    }
    Ok(PatchDescriptorSet {
        descriptors: Descriptors::new(dim, data)?,
        scale: band.h,
        normalized: true,
    })
}

fn subsample<T: Scalar>(d: &Descriptors<T>, count: usize, rng: &mut ChaCha8Rng) -> Descriptors<T> {
    if d.rows() <= count {
        return d.clone();
    }
    let mut picked = index::sample(rng, d.rows(), count).into_vec();
    picked.sort_unstable();
    d.select(&picked)
}

fn project<T: Scalar>(d: &Descriptors<T>, dir: &[T]) -> Vec<T> {
    let mut p: Vec<T> = (0..d.rows())
        .map(|i| d.row(i).iter().zip(dir).map(|(&a, &b)| a * b).sum())
        .collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    p
}

/// Mean 1-D Wasserstein-1 distance over `n_projections` random unit
/// directions. The larger set is subsampled to the size of the smaller;
/// either set is first capped at `max_rows` rows.
pub fn sliced_wasserstein_capped<T: Scalar>(
    a: &Descriptors<T>,
    b: &Descriptors<T>,
    n_projections: usize,
    max_rows: usize,
    seed: u64,
) -> Result<T> {
    if a.dim != b.dim {
        return Err(Error::Shape(format!("descriptor widths differ: {} vs {}", a.dim, b.dim)));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::Input("sliced Wasserstein needs non-empty sets".into()));
    }
    if n_projections == 0 {
        return Err(Error::Config("n_projections must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = a.rows().min(b.rows()).min(max_rows.max(1));
    let a = subsample(a, count, &mut rng);
    let b = subsample(b, count, &mut rng);
    let inv_count = T::one() / T::from_usize_lossy(count);
    let mut total = T::zero();
    for _ in 0..n_projections {
        let mut dir: Vec<f64> = (0..a.dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        dir.iter_mut().for_each(|v| *v /= norm);
        let dir: Vec<T> = dir.into_iter().map(T::lit).collect();
        let pa = project(&a, &dir);
        let pb = project(&b, &dir);
        total += pa.iter().zip(&pb).map(|(&x, &y)| (x - y).abs()).sum::<T>() * inv_count;
    }
    Ok(total / T::from_usize_lossy(n_projections))
}

pub fn sliced_wasserstein<T: Scalar>(a: &Descriptors<T>, b: &Descriptors<T>, n_projections: usize, seed: u64) -> Result<T> {
    sliced_wasserstein_capped(a, b, n_projections, usize::MAX, seed)
}
