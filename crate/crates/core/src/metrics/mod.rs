//! Realism metrics: multi-scale sliced Wasserstein distance over
//! Laplacian-pyramid patch descriptors, and MS-SSIM.

mod msssim;
mod pyramid;
mod swd;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use msssim::{ms_ssim, ms_ssim_diversity, scale_count, DYNAMIC_RANGE, MIN_MS_SSIM_SIZE, MS_SSIM_WEIGHTS};
pub use pyramid::{laplacian_pyramid, pyr_down, pyr_up, reconstruct};
pub use swd::{extract_descriptors, sliced_wasserstein, sliced_wasserstein_capped, Descriptors, PatchDescriptorSet, PATCH, SIGMA_FLOOR};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub patches_per_image: usize,
    pub n_projections: usize,
    /// Descriptor rows kept per set and scale.
    pub max_rows: usize,
    /// Coarsest pyramid level evaluated.
    pub min_resolution: usize,
    pub ms_ssim_pairs: usize,
    pub seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            patches_per_image: 128,
            n_projections: 512,
            max_rows: 1 << 14,
            min_resolution: 16,
            ms_ssim_pairs: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// SWD ×10³ keyed by pyramid-level resolution.
    pub swd_per_scale: BTreeMap<usize, f64>,
    pub swd_avg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms_ssim: Option<f64>,
    pub config: MetricConfig,
}

fn batch<T: Scalar>(images: &[Tensor<T>]) -> Result<Tensor<T>> {
    Tensor::stack(images.iter())
}

/// Per-level SWD (×10³) between two image sets and its average.
pub fn swd_report<T: Scalar>(real: &[Tensor<T>], fake: &[Tensor<T>], config: &MetricConfig) -> Result<MetricReport> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Input("swd_report needs non-empty image sets".into()));
    }
    let real = batch(real)?;
    let fake = batch(fake)?;
    if (real.c, real.h, real.w) != (fake.c, fake.h, fake.w) {
        return Err(Error::Shape(format!("real {real:?} and fake {fake:?} differ in resolution")));
    }
    if config.min_resolution < PATCH || real.h < config.min_resolution {
        return Err(Error::Shape(format!(
            "resolution {} below the coarsest evaluated level {}",
            real.h, config.min_resolution
        )));
    }
    let mut levels = 1;
    while real.h >> levels >= config.min_resolution {
        levels += 1;
    }
    let real_bands = laplacian_pyramid(&real, levels)?;
    let fake_bands = laplacian_pyramid(&fake, levels)?;
    let mut per_scale = BTreeMap::new();
    for (lvl, (rb, fb)) in real_bands.iter().zip(&fake_bands).enumerate() {
        // Both sets share patch positions and projections per level.
        let level_seed = config.seed.wrapping_add(1000 * lvl as u64);
        let dr = extract_descriptors(rb, config.patches_per_image, level_seed)?;
        let df = extract_descriptors(fb, config.patches_per_image, level_seed)?;
        let d = sliced_wasserstein_capped(
            &dr.descriptors,
            &df.descriptors,
            config.n_projections,
            config.max_rows,
            level_seed + 1,
        )?;
        per_scale.insert(rb.h, d.as_f64() * 1e3);
    }
    let swd_avg = per_scale.values().sum::<f64>() / per_scale.len() as f64;
    Ok(MetricReport {
        swd_per_scale: per_scale,
        swd_avg,
        ms_ssim: None,
        config: config.clone(),
    })
}

/// SWD between the sets plus mean pairwise MS-SSIM of the fake set.
pub fn evaluate<T: Scalar>(real: &[Tensor<T>], fake: &[Tensor<T>], config: &MetricConfig) -> Result<MetricReport> {
    let mut report = swd_report(real, fake, config)?;
    report.ms_ssim = Some(ms_ssim_diversity(fake, config.ms_ssim_pairs, config.seed ^ 0x5eed)?.as_f64());
    Ok(report)
}
