//! Rated-image corpora: score normalization, CSV/PNG ingestion and a
//! procedural face generator with a known beauty ground truth.

mod io;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use io::{load_ratings, load_ratings_with_scale, CorpusManifest, ManifestItem, MANIFEST_FILE, RATINGS_FILE};
pub use synth::{symmetry_statistic, synth_corpus, synth_face, SUPPORTED_RESOLUTIONS};

/// Source rating scale; SCUT-FBP5500 style tables use 1–5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RatingScale {
    fn default() -> Self {
        Self { lo: 1.0, hi: 5.0 }
    }
}

impl RatingScale {
    pub fn normalize(&self, raw: f64) -> Result<f64> {
        normalize_score(raw, self.lo, self.hi)
    }

    pub fn denormalize(&self, beta: f64) -> f64 {
        self.lo + beta * (self.hi - self.lo)
    }
}

/// Maps `raw` on `[lo, hi]` affinely onto `[0, 1]`.
pub fn normalize_score(raw: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::Range(format!("rating scale [{lo}, {hi}] is empty")));
    }
    if !(lo..=hi).contains(&raw) {
        return Err(Error::Range(format!("score {raw} outside rating scale [{lo}, {hi}]")));
    }
    Ok((raw - lo) / (hi - lo))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatedImage {
    pub id: String,
    /// `1 × C × H × H`, values in `[-1, 1]`.
    pub pixels: Tensor<f32>,
    pub ratings: Vec<f64>,
    pub mean_score: f64,
}

impl RatedImage {
    pub fn new(id: impl Into<String>, pixels: Tensor<f32>, ratings: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if pixels.n != 1 || pixels.h != pixels.w || !pixels.h.is_power_of_two() {
            return Err(Error::Shape(format!(
                "image {id} must be square with power-of-two side, got {pixels:?}"
            )));
        }
        if ratings.is_empty() {
            return Err(Error::Schema(format!("image {id} has no ratings")));
        }
        if let Some(bad) = ratings.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Range(format!("rating {bad} of image {id} outside [0, 1]")));
        }
        let mean_score = ratings.iter().sum::<f64>() / ratings.len() as f64;
        Ok(Self {
            id,
            pixels,
            ratings,
            mean_score,
        })
    }

    pub fn resolution(&self) -> usize {
        self.pixels.h
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub items: Vec<RatedImage>,
    pub rater_count: usize,
    pub resolution: usize,
    pub channels: usize,
    pub scale: RatingScale,
    /// True beauty per item; synthetic corpora only.
    pub ground_truth: Option<Vec<f64>>,
}

impl Corpus {
    pub fn new(items: Vec<RatedImage>, rater_count: usize, resolution: usize, channels: usize) -> Result<Self> {
        for it in &items {
            if it.ratings.len() != rater_count {
                return Err(Error::Schema(format!(
                    "image {} has {} ratings, corpus expects {rater_count}",
                    it.id,
                    it.ratings.len()
                )));
            }
            if it.resolution() != resolution || it.pixels.c != channels {
                return Err(Error::Shape(format!(
                    "image {} is {:?}, corpus expects {channels}x{resolution}x{resolution}",
                    it.id, it.pixels
                )));
            }
        }
        Ok(Self {
            items,
            rater_count,
            resolution,
            channels,
            scale: RatingScale::default(),
            ground_truth: None,
        })
    }

    pub fn with_ground_truth(mut self, truth: Vec<f64>) -> Result<Self> {
        if truth.len() != self.items.len() {
            return Err(Error::Schema(format!(
                "ground truth has {} entries for {} items",
                truth.len(),
                self.items.len()
            )));
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn mean_scores(&self) -> Vec<f64> {
        self.items.iter().map(|it| it.mean_score).collect()
    }

    /// Column of one rater's scores.
    pub fn rater_column(&self, rater: usize) -> Vec<f64> {
        self.items.iter().map(|it| it.ratings[rater]).collect()
    }

    /// Splits off the first `n` items; ground truth follows its items.
    pub fn split_at(&self, n: usize) -> (Corpus, Corpus) {
        let n = n.min(self.len());
        let mut head = self.clone();
        let mut tail = self.clone();
        head.items.truncate(n);
        tail.items.drain(..n);
        if let Some(gt) = &self.ground_truth {
            head.ground_truth = Some(gt[..n].to_vec());
            tail.ground_truth = Some(gt[n..].to_vec());
        }
        (head, tail)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_endpoints_and_midpoint() {
        assert_eq!(normalize_score(1.0, 1.0, 5.0).unwrap(), 0.0);
        assert_eq!(normalize_score(5.0, 1.0, 5.0).unwrap(), 1.0);
        assert_eq!(normalize_score(3.0, 1.0, 5.0).unwrap(), 0.5);
    }

    #[test]
    fn normalize_rejects_out_of_range() {
        assert!(matches!(normalize_score(5.5, 1.0, 5.0), Err(Error::Range(_))));
        assert!(matches!(normalize_score(0.0, 1.0, 5.0), Err(Error::Range(_))));
        assert!(normalize_score(1.0, 2.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_affine_and_monotone(lo in -10.0f64..10.0, span in 0.1f64..20.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let hi = lo + span;
            let (ra, rb) = (lo + a * span, lo + b * span);
            let (na, nb) = (normalize_score(ra, lo, hi).unwrap(), normalize_score(rb, lo, hi).unwrap());
            prop_assert!((na - a).abs() < 1e-9);
            if ra < rb { prop_assert!(na <= nb); }
        }
    }

    #[test]
    fn rated_image_mean_and_invariants() {
        let px = Tensor::zeros(1, 3, 4, 4);
        let it = RatedImage::new("a", px.clone(), vec![0.2, 0.4, 0.9]).unwrap();
        assert!((it.mean_score - 0.5).abs() < 1e-12);
        assert!(RatedImage::new("b", px.clone(), vec![1.2]).is_err());
        assert!(RatedImage::new("c", Tensor::zeros(1, 3, 3, 3), vec![0.5]).is_err());
    }

    #[test]
    fn corpus_rejects_mixed_rater_counts() {
        let px = Tensor::zeros(1, 3, 4, 4);
        let a = RatedImage::new("a", px.clone(), vec![0.5, 0.5]).unwrap();
        let b = RatedImage::new("b", px, vec![0.5]).unwrap();
        assert!(matches!(Corpus::new(vec![a, b], 2, 4, 3), Err(Error::Schema(_))));
    }
}
