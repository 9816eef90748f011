use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Corpus, RatedImage};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SUPPORTED_RESOLUTIONS: [usize; 5] = [4, 8, 16, 32, 64];

/// Cells per side of the blemish texture (resolution independent).
const BLEMISH_CELLS: u64 = 12;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn hash_unit(seed: u64, a: u64, b: u64) -> f64 {
    let h = splitmix(seed ^ splitmix(a.wrapping_mul(0x1000_0001) ^ splitmix(b)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Anti-aliased coverage of an ellipse at normalized point `(u, v)`.
fn ellipse(u: f64, v: f64, cx: f64, cy: f64, rx: f64, ry: f64, px: f64) -> f64 {
    let d = ((u - cx) / rx).hypot((v - cy) / ry);
    let sd = (d - 1.0) * rx.min(ry);
    (0.5 - sd / px).clamp(0.0, 1.0)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t)
}

struct Style {
    background: [f64; 3],
    skin: [f64; 3],
    hair: [f64; 3],
    head_rx: f64,
    head_ry: f64,
    hairline: f64,
    eye_dx: f64,
    eye_y: f64,
    eye_r: f64,
    mouth_y: f64,
    mouth_w: f64,
    // Signed asymmetry directions, scaled by (1 − knob) at render time.
    head_shift: f64,
    eye_tilt: f64,
    mouth_shift: f64,
    eye_size_skew: f64,
}

impl Style {
    fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sign = || if rng.random::<bool>() { 1.0 } else { -1.0 };
        let signs = [sign(), sign(), sign(), sign()];
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed));
        let tone = rng.random::<f64>();
        let skin = mix([0.93, 0.80, 0.70], [0.55, 0.38, 0.28], tone);
        let background = [rng.random_range(0.15..0.5), rng.random_range(0.2..0.55), rng.random_range(0.3..0.7)];
        let hair = mix([0.08, 0.06, 0.05], [0.6, 0.45, 0.25], rng.random::<f64>());
        Self {
            background,
            skin,
            hair,
            head_rx: rng.random_range(0.27..0.33),
            head_ry: rng.random_range(0.35..0.41),
            hairline: rng.random_range(0.28..0.36),
            eye_dx: rng.random_range(0.11..0.15),
            eye_y: rng.random_range(0.43..0.48),
            eye_r: rng.random_range(0.045..0.06),
            mouth_y: rng.random_range(0.68..0.73),
            mouth_w: rng.random_range(0.09..0.14),
            head_shift: signs[0] * rng.random_range(0.04..0.07),
            eye_tilt: signs[1] * rng.random_range(0.03..0.05),
            mouth_shift: signs[2] * rng.random_range(0.03..0.05),
            eye_size_skew: signs[3] * rng.random_range(0.25..0.4),
        }
    }
}

/// Renders a procedural face. Raising `beauty_knob` removes asymmetry and
/// blemish texture and increases feature contrast; the same arguments
/// always produce identical pixels.
pub fn synth_face(style_seed: u64, beauty_knob: f64, resolution: usize) -> Result<Tensor<f32>> {
    if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
        return Err(Error::Config(format!(
            "unsupported resolution {resolution}; expected one of {SUPPORTED_RESOLUTIONS:?}"
        )));
    }
    if !(0.0..=1.0).contains(&beauty_knob) {
        return Err(Error::Range(format!("beauty knob {beauty_knob} outside [0, 1]")));
    }
    let s = Style::from_seed(style_seed);
    let flaw = 1.0 - beauty_knob;
    let contrast = 0.35 + 0.65 * beauty_knob;
    let px = 1.0 / resolution as f64;

    let head_cx = 0.5 + flaw * s.head_shift;
    let (lx, rx) = (
        0.5 - s.eye_dx + 0.5 * flaw * s.head_shift,
        0.5 + s.eye_dx + 0.5 * flaw * s.head_shift,
    );
    let (ly, ry) = (s.eye_y + flaw * s.eye_tilt, s.eye_y - flaw * s.eye_tilt);
    let (lr, rr) = (s.eye_r * (1.0 + flaw * s.eye_size_skew), s.eye_r * (1.0 - flaw * s.eye_size_skew));
    let mouth_cx = 0.5 + flaw * s.mouth_shift;
    let dark_eye = mix(s.skin, [0.05, 0.04, 0.06], contrast);
    let lips = mix(s.skin, [0.62, 0.12, 0.18], contrast);
    let brow = mix(s.skin, s.hair, contrast);

    let mut out = Tensor::zeros(1, 3, resolution, resolution);
    for y in 0..resolution {
        for x in 0..resolution {
            let u = (x as f64 + 0.5) * px;
            let v = (y as f64 + 0.5) * px;
            // Vertical background gradient (mirror symmetric).
            let mut col = mix(s.background, [0.9, 0.9, 0.92], 0.35 * v);
            let head = ellipse(u, v, head_cx, 0.54, s.head_rx, s.head_ry, px);
            let mut face = s.skin;
            // Soft cheek shading keeps the head from being flat.
            let shade = 1.0 - 0.18 * (((u - head_cx) / s.head_rx).powi(2) + ((v - 0.56) / s.head_ry).powi(2)).min(1.0);
            face = face.map(|c| c * shade);
            let cell_u = (u * BLEMISH_CELLS as f64) as u64;
            let cell_v = (v * BLEMISH_CELLS as f64) as u64;
            let noise = hash_unit(style_seed, cell_u, cell_v) - 0.5;
            let spot = if hash_unit(style_seed ^ 0xb1e, cell_u, cell_v) > 0.85 {
                -0.25
            } else {
                0.0
            };
            let blemish = flaw * (0.45 * noise + spot);
            face = face.map(|c| c + blemish);
            for (ex, ey, er) in [(lx, ly, lr), (rx, ry, rr)] {
                let b = ellipse(u, v, ex, ey - 0.06, er * 1.6, er * 0.45, px);
                face = mix(face, brow, b);
                let e = ellipse(u, v, ex, ey, er * 1.3, er, px);
                face = mix(face, dark_eye, e);
            }
            let m = ellipse(u, v, mouth_cx, s.mouth_y, s.mouth_w, 0.028, px);
            face = mix(face, lips, m);
            col = mix(col, face, head);
            let hair =
                ellipse(u, v, head_cx, 0.5, s.head_rx * 1.08, s.head_ry * 1.02, px) * ((s.hairline - v) / (2.0 * px) + 0.5).clamp(0.0, 1.0);
            col = mix(col, s.hair, hair);
            for (c, value) in col.iter().enumerate() {
                *out.at_mut(0, c, y, x) = (value.clamp(0.0, 1.0) * 2.0 - 1.0) as f32;
            }
        }
    }
    Ok(out)
}

/// Negated mean absolute left–right mirror difference; 0 for a perfectly
/// mirror-symmetric image, lower for less symmetric ones.
pub fn symmetry_statistic(img: &Tensor<f32>) -> f64 {
    let mut acc = 0.0;
    for c in 0..img.c {
        for y in 0..img.h {
            for x in 0..img.w {
                acc += (img.at(0, c, y, x) - img.at(0, c, y, img.w - 1 - x)).abs() as f64;
            }
        }
    }
    -acc / img.len() as f64
}

/// Synthetic rated corpus: ratings are the ground-truth knob plus Gaussian
/// rater noise, clipped to `[0, 1]`.
pub fn synth_corpus(n: usize, raters: usize, noise_sd: f64, resolution: usize, seed: u64) -> Result<Corpus> {
    if n == 0 || raters == 0 {
        return Err(Error::Input("synthetic corpus needs n >= 1 and K >= 1".into()));
    }
    if !(noise_sd >= 0.0) {
        return Err(Error::Range(format!("noise_sd {noise_sd} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let style: u64 = rng.random();
        let beta: f64 = rng.random();
        let ratings = (0..raters)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                (beta + noise_sd * e).clamp(0.0, 1.0)
            })
            .collect();
        let pixels = synth_face(style, beta, resolution)?;
        items.push(RatedImage::new(format!("img_{i:05}"), pixels, ratings)?);
        truth.push(beta);
    }
    Corpus::new(items, raters, resolution, 3)?.with_ground_truth(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson_correlation;

    #[test]
    fn synth_face_is_deterministic() {
        let a = synth_face(7, 0.5, 32).unwrap();
        let b = synth_face(7, 0.5, 32).unwrap();
        assert_eq!(a.data, b.data);
        assert!(a.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn higher_knob_is_more_symmetric() {
        let ugly = synth_face(7, 0.0, 32).unwrap();
        let pretty = synth_face(7, 1.0, 32).unwrap();
        assert_ne!(ugly.data, pretty.data);
        assert!(symmetry_statistic(&pretty) > symmetry_statistic(&ugly));
        // Symmetry improves along the whole knob range for many styles.
        for seed in 0..20 {
            let stats: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|&k| symmetry_statistic(&synth_face(seed, k, 32).unwrap()))
                .collect();
            assert!(stats.windows(2).all(|w| w[1] > w[0]), "seed {seed}: {stats:?}");
        }
    }

    #[test]
    fn unsupported_resolution_is_rejected() {
        assert!(matches!(synth_face(7, 0.5, 3), Err(Error::Config(_))));
    }

    #[test]
    fn zero_noise_ratings_equal_ground_truth() {
        let c = synth_corpus(10, 60, 0.0, 8, 1).unwrap();
        let gt = c.ground_truth.as_ref().unwrap();
        for (it, &b) in c.items.iter().zip(gt) {
            assert_eq!(it.ratings.len(), 60);
            assert!(it.ratings.iter().all(|&r| r == b));
        }
    }

    #[test]
    fn noisy_mean_scores_track_ground_truth() {
        let c = synth_corpus(200, 60, 0.05, 4, 1).unwrap();
        let r = pearson_correlation(&c.mean_scores(), c.ground_truth.as_ref().unwrap()).unwrap();
        assert!(r > 0.99, "r = {r}");
    }

    #[test]
    fn synth_corpus_is_deterministic() {
        assert_eq!(synth_corpus(5, 3, 0.1, 8, 4).unwrap(), synth_corpus(5, 3, 0.1, 8, 4).unwrap());
    }
}
