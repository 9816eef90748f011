use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, RatedImage, RatingScale};
use crate::error::{Error, Result};
use crate::imageio;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RATINGS_FILE: &str = "ratings.csv";
const IMAGE_DIR: &str = "images";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub image_id: String,
    pub file: String,
}

/// `manifest.json` of an on-disk corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub rater_count: usize,
    pub resolution: usize,
    pub channels: usize,
    pub scale: RatingScale,
    pub ratings_file: String,
    pub image_dir: String,
    pub items: Vec<ManifestItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RatingRow {
    image_id: String,
    rater_id: String,
    raw_score: f64,
}

fn rater_order(ids: &[String]) -> Vec<String> {
    let mut ids = ids.to_vec();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
    ids
}

/// Loads a `(image_id, rater_id, raw_score)` table on the 1–5 scale with
/// images at `<image_dir>/<image_id>.png`.
pub fn load_ratings(table_path: &Path, image_dir: &Path) -> Result<Corpus> {
    load_ratings_with_scale(table_path, image_dir, RatingScale::default())
}

pub fn load_ratings_with_scale(table_path: &Path, image_dir: &Path, scale: RatingScale) -> Result<Corpus> {
    let mut reader = csv::Reader::from_path(table_path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(table_path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    // Images keep the order in which they first appear in the table.
    let mut order: Vec<String> = Vec::new();
    let mut scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: RatingRow = row?;
        let norm = scale.normalize(row.raw_score)?;
        let entry = scores.entry(row.image_id.clone()).or_insert_with(|| {
            order.push(row.image_id.clone());
            BTreeMap::new()
        });
        if entry.insert(row.rater_id.clone(), norm).is_some() {
            return Err(Error::Schema(format!("duplicate rating by {} for {}", row.rater_id, row.image_id)));
        }
    }
    let raters: Option<Vec<String>> = order.first().map(|id| rater_order(&scores[id].keys().cloned().collect::<Vec<_>>()));
    let raters = raters.unwrap_or_default();

    let mut items = Vec::with_capacity(order.len());
    let mut geometry = None;
    for id in &order {
        let per = &scores[id];
        if per.len() != raters.len() || !raters.iter().all(|r| per.contains_key(r)) {
            return Err(Error::Schema(format!("image {id} is not rated by the same raters as {}", order[0])));
        }
        let path = image_dir.join(format!("{id}.png"));
        let pixels = imageio::load_png(&path)?;
        let ratings = raters.iter().map(|r| per[r]).collect();
        let item = RatedImage::new(id.clone(), pixels, ratings)?;
        let g = (item.resolution(), item.pixels.c);
        match geometry {
            None => geometry = Some(g),
            Some(prev) if prev != g => return Err(Error::Shape(format!("image {id} has resolution {} but corpus has {}", g.0, prev.0))),
            _ => {}
        }
        items.push(item);
    }
    let (resolution, channels) = geometry.unwrap_or((0, 3));
    let mut corpus = Corpus::new(items, raters.len(), resolution, channels)?;
    corpus.scale = scale;
    Ok(corpus)
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

impl Corpus {
    /// Writes `manifest.json`, `ratings.csv` and one PNG per item.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join(IMAGE_DIR);
        ensure_dir(&img_dir)?;
        let table = dir.join(RATINGS_FILE);
        let mut writer = csv::Writer::from_path(&table)?;
        let mut manifest_items = Vec::with_capacity(self.len());
        for it in &self.items {
            imageio::save_png(&it.pixels, &img_dir.join(format!("{}.png", it.id)))?;
            for (r, &score) in it.ratings.iter().enumerate() {
                writer.serialize(RatingRow {
                    image_id: it.id.clone(),
                    rater_id: r.to_string(),
                    raw_score: self.scale.denormalize(score),
                })?;
            }
            manifest_items.push(ManifestItem {
                image_id: it.id.clone(),
                file: format!("{IMAGE_DIR}/{}.png", it.id),
            });
        }
        writer.flush().map_err(|e| Error::io(&table, e))?;
        let manifest = CorpusManifest {
            format: "facegen.corpus/1".into(),
            rater_count: self.rater_count,
            resolution: self.resolution,
            channels: self.channels,
            scale: self.scale,
            ratings_file: RATINGS_FILE.into(),
            image_dir: IMAGE_DIR.into(),
            items: manifest_items,
            ground_truth: self.ground_truth.clone(),
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    /// Loads a corpus written by [`Corpus::save`].
    pub fn load(dir: &Path) -> Result<Corpus> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: CorpusManifest = serde_json::from_str(&text)?;
        let mut corpus = load_ratings_with_scale(&dir.join(&manifest.ratings_file), &dir.join(&manifest.image_dir), manifest.scale)?;
        if corpus.len() != manifest.items.len() || corpus.rater_count != manifest.rater_count && !corpus.is_empty() {
            return Err(Error::Schema(format!(
                "manifest lists {} items / K={}, table has {} / K={}",
                manifest.items.len(),
                manifest.rater_count,
                corpus.len(),
                corpus.rater_count
            )));
        }
        if corpus.is_empty() {
            corpus.rater_count = manifest.rater_count;
            corpus.resolution = manifest.resolution;
            corpus.channels = manifest.channels;
        }
        match manifest.ground_truth {
            Some(gt) => corpus.with_ground_truth(gt),
            None => Ok(corpus),
        }
    }
}
