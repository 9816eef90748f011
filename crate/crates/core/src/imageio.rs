//! PNG boundary: 8-bit RGB on disk, `[-1, 1]` CHW tensors in memory.

use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_byte(b: u8) -> f32 {
    b as f32 / 127.5 - 1.0
}

/// Converts one image (n = 1, 1 or 3 channels) to an RGB buffer.
pub fn to_rgb(img: &Tensor<f32>) -> Result<RgbImage> {
    if img.n != 1 || !(img.c == 1 || img.c == 3) {
        return Err(Error::Shape(format!("cannot encode {img:?} as RGB")));
    }
    let mut out = RgbImage::new(img.w as u32, img.h as u32);
    for y in 0..img.h {
        for x in 0..img.w {
            let px = std::array::from_fn(|c| to_byte(img.at(0, if img.c == 1 { 0 } else { c }, y, x)));
            out.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    Ok(out)
}

pub fn from_rgb(buf: &RgbImage) -> Tensor<f32> {
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let mut t = Tensor::zeros(1, 3, h, w);
    for (x, y, px) in buf.enumerate_pixels() {
        for c in 0..3 {
            *t.at_mut(0, c, y as usize, x as usize) = from_byte(px.0[c]);
        }
    }
    t
}

pub fn save_png(img: &Tensor<f32>, path: &Path) -> Result<()> {
    to_rgb(img)?.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

pub fn load_png(path: &Path) -> Result<Tensor<f32>> {
    if !path.is_file() {
        return Err(Error::MissingImage(path.to_path_buf()));
    }
    let img = image::open(path).map_err(|_| Error::MissingImage(path.to_path_buf()))?;
    Ok(from_rgb(&img.to_rgb8()))
}

/// Tiles equally sized images into a `rows × cols` grid without gaps.
pub fn tile(rows: &[Vec<Tensor<f32>>]) -> Result<Tensor<f32>> {
    let first = rows
        .first()
        .and_then(|r| r.first())
        .ok_or_else(|| Error::Input("cannot tile an empty grid".into()))?;
    let (c, h, w) = (first.c, first.h, first.w);
    let cols = rows[0].len();
    let mut out = Tensor::zeros(1, c, h * rows.len(), w * cols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Shape("grid rows have different lengths".into()));
        }
        for (col, img) in row.iter().enumerate() {
            if (img.c, img.h, img.w) != (c, h, w) {
                return Err(Error::Shape(format!("tile {img:?} differs from {first:?}")));
            }
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        *out.at_mut(0, ch, r * h + y, col * w + x) = img.at(0, ch, y, x);
                    }
                }
            }
        }
    }
    Ok(out)
}
