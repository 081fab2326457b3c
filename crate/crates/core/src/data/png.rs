use std::path::Path;

use image::codecs::png::PngEncoder;
use image::imageops::{self, FilterType};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, RgbImage};

use super::{write_atomic, DataError};
use crate::tensor::Tensor;

/// Separator width between grid tiles, in pixels.
const GRID_GAP: usize = 2;

fn to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

fn from_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// `(height, width)` of a `[H, W, 3]` or `[1, H, W, 3]` image.
fn image_dims(image: &Tensor<f32>) -> Result<(usize, usize), DataError> {
    match image.shape() {
        [h, w, 3] | [1, h, w, 3] => Ok((*h, *w)),
        s => Err(DataError::Shape(format!("expected an RGB image, got {s:?}"))),
    }
}

fn encode_rgb(pixels: &[u8], width: usize, height: usize) -> Result<Vec<u8>, DataError> {
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(pixels, width as u32, height as u32, ExtendedColorType::Rgb8)
        .map_err(|e| DataError::Encode(e.to_string()))?;
    Ok(out)
}

/// 8-bit RGB PNG bytes for an image in `[-1, 1]`.
pub fn encode_png(image: &Tensor<f32>) -> Result<Vec<u8>, DataError> {
    let (h, w) = image_dims(image)?;
    let pixels: Vec<u8> = image.data().iter().map(|&v| to_u8(v)).collect();
    encode_rgb(&pixels, w, h)
}

fn rgb_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = img.dimensions();
    let data = img.as_raw().iter().map(|&v| from_u8(v)).collect();
    Tensor::new(vec![h as usize, w as usize, 3], data).expect("rgb buffer")
}

/// Decodes PNG bytes to `[H, W, 3]` in `[-1, 1]` without resizing.
pub fn decode_png(bytes: &[u8]) -> Result<Tensor<f32>, DataError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| DataError::Decode(e.to_string()))?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

/// Reads a PNG, crops the centred square and resizes it to `resolution`.
pub fn load_png(path: &Path, resolution: usize) -> Result<Tensor<f32>, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| DataError::Decode(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let side = w.min(h);
    let square = imageops::crop_imm(&img, (w - side) / 2, (h - side) / 2, side, side).to_image();
    let r = resolution as u32;
    let sized = if side == r {
        square
    } else {
        imageops::resize(&square, r, r, FilterType::Triangle)
    };
    Ok(rgb_to_tensor(&sized))
}

pub fn write_png(image: &Tensor<f32>, path: &Path) -> Result<(), DataError> {
    write_atomic(path, &encode_png(image)?)
}

/// Tiles same-sized images row-major, `cols` per row, with white gaps.
pub fn encode_grid(images: &[Tensor<f32>], cols: usize) -> Result<Vec<u8>, DataError> {
    let first = images
        .first()
        .ok_or_else(|| DataError::Shape("grid needs at least one image".into()))?;
    if cols == 0 {
        return Err(DataError::Shape("grid needs at least one column".into()));
    }
    let (h, w) = image_dims(first)?;
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let gw = cols * w + (cols - 1) * GRID_GAP;
    let gh = rows * h + (rows - 1) * GRID_GAP;
    let mut pixels = vec![255u8; gw * gh * 3];
    for (k, img) in images.iter().enumerate() {
        if image_dims(img)? != (h, w) {
            return Err(DataError::Shape(format!(
                "grid tile {k} has shape {:?}, expected {h}x{w}",
                img.shape()
            )));
        }
        let (oy, ox) = ((k / cols) * (h + GRID_GAP), (k % cols) * (w + GRID_GAP));
        for y in 0..h {
            let src = &img.data()[y * w * 3..(y + 1) * w * 3];
            let start = ((oy + y) * gw + ox) * 3;
            for (d, &s) in pixels[start..start + w * 3].iter_mut().zip(src) {
                *d = to_u8(s);
            }
        }
    }
    encode_rgb(&pixels, gw, gh)
}

pub fn write_grid(images: &[Tensor<f32>], cols: usize, path: &Path) -> Result<(), DataError> {
    write_atomic(path, &encode_grid(images, cols)?)
}
