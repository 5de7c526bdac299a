use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::imageops::FilterType;
use image::{ExtendedColorType, GrayImage, ImageEncoder, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGE_EXTENSIONS: [&str; 6] = ["ppm", "png", "jpg", "jpeg", "PNG", "JPG"];

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other}", path.display())),
    }
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgb8())
}

/// Loads an 8-bit image as `[H, W, 3]` floats in `[0, 1]`, resizing
/// bilinearly to `size × size` when the dimensions differ.
pub fn load_image(path: impl AsRef<Path>, size: Option<usize>) -> Result<Tensor> {
    let mut img = load_rgb(path)?;
    if let Some(s) = size {
        let s = s as u32;
        if img.width() != s || img.height() != s {
            img = image::imageops::resize(&img, s, s, FilterType::Triangle);
        }
    }
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let data = img.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![img.height() as usize, img.width() as usize, 3], data)
        .expect("rgb buffer matches its dimensions")
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::dim(format!("expected [H, W, 3] image, got {s:?}")));
    }
    let bytes = t.data().iter().map(|&v| to_byte(v)).collect();
    Ok(RgbImage::from_raw(s[1] as u32, s[0] as u32, bytes).expect("buffer size matches"))
}

/// `[H, W]` values in `[0, 1]` as an 8-bit grayscale image.
pub fn tensor_to_gray(t: &Tensor) -> Result<GrayImage> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::dim(format!("expected [H, W] map, got {s:?}")));
    }
    let bytes = t.data().iter().map(|&v| to_byte(v)).collect();
    Ok(GrayImage::from_raw(s[1] as u32, s[0] as u32, bytes).expect("buffer size matches"))
}

fn write_pnm(
    path: &Path,
    bytes: &[u8],
    w: u32,
    h: u32,
    subtype: PnmSubtype,
    color: ExtendedColorType,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    PnmEncoder::new(BufWriter::new(file))
        .with_subtype(subtype)
        .write_image(bytes, w, h, color)
        .map_err(|e| image_err(path, e))
}

/// Binary portable pixmap (P6).
pub fn save_ppm(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let sub = PnmSubtype::Pixmap(SampleEncoding::Binary);
    write_pnm(
        path.as_ref(),
        img.as_raw(),
        img.width(),
        img.height(),
        sub,
        ExtendedColorType::Rgb8,
    )
}

/// Binary portable graymap (P5).
pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let sub = PnmSubtype::Graymap(SampleEncoding::Binary);
    write_pnm(
        path.as_ref(),
        img.as_raw(),
        img.width(),
        img.height(),
        sub,
        ExtendedColorType::L8,
    )
}

/// Finds `<image_id>.<ext>` in `dir` for any supported extension.
pub fn find_image(dir: impl AsRef<Path>, image_id: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::Data(format!(
                "no image file for '{image_id}' in {}",
                dir.display()
            ))
        })
}
