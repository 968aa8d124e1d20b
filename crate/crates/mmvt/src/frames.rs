//! Image files as `[1, 3, H, W]` tensors with values in `[0, 1]`.
//! Grayscale (thermal) images are replicated to three channels.

use std::path::Path;

use image::{GrayImage, ImageBuffer, RgbImage};
use mmvt_core::Tensor;

use crate::IoError;

pub fn load(path: &Path) -> Result<Tensor, IoError> {
    let img = image::open(path)
        .map_err(|source| IoError::Image {
            path: path.into(),
            source,
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn dims(t: &Tensor) -> (u32, u32) {
    (t.width() as u32, t.height() as u32)
}

fn write<P, C>(img: ImageBuffer<P, C>, path: &Path) -> Result<(), IoError>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| IoError::Image {
            path: path.into(),
            source,
        })
}

/// Writes the three channels as an 8-bit RGB PNG.
pub fn save_rgb(t: &Tensor, path: &Path) -> Result<(), IoError> {
    let (w, h) = dims(t);
    let img = RgbImage::from_fn(w, h, |x, y| {
        image::Rgb([0, 1, 2].map(|c| to_u8(t.at(0, c, y as usize, x as usize))))
    });
    write(img, path)
}

/// Writes channel 0 as an 8-bit grayscale PNG.
pub fn save_gray(t: &Tensor, path: &Path) -> Result<(), IoError> {
    let (w, h) = dims(t);
    let img = GrayImage::from_fn(w, h, |x, y| {
        image::Luma([to_u8(t.at(0, 0, y as usize, x as usize))])
    });
    write(img, path)
}
