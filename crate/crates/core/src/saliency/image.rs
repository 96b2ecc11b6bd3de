//! Float RGB images and PNG input/output.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb32FImage, RgbImage};

use crate::{Error, Result};

/// Interleaved RGB, row-major, channel values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: width * height * 3,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Element-wise product with a single-channel mask.
    pub fn masked(&self, mask: &[f32]) -> Image {
        debug_assert_eq!(mask.len(), self.n_pixels());
        let data = self
            .data
            .chunks_exact(3)
            .zip(mask)
            .flat_map(|(px, &m)| [px[0] * m, px[1] * m, px[2] * m])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Bilinear resize.
    pub fn resize(&self, width: usize, height: usize) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let buf: Rgb32FImage =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length checked at construction");
        let out = imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle);
        Image {
            width,
            height,
            data: out.into_raw(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let rgb = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Ok(Image {
            width: w as usize,
            height: h as usize,
            data: rgb.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect(),
        })
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length checked at construction")
    }

    /// Writes an 8-bit RGB PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save(path.as_ref())?;
        Ok(())
    }
}

impl From<&RgbImage> for Image {
    fn from(img: &RgbImage) -> Self {
        let (w, h) = img.dimensions();
        Image {
            width: w as usize,
            height: h as usize,
            data: img.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect(),
        }
    }
}

/// Writes values in [0, 1] as a 16-bit grayscale PNG.
pub fn save_gray16(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let raw: Vec<u16> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, raw).ok_or(Error::DimensionMismatch {
            expected: width * height,
            got: values.len(),
        })?;
    buf.save(path.as_ref())?;
    Ok(())
}
