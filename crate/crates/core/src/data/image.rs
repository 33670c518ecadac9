//! Decoding, bilinear resampling and normalization of single-channel images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Row-major single-channel `f32` image.
#[derive(Clone, Debug, PartialEq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Gray {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Gray {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Gray {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel-centre coordinates; zero outside.
    pub fn sample_zero(&self, x: f32, y: f32) -> f32 {
        if x < -0.5 || y < -0.5 || x > self.width as f32 - 0.5 || y > self.height as f32 - 0.5 {
            return 0.0;
        }
        self.sample_clamped(x, y)
    }

    /// Bilinear sample with edge clamping.
    pub fn sample_clamped(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear resize with half-pixel centres (edges clamped).
    pub fn resize(&self, width: usize, height: usize) -> Gray {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut pixels = Vec::with_capacity(width * height);
        for j in 0..height {
            let y = (j as f32 + 0.5) * sy - 0.5;
            for i in 0..width {
                let x = (i as f32 + 0.5) * sx - 0.5;
                pixels.push(self.sample_clamped(x, y));
            }
        }
        Gray {
            width,
            height,
            pixels,
        }
    }

    pub fn to_luma8(&self) -> image::GrayImage {
        let bytes = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size")
    }
}

/// Decodes a PNG/JPEG into luminance in `[0, 1]`.
pub fn decode_luminance(path: &Path) -> Result<Gray> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let luma = img.to_luma32f();
    let (w, h) = luma.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: "empty image".into(),
        });
    }
    Ok(Gray::new(w as usize, h as usize, luma.into_raw()))
}

/// Decode, convert to luminance and resize to `size x size`, values in `[0, 1]`.
pub fn load_luminance(path: &Path, size: usize) -> Result<Gray> {
    Ok(decode_luminance(path)?.resize(size, size))
}

/// Standardization statistics shared by the replicated channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub mean: f32,
    pub std: f32,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl Normalization {
    /// Mean and standard deviation over every pixel of the given images.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Gray>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for img in images {
            for &p in &img.pixels {
                sum += p as f64;
                sum_sq += (p as f64) * (p as f64);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Empty(
                "no training pixels for normalization statistics".into(),
            ));
        }
        let mean = sum / count as f64;
        let var = (sum_sq / count as f64 - mean * mean).max(0.0);
        Ok(Normalization {
            mean: mean as f32,
            std: (var.sqrt() as f32).max(1e-6),
        })
    }

    pub fn apply(&self, v: f32) -> f32 {
        (v - self.mean) / self.std
    }
}

/// Stacks grayscale images into an `N x channels x H x W` standardized tensor.
pub fn to_tensor(images: &[&Gray], channels: usize, norm: &Normalization) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::Empty("no images to batch".into()))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * channels * w * h);
    for img in images {
        if img.width != w || img.height != h {
            return Err(Error::shape("image batch", "width", w, img.width));
        }
        let plane: Vec<f32> = img.pixels.iter().map(|&v| norm.apply(v)).collect();
        for _ in 0..channels {
            data.extend_from_slice(&plane);
        }
    }
    Tensor::from_vec(Shape::new(images.len(), channels, h, w), data)
}

/// `1 x 3 x size x size` network input from an image file.
pub fn load_image(path: &Path, size: usize, norm: &Normalization) -> Result<Tensor> {
    let g = load_luminance(path, size)?;
    to_tensor(&[&g], 3, norm)
}
