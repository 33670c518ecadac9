//! Class activation maps from the pre-pooling feature stack.

use std::path::Path;

use crate::arch::{NetworkGraph, Op};
use crate::data::Gray;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Node holding the pre-GAP feature stack of the fused head.
pub const FEATURE_NODE: &str = "features";
pub const DENSE_NODE: &str = "dense";
/// 1x1 convolution head of the SqueezeNet baselines.
pub const CLASSIFIER_NODE: &str = "classifier";
pub const OVERLAY_ALPHA: f32 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct CamHeatmap {
    pub class: usize,
    /// Map at feature resolution.
    pub raw: Gray,
    pub normalized: Gray,
    /// Normalized map resampled to the input extent.
    pub upsampled: Gray,
}

/// `M(x, y) = sum_k w[k] * F_k(x, y)` for the first sample of `features`.
pub fn weighted_sum(features: &Tensor, weights: &[f32]) -> Result<Gray> {
    let s = features.shape();
    if weights.len() != s.c {
        return Err(Error::shape(
            "class activation map",
            "channels",
            s.c,
            weights.len(),
        ));
    }
    let plane = s.plane();
    let sample = features.sample(0);
    let mut acc = vec![0.0f64; plane];
    for (k, &w) in weights.iter().enumerate() {
        for (a, &f) in acc.iter_mut().zip(&sample[k * plane..(k + 1) * plane]) {
            *a += w as f64 * f as f64;
        }
    }
    Ok(Gray::new(
        s.w,
        s.h,
        acc.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Min-max scaling to `[0, 1]`; a constant map becomes all 0.5.
pub fn normalize_values(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return vec![0.5; raw.len()];
    }
    raw.iter()
        .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect()
}

pub fn normalize_map(raw: &Gray) -> Gray {
    let wide: Vec<f64> = raw.pixels.iter().map(|&v| v as f64).collect();
    let pixels = normalize_values(&wide)
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Gray::new(raw.width, raw.height, pixels)
}

/// Activation map of `class` for a single `1 x C x H x W` image.
pub fn cam(g: &NetworkGraph, image: &Tensor, class: usize) -> Result<CamHeatmap> {
    if class >= g.classes() {
        return Err(Error::InvalidArgument(format!(
            "class {class} out of range 0..{}",
            g.classes()
        )));
    }
    if image.shape().n != 1 {
        return Err(Error::shape(
            "class activation map",
            "batch",
            1,
            image.shape().n,
        ));
    }
    let raw = if let Some(dense) = g.node(DENSE_NODE) {
        let Op::Dense(p) = &dense.op else {
            return Err(Error::InvalidArgument(format!(
                "node `{DENSE_NODE}` is not dense"
            )));
        };
        let mut kept = g.infer_keep(image, &[FEATURE_NODE])?;
        kept.truncate(1);
        weighted_sum(&kept[0], p.row(class))?
    } else if g.node(CLASSIFIER_NODE).is_some() {
        let mut kept = g.infer_keep(image, &[CLASSIFIER_NODE])?;
        kept.truncate(1);
        let maps = &kept[0];
        let plane = maps.shape().plane();
        let data = maps.sample(0)[class * plane..(class + 1) * plane].to_vec();
        Gray::new(maps.shape().w, maps.shape().h, data)
    } else {
        return Err(Error::InvalidArgument(
            "graph has no activation-map head".into(),
        ));
    };
    let normalized = normalize_map(&raw);
    let input = g.input_shape();
    let upsampled = normalized.resize(input.w, input.h);
    Ok(CamHeatmap {
        class,
        raw,
        normalized,
        upsampled,
    })
}

/// 256-step blue-to-red ramp.
pub fn ramp(v: f32) -> [u8; 3] {
    let i = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [i, 0, 255 - i]
}

/// Blends the ramp-coloured map over a grayscale base of the same extent.
pub fn overlay(base: &Gray, map: &Gray, alpha: f32) -> Result<image::RgbImage> {
    if base.width != map.width || base.height != map.height {
        return Err(Error::shape("overlay", "width", base.width, map.width));
    }
    let mut out = image::RgbImage::new(base.width as u32, base.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let gray = base.pixels[i].clamp(0.0, 1.0) * 255.0;
        let color = ramp(map.pixels[i]);
        for ch in 0..3 {
            px.0[ch] = ((1.0 - alpha) * gray + alpha * color[ch] as f32).round() as u8;
        }
    }
    Ok(out)
}

pub fn save_overlay(base: &Gray, heat: &CamHeatmap, path: &Path) -> Result<()> {
    let base = base.resize(heat.upsampled.width, heat.upsampled.height);
    overlay(&base, &heat.upsampled, OVERLAY_ALPHA)?
        .save(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
