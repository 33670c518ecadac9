//! Four-fold training augmentation, drawn lazily per epoch.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::image::Gray;
use crate::error::{Error, Result};
use crate::seed;

pub const MULTIPLICITY: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationSpec {
    /// Counter-clockwise rotation range in degrees.
    pub rotation_deg: (f32, f32),
    pub scale: (f32, f32),
    /// Additive noise sigma on the `[0, 1]` range.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn new(seed: u64) -> Self {
        AugmentationSpec {
            rotation_deg: (0.0, 90.0),
            scale: (1.1, 1.3),
            noise_sigma: 0.02,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f32, f32)| a.is_finite() && b.is_finite() && a <= b;
        if !ordered(self.rotation_deg) || !ordered(self.scale) || self.scale.0 <= 0.0 {
            return Err(Error::Config(
                "augmentation ranges must be finite, ordered and positive".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentKind {
    Original,
    Rotated,
    Scaled,
    Noisy,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; MULTIPLICITY] = [
        AugmentKind::Original,
        AugmentKind::Rotated,
        AugmentKind::Scaled,
        AugmentKind::Noisy,
    ];

    fn code(self) -> u64 {
        self as u64
    }
}

/// One draw of the epoch stream: which original, which transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleRef {
    pub original: usize,
    pub kind: AugmentKind,
}

/// Shuffled `4 * n_originals` sample order for `epoch`.
pub fn epoch_plan(n_originals: usize, epoch: usize, spec: &AugmentationSpec) -> Vec<SampleRef> {
    let mut plan: Vec<SampleRef> = (0..n_originals)
        .flat_map(|original| {
            AugmentKind::ALL
                .into_iter()
                .map(move |kind| SampleRef { original, kind })
        })
        .collect();
    let mut rng = seed::rng(spec.seed, &[0x5348_5546, epoch as u64]);
    plan.shuffle(&mut rng);
    plan
}

/// Pixels of one planned sample. Depends only on `(spec.seed, epoch, original, kind)`.
pub fn materialize(img: &Gray, sample: SampleRef, epoch: usize, spec: &AugmentationSpec) -> Gray {
    let mut rng = seed::rng(
        spec.seed,
        &[epoch as u64, sample.original as u64, sample.kind.code()],
    );
    match sample.kind {
        AugmentKind::Original => img.clone(),
        AugmentKind::Rotated => {
            let deg = uniform(&mut rng, spec.rotation_deg);
            rotate(img, deg)
        }
        AugmentKind::Scaled => {
            let s = uniform(&mut rng, spec.scale);
            scale_center_crop(img, s)
        }
        AugmentKind::Noisy => add_noise(img, spec.noise_sigma, &mut rng),
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f32, f32)) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Counter-clockwise rotation about the image centre, zero fill.
pub fn rotate(img: &Gray, degrees: f32) -> Gray {
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (img.width as f32 - 1.0) / 2.0;
    let cy = (img.height as f32 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        let dy = y as f32 - cy;
        for x in 0..img.width {
            let dx = x as f32 - cx;
            // inverse map; image rows grow downward
            let sx = cx + dx * c - dy * s;
            let sy = cy + dx * s + dy * c;
            out.push(img.sample_zero(sx, sy));
        }
    }
    Gray::new(img.width, img.height, out)
}

/// Zoom by `factor` about the centre, keeping the original extent.
pub fn scale_center_crop(img: &Gray, factor: f32) -> Gray {
    let cx = (img.width as f32 - 1.0) / 2.0;
    let cy = (img.height as f32 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        let sy = cy + (y as f32 - cy) / factor;
        for x in 0..img.width {
            out.push(img.sample_zero(cx + (x as f32 - cx) / factor, sy));
        }
    }
    Gray::new(img.width, img.height, out)
}

pub fn add_noise(img: &Gray, sigma: f32, rng: &mut impl Rng) -> Gray {
    if sigma == 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0f32, sigma).expect("sigma validated");
    Gray::new(
        img.width,
        img.height,
        img.pixels.iter().map(|&v| v + normal.sample(rng)).collect(),
    )
}
