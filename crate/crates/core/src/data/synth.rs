//! Synthetic two-class "CT slice" generator.
//!
//! Both classes show a body ellipse containing two dark lung ellipses with
//! randomized pose and sensor noise. `covid` images add bright blotches
//! inside the lungs; `not_covid` images add only faint vessel-like spots.

use std::f32::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::image::Gray;
use super::manifest::{write_manifest, Label, Split};
use crate::error::{Error, Result};
use crate::seed;

pub const SYNTH_EXTENT: usize = 256;
pub const MANIFEST_NAME: &str = "manifest.csv";

const BACKGROUND: f32 = 0.02;
const TISSUE: f32 = 0.45;
const LUNG: f32 = 0.12;
const BLOTCH_PEAK: f32 = 0.92;
const VESSEL_PEAK: f32 = 0.3;
const NOISE_SIGMA: f32 = 0.03;

#[derive(Clone, Copy)]
struct Ellipse {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    angle: f32,
}

impl Ellipse {
    fn contains(&self, x: f32, y: f32) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        u * u + v * v <= 1.0
    }

    fn random_point(&self, rng: &mut impl Rng, shrink: f32) -> (f32, f32) {
        let r = shrink * rng.gen::<f32>().sqrt();
        let t = rng.gen_range(0.0..2.0 * PI);
        let (u, v) = (r * t.cos() * self.rx, r * t.sin() * self.ry);
        let (s, c) = self.angle.sin_cos();
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }
}

struct Blob {
    x: f32,
    y: f32,
    sigma: f32,
    peak: f32,
}

/// Renders one image; a pure function of `(seed, index, label)`.
pub fn render(label: Label, seed: u64, index: usize) -> Gray {
    let n = SYNTH_EXTENT as f32;
    let mut rng = seed::rng(seed, &[0x5359_4e54, index as u64, label.index() as u64]);
    let jitter = |rng: &mut rand_chacha::ChaCha8Rng, a: f32| rng.gen_range(-a..=a);

    let tilt = jitter(&mut rng, 0.15);
    let body = Ellipse {
        cx: n / 2.0 + jitter(&mut rng, 8.0),
        cy: n / 2.0 + jitter(&mut rng, 8.0),
        rx: n * rng.gen_range(0.40..0.46),
        ry: n * rng.gen_range(0.30..0.36),
        angle: tilt,
    };
    let lung = |side: f32, rng: &mut rand_chacha::ChaCha8Rng| Ellipse {
        cx: body.cx + side * body.rx * rng.gen_range(0.42..0.50),
        cy: body.cy + rng.gen_range(-6.0..6.0),
        rx: body.rx * rng.gen_range(0.30..0.36),
        ry: body.ry * rng.gen_range(0.62..0.72),
        angle: tilt + rng.gen_range(-0.1..0.1),
    };
    let lungs = [lung(-1.0, &mut rng), lung(1.0, &mut rng)];

    let mut blobs = Vec::new();
    let (count, peak, sigma) = match label {
        Label::Covid => (rng.gen_range(3..=6), BLOTCH_PEAK, (7.0, 12.0)),
        Label::NotCovid => (rng.gen_range(2..=5), VESSEL_PEAK, (2.0, 4.0)),
    };
    for _ in 0..count {
        let l = lungs[rng.gen_range(0..2)];
        let (x, y) = l.random_point(&mut rng, 0.7);
        blobs.push(Blob {
            x,
            y,
            sigma: rng.gen_range(sigma.0..sigma.1),
            peak: peak * rng.gen_range(0.95..1.05),
        });
    }

    let noise = Normal::new(0.0f32, NOISE_SIGMA).expect("positive sigma");
    let mut pixels = Vec::with_capacity(SYNTH_EXTENT * SYNTH_EXTENT);
    for j in 0..SYNTH_EXTENT {
        for i in 0..SYNTH_EXTENT {
            let (x, y) = (i as f32, j as f32);
            let mut v = if lungs.iter().any(|l| l.contains(x, y)) {
                let lift = blobs
                    .iter()
                    .map(|b| {
                        let d2 = (x - b.x).powi(2) + (y - b.y).powi(2);
                        (b.peak - LUNG) * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
                    })
                    .fold(0.0f32, f32::max);
                LUNG + lift
            } else if body.contains(x, y) {
                TISSUE
            } else {
                BACKGROUND
            };
            v += noise.sample(&mut rng);
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Gray::new(SYNTH_EXTENT, SYNTH_EXTENT, pixels)
}

/// Per-class split sizes for a 60/20/20 train/validation/test arrangement.
pub fn split_sizes(n_per_class: usize) -> (usize, usize, usize) {
    let train = (n_per_class * 3 + 2) / 5;
    let val = (n_per_class + 2) / 5;
    let val = val.min(n_per_class - train);
    (train, val, n_per_class - train - val)
}

fn split_of(k: usize, n_per_class: usize) -> Split {
    let (train, val, _) = split_sizes(n_per_class);
    if k < train {
        Split::Train
    } else if k < train + val {
        Split::Validation
    } else {
        Split::Test1
    }
}

/// Writes `2 * n_per_class` PNGs and `manifest.csv` into `out_dir`; returns the manifest path.
pub fn make_synthetic_dataset(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "n_per_class must be at least 1".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(2 * n_per_class);
    for label in [Label::Covid, Label::NotCovid] {
        for k in 0..n_per_class {
            let name = format!("{}_{k:04}.png", label.token());
            let img = render(label, seed, k);
            let path = out_dir.join(&name);
            img.to_luma8().save(&path).map_err(|e| Error::Image {
                path: path.clone(),
                message: e.to_string(),
            })?;
            rows.push((name, label, split_of(k, n_per_class)));
        }
    }
    let manifest = out_dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &rows)?;
    Ok(manifest)
}
