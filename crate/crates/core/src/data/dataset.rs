use rayon::prelude::*;

use super::augment::{materialize, AugmentationSpec, SampleRef};
use super::image::{load_luminance, to_tensor, Gray, Normalization};
use super::manifest::{ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const INPUT_CHANNELS: usize = 3;

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
}

/// Decoded, resized originals held in memory. Standardization is applied when batching.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    pub images: Vec<Gray>,
    pub norm: Normalization,
    pub size: usize,
}

impl Dataset {
    /// Decodes every entry at `size x size`. With `norm = None` the statistics
    /// come from the train-split originals.
    pub fn load(
        entries: Vec<ManifestEntry>,
        size: usize,
        norm: Option<Normalization>,
    ) -> Result<Self> {
        let images = entries
            .par_iter()
            .map(|e| load_luminance(&e.image_path, size))
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(entries, images, size, norm)
    }

    pub fn from_images(
        entries: Vec<ManifestEntry>,
        images: Vec<Gray>,
        size: usize,
        norm: Option<Normalization>,
    ) -> Result<Self> {
        if entries.len() != images.len() {
            return Err(Error::shape(
                "dataset",
                "images",
                entries.len(),
                images.len(),
            ));
        }
        let norm = match norm {
            Some(n) => n,
            None => Normalization::from_images(
                entries
                    .iter()
                    .zip(&images)
                    .filter(|(e, _)| e.split == Split::Train)
                    .map(|(_, g)| g),
            )?,
        };
        Ok(Dataset {
            entries,
            images,
            norm,
            size,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.entries[i].split == split)
            .collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.entries[i].label.index()
    }

    /// Un-augmented batch of the given dataset indices.
    pub fn batch(&self, indices: &[usize]) -> Result<SampleBatch> {
        let imgs: Vec<&Gray> = indices.iter().map(|&i| &self.images[i]).collect();
        Ok(SampleBatch {
            images: to_tensor(&imgs, INPUT_CHANNELS, &self.norm)?,
            labels: indices.iter().map(|&i| self.label(i)).collect(),
            ids: indices.iter().map(|&i| self.entries[i].id()).collect(),
        })
    }

    /// Augmented batch; `sample.original` indexes into `originals`, which maps to dataset indices.
    pub fn augmented_batch(
        &self,
        originals: &[usize],
        samples: &[SampleRef],
        epoch: usize,
        spec: &AugmentationSpec,
    ) -> Result<SampleBatch> {
        let imgs: Vec<Gray> = samples
            .par_iter()
            .map(|s| materialize(&self.images[originals[s.original]], *s, epoch, spec))
            .collect();
        let refs: Vec<&Gray> = imgs.iter().collect();
        Ok(SampleBatch {
            images: to_tensor(&refs, INPUT_CHANNELS, &self.norm)?,
            labels: samples
                .iter()
                .map(|s| self.label(originals[s.original]))
                .collect(),
            ids: samples
                .iter()
                .map(|s| self.entries[originals[s.original]].id())
                .collect(),
        })
    }
}
