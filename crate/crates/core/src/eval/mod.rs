//! Metrics, class activation maps and inference timing.

pub mod cam;
mod metrics;

use std::path::Path;
use std::time::Instant;

pub use cam::{cam, normalize_map, normalize_values, save_overlay, weighted_sum, CamHeatmap};
pub use metrics::{
    confusion, efficiency, f1_score, format_metric, metrics, ConfusionMatrix, MetricsReport,
    POSITIVE,
};

use crate::arch::NetworkGraph;
use crate::data::{Dataset, Label, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::train::argmax;

/// Class probabilities for the given dataset rows, in order.
pub fn predict(
    g: &NetworkGraph,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = data.batch(chunk)?;
        let probs = g.infer(&batch.images)?;
        let k = probs.shape().c;
        out.extend(probs.data().chunks(k).map(<[f32]>::to_vec));
    }
    Ok(out)
}

/// Fraction of rows whose argmax equals the label; 0 for no rows.
pub fn accuracy(probs: &[Vec<f32>], labels: &[usize]) -> f32 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    hits as f32 / labels.len() as f32
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub label: Label,
    pub predicted: Label,
    pub probs: Vec<f32>,
}

impl ImageRecord {
    pub fn p_covid(&self) -> f32 {
        self.probs[Label::Covid.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub split: Split,
    pub metrics: MetricsReport,
    pub records: Vec<ImageRecord>,
}

pub fn evaluate(
    g: &NetworkGraph,
    data: &Dataset,
    split: Split,
    batch_size: usize,
) -> Result<EvalReport> {
    let idx = data.indices(split);
    if idx.is_empty() {
        return Err(Error::Empty(format!("split `{split}` has no rows")));
    }
    let probs = predict(g, data, &idx, batch_size)?;
    let records: Vec<ImageRecord> = idx
        .iter()
        .zip(probs)
        .map(|(&i, p)| ImageRecord {
            id: data.entries[i].id(),
            label: data.entries[i].label,
            predicted: Label::from_index(argmax(&p)).expect("two classes"),
            probs: p,
        })
        .collect();
    let predicted: Vec<usize> = records.iter().map(|r| r.predicted.index()).collect();
    let labels: Vec<usize> = records.iter().map(|r| r.label.index()).collect();
    Ok(EvalReport {
        split,
        metrics: metrics(confusion(&predicted, &labels)?),
        records,
    })
}

pub fn write_records(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(["id", "label", "predicted", "p_covid"])
        .map_err(|e| Error::Io(e.into()))?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            r.label.token(),
            r.predicted.token(),
            &format!("{:.6}", r.p_covid()),
        ])
        .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// Seconds per single-image forward pass, warm-up excluded.
    pub samples: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub threads: usize,
    pub params: usize,
}

pub fn bench_inference(
    g: &NetworkGraph,
    image: &Tensor,
    repetitions: usize,
) -> Result<TimingReport> {
    if repetitions < 3 {
        return Err(Error::InvalidArgument(
            "at least 3 repetitions are required".into(),
        ));
    }
    if image.shape().n != 1 {
        return Err(Error::shape("benchmark", "batch", 1, image.shape().n));
    }
    g.infer(image)?;
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        let out = g.infer(image)?;
        samples.push(t.elapsed().as_secs_f64());
        std::hint::black_box(out);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(0.0, f64::max);
    Ok(TimingReport {
        samples,
        mean,
        min,
        max,
        threads: rayon::current_num_threads(),
        params: g.count_params(),
    })
}
