use crate::error::{Error, Result};

/// Counts with `covid` (class index 1) as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

pub const POSITIVE: usize = 1;

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "confusion",
            "length",
            labels.len(),
            predictions.len(),
        ));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p == POSITIVE, y == POSITIVE) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Ratios with a zero denominator are `None`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn f1_score(precision: f64, sensitivity: f64) -> Option<f64> {
    let s = precision + sensitivity;
    (s > 0.0).then(|| 2.0 * precision * sensitivity / s)
}

pub fn metrics(cm: ConfusionMatrix) -> MetricsReport {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    MetricsReport {
        counts: cm,
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        precision,
        f1: precision.zip(sensitivity).and_then(|(p, s)| f1_score(p, s)),
    }
}

/// Sensitivity in percent per million parameters.
pub fn efficiency(sensitivity_percent: f64, params_millions: f64) -> Result<f64> {
    if !(params_millions > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "parameter count {params_millions} must be positive"
        )));
    }
    Ok(sensitivity_percent / params_millions)
}

pub fn format_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn confusion_basics() {
        let y: Vec<usize> = (0..20).map(|i| (i < 10) as usize).collect();
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (10, 10, 0, 0));
        let y: Vec<usize> = (0..10).map(|i| (i < 5) as usize).collect();
        let cm = confusion(&[1; 10], &y).unwrap();
        assert_eq!((cm.tp, cm.fp), (5, 5));
        assert!(confusion(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn hand_arithmetic() {
        let m = metrics(ConfusionMatrix {
            tp: 91,
            fn_: 17,
            tn: 77,
            fp: 18,
        });
        assert!((m.accuracy.unwrap() - 168.0 / 203.0).abs() < 1e-12);
        assert!((m.accuracy.unwrap() - 0.82759).abs() < 5e-6);
        assert!((m.sensitivity.unwrap() - 0.84259).abs() < 5e-6);
        assert!((m.specificity.unwrap() - 0.81053).abs() < 5e-6);
        assert!((m.precision.unwrap() - 0.83486).abs() < 5e-6);
    }

    #[test]
    fn published_f1() {
        assert!((f1_score(0.8173, 0.85).unwrap() - 0.8333).abs() < 5e-5);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = metrics(ConfusionMatrix {
            tp: 3,
            tn: 4,
            fp: 0,
            fn_: 0,
        });
        for v in [m.accuracy, m.sensitivity, m.specificity, m.precision, m.f1] {
            assert_eq!(v, Some(1.0));
        }
        let m = metrics(ConfusionMatrix {
            tp: 0,
            tn: 4,
            fp: 0,
            fn_: 0,
        });
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
        assert_eq!(m.specificity, Some(1.0));
    }

    #[test]
    fn efficiency_ratio() {
        assert!((efficiency(85.0, 1.26).unwrap() - 67.46).abs() < 0.01);
        assert!((efficiency(67.0, 23.9).unwrap() - 2.80).abs() < 0.01);
        assert_eq!(efficiency(0.0, 1.0).unwrap(), 0.0);
        assert!(efficiency(85.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn tally_oracle(pairs in proptest::collection::vec((0usize..2, 0usize..2), 203)) {
            let (p, y): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let cm = confusion(&p, &y).unwrap();
            let tally = |a, b| pairs.iter().filter(|&&(pp, yy)| pp == a && yy == b).count();
            prop_assert_eq!(cm.tp, tally(1, 1));
            prop_assert_eq!(cm.fp, tally(1, 0));
            prop_assert_eq!(cm.tn, tally(0, 0));
            prop_assert_eq!(cm.fn_, tally(0, 1));
        }

        #[test]
        fn metric_identities(tp in 0usize..200, fp in 0usize..200, tn in 0usize..200, fn_ in 0usize..200) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            let m = metrics(cm);
            if let Some(f1) = m.f1 {
                let direct = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
                prop_assert!((f1 - direct).abs() < 1e-12);
            }
            if let (Some(acc), Some(se), Some(sp)) = (m.accuracy, m.sensitivity, m.specificity) {
                let (pos, neg) = ((tp + fn_) as f64, (tn + fp) as f64);
                prop_assert!((acc - (se * pos + sp * neg) / (pos + neg)).abs() < 1e-12);
            }
        }
    }
}
