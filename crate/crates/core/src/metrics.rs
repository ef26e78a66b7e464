//! Evaluation against gold labels, and the sampled-precision estimators used
//! when only a manually judged sample of positive outputs is available.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{predictions} predictions but {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no positive extractions to sample from")]
    EmptyPositives,
    #[error("sample size {sample} exceeds the {positives} positive extractions")]
    SampleTooLarge { sample: usize, positives: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absolute_recall: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(predictions: &[u8], gold: &[u8]) -> Result<EvalReport, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == 1, g == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(EvalReport {
        accuracy: ratio(tp + tn, predictions.len()),
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
        sample_precision: None,
        absolute_recall: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SampleEstimate {
    /// Fraction of sampled extractions judged correct.
    pub sample_precision: f64,
    /// `sample_precision * positives`.
    pub absolute_recall: f64,
    pub sample_size: usize,
    pub positives: usize,
}

/// `sample_precision * positives`.
pub fn absolute_recall(sample_precision: f64, positives: usize) -> f64 {
    sample_precision * positives as f64
}

/// Judge a seeded uniform sample (without replacement) of the positive
/// extractions with `oracle` and extrapolate.
pub fn sample_precision<T>(
    positives: &[T],
    sample_size: usize,
    seed: u64,
    mut oracle: impl FnMut(&T) -> bool,
) -> Result<SampleEstimate, MetricsError> {
    if positives.is_empty() {
        return Err(MetricsError::EmptyPositives);
    }
    if sample_size == 0 || sample_size > positives.len() {
        return Err(MetricsError::SampleTooLarge { sample: sample_size, positives: positives.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, positives.len(), sample_size);
    let correct = picked.iter().filter(|&i| oracle(&positives[i])).count();
    let precision = correct as f64 / sample_size as f64;
    Ok(SampleEstimate {
        sample_precision: precision,
        absolute_recall: absolute_recall(precision, positives.len()),
        sample_size,
        positives: positives.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let g = [1, 0, 1, 1, 0];
        let r = evaluate(&g, &g).unwrap();
        assert_eq!((r.accuracy, r.f1), (1.0, 1.0));
        assert_eq!(r.tp + r.fp + r.tn + r.fn_, 5);
    }

    #[test]
    fn all_positive_on_balanced_set() {
        let gold: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let r = evaluate(&[1; 100], &gold).unwrap();
        assert_eq!((r.precision, r.recall), (0.5, 1.0));
        let gold: Vec<u8> = (0..100).map(|i| u8::from(i < 18)).collect();
        let r = evaluate(&[1; 100], &gold).unwrap();
        assert!((r.precision - 0.18).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // tp=2, fp=1, fn=1, tn=1
        let r = evaluate(&[1, 1, 1, 0, 0], &[1, 1, 0, 1, 0]).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (2, 1, 1, 1));
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cases() {
        let r = evaluate(&[0, 0], &[0, 0]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1, r.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert!(evaluate(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn full_sample_all_correct() {
        let positives: Vec<bool> = vec![true; 100];
        let e = sample_precision(&positives, 100, 1, |&c| c).unwrap();
        assert_eq!((e.sample_precision, e.absolute_recall), (1.0, 100.0));
    }

    #[test]
    fn sample_errors() {
        assert_eq!(sample_precision::<bool>(&[], 1, 0, |_| true), Err(MetricsError::EmptyPositives));
        assert!(matches!(sample_precision(&[true], 2, 0, |_| true), Err(MetricsError::SampleTooLarge { .. })));
    }
}
