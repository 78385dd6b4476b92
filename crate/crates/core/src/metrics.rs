//! Per-class recall, all-points average precision and the evaluation report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::argmax;

/// Evaluation summary. Per-class entries are `None` for classes without
/// any labeled instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub instances: usize,
    pub support: Vec<usize>,
    pub per_class_recall: Vec<Option<f64>>,
    pub per_class_ap: Vec<Option<f64>>,
    /// Mean of the defined per-class APs.
    pub map: f64,
    pub overall_accuracy: f64,
    /// `confusion[label][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

fn check_labels(values: &[usize], num_classes: usize, what: &str) -> Result<()> {
    match values.iter().find(|&&v| v >= num_classes) {
        Some(v) => Err(Error::InvalidInput(format!(
            "{what} value {v} out of range for {num_classes} classes"
        ))),
        None => Ok(()),
    }
}

/// Fraction of each class's instances predicted as that class.
pub fn per_class_recall(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    check_labels(predictions, num_classes, "prediction")?;
    check_labels(labels, num_classes, "label")?;
    let mut hits = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        support[l] += 1;
        if p == l {
            hits[l] += 1;
        }
    }
    Ok(hits
        .iter()
        .zip(&support)
        .map(|(&h, &s)| (s > 0).then(|| h as f64 / s as f64))
        .collect())
}

/// Mean of precision at the rank of every positive, with instances ranked by
/// descending score and ties kept in input order. `None` without positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(
        scores.len(),
        positives.len(),
        "scores and positives differ in length"
    );
    let total_pos = positives.iter().filter(|&&p| p).count();
    if total_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total_pos as f64)
}

/// Scores a matrix of class probabilities (one row per instance) against labels.
pub fn evaluate(
    prob_rows: &[Vec<f64>],
    labels: &[usize],
    class_names: &[String],
) -> Result<EvalReport> {
    let c = class_names.len();
    if prob_rows.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    if prob_rows.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} probability rows for {} labels",
            prob_rows.len(),
            labels.len()
        )));
    }
    if let Some(bad) = prob_rows.iter().find(|r| r.len() != c) {
        return Err(Error::InvalidInput(format!(
            "probability row of length {} for {c} classes",
            bad.len()
        )));
    }
    let predictions: Vec<usize> = prob_rows.iter().map(|r| argmax(r)).collect();
    let per_class_recall = per_class_recall(&predictions, labels, c)?;

    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &l) in predictions.iter().zip(labels) {
        confusion[l][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let correct = (0..c).map(|k| confusion[k][k]).sum::<usize>();

    let per_class_ap: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let scores: Vec<f64> = prob_rows.iter().map(|r| r[k]).collect();
            let positives: Vec<bool> = labels.iter().map(|&l| l == k).collect();
            average_precision(&scores, &positives)
        })
        .collect();
    let defined: Vec<f64> = per_class_ap.iter().flatten().copied().collect();
    let map = defined.iter().sum::<f64>() / defined.len() as f64;

    Ok(EvalReport {
        class_names: class_names.to_vec(),
        instances: labels.len(),
        support,
        per_class_recall,
        per_class_ap,
        map,
        overall_accuracy: correct as f64 / labels.len() as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn recall_examples() {
        let labels = [0, 1, 2, 1];
        assert_eq!(
            per_class_recall(&labels, &labels, 3).unwrap(),
            vec![Some(1.0); 3]
        );
        assert_eq!(
            per_class_recall(&[0, 1, 1], &[0, 0, 1], 3).unwrap(),
            vec![Some(0.5), Some(1.0), None]
        );
        assert!(per_class_recall(&[0], &[0, 1], 2).is_err());
        assert!(per_class_recall(&[2], &[0], 2).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(
            average_precision(&[0.9, 0.8, 0.1], &[true, true, false]),
            Some(1.0)
        );
        let ap = average_precision(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.3], &[true]), Some(1.0));
        assert_eq!(average_precision(&[0.3, 0.2], &[false, false]), None);
        // tie: earlier index ranks first
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn evaluate_examples() {
        let uniform = vec![vec![0.5, 0.5]; 4];
        let r = evaluate(&uniform, &[0, 1, 0, 1], &names(2)).unwrap();
        assert_eq!(r.overall_accuracy, 0.5);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![2, 0]]);

        let onehot = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ];
        let r = evaluate(&onehot, &[0, 2, 1], &names(3)).unwrap();
        assert_eq!((r.map, r.overall_accuracy), (1.0, 1.0));
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 3);
        assert_eq!(r.support, vec![1, 1, 1]);
    }

    #[test]
    fn undefined_classes_are_skipped_in_map() {
        let rows = vec![vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0]];
        let r = evaluate(&rows, &[0, 1], &names(3)).unwrap();
        assert_eq!(r.per_class_ap[2], None);
        assert_eq!(r.per_class_recall[2], None);
        assert_eq!(r.map, 1.0);
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_transform(
            data in proptest::collection::vec((0.0..1.0f64, any::<bool>()), 1..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let pos: Vec<bool> = data.iter().map(|d| d.1).collect();
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
            prop_assert_eq!(average_precision(&scores, &pos), average_precision(&warped, &pos));
        }

        #[test]
        fn report_bounded_and_order_free(
            rows in proptest::collection::vec((proptest::collection::vec(0.0..1.0f64, 4), 0usize..4), 1..30),
            rot in 0usize..30,
        ) {
            let probs: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
            let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let r = evaluate(&probs, &labels, &names(4)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.map) && (0.0..=1.0).contains(&r.overall_accuracy));
            prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), labels.len());

            // rotations keep distinct scores distinct, so ties cannot reorder
            let k = rot % probs.len();
            let mut p2 = probs.clone();
            let mut l2 = labels.clone();
            p2.rotate_left(k);
            l2.rotate_left(k);
            let r2 = evaluate(&p2, &l2, &names(4)).unwrap();
            prop_assert_eq!(r.overall_accuracy, r2.overall_accuracy);
            prop_assert!((r.map - r2.map).abs() < 1e-12);
        }
    }
}
