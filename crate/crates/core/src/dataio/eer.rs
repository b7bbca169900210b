use crate::dataio::Label;
use crate::error::{Error, Result};

/// Equal error rate in percent.
///
/// A sample is flagged as change when its score is at least the threshold.
/// Thresholds sweep `-∞`, every distinct score, and `+∞`; the one with the
/// smallest `|FPR − FNR|` wins (the lowest threshold on ties) and the EER is
/// the mean of the two rates there.
pub fn compute_eer(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == Label::Change).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric(
            "EER needs both change and no-change samples".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let (p, n) = (positives as f64, negatives as f64);
    // Threshold at -inf: everything flagged.
    let mut false_alarms = negatives;
    let mut misses = 0usize;
    let rates = |fa: usize, mi: usize| (fa as f64 / n, mi as f64 / p);

    let (fpr, fnr) = rates(false_alarms, misses);
    let mut best_gap = (fpr - fnr).abs();
    let mut best = (fpr, fnr);

    let mut i = 0;
    while i < order.len() {
        // Drop the whole group sharing this score; the next threshold is the
        // following distinct score (or +inf).
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            match labels[order[i]] {
                Label::Change => misses += 1,
                Label::NoChange => false_alarms -= 1,
            }
            i += 1;
        }
        let (fpr, fnr) = rates(false_alarms, misses);
        let gap = (fpr - fnr).abs();
        if gap < best_gap {
            best_gap = gap;
            best = (fpr, fnr);
        }
    }
    Ok((best.0 + best.1) / 2.0 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Change as P, NoChange as N};

    #[test]
    fn perfect_separation() {
        assert_eq!(compute_eer(&[0.9, 0.8, 0.3, 0.2], &[P, P, N, N]).unwrap(), 0.0);
    }

    #[test]
    fn crossing_example() {
        assert_eq!(compute_eer(&[0.9, 0.4, 0.6, 0.2], &[P, P, N, N]).unwrap(), 50.0);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            compute_eer(&[0.1, 0.2], &[P, P]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_eer(&[0.1], &[P, N]).is_err());
    }

    #[test]
    fn inverted_scores_give_full_error() {
        assert_eq!(compute_eer(&[0.1, 0.2, 0.8, 0.9], &[P, P, N, N]).unwrap(), 100.0);
    }
}
