//! Classification and segmentation quality measures. The malignant class is
//! the positive class throughout.

use crate::imaging::BinaryMask;
use crate::{Error, Result};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A ratio metric together with a flag marking the zero-denominator (or
/// otherwise degenerate) convention having fired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioMetric {
    pub value: f64,
    pub degenerate: bool,
}

/// Counts agreement between predicted and true labels; `true` is positive.
pub fn confusion(predicted: &[bool], actual: &[bool]) -> Result<ConfusionCounts> {
    if predicted.len() != actual.len() {
        return Err(Error::invalid(format!(
            "label lengths differ: {} vs {}",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("confusion needs at least one sample"));
    }
    let mut c = ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// tp / (tp + fp); returns 0 flagged degenerate when nothing was predicted
/// positive.
pub fn precision(c: &ConfusionCounts) -> RatioMetric {
    let denom = c.tp + c.fp;
    if denom == 0 {
        RatioMetric { value: 0.0, degenerate: true }
    } else {
        RatioMetric { value: c.tp as f64 / denom as f64, degenerate: false }
    }
}

/// tp / (tp + fn); returns 0 flagged degenerate when no sample is positive.
pub fn recall(c: &ConfusionCounts) -> RatioMetric {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        RatioMetric { value: 0.0, degenerate: true }
    } else {
        RatioMetric { value: c.tp as f64 / denom as f64, degenerate: false }
    }
}

/// (tp + tn) / total.
pub fn accuracy(c: &ConfusionCounts) -> f64 {
    (c.tp + c.tn) as f64 / c.total() as f64
}

/// ROC AUC by the rank (Mann–Whitney) formulation: the probability that a
/// random positive sample outranks a random negative one, ties counting
/// half. Exactly equal to trapezoidal ROC integration.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "score/label lengths differ: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("ROC AUC needs both classes present"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Accumulate in integer half-units so tied groups contribute exactly
    // p*n half-wins: units = 2 * (pos-above-strictly) + (pos-tied).
    let mut units: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut tie_pos = 0u64;
        let mut tie_neg = 0u64;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tie_pos += 1;
            } else {
                tie_neg += 1;
            }
            j += 1;
        }
        units += 2 * (tie_pos as u128) * (neg_below as u128);
        units += (tie_pos as u128) * (tie_neg as u128);
        neg_below += tie_neg;
        i = j;
    }
    Ok(units as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Intersection over union. Two blank masks compare as 1.0, flagged.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<RatioMetric> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::invalid(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&pa, &pb) in a.bits().iter().zip(b.bits()) {
        if pa && pb {
            inter += 1;
        }
        if pa || pb {
            union += 1;
        }
    }
    if union == 0 {
        Ok(RatioMetric { value: 1.0, degenerate: true })
    } else {
        Ok(RatioMetric { value: inter as f64 / union as f64, degenerate: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::BinaryMask;
    use proptest::prelude::*;

    /// Brute-force pair counting in the same half-unit arithmetic.
    fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut units = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1;
                if scores[i] > scores[j] {
                    units += 2;
                } else if scores[i] == scores[j] {
                    units += 1;
                }
            }
        }
        units as f64 / (2 * pairs) as f64
    }

    #[test]
    fn confusion_hand_cases() {
        let perfect = confusion(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!((perfect.fp, perfect.fn_), (0, 0));

        let all_pos = confusion(&[true, true, true, true], &[true, true, false, false]).unwrap();
        assert_eq!(all_pos.tn, 0);
        assert_eq!(all_pos.tp, 2);
        assert_eq!(all_pos.fp, 2);

        let one_each = confusion(&[true, true, false, false], &[true, false, false, true]).unwrap();
        assert_eq!(
            (one_each.tp, one_each.fp, one_each.tn, one_each.fn_),
            (1, 1, 1, 1)
        );
        assert_eq!(one_each.total(), 4);
    }

    #[test]
    fn confusion_rejects_bad_lengths() {
        assert!(matches!(
            confusion(&[true], &[true, false]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(confusion(&[], &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ratio_metrics() {
        let c = ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 };
        assert_eq!(precision(&c).value, 0.5);
        assert_eq!(recall(&c).value, 0.5);
        assert_eq!(accuracy(&c), 0.5);

        let perfect = ConfusionCounts { tp: 3, fp: 0, tn: 2, fn_: 0 };
        assert_eq!(precision(&perfect).value, 1.0);
        assert_eq!(recall(&perfect).value, 1.0);
        assert_eq!(accuracy(&perfect), 1.0);
        assert!(!precision(&perfect).degenerate);

        let none_predicted = ConfusionCounts { tp: 0, fp: 0, tn: 3, fn_: 2 };
        let p = precision(&none_predicted);
        assert_eq!(p.value, 0.0);
        assert!(p.degenerate);
    }

    #[test]
    fn auc_closed_forms() {
        let separated = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(separated, 1.0);

        let inverted = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap();
        assert_eq!(inverted, 0.0);

        let all_tied = roc_auc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap();
        assert_eq!(all_tied, 0.5);

        let mixed = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(mixed, 0.75);
    }

    #[test]
    fn auc_rejects_single_class() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn iou_cases() {
        let a = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        assert_eq!(iou(&a, &a).unwrap().value, 1.0);

        let b = BinaryMask::from_fn(4, 4, |x, _| x >= 2);
        assert_eq!(iou(&a, &b).unwrap().value, 0.0);

        // Equal-area rects overlapping in half: (A/2) / (3A/2) = 1/3.
        let left = BinaryMask::from_fn(8, 4, |x, _| x < 4);
        let right = BinaryMask::from_fn(8, 4, |x, _| (2..6).contains(&x));
        assert!((iou(&left, &right).unwrap().value - 1.0 / 3.0).abs() < 1e-12);

        let blank = BinaryMask::blank(4, 4);
        let both_blank = iou(&blank, &blank).unwrap();
        assert_eq!(both_blank.value, 1.0);
        assert!(both_blank.degenerate);

        let other_dims = BinaryMask::blank(3, 3);
        assert!(matches!(iou(&blank, &other_dims), Err(Error::InvalidInput(_))));
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            raw in proptest::collection::vec((0u8..10, proptest::bool::ANY), 2..=12)
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64 / 10.0).collect();
            let labels: Vec<bool> = raw.iter().map(|&(_, l)| l).collect();
            let pos = labels.iter().filter(|&&l| l).count();
            prop_assume!(pos > 0 && pos < labels.len());
            prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), auc_oracle(&scores, &labels));
        }

        #[test]
        fn auc_invariant_under_monotone_transform(
            raw in proptest::collection::vec((0u8..100, proptest::bool::ANY), 2..=16),
            scale in 0.1f64..5.0,
            shift in -10.0f64..10.0,
        ) {
            let scores: Vec<f64> = raw.iter().map(|&(s, _)| s as f64).collect();
            let labels: Vec<bool> = raw.iter().map(|&(_, l)| l).collect();
            let pos = labels.iter().filter(|&&l| l).count();
            prop_assume!(pos > 0 && pos < labels.len());
            // exp preserves order strictly; affine pieces keep ties tied.
            let transformed: Vec<f64> = scores.iter().map(|&s| (s * 0.05).exp() * scale + shift).collect();
            prop_assert_eq!(
                roc_auc(&scores, &labels).unwrap(),
                roc_auc(&transformed, &labels).unwrap()
            );
        }

        #[test]
        fn auc_complement_without_ties(n_pos in 1usize..6, n_neg in 1usize..6, seed in 0u64..500) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Distinct scores by construction: a shuffled 0..n sequence.
            let n = n_pos + n_neg;
            let mut ranks: Vec<usize> = (0..n).collect();
            ranks.shuffle(&mut rng);
            let scores: Vec<f64> = ranks.iter().map(|&r| r as f64 + rng.gen_range(0.0..0.4)).collect();
            let mut labels = vec![true; n_pos];
            labels.extend(vec![false; n_neg]);
            labels.shuffle(&mut rng);
            let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
            let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&negated, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_symmetric_and_identity(
            bits_a in proptest::collection::vec(proptest::bool::ANY, 36),
            bits_b in proptest::collection::vec(proptest::bool::ANY, 36),
        ) {
            let a = BinaryMask::new(6, 6, bits_a).unwrap();
            let b = BinaryMask::new(6, 6, bits_b).unwrap();
            prop_assert_eq!(iou(&a, &b).unwrap().value, iou(&b, &a).unwrap().value);
            let same = iou(&a, &a).unwrap().value;
            prop_assert_eq!(same, 1.0);
            if !a.is_blank() || !b.is_blank() {
                let v = iou(&a, &b).unwrap().value;
                prop_assert_eq!(v == 1.0, a == b);
            }
        }
    }
}
