//! The self-training loop: train a teacher on the annotated source domain,
//! generate and refine pseudo-masks for the unannotated target domain,
//! score them through the downstream benign/malignant classifier, admit
//! confident masks into the training pool, fine-tune a warm-started
//! student, and repeat until the validation metric stops improving.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::{local_entropy_filter, EntropyMap};
use crate::imaging::{BinaryMask, Image};
use crate::metrics::{accuracy, confusion, iou, precision, recall, roc_auc, ConfusionCounts};
use crate::models::{
    lesion_features, predict_class, predict_mask, train_classifier, train_segmenter_prepared,
    LinearModelParams, SegTrainItem, TrainConfig, FEATURE_WINDOW_RADIUS,
};
use crate::pipeline::{
    classification_crop_pair, filter_confident, postprocess_mask, update_pseudo_mask,
    PostprocessConfig,
};
use crate::{Error, Result};

/// Fraction of the target domain held out for final classification testing.
pub const SPLIT_TEST_FRACTION: f64 = 0.10;

/// Fraction of the target domain used as the validation split that drives
/// termination.
pub const SPLIT_VALIDATION_FRACTION: f64 = 0.15;

/// Probability threshold at which segmenter output becomes foreground.
pub const PREDICT_THRESHOLD: f64 = 0.5;

/// Learning rate for the downstream lesion classifier (full-batch descent
/// on seven normalized features converges comfortably at this rate).
const CLASSIFIER_LEARNING_RATE: f64 = 0.5;

/// Full-batch epochs for the downstream lesion classifier. The budget is
/// deliberately generous: the intercept converges slowly relative to the
/// shape features, and an uncalibrated intercept turns the 0.5 decision
/// threshold into an all-one-class predictor.
const CLASSIFIER_EPOCHS: u32 = 4000;

/// Diagnostic lesion class; malignant is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Benign,
    Malignant,
}

impl Class {
    pub fn is_malignant(self) -> bool {
        matches!(self, Class::Malignant)
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Benign => "benign",
            Class::Malignant => "malignant",
        })
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benign" => Ok(Class::Benign),
            "malignant" => Ok(Class::Malignant),
            other => Err(Error::invalid(format!(
                "unknown class label {other:?} (expected benign or malignant)"
            ))),
        }
    }
}

/// Which domain a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Source,
    Target,
}

/// One image in the pipeline, already exam-area cropped. Source samples
/// carry a reference mask; target samples carry a class label.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub reference_mask: Option<BinaryMask>,
    pub class_label: Option<Class>,
    pub pseudo_mask: Option<BinaryMask>,
    pub origin: Origin,
    /// Hidden ground-truth mask carried by synthetic target samples purely
    /// for the mean-IoU diagnostic; never read by training, filtering, or
    /// termination.
    pub truth_mask: Option<BinaryMask>,
}

impl Sample {
    pub fn source(id: impl Into<String>, image: Image, reference_mask: BinaryMask) -> Result<Self> {
        if reference_mask.width() != image.width() || reference_mask.height() != image.height() {
            return Err(Error::invalid("reference mask dimensions do not match image"));
        }
        Ok(Sample {
            id: id.into(),
            image,
            reference_mask: Some(reference_mask),
            class_label: None,
            pseudo_mask: None,
            origin: Origin::Source,
            truth_mask: None,
        })
    }

    pub fn target(id: impl Into<String>, image: Image, class_label: Class) -> Self {
        Sample {
            id: id.into(),
            image,
            reference_mask: None,
            class_label: Some(class_label),
            pseudo_mask: None,
            origin: Origin::Target,
            truth_mask: None,
        }
    }

    pub fn with_truth_mask(mut self, truth: BinaryMask) -> Result<Self> {
        if truth.width() != self.image.width() || truth.height() != self.image.height() {
            return Err(Error::invalid("truth mask dimensions do not match image"));
        }
        self.truth_mask = Some(truth);
        Ok(self)
    }
}

/// Validation metric that drives termination and best-iteration selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Accuracy,
    Auc,
}

/// Patience-based early-stopping rule for the iteration loop.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TerminationConfig {
    /// Consecutive non-improving iterations tolerated before stopping.
    pub patience: u32,
    /// Minimum gain over the best value so far that counts as improvement.
    pub min_delta: f64,
    /// Which validation metric is watched.
    pub metric: Metric,
}

impl Default for TerminationConfig {
    fn default() -> Self {
        TerminationConfig { patience: 2, min_delta: 0.005, metric: Metric::Precision }
    }
}

/// Pipeline variant: which post-processing stages and admission rules are
/// active. `vanilla` admits no target masks (the pool stays source-only);
/// `big` adds confidence filtering; the `convex`/`fill`/`noblank` suffixes
/// add hulling, hole filling, and the blank-mask guard; `alternating` is
/// the guarded variant with the single-component admission rule enforced
/// on even iterations only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Big,
    BigConvex,
    BigConvexFill,
    BigConvexFillNoblank,
    Alternating,
}

/// Full configuration of a self-training run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub max_iterations: u32,
    pub postprocess: PostprocessConfig,
    pub train: TrainConfig,
    pub termination: TerminationConfig,
    pub variant: Variant,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            max_iterations: 6,
            postprocess: PostprocessConfig::default(),
            train: TrainConfig::default(),
            termination: TerminationConfig::default(),
            variant: Variant::BigConvexFillNoblank,
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.termination.patience == 0 {
            return Err(Error::invalid("termination patience must be at least 1"));
        }
        if !self.termination.min_delta.is_finite() || self.termination.min_delta < 0.0 {
            return Err(Error::invalid("termination min_delta must be non-negative"));
        }
        self.postprocess.validate()?;
        self.train.validate()
    }
}

/// Per-iteration diagnostics; classification metrics are over the
/// validation split, counts are over the target train+validation sets.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub auc: f64,
    pub empty_pseudo_mask_count: u64,
    pub accepted_for_training: u64,
    pub masks_preserved_by_guard: u64,
    pub mean_iou_vs_reference: Option<f64>,
    pub wall_time_seconds: f64,
}

/// The id-level record of how the target domain was partitioned.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Everything a finished run hands back: per-iteration reports, the
/// best-iteration model pair and pseudo-masks, every iteration's masks for
/// persistence, and the target partition.
#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub reports: Vec<IterationReport>,
    pub best_iteration: u32,
    pub model: LinearModelParams,
    pub classifier: LinearModelParams,
    /// Best-iteration pseudo-masks over train+validation, ordered by id.
    pub pseudo_masks: Vec<(String, BinaryMask)>,
    /// Pseudo-masks of every completed iteration, same layout.
    pub iteration_masks: Vec<Vec<(String, BinaryMask)>>,
    pub split: SplitIds,
}

/// Stratified target split into (train, validation, test). Per class the
/// requested fractions are rounded to whole samples, so class ratios carry
/// into every split within one sample. Depends only on ids, labels, and
/// the seed — never on input order or pixel data.
pub fn split_target(
    samples: Vec<Sample>,
    test_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>, Vec<Sample>)> {
    if !test_fraction.is_finite()
        || !validation_fraction.is_finite()
        || test_fraction <= 0.0
        || validation_fraction <= 0.0
        || test_fraction + validation_fraction >= 1.0
    {
        return Err(Error::invalid("split fractions must be positive and sum below 1"));
    }
    let mut ids = BTreeSet::new();
    for s in &samples {
        if s.class_label.is_none() {
            return Err(Error::invalid(format!("target sample {:?} has no class label", s.id)));
        }
        if !ids.insert(s.id.clone()) {
            return Err(Error::invalid(format!("duplicate sample id {:?}", s.id)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut benign, mut malignant): (Vec<Sample>, Vec<Sample>) =
        samples.into_iter().partition(|s| s.class_label == Some(Class::Benign));
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for bucket in [&mut benign, &mut malignant] {
        if bucket.is_empty() {
            return Err(Error::invalid("both classes must be present to stratify the split"));
        }
        bucket.sort_by(|a, b| a.id.cmp(&b.id));
        bucket.shuffle(&mut rng);
        let n = bucket.len();
        let n_test = (test_fraction * n as f64).round() as usize;
        let n_val = (validation_fraction * n as f64).round() as usize;
        if n_test == 0 || n_val == 0 || n_test + n_val >= n {
            return Err(Error::invalid(format!(
                "too few samples to stratify: a class bucket of {n} yields test={n_test}, validation={n_val}"
            )));
        }
        let mut drained = bucket.drain(..);
        test.extend(drained.by_ref().take(n_test));
        validation.extend(drained.by_ref().take(n_val));
        train.extend(drained);
    }
    for part in [&mut train, &mut validation, &mut test] {
        part.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok((train, validation, test))
}

/// Resolves the variant into concrete post-processing toggles, leaving the
/// numeric knobs from the user configuration in place.
pub fn effective_postprocess(cfg: &SelfTrainConfig) -> PostprocessConfig {
    let mut pp = cfg.postprocess.clone();
    let (fill, hull, guard) = match cfg.variant {
        Variant::Vanilla | Variant::Big => (false, false, false),
        Variant::BigConvex => (false, true, false),
        Variant::BigConvexFill => (true, true, false),
        Variant::BigConvexFillNoblank | Variant::Alternating => (true, true, true),
    };
    pp.enable_fill = fill;
    pp.enable_hull = hull;
    pp.enable_blank_guard = guard;
    pp
}

/// Admission rule for the given iteration, or None when the variant admits
/// no target masks at all.
fn admission_config(cfg: &SelfTrainConfig, pp: &PostprocessConfig, iteration: u32) -> Option<PostprocessConfig> {
    match cfg.variant {
        Variant::Vanilla => None,
        Variant::Alternating => {
            let mut a = pp.clone();
            a.filter_require_single_component = iteration.is_multiple_of(2);
            Some(a)
        }
        _ => Some(pp.clone()),
    }
}

/// Best-iteration tracking plus the patience rule. Iteration 1 seeds the
/// best value but is exempt from the patience count; afterwards an
/// iteration improves only by beating the running best by `min_delta`, and
/// `patience` consecutive non-improvements stop the loop. The best
/// iteration is the raw argmax, earliest on ties.
struct TerminationState {
    best_iteration: u32,
    best_value: f64,
    bad: u32,
    seeded: bool,
}

impl TerminationState {
    fn new() -> Self {
        TerminationState { best_iteration: 0, best_value: f64::NEG_INFINITY, bad: 0, seeded: false }
    }

    /// Records iteration `t`'s metric value; returns true when the loop
    /// should stop.
    fn observe(&mut self, t: u32, value: f64, cfg: &TerminationConfig) -> bool {
        if !self.seeded {
            self.seeded = true;
            self.best_iteration = t;
            self.best_value = value;
            return false;
        }
        let improved = value >= self.best_value + cfg.min_delta;
        if value > self.best_value {
            self.best_iteration = t;
            self.best_value = value;
        }
        if improved {
            self.bad = 0;
            false
        } else {
            self.bad += 1;
            self.bad >= cfg.patience
        }
    }
}

fn classification_features(sample: &Sample) -> Result<[f64; crate::models::FEATURE_LEN]> {
    let mask = sample.pseudo_mask.as_ref().expect("pseudo-mask assigned before classification");
    let (crop_img, crop_mask) = classification_crop_pair(&sample.image, mask)?;
    lesion_features(&crop_img, &crop_mask)
}

/// Runs the full self-training loop and returns the best iteration's
/// artifacts together with the complete report series.
pub fn run_self_training(
    source: &[Sample],
    target: Vec<Sample>,
    cfg: &SelfTrainConfig,
) -> Result<SelfTrainOutcome> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(Error::invalid("source set is empty"));
    }
    for s in source {
        if s.origin != Origin::Source || s.reference_mask.is_none() {
            return Err(Error::invalid(format!(
                "sample {:?} is not a mask-annotated source sample",
                s.id
            )));
        }
    }
    if target.is_empty() {
        return Err(Error::invalid("target set is empty"));
    }
    for s in &target {
        if s.origin != Origin::Target {
            return Err(Error::invalid(format!("sample {:?} is not a target sample", s.id)));
        }
    }

    let (mut train_samples, mut val_samples, test_samples) =
        split_target(target, SPLIT_TEST_FRACTION, SPLIT_VALIDATION_FRACTION, cfg.train.seed)?;
    let split = SplitIds {
        train: train_samples.iter().map(|s| s.id.clone()).collect(),
        validation: val_samples.iter().map(|s| s.id.clone()).collect(),
        test: test_samples.iter().map(|s| s.id.clone()).collect(),
    };
    drop(test_samples); // the test partition stays untouched until evaluate_holdout

    let source_maps: Vec<EntropyMap> = source
        .iter()
        .map(|s| local_entropy_filter(&s.image, FEATURE_WINDOW_RADIUS))
        .collect::<Result<_>>()?;
    let train_maps: Vec<EntropyMap> = train_samples
        .iter()
        .map(|s| local_entropy_filter(&s.image, FEATURE_WINDOW_RADIUS))
        .collect::<Result<_>>()?;
    let val_maps: Vec<EntropyMap> = val_samples
        .iter()
        .map(|s| local_entropy_filter(&s.image, FEATURE_WINDOW_RADIUS))
        .collect::<Result<_>>()?;

    let source_items: Vec<SegTrainItem> = source
        .iter()
        .zip(&source_maps)
        .map(|(s, entropy)| SegTrainItem {
            image: &s.image,
            mask: s.reference_mask.as_ref().expect("validated above"),
            entropy,
        })
        .collect();

    let mut teacher = train_segmenter_prepared(&source_items, &cfg.train, None, cfg.train.epochs)?;

    let pp = effective_postprocess(cfg);
    let mut reports: Vec<IterationReport> = Vec::new();
    let mut iteration_masks: Vec<Vec<(String, BinaryMask)>> = Vec::new();
    let mut iteration_models: Vec<(LinearModelParams, LinearModelParams)> = Vec::new();
    let mut termination = TerminationState::new();

    for t in 1..=cfg.max_iterations {
        let started = Instant::now();

        // (2) Predict, post-process, and guard-update every train and
        // validation pseudo-mask.
        let mut preserved = 0u64;
        for (samples, maps) in
            [(&mut train_samples, &train_maps), (&mut val_samples, &val_maps)]
        {
            for i in 0..samples.len() {
                let s = &mut samples[i];
                let (raw, _) = predict_mask(&teacher, &s.image, &maps[i], PREDICT_THRESHOLD)?;
                let processed = postprocess_mask(&raw, &pp)?;
                let (updated, kept) =
                    update_pseudo_mask(s.pseudo_mask.as_ref(), processed, pp.enable_blank_guard)?;
                if kept {
                    preserved += 1;
                }
                s.pseudo_mask = Some(updated);
            }
        }
        let empty_count = train_samples
            .iter()
            .chain(val_samples.iter())
            .filter(|s| s.pseudo_mask.as_ref().is_some_and(|m| m.is_blank()))
            .count() as u64;

        // Admission decisions are logged every iteration and reused for the
        // pool when the loop continues.
        let admission = admission_config(cfg, &pp, t);
        let accepted_flags: Vec<bool> = train_samples
            .iter()
            .map(|s| match &admission {
                None => false,
                Some(rule) => {
                    filter_confident(s.pseudo_mask.as_ref().expect("assigned above"), rule).accepted
                }
            })
            .collect();
        let accepted = accepted_flags.iter().filter(|&&a| a).count() as u64;

        // (3) Classify lesion crops: train on target-train, evaluate on
        // target-validation.
        let mut train_features = Vec::with_capacity(train_samples.len());
        let mut train_labels = Vec::with_capacity(train_samples.len());
        for s in &train_samples {
            train_features.push(classification_features(s)?);
            train_labels.push(s.class_label.expect("split validated labels").is_malignant());
        }
        let classifier_cfg = TrainConfig {
            learning_rate: CLASSIFIER_LEARNING_RATE,
            epochs: CLASSIFIER_EPOCHS,
            ..cfg.train.clone()
        };
        let classifier = train_classifier(&train_features, &train_labels, &classifier_cfg)?;

        let mut scores = Vec::with_capacity(val_samples.len());
        let mut val_labels = Vec::with_capacity(val_samples.len());
        for s in &val_samples {
            scores.push(predict_class(&classifier, &classification_features(s)?)?);
            val_labels.push(s.class_label.expect("split validated labels").is_malignant());
        }
        let predicted: Vec<bool> = scores.iter().map(|&p| p >= 0.5).collect();
        let counts = confusion(&predicted, &val_labels)?;
        let auc_value = roc_auc(&scores, &val_labels)?;

        let all_have_truth = train_samples
            .iter()
            .chain(val_samples.iter())
            .all(|s| s.truth_mask.is_some());
        let mean_iou_vs_reference = if all_have_truth {
            let mut sum = 0.0;
            let mut n = 0u64;
            for s in train_samples.iter().chain(val_samples.iter()) {
                let truth = s.truth_mask.as_ref().expect("checked above");
                sum += iou(s.pseudo_mask.as_ref().expect("assigned above"), truth)?.value;
                n += 1;
            }
            Some(sum / n as f64)
        } else {
            None
        };

        let metric_value = match cfg.termination.metric {
            Metric::Precision => precision(&counts).value,
            Metric::Accuracy => accuracy(&counts),
            Metric::Auc => auc_value,
        };

        reports.push(IterationReport {
            iteration: t,
            accuracy: accuracy(&counts),
            precision: precision(&counts).value,
            recall: recall(&counts).value,
            auc: auc_value,
            empty_pseudo_mask_count: empty_count,
            accepted_for_training: accepted,
            masks_preserved_by_guard: preserved,
            mean_iou_vs_reference,
            wall_time_seconds: started.elapsed().as_secs_f64(),
        });
        let mut masks: Vec<(String, BinaryMask)> = train_samples
            .iter()
            .chain(val_samples.iter())
            .map(|s| (s.id.clone(), s.pseudo_mask.clone().expect("assigned above")))
            .collect();
        masks.sort_by(|a, b| a.0.cmp(&b.0));
        iteration_masks.push(masks);
        iteration_models.push((teacher.clone(), classifier));

        if termination.observe(t, metric_value, &cfg.termination) || t == cfg.max_iterations {
            break;
        }

        // (4) Rebuild the pool from scratch — all source pairs plus the
        // currently accepted target pairs — and fine-tune the student from
        // the teacher.
        let mut pool = source_items.clone();
        for (i, s) in train_samples.iter().enumerate() {
            if accepted_flags[i] {
                pool.push(SegTrainItem {
                    image: &s.image,
                    mask: s.pseudo_mask.as_ref().expect("assigned above"),
                    entropy: &train_maps[i],
                });
            }
        }
        let student =
            train_segmenter_prepared(&pool, &cfg.train, Some(&teacher), cfg.train.fine_tune_epochs)?;
        teacher = student;
    }

    let best_iteration = termination.best_iteration;
    let idx = (best_iteration - 1) as usize;
    let (model, classifier) = iteration_models[idx].clone();
    Ok(SelfTrainOutcome {
        reports,
        best_iteration,
        model,
        classifier,
        pseudo_masks: iteration_masks[idx].clone(),
        iteration_masks,
        split,
    })
}

/// Final classification metrics on the untouched test partition.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct HoldoutReport {
    pub test_size: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub precision_degenerate: bool,
    pub recall: f64,
    pub recall_degenerate: bool,
    pub auc: f64,
    /// Set when test ids overlap the validation split — a protocol breach
    /// worth surfacing rather than an error.
    pub leakage_warning: bool,
}

/// Evaluates the saved best model pair on the test partition: segment,
/// post-process, crop, classify, and score in a single pass.
pub fn evaluate_holdout(
    model: &LinearModelParams,
    classifier: &LinearModelParams,
    test: &[Sample],
    postprocess: &PostprocessConfig,
    validation_ids: &BTreeSet<String>,
) -> Result<HoldoutReport> {
    if test.is_empty() {
        return Err(Error::invalid("test partition is empty"));
    }
    let leakage_warning = test.iter().any(|s| validation_ids.contains(&s.id));
    let mut scores = Vec::with_capacity(test.len());
    let mut labels = Vec::with_capacity(test.len());
    for s in test {
        let label = s
            .class_label
            .ok_or_else(|| Error::invalid(format!("test sample {:?} has no class label", s.id)))?;
        let em = local_entropy_filter(&s.image, FEATURE_WINDOW_RADIUS)?;
        let (raw, _) = predict_mask(model, &s.image, &em, PREDICT_THRESHOLD)?;
        let processed = postprocess_mask(&raw, postprocess)?;
        let (crop_img, crop_mask) = classification_crop_pair(&s.image, &processed)?;
        scores.push(predict_class(classifier, &lesion_features(&crop_img, &crop_mask)?)?);
        labels.push(label.is_malignant());
    }
    let predicted: Vec<bool> = scores.iter().map(|&p| p >= 0.5).collect();
    let counts = confusion(&predicted, &labels)?;
    let p = precision(&counts);
    let r = recall(&counts);
    Ok(HoldoutReport {
        test_size: test.len() as u64,
        counts,
        accuracy: accuracy(&counts),
        precision: p.value,
        precision_degenerate: p.degenerate,
        recall: r.value,
        recall_degenerate: r.degenerate,
        auc: roc_auc(&scores, &labels)?,
        leakage_warning,
    })
}
