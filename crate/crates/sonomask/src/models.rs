//! Trainable reference models: a logistic pixel segmenter and a logistic
//! lesion classifier, both optimizing clamped cross-entropy by gradient
//! descent. The train/predict functions are the seam where heavier models
//! could be substituted without touching the self-training loop.

use std::io::Write as _;
use std::path::Path;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::{local_entropy_filter, EntropyMap};
use crate::geometry::{convex_hull, rasterize_polygon, Point};
use crate::imaging::{bounding_rect, BinaryMask, Image};
use crate::{Error, Result};

/// Window radius used for the segmenter's local mean/std features and for
/// the entropy map fed to it.
pub const FEATURE_WINDOW_RADIUS: u32 = 3;

/// Length of both feature vectors (pixel and lesion), bias included.
pub const FEATURE_LEN: usize = 7;

const MODEL_MAGIC: &[u8; 4] = b"STSG";
const MODEL_VERSION: u16 = 1;

/// Weights of a linear-logistic model plus training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelParams {
    pub weights: Vec<f64>,
    pub trained_epochs: u32,
    pub seed: u64,
}

/// Gradient-descent knobs shared by the segmenter and classifier.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Step size for gradient descent.
    pub learning_rate: f64,
    /// Epochs for training a model from scratch.
    pub epochs: u32,
    /// Epochs when fine-tuning from a warm start.
    pub fine_tune_epochs: u32,
    /// Pixels per segmenter mini-batch (rounded down to an even count).
    pub batch_pixels: u32,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub early_stop_patience: u32,
    /// RNG seed for sampling and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 100,
            fine_tune_epochs: 10,
            batch_pixels: 256,
            early_stop_patience: 10,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning_rate must be positive and finite"));
        }
        if self.epochs == 0 || self.fine_tune_epochs == 0 {
            return Err(Error::invalid("epoch counts must be at least 1"));
        }
        if self.batch_pixels < 2 {
            return Err(Error::invalid("batch_pixels must be at least 2"));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn dot(w: &[f64], f: &[f64; FEATURE_LEN]) -> f64 {
    debug_assert_eq!(w.len(), FEATURE_LEN);
    let mut s = 0.0;
    for i in 0..FEATURE_LEN {
        s += w[i] * f[i];
    }
    s
}

/// Mean binary cross-entropy (natural log) with probabilities clamped to
/// [1e-7, 1 - 1e-7] so perfect predictions stay finite.
pub fn cross_entropy_loss(predicted: &[f64], target: &[bool]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::invalid(format!(
            "prediction/target lengths differ: {} vs {}",
            predicted.len(),
            target.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("cross-entropy needs at least one item"));
    }
    let mut sum = 0.0;
    for (&p, &y) in predicted.iter().zip(target) {
        let p = p.clamp(1e-7, 1.0 - 1e-7);
        sum -= if y { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(sum / predicted.len() as f64)
}

/// Features describing one pixel: intensity, clipped-window mean/std, local
/// entropy, normalized position, and a bias term — all in [0, 1].
pub fn pixel_features(
    img: &Image,
    em: &EntropyMap,
    x: u32,
    y: u32,
    radius: u32,
) -> Result<[f64; FEATURE_LEN]> {
    if em.width() != img.width() || em.height() != img.height() {
        return Err(Error::invalid(format!(
            "entropy map is {}x{} but image is {}x{}",
            em.width(),
            em.height(),
            img.width(),
            img.height()
        )));
    }
    if x >= img.width() || y >= img.height() {
        return Err(Error::invalid(format!(
            "pixel ({x},{y}) outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    if radius == 0 {
        return Err(Error::invalid("feature window radius must be at least 1"));
    }

    let x0 = x.saturating_sub(radius);
    let y0 = y.saturating_sub(radius);
    let x1 = (x + radius).min(img.width() - 1);
    let y1 = (y + radius).min(img.height() - 1);
    let mut sum = 0u64;
    let mut sum_sq = 0u64;
    for wy in y0..=y1 {
        for wx in x0..=x1 {
            let v = img.get(wx, wy) as u64;
            sum += v;
            sum_sq += v * v;
        }
    }
    let n = ((x1 - x0 + 1) as u64 * (y1 - y0 + 1) as u64) as f64;
    let mean = sum as f64 / n;
    let var = (sum_sq as f64 / n - mean * mean).max(0.0);

    let norm = |v: u32, extent: u32| {
        if extent <= 1 {
            0.0
        } else {
            v as f64 / (extent - 1) as f64
        }
    };
    Ok([
        img.get(x, y) as f64 / 255.0,
        mean / 255.0,
        var.sqrt() / 255.0,
        (em.get(x, y) / 8.0).clamp(0.0, 1.0),
        norm(x, img.width()),
        norm(y, img.height()),
        1.0,
    ])
}

/// One labeled image with its precomputed entropy map, borrowed for the
/// duration of a training run.
#[derive(Clone, Copy)]
pub(crate) struct SegTrainItem<'a> {
    pub image: &'a Image,
    pub mask: &'a BinaryMask,
    pub entropy: &'a EntropyMap,
}

type PixelRef = (usize, u32, u32);

/// Draws `half` foreground then `half` background pixel references, each
/// uniformly with replacement, so every batch is exactly half foreground.
fn draw_balanced_batch(
    rng: &mut ChaCha8Rng,
    fg: &[PixelRef],
    bg: &[PixelRef],
    half: usize,
) -> Vec<(PixelRef, bool)> {
    let mut batch = Vec::with_capacity(half * 2);
    for _ in 0..half {
        batch.push((fg[rng.gen_range(0..fg.len())], true));
    }
    for _ in 0..half {
        batch.push((bg[rng.gen_range(0..bg.len())], false));
    }
    batch
}

fn holdout_count(len: usize) -> usize {
    if len < 2 {
        0
    } else {
        (len / 10).max(1).min(len - 1)
    }
}

/// Trains the pixel segmenter on labeled images. With `init` absent this is
/// from-scratch training for `cfg.epochs`; with `init` present the model is
/// warm-started and fine-tuned for `cfg.fine_tune_epochs`. Mini-batches are
/// balanced half foreground / half background; early stopping watches mean
/// loss on a stratified 10% pixel holdout and returns the best-epoch
/// weights (the untouched `init` when nothing improved on it).
pub fn train_segmenter(
    labeled: &[(&Image, &BinaryMask)],
    cfg: &TrainConfig,
    init: Option<&LinearModelParams>,
) -> Result<LinearModelParams> {
    if labeled.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for (img, mask) in labeled {
        if img.width() != mask.width() || img.height() != mask.height() {
            return Err(Error::invalid(format!(
                "mask dimensions {}x{} do not match image {}x{}",
                mask.width(),
                mask.height(),
                img.width(),
                img.height()
            )));
        }
    }
    let maps: Vec<EntropyMap> = labeled
        .iter()
        .map(|(img, _)| local_entropy_filter(img, FEATURE_WINDOW_RADIUS))
        .collect::<Result<_>>()?;
    let items: Vec<SegTrainItem> = labeled
        .iter()
        .zip(&maps)
        .map(|(&(image, mask), entropy)| SegTrainItem { image, mask, entropy })
        .collect();
    let epochs = if init.is_some() { cfg.fine_tune_epochs } else { cfg.epochs };
    train_segmenter_prepared(&items, cfg, init, epochs)
}

/// Core segmenter trainer over items whose entropy maps are already
/// computed, so the self-training loop can reuse maps across iterations.
pub(crate) fn train_segmenter_prepared(
    items: &[SegTrainItem],
    cfg: &TrainConfig,
    init: Option<&LinearModelParams>,
    epochs: u32,
) -> Result<LinearModelParams> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if epochs == 0 {
        return Err(Error::invalid("epoch count must be at least 1"));
    }
    if let Some(p) = init {
        if p.weights.len() != FEATURE_LEN {
            return Err(Error::invalid(format!(
                "warm-start weight length {} does not match feature length {FEATURE_LEN}",
                p.weights.len()
            )));
        }
    }
    for it in items {
        let (iw, ih) = (it.image.width(), it.image.height());
        if it.mask.width() != iw
            || it.mask.height() != ih
            || it.entropy.width() != iw
            || it.entropy.height() != ih
        {
            return Err(Error::invalid("training item mask/entropy dimensions differ from image"));
        }
    }

    let mut fg: Vec<PixelRef> = Vec::new();
    let mut bg: Vec<PixelRef> = Vec::new();
    for (idx, it) in items.iter().enumerate() {
        for y in 0..it.image.height() {
            for x in 0..it.image.width() {
                if it.mask.get(x, y) {
                    fg.push((idx, x, y));
                } else {
                    bg.push((idx, x, y));
                }
            }
        }
    }
    if fg.is_empty() {
        return Err(Error::degenerate("no foreground pixels in any training mask"));
    }
    if bg.is_empty() {
        return Err(Error::degenerate("no background pixels in any training mask"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fg.shuffle(&mut rng);
    bg.shuffle(&mut rng);
    let fg_hold = holdout_count(fg.len());
    let bg_hold = holdout_count(bg.len());
    let features_of = |&(idx, x, y): &PixelRef| -> [f64; FEATURE_LEN] {
        let it = &items[idx];
        pixel_features(it.image, it.entropy, x, y, FEATURE_WINDOW_RADIUS)
            .expect("pixel refs come from validated items")
    };
    let holdout: Vec<([f64; FEATURE_LEN], bool)> = fg[..fg_hold]
        .iter()
        .map(|r| (features_of(r), true))
        .chain(bg[..bg_hold].iter().map(|r| (features_of(r), false)))
        .collect();
    let fg_train = &fg[fg_hold..];
    let bg_train = &bg[bg_hold..];

    // The holdout criterion weighs foreground and background equally — the
    // same objective the balanced mini-batches optimize. Judging balanced
    // training by a natural-prior loss would reward whichever epoch drifted
    // furthest toward the majority class, and a warm start could then never
    // measurably improve on its init.
    let eval_holdout = |w: &[f64]| -> Option<f64> {
        let mut sum = [0.0f64; 2];
        let mut n = [0u64; 2];
        for (f, y) in &holdout {
            let p = sigmoid(dot(w, f)).clamp(1e-7, 1.0 - 1e-7);
            let class = usize::from(*y);
            sum[class] -= if *y { p.ln() } else { (1.0 - p).ln() };
            n[class] += 1;
        }
        let means: Vec<f64> = (0..2)
            .filter(|&c| n[c] > 0)
            .map(|c| sum[c] / n[c] as f64)
            .collect();
        if means.is_empty() {
            return None;
        }
        Some(means.iter().sum::<f64>() / means.len() as f64)
    };

    let batch = ((cfg.batch_pixels as usize) & !1).max(2);
    let half = batch / 2;
    let pool_min = fg_train.len().min(bg_train.len());
    let steps_per_epoch = (2 * pool_min).div_ceil(batch).max(1);

    let mut w: Vec<f64> = init.map_or_else(|| vec![0.0; FEATURE_LEN], |p| p.weights.clone());
    let mut best_w = w.clone();
    let mut best_epoch = 0u32;
    let mut best_loss = eval_holdout(&w);
    let mut bad = 0u32;

    for epoch in 1..=epochs {
        for _ in 0..steps_per_epoch {
            let samples = draw_balanced_batch(&mut rng, fg_train, bg_train, half);
            let mut grad = [0.0f64; FEATURE_LEN];
            for (pixel, y) in &samples {
                let f = features_of(pixel);
                let residual = sigmoid(dot(&w, &f)) - if *y { 1.0 } else { 0.0 };
                for j in 0..FEATURE_LEN {
                    grad[j] += residual * f[j];
                }
            }
            for j in 0..FEATURE_LEN {
                w[j] -= cfg.learning_rate * grad[j] / samples.len() as f64;
            }
        }
        match (eval_holdout(&w), best_loss) {
            (Some(loss), Some(best)) => {
                if loss < best {
                    best_loss = Some(loss);
                    best_w = w.clone();
                    best_epoch = epoch;
                    bad = 0;
                } else {
                    bad += 1;
                    if bad >= cfg.early_stop_patience {
                        break;
                    }
                }
            }
            // No holdout pixels to watch: keep the latest weights.
            _ => {
                best_w = w.clone();
                best_epoch = epoch;
            }
        }
    }

    if best_epoch == 0 {
        if let Some(p) = init {
            return Ok(p.clone());
        }
    }
    Ok(LinearModelParams {
        weights: best_w,
        trained_epochs: init.map_or(0, |p| p.trained_epochs) + best_epoch,
        seed: cfg.seed,
    })
}

/// Applies the segmenter to every pixel, returning the thresholded mask
/// (probability >= threshold is foreground) and the raw probability map in
/// raster order.
pub fn predict_mask(
    params: &LinearModelParams,
    img: &Image,
    em: &EntropyMap,
    threshold: f64,
) -> Result<(BinaryMask, Vec<f64>)> {
    if params.weights.len() != FEATURE_LEN {
        return Err(Error::invalid(format!(
            "weight length {} does not match feature length {FEATURE_LEN}",
            params.weights.len()
        )));
    }
    if em.width() != img.width() || em.height() != img.height() {
        return Err(Error::invalid("entropy map dimensions do not match image"));
    }
    if !threshold.is_finite() || !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("threshold must lie in [0, 1]"));
    }
    let mut probs = Vec::with_capacity(img.width() as usize * img.height() as usize);
    let mut bits = Vec::with_capacity(probs.capacity());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let f = pixel_features(img, em, x, y, FEATURE_WINDOW_RADIUS)?;
            let p = sigmoid(dot(&params.weights, &f));
            probs.push(p);
            bits.push(p >= threshold);
        }
    }
    let mask = BinaryMask::new(img.width(), img.height(), bits)?;
    Ok((mask, probs))
}

/// Shape and intensity summary of a masked lesion crop: area fraction,
/// masked mean/std intensity, contour irregularity (perimeter² / 4πA, 1 for
/// an ideal disk), solidity (area over rasterized-hull area), bounding-rect
/// aspect ratio, and a bias term. A blank mask means segmentation found
/// nothing, and the whole crop is treated as foreground instead.
pub fn lesion_features(crop: &Image, mask_in_crop: &BinaryMask) -> Result<[f64; FEATURE_LEN]> {
    if crop.width() != mask_in_crop.width() || crop.height() != mask_in_crop.height() {
        return Err(Error::invalid(format!(
            "mask dimensions {}x{} do not match crop {}x{}",
            mask_in_crop.width(),
            mask_in_crop.height(),
            crop.width(),
            crop.height()
        )));
    }
    let full;
    let mask = if mask_in_crop.is_blank() {
        full = BinaryMask::full(crop.width(), crop.height());
        &full
    } else {
        mask_in_crop
    };

    let (w, h) = (crop.width(), crop.height());
    let area = mask.count_foreground();
    let mut sum = 0u64;
    let mut sum_sq = 0u64;
    let mut perimeter = 0u64;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let v = crop.get(x, y) as u64;
            sum += v;
            sum_sq += v * v;
            // Each 4-neighbor edge facing background or leaving the crop is
            // one unit of boundary.
            let exposed_left = x == 0 || !mask.get(x - 1, y);
            let exposed_right = x + 1 >= w || !mask.get(x + 1, y);
            let exposed_up = y == 0 || !mask.get(x, y - 1);
            let exposed_down = y + 1 >= h || !mask.get(x, y + 1);
            perimeter +=
                [exposed_left, exposed_right, exposed_up, exposed_down].iter().filter(|&&e| e).count() as u64;
        }
    }
    let n = area as f64;
    let mean = sum as f64 / n;
    let var = (sum_sq as f64 / n - mean * mean).max(0.0);
    let irregularity = (perimeter as f64).powi(2) / (4.0 * std::f64::consts::PI * n);

    let centers: Vec<Point> =
        mask.foreground_pixels().map(|(x, y)| Point::new(x as f64, y as f64)).collect();
    let hull = convex_hull(&centers)?;
    let hull_area = rasterize_polygon(&hull, w, h)?.count_foreground();
    let solidity = area as f64 / hull_area as f64;

    let rect = bounding_rect(mask).expect("mask has foreground here");
    let aspect = rect.w.max(rect.h) as f64 / rect.w.min(rect.h) as f64;

    Ok([
        area as f64 / (w as f64 * h as f64),
        mean / 255.0,
        var.sqrt() / 255.0,
        irregularity,
        solidity,
        aspect,
        1.0,
    ])
}

/// Full-batch gradient descent from zero weights; returns the final weights
/// and the loss trace (entry 0 is the loss before any update).
fn fit_full_batch(
    features: &[[f64; FEATURE_LEN]],
    labels: &[bool],
    learning_rate: f64,
    epochs: u32,
) -> (Vec<f64>, Vec<f64>) {
    let n = features.len() as f64;
    let mut w = vec![0.0f64; FEATURE_LEN];
    let loss_at = |w: &[f64]| {
        let probs: Vec<f64> = features.iter().map(|f| sigmoid(dot(w, f))).collect();
        cross_entropy_loss(&probs, labels).expect("caller validated inputs")
    };
    let mut losses = Vec::with_capacity(epochs as usize + 1);
    losses.push(loss_at(&w));
    for _ in 0..epochs {
        let mut grad = [0.0f64; FEATURE_LEN];
        for (f, &y) in features.iter().zip(labels) {
            let residual = sigmoid(dot(&w, f)) - if y { 1.0 } else { 0.0 };
            for j in 0..FEATURE_LEN {
                grad[j] += residual * f[j];
            }
        }
        for j in 0..FEATURE_LEN {
            w[j] -= learning_rate * grad[j] / n;
        }
        losses.push(loss_at(&w));
    }
    (w, losses)
}

/// Trains the lesion classifier (malignant = positive) by full-batch
/// gradient descent from zero weights; deterministic, no early stopping.
pub fn train_classifier(
    features: &[[f64; FEATURE_LEN]],
    labels: &[bool],
    cfg: &TrainConfig,
) -> Result<LinearModelParams> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::invalid(format!(
            "feature/label lengths differ: {} vs {}",
            features.len(),
            labels.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::invalid("classifier training set is empty"));
    }
    if features.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("classifier features must be finite"));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::degenerate("classifier training needs both classes present"));
    }
    let (weights, _) = fit_full_batch(features, labels, cfg.learning_rate, cfg.epochs);
    Ok(LinearModelParams { weights, trained_epochs: cfg.epochs, seed: cfg.seed })
}

/// Malignancy score in [0, 1]; the caller labels malignant at score >= 0.5.
pub fn predict_class(params: &LinearModelParams, fv: &[f64; FEATURE_LEN]) -> Result<f64> {
    if params.weights.len() != FEATURE_LEN {
        return Err(Error::invalid(format!(
            "weight length {} does not match feature length {FEATURE_LEN}",
            params.weights.len()
        )));
    }
    if fv.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("feature vector must be finite"));
    }
    Ok(sigmoid(dot(&params.weights, fv)))
}

fn encode_model(params: &LinearModelParams) -> Result<Vec<u8>> {
    let len: u16 = params
        .weights
        .len()
        .try_into()
        .map_err(|_| Error::invalid("too many weights for the model format"))?;
    if params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("model weights must be finite"));
    }
    let mut out = Vec::with_capacity(4 + 2 + 2 + params.weights.len() * 8 + 8 + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    for w in &params.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&params.trained_epochs.to_le_bytes());
    Ok(out)
}

fn decode_model(bytes: &[u8]) -> std::result::Result<LinearModelParams, String> {
    let mut off = 0usize;
    let mut take = |n: usize, field: &str| -> std::result::Result<&[u8], String> {
        if bytes.len() - off < n {
            return Err(format!("truncated while reading {field}"));
        }
        let s = &bytes[off..off + n];
        off += n;
        Ok(s)
    };
    let magic = take(4, "magic")?;
    if magic != MODEL_MAGIC {
        return Err(format!("bad magic {magic:02x?}, expected \"STSG\""));
    }
    let version = u16::from_le_bytes(take(2, "format version")?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let len = u16::from_le_bytes(take(2, "feature length")?.try_into().unwrap()) as usize;
    let mut weights = Vec::with_capacity(len);
    for i in 0..len {
        let raw = take(8, &format!("weight {i}"))?;
        weights.push(f64::from_le_bytes(raw.try_into().unwrap()));
    }
    let seed = u64::from_le_bytes(take(8, "seed")?.try_into().unwrap());
    let trained_epochs = u32::from_le_bytes(take(4, "trained_epochs")?.try_into().unwrap());
    if off != bytes.len() {
        return Err(format!("{} trailing bytes after trained_epochs", bytes.len() - off));
    }
    Ok(LinearModelParams { weights, trained_epochs, seed })
}

/// Serializes model parameters to the versioned little-endian binary layout
/// (magic "STSG", version, feature length, weights, seed, trained_epochs).
pub fn write_model(params: &LinearModelParams, path: &Path) -> Result<()> {
    let bytes = encode_model(params)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Reads model parameters written by [`write_model`].
pub fn read_model(path: &Path) -> Result<LinearModelParams> {
    let bytes = std::fs::read(path)?;
    decode_model(&bytes).map_err(|message| Error::parse(path.display().to_string(), message))
}
