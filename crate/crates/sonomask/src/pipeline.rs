//! Pseudo-mask post-processing and admission: hole filling, per-component
//! convex-hull regularization, the blank-mask guard, the confidence filter
//! that decides which pseudo-masks may join the training pool, and the
//! classification crop.

use crate::entropy::extract_contours;
use crate::geometry::{convex_hull, rasterize_polygon, scale_polygon, signed_area, Point};
use crate::imaging::{
    area_fraction, bounding_rect, connected_components, crop, crop_mask, fill_holes, BinaryMask,
    Connectivity, Image,
};
use crate::{Error, Result};

/// Knobs for the post-processing chain and the admission filter.
///
/// The boolean toggles are normally driven by the self-training variant;
/// the numeric knobs stay in effect regardless.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    /// Fill enclosed background holes before anything else.
    pub enable_fill: bool,
    /// Replace each component by its scaled convex hull (OR-combined).
    pub enable_hull: bool,
    /// Hull scale factor about the hull centroid.
    pub hull_scale: f64,
    /// Refuse to overwrite a non-blank pseudo-mask with a blank one.
    pub enable_blank_guard: bool,
    /// Minimum foreground fraction for a mask to join the training pool.
    pub filter_min_area_fraction: f64,
    /// Additionally require one dominant connected component.
    pub filter_require_single_component: bool,
    /// Fraction of foreground the dominant component must hold for the
    /// single-component rule.
    pub filter_dominant_fraction: f64,
    /// Neighborhood for component analysis.
    pub connectivity: Connectivity,
    /// When set, masks whose area fraction exceeds this cap are scaled by
    /// `oversize_hull_scale` instead of `hull_scale` (lets very large masks
    /// shrink). Disabled by default.
    pub oversize_area_cap: Option<f64>,
    /// Hull scale applied to oversized masks when the cap is set.
    pub oversize_hull_scale: f64,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        PostprocessConfig {
            enable_fill: false,
            enable_hull: false,
            hull_scale: 1.5,
            enable_blank_guard: false,
            filter_min_area_fraction: 0.01,
            filter_require_single_component: false,
            filter_dominant_fraction: 0.95,
            connectivity: Connectivity::Eight,
            oversize_area_cap: None,
            oversize_hull_scale: 0.75,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hull_scale.is_finite() || self.hull_scale <= 0.0 {
            return Err(Error::invalid(format!(
                "hull_scale must be positive, got {}",
                self.hull_scale
            )));
        }
        if !(0.0..=1.0).contains(&self.filter_min_area_fraction) {
            return Err(Error::invalid(format!(
                "filter_min_area_fraction must be in [0,1], got {}",
                self.filter_min_area_fraction
            )));
        }
        if !(self.filter_dominant_fraction > 0.0 && self.filter_dominant_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "filter_dominant_fraction must be in (0,1], got {}",
                self.filter_dominant_fraction
            )));
        }
        if let Some(cap) = self.oversize_area_cap {
            if !(0.0..=1.0).contains(&cap) {
                return Err(Error::invalid(format!(
                    "oversize_area_cap must be in [0,1], got {cap}"
                )));
            }
            if !self.oversize_hull_scale.is_finite() || self.oversize_hull_scale <= 0.0 {
                return Err(Error::invalid(format!(
                    "oversize_hull_scale must be positive, got {}",
                    self.oversize_hull_scale
                )));
            }
        }
        Ok(())
    }
}

/// Runs the post-processing chain: optional hole fill, then (optionally)
/// each component's convex hull — scaled about its centroid — combined
/// into the mask. For an effective scale of at least 1 the hulls are
/// OR-combined with the hole-filled input, so the output contains it;
/// when the oversize cap fires with a sub-unit scale, the shrunken hulls
/// replace their components so the mask can actually get smaller.
/// Components whose traced contour encloses zero area (single pixels,
/// one-pixel-wide lines) pass through unhulled either way.
pub fn postprocess_mask(raw: &BinaryMask, cfg: &PostprocessConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    if raw.is_blank() {
        return Ok(raw.clone());
    }

    let base = if cfg.enable_fill { fill_holes(raw) } else { raw.clone() };
    if !cfg.enable_hull {
        return Ok(base);
    }

    let scale = match cfg.oversize_area_cap {
        Some(cap) if area_fraction(&base) > cap => cfg.oversize_hull_scale,
        _ => cfg.hull_scale,
    };
    let keep_base = scale >= 1.0;

    let labeling = connected_components(&base, cfg.connectivity);
    let mut out = if keep_base {
        base.clone()
    } else {
        BinaryMask::blank(base.width(), base.height())
    };
    for label in 1..=labeling.component_count() as u32 {
        let component = labeling.component_mask(label);
        let contour = extract_contours(&component)
            .into_iter()
            .next()
            .expect("non-blank component has a contour");
        if signed_area(&contour).abs() <= 0.0 {
            if !keep_base {
                out = out.or(&component)?;
            }
            continue;
        }
        let points: Vec<Point> = component
            .foreground_pixels()
            .map(|(x, y)| Point::new(x as f64, y as f64))
            .collect();
        let hull = convex_hull(&points)?;
        let scaled = scale_polygon(&hull, scale)?;
        let hull_mask = rasterize_polygon(&scaled, base.width(), base.height())?;
        out = out.or(&hull_mask)?;
    }
    Ok(out)
}

/// Applies the blank-mask guard: a blank fresh mask never replaces an
/// existing non-blank one while the guard is on. Returns the chosen mask
/// and whether the previous mask was preserved.
pub fn update_pseudo_mask(
    previous: Option<&BinaryMask>,
    fresh: BinaryMask,
    guard_enabled: bool,
) -> Result<(BinaryMask, bool)> {
    if let Some(prev) = previous {
        if prev.width() != fresh.width() || prev.height() != fresh.height() {
            return Err(Error::invalid(format!(
                "pseudo-mask dimensions changed: {}x{} vs {}x{}",
                prev.width(),
                prev.height(),
                fresh.width(),
                fresh.height()
            )));
        }
        if guard_enabled && fresh.is_blank() && !prev.is_blank() {
            return Ok((prev.clone(), true));
        }
    }
    Ok((fresh, false))
}

/// Verdict of the confidence filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterDecision {
    pub accepted: bool,
    pub reason: String,
}

/// Decides whether a pseudo-mask is confident enough to join the training
/// pool: a minimum-area rule, optionally tightened by a dominant
/// single-component rule.
pub fn filter_confident(mask: &BinaryMask, cfg: &PostprocessConfig) -> FilterDecision {
    let fraction = area_fraction(mask);
    if fraction < cfg.filter_min_area_fraction {
        return FilterDecision {
            accepted: false,
            reason: format!(
                "area fraction {fraction:.4} below minimum {:.4}",
                cfg.filter_min_area_fraction
            ),
        };
    }
    if cfg.filter_require_single_component {
        let labeling = connected_components(mask, cfg.connectivity);
        if labeling.component_count() == 0 {
            return FilterDecision {
                accepted: false,
                reason: "no foreground component".to_string(),
            };
        }
        let dominant = *labeling.areas().iter().max().expect("at least one component");
        let share = dominant as f64 / mask.count_foreground() as f64;
        if share < cfg.filter_dominant_fraction {
            return FilterDecision {
                accepted: false,
                reason: format!(
                    "dominant component holds {share:.3} of foreground, below {:.3}",
                    cfg.filter_dominant_fraction
                ),
            };
        }
    }
    FilterDecision {
        accepted: true,
        reason: "meets area and component rules".to_string(),
    }
}

/// Crops the image to the pseudo-mask's bounding rectangle; a blank mask
/// falls back to the whole (already exam-cropped) image.
pub fn classification_crop(img: &Image, mask: &BinaryMask) -> Result<Image> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::invalid(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    match bounding_rect(mask) {
        Some(rect) => crop(img, rect),
        None => Ok(img.clone()),
    }
}

/// Like [`classification_crop`], but also returns the mask restricted to
/// the same rectangle, ready for shape-feature extraction.
pub fn classification_crop_pair(img: &Image, mask: &BinaryMask) -> Result<(Image, BinaryMask)> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::invalid(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    match bounding_rect(mask) {
        Some(rect) => Ok((crop(img, rect)?, crop_mask(mask, rect)?)),
        None => Ok((img.clone(), mask.clone())),
    }
}
