//! Shannon entropy (global and sliding-window local), contour tracing, and
//! the entropy-based exam-area crop.
//!
//! Ultrasound exports surround the informative scan region with dead space
//! and overlay text. The scan region is texture-rich while the surround is
//! flat, so a local-entropy threshold followed by a largest-contour search
//! recovers the exam area without any format-specific heuristics.

use crate::geometry::{signed_area, Point, Polygon};
use crate::imaging::{connected_components, crop, histogram, normalize_histogram, BinaryMask,
    Connectivity, Image, Rect};
use crate::{Error, Result};
use std::collections::HashSet;

/// Per-pixel local entropy in bits; dimensions match the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl EntropyMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.values[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Shannon entropy of a probability distribution: H = -sum p_i log_b p_i,
/// with zero-probability entries contributing nothing.
pub fn shannon_entropy(p: &[f64], base: f64) -> Result<f64> {
    if !base.is_finite() || base <= 1.0 {
        return Err(Error::invalid(format!("log base must exceed 1, got {base}")));
    }
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "probabilities must sum to 1 (got {sum:.9})"
        )));
    }
    let ln_base = base.ln();
    let h = -p
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * (v.ln() / ln_base))
        .sum::<f64>();
    // -0.0 shows up for single-level distributions; normalize it away.
    Ok(h.max(0.0))
}

/// Entropy in bits of the image's intensity histogram.
pub fn global_entropy(img: &Image) -> f64 {
    let n = normalize_histogram(&histogram(img)).expect("image is non-empty");
    shannon_entropy(n.values(), 2.0).expect("normalized histogram")
}

/// Sliding-window local entropy in bits. The window is the
/// (2*radius+1)-sided square centered on each pixel, clipped at the image
/// borders (edge windows shrink rather than pad).
///
/// The histogram slides incrementally along each row — one column enters
/// and one leaves per step — so the cost is O(width * height * window-side)
/// rather than a fresh 256-bin census per pixel. The running sum
/// S = sum c_i * log2(c_i) turns each update into table lookups:
/// H = log2(N) - S / N.
pub fn local_entropy_filter(img: &Image, radius: u32) -> Result<EntropyMap> {
    if radius == 0 {
        return Err(Error::invalid("window radius must be at least 1"));
    }
    let w = img.width() as i64;
    let h = img.height() as i64;
    let r = radius as i64;

    let side = 2 * (r as usize) + 1;
    let max_count = (side * side).min((w * h) as usize);
    let clog2: Vec<f64> = (0..=max_count)
        .map(|c| {
            if c == 0 {
                0.0
            } else {
                let c = c as f64;
                c * c.log2()
            }
        })
        .collect();

    let mut values = vec![0.0f64; (w * h) as usize];
    let mut hist = [0u32; 256];

    // One column of the window enters or leaves the histogram.
    let add_col = |img: &Image, hist: &mut [u32; 256], n: &mut u32, s: &mut f64,
                   nonzero: &mut u32, cx: i64, y0: i64, y1: i64, table: &[f64]| {
        for yy in y0..=y1 {
            let level = img.get(cx as u32, yy as u32) as usize;
            let c = hist[level] as usize;
            *s -= table[c];
            *s += table[c + 1];
            hist[level] += 1;
            if c == 0 {
                *nonzero += 1;
            }
            *n += 1;
        }
    };
    let remove_col = |img: &Image, hist: &mut [u32; 256], n: &mut u32, s: &mut f64,
                      nonzero: &mut u32, cx: i64, y0: i64, y1: i64, table: &[f64]| {
        for yy in y0..=y1 {
            let level = img.get(cx as u32, yy as u32) as usize;
            let c = hist[level] as usize;
            *s -= table[c];
            *s += table[c - 1];
            hist[level] -= 1;
            if c == 1 {
                *nonzero -= 1;
            }
            *n -= 1;
        }
    };
    let entropy_of = |n: u32, s: f64, nonzero: u32| -> f64 {
        if nonzero <= 1 {
            0.0
        } else {
            ((n as f64).log2() - s / n as f64).clamp(0.0, 8.0)
        }
    };

    for y in 0..h {
        let y0 = (y - r).max(0);
        let y1 = (y + r).min(h - 1);

        // Fresh histogram at the row start bounds floating-point drift to a
        // single row's worth of incremental updates.
        hist.fill(0);
        let mut n = 0u32;
        let mut s = 0.0f64;
        let mut nonzero = 0u32;
        for cx in 0..=r.min(w - 1) {
            add_col(img, &mut hist, &mut n, &mut s, &mut nonzero, cx, y0, y1, &clog2);
        }
        values[(y * w) as usize] = entropy_of(n, s, nonzero);

        for x in 1..w {
            let leaving = x - r - 1;
            if leaving >= 0 {
                remove_col(img, &mut hist, &mut n, &mut s, &mut nonzero, leaving, y0, y1, &clog2);
            }
            let entering = x + r;
            if entering < w {
                add_col(img, &mut hist, &mut n, &mut s, &mut nonzero, entering, y0, y1, &clog2);
            }
            values[(y * w + x) as usize] = entropy_of(n, s, nonzero);
        }
    }

    Ok(EntropyMap { width: img.width(), height: img.height(), values })
}

/// Thresholds an entropy map at a fraction of its maximum. An all-zero map
/// yields a blank mask regardless of the fraction.
pub fn threshold_entropy(em: &EntropyMap, t: f64) -> Result<BinaryMask> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("threshold fraction must be in [0,1], got {t}")));
    }
    let max = em.max_value();
    if max <= 0.0 {
        return Ok(BinaryMask::blank(em.width, em.height));
    }
    let cut = t * max;
    let bits = em.values.iter().map(|&v| v >= cut).collect();
    BinaryMask::new(em.width, em.height, bits)
}

/// Traces the outer boundary of one 8-connected component by
/// Moore-neighbor walking, clockwise in raster orientation, starting from
/// the component's first pixel in raster-scan order.
fn trace_boundary(
    label_of: &dyn Fn(i64, i64) -> bool,
    start: (i64, i64),
    area: usize,
) -> Vec<(i64, i64)> {
    // Clockwise Moore neighborhood starting from the west neighbor.
    const DIRS: [(i64, i64); 8] = [
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
    ];

    if !DIRS.iter().any(|&(dx, dy)| label_of(start.0 + dx, start.1 + dy)) {
        return vec![start];
    }

    let mut contour = vec![start];
    // The walk state is (boundary pixel, backtrack pixel). The trace is
    // deterministic, so the first repeated state closes the cycle; this is
    // robust where the plain "re-enter the start from the initial
    // direction" rule fails (e.g. two-pixel dominoes).
    let mut seen: HashSet<((i64, i64), (i64, i64))> = HashSet::new();
    let mut p = start;
    // The raster scan reached `start` moving rightward, so its west
    // neighbor is outside the component.
    let mut b = (start.0 - 1, start.1);
    let cap = 4 * area + 8;

    loop {
        seen.insert((p, b));
        let db = DIRS
            .iter()
            .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == b)
            .expect("backtrack is a Moore neighbor");
        let mut next = None;
        for k in 1..=8 {
            let d = (db + k) % 8;
            let q = (p.0 + DIRS[d].0, p.1 + DIRS[d].1);
            if label_of(q.0, q.1) {
                let before = (db + k - 1) % 8;
                next = Some((q, (p.0 + DIRS[before].0, p.1 + DIRS[before].1)));
                break;
            }
        }
        let (q, prev) = next.expect("component has a neighbor");
        if seen.contains(&(q, prev)) || contour.len() >= cap {
            break;
        }
        contour.push(q);
        p = q;
        b = prev;
    }
    contour
}

/// One closed polygon per outer boundary of each 8-connected foreground
/// component, vertices at pixel centers, ordered by raster-scan first
/// encounter and traced clockwise.
pub fn extract_contours(mask: &BinaryMask) -> Vec<Polygon> {
    let labeling = connected_components(mask, Connectivity::Eight);
    let count = labeling.component_count();
    if count == 0 {
        return Vec::new();
    }

    let w = mask.width() as i64;
    let h = mask.height() as i64;
    let mut starts: Vec<Option<(i64, i64)>> = vec![None; count];
    for y in 0..h {
        for x in 0..w {
            let label = labeling.label(x as u32, y as u32);
            if label != 0 && starts[(label - 1) as usize].is_none() {
                starts[(label - 1) as usize] = Some((x, y));
            }
        }
    }

    (1..=count as u32)
        .map(|label| {
            let inside = |x: i64, y: i64| {
                x >= 0 && y >= 0 && x < w && y < h && labeling.label(x as u32, y as u32) == label
            };
            let start = starts[(label - 1) as usize].expect("component has pixels");
            let path = trace_boundary(&inside, start, labeling.area(label));
            let vertices = path
                .into_iter()
                .map(|(x, y)| Point::new(x as f64, y as f64))
                .collect();
            Polygon::new(vertices).expect("trace yields at least one vertex")
        })
        .collect()
}

/// Recovers the exam area: local entropy filter, fraction-of-max threshold,
/// contour extraction, then the crop of the largest contour's bounding
/// rectangle. Degenerate inputs (no contour, or only zero-area contours)
/// fall back to the identity crop.
pub fn crop_exam_area(img: &Image, radius: u32, t: f64) -> Result<(Image, Rect)> {
    let em = local_entropy_filter(img, radius)?;
    let mask = threshold_entropy(&em, t)?;
    let contours = extract_contours(&mask);

    let mut best: Option<(f64, &Polygon)> = None;
    for poly in &contours {
        let area = signed_area(poly).abs();
        if area <= 0.0 {
            continue;
        }
        // Strict comparison keeps the earliest contour on ties (contours
        // arrive in raster-scan encounter order).
        if best.is_none_or(|(b, _)| area > b) {
            best = Some((area, poly));
        }
    }

    let Some((_, poly)) = best else {
        return Ok((img.clone(), img.full_rect()));
    };

    let min_x = poly.vertices().iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
    let max_x = poly.vertices().iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = poly.vertices().iter().map(|v| v.y).fold(f64::INFINITY, f64::min);
    let max_y = poly.vertices().iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max);
    let rect = Rect {
        x: min_x.round() as u32,
        y: min_y.round() as u32,
        w: (max_x.round() - min_x.round()) as u32 + 1,
        h: (max_y.round() - min_y.round()) as u32 + 1,
    };
    Ok((crop(img, rect)?, rect))
}
