//! Raster primitives shared by the whole pipeline.
//!
//! Coordinate convention, used everywhere in this crate: `x` is the column,
//! `y` is the row, the origin is the top-left pixel, and storage is
//! row-major.

use crate::{Error, Result};

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    /// Builds an image from row-major pixel data.
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "pixel buffer length {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(Image { width, height, pixels })
    }

    /// Constant-intensity image.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Image::new(width, height, vec![value; (width as usize) * (height as usize)])
            .expect("positive dimensions")
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Image::new(width, height, pixels).expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[(y as usize) * (self.width as usize) + (x as usize)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[(y as usize) * (self.width as usize) + (x as usize)] = value;
    }

    /// Rectangle spanning the whole raster.
    pub fn full_rect(&self) -> Rect {
        Rect { x: 0, y: 0, w: self.width, h: self.height }
    }
}

/// Per-pixel foreground flags paired with an image of the same dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("mask dimensions must be positive"));
        }
        if bits.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "flag buffer length {} does not match {}x{}",
                bits.len(),
                width,
                height
            )));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn blank(width: u32, height: u32) -> Self {
        BinaryMask::new(width, height, vec![false; (width as usize) * (height as usize)])
            .expect("positive dimensions")
    }

    pub fn full(width: u32, height: u32) -> Self {
        BinaryMask::new(width, height, vec![true; (width as usize) * (height as usize)])
            .expect("positive dimensions")
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask::new(width, height, bits).expect("positive dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[(y as usize) * (self.width as usize) + (x as usize)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[(y as usize) * (self.width as usize) + (x as usize)] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixel coordinates in raster-scan order.
    pub fn foreground_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i as u32) % w, (i as u32) / w))
    }

    /// True when `self`'s foreground is contained in `other`'s.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Pixel-wise OR of two same-sized masks.
    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::invalid("mask dimensions differ in OR"));
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        BinaryMask::new(self.width, self.height, bits)
    }
}

/// Axis-aligned rectangle; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid("rectangle dimensions must be positive"));
        }
        Ok(Rect { x, y, w, h })
    }

    /// True when the rectangle lies fully inside a `width` x `height` raster.
    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }
}

/// Intensity histogram of an 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; 256],
    total: u64,
}

impl Histogram {
    pub fn bins(&self) -> &[u64; 256] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, level: u8) -> u64 {
        self.bins[level as usize]
    }
}

/// Histogram scaled to a probability distribution over the 256 levels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHistogram {
    values: [f64; 256],
}

impl NormalizedHistogram {
    pub fn values(&self) -> &[f64; 256] {
        &self.values
    }

    pub fn value(&self, level: u8) -> f64 {
        self.values[level as usize]
    }
}

/// Counts pixel intensities; `total` equals width x height.
pub fn histogram(img: &Image) -> Histogram {
    let mut bins = [0u64; 256];
    for &p in img.pixels() {
        bins[p as usize] += 1;
    }
    Histogram { bins, total: img.pixels().len() as u64 }
}

/// Scales counts so the 256 values sum to 1.
pub fn normalize_histogram(h: &Histogram) -> Result<NormalizedHistogram> {
    if h.total == 0 {
        return Err(Error::invalid("cannot normalize an empty histogram"));
    }
    let total = h.total as f64;
    let mut values = [0.0; 256];
    for (v, &c) in values.iter_mut().zip(&h.bins) {
        *v = c as f64 / total;
    }
    Ok(NormalizedHistogram { values })
}

/// Neighborhood used for component labeling and boundary tracing.
/// Serializes as the conventional numbers 4 and 8.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E, W neighbors.
    Four,
    /// All eight neighbors.
    Eight,
}

impl serde::Serialize for Connectivity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        })
    }
}

impl<'de> serde::Deserialize<'de> for Connectivity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(serde::de::Error::custom(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl Connectivity {
    fn offsets(self) -> &'static [(i32, i32)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Result of connected-component labeling. Label 0 is background; foreground
/// labels are assigned in raster-scan order of first encounter, starting at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    width: u32,
    height: u32,
    labels: Vec<u32>,
    component_areas: Vec<usize>,
    connectivity: Connectivity,
}

impl ComponentLabeling {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: u32, y: u32) -> u32 {
        self.labels[(y as usize) * (self.width as usize) + (x as usize)]
    }

    /// Number of foreground components.
    pub fn component_count(&self) -> usize {
        self.component_areas.len()
    }

    /// Area in pixels of component `label` (1-based).
    pub fn area(&self, label: u32) -> usize {
        self.component_areas[(label - 1) as usize]
    }

    pub fn areas(&self) -> &[usize] {
        &self.component_areas
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    /// Mask holding only the pixels of component `label`.
    pub fn component_mask(&self, label: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == label).collect();
        BinaryMask::new(self.width, self.height, bits).expect("dims from labeling")
    }
}

/// Labels the foreground components of `mask` by flood fill.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; (w as usize) * (h as usize)];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    let offsets = connectivity.offsets();

    for sy in 0..h {
        for sx in 0..w {
            let start = (sy as usize) * (w as usize) + (sx as usize);
            if !mask.bits()[start] || labels[start] != 0 {
                continue;
            }
            let label = areas.len() as u32 + 1;
            let mut area = 0usize;
            labels[start] = label;
            stack.push((sx, sy));
            while let Some((x, y)) = stack.pop() {
                area += 1;
                for &(dx, dy) in offsets {
                    let nx = x as i64 + dx as i64;
                    let ny = y as i64 + dy as i64;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let ni = (ny as usize) * (w as usize) + (nx as usize);
                    if mask.bits()[ni] && labels[ni] == 0 {
                        labels[ni] = label;
                        stack.push((nx as u32, ny as u32));
                    }
                }
            }
            areas.push(area);
        }
    }

    ComponentLabeling { width: w, height: h, labels, component_areas: areas, connectivity }
}

/// Fills enclosed background regions: every background pixel that cannot
/// reach the raster border through 4-connected background becomes foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; (w as usize) * (h as usize)];
    let mut stack = Vec::new();

    let seed = |x: u32, y: u32, outside: &mut Vec<bool>, stack: &mut Vec<(u32, u32)>| {
        let i = (y as usize) * (w as usize) + (x as usize);
        if !mask.bits()[i] && !outside[i] {
            outside[i] = true;
            stack.push((x, y));
        }
    };

    for x in 0..w {
        seed(x, 0, &mut outside, &mut stack);
        seed(x, h - 1, &mut outside, &mut stack);
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut stack);
        seed(w - 1, y, &mut outside, &mut stack);
    }

    while let Some((x, y)) = stack.pop() {
        for &(dx, dy) in Connectivity::Four.offsets() {
            let nx = x as i64 + dx as i64;
            let ny = y as i64 + dy as i64;
            if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                continue;
            }
            let ni = (ny as usize) * (w as usize) + (nx as usize);
            if !mask.bits()[ni] && !outside[ni] {
                outside[ni] = true;
                stack.push((nx as u32, ny as u32));
            }
        }
    }

    let bits = mask
        .bits()
        .iter()
        .zip(&outside)
        .map(|(&fg, &out)| fg || !out)
        .collect();
    BinaryMask::new(w, h, bits).expect("dims from input")
}

/// Extracts the sub-image covered by `r`.
pub fn crop(img: &Image, r: Rect) -> Result<Image> {
    if !r.fits_in(img.width(), img.height()) {
        return Err(Error::invalid(format!(
            "crop rect ({},{} {}x{}) exceeds image {}x{}",
            r.x,
            r.y,
            r.w,
            r.h,
            img.width(),
            img.height()
        )));
    }
    Ok(Image::from_fn(r.w, r.h, |x, y| img.get(r.x + x, r.y + y)))
}

/// Extracts the sub-mask covered by `r`.
pub fn crop_mask(mask: &BinaryMask, r: Rect) -> Result<BinaryMask> {
    if !r.fits_in(mask.width(), mask.height()) {
        return Err(Error::invalid(format!(
            "crop rect ({},{} {}x{}) exceeds mask {}x{}",
            r.x,
            r.y,
            r.w,
            r.h,
            mask.width(),
            mask.height()
        )));
    }
    Ok(BinaryMask::from_fn(r.w, r.h, |x, y| mask.get(r.x + x, r.y + y)))
}

/// Minimal axis-aligned rectangle containing all foreground pixels, or
/// `None` for a blank mask.
pub fn bounding_rect(mask: &BinaryMask) -> Option<Rect> {
    let mut min_x = u32::MAX;
    let mut min_y = u32::MAX;
    let mut max_x = 0u32;
    let mut max_y = 0u32;
    let mut any = false;
    for (x, y) in mask.foreground_pixels() {
        any = true;
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    if !any {
        return None;
    }
    Some(Rect { x: min_x, y: min_y, w: max_x - min_x + 1, h: max_y - min_y + 1 })
}

/// Foreground pixel count over total pixel count, in `[0, 1]`.
pub fn area_fraction(mask: &BinaryMask) -> f64 {
    mask.count_foreground() as f64 / (mask.width() as f64 * mask.height() as f64)
}
