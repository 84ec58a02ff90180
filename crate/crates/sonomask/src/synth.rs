//! Synthetic ultrasound-like image generator: a dark frame, a brighter
//! speckled exam region, one darker elliptical lesion (malignant lesions
//! grow radial spikes), optional text-like border clutter, and a
//! configurable intensity shift for the target domain. Ground truth (lesion
//! mask, exam rectangle, class label) is known exactly, which is what makes
//! the pipeline's quality measurable.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{BinaryMask, Image, Rect};
use crate::selftrain::Class;
use crate::{Error, Result};

const BACKGROUND_LEVEL: u8 = 10;
const MARGIN_RANGE: (u32, u32) = (15, 20);
const EXAM_BASE_RANGE: (i32, i32) = (140, 165);
// Lesions sit roughly midway between background and exam tissue: dark enough
// to segment from clean renders, close enough to the class boundary that a
// moderate additive shift pushes most of them past a source-trained model.
const LESION_BASE_RANGE: (i32, i32) = (80, 105);
const SPECKLE: i32 = 20;
const SPIKE_COUNT_RANGE: (u32, u32) = (7, 12);
const CLUTTER_BASE_RANGE: (i32, i32) = (30, 230);

/// Generator settings; defaults make a 128-pixel image with a mid-sized
/// lesion and no domain shift.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub count: u32,
    pub image_size: u32,
    /// Inclusive [min, max] lesion semi-axis length in pixels.
    pub lesion_radius_range: [u32; 2],
    /// Spike amplitude for malignant lesions, as a fraction of the radius.
    pub malignant_irregularity: f64,
    /// Added to every pixel of target-domain renders, then clamped.
    pub intensity_shift: i32,
    /// Paint text-like bars near the borders (exercises the entropy crop).
    pub clutter: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 1,
            image_size: 128,
            lesion_radius_range: [8, 16],
            malignant_irregularity: 0.5,
            intensity_shift: 0,
            clutter: false,
            seed: 42,
        }
    }
}

impl SynthConfig {
    /// Worst-case half-extent of a lesion, spikes included, plus a safety
    /// margin so speckled lesion pixels never touch the exam border.
    fn max_reach(&self) -> u32 {
        let r = self.lesion_radius_range[1] as f64;
        (r * (1.0 + self.malignant_irregularity)).ceil() as u32 + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count must be at least 1"));
        }
        let [rmin, rmax] = self.lesion_radius_range;
        if rmin < 2 || rmin > rmax {
            return Err(Error::invalid(format!(
                "lesion_radius_range [{rmin}, {rmax}] must satisfy 2 <= min <= max"
            )));
        }
        if !(0.0..=1.0).contains(&self.malignant_irregularity) {
            return Err(Error::invalid("malignant_irregularity must be in [0, 1]"));
        }
        if self.intensity_shift.abs() > 255 {
            return Err(Error::invalid("intensity_shift must be within [-255, 255]"));
        }
        // The lesion must fit into the exam area even with maximal margins.
        let needed = 2 * MARGIN_RANGE.1 + 2 * self.max_reach() + 1;
        if self.image_size < needed {
            return Err(Error::invalid(format!(
                "image_size {} cannot hold a radius-{rmax} lesion (irregularity {}): needs at least {needed}",
                self.image_size, self.malignant_irregularity
            )));
        }
        Ok(())
    }
}

/// Which domain is being rendered; the target applies the intensity shift
/// and uses a salted RNG stream so the two domains never share images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    fn seed_salt(self) -> u64 {
        match self {
            Domain::Source => 0,
            Domain::Target => 0x9E37_79B9_7F4A_7C15,
        }
    }

    fn id_prefix(self) -> &'static str {
        match self {
            Domain::Source => "src",
            Domain::Target => "tgt",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::invalid(format!(
                "unknown domain {other:?} (expected source or target)"
            ))),
        }
    }
}

/// One generated image together with everything the generator knows.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub image: Image,
    pub lesion_mask: BinaryMask,
    pub label: Class,
    pub exam_rect: Rect,
}

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

/// Renders one image on its own RNG stream. Every structural draw happens in
/// a fixed order, unconditionally with respect to the class label and before
/// any clutter draw — so lesion geometry is independent of the label whenever
/// the irregularity amplitude is zero, and toggling clutter or the intensity
/// shift never moves the exam area, lesion, or label of any image.
fn render_one(cfg: &SynthConfig, domain: Domain, index: u32) -> SynthSample {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(domain.seed_salt()));
    rng.set_stream(u64::from(index));
    let rng = &mut rng;
    let size = cfg.image_size;
    let (m_lo, m_hi) = MARGIN_RANGE;
    let left = rng.gen_range(m_lo..=m_hi);
    let right = rng.gen_range(m_lo..=m_hi);
    let top = rng.gen_range(m_lo..=m_hi);
    let bottom = rng.gen_range(m_lo..=m_hi);
    let exam = Rect { x: left, y: top, w: size - left - right, h: size - top - bottom };

    let exam_base = rng.gen_range(EXAM_BASE_RANGE.0..=EXAM_BASE_RANGE.1);
    let lesion_base = rng.gen_range(LESION_BASE_RANGE.0..=LESION_BASE_RANGE.1);
    let malignant = rng.gen_bool(0.5);

    let [rmin, rmax] = cfg.lesion_radius_range;
    let rx = rng.gen_range(rmin..=rmax) as f64;
    let ry = rng.gen_range(rmin..=rmax) as f64;
    let reach = (rx.max(ry) * (1.0 + cfg.malignant_irregularity)).ceil() as u32 + 2;
    let cx = rng.gen_range(exam.x + reach..=exam.x + exam.w - 1 - reach) as f64;
    let cy = rng.gen_range(exam.y + reach..=exam.y + exam.h - 1 - reach) as f64;
    let spikes = rng.gen_range(SPIKE_COUNT_RANGE.0..=SPIKE_COUNT_RANGE.1) as f64;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let amplitude = if malignant { cfg.malignant_irregularity } else { 0.0 };

    let in_lesion = |x: u32, y: u32| -> bool {
        let dx = (x as f64 - cx) / rx;
        let dy = (y as f64 - cy) / ry;
        let u = (dx * dx + dy * dy).sqrt();
        let theta = (y as f64 - cy).atan2(x as f64 - cx);
        u <= 1.0 + amplitude * (spikes * theta + phase).sin()
    };

    let mut pixels = vec![BACKGROUND_LEVEL as i32; (size * size) as usize];
    let mut bits = vec![false; pixels.len()];
    for y in exam.y..exam.y + exam.h {
        for x in exam.x..exam.x + exam.w {
            let lesion = in_lesion(x, y);
            let base = if lesion { lesion_base } else { exam_base };
            let noise = rng.gen_range(-SPECKLE..=SPECKLE);
            let i = (y * size + x) as usize;
            pixels[i] = base + noise;
            bits[i] = lesion;
        }
    }

    if cfg.clutter {
        // Text-like speckled bars hugging the borders: top and bottom
        // always, left and right on a coin flip each. Margins of at least
        // 15 keep every bar at least 9 constant-background pixels away from
        // the exam area.
        for edge in 0..4u32 {
            let base = rng.gen_range(CLUTTER_BASE_RANGE.0..=CLUTTER_BASE_RANGE.1);
            let offset = rng.gen_range(2..=3u32);
            let thickness = rng.gen_range(2..=3u32);
            let present = edge < 2 || rng.gen_bool(0.5);
            if !present {
                continue;
            }
            let (x0, x1, y0, y1) = match edge {
                0 => (4, size - 4, offset, offset + thickness),
                1 => (4, size - 4, size - offset - thickness, size - offset),
                2 => (offset, offset + thickness, 4, size - 4),
                _ => (size - offset - thickness, size - offset, 4, size - 4),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let noise = rng.gen_range(-SPECKLE..=SPECKLE);
                    pixels[(y * size + x) as usize] = base + noise;
                }
            }
        }
    }

    let shift = if domain == Domain::Target { cfg.intensity_shift } else { 0 };
    let bytes: Vec<u8> = pixels.into_iter().map(|v| clamp_u8(v + shift)).collect();

    SynthSample {
        id: format!("{}_{index:04}", domain.id_prefix()),
        image: Image::new(size, size, bytes).expect("buffer sized to image"),
        lesion_mask: BinaryMask::new(size, size, bits).expect("buffer sized to image"),
        label: if malignant { Class::Malignant } else { Class::Benign },
        exam_rect: exam,
    }
}

/// Generates `cfg.count` samples for the domain, deterministically from
/// `cfg.seed` (the target domain salts the seed so the two domains never
/// share images). Each image uses its own RNG stream, so the first `n`
/// samples are identical regardless of `count`.
pub fn generate_synthetic(cfg: &SynthConfig, domain: Domain) -> Result<Vec<SynthSample>> {
    cfg.validate()?;
    Ok((0..cfg.count).map(|i| render_one(cfg, domain, i)).collect())
}
