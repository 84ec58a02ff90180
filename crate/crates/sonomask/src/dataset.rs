//! On-disk dataset layout: scanning, validation, and loading.
//!
//! A dataset directory holds `images/<id>.pgm` where the file stem is the
//! sample id. Source datasets pair every image with `masks/<id>.pgm`; target
//! datasets instead carry `labels.csv` (header `id,label`) covering exactly
//! the image ids. Target directories may additionally hold `truth/<id>.pgm`
//! ground-truth masks — namespaced away from `masks/` so training can never
//! ingest them — which loading attaches for IoU diagnostics only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::imaging::Rect;
use crate::pgm::{load_image_pgm, load_mask_pgm, save_image_pgm, save_mask_pgm};
use crate::selftrain::{Class, Sample};
use crate::synth::{Domain, SynthSample};
use crate::{Error, Result};

/// Which side of the domain gap a dataset directory belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Source,
    Target,
}

/// One sample's file references, as discovered by [`DatasetManifest::scan`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub label: Option<Class>,
}

/// Validated listing of a dataset directory, entries sorted by id.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub kind: DatasetKind,
    pub entries: Vec<ManifestEntry>,
}

/// Lists `<id>.pgm` files in a directory as (stem, path), sorted by stem.
pub fn list_pgm_ids(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::invalid(format!("non-UTF-8 file name in {}", dir.display())))?;
            out.push((stem.to_string(), path.clone()));
        }
    }
    out.sort();
    Ok(out)
}

impl DatasetManifest {
    /// Scans `root` and validates the layout against `kind`: source entries
    /// must have masks and no labels file, target entries the reverse.
    pub fn scan(root: &Path, kind: DatasetKind) -> Result<Self> {
        let images_dir = root.join("images");
        if !images_dir.is_dir() {
            return Err(Error::invalid(format!(
                "dataset {} has no images/ directory",
                root.display()
            )));
        }
        let ids = list_pgm_ids(&images_dir)?;
        if ids.is_empty() {
            return Err(Error::invalid(format!(
                "dataset {} contains no .pgm images",
                root.display()
            )));
        }

        let labels_path = root.join("labels.csv");
        let masks_dir = root.join("masks");
        let mut entries = Vec::with_capacity(ids.len());
        match kind {
            DatasetKind::Source => {
                if labels_path.exists() {
                    return Err(Error::invalid(format!(
                        "source dataset {} carries labels.csv, which contradicts its kind",
                        root.display()
                    )));
                }
                for (id, image_path) in ids {
                    let mask_path = masks_dir.join(format!("{id}.pgm"));
                    if !mask_path.is_file() {
                        return Err(Error::invalid(format!(
                            "source mask missing for id \"{id}\" (expected {})",
                            mask_path.display()
                        )));
                    }
                    entries.push(ManifestEntry {
                        id,
                        image_path,
                        mask_path: Some(mask_path),
                        label: None,
                    });
                }
            }
            DatasetKind::Target => {
                let mut labels = read_labels_csv(&labels_path)?;
                for (id, image_path) in ids {
                    let candidate = masks_dir.join(format!("{id}.pgm"));
                    if candidate.is_file() {
                        return Err(Error::invalid(format!(
                            "target dataset has a reference mask for id \"{id}\", which contradicts its kind",
                        )));
                    }
                    let label = labels.remove(&id).ok_or_else(|| {
                        Error::invalid(format!("labels.csv has no entry for image id \"{id}\""))
                    })?;
                    entries.push(ManifestEntry {
                        id,
                        image_path,
                        mask_path: None,
                        label: Some(label),
                    });
                }
                if let Some(orphan) = labels.keys().next() {
                    return Err(Error::invalid(format!(
                        "labels.csv names id \"{orphan}\" with no matching image"
                    )));
                }
            }
        }

        let manifest = DatasetManifest {
            root: root.to_path_buf(),
            kind,
            entries,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Re-checks the per-entry invariant: mask/label presence matches kind,
    /// ids unique and sorted.
    pub fn validate(&self) -> Result<()> {
        for pair in self.entries.windows(2) {
            if pair[0].id >= pair[1].id {
                return Err(Error::invalid(format!(
                    "manifest ids not strictly sorted at \"{}\"",
                    pair[1].id
                )));
            }
        }
        for entry in &self.entries {
            let consistent = match self.kind {
                DatasetKind::Source => entry.mask_path.is_some() && entry.label.is_none(),
                DatasetKind::Target => entry.mask_path.is_none() && entry.label.is_some(),
            };
            if !consistent {
                return Err(Error::invalid(format!(
                    "entry \"{}\" has mask/label presence contradicting kind {:?}",
                    entry.id, self.kind
                )));
            }
        }
        Ok(())
    }

    /// Loads every entry into a [`Sample`], attaching `truth/<id>.pgm`
    /// ground-truth masks on target datasets when present.
    pub fn load(&self) -> Result<Vec<Sample>> {
        let truth_dir = self.root.join("truth");
        let mut samples = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let image = load_image_pgm(&entry.image_path)?;
            let sample = match self.kind {
                DatasetKind::Source => {
                    let mask_path = entry.mask_path.as_ref().expect("validated source entry");
                    let mask = load_mask_pgm(mask_path)?;
                    Sample::source(&entry.id, image, mask)?
                }
                DatasetKind::Target => {
                    let label = entry.label.expect("validated target entry");
                    let sample = Sample::target(&entry.id, image, label);
                    let truth_path = truth_dir.join(format!("{}.pgm", entry.id));
                    if truth_path.is_file() {
                        sample.with_truth_mask(load_mask_pgm(&truth_path)?)?
                    } else {
                        sample
                    }
                }
            };
            samples.push(sample);
        }
        Ok(samples)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LabelRow {
    id: String,
    label: Class,
}

/// Reads `labels.csv` (header `id,label`, label benign|malignant) into an
/// id-keyed map, rejecting duplicate ids.
pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, Class>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path, format!("cannot open labels file: {e}")))?;
    let mut labels = BTreeMap::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        if labels.insert(row.id.clone(), row.label).is_some() {
            return Err(Error::parse(path, format!("duplicate label for id \"{}\"", row.id)));
        }
    }
    Ok(labels)
}

/// Writes `labels.csv` with header `id,label` in the given order.
pub fn write_labels_csv(path: &Path, labels: &[(String, Class)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(io_from_csv)?;
    for (id, label) in labels {
        writer
            .serialize(LabelRow {
                id: id.clone(),
                label: *label,
            })
            .map_err(io_from_csv)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct RectRow {
    id: String,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

/// Reads a rectangle table (header `id,x,y,w,h`) such as crop sidecars.
pub fn read_rects_csv(path: &Path) -> Result<Vec<(String, Rect)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path, format!("cannot open rects file: {e}")))?;
    let mut rects = Vec::new();
    for row in reader.deserialize::<RectRow>() {
        let row = row.map_err(|e| Error::parse(path, e.to_string()))?;
        let rect = Rect::new(row.x, row.y, row.w, row.h)
            .map_err(|e| Error::parse(path, format!("id \"{}\": {e}", row.id)))?;
        rects.push((row.id, rect));
    }
    Ok(rects)
}

/// Writes a rectangle table with header `id,x,y,w,h`.
pub fn write_rects_csv(path: &Path, rects: &[(String, Rect)]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(io_from_csv)?;
    for (id, rect) in rects {
        writer
            .serialize(RectRow {
                id: id.clone(),
                x: rect.x,
                y: rect.y,
                w: rect.w,
                h: rect.h,
            })
            .map_err(io_from_csv)?;
    }
    writer.flush()?;
    Ok(())
}

fn io_from_csv(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv write failed: {other:?}")),
    }
}

/// Materializes generated samples as a dataset directory in the layout
/// [`DatasetManifest::scan`] expects: `images/` always; `masks/` for source;
/// `labels.csv` plus `truth/<id>.pgm` for target; `truth/exam_rects.csv`
/// (the generator's true exam rectangles) for both domains.
pub fn write_synthetic_dataset(samples: &[SynthSample], domain: Domain, out: &Path) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("refusing to write an empty dataset"));
    }
    let images_dir = out.join("images");
    let truth_dir = out.join("truth");
    std::fs::create_dir_all(&images_dir)?;
    std::fs::create_dir_all(&truth_dir)?;

    let mut labels = Vec::with_capacity(samples.len());
    let mut rects = Vec::with_capacity(samples.len());
    for sample in samples {
        save_image_pgm(&sample.image, &images_dir.join(format!("{}.pgm", sample.id)))?;
        labels.push((sample.id.clone(), sample.label));
        rects.push((sample.id.clone(), sample.exam_rect));
    }
    match domain {
        Domain::Source => {
            let masks_dir = out.join("masks");
            std::fs::create_dir_all(&masks_dir)?;
            for sample in samples {
                save_mask_pgm(&sample.lesion_mask, &masks_dir.join(format!("{}.pgm", sample.id)))?;
            }
        }
        Domain::Target => {
            write_labels_csv(&out.join("labels.csv"), &labels)?;
            for sample in samples {
                save_mask_pgm(&sample.lesion_mask, &truth_dir.join(format!("{}.pgm", sample.id)))?;
            }
        }
    }
    write_rects_csv(&truth_dir.join("exam_rects.csv"), &rects)?;
    Ok(())
}
