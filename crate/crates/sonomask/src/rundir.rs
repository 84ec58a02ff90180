//! Run-directory persistence. A finished self-training run is laid out as
//!
//! ```text
//! run/
//!   manifest.json            resolved configuration, dataset paths, best iteration
//!   reports.csv              one row per iteration, fixed column order
//!   split.json               target partition by sample id
//!   model_best.stsg          best-iteration segmenter
//!   classifier_best.stsg     best-iteration classifier
//!   masks/iter_001/<id>.pgm  pseudo-masks of every completed iteration
//!   evaluation.json          written later by the evaluate stage
//! ```
//!
//! Wall-clock times are reported as 0.000 unless timings were explicitly
//! requested, so identical runs stay byte-identical on disk.

use std::path::{Path, PathBuf};

use crate::models::write_model;
use crate::pgm::save_mask_pgm;
use crate::selftrain::{HoldoutReport, IterationReport, SelfTrainConfig, SelfTrainOutcome, SplitIds};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORTS_FILE: &str = "reports.csv";
pub const SPLIT_FILE: &str = "split.json";
pub const MODEL_FILE: &str = "model_best.stsg";
pub const CLASSIFIER_FILE: &str = "classifier_best.stsg";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const MASKS_DIR: &str = "masks";

pub const REPORTS_HEADER: &str = "iteration,accuracy,precision,recall,auc,empty_pseudo_mask_count,accepted_for_training,masks_preserved_by_guard,mean_iou_vs_reference,wall_time_seconds";

/// Everything needed to reproduce and post-process a run, saved as
/// `manifest.json`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub config: SelfTrainConfig,
    pub source_dir: String,
    pub target_dir: String,
    pub best_iteration: u32,
    pub include_timings: bool,
}

fn report_row(report: &IterationReport, include_timings: bool) -> String {
    let mean_iou = report
        .mean_iou_vs_reference
        .map(|v| format!("{v:.6}"))
        .unwrap_or_default();
    let wall = if include_timings {
        format!("{:.3}", report.wall_time_seconds)
    } else {
        "0.000".to_string()
    };
    format!(
        "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
        report.iteration,
        report.accuracy,
        report.precision,
        report.recall,
        report.auc,
        report.empty_pseudo_mask_count,
        report.accepted_for_training,
        report.masks_preserved_by_guard,
        mean_iou,
        wall,
    )
}

/// Renders the per-iteration reports as CSV with the fixed column order.
pub fn reports_csv_string(reports: &[IterationReport], include_timings: bool) -> String {
    let mut out = String::from(REPORTS_HEADER);
    out.push('\n');
    for report in reports {
        out.push_str(&report_row(report, include_timings));
        out.push('\n');
    }
    out
}

pub fn write_reports_csv(path: &Path, reports: &[IterationReport], include_timings: bool) -> Result<()> {
    std::fs::write(path, reports_csv_string(reports, include_timings))?;
    Ok(())
}

/// Reads a reports CSV back; empty `mean_iou_vs_reference` cells become none.
pub fn read_reports_csv(path: &Path) -> Result<Vec<IterationReport>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path, format!("cannot open reports file: {e}")))?;
    let mut reports = Vec::new();
    for row in reader.deserialize::<IterationReport>() {
        reports.push(row.map_err(|e| Error::parse(path, e.to_string()))?);
    }
    if reports.is_empty() {
        return Err(Error::parse(path, "reports file has no data rows".to_string()));
    }
    Ok(reports)
}

/// The condensed per-iteration view the report stage emits: the validation
/// precision curve next to the empty-pseudo-mask counts.
pub fn summary_csv_string(reports: &[IterationReport]) -> String {
    let mut out = String::from("iteration,precision,empty_pseudo_mask_count\n");
    for report in reports {
        out.push_str(&format!(
            "{},{:.6},{}\n",
            report.iteration, report.precision, report.empty_pseudo_mask_count
        ));
    }
    out
}

fn write_pretty_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

/// Persists a finished run: manifest, reports, split, best model pair, and
/// every iteration's pseudo-masks.
pub fn write_run(
    dir: &Path,
    outcome: &SelfTrainOutcome,
    config: &SelfTrainConfig,
    source_dir: &str,
    target_dir: &str,
    include_timings: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = RunManifest {
        config: config.clone(),
        source_dir: source_dir.to_string(),
        target_dir: target_dir.to_string(),
        best_iteration: outcome.best_iteration,
        include_timings,
    };
    write_pretty_json(&dir.join(MANIFEST_FILE), &manifest)?;
    write_reports_csv(&dir.join(REPORTS_FILE), &outcome.reports, include_timings)?;
    write_pretty_json(&dir.join(SPLIT_FILE), &outcome.split)?;
    write_model(&outcome.model, &dir.join(MODEL_FILE))?;
    write_model(&outcome.classifier, &dir.join(CLASSIFIER_FILE))?;
    for (index, masks) in outcome.iteration_masks.iter().enumerate() {
        let subdir = dir.join(MASKS_DIR).join(format!("iter_{:03}", index + 1));
        std::fs::create_dir_all(&subdir)?;
        for (id, mask) in masks {
            save_mask_pgm(mask, &subdir.join(format!("{id}.pgm")))?;
        }
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

pub fn read_split(dir: &Path) -> Result<SplitIds> {
    read_json(&dir.join(SPLIT_FILE))
}

pub fn best_model_paths(dir: &Path) -> (PathBuf, PathBuf) {
    (dir.join(MODEL_FILE), dir.join(CLASSIFIER_FILE))
}

/// Writes the holdout evaluation as `evaluation.json` inside the run.
pub fn write_evaluation(dir: &Path, report: &HoldoutReport) -> Result<()> {
    write_pretty_json(&dir.join(EVALUATION_FILE), report)
}
