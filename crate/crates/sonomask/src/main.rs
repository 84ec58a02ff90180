//! Command-line surface for the self-training pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (bad inputs, parse or
//! I/O failures), 3 internal invariant violation. Every failure also prints
//! one machine-readable JSON line on standard error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use sonomask::dataset::{
    list_pgm_ids, write_rects_csv, write_synthetic_dataset, DatasetKind, DatasetManifest,
};
use sonomask::entropy::crop_exam_area;
use sonomask::imaging::crop_mask;
use sonomask::models::read_model;
use sonomask::pgm::{load_image_pgm, load_mask_pgm, save_image_pgm, save_mask_pgm};
use sonomask::rundir::{
    best_model_paths, read_manifest, read_reports_csv, read_split, summary_csv_string,
    write_evaluation, write_run, REPORTS_FILE,
};
use sonomask::selftrain::{
    effective_postprocess, evaluate_holdout, run_self_training, Sample, SelfTrainConfig,
};
use sonomask::synth::{generate_synthetic, Domain, SynthConfig};
use sonomask::{Error, Result};

#[derive(Parser)]
#[command(name = "sonomask", version, about = "Self-training pseudo-mask pipeline for ultrasound images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop every image in a dataset to its exam area, writing cropped
    /// images (plus aligned masks and truth masks when present) and a
    /// crop_rects.csv sidecar.
    Preprocess {
        /// Dataset directory to read (expects images/ inside).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Entropy window radius in pixels.
        #[arg(long, default_value_t = 9)]
        radius: u32,
        /// Entropy threshold in bits for exam-area membership.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        /// JSON generator configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Which domain to render: source or target.
        #[arg(long)]
        domain: String,
    },
    /// Run iterative self-training and persist the run directory.
    Selftrain {
        /// Source dataset directory (images/ + masks/).
        #[arg(long)]
        source: PathBuf,
        /// Target dataset directory (images/ + labels.csv).
        #[arg(long)]
        target: PathBuf,
        /// JSON self-training configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory to create.
        #[arg(long)]
        out: PathBuf,
        /// Record real wall-clock times in reports.csv instead of 0.000
        /// (costs byte-for-byte reproducibility of the CSV).
        #[arg(long)]
        timings: bool,
    },
    /// Evaluate the saved best model pair on the held-out test partition.
    Evaluate {
        /// Run directory produced by selftrain.
        #[arg(long)]
        run: PathBuf,
    },
    /// Condense a run's reports into the precision / empty-mask-count curve.
    Report {
        /// Run directory produced by selftrain.
        #[arg(long)]
        run: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{line}");
}

fn main() {
    let code = match std::panic::catch_unwind(run_cli) {
        Ok(code) => code,
        Err(payload) => {
            let message = if let Some(s) = payload.downcast_ref::<&str>() {
                (*s).to_string()
            } else if let Some(s) = payload.downcast_ref::<String>() {
                s.clone()
            } else {
                "unknown panic".to_string()
            };
            emit_error("internal", &message);
            3
        }
    };
    std::process::exit(code);
}

fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            emit_error("usage", &e.to_string());
            return 1;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            emit_error("data", &e.to_string());
            2
        }
    }
}

fn read_json_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess { input, out, radius, threshold } => {
            cmd_preprocess(&input, &out, radius, threshold)
        }
        Command::Synth { config, out, domain } => {
            let cfg: SynthConfig = read_json_config(&config)?;
            let domain = Domain::from_str(&domain)?;
            let samples = generate_synthetic(&cfg, domain)?;
            write_synthetic_dataset(&samples, domain, &out)?;
            println!("wrote {} {domain} images to {}", samples.len(), out.display());
            Ok(())
        }
        Command::Selftrain { source, target, config, out, timings } => {
            let cfg = match &config {
                Some(path) => read_json_config::<SelfTrainConfig>(path)?,
                None => SelfTrainConfig::default(),
            };
            cfg.validate()?;
            let source_samples = DatasetManifest::scan(&source, DatasetKind::Source)?.load()?;
            let target_samples = DatasetManifest::scan(&target, DatasetKind::Target)?.load()?;
            let outcome = run_self_training(&source_samples, target_samples, &cfg)?;
            write_run(
                &out,
                &outcome,
                &cfg,
                &source.display().to_string(),
                &target.display().to_string(),
                timings,
            )?;
            println!(
                "completed {} iteration(s); best iteration {}; run written to {}",
                outcome.reports.len(),
                outcome.best_iteration,
                out.display()
            );
            Ok(())
        }
        Command::Evaluate { run } => cmd_evaluate(&run),
        Command::Report { run, out } => {
            let reports = read_reports_csv(&run.join(REPORTS_FILE))?;
            std::fs::write(&out, summary_csv_string(&reports))?;
            println!("wrote {} data row(s) to {}", reports.len(), out.display());
            Ok(())
        }
    }
}

fn cmd_preprocess(input: &Path, out: &Path, radius: u32, threshold: f64) -> Result<()> {
    let images_dir = input.join("images");
    if !images_dir.is_dir() {
        return Err(Error::invalid(format!(
            "dataset {} has no images/ directory",
            input.display()
        )));
    }
    let ids = list_pgm_ids(&images_dir)?;
    if ids.is_empty() {
        return Err(Error::invalid(format!(
            "dataset {} contains no .pgm images",
            input.display()
        )));
    }
    std::fs::create_dir_all(out.join("images"))?;

    let mut rects = Vec::with_capacity(ids.len());
    for (id, image_path) in &ids {
        let image = load_image_pgm(image_path)?;
        let (cropped, rect) = crop_exam_area(&image, radius, threshold)?;
        save_image_pgm(&cropped, &out.join("images").join(format!("{id}.pgm")))?;

        // Any aligned per-id mask (reference or hidden truth) must be cropped
        // with the same rectangle or the dataset stops being self-consistent.
        for aux in ["masks", "truth"] {
            let aux_path = input.join(aux).join(format!("{id}.pgm"));
            if !aux_path.is_file() {
                continue;
            }
            let mask = load_mask_pgm(&aux_path)?;
            if mask.width() != image.width() || mask.height() != image.height() {
                return Err(Error::invalid(format!(
                    "{aux} mask for id \"{id}\" does not match its image dimensions"
                )));
            }
            let cropped_mask = crop_mask(&mask, rect)?;
            let aux_out = out.join(aux);
            std::fs::create_dir_all(&aux_out)?;
            save_mask_pgm(&cropped_mask, &aux_out.join(format!("{id}.pgm")))?;
        }
        rects.push((id.clone(), rect));
    }
    write_rects_csv(&out.join("crop_rects.csv"), &rects)?;

    let labels_in = input.join("labels.csv");
    if labels_in.is_file() {
        std::fs::copy(&labels_in, out.join("labels.csv"))?;
    }
    println!("cropped {} image(s) into {}", rects.len(), out.display());
    Ok(())
}

fn cmd_evaluate(run: &Path) -> Result<()> {
    let manifest = read_manifest(run)?;
    let split = read_split(run)?;
    let (model_path, classifier_path) = best_model_paths(run);
    let model = read_model(&model_path)?;
    let classifier = read_model(&classifier_path)?;

    let target_dir = PathBuf::from(&manifest.target_dir);
    let target = DatasetManifest::scan(&target_dir, DatasetKind::Target)?.load()?;
    let test_ids: BTreeSet<String> = split.test.iter().cloned().collect();
    let test: Vec<Sample> = target
        .into_iter()
        .filter(|s| test_ids.contains(&s.id))
        .collect();
    if test.len() != split.test.len() {
        return Err(Error::invalid(format!(
            "target dataset {} is missing {} of the recorded test ids",
            target_dir.display(),
            split.test.len() - test.len()
        )));
    }
    let validation_ids: BTreeSet<String> = split.validation.iter().cloned().collect();
    let postprocess = effective_postprocess(&manifest.config);
    let report = evaluate_holdout(&model, &classifier, &test, &postprocess, &validation_ids)?;
    write_evaluation(run, &report)?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}
