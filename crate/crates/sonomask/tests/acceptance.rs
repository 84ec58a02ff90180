//! Acceptance suite: the twelve end-to-end checks that gate a release,
//! covering the numeric kernels against independent oracles and the full
//! self-training behavior on frozen fixtures. Each test prints a single
//! `ACCEPTANCE NN PASS` line (visible with `cargo test -- --show-output`)
//! carrying the measured values, and asserts its own runtime budget.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sonomask::entropy::{crop_exam_area, global_entropy};
use sonomask::geometry::{convex_hull, Point};
use sonomask::imaging::{crop_mask, fill_holes, BinaryMask, Image};
use sonomask::metrics::roc_auc;
use sonomask::models::{
    cross_entropy_loss, lesion_features, sigmoid, train_classifier, TrainConfig, FEATURE_LEN,
};
use sonomask::pipeline::{classification_crop_pair, postprocess_mask, PostprocessConfig};
use sonomask::selftrain::{
    run_self_training, Metric, Sample, SelfTrainConfig, SelfTrainOutcome, TerminationConfig,
    Variant,
};
use sonomask::synth::{generate_synthetic, Domain, SynthConfig};

// ---------------------------------------------------------------------------
// Shared fixture: the frozen synthetic self-training recipe used by
// criteria 6-9. Numbers established by the oracle tuning runs and frozen:
// 50 source / 200 target images at 128 px, lesion radii 8-16, malignant
// irregularity 0.65, clutter on, intensity shift 40 for the shifted runs,
// entropy crop at radius 3 / threshold 0.5, oversize hull cap 0.20, AUC as
// the best-iteration metric, patience 6 (never fires within 6 iterations).
// ---------------------------------------------------------------------------

const FIXTURE_IRREGULARITY: f64 = 0.65;
const FIXTURE_OVERSIZE_CAP: f64 = 0.20;
const FIXTURE_SHIFT: i32 = 40;

fn cropped_fixture(
    seed: u64,
    source_count: u32,
    target_count: u32,
    shift: i32,
) -> (Vec<Sample>, Vec<Sample>) {
    let base = SynthConfig {
        image_size: 128,
        lesion_radius_range: [8, 16],
        malignant_irregularity: FIXTURE_IRREGULARITY,
        clutter: true,
        seed,
        ..SynthConfig::default()
    };
    let src_cfg = SynthConfig { count: source_count, intensity_shift: 0, ..base.clone() };
    let tgt_cfg = SynthConfig { count: target_count, intensity_shift: shift, ..base };

    let mut source = Vec::new();
    for s in generate_synthetic(&src_cfg, Domain::Source).unwrap() {
        let (img, rect) = crop_exam_area(&s.image, 3, 0.5).unwrap();
        let mask = crop_mask(&s.lesion_mask, rect).unwrap();
        source.push(Sample::source(s.id, img, mask).unwrap());
    }
    let mut target = Vec::new();
    for s in generate_synthetic(&tgt_cfg, Domain::Target).unwrap() {
        let (img, rect) = crop_exam_area(&s.image, 3, 0.5).unwrap();
        let truth = crop_mask(&s.lesion_mask, rect).unwrap();
        target.push(Sample::target(s.id, img, s.label).with_truth_mask(truth).unwrap());
    }
    (source, target)
}

fn fixture_config(seed: u64, variant: Variant) -> SelfTrainConfig {
    let mut cfg = SelfTrainConfig {
        max_iterations: 6,
        termination: TerminationConfig {
            patience: 6,
            metric: Metric::Auc,
            ..TerminationConfig::default()
        },
        variant,
        ..SelfTrainConfig::default()
    };
    cfg.train.seed = seed;
    cfg.postprocess.oversize_area_cap = Some(FIXTURE_OVERSIZE_CAP);
    cfg
}

fn shifted_run(seed: u64, variant: Variant) -> SelfTrainOutcome {
    let (source, target) = cropped_fixture(seed, 50, 200, FIXTURE_SHIFT);
    run_self_training(&source, target, &fixture_config(seed, variant)).unwrap()
}

/// The seed-42 guarded run is shared by criteria 6, 7, and 8.
fn seed42_run() -> &'static SelfTrainOutcome {
    static RUN: OnceLock<SelfTrainOutcome> = OnceLock::new();
    RUN.get_or_init(|| shifted_run(42, Variant::BigConvexFillNoblank))
}

// ---------------------------------------------------------------------------
// 1. Entropy closed forms.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_entropy_closed_forms() {
    let t0 = Instant::now();

    let constant = Image::filled(64, 64, 117);
    let h_const = global_entropy(&constant);

    // Two equal-mass levels: left half one value, right half another.
    let two = Image::from_fn(64, 64, |x, _| if x < 32 { 10 } else { 200 });
    let h_two = global_entropy(&two);

    // Uniform over 16 levels: 64*64 = 4096 pixels, 256 per level.
    let sixteen = Image::from_fn(64, 64, |x, y| (((y * 64 + x) / 256) * 16) as u8);
    let h_sixteen = global_entropy(&sixteen);

    assert!(h_const.abs() < 1e-9, "constant image entropy {h_const}");
    assert!((h_two - 1.0).abs() < 1e-9, "two-level entropy {h_two}");
    assert!((h_sixteen - 4.0).abs() < 1e-9, "16-level entropy {h_sixteen}");

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}, budget 1 s");
    println!(
        "ACCEPTANCE 01 PASS — entropy closed forms: constant {h_const:.1e}, \
         two-level {h_two:.12}, sixteen-level {h_sixteen:.12} (all within 1e-9, {dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 2. Convex hull versus an exhaustive half-plane/Caratheodory oracle.
// ---------------------------------------------------------------------------

type IPoint = (i64, i64);

fn orient(a: IPoint, b: IPoint, c: IPoint) -> i64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment_exact(a: IPoint, b: IPoint, p: IPoint) -> bool {
    orient(a, b, p) == 0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

/// Exact membership of `p` in the convex hull of `pts`, by Caratheodory:
/// p is in the hull iff it equals a point, lies on a segment, or lies in a
/// non-degenerate triangle of `pts`. Integer arithmetic throughout.
fn in_hull_exact(p: IPoint, pts: &[IPoint]) -> bool {
    if pts.contains(&p) {
        return true;
    }
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            if on_segment_exact(a, b, p) {
                return true;
            }
        }
    }
    for (i, &a) in pts.iter().enumerate() {
        for (j, &b) in pts.iter().enumerate().skip(i + 1) {
            for &c in &pts[j + 1..] {
                if orient(a, b, c) == 0 {
                    continue;
                }
                let d1 = orient(a, b, p);
                let d2 = orient(b, c, p);
                let d3 = orient(c, a, p);
                let has_neg = d1 < 0 || d2 < 0 || d3 < 0;
                let has_pos = d1 > 0 || d2 > 0 || d3 > 0;
                if !(has_neg && has_pos) {
                    return true;
                }
            }
        }
    }
    false
}

#[test]
fn acceptance_02_convex_hull_oracle() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sets = 1000;

    for case in 0..sets {
        let n = rng.gen_range(1..=12);
        let pts: Vec<IPoint> =
            (0..n).map(|_| (rng.gen_range(-20..=20), rng.gen_range(-20..=20))).collect();

        let hull = convex_hull(
            &pts.iter().map(|&(x, y)| Point::new(x as f64, y as f64)).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut got: Vec<IPoint> = hull
            .vertices()
            .iter()
            .map(|v| {
                assert_eq!(v.x, v.x.round(), "non-integer hull vertex in case {case}");
                assert_eq!(v.y, v.y.round(), "non-integer hull vertex in case {case}");
                (v.x as i64, v.y as i64)
            })
            .collect();
        got.sort_unstable();
        got.dedup();

        // Oracle: over the deduplicated set, a point is a hull vertex iff it
        // is not in the convex hull of the remaining points.
        let mut unique = pts.clone();
        unique.sort_unstable();
        unique.dedup();
        let mut expected: Vec<IPoint> = unique
            .iter()
            .copied()
            .filter(|&p| {
                let others: Vec<IPoint> =
                    unique.iter().copied().filter(|&q| q != p).collect();
                !in_hull_exact(p, &others)
            })
            .collect();
        // A single distinct point is its own hull.
        if expected.is_empty() {
            expected = unique.clone();
        }
        expected.sort_unstable();

        assert_eq!(
            got, expected,
            "case {case}: hull vertex set mismatch for points {pts:?}"
        );
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "took {dt:?}, budget 10 s");
    println!(
        "ACCEPTANCE 02 PASS — convex hull matches the exhaustive oracle on {sets} \
         random point sets of size <= 12 ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 3. Morphology exactness on fixed fixtures.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_morphology_exactness() {
    let t0 = Instant::now();

    // Donut: disk of radius 9 minus disk of radius 4, centered in 24x24.
    let disk = |r: f64| {
        BinaryMask::from_fn(24, 24, |x, y| {
            let (dx, dy) = (x as f64 - 11.5, y as f64 - 11.5);
            dx * dx + dy * dy <= r * r
        })
    };
    let solid = disk(9.0);
    let hole = disk(4.0);
    let donut = BinaryMask::from_fn(24, 24, |x, y| solid.get(x, y) && !hole.get(x, y));
    let filled = fill_holes(&donut);
    assert_eq!(filled, solid, "donut fill must reproduce the solid disk exactly");

    // U-shape: the cavity opens to the border, so filling changes nothing.
    let u_shape = BinaryMask::from_fn(16, 16, |x, y| {
        let left = (2..=4).contains(&x) && (2..=13).contains(&y);
        let right = (11..=13).contains(&x) && (2..=13).contains(&y);
        let bottom = (2..=13).contains(&x) && (11..=13).contains(&y);
        left || right || bottom
    });
    assert_eq!(fill_holes(&u_shape), u_shape, "open cavity must not be filled");

    // Idempotence on the donut.
    assert_eq!(fill_holes(&filled), filled, "fill_holes must be idempotent");

    // Hull pipeline superset property: with fill+hull at scale >= 1, the
    // output contains the hole-filled input, on a two-blob fixture.
    let blobs = BinaryMask::from_fn(32, 32, |x, y| {
        let (dx1, dy1) = (x as f64 - 8.0, y as f64 - 8.0);
        let (dx2, dy2) = (x as f64 - 23.0, y as f64 - 21.0);
        dx1 * dx1 + dy1 * dy1 <= 20.0 || (dx2.abs() <= 4.0 && dy2.abs() <= 2.0)
    });
    for scale in [1.0, 1.5] {
        let cfg = PostprocessConfig {
            enable_fill: true,
            enable_hull: true,
            hull_scale: scale,
            ..PostprocessConfig::default()
        };
        let out = postprocess_mask(&blobs, &cfg).unwrap();
        assert!(
            fill_holes(&blobs).is_subset_of(&out),
            "hull pipeline at scale {scale} must contain the hole-filled input"
        );
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "took {dt:?}, budget 1 s");
    println!(
        "ACCEPTANCE 03 PASS — donut fill, U-shape identity, fill idempotence, \
         and hull superset all pixel-exact ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 4. Analytic gradient of the cross-entropy against central differences.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_gradient_check() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let step = 1e-5;
    let mut worst = 0.0f64;

    for _ in 0..100 {
        let w: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f: Vec<f64> = (0..FEATURE_LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = rng.gen_bool(0.5);

        let loss = |w: &[f64]| {
            let z: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
            cross_entropy_loss(&[sigmoid(z)], &[y]).unwrap()
        };
        let z: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        let p = sigmoid(z);

        for j in 0..FEATURE_LEN {
            let analytic = (p - f64::from(u8::from(y))) * f[j];
            let mut wp = w.clone();
            wp[j] += step;
            let mut wm = w.clone();
            wm[j] -= step;
            let numeric = (loss(&wp) - loss(&wm)) / (2.0 * step);
            let scale = analytic.abs().max(numeric.abs());
            if scale > 1e-6 {
                let rel = (analytic - numeric).abs() / scale;
                worst = worst.max(rel);
                assert!(rel < 1e-4, "component {j}: analytic {analytic} vs numeric {numeric}");
            } else {
                assert!((analytic - numeric).abs() < 1e-8);
            }
        }
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "took {dt:?}, budget 5 s");
    println!(
        "ACCEPTANCE 04 PASS — analytic gradient matches central differences on \
         100 random triples, worst relative error {worst:.2e} ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 5. Rank-based AUC equals exhaustive pair counting.
// ---------------------------------------------------------------------------

/// Pair-counting oracle in the same exact half-unit integers the metric
/// uses, so agreement must be bit-for-bit.
fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> =
        scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut units: u128 = 0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                units += 2;
            } else if p == n {
                units += 1;
            }
        }
    }
    Some(units as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}

#[test]
fn acceptance_05_auc_pair_counting() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Scores from a coarse grid so ties actually occur.
    let grid = [0.0, 0.25, 0.5, 0.5, 0.75, 1.0];
    let mut checked = 0u64;

    // Exhaustive over every label pattern for n <= 8.
    for n in 1..=8usize {
        for pattern in 0..(1u32 << n) {
            let labels: Vec<bool> = (0..n).map(|i| pattern >> i & 1 == 1).collect();
            let scores: Vec<f64> =
                (0..n).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
            match auc_by_pairs(&scores, &labels) {
                Some(expected) => {
                    let got = roc_auc(&scores, &labels).unwrap();
                    assert!(
                        got == expected,
                        "n {n} pattern {pattern:b}: rank {got} vs pairs {expected}"
                    );
                    checked += 1;
                }
                None => assert!(
                    roc_auc(&scores, &labels).is_err(),
                    "single-class input must be rejected"
                ),
            }
        }
    }

    // Random label patterns for n = 9..=12.
    for n in 9..=12usize {
        for _ in 0..200 {
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let scores: Vec<f64> =
                (0..n).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
            match auc_by_pairs(&scores, &labels) {
                Some(expected) => {
                    let got = roc_auc(&scores, &labels).unwrap();
                    assert!(got == expected, "n {n}: rank {got} vs pairs {expected}");
                    checked += 1;
                }
                None => assert!(roc_auc(&scores, &labels).is_err()),
            }
        }
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 10.0, "took {dt:?}, budget 10 s");
    println!(
        "ACCEPTANCE 05 PASS — rank-based AUC equals exhaustive pair counting \
         exactly on {checked} datasets ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 6. Empty pseudo-mask counts recover under the guarded variant.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_empty_mask_curve() {
    let t0 = Instant::now();
    let run = seed42_run();
    let counts: Vec<u64> = run.reports.iter().map(|r| r.empty_pseudo_mask_count).collect();

    assert_eq!(counts.len(), 6, "expected six iterations");
    assert!(
        counts.windows(2).all(|w| w[1] <= w[0]),
        "empty counts must be non-increasing: {counts:?}"
    );
    assert_eq!(
        *counts.last().unwrap(),
        0,
        "empty count must reach 0 by iteration 6: {counts:?}"
    );

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 300.0, "took {dt:?}, budget 5 min");
    println!(
        "ACCEPTANCE 06 PASS — empty pseudo-mask counts {counts:?} are \
         non-increasing and reach 0 by iteration 6 ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 7. Self-training improves masks and precision across seeds.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_self_training_improvement() {
    let t0 = Instant::now();
    let mut lines = Vec::new();

    for seed in [42u64, 43, 44] {
        let owned;
        let run = if seed == 42 {
            seed42_run()
        } else {
            owned = shifted_run(seed, Variant::BigConvexFillNoblank);
            &owned
        };
        let first = &run.reports[0];
        let best = &run.reports[(run.best_iteration - 1) as usize];
        let iou1 = first.mean_iou_vs_reference.expect("synthetic run has reference IoU");
        let iou_best = best.mean_iou_vs_reference.expect("synthetic run has reference IoU");

        assert!(
            iou_best >= iou1 + 0.05,
            "seed {seed}: best-iteration IoU {iou_best:.4} (iteration {}) must exceed \
             iteration-1 IoU {iou1:.4} by at least 0.05",
            run.best_iteration
        );
        assert!(
            best.precision >= first.precision,
            "seed {seed}: best-iteration precision {:.4} fell below iteration-1 \
             precision {:.4}",
            best.precision,
            first.precision
        );
        lines.push(format!(
            "seed {seed}: IoU {iou1:.3}->{iou_best:.3} at iteration {}, precision \
             {:.3}->{:.3}",
            run.best_iteration, first.precision, best.precision
        ));
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 900.0, "took {dt:?}, budget 15 min");
    println!("ACCEPTANCE 07 PASS — {} ({dt:?})", lines.join("; "));
}

// ---------------------------------------------------------------------------
// 8. Ablation ordering: big_convex_fill does not trail vanilla.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_ablation_ordering() {
    let t0 = Instant::now();

    let guarded = seed42_run();
    let bcf = shifted_run(42, Variant::BigConvexFill);
    let vanilla = shifted_run(42, Variant::Vanilla);

    let best_precision = |run: &SelfTrainOutcome| -> f64 {
        run.reports[(run.best_iteration - 1) as usize].precision
    };
    let p_bcf = best_precision(&bcf);
    let p_vanilla = best_precision(&vanilla);

    assert!(
        p_bcf >= p_vanilla - 0.01,
        "big_convex_fill best precision {p_bcf:.4} trails vanilla {p_vanilla:.4} \
         by more than the 0.01 tie allowance"
    );
    // The guarded run from criteria 6/7 sits on the same fixture; report it
    // alongside to complete the ablation picture.
    let p_guarded = best_precision(guarded);

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 900.0, "took {dt:?}, budget shared with criterion 7");
    println!(
        "ACCEPTANCE 08 PASS — best precision big_convex_fill {p_bcf:.3} >= \
         vanilla {p_vanilla:.3} - 0.01 (guarded variant {p_guarded:.3}) ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 9. No-shift control: self-training not needed absent a shift.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_no_shift_control() {
    let t0 = Instant::now();

    let (source, target) = cropped_fixture(42, 50, 400, 0);
    let run =
        run_self_training(&source, target, &fixture_config(42, Variant::BigConvexFillNoblank))
            .unwrap();

    let p1 = run.reports[0].precision;
    let p_best = run.reports[(run.best_iteration - 1) as usize].precision;
    let gap = (p1 - p_best).abs();
    assert!(
        gap <= 0.05,
        "no-shift precision gap {gap:.4} between iteration 1 ({p1:.4}) and best \
         iteration {} ({p_best:.4}) exceeds 0.05",
        run.best_iteration
    );
    for (id, mask) in &run.pseudo_masks {
        assert!(!mask.is_blank(), "no-shift pseudo-mask for {id} is blank");
        assert!(
            mask.count_foreground() < (mask.width() * mask.height()) as usize,
            "no-shift pseudo-mask for {id} claims the whole raster"
        );
    }

    let dt = t0.elapsed();
    assert!(dt.as_secs_f64() < 300.0, "took {dt:?}, budget 5 min");
    println!(
        "ACCEPTANCE 09 PASS — no-shift precision gap {gap:.3} (iteration 1 \
         {p1:.3}, best iteration {} {p_best:.3}), all masks non-degenerate ({dt:?})",
        run.best_iteration
    );
}

// ---------------------------------------------------------------------------
// 10. Determinism: identical selftrain runs are byte-identical on disk.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_determinism() {
    use std::fs;
    use std::process::Command;

    let t0 = Instant::now();
    let bin = env!("CARGO_BIN_EXE_sonomask");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name);

    let synth_base = serde_json::json!({
        "count": 16,
        "image_size": 96,
        "lesion_radius_range": [8, 14],
        "malignant_irregularity": 0.65,
        "clutter": false,
        "seed": 42,
    });
    let mut source_cfg = synth_base.clone();
    source_cfg["intensity_shift"] = 0.into();
    let mut target_cfg = synth_base;
    target_cfg["count"] = 40.into();
    target_cfg["intensity_shift"] = 25.into();
    fs::write(path("source.json"), source_cfg.to_string()).unwrap();
    fs::write(path("target.json"), target_cfg.to_string()).unwrap();

    let train_cfg = serde_json::json!({
        "max_iterations": 2,
        "termination": {"patience": 6, "metric": "auc"},
        "postprocess": {"oversize_area_cap": 0.2},
    });
    fs::write(path("train.json"), train_cfg.to_string()).unwrap();

    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let s = |p: std::path::PathBuf| p.to_str().unwrap().to_owned();

    run(&["synth", "--config", &s(path("source.json")), "--domain", "source", "--out", &s(path("src"))]);
    run(&["synth", "--config", &s(path("target.json")), "--domain", "target", "--out", &s(path("tgt"))]);
    for out in ["run1", "run2"] {
        run(&[
            "selftrain",
            "--source", &s(path("src")),
            "--target", &s(path("tgt")),
            "--config", &s(path("train.json")),
            "--out", &s(path(out)),
        ]);
    }

    let reports1 = fs::read(path("run1").join("reports.csv")).unwrap();
    let reports2 = fs::read(path("run2").join("reports.csv")).unwrap();
    assert_eq!(reports1, reports2, "reports.csv differs between identical runs");

    let mut mask_files = 0u64;
    let mut iter_dirs: Vec<_> = fs::read_dir(path("run1").join("masks"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    iter_dirs.sort();
    assert!(!iter_dirs.is_empty(), "run produced no mask directories");
    for d in iter_dirs {
        let mut files: Vec<_> = fs::read_dir(path("run1").join("masks").join(&d))
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        files.sort();
        assert!(!files.is_empty());
        for f in files {
            let a = fs::read(path("run1").join("masks").join(&d).join(&f)).unwrap();
            let b = fs::read(path("run2").join("masks").join(&d).join(&f)).unwrap();
            assert_eq!(a, b, "mask {:?}/{:?} differs between identical runs", d, f);
            mask_files += 1;
        }
    }

    let dt = t0.elapsed();
    println!(
        "ACCEPTANCE 10 PASS — two identical selftrain runs produced byte-identical \
         reports.csv and {mask_files} mask files ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 11. Entropy-crop recovery of the generator's exam rectangle.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_11_crop_recovery() {
    let t0 = Instant::now();
    let cfg = SynthConfig {
        count: 200,
        image_size: 128,
        lesion_radius_range: [8, 16],
        malignant_irregularity: FIXTURE_IRREGULARITY,
        clutter: true,
        intensity_shift: 0,
        seed: 42,
    };

    let mut hits = 0u32;
    for s in generate_synthetic(&cfg, Domain::Target).unwrap() {
        let (_, r) = crop_exam_area(&s.image, 3, 0.5).unwrap();
        let t = s.exam_rect;
        let edges = [
            i64::from(r.x) - i64::from(t.x),
            i64::from(r.y) - i64::from(t.y),
            i64::from(r.x + r.w) - i64::from(t.x + t.w),
            i64::from(r.y + r.h) - i64::from(t.y + t.h),
        ];
        if edges.iter().all(|d| d.abs() <= 3) {
            hits += 1;
        }
    }

    assert!(hits >= 190, "only {hits}/200 crops within +/-3 px per edge (need >= 95%)");
    let dt = t0.elapsed();
    println!(
        "ACCEPTANCE 11 PASS — exam rectangle recovered within +/-3 px per edge on \
         {hits}/200 clutter images ({dt:?})"
    );
}

// ---------------------------------------------------------------------------
// 12. Null-feature control: no irregularity, no discrimination.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_12_null_feature_control() {
    let t0 = Instant::now();
    let base = SynthConfig {
        count: 500,
        image_size: 128,
        lesion_radius_range: [8, 16],
        malignant_irregularity: 0.0,
        clutter: false,
        intensity_shift: 0,
        seed: 42,
    };

    let featurize = |domain: Domain| -> (Vec<[f64; FEATURE_LEN]>, Vec<bool>) {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for s in generate_synthetic(&base, domain).unwrap() {
            let (crop, mask) = classification_crop_pair(&s.image, &s.lesion_mask).unwrap();
            features.push(lesion_features(&crop, &mask).unwrap());
            labels.push(s.label == sonomask::selftrain::Class::Malignant);
        }
        (features, labels)
    };

    let (train_f, train_y) = featurize(Domain::Source);
    let (test_f, test_y) = featurize(Domain::Target);

    let cfg = TrainConfig { learning_rate: 0.5, epochs: 1000, seed: 42, ..TrainConfig::default() };
    let model = train_classifier(&train_f, &train_y, &cfg).unwrap();
    let scores: Vec<f64> = test_f
        .iter()
        .map(|f| sonomask::models::predict_class(&model, f).unwrap())
        .collect();
    let auc = roc_auc(&scores, &test_y).unwrap();

    assert!(
        (auc - 0.5).abs() <= 0.07,
        "null-feature classifier AUC {auc:.4} strays from 0.5 by more than 0.07"
    );
    let dt = t0.elapsed();
    println!(
        "ACCEPTANCE 12 PASS — with zero irregularity the classifier AUC is \
         {auc:.4} on a 500-sample holdout (within 0.5 +/- 0.07) ({dt:?})"
    );
}
