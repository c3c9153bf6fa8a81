//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p valve-inspect-core --test acceptance`.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use valve_inspect_core::detector::{classify, Label, VerdictLabel};
use valve_inspect_core::eval::{dice, iou, score_detections, EvalReport};
use valve_inspect_core::morphology::{
    connected_components, dilate, erode, Connectivity, StructuringElement,
};
use valve_inspect_core::pipeline::{
    BandBackend, OracleBackend, PipelineConfig, PipelineStatus, SegmenterBackend, TwoStepPipeline,
};
use valve_inspect_core::raster::crop;
use valve_inspect_core::synth::{generate_corpus, Corpus, CorpusConfig};
use valve_inspect_core::BinaryMask;

use common::{brute_dilate, brute_erode, flood_fill_labels, random_mask, translate};

const CORPUS_SEED: u64 = 20_240_611;
const CORPUS_SIZE: usize = 500;
const MAX_CLASSIFY_TIME: Duration = Duration::from_secs(30);
const CORRUPT_FRACTION: f64 = 0.10;
const METRIC_PAIRS: usize = 1_000;
const METRIC_TOL: f64 = 1e-12;
const PIPELINE_SCENES: usize = 100;
const ORACLE_MIN_MEAN_IOU: f64 = 0.98;
const BAND_MIN_MEAN_IOU: f64 = 0.90;
const MORPH_MASKS: usize = 200;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn acceptance_corpus() -> Corpus {
    let cfg = CorpusConfig {
        tilt_range: (2.0, 35.0),
        clutter: 3,
        split: None,
        ..CorpusConfig::default()
    };
    generate_corpus(CORPUS_SIZE, CORPUS_SEED, &cfg).expect("corpus generation")
}

fn oracle_agreement(corpus: &Corpus) -> Outcome {
    let sides: std::collections::HashSet<_> = corpus
        .samples
        .iter()
        .map(|s| s.sample.spec.body.side)
        .collect();
    if sides.len() != 2 {
        return Err("corpus does not cover both body sides".into());
    }
    if corpus
        .samples
        .iter()
        .any(|s| s.sample.spec.body.tilt_deg.abs() < 2.0)
    {
        return Err("corpus contains |tilt| < 2 degrees".into());
    }
    let start = Instant::now();
    let pairs: Vec<(VerdictLabel, Label)> = corpus
        .samples
        .iter()
        .map(|s| (classify(&s.sample.truth_mask).label, s.sample.label))
        .collect();
    let elapsed = start.elapsed();
    let r = score_detections(&pairs).map_err(|e| e.to_string())?;
    let summary = format!(
        "{} samples, skips {}, overkills {}, {:.2?} single-threaded",
        r.total, r.skips, r.overkills, elapsed
    );
    if r.skips == 0 && r.overkills == 0 && elapsed < MAX_CLASSIFY_TIME {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn speckle_only(w: usize, h: usize, rng: &mut impl Rng) -> BinaryMask {
    // Isolated single pixels on a 3-pixel lattice; opening removes them all.
    BinaryMask::from_fn(w, h, |x, y| {
        x % 3 == 1 && y % 3 == 1 && rng.random_bool(0.3)
    })
    .unwrap()
}

fn fail_safe(corpus: &Corpus) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED ^ 0xC0FFEE);
    let n = corpus.samples.len();
    let n_corrupt = (n as f64 * CORRUPT_FRACTION).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let corrupt: std::collections::HashSet<usize> = idx[..n_corrupt].iter().copied().collect();

    let mut pairs = Vec::with_capacity(n);
    let mut not_review = Vec::new();
    for (i, s) in corpus.samples.iter().enumerate() {
        let truth = &s.sample.truth_mask;
        let verdict = if corrupt.contains(&i) {
            let m = if i % 2 == 0 {
                BinaryMask::empty(truth.width(), truth.height()).unwrap()
            } else {
                speckle_only(truth.width(), truth.height(), &mut rng)
            };
            let v = classify(&m);
            if v.label != VerdictLabel::Review {
                not_review.push(s.id.clone());
            }
            v
        } else {
            classify(truth)
        };
        pairs.push((verdict.label, s.sample.label));
    }
    let r = score_detections(&pairs).map_err(|e| e.to_string())?;
    let reconciled = r.correct + r.skips + r.overkills == r.total;
    let summary = format!(
        "{n_corrupt} corrupted, {} not flagged for review, skips {}, overkills {}, accuracy {}",
        not_review.len(),
        r.skips,
        r.overkills,
        r.accuracy_percent()
    );
    if not_review.is_empty() && r.skips == 0 && reconciled {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..METRIC_PAIRS {
        let w = rng.random_range(1..=64);
        let h = rng.random_range(1..=64);
        let (dx, dy) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let x = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(dx)).unwrap();
        let y = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(dy)).unwrap();
        let (d, i) = (dice(&x, &y).unwrap(), iou(&x, &y).unwrap());
        let (d2, i2) = (dice(&y, &x).unwrap(), iou(&y, &x).unwrap());
        if d != d2 || i != i2 {
            return Err(format!("pair {k}: metrics not symmetric"));
        }
        if d < i {
            return Err(format!("pair {k}: dice {d} < iou {i}"));
        }
        worst = worst.max((d - 2.0 * i / (1.0 + i)).abs());
    }
    if worst > METRIC_TOL {
        return Err(format!("dice/iou identity off by {worst:e}"));
    }
    let a = BinaryMask::from_fn(4, 3, |x, y| x < 2 && y < 2).unwrap();
    let b = BinaryMask::from_fn(4, 3, |x, y| (1..3).contains(&x) && y < 2).unwrap();
    let (d, i) = (dice(&a, &b).unwrap(), iou(&a, &b).unwrap());
    if d != 0.5 || (i - 1.0 / 3.0).abs() > METRIC_TOL {
        return Err(format!("fixture gave dice {d}, iou {i}"));
    }
    Ok(format!(
        "{METRIC_PAIRS} pairs, max identity error {worst:e}, fixture dice {d} iou {i:.4}"
    ))
}

fn report_arithmetic() -> Outcome {
    let rows = [
        ((71, 0, 2), "97.26%"),
        ((66, 4, 3), "90.41%"),
        ((68, 3, 2), "93.15%"),
    ];
    let mut got = Vec::new();
    for ((c, s, o), expected) in rows {
        let mut pairs = Vec::new();
        pairs.extend((0..c).map(|_| (VerdictLabel::Faulty, Label::Faulty)));
        pairs.extend((0..s).map(|_| (VerdictLabel::Normal, Label::Faulty)));
        pairs.extend((0..o).map(|_| (VerdictLabel::Faulty, Label::Normal)));
        let r = score_detections(&pairs).map_err(|e| e.to_string())?;
        let direct = EvalReport::from_counts(c, s, o).map_err(|e| e.to_string())?;
        if r != direct || r.total != 73 || r.accuracy_percent() != expected {
            return Err(format!(
                "({c},{s},{o}) gave {} over {}, expected {expected}",
                r.accuracy_percent(),
                r.total
            ));
        }
        got.push(r.accuracy_percent());
    }
    Ok(got.join(", "))
}

fn two_step_pipeline() -> Outcome {
    let cfg = CorpusConfig {
        split: None,
        ..CorpusConfig::default()
    };
    let corpus =
        generate_corpus(PIPELINE_SCENES, CORPUS_SEED + 1, &cfg).map_err(|e| e.to_string())?;
    let mut oracle = OracleBackend::new();
    for s in &corpus.samples {
        oracle.insert(&s.id, s.sample.truth_mask.clone());
    }
    let oracle: Arc<dyn SegmenterBackend> = Arc::new(oracle);
    let band: Arc<dyn SegmenterBackend> = Arc::new(BandBackend::new(0.6, 1.0).unwrap());

    let mut means = Vec::new();
    for (name, backend) in [("oracle", oracle), ("band", band)] {
        let p = TwoStepPipeline::new(PipelineConfig::default(), backend.clone(), backend)
            .map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for s in &corpus.samples {
            let r = p.run(&s.id, &s.sample.image).map_err(|e| e.to_string())?;
            if r.status != PipelineStatus::Ok {
                return Err(format!("{name}: {} returned {}", s.id, r.status));
            }
            let window = r.window.unwrap();
            let patch = r.fine_patch.as_ref().unwrap();
            // Offset round trip: the window of the final mask is the fine
            // patch, and nothing lies outside it.
            if &crop(&r.final_mask, &window).unwrap() != patch
                || r.final_mask.count() != patch.count()
            {
                return Err(format!("{name}: offset round trip broken for {}", s.id));
            }
            total += iou(&r.final_mask, &s.sample.truth_mask).unwrap();
        }
        means.push((name, total / corpus.samples.len() as f64));
    }
    let summary = format!(
        "mean IoU oracle {:.4} (>= {ORACLE_MIN_MEAN_IOU}), band {:.4} (>= {BAND_MIN_MEAN_IOU}), offsets exact",
        means[0].1, means[1].1
    );
    if means[0].1 >= ORACLE_MIN_MEAN_IOU && means[1].1 >= BAND_MIN_MEAN_IOU {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn morphology_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let se = StructuringElement::default();
    for k in 0..MORPH_MASKS {
        let m = random_mask(&mut rng, 32);
        if erode(&m, se) != brute_erode(&m, 3) {
            return Err(format!("erode mismatch on mask {k}"));
        }
        if dilate(&m, se) != brute_dilate(&m, 3) {
            return Err(format!("dilate mismatch on mask {k}"));
        }
        for (conn, eight) in [(Connectivity::Eight, true), (Connectivity::Four, false)] {
            let l = connected_components(&m, conn);
            let (labels, areas) = flood_fill_labels(&m, eight);
            if l.labels != labels || l.areas != areas || l.count != areas.len() {
                return Err(format!("labeling mismatch on mask {k} ({conn:?})"));
            }
        }
    }
    Ok(format!("{MORPH_MASKS} random masks up to 32x32, exact"))
}

fn invariance(corpus: &Corpus) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED ^ 0x5EED);
    for s in &corpus.samples {
        let m = &s.sample.truth_mask;
        let base = classify(m);
        let mirrored = classify(&m.flip_horizontal());
        if mirrored.label != base.label {
            return Err(format!(
                "{}: mirror changed {} to {}",
                s.id, base.label, mirrored.label
            ));
        }
        let bb = valve_inspect_core::morphology::bbox_of(m).unwrap();
        let dx = rng.random_range(-(bb.x0 as i64)..=(m.width() - 1 - bb.x1()) as i64);
        let dy = rng.random_range(-(bb.y0 as i64)..=(m.height() - 1 - bb.y1()) as i64);
        let shifted = classify(&translate(m, dx, dy));
        if shifted.label != base.label || shifted.rule != base.rule {
            return Err(format!("{}: shift ({dx},{dy}) changed the verdict", s.id));
        }
    }
    Ok(format!(
        "{} samples, labels stable under mirror and translation",
        corpus.samples.len()
    ))
}

fn main() {
    let corpus = acceptance_corpus();
    let criteria: Vec<Criterion> = vec![
        (
            "classifier agrees with generator labels",
            Box::new(|| oracle_agreement(&corpus)),
        ),
        (
            "corrupted masks fail safe to review",
            Box::new(|| fail_safe(&corpus)),
        ),
        ("dice/iou identities", Box::new(metric_identities)),
        ("detection report arithmetic", Box::new(report_arithmetic)),
        (
            "two-step pipeline IoU and offsets",
            Box::new(two_step_pipeline),
        ),
        (
            "morphology matches brute force",
            Box::new(morphology_oracle),
        ),
        (
            "mirror and translation invariance",
            Box::new(|| invariance(&corpus)),
        ),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
