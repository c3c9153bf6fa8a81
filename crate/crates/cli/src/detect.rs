use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use log::{info, warn};
use valve_inspect_core::dataset::{Manifest, ManifestEntry};
use valve_inspect_core::detector::{analyze, Label, Verdict, VerdictLabel};
use valve_inspect_core::eval::score_detections;
use valve_inspect_core::{BinaryMask, GrayImage};

use crate::config::FileConfig;
use crate::output::{
    absolute, default_workers, load_manifest, par_map, report_record, report_table, save_manifest,
    write_text, REPORT_COLUMNS,
};
use crate::{overlay, usage, DetectArgs};

pub const VERDICT_HEADER: &str = "#valve-inspect-verdicts\tv1";
pub const VERDICT_COLUMNS: &str =
    "id\tlabel\trule\tp1x\tp1y\tp2x\tp2y\tpHx\tpHy\tsplit_x\tb_split_x";
const METHOD: &str = "geometric-detector";

pub fn verdict_record(id: &str, v: &Verdict) -> String {
    let geometry = match v.geometry {
        Some(g) => [
            g.p1.x,
            g.p1.y,
            g.p2.x,
            g.p2.y,
            g.p_handle.x,
            g.p_handle.y,
            g.split_x,
            g.b_split_x,
        ]
        .map(|n| n.to_string())
        .join("\t"),
        None => ["-"; 8].join("\t"),
    };
    format!("{id}\t{}\t{}\t{geometry}\n", v.label, v.rule)
}

struct Detection {
    verdict: Verdict,
    mask_path: Option<PathBuf>,
}

fn detect_one(
    entry: &ManifestEntry,
    masks: Option<&PathBuf>,
    overlay_dir: Option<&PathBuf>,
) -> Result<Detection> {
    let mask_path = match masks {
        Some(dir) => Some(dir.join(format!("{}.png", entry.id))),
        None => entry.mask.clone(),
    };
    let mask = match mask_path.as_ref().map(|p| BinaryMask::load_png(p)) {
        Some(Ok(m)) => Some(m),
        Some(Err(e)) => {
            warn!("{}: {e}; marking for review", entry.id);
            None
        }
        None => {
            warn!("{}: no mask available; marking for review", entry.id);
            None
        }
    };
    let analysis = mask.as_ref().and_then(|m| analyze(m).ok());
    let verdict = analysis
        .as_ref()
        .map_or_else(Verdict::review, |a| a.verdict);

    if let (Some(dir), Some(m)) = (overlay_dir, mask.as_ref()) {
        let image = GrayImage::load_png(&entry.image).ok();
        let img = overlay::render(image.as_ref(), m, analysis.as_ref(), verdict.label);
        overlay::save(&img, &dir.join(format!("{}.png", entry.id)))?;
    }
    Ok(Detection {
        verdict,
        mask_path: mask.and(mask_path),
    })
}

pub fn run(a: DetectArgs, file: &FileConfig) -> Result<ExitCode> {
    let manifest_path = file
        .pick(a.manifest, "manifest")?
        .ok_or_else(|| usage("--manifest is required"))?;
    let out: PathBuf = file
        .pick(a.out, "out")?
        .ok_or_else(|| usage("--out is required"))?;
    let masks = file.pick(a.masks, "masks")?;
    let workers = file.resolve(a.workers, "workers", default_workers())?;
    let want_overlay = file.switch(a.overlay, "overlay")?;
    let fail_on_skip = file.switch(a.fail_on_skip, "fail-on-skip")?;
    if let Some(dir) = &masks {
        if !dir.is_dir() {
            return Err(usage(format!(
                "mask directory {} does not exist",
                dir.display()
            )));
        }
    }
    let manifest = load_manifest(&manifest_path)?;
    let overlay_dir = want_overlay.then(|| out.join("overlays"));
    info!("classifying {} masks on {workers} workers", manifest.len());

    let detections: Vec<Detection> = par_map(workers, manifest.entries(), |e| {
        detect_one(e, masks.as_ref(), overlay_dir.as_ref())
    })?
    .into_iter()
    .collect::<Result<_>>()?;

    let mut records = format!("{VERDICT_HEADER}\n{VERDICT_COLUMNS}\n");
    let mut predicted = Vec::with_capacity(manifest.len());
    let mut pairs = Vec::new();
    for (e, d) in manifest.entries().iter().zip(&detections) {
        records.push_str(&verdict_record(&e.id, &d.verdict));
        if let Some(truth) = e.label {
            pairs.push((d.verdict.label, truth));
        }
        predicted.push(ManifestEntry {
            id: e.id.clone(),
            image: absolute(&e.image),
            mask: d.mask_path.as_deref().map(absolute),
            label: Some(d.verdict.label.operational()),
            split: e.split,
        });
    }
    write_text(&out.join("verdicts.tsv"), &records)?;
    save_manifest(&Manifest::new(predicted)?, &out.join("manifest.tsv"))?;

    let count = |l: VerdictLabel| detections.iter().filter(|d| d.verdict.label == l).count();
    println!(
        "classified {} masks: {} normal, {} faulty, {} review",
        detections.len(),
        count(VerdictLabel::Normal),
        count(VerdictLabel::Faulty),
        count(VerdictLabel::Review)
    );

    if pairs.is_empty() {
        if fail_on_skip {
            bail!("--fail-on-skip needs truth labels in the manifest, found none");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let report = score_detections(&pairs)?;
    write_text(
        &out.join("report.tsv"),
        &format!("{REPORT_COLUMNS}\n{}", report_record(METHOD, &report)),
    )?;
    print!("{}", report_table(METHOD, &report));
    if fail_on_skip && report.skips > 0 {
        let skipped: Vec<&str> = manifest
            .entries()
            .iter()
            .zip(&detections)
            .filter(|(e, d)| {
                e.label == Some(Label::Faulty) && d.verdict.label == VerdictLabel::Normal
            })
            .map(|(e, _)| e.id.as_str())
            .collect();
        bail!(
            "{} faulty valves passed as normal: {}",
            report.skips,
            skipped.join(", ")
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use valve_inspect_core::detector::{Rule, ValveGeometry};
    use valve_inspect_core::raster::Point;

    #[test]
    fn record_fields_follow_the_column_order() {
        let v = Verdict {
            label: VerdictLabel::Normal,
            rule: Rule::NormalTilt,
            geometry: Some(ValveGeometry {
                p1: Point::new(1, 2),
                p2: Point::new(3, 4),
                p_handle: Point::new(5, 6),
                split_x: 7,
                b_split_x: 8,
            }),
        };
        assert_eq!(
            verdict_record("a", &v),
            "a\tnormal\tnormal-tilt\t1\t2\t3\t4\t5\t6\t7\t8\n"
        );
        assert_eq!(
            verdict_record("b", &Verdict::review()),
            "b\treview\tdegenerate-mask\t-\t-\t-\t-\t-\t-\t-\t-\n"
        );
        assert_eq!(VERDICT_COLUMNS.split('\t').count(), 11);
    }
}
