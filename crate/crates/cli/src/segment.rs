use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use log::{debug, info};
use valve_inspect_core::dataset::{Manifest, ManifestEntry, OffsetTable, Split};
use valve_inspect_core::eval::{seg_score, SegScore};
use valve_inspect_core::pipeline::{BackendSpec, PipelineConfig, PipelineStatus, TwoStepPipeline};
use valve_inspect_core::raster::CropWindow;
use valve_inspect_core::{BinaryMask, GrayImage};

use crate::config::{FileConfig, Size};
use crate::output::{
    absolute, default_workers, fmt_opt, load_manifest, mean, median, par_map, render_table,
    save_manifest, write_text,
};
use crate::{usage, SegmentArgs};

pub const METRICS_COLUMNS: &str = "id\tsplit\tstatus\tdice\tiou";
pub const SUMMARY_COLUMNS: &str = "split\tcount\tmean_dice\tmedian_dice\tmean_iou\tmedian_iou";

struct Outcome {
    window: Option<CropWindow>,
    status: PipelineStatus,
    score: Option<SegScore>,
    mask_path: PathBuf,
}

fn parse_backend(v: &str) -> Result<BackendSpec> {
    v.parse().map_err(|e| usage(format!("backend `{v}`: {e}")))
}

fn resolve_config(a: &SegmentArgs, file: &FileConfig) -> Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let both = file.pick(a.backend.clone(), "backend")?;
    let coarse = file
        .pick(a.coarse_backend.clone(), "coarse-backend")?
        .or_else(|| both.clone());
    let fine = file.pick(a.fine_backend.clone(), "fine-backend")?.or(both);
    let Size(cw, ch) = file.resolve(
        a.coarse_size,
        "coarse-size",
        Size(d.coarse_size.0, d.coarse_size.1),
    )?;
    let Size(kw, kh) =
        file.resolve(a.crop_size, "crop-size", Size(d.crop_size.0, d.crop_size.1))?;
    let cfg = PipelineConfig {
        coarse_size: (cw, ch),
        crop_size: (kw, kh),
        threshold: file.resolve(a.threshold, "threshold", d.threshold)?,
        coarse_backend: coarse
            .as_deref()
            .map(parse_backend)
            .transpose()?
            .unwrap_or(d.coarse_backend),
        fine_backend: fine
            .as_deref()
            .map(parse_backend)
            .transpose()?
            .unwrap_or(d.fine_backend),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn process(pipeline: &TwoStepPipeline, entry: &ManifestEntry, out: &Path) -> Result<Outcome> {
    let img = GrayImage::load_png(&entry.image)?;
    let r = pipeline.run(&entry.id, &img)?;
    let mask_path = out.join("masks").join(format!("{}.png", entry.id));
    r.final_mask.save_png(&mask_path)?;
    let score = match &entry.mask {
        Some(p) => Some(seg_score(&r.final_mask, &BinaryMask::load_png(p)?)?),
        None => None,
    };
    debug!("{}: {} {:?}", entry.id, r.status, score);
    Ok(Outcome {
        window: r.window,
        status: r.status,
        score,
        mask_path,
    })
}

fn summary_rows(manifest: &Manifest, outcomes: &[Outcome]) -> Vec<Vec<String>> {
    let groups: Vec<(String, Option<Split>)> = Split::ALL
        .iter()
        .map(|s| (s.to_string(), Some(*s)))
        .chain(std::iter::once(("all".to_string(), None)))
        .collect();
    let mut rows = Vec::new();
    for (name, split) in groups {
        let scores: Vec<SegScore> = manifest
            .entries()
            .iter()
            .zip(outcomes)
            .filter(|(e, _)| split.is_none() || e.split == split)
            .filter_map(|(_, o)| o.score)
            .collect();
        if scores.is_empty() {
            continue;
        }
        let mut dice: Vec<f64> = scores.iter().map(|s| s.dice).collect();
        let mut iou: Vec<f64> = scores.iter().map(|s| s.iou).collect();
        rows.push(vec![
            name,
            scores.len().to_string(),
            fmt_opt(mean(&dice)),
            fmt_opt(median(&mut dice)),
            fmt_opt(mean(&iou)),
            fmt_opt(median(&mut iou)),
        ]);
    }
    rows
}

pub fn run(a: SegmentArgs, file: &FileConfig) -> Result<ExitCode> {
    let manifest_path = file
        .pick(a.manifest.clone(), "manifest")?
        .ok_or_else(|| usage("--manifest is required"))?;
    let out: PathBuf = file
        .pick(a.out.clone(), "out")?
        .ok_or_else(|| usage("--out is required"))?;
    let workers = file.resolve(a.workers, "workers", default_workers())?;
    let cfg = resolve_config(&a, file)?;
    let manifest = load_manifest(&manifest_path)?;
    let pipeline = TwoStepPipeline::from_config(cfg.clone(), Some(&manifest))
        .context("configuring segmentation backends")?;
    info!(
        "segmenting {} images with coarse={} fine={} on {workers} workers",
        manifest.len(),
        cfg.coarse_backend,
        cfg.fine_backend
    );

    let results = par_map(workers, manifest.entries(), |e| {
        process(&pipeline, e, &out).with_context(|| format!("segmenting `{}`", e.id))
    })?;
    let outcomes: Vec<Outcome> = results.into_iter().collect::<Result<_>>()?;

    let mut offsets = OffsetTable::new();
    let mut metrics = format!("{METRICS_COLUMNS}\n");
    let mut predicted = Vec::with_capacity(manifest.len());
    let mut no_roi = 0;
    for (e, o) in manifest.entries().iter().zip(&outcomes) {
        if let Some(w) = o.window {
            offsets.insert(&e.id, w)?;
        }
        if o.status == PipelineStatus::NoRoi {
            no_roi += 1;
        }
        metrics.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            e.id,
            e.split.map_or("-".into(), |s| s.to_string()),
            o.status,
            fmt_opt(o.score.map(|s| s.dice)),
            fmt_opt(o.score.map(|s| s.iou)),
        ));
        predicted.push(ManifestEntry {
            id: e.id.clone(),
            image: absolute(&e.image),
            mask: Some(absolute(&o.mask_path)),
            label: None,
            split: e.split,
        });
    }
    offsets.save(&out.join("offsets.tsv"))?;
    write_text(&out.join("metrics.tsv"), &metrics)?;
    save_manifest(&Manifest::new(predicted)?, &out.join("manifest.tsv"))?;

    let rows = summary_rows(&manifest, &outcomes);
    let mut summary = format!("{SUMMARY_COLUMNS}\n");
    for r in &rows {
        summary.push_str(&r.join("\t"));
        summary.push('\n');
    }
    write_text(&out.join("summary.tsv"), &summary)?;

    println!(
        "segmented {} images ({no_roi} without a region of interest) into {}",
        manifest.len(),
        out.display()
    );
    if !rows.is_empty() {
        let mut table = vec![[
            "Split",
            "Count",
            "Mean Dice",
            "Median Dice",
            "Mean IoU",
            "Median IoU",
        ]
        .map(String::from)
        .to_vec()];
        table.extend(rows);
        print!("{}", render_table(&table));
    }
    Ok(ExitCode::SUCCESS)
}
