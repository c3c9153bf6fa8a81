use std::collections::BTreeSet;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use valve_inspect_core::dataset::Split;
use valve_inspect_core::detector::{Label, VerdictLabel};
use valve_inspect_core::eval::{score_detections, seg_score, SegScore};
use valve_inspect_core::BinaryMask;

use crate::output::{
    fmt_opt, load_manifest, mean, median, render_table, report_record, report_table, write_text,
    REPORT_COLUMNS,
};
use crate::segment::SUMMARY_COLUMNS;
use crate::{usage, EvalArgs};

const METHOD: &str = "predictions";

fn as_verdict(l: Label) -> VerdictLabel {
    match l {
        Label::Faulty => VerdictLabel::Faulty,
        Label::Normal => VerdictLabel::Normal,
    }
}

pub fn run(a: EvalArgs) -> Result<ExitCode> {
    let pred = load_manifest(&a.pred)?;
    let truth = load_manifest(&a.truth)?;

    let p_ids: BTreeSet<&str> = pred.ids().collect();
    let t_ids: BTreeSet<&str> = truth.ids().collect();
    if p_ids != t_ids {
        let missing: Vec<&str> = t_ids.difference(&p_ids).copied().collect();
        let extra: Vec<&str> = p_ids.difference(&t_ids).copied().collect();
        return Err(usage(format!(
            "prediction and truth ids differ; missing from predictions: [{}]; not in truth: [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }

    let mut scored: Vec<(Option<Split>, SegScore)> = Vec::new();
    let mut pairs = Vec::new();
    for t in truth.entries() {
        let p = pred.get(&t.id).expect("id sets are equal");
        if let (Some(pm), Some(tm)) = (&p.mask, &t.mask) {
            let score = seg_score(&BinaryMask::load_png(pm)?, &BinaryMask::load_png(tm)?)
                .with_context(|| format!("scoring `{}`", t.id))?;
            scored.push((t.split, score));
        }
        if let (Some(pl), Some(tl)) = (p.label, t.label) {
            pairs.push((as_verdict(pl), tl));
        }
    }
    if scored.is_empty() && pairs.is_empty() {
        bail!("nothing to score: no id has both predicted and truth masks or labels");
    }

    let mut seg_rows = Vec::new();
    let groups = Split::ALL
        .iter()
        .map(|s| (s.to_string(), Some(*s)))
        .chain([("all".to_string(), None)]);
    for (name, split) in groups {
        let mut dice: Vec<f64> = Vec::new();
        let mut iou: Vec<f64> = Vec::new();
        for (s, sc) in &scored {
            if split.is_none() || *s == split {
                dice.push(sc.dice);
                iou.push(sc.iou);
            }
        }
        if dice.is_empty() {
            continue;
        }
        seg_rows.push(vec![
            name,
            dice.len().to_string(),
            fmt_opt(mean(&dice)),
            fmt_opt(median(&mut dice)),
            fmt_opt(mean(&iou)),
            fmt_opt(median(&mut iou)),
        ]);
    }

    if !seg_rows.is_empty() {
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
        table.extend(seg_rows.iter().cloned());
        print!("{}", render_table(&table));
    }
    let report = if pairs.is_empty() {
        None
    } else {
        let r = score_detections(&pairs)?;
        print!("{}", report_table(METHOD, &r));
        Some(r)
    };

    if let Some(out) = &a.out {
        if !seg_rows.is_empty() {
            let mut text = format!("{SUMMARY_COLUMNS}\n");
            for r in &seg_rows {
                text.push_str(&r.join("\t"));
                text.push('\n');
            }
            write_text(&out.join("segmentation.tsv"), &text)?;
        }
        if let Some(r) = &report {
            write_text(
                &out.join("report.tsv"),
                &format!("{REPORT_COLUMNS}\n{}", report_record(METHOD, r)),
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
