use std::process::ExitCode;

use anyhow::{Context, Result};
use log::info;
use valve_inspect_core::detector::Label;
use valve_inspect_core::synth::{generate_corpus, CorpusConfig};

use crate::config::{FileConfig, Range, Size};
use crate::{usage, GenerateArgs};

pub fn run(a: GenerateArgs, file: &FileConfig) -> Result<ExitCode> {
    let defaults = CorpusConfig::default();
    let n: usize = file
        .pick(a.n, "n")?
        .ok_or_else(|| usage("--n is required"))?;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let out = file
        .pick(a.out, "out")?
        .ok_or_else(|| usage("--out is required"))?;
    let seed = file.resolve(a.seed, "seed", 0u64)?;
    let Range(lo, hi) = file.resolve(
        a.tilt_range,
        "tilt-range",
        Range(defaults.tilt_range.0, defaults.tilt_range.1),
    )?;
    let Size(w, h) = file.resolve(
        a.image_size,
        "image-size",
        Size(defaults.image_w, defaults.image_h),
    )?;
    let cfg = CorpusConfig {
        image_w: w,
        image_h: h,
        tilt_range: (lo, hi),
        faulty_fraction: file.resolve(
            a.faulty_fraction,
            "faulty-fraction",
            defaults.faulty_fraction,
        )?,
        clutter: file.resolve(a.clutter, "clutter", defaults.clutter)?,
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    info!(
        "generating {n} scenes with seed {seed} into {}",
        out.display()
    );
    let corpus = generate_corpus(n, seed, &cfg).context("generating corpus")?;
    corpus
        .write(&out)
        .with_context(|| format!("writing corpus to {}", out.display()))?;

    let faulty = corpus
        .samples
        .iter()
        .filter(|s| s.sample.label == Label::Faulty)
        .count();
    println!(
        "wrote {n} scenes ({faulty} faulty, {} normal) to {}",
        n - faulty,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}
