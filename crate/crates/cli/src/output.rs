//! Shared plumbing for the subcommands: worker pools, path handling and
//! plain-text tables.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use valve_inspect_core::dataset::Manifest;
use valve_inspect_core::eval::EvalReport;

use crate::usage;

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Maps `f` over `items` on a pool of `workers` threads. Results come back in
/// input order.
pub fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting worker pool")?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Absolute form of `p` so it can be re-expressed relative to another
/// manifest's directory.
pub fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| std::path::absolute(p).unwrap_or(p.to_path_buf()))
}

/// Saves `manifest` at `path`; paths under the manifest's directory are
/// written relative to it, everything else absolute.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let base = absolute(dir);
    let text = manifest.render(&base);
    valve_inspect_core::atomic_write(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    valve_inspect_core::atomic_write(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Fixed-width table: the first row is the header.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(String::len)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&rule.join("  "));
            out.push('\n');
        }
    }
    out
}

pub const REPORT_COLUMNS: &str = "method\tcorrect\tskips\toverkills\ttotal\taccuracy";

pub fn report_record(method: &str, r: &EvalReport) -> String {
    format!(
        "{method}\t{}\t{}\t{}\t{}\t{}\n",
        r.correct,
        r.skips,
        r.overkills,
        r.total,
        r.accuracy_percent()
    )
}

pub fn report_table(method: &str, r: &EvalReport) -> String {
    render_table(&[
        [
            "Method",
            "Correct",
            "Skips",
            "Overkills",
            "Total",
            "Accuracy",
        ]
        .map(String::from)
        .to_vec(),
        vec![
            method.to_string(),
            r.correct.to_string(),
            r.skips.to_string(),
            r.overkills.to_string(),
            r.total.to_string(),
            r.accuracy_percent(),
        ],
    ])
}
