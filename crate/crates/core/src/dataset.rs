//! Dataset manifests, reproducible splits and crop-offset tables.
//!
//! Both file kinds are UTF-8, tab-separated, one record per line, and start
//! with a versioned header line followed by a column header. Absent optional
//! manifest fields are written as `-`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detector::Label;
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, read_to_string};
use crate::raster::{BBox, CropWindow};

pub const MANIFEST_HEADER: &str = "#valve-inspect-manifest\tv1";
pub const MANIFEST_COLUMNS: &str = "id\timage\tmask\tlabel\tsplit";
pub const OFFSETS_HEADER: &str = "#valve-inspect-offsets\tv1";
pub const OFFSETS_COLUMNS: &str = "id\tx0\ty0\tw\th";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub label: Option<Label>,
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, image: impl Into<PathBuf>) -> Self {
        ManifestEntry {
            id: id.into(),
            image: image.into(),
            mask: None,
            label: None,
            split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id == "-" || id.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!("invalid id `{id}`")));
    }
    Ok(())
}

fn check_path_field(p: &Path) -> Result<()> {
    let s = p.to_string_lossy();
    if s.is_empty() || s == "-" || s.contains(['\t', '\n', '\r']) {
        return Err(Error::invalid(format!(
            "path `{s}` cannot be stored in a manifest"
        )));
    }
    Ok(())
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            check_id(&e.id)?;
            check_path_field(&e.image)?;
            if let Some(m) = &e.mask {
                check_path_field(m)?;
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::invalid(format!("duplicate id `{}`", e.id)));
            }
        }
        Ok(Manifest { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Parses manifest text. Paths are kept exactly as written.
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l == MANIFEST_HEADER => {}
            Some((n, l)) => {
                return Err(err(n, format!("expected `{MANIFEST_HEADER}`, found `{l}`")))
            }
            None => return Err(err(1, "missing manifest header".into())),
        }
        match lines.next() {
            Some((_, l)) if l == MANIFEST_COLUMNS => {}
            Some((n, l)) => return Err(err(n, format!("expected column header, found `{l}`"))),
            None => return Err(err(2, "missing column header".into())),
        }
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(err(n, format!("expected 5 fields, found {}", fields.len())));
            }
            let opt = |s: &str| if s == "-" { None } else { Some(s.to_string()) };
            let id = fields[0].to_string();
            check_id(&id).map_err(|e| err(n, e.to_string()))?;
            if !seen.insert(id.clone()) {
                return Err(err(n, format!("duplicate id `{id}`")));
            }
            if fields[1] == "-" || fields[1].is_empty() {
                return Err(err(n, "image path is required".into()));
            }
            let label = opt(fields[3])
                .map(|s| s.parse::<Label>())
                .transpose()
                .map_err(|e| err(n, e.to_string()))?;
            let split = opt(fields[4])
                .map(|s| s.parse::<Split>())
                .transpose()
                .map_err(|e| err(n, e.to_string()))?;
            entries.push(ManifestEntry {
                id,
                image: PathBuf::from(fields[1]),
                mask: opt(fields[2]).map(PathBuf::from),
                label,
                split,
            });
        }
        Ok(Manifest { entries })
    }

    /// Loads a manifest, resolving relative paths against its directory and
    /// checking that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::parse(&read_to_string(path)?, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            e.image = base.join(&e.image);
            e.mask = e.mask.as_ref().map(|p| base.join(p));
            for p in std::iter::once(&e.image).chain(e.mask.as_ref()) {
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            format!("referenced by entry `{}`", e.id),
                        ),
                    ));
                }
            }
        }
        Ok(m)
    }

    /// Serializes with paths written relative to `base` where possible.
    pub fn render(&self, base: &Path) -> String {
        let rel = |p: &Path| -> String {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        };
        let mut out = format!("{MANIFEST_HEADER}\n{MANIFEST_COLUMNS}\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.id,
                rel(&e.image),
                e.mask.as_deref().map(rel).unwrap_or_else(|| "-".into()),
                e.label.map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
                e.split.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or(Path::new(""));
        atomic_write(path, self.render(base).as_bytes())
    }

    pub fn with_splits(&self, assignment: &[Split]) -> Manifest {
        let entries = self
            .entries
            .iter()
            .zip(assignment)
            .map(|(e, &s)| ManifestEntry {
                split: Some(s),
                ..e.clone()
            })
            .collect();
        Manifest { entries }
    }
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const EIGHTY_TEN_TEN: SplitFractions = SplitFractions {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Per-split counts: floor of each share, then the remainder handed out one
/// at a time to train, val, test in that order.
pub fn split_counts(n: usize, fractions: SplitFractions) -> Result<[usize; 3]> {
    let f = fractions.as_array();
    if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid(format!("invalid split fractions {f:?}")));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions sum to {sum}, expected 1"
        )));
    }
    let nonzero = f.iter().filter(|v| **v > 0.0).count();
    if n < nonzero {
        return Err(Error::invalid(format!(
            "{n} entries cannot fill {nonzero} non-empty splits"
        )));
    }
    let mut counts = f.map(|v| (n as f64 * v + 1e-9).floor() as usize);
    let mut remainder = n - counts.iter().sum::<usize>();
    let mut i = 0;
    while remainder > 0 {
        if f[i % 3] > 0.0 {
            counts[i % 3] += 1;
            remainder -= 1;
        }
        i += 1;
    }
    // A split with a positive share never ends up empty.
    for k in 0..3 {
        if f[k] > 0.0 && counts[k] == 0 {
            let donor = (0..3)
                .max_by_key(|&j| (counts[j], std::cmp::Reverse(j)))
                .unwrap();
            counts[donor] -= 1;
            counts[k] += 1;
        }
    }
    Ok(counts)
}

/// Seeded shuffled assignment of every entry to exactly one split.
pub fn split(manifest: &Manifest, fractions: SplitFractions, seed: u64) -> Result<Manifest> {
    let counts = split_counts(manifest.len(), fractions)?;
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![Split::Train; manifest.len()];
    let mut pos = 0;
    for (split, &count) in Split::ALL.iter().zip(&counts) {
        for &idx in &order[pos..pos + count] {
            assignment[idx] = *split;
        }
        pos += count;
    }
    Ok(manifest.with_splits(&assignment))
}

/// Seeded k-fold assignment: fold index per entry, folds differ in size by at
/// most one.
pub fn kfold(manifest: &Manifest, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > manifest.len() {
        return Err(Error::invalid(format!(
            "k = {k} folds needs 2 <= k <= {} entries",
            manifest.len()
        )));
    }
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; manifest.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        folds[idx] = rank % k;
    }
    Ok(folds)
}

/// Saved crop windows keyed by image id, ordered by id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OffsetTable {
    windows: BTreeMap<String, CropWindow>,
}

impl OffsetTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a window; returns an error if the id is already present.
    pub fn insert(&mut self, id: impl Into<String>, window: CropWindow) -> Result<()> {
        let id = id.into();
        check_id(&id)?;
        if self.windows.contains_key(&id) {
            return Err(Error::invalid(format!("duplicate id `{id}`")));
        }
        self.windows.insert(id, window);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&CropWindow> {
        self.windows.get(id)
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &CropWindow)> {
        self.windows.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn render(&self) -> String {
        let mut out = format!("{OFFSETS_HEADER}\n{OFFSETS_COLUMNS}\n");
        for (id, w) in &self.windows {
            let b = w.source_box;
            out.push_str(&format!("{id}\t{}\t{}\t{}\t{}\n", b.x0, b.y0, b.w, b.h));
        }
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_path_buf(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        if lines.next().map(|(_, l)| l) != Some(OFFSETS_HEADER) {
            return Err(err(1, format!("expected `{OFFSETS_HEADER}`")));
        }
        if lines.next().map(|(_, l)| l) != Some(OFFSETS_COLUMNS) {
            return Err(err(2, format!("expected `{OFFSETS_COLUMNS}`")));
        }
        let mut table = OffsetTable::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(err(n, format!("expected 5 fields, found {}", fields.len())));
            }
            let mut nums = [0usize; 4];
            for (slot, f) in nums.iter_mut().zip(&fields[1..]) {
                *slot = f
                    .parse()
                    .map_err(|_| err(n, format!("`{f}` is not a non-negative integer")))?;
            }
            let bbox =
                BBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| err(n, e.to_string()))?;
            table
                .insert(fields[0], CropWindow::new(bbox))
                .map_err(|e| err(n, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.render().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?, path)
    }
}
