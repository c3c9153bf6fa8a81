//! Two-step segmentation: a coarse pass on a downsampled image locates the
//! valve, a fine pass segments a full-resolution crop around it, and the
//! crop result is pasted back at the saved offset.
//!
//! Segmenters are pluggable through [`SegmenterBackend`].

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::dataset::Manifest;
use crate::error::{Error, Result, Stage};
use crate::raster::{
    binarize, crop, paste_back, resize_image, resize_mask, roi_window, BinaryMask, CropWindow,
    GrayImage, ProbMask, Raster,
};

/// Per-call information threaded to a backend.
#[derive(Debug, Clone, Copy)]
pub struct SegmentContext<'a> {
    pub image_id: &'a str,
    pub stage: Stage,
    /// Full-resolution size of the source image.
    pub source_dims: (usize, usize),
    /// Crop window, present for the fine stage.
    pub window: Option<CropWindow>,
}

/// A segmenter maps an input image to a probability mask of the same shape
/// and must be deterministic for a fixed configuration.
pub trait SegmenterBackend: Send + Sync {
    fn segment(&self, ctx: &SegmentContext<'_>, input: &GrayImage) -> Result<ProbMask>;

    /// Backends that cannot take concurrent calls return `true`; the pipeline
    /// then serializes calls to them.
    fn exclusive(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
enum TruthSource {
    Mask(BinaryMask),
    File(PathBuf),
}

/// Returns the registered ground-truth mask, resampled to the coarse input
/// or cropped to the fine window.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    truths: HashMap<String, TruthSource>,
}

impl OracleBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, truth: BinaryMask) {
        self.truths.insert(id.into(), TruthSource::Mask(truth));
    }

    pub fn insert_file(&mut self, id: impl Into<String>, path: impl Into<PathBuf>) {
        self.truths
            .insert(id.into(), TruthSource::File(path.into()));
    }

    /// Registers every manifest entry that has a mask path.
    pub fn from_manifest(manifest: &Manifest) -> Result<Self> {
        let mut oracle = Self::new();
        for e in manifest.entries() {
            if let Some(mask) = &e.mask {
                oracle.insert_file(&e.id, mask);
            }
        }
        if oracle.truths.is_empty() {
            return Err(Error::invalid(
                "oracle backend needs truth masks in the manifest",
            ));
        }
        Ok(oracle)
    }

    fn truth(&self, id: &str) -> Result<BinaryMask> {
        match self.truths.get(id) {
            Some(TruthSource::Mask(m)) => Ok(m.clone()),
            Some(TruthSource::File(p)) => BinaryMask::load_png(p),
            None => Err(Error::MissingTruth(id.to_string())),
        }
    }
}

impl SegmenterBackend for OracleBackend {
    fn segment(&self, ctx: &SegmentContext<'_>, input: &GrayImage) -> Result<ProbMask> {
        let truth = self.truth(ctx.image_id)?;
        if truth.dims() != ctx.source_dims {
            return Err(Error::ShapeMismatch {
                expected: ctx.source_dims,
                actual: truth.dims(),
            });
        }
        let out = match (ctx.stage, ctx.window) {
            (Stage::Fine, Some(window)) => crop(&truth, &window)?,
            _ => resize_mask(&truth, input.width(), input.height())?,
        };
        Ok(out.to_prob())
    }
}

/// Looks up `<dir>/<image id>.png` and returns it as a probability mask.
#[derive(Debug, Clone)]
pub struct FileBackend {
    dir: PathBuf,
}

impl FileBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileBackend { dir: dir.into() }
    }
}

impl SegmenterBackend for FileBackend {
    fn segment(&self, ctx: &SegmentContext<'_>, input: &GrayImage) -> Result<ProbMask> {
        let path = self.dir.join(format!("{}.png", ctx.image_id));
        if !path.is_file() {
            return Err(Error::MissingMask {
                id: ctx.image_id.to_string(),
                path,
            });
        }
        let mask = ProbMask::load_png(&path)?;
        if mask.dims() != input.dims() {
            return Err(Error::ShapeMismatch {
                expected: input.dims(),
                actual: mask.dims(),
            });
        }
        Ok(mask)
    }
}

/// Classical segmenter: probability 1 inside the intensity band, else 0.
#[derive(Debug, Clone, Copy)]
pub struct BandBackend {
    low: f32,
    high: f32,
}

impl BandBackend {
    pub fn new(low: f32, high: f32) -> Result<Self> {
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::invalid(format!(
                "band [{low}, {high}] must satisfy 0 <= low < high <= 1"
            )));
        }
        Ok(BandBackend { low, high })
    }
}

impl SegmenterBackend for BandBackend {
    fn segment(&self, _ctx: &SegmentContext<'_>, input: &GrayImage) -> Result<ProbMask> {
        let data = input
            .data()
            .iter()
            .map(|&v| {
                if v >= self.low && v <= self.high {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        ProbMask::new(input.width(), input.height(), data)
    }
}

/// Backend selection by name: `oracle`, `file:<dir>`, `band:<low>,<high>`.
/// `onnx:<model>` parses but is not available.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle,
    File(PathBuf),
    Band { low: f32, high: f32 },
    Onnx(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(BackendSpec::Oracle);
        }
        if let Some(dir) = s.strip_prefix("file:") {
            if dir.is_empty() {
                return Err(Error::invalid("file backend needs a directory"));
            }
            return Ok(BackendSpec::File(dir.into()));
        }
        if let Some(model) = s.strip_prefix("onnx:") {
            return Ok(BackendSpec::Onnx(model.into()));
        }
        if let Some(band) = s.strip_prefix("band:") {
            let parse = |v: &str| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|_| Error::invalid(format!("bad band bound `{v}`")))
            };
            let (lo, hi) = band.split_once(',').ok_or_else(|| {
                Error::invalid(format!(
                    "band backend expects `band:<low>,<high>`, got `{s}`"
                ))
            })?;
            let (low, high) = (parse(lo)?, parse(hi)?);
            BandBackend::new(low, high)?;
            return Ok(BackendSpec::Band { low, high });
        }
        Err(Error::UnsupportedBackend(s.to_string()))
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::File(d) => write!(f, "file:{}", d.display()),
            BackendSpec::Band { low, high } => write!(f, "band:{low},{high}"),
            BackendSpec::Onnx(m) => write!(f, "onnx:{}", m.display()),
        }
    }
}

impl BackendSpec {
    /// Instantiates the backend. The oracle needs a manifest with truth masks.
    pub fn build(&self, manifest: Option<&Manifest>) -> Result<Arc<dyn SegmenterBackend>> {
        Ok(match self {
            BackendSpec::Oracle => {
                let m =
                    manifest.ok_or_else(|| Error::invalid("oracle backend needs a manifest"))?;
                Arc::new(OracleBackend::from_manifest(m)?)
            }
            BackendSpec::File(dir) => {
                if !dir.is_dir() {
                    return Err(Error::invalid(format!(
                        "file backend directory {} does not exist",
                        dir.display()
                    )));
                }
                Arc::new(FileBackend::new(dir))
            }
            BackendSpec::Band { low, high } => Arc::new(BandBackend::new(*low, *high)?),
            BackendSpec::Onnx(_) => return Err(Error::UnsupportedBackend(self.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Coarse-pass input size `(w, h)`.
    pub coarse_size: (usize, usize),
    /// Fine-pass crop size `(w, h)`.
    pub crop_size: (usize, usize),
    pub threshold: f32,
    pub coarse_backend: BackendSpec,
    pub fine_backend: BackendSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            coarse_size: (256, 256),
            crop_size: (256, 256),
            threshold: 0.5,
            coarse_backend: BackendSpec::Oracle,
            fine_backend: BackendSpec::Oracle,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let (cw, ch) = self.coarse_size;
        let (kw, kh) = self.crop_size;
        if cw == 0 || ch == 0 || kw == 0 || kh == 0 {
            return Err(Error::invalid("coarse and crop sizes must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold {} must lie strictly inside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineStatus {
    Ok,
    /// The coarse pass found no foreground.
    NoRoi,
}

impl fmt::Display for PipelineStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PipelineStatus::Ok => "ok",
            PipelineStatus::NoRoi => "no-roi",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    /// Final mask at source resolution.
    pub final_mask: BinaryMask,
    /// Crop window; `None` when the coarse pass found nothing.
    pub window: Option<CropWindow>,
    /// Coarse result upsampled to source resolution (diagnostic).
    pub coarse_mask: BinaryMask,
    /// Binarized fine-stage patch, in crop coordinates.
    pub fine_patch: Option<BinaryMask>,
    pub status: PipelineStatus,
}

struct Slot {
    backend: Arc<dyn SegmenterBackend>,
    lock: Option<Arc<Mutex<()>>>,
}

impl Slot {
    fn new(backend: Arc<dyn SegmenterBackend>) -> Self {
        let lock = backend.exclusive().then(|| Arc::new(Mutex::new(())));
        Slot { backend, lock }
    }

    /// A second slot for the same backend instance, sharing its lock.
    fn sharing(&self, backend: Arc<dyn SegmenterBackend>) -> Self {
        if Arc::ptr_eq(&self.backend, &backend) {
            Slot {
                backend,
                lock: self.lock.clone(),
            }
        } else {
            Slot::new(backend)
        }
    }

    fn call(&self, ctx: &SegmentContext<'_>, input: &GrayImage) -> Result<ProbMask> {
        let _guard = self
            .lock
            .as_ref()
            .map(|l| l.lock().unwrap_or_else(|e| e.into_inner()));
        let wrap = |source: Error| Error::Backend {
            stage: ctx.stage,
            id: ctx.image_id.to_string(),
            source: Box::new(source),
        };
        let out = self.backend.segment(ctx, input).map_err(wrap)?;
        if out.dims() != input.dims() {
            return Err(wrap(Error::ShapeMismatch {
                expected: input.dims(),
                actual: out.dims(),
            }));
        }
        Ok(out)
    }
}

pub struct TwoStepPipeline {
    cfg: PipelineConfig,
    coarse: Slot,
    fine: Slot,
}

impl TwoStepPipeline {
    pub fn new(
        cfg: PipelineConfig,
        coarse: Arc<dyn SegmenterBackend>,
        fine: Arc<dyn SegmenterBackend>,
    ) -> Result<Self> {
        cfg.validate()?;
        let coarse = Slot::new(coarse);
        let fine = coarse.sharing(fine);
        Ok(TwoStepPipeline { cfg, coarse, fine })
    }

    /// Resolves both backends from the config; fails before any image is
    /// processed if either cannot be built.
    pub fn from_config(cfg: PipelineConfig, manifest: Option<&Manifest>) -> Result<Self> {
        let coarse = cfg.coarse_backend.build(manifest)?;
        let fine = if cfg.fine_backend == cfg.coarse_backend {
            coarse.clone()
        } else {
            cfg.fine_backend.build(manifest)?
        };
        Self::new(cfg, coarse, fine)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn run(&self, image_id: &str, img: &GrayImage) -> Result<PipelineResult> {
        let (w, h) = img.dims();
        let (crop_w, crop_h) = self.cfg.crop_size;
        if w < crop_w || h < crop_h {
            return Err(Error::invalid(format!(
                "image {w}x{h} is smaller than the {crop_w}x{crop_h} crop"
            )));
        }

        let (cw, ch) = self.cfg.coarse_size;
        let small = resize_image(img, cw, ch)?;
        let coarse_ctx = SegmentContext {
            image_id,
            stage: Stage::Coarse,
            source_dims: (w, h),
            window: None,
        };
        let coarse_prob = self.coarse.call(&coarse_ctx, &small)?;
        let coarse_bin = binarize(&coarse_prob, self.cfg.threshold)?;
        let coarse_mask = resize_mask(&coarse_bin, w, h)?;

        if coarse_mask.is_empty() {
            return Ok(PipelineResult {
                final_mask: BinaryMask::empty(w, h)?,
                window: None,
                coarse_mask,
                fine_patch: None,
                status: PipelineStatus::NoRoi,
            });
        }

        let window = roi_window(&coarse_mask, crop_w, crop_h)?;
        let patch = crop(img, &window)?;
        let fine_ctx = SegmentContext {
            image_id,
            stage: Stage::Fine,
            source_dims: (w, h),
            window: Some(window),
        };
        let fine_prob = self.fine.call(&fine_ctx, &patch)?;
        let fine_bin = binarize(&fine_prob, self.cfg.threshold)?;
        let final_mask = paste_back(&coarse_mask, &fine_bin, window.offset)?;

        Ok(PipelineResult {
            final_mask,
            window: Some(window),
            coarse_mask,
            fine_patch: Some(fine_bin),
            status: PipelineStatus::Ok,
        })
    }
}
