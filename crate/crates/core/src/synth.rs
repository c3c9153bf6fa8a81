//! Parametric synthetic valve scenes with exact ground truth.
//!
//! A valve is a vertical handle bar plus a body attached near the handle's
//! top that runs sideways at a signed tilt. The body's top edge is a
//! straight line; its columns are vertical and its thickness grows linearly
//! from the attachment to the free end, which keeps the handle's half of
//! the valve's bounding box the sparser one.
//!
//! Positive tilt raises the free end, so the body slopes down toward the
//! handle: that valve is normal. Zero or negative tilt is faulty.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{split, Manifest, ManifestEntry, SplitFractions};
use crate::detector::{Label, Side};
use crate::error::{Error, Result};
use crate::morphology::{dilate, StructuringElement};
use crate::raster::{BinaryMask, GrayImage, Point};

pub const MIN_MARGIN: i64 = 8;
pub const MAX_TILT_DEG: f64 = 60.0;
pub const MIN_CONTRAST: f32 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandleSpec {
    /// Centre column and top row of the bar.
    pub anchor: Point,
    pub length: usize,
    pub thickness: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodySpec {
    /// Rows below the handle's top where the body's top edge meets it.
    pub attach_depth: usize,
    /// Horizontal run from the handle's centre column to the free end.
    pub length: usize,
    /// Vertical thickness at the attachment.
    pub thickness: f64,
    /// Vertical thickness at the free end.
    pub tip_thickness: f64,
    pub tilt_deg: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensities {
    pub background: f32,
    pub valve: f32,
    pub noise_sigma: f32,
}

impl Default for Intensities {
    fn default() -> Self {
        Intensities {
            background: 0.2,
            valve: 0.8,
            noise_sigma: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub image_w: usize,
    pub image_h: usize,
    pub handle: HandleSpec,
    pub body: BodySpec,
    pub intensities: Intensities,
    /// Number of distractor blobs drawn away from the valve.
    pub clutter: usize,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub image: GrayImage,
    pub truth_mask: BinaryMask,
    pub label: Label,
    pub spec: SceneSpec,
}

/// Inclusive pixel extent `(x_min, y_min, x_max, y_max)`.
type Extent = (i64, i64, i64, i64);

impl SceneSpec {
    pub fn label(&self) -> Label {
        if self.body.tilt_deg > 0.0 {
            Label::Normal
        } else {
            Label::Faulty
        }
    }

    fn handle_columns(&self) -> (i64, i64) {
        let t = self.handle.thickness as i64;
        let x0 = self.handle.anchor.x as i64 - t / 2;
        (x0, x0 + t - 1)
    }

    /// Top edge row (real-valued) and thickness at horizontal run `u`.
    fn body_profile(&self, u: f64) -> (f64, f64) {
        let b = &self.body;
        let top =
            (self.handle.anchor.y + b.attach_depth) as f64 - u * b.tilt_deg.to_radians().tan();
        let thick = b.thickness + (b.tip_thickness - b.thickness) * u / b.length as f64;
        (top, thick)
    }

    fn body_column(&self, u: usize) -> i64 {
        let ax = self.handle.anchor.x as i64;
        match self.body.side {
            Side::Right => ax + u as i64,
            Side::Left => ax - u as i64,
        }
    }

    fn extent(&self) -> Extent {
        let (hx0, hx1) = self.handle_columns();
        let hy0 = self.handle.anchor.y as i64;
        let hy1 = hy0 + self.handle.length as i64 - 1;
        let (mut x0, mut y0, mut x1, mut y1) = (hx0, hy0, hx1, hy1);
        for u in [0, self.body.length] {
            let x = self.body_column(u);
            let (top, thick) = self.body_profile(u as f64);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(top.ceil() as i64);
            y1 = y1.max((top + thick).floor() as i64);
        }
        (x0, y0, x1, y1)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.body;
        let i = &self.intensities;
        let bad = |m: String| Err(Error::invalid(m));
        if self.image_w == 0 || self.image_h == 0 {
            return bad("image dimensions must be positive".into());
        }
        if !b.tilt_deg.is_finite() || b.tilt_deg.abs() > MAX_TILT_DEG {
            return bad(format!(
                "tilt {} exceeds +/-{MAX_TILT_DEG} degrees",
                b.tilt_deg
            ));
        }
        if self.handle.thickness == 0 || b.length == 0 {
            return bad("handle thickness and body length must be positive".into());
        }
        if !(b.thickness >= 1.0 && b.tip_thickness >= 1.0) {
            return bad("body thickness must be at least one pixel".into());
        }
        if (self.handle.length as f64) < b.attach_depth as f64 + b.thickness {
            return bad("handle too short to carry the body at its attachment".into());
        }
        for v in [i.background, i.valve] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("intensity {v} outside [0, 1]"));
            }
        }
        if (i.valve - i.background).abs() < MIN_CONTRAST {
            return bad(format!("valve/background contrast below {MIN_CONTRAST}"));
        }
        if !(i.noise_sigma.is_finite() && i.noise_sigma >= 0.0) {
            return bad("noise sigma must be finite and non-negative".into());
        }
        let (x0, y0, x1, y1) = self.extent();
        let (w, h) = (self.image_w as i64, self.image_h as i64);
        if x0 < MIN_MARGIN || y0 < MIN_MARGIN || x1 > w - 1 - MIN_MARGIN || y1 > h - 1 - MIN_MARGIN
        {
            return bad(format!(
                "valve extent ({x0},{y0})-({x1},{y1}) leaves less than {MIN_MARGIN} px margin in {w}x{h}"
            ));
        }
        Ok(())
    }

    /// Rasterizes handle and body.
    pub fn render_mask(&self) -> Result<BinaryMask> {
        let mut m = BinaryMask::empty(self.image_w, self.image_h)?;
        let (hx0, hx1) = self.handle_columns();
        let hy0 = self.handle.anchor.y;
        for y in hy0..hy0 + self.handle.length {
            for x in hx0..=hx1 {
                m.set(x as usize, y, true);
            }
        }
        for u in 0..=self.body.length {
            let x = self.body_column(u) as usize;
            let (top, thick) = self.body_profile(u as f64);
            let y_start = top.ceil().max(0.0) as usize;
            let y_end = ((top + thick).floor() as usize).min(self.image_h - 1);
            for y in y_start..=y_end {
                m.set(x, y, true);
            }
        }
        Ok(m)
    }
}

/// Renders a scene: background, valve, clutter, then clamped Gaussian noise.
pub fn generate(spec: &SceneSpec) -> Result<GeneratedSample> {
    spec.validate()?;
    let truth = spec.render_mask()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let inten = spec.intensities;
    let mut pixels: Vec<f32> = truth
        .data()
        .iter()
        .map(|&v| if v { inten.valve } else { inten.background })
        .collect();

    // Distractors stay at least a few pixels away from the valve.
    let keep_out = dilate(&truth, StructuringElement::square(9)?);
    let (w, h) = (spec.image_w as i64, spec.image_h as i64);
    for _ in 0..spec.clutter {
        let level =
            inten.background + (inten.valve - inten.background) * rng.random_range(0.25..0.45);
        for _attempt in 0..100 {
            let r = rng.random_range(3..=8i64);
            if w <= 2 * r + 2 || h <= 2 * r + 2 {
                break;
            }
            let cx = rng.random_range(r..w - r);
            let cy = rng.random_range(r..h - r);
            let disc: Vec<(usize, usize)> = (cy - r..=cy + r)
                .flat_map(|y| (cx - r..=cx + r).map(move |x| (x, y)))
                .filter(|(x, y)| (x - cx).pow(2) + (y - cy).pow(2) <= r * r)
                .map(|(x, y)| (x as usize, y as usize))
                .collect();
            if disc.iter().any(|&(x, y)| keep_out.get(x, y)) {
                continue;
            }
            for (x, y) in disc {
                pixels[y * spec.image_w + x] = level;
            }
            break;
        }
    }

    if inten.noise_sigma > 0.0 {
        let noise = Normal::new(0.0f32, inten.noise_sigma).expect("validated sigma");
        for p in &mut pixels {
            *p = (*p + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }

    Ok(GeneratedSample {
        image: GrayImage::new(spec.image_w, spec.image_h, pixels)?,
        truth_mask: truth,
        label: spec.label(),
        spec: *spec,
    })
}

/// Parameters for drawing random scenes.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub image_w: usize,
    pub image_h: usize,
    /// Range of |tilt| in degrees; the sign follows the drawn label.
    pub tilt_range: (f64, f64),
    pub faulty_fraction: f64,
    pub clutter: usize,
    pub intensities: Intensities,
    /// Split written into the manifest; `None` leaves splits empty.
    pub split: Option<SplitFractions>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            image_w: 480,
            image_h: 400,
            tilt_range: (2.0, 35.0),
            faulty_fraction: 0.5,
            clutter: 3,
            intensities: Intensities::default(),
            split: Some(SplitFractions::EIGHTY_TEN_TEN),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.tilt_range;
        if !(0.0 <= lo && lo <= hi && hi <= MAX_TILT_DEG) {
            return Err(Error::invalid(format!(
                "tilt range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= {MAX_TILT_DEG}"
            )));
        }
        if !(0.0..=1.0).contains(&self.faulty_fraction) {
            return Err(Error::invalid(format!(
                "faulty fraction {} outside [0, 1]",
                self.faulty_fraction
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer, used to derive independent per-sample seeds.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one random scene with the requested label.
pub fn random_scene(cfg: &CorpusConfig, label: Label, seed: u64) -> Result<SceneSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = cfg.tilt_range;
    let magnitude = if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    };
    let tilt_deg = match label {
        Label::Normal => magnitude.max(f64::MIN_POSITIVE),
        Label::Faulty => -magnitude,
    };
    let thickness = rng.random_range(14.0..=18.0);
    let mut spec = SceneSpec {
        image_w: cfg.image_w,
        image_h: cfg.image_h,
        handle: HandleSpec {
            anchor: Point::new(0, 0),
            length: rng.random_range(90..=115),
            thickness: rng.random_range(6..=9),
        },
        body: BodySpec {
            attach_depth: rng.random_range(0..=6),
            length: rng.random_range(150..=175),
            thickness,
            tip_thickness: thickness + rng.random_range(34.0..=42.0),
            tilt_deg,
            side: if rng.random_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            },
        },
        intensities: cfg.intensities,
        clutter: cfg.clutter,
        rng_seed: rng.random(),
    };

    // Place the anchor so the whole valve keeps the margin.
    let (x0, y0, x1, y1) = spec.extent();
    let (w, h) = (cfg.image_w as i64, cfg.image_h as i64);
    let ax_lo = MIN_MARGIN - x0;
    let ax_hi = w - 1 - MIN_MARGIN - x1;
    let ay_lo = MIN_MARGIN - y0;
    let ay_hi = h - 1 - MIN_MARGIN - y1;
    if ax_lo > ax_hi || ay_lo > ay_hi {
        return Err(Error::invalid(format!(
            "a {}x{} valve does not fit a {w}x{h} image",
            x1 - x0 + 1,
            y1 - y0 + 1
        )));
    }
    spec.handle.anchor = Point::new(
        rng.random_range(ax_lo..=ax_hi) as usize,
        rng.random_range(ay_lo..=ay_hi) as usize,
    );
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct CorpusSample {
    pub id: String,
    pub sample: GeneratedSample,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub samples: Vec<CorpusSample>,
    pub manifest: Manifest,
}

pub fn sample_id(index: usize) -> String {
    format!("valve_{index:05}")
}

/// Generates `n` scenes with `round(n * faulty_fraction)` faulty ones. The
/// manifest references `images/<id>.png` and `masks/<id>.png`.
pub fn generate_corpus(n: usize, seed: u64, cfg: &CorpusConfig) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be at least 1"));
    }
    cfg.validate()?;
    let n_faulty = ((n as f64 * cfg.faulty_fraction).round() as usize).min(n);
    let mut labels: Vec<Label> = (0..n)
        .map(|i| {
            if i < n_faulty {
                Label::Faulty
            } else {
                Label::Normal
            }
        })
        .collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));

    let mut samples = Vec::with_capacity(n);
    let mut entries = Vec::with_capacity(n);
    for (i, label) in labels.into_iter().enumerate() {
        let spec = random_scene(cfg, label, mix_seed(seed, i as u64))?;
        let sample = generate(&spec)?;
        let id = sample_id(i);
        let mut entry = ManifestEntry::new(&id, format!("images/{id}.png"));
        entry.mask = Some(format!("masks/{id}.png").into());
        entry.label = Some(sample.label);
        entries.push(entry);
        samples.push(CorpusSample { id, sample });
    }
    let mut manifest = Manifest::new(entries)?;
    if let Some(f) = cfg.split {
        if n >= 3 {
            manifest = split(&manifest, f, seed)?;
        }
    }
    Ok(Corpus { samples, manifest })
}

impl Corpus {
    /// Writes images, masks and `manifest.tsv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for s in &self.samples {
            s.sample
                .image
                .save_png(&dir.join(format!("images/{}.png", s.id)))?;
            s.sample
                .truth_mask
                .save_png(&dir.join(format!("masks/{}.png", s.id)))?;
        }
        let text = self.manifest.render(Path::new(""));
        crate::fsutil::atomic_write(&dir.join("manifest.tsv"), text.as_bytes())
    }
}
