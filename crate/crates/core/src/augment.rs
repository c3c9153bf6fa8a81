//! Mask-consistent affine augmentation of image/mask pairs.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{same_shape, BinaryMask, GrayImage};

/// Sampling ranges. Fractions are relative to the image size (shift) or
/// unitless (shear factor, zoom deviation from 1). Flip flags enable a random
/// flip with probability one half.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentSpec {
    pub rotation_max_deg: f64,
    pub shift_frac: f64,
    pub shear_frac: f64,
    pub zoom_frac: f64,
    pub hflip: bool,
    pub vflip: bool,
    /// Intensity written where the transform pulls from outside the frame.
    pub fill: f32,
    pub seed: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            rotation_max_deg: 30.0,
            shift_frac: 0.2,
            shear_frac: 0.2,
            zoom_frac: 0.2,
            hflip: true,
            vflip: true,
            fill: 0.0,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// No-op ranges; handy as a base for single-parameter specs.
    pub fn identity() -> Self {
        AugmentSpec {
            rotation_max_deg: 0.0,
            shift_frac: 0.0,
            shear_frac: 0.0,
            zoom_frac: 0.0,
            hflip: false,
            vflip: false,
            fill: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("shift", self.shift_frac),
            ("shear", self.shear_frac),
            ("zoom", self.zoom_frac),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} fraction {v} outside [0, 1)"
                )));
            }
        }
        if !(0.0..180.0).contains(&self.rotation_max_deg) {
            return Err(Error::invalid(format!(
                "rotation range {} outside [0, 180)",
                self.rotation_max_deg
            )));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::invalid(format!("fill {} outside [0, 1]", self.fill)));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One concrete transform drawn from an [`AugmentSpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    pub shear: f64,
    pub zoom: f64,
    /// Shift in pixels.
    pub shift_x: f64,
    pub shift_y: f64,
    pub hflip: bool,
    pub vflip: bool,
}

fn symmetric(rng: &mut impl Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}

impl AffineParams {
    pub fn sample(spec: &AugmentSpec, width: usize, height: usize, rng: &mut impl Rng) -> Self {
        AffineParams {
            rotation_deg: symmetric(rng, spec.rotation_max_deg),
            shear: symmetric(rng, spec.shear_frac),
            zoom: 1.0 + symmetric(rng, spec.zoom_frac),
            shift_x: symmetric(rng, spec.shift_frac) * width as f64,
            shift_y: symmetric(rng, spec.shift_frac) * height as f64,
            hflip: spec.hflip && rng.random_bool(0.5),
            vflip: spec.vflip && rng.random_bool(0.5),
        }
    }

    /// Forward linear part: zoom * shear * rotation * flip, applied about the
    /// image centre, followed by the shift.
    fn forward(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let fx = if self.hflip { -1.0 } else { 1.0 };
        let fy = if self.vflip { -1.0 } else { 1.0 };
        // rotation * flip
        let rf = [[c * fx, -s * fy], [s * fx, c * fy]];
        // shear * (rotation * flip)
        let sh = [
            [
                rf[0][0] + self.shear * rf[1][0],
                rf[0][1] + self.shear * rf[1][1],
            ],
            rf[1],
        ];
        [
            [self.zoom * sh[0][0], self.zoom * sh[0][1]],
            [self.zoom * sh[1][0], self.zoom * sh[1][1]],
        ]
    }

    /// Maps an output pixel back to its source coordinate.
    fn inverse_mapper(&self, width: usize, height: usize) -> impl Fn(usize, usize) -> (f64, f64) {
        let a = self.forward();
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = [
            [a[1][1] / det, -a[0][1] / det],
            [-a[1][0] / det, a[0][0] / det],
        ];
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let (tx, ty) = (self.shift_x, self.shift_y);
        move |x, y| {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            (
                inv[0][0] * dx + inv[0][1] * dy + cx,
                inv[1][0] * dx + inv[1][1] * dy + cy,
            )
        }
    }

    pub fn apply_image(&self, img: &GrayImage, fill: f32) -> GrayImage {
        let (w, h) = (img.width(), img.height());
        let map = self.inverse_mapper(w, h);
        GrayImage::from_fn(w, h, |x, y| {
            let (sx, sy) = map(x, y);
            if sx < -0.5 || sy < -0.5 || sx > w as f64 - 0.5 || sy > h as f64 - 0.5 {
                return fill;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            top * (1.0 - fy) + bot * fy
        })
        .expect("shape preserved")
    }

    pub fn apply_mask(&self, mask: &BinaryMask) -> BinaryMask {
        let (w, h) = (mask.width(), mask.height());
        let map = self.inverse_mapper(w, h);
        BinaryMask::from_fn(w, h, |x, y| {
            let (sx, sy) = map(x, y);
            let (rx, ry) = (sx.round(), sy.round());
            if rx < 0.0 || ry < 0.0 || rx >= w as f64 || ry >= h as f64 {
                return false;
            }
            mask.get(rx as usize, ry as usize)
        })
        .expect("shape preserved")
    }
}

/// Samples one transform and applies it to both rasters: bilinear for the
/// image, nearest neighbour for the mask.
pub fn augment_pair(
    img: &GrayImage,
    mask: &BinaryMask,
    spec: &AugmentSpec,
    rng: &mut impl Rng,
) -> Result<(GrayImage, BinaryMask, AffineParams)> {
    spec.validate()?;
    same_shape(img, mask)?;
    let params = AffineParams::sample(spec, img.width(), img.height(), rng);
    Ok((
        params.apply_image(img, spec.fill),
        params.apply_mask(mask),
        params,
    ))
}
