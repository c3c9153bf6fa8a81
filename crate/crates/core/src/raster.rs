//! Raster types shared by every stage: grayscale images, probability masks
//! and binary masks, plus resampling and crop/paste geometry.
//!
//! Coordinates put the origin at the top-left pixel; `x` grows to the right
//! and `y` grows downward, so "topmost" always means smallest `y`.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

/// Pixel position, `x` = column, `y` = row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point {
    pub x: usize,
    pub y: usize,
}

impl Point {
    pub const fn new(x: usize, y: usize) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned box; `(x0, y0)` is the inclusive top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!("empty box {w}x{h}")));
        }
        Ok(BBox { x0, y0, w, h })
    }

    /// Inclusive last column.
    pub fn x1(&self) -> usize {
        self.x0 + self.w - 1
    }

    /// Inclusive last row.
    pub fn y1(&self) -> usize {
        self.y0 + self.h - 1
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1() && p.y >= self.y0 && p.y <= self.y1()
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.x0 + self.w <= width && self.y0 + self.h <= height
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }
}

/// ROI rectangle in full-resolution coordinates together with the offset
/// that maps crop-space pixels back onto the source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CropWindow {
    pub source_box: BBox,
    pub offset: Point,
}

impl CropWindow {
    pub fn new(source_box: BBox) -> Self {
        CropWindow {
            source_box,
            offset: Point::new(source_box.x0, source_box.y0),
        }
    }

    pub fn width(&self) -> usize {
        self.source_box.w
    }

    pub fn height(&self) -> usize {
        self.source_box.h
    }
}

/// Common access to the three raster kinds.
pub trait Raster: Sized {
    type Pixel: Copy;

    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn pixels(&self) -> &[Self::Pixel];
    fn from_pixels(width: usize, height: usize, data: Vec<Self::Pixel>) -> Result<Self>;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn at(&self, x: usize, y: usize) -> Self::Pixel {
        self.pixels()[y * self.width() + x]
    }
}

fn check_shape(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::invalid(format!(
            "raster data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

fn check_unit_interval(data: &[f32], what: &str) -> Result<()> {
    if let Some((i, v)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::invalid(format!(
            "{what} value {v} at index {i} is outside [0, 1]"
        )));
    }
    Ok(())
}

macro_rules! float_raster {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f32>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
                check_shape(width, height, data.len())?;
                check_unit_interval(&data, $what)?;
                Ok($name {
                    width,
                    height,
                    data,
                })
            }

            pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
                Self::new(width, height, vec![value; width * height])
            }

            /// Builds a raster from a per-pixel function; values are clamped into [0, 1].
            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> f32,
            ) -> Result<Self> {
                check_shape(width, height, width * height)?;
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        let v = f(x, y);
                        data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
                    }
                }
                Ok($name {
                    width,
                    height,
                    data,
                })
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn get(&self, x: usize, y: usize) -> f32 {
                self.data[y * self.width + x]
            }

            pub fn data(&self) -> &[f32] {
                &self.data
            }

            /// Reads an 8-bit grayscale PNG, scaling values by 1/255.
            pub fn load_png(path: &Path) -> Result<Self> {
                let img = image::open(path)
                    .map_err(|source| Error::Image {
                        path: path.to_path_buf(),
                        source,
                    })?
                    .into_luma8();
                let (w, h) = (img.width() as usize, img.height() as usize);
                let data = img
                    .into_raw()
                    .into_iter()
                    .map(|v| v as f32 / 255.0)
                    .collect();
                Self::new(w, h, data)
            }

            /// Writes an 8-bit grayscale PNG (values scaled by 255 and rounded).
            pub fn save_png(&self, path: &Path) -> Result<()> {
                let bytes: Vec<u8> = self
                    .data
                    .iter()
                    .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                    .collect();
                write_luma_png(path, self.width, self.height, bytes)
            }
        }

        impl Raster for $name {
            type Pixel = f32;

            fn width(&self) -> usize {
                self.width
            }
            fn height(&self) -> usize {
                self.height
            }
            fn pixels(&self) -> &[f32] {
                &self.data
            }
            fn from_pixels(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
                Self::new(width, height, data)
            }
        }
    };
}

float_raster!(GrayImage, "intensity");
float_raster!(ProbMask, "probability");

/// Foreground/background raster; `true` is foreground (rendered white).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_shape(width, height, data.len())?;
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        check_shape(width, height, width * height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    /// Mask with exactly the listed pixels set.
    pub fn from_points(width: usize, height: usize, points: &[Point]) -> Result<Self> {
        let mut m = Self::empty(width, height)?;
        for &p in points {
            if p.x >= width || p.y >= height {
                return Err(Error::invalid(format!(
                    "point ({}, {}) outside {width}x{height}",
                    p.x, p.y
                )));
            }
            m.set(p.x, p.y, true);
        }
        Ok(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    /// Foreground pixels in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = Point> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| Point::new(i % w, i / w))
    }

    /// Mirror about the vertical axis: `(x, y) -> (w - 1 - x, y)`.
    pub fn flip_horizontal(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.get(self.width - 1 - x, y)
        })
        .expect("same shape")
    }

    /// Pointwise AND; shapes must agree.
    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        same_shape(self, other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a && *b)
            .collect();
        BinaryMask::new(self.width, self.height, data)
    }

    /// Pixels set in `self` are also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    pub fn to_prob(&self) -> ProbMask {
        ProbMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    /// Reads a PNG mask leniently: any 8-bit luma value >= 128 is foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
        Self::new(w, h, data)
    }

    /// Writes a 0/255 PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.data.iter().map(|&v| if v { 255 } else { 0 }).collect();
        write_luma_png(path, self.width, self.height, bytes)
    }
}

impl Raster for BinaryMask {
    type Pixel = bool;

    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn pixels(&self) -> &[bool] {
        &self.data
    }
    fn from_pixels(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        Self::new(width, height, data)
    }
}

pub(crate) fn same_shape<A: Raster, B: Raster>(a: &A, b: &B) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            expected: a.dims(),
            actual: b.dims(),
        });
    }
    Ok(())
}

pub(crate) fn encode_luma_png(width: usize, height: usize, bytes: Vec<u8>) -> Vec<u8> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .expect("buffer length matches dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

fn write_luma_png(path: &Path, width: usize, height: usize, bytes: Vec<u8>) -> Result<()> {
    atomic_write(path, &encode_luma_png(width, height, bytes))
}

fn check_target(new_w: usize, new_h: usize) -> Result<()> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid(format!(
            "resize target must be positive, got {new_w}x{new_h}"
        )));
    }
    Ok(())
}

/// Source coordinate sampled by output index `i` under pixel-center alignment.
fn source_coord(i: usize, src_len: usize, dst_len: usize) -> f64 {
    (i as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

fn bilinear(src: &[f32], sw: usize, sh: usize, new_w: usize, new_h: usize) -> Vec<f32> {
    let axis = |n: usize, src_len: usize, dst_len: usize| -> Vec<(usize, usize, f32)> {
        (0..n)
            .map(|i| {
                let s = source_coord(i, src_len, dst_len).clamp(0.0, (src_len - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src_len - 1);
                (lo, hi, (s - lo as f64) as f32)
            })
            .collect()
    };
    let xs = axis(new_w, sw, new_w);
    let ys = axis(new_h, sh, new_h);
    let mut out = Vec::with_capacity(new_w * new_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    out
}

fn nearest_index(i: usize, src_len: usize, dst_len: usize) -> usize {
    (((i as f64 + 0.5) * src_len as f64 / dst_len as f64).floor() as usize).min(src_len - 1)
}

/// Bilinear resize with pixel-center alignment.
pub fn resize_image(img: &GrayImage, new_w: usize, new_h: usize) -> Result<GrayImage> {
    check_target(new_w, new_h)?;
    let data = bilinear(&img.data, img.width, img.height, new_w, new_h);
    GrayImage::new(new_w, new_h, data)
}

/// Mask resampling: nearest neighbour for binary masks, bilinear for
/// probability masks.
pub trait ResizeMask: Sized {
    fn resized(&self, new_w: usize, new_h: usize) -> Result<Self>;
}

impl ResizeMask for BinaryMask {
    fn resized(&self, new_w: usize, new_h: usize) -> Result<Self> {
        check_target(new_w, new_h)?;
        let xs: Vec<usize> = (0..new_w)
            .map(|i| nearest_index(i, self.width, new_w))
            .collect();
        let ys: Vec<usize> = (0..new_h)
            .map(|i| nearest_index(i, self.height, new_h))
            .collect();
        BinaryMask::from_fn(new_w, new_h, |x, y| self.get(xs[x], ys[y]))
    }
}

impl ResizeMask for ProbMask {
    fn resized(&self, new_w: usize, new_h: usize) -> Result<Self> {
        check_target(new_w, new_h)?;
        let data = bilinear(&self.data, self.width, self.height, new_w, new_h);
        ProbMask::new(new_w, new_h, data)
    }
}

pub fn resize_mask<M: ResizeMask>(mask: &M, new_w: usize, new_h: usize) -> Result<M> {
    mask.resized(new_w, new_h)
}

/// Foreground iff probability >= threshold.
pub fn binarize(p: &ProbMask, threshold: f32) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "threshold {threshold} must lie strictly inside (0, 1)"
        )));
    }
    BinaryMask::new(
        p.width,
        p.height,
        p.data.iter().map(|&v| v >= threshold).collect(),
    )
}

/// Exact pixel copy of the window region.
pub fn crop<R: Raster>(raster: &R, window: &CropWindow) -> Result<R> {
    let b = window.source_box;
    if b.w == 0 || b.h == 0 || !b.fits_in(raster.width(), raster.height()) {
        return Err(Error::invalid(format!(
            "crop window {b:?} exceeds {}x{} raster",
            raster.width(),
            raster.height()
        )));
    }
    let src = raster.pixels();
    let mut data = Vec::with_capacity(b.area());
    for y in b.y0..b.y0 + b.h {
        let row = y * raster.width();
        data.extend_from_slice(&src[row + b.x0..row + b.x0 + b.w]);
    }
    R::from_pixels(b.w, b.h, data)
}

/// Places `patch` at `offset` on a background canvas of `canvas`'s size.
/// Everything outside the patch region comes out as background.
pub fn paste_back(canvas: &BinaryMask, patch: &BinaryMask, offset: Point) -> Result<BinaryMask> {
    if offset.x + patch.width > canvas.width || offset.y + patch.height > canvas.height {
        return Err(Error::invalid(format!(
            "{}x{} patch at ({}, {}) overflows {}x{} canvas",
            patch.width, patch.height, offset.x, offset.y, canvas.width, canvas.height
        )));
    }
    let mut out = BinaryMask::empty(canvas.width, canvas.height)?;
    for y in 0..patch.height {
        let dst = (offset.y + y) * canvas.width + offset.x;
        out.data[dst..dst + patch.width]
            .copy_from_slice(&patch.data[y * patch.width..(y + 1) * patch.width]);
    }
    Ok(out)
}

/// Fixed-size window centred on the foreground bounding box, translated
/// (never shrunk) to stay inside the image. The extent is clamped only when
/// the image itself is smaller than the requested crop.
pub fn roi_window(mask: &BinaryMask, crop_w: usize, crop_h: usize) -> Result<CropWindow> {
    if crop_w == 0 || crop_h == 0 {
        return Err(Error::invalid("crop size must be positive"));
    }
    let bb = crate::morphology::bbox_of(mask)?;
    let cw = crop_w.min(mask.width);
    let ch = crop_h.min(mask.height);
    let place = |lo: usize, hi: usize, size: usize, limit: usize| -> usize {
        let centre = (lo + hi) / 2;
        centre.saturating_sub(size / 2).min(limit - size)
    };
    let x0 = place(bb.x0, bb.x1(), cw, mask.width);
    let y0 = place(bb.y0, bb.y1(), ch, mask.height);
    Ok(CropWindow::new(BBox::new(x0, y0, cw, ch)?))
}
