//! Annotated PNGs: the image in grey, the cleaned mask tinted, split columns
//! as vertical lines and the landmarks as crosses.

use std::io::Cursor;
use std::path::Path;

use anyhow::{Context, Result};
use image::{Rgb, RgbImage};
use valve_inspect_core::detector::{Analysis, VerdictLabel};
use valve_inspect_core::raster::Point;
use valve_inspect_core::{BinaryMask, GrayImage};

const MASK_TINT: [u8; 3] = [0, 170, 255];
const SPLIT: Rgb<u8> = Rgb([255, 215, 0]);
const BODY_SPLIT: Rgb<u8> = Rgb([255, 0, 255]);
const P1: Rgb<u8> = Rgb([255, 40, 40]);
const P2: Rgb<u8> = Rgb([60, 90, 255]);
const HANDLE: Rgb<u8> = Rgb([40, 220, 40]);
const ARM: i64 = 5;

fn verdict_border(label: VerdictLabel) -> Rgb<u8> {
    match label {
        VerdictLabel::Normal => Rgb([40, 200, 40]),
        VerdictLabel::Faulty => Rgb([230, 30, 30]),
        VerdictLabel::Review => Rgb([255, 150, 0]),
    }
}

fn base(image: Option<&GrayImage>, mask: &BinaryMask) -> RgbImage {
    let (w, h) = (mask.width(), mask.height());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let g = image
            .filter(|i| i.width() == w && i.height() == h)
            .map_or(0.0, |i| i.get(x, y));
        let g = (g * 255.0).round() as u8;
        if mask.get(x, y) {
            Rgb(MASK_TINT.map(|c| ((c as u16 + g as u16) / 2) as u8))
        } else {
            Rgb([g, g, g])
        }
    })
}

fn vline(img: &mut RgbImage, x: usize, color: Rgb<u8>) {
    if (x as u32) < img.width() {
        for y in (0..img.height()).step_by(2) {
            img.put_pixel(x as u32, y, color);
        }
    }
}

fn cross(img: &mut RgbImage, p: Point, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for d in -ARM..=ARM {
        for (x, y) in [(p.x as i64 + d, p.y as i64), (p.x as i64, p.y as i64 + d)] {
            if (0..w).contains(&x) && (0..h).contains(&y) {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn border(img: &mut RgbImage, color: Rgb<u8>) {
    let (w, h) = (img.width(), img.height());
    for t in 0..2.min(w).min(h) {
        for x in 0..w {
            img.put_pixel(x, t, color);
            img.put_pixel(x, h - 1 - t, color);
        }
        for y in 0..h {
            img.put_pixel(t, y, color);
            img.put_pixel(w - 1 - t, y, color);
        }
    }
}

pub fn render(
    image: Option<&GrayImage>,
    mask: &BinaryMask,
    analysis: Option<&Analysis>,
    label: VerdictLabel,
) -> RgbImage {
    let shown = analysis.map_or(mask, |a| &a.processed);
    let mut img = base(image, shown);
    if let Some(a) = analysis {
        let g = a.geometry;
        vline(&mut img, g.split_x, SPLIT);
        vline(&mut img, g.b_split_x, BODY_SPLIT);
        cross(&mut img, g.p_handle, HANDLE);
        cross(&mut img, g.p1, P1);
        cross(&mut img, g.p2, P2);
    }
    border(&mut img, verdict_border(label));
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .context("encoding overlay")?;
    valve_inspect_core::atomic_write(path, buf.get_ref())
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_overlay_keeps_size_and_marks_review() {
        let m = BinaryMask::empty(20, 10).unwrap();
        let img = render(None, &m, None, VerdictLabel::Review);
        assert_eq!(img.dimensions(), (20, 10));
        assert_eq!(*img.get_pixel(0, 0), verdict_border(VerdictLabel::Review));
        assert_eq!(*img.get_pixel(10, 5), Rgb([0, 0, 0]));
    }
}
