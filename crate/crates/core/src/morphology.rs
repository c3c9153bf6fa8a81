//! Binary morphology and connected-component analysis.

use crate::error::{Error, Result};
use crate::raster::{BBox, BinaryMask, Point};

/// Square structuring element with an odd side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructuringElement {
    size: usize,
}

impl StructuringElement {
    pub fn square(size: usize) -> Result<Self> {
        if size == 0 || size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "structuring element size must be odd and >= 1, got {size}"
            )));
        }
        Ok(StructuringElement { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn radius(&self) -> usize {
        self.size / 2
    }
}

impl Default for StructuringElement {
    fn default() -> Self {
        StructuringElement { size: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// One-dimensional min (erode) or max (dilate) filter over a line of pixels.
/// Out-of-range neighbours read as background.
fn line_filter(src: &[bool], dst: &mut [bool], r: usize, erode: bool) {
    let n = src.len();
    // prefix[i] = number of foreground pixels in src[..i]
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &v in src {
        prefix.push(prefix.last().unwrap() + v as usize);
    }
    for (i, out) in dst.iter_mut().enumerate() {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        let ones = prefix[hi] - prefix[lo];
        *out = if erode {
            // The window must lie fully inside the line and be all foreground.
            i >= r && i + r < n && ones == 2 * r + 1
        } else {
            ones > 0
        };
    }
}

fn separable(mask: &BinaryMask, se: StructuringElement, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r = se.radius();
    let src = mask.data();
    let mut rows = vec![false; w * h];
    for y in 0..h {
        line_filter(
            &src[y * w..(y + 1) * w],
            &mut rows[y * w..(y + 1) * w],
            r,
            erode,
        );
    }
    let mut out = vec![false; w * h];
    let mut col = vec![false; h];
    let mut col_out = vec![false; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        line_filter(&col, &mut col_out, r, erode);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    BinaryMask::new(w, h, out).expect("shape preserved")
}

/// Foreground iff every pixel under the centred element is foreground.
pub fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    separable(mask, se, true)
}

/// Foreground iff any pixel under the centred element is foreground.
pub fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    separable(mask, se, false)
}

/// Erosion followed by dilation.
pub fn open(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Component labels in row-major first-pixel order: the component whose
/// first pixel appears earliest in a raster scan gets id 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub width: usize,
    pub height: usize,
    /// 0 = background, otherwise component id.
    pub labels: Vec<u32>,
    pub count: usize,
    /// `areas[id - 1]` is the pixel count of component `id`.
    pub areas: Vec<usize>,
}

impl ComponentLabeling {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn area(&self, id: u32) -> usize {
        self.areas[id as usize - 1]
    }

    pub fn component_mask(&self, id: u32) -> BinaryMask {
        BinaryMask::new(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == id).collect(),
        )
        .expect("shape preserved")
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // Keep the smaller provisional label as root.
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
}

/// Two-pass union-find labeling.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> ComponentLabeling {
    let (w, h) = (mask.width(), mask.height());
    let mut provisional = vec![0usize; w * h];
    let mut parent = vec![0usize];

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut neighbours = [0usize; 4];
            let mut k = 0;
            let mut push = |nx: usize, ny: usize| {
                let l = provisional[ny * w + nx];
                if l != 0 {
                    neighbours[k] = l;
                    k += 1;
                }
            };
            if x > 0 {
                push(x - 1, y);
            }
            if y > 0 {
                push(x, y - 1);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        push(x - 1, y - 1);
                    }
                    if x + 1 < w {
                        push(x + 1, y - 1);
                    }
                }
            }
            let label = if k == 0 {
                parent.push(parent.len());
                parent.len() - 1
            } else {
                let first = neighbours[0];
                for &n in &neighbours[1..k] {
                    union(&mut parent, first, n);
                }
                first
            };
            provisional[y * w + x] = label;
        }
    }

    // Resolve roots and renumber in first-appearance order.
    let mut remap = vec![0u32; parent.len()];
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    for (i, &p) in provisional.iter().enumerate() {
        if p == 0 {
            continue;
        }
        let root = find(&mut parent, p);
        if remap[root] == 0 {
            areas.push(0);
            remap[root] = areas.len() as u32;
        }
        let id = remap[root];
        labels[i] = id;
        areas[id as usize - 1] += 1;
    }

    ComponentLabeling {
        width: w,
        height: h,
        labels,
        count: areas.len(),
        areas,
    }
}

/// The largest 8-connected component; ties go to the component met first in
/// a row-major scan.
pub fn largest_component(mask: &BinaryMask) -> Result<BinaryMask> {
    let labeling = connected_components(mask, Connectivity::Eight);
    let mut best: Option<(u32, usize)> = None;
    for (i, &a) in labeling.areas.iter().enumerate() {
        if best.is_none_or(|(_, ba)| a > ba) {
            best = Some((i as u32 + 1, a));
        }
    }
    let (id, _) = best.ok_or(Error::NoForeground)?;
    Ok(labeling.component_mask(id))
}

/// Tight bounding box of all foreground pixels.
pub fn bbox_of(mask: &BinaryMask) -> Result<BBox> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for p in mask.foreground() {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if x0 == usize::MAX {
        return Err(Error::NoForeground);
    }
    BBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
}

/// Mean foreground coordinate, rounded half away from zero.
pub fn centroid_of(mask: &BinaryMask) -> Result<Point> {
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    for p in mask.foreground() {
        sx += p.x as u64;
        sy += p.y as u64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoForeground);
    }
    let round = |s: u64| (s as f64 / n as f64).round() as usize;
    Ok(Point::new(round(sx), round(sy)))
}
