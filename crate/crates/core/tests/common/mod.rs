//! Brute-force reference implementations shared by the integration tests.
//! They deliberately avoid the crate's own algorithms.

#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use valve_inspect_core::BinaryMask;

pub fn random_mask(rng: &mut impl Rng, max_side: usize) -> BinaryMask {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let density: f64 = rng.random_range(0.05..0.95);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density)).unwrap()
}

/// Per-pixel erosion: every pixel of the centred square must be in bounds
/// and foreground.
pub fn brute_erode(m: &BinaryMask, size: usize) -> BinaryMask {
    let r = (size / 2) as i64;
    let (w, h) = (m.width() as i64, m.height() as i64);
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h || !m.get(nx as usize, ny as usize) {
                    return false;
                }
            }
        }
        true
    })
    .unwrap()
}

pub fn brute_dilate(m: &BinaryMask, size: usize) -> BinaryMask {
    let r = (size / 2) as i64;
    let (w, h) = (m.width() as i64, m.height() as i64);
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        for dy in -r..=r {
            for dx in -r..=r {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as usize, ny as usize) {
                    return true;
                }
            }
        }
        false
    })
    .unwrap()
}

/// Breadth-first flood fill; ids assigned in raster-scan order of each
/// component's first pixel.
pub fn flood_fill_labels(m: &BinaryMask, eight: bool) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (m.width(), m.height());
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let offsets: Vec<(i64, i64)> = if eight {
        (-1..=1)
            .flat_map(|dy| (-1..=1).map(move |dx| (dx, dy)))
            .filter(|&d| d != (0, 0))
            .collect()
    } else {
        vec![(1, 0), (-1, 0), (0, 1), (0, -1)]
    };
    for start in 0..w * h {
        if !m.data()[start] || labels[start] != 0 {
            continue;
        }
        areas.push(0);
        let id = areas.len() as u32;
        labels[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            *areas.last_mut().unwrap() += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.data()[j] && labels[j] == 0 {
                    labels[j] = id;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, areas)
}

/// Shifts foreground by `(dx, dy)`; pixels leaving the frame are dropped.
pub fn translate(m: &BinaryMask, dx: i64, dy: i64) -> BinaryMask {
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        let (sx, sy) = (x as i64 - dx, y as i64 - dy);
        sx >= 0
            && sy >= 0
            && sx < m.width() as i64
            && sy < m.height() as i64
            && m.get(sx as usize, sy as usize)
    })
    .unwrap()
}

/// Overlap counted pixel by pixel: (|X ∩ Y|, |X|, |Y|).
pub fn brute_overlap(x: &BinaryMask, y: &BinaryMask) -> (usize, usize, usize) {
    let mut c = (0, 0, 0);
    for yy in 0..x.height() {
        for xx in 0..x.width() {
            let (a, b) = (x.get(xx, yy), y.get(xx, yy));
            c.0 += (a && b) as usize;
            c.1 += a as usize;
            c.2 += b as usize;
        }
    }
    c
}
