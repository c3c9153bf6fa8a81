mod common;

use std::path::{Path, PathBuf};

use proptest::prelude::*;
use valve_inspect_core::dataset::{
    kfold, split, split_counts, Manifest, ManifestEntry, OffsetTable, Split, SplitFractions,
};
use valve_inspect_core::detector::Label;
use valve_inspect_core::eval::{dice, iou};
use valve_inspect_core::morphology::{
    bbox_of, connected_components, dilate, erode, largest_component, open, Connectivity,
    StructuringElement,
};
use valve_inspect_core::raster::{
    binarize, crop, paste_back, resize_mask, roi_window, BBox, BinaryMask, CropWindow, Point,
    ProbMask, Raster,
};

use common::{brute_dilate, brute_erode, flood_fill_labels};

fn mask_strategy(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<bool>(), w * h)
            .prop_map(move |d| BinaryMask::new(w, h, d).unwrap())
    })
}

fn nonempty_mask(max_side: usize) -> impl Strategy<Value = BinaryMask> {
    mask_strategy(max_side).prop_filter("needs foreground", |m| !m.is_empty())
}

fn mask_pair(max_side: usize) -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        (
            proptest::collection::vec(any::<bool>(), w * h),
            proptest::collection::vec(any::<bool>(), w * h),
        )
            .prop_map(move |(a, b)| {
                (
                    BinaryMask::new(w, h, a).unwrap(),
                    BinaryMask::new(w, h, b).unwrap(),
                )
            })
    })
}

fn prob_strategy(max_side: usize) -> impl Strategy<Value = ProbMask> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        proptest::collection::vec(0.0f32..=1.0, w * h)
            .prop_map(move |d| ProbMask::new(w, h, d).unwrap())
    })
}

fn square() -> impl Strategy<Value = StructuringElement> {
    prop_oneof![Just(1usize), Just(3), Just(5), Just(7)]
        .prop_map(|s| StructuringElement::square(s).unwrap())
}

fn chebyshev_distance_to(m: &BinaryMask, x: usize, y: usize) -> usize {
    m.foreground()
        .map(|p| p.x.abs_diff(x).max(p.y.abs_diff(y)))
        .min()
        .unwrap_or(usize::MAX)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn binarize_is_monotone_in_threshold(p in prob_strategy(24), t1 in 0.01f32..0.99, t2 in 0.01f32..0.99) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = binarize(&p, lo).unwrap();
        let b = binarize(&p, hi).unwrap();
        prop_assert!(b.is_subset_of(&a));
    }

    #[test]
    fn crop_then_paste_keeps_only_the_window(m in mask_strategy(40), fx in 0.0f64..1.0, fy in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0) {
        let w = 1 + (fw * (m.width() - 1) as f64) as usize;
        let h = 1 + (fh * (m.height() - 1) as f64) as usize;
        let x0 = (fx * (m.width() - w) as f64) as usize;
        let y0 = (fy * (m.height() - h) as f64) as usize;
        let win = CropWindow::new(BBox::new(x0, y0, w, h).unwrap());
        let patch = crop(&m, &win).unwrap();
        prop_assert_eq!(patch.dims(), (w, h));
        let back = paste_back(&m, &patch, win.offset).unwrap();
        for y in 0..m.height() {
            for x in 0..m.width() {
                let inside = win.source_box.contains(Point::new(x, y));
                prop_assert_eq!(back.get(x, y), inside && m.get(x, y));
            }
        }
        prop_assert_eq!(crop(&back, &win).unwrap(), patch);
    }

    #[test]
    fn nearest_upsampling_preserves_emptiness(m in mask_strategy(16), sx in 1usize..4, sy in 1usize..4, ex in 0usize..5, ey in 0usize..5) {
        let (w, h) = (m.width() * sx + ex, m.height() * sy + ey);
        let up = resize_mask(&m, w, h).unwrap();
        prop_assert_eq!(up.count() == 0, m.count() == 0);
    }

    #[test]
    fn down_then_up_stays_near_the_original(m in mask_strategy(40), dw in 1usize..40, dh in 1usize..40) {
        let (dw, dh) = (dw.min(m.width()), dh.min(m.height()));
        let round = resize_mask(&resize_mask(&m, dw, dh).unwrap(), m.width(), m.height()).unwrap();
        let band = (m.width().div_ceil(dw)).max(m.height().div_ceil(dh)) + 1;
        for p in round.foreground() {
            prop_assert!(chebyshev_distance_to(&m, p.x, p.y) <= band);
        }
    }

    #[test]
    fn erode_and_dilate_match_brute_force(m in mask_strategy(24), se in square()) {
        prop_assert_eq!(erode(&m, se), brute_erode(&m, se.size()));
        prop_assert_eq!(dilate(&m, se), brute_dilate(&m, se.size()));
    }

    #[test]
    fn erosion_and_dilation_bracket_the_mask(m in mask_strategy(24), se in square()) {
        prop_assert!(erode(&m, se).is_subset_of(&m));
        prop_assert!(m.is_subset_of(&dilate(&m, se)));
    }

    #[test]
    fn opening_is_anti_extensive_and_idempotent(m in mask_strategy(24), se in square()) {
        let once = open(&m, se);
        prop_assert!(once.is_subset_of(&m));
        prop_assert_eq!(open(&once, se), once);
    }

    #[test]
    fn labeling_matches_flood_fill(m in mask_strategy(24), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let l = connected_components(&m, conn);
        let (labels, areas) = flood_fill_labels(&m, eight);
        prop_assert_eq!(&l.labels, &labels);
        prop_assert_eq!(&l.areas, &areas);
    }

    #[test]
    fn largest_component_is_a_maximal_component(m in nonempty_mask(24)) {
        let big = largest_component(&m).unwrap();
        let (labels, areas) = flood_fill_labels(&m, true);
        let max_area = *areas.iter().max().unwrap();
        prop_assert_eq!(big.count(), max_area);
        let first = big.foreground().next().unwrap();
        let id = labels[first.y * m.width() + first.x];
        for y in 0..m.height() {
            for x in 0..m.width() {
                prop_assert_eq!(big.get(x, y), labels[y * m.width() + x] == id);
            }
        }
        // Ties resolve to the component seen first in raster order.
        let first_max = areas.iter().position(|&a| a == max_area).unwrap() as u32 + 1;
        prop_assert_eq!(id, first_max);
    }

    #[test]
    fn roi_window_is_inside_and_covers_small_boxes(m in nonempty_mask(48), cw in 1usize..64, ch in 1usize..64) {
        let win = roi_window(&m, cw, ch).unwrap();
        let b = win.source_box;
        prop_assert!(b.fits_in(m.width(), m.height()));
        prop_assert_eq!((b.w, b.h), (cw.min(m.width()), ch.min(m.height())));
        let bb = bbox_of(&m).unwrap();
        // Integer centring can shift an exactly fitting even box by one pixel.
        if bb.w < b.w && bb.h < b.h {
            prop_assert!(b.contains(Point::new(bb.x0, bb.y0)));
            prop_assert!(b.contains(Point::new(bb.x1(), bb.y1())));
        }
    }

    #[test]
    fn overlap_metrics_agree((a, b) in mask_pair(32)) {
        let d = dice(&a, &b).unwrap();
        let j = iou(&a, &b).unwrap();
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() <= 1e-12);
        prop_assert!(d >= j);
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(j, iou(&b, &a).unwrap());
        let (i, na, nb) = common::brute_overlap(&a, &b);
        let union = na + nb - i;
        let (bd, bj) = if union == 0 {
            (1.0, 1.0)
        } else {
            (2.0 * i as f64 / (na + nb) as f64, i as f64 / union as f64)
        };
        prop_assert!((d - bd).abs() <= 1e-12 && (j - bj).abs() <= 1e-12);
    }
}

fn manifest_of(n: usize) -> Manifest {
    Manifest::new(
        (0..n)
            .map(|i| ManifestEntry::new(format!("s{i}"), format!("img/{i}.png")))
            .collect(),
    )
    .unwrap()
}

fn fractions() -> impl Strategy<Value = SplitFractions> {
    (0u32..=10, 0u32..=10)
        .prop_filter("sum", |(a, b)| a + b <= 10)
        .prop_map(|(a, b)| SplitFractions {
            train: a as f64 / 10.0,
            val: b as f64 / 10.0,
            test: (10 - a - b) as f64 / 10.0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn split_is_a_partition(n in 3usize..200, f in fractions(), seed in any::<u64>()) {
        let m = manifest_of(n);
        let out = split(&m, f, seed).unwrap();
        let counts = split_counts(n, f).unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        prop_assert_eq!(out.ids().collect::<Vec<_>>(), m.ids().collect::<Vec<_>>());
        for (k, s) in Split::ALL.iter().enumerate() {
            let got = out.entries().iter().filter(|e| e.split == Some(*s)).count();
            prop_assert_eq!(got, counts[k]);
            let share = [f.train, f.val, f.test][k];
            if share > 0.0 {
                prop_assert!(got > 0);
            } else {
                prop_assert_eq!(got, 0);
            }
        }
        prop_assert_eq!(split(&m, f, seed).unwrap(), out);
    }

    #[test]
    fn kfold_balances_folds(n in 2usize..120, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = kfold(&manifest_of(n), k, seed).unwrap();
        let mut sizes = vec![0usize; k];
        for f in folds {
            sizes[f] += 1;
        }
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
    }

    #[test]
    fn manifest_text_round_trips(
        rows in proptest::collection::vec(
            ("[a-z][a-z0-9_]{0,8}", "[a-z]{1,6}/[a-z0-9]{1,6}\\.png", any::<Option<bool>>(), any::<Option<u8>>(), any::<bool>()),
            0..20,
        )
    ) {
        let mut seen = std::collections::HashSet::new();
        let entries: Vec<ManifestEntry> = rows
            .into_iter()
            .filter(|r| seen.insert(r.0.clone()))
            .map(|(id, image, label, split, has_mask)| ManifestEntry {
                mask: has_mask.then(|| PathBuf::from(format!("masks/{id}.png"))),
                id,
                image: PathBuf::from(image),
                label: label.map(|b| if b { Label::Normal } else { Label::Faulty }),
                split: split.map(|s| Split::ALL[s as usize % 3]),
            })
            .collect();
        let m = Manifest::new(entries).unwrap();
        let text = m.render(Path::new(""));
        let back = Manifest::parse(&text, Path::new("m.tsv")).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.render(Path::new("")), text);
    }

    #[test]
    fn offsets_round_trip(rows in proptest::collection::btree_map("[a-z0-9_]{1,10}", (0usize..5000, 0usize..5000, 1usize..600, 1usize..600), 0..30)) {
        let mut t = OffsetTable::new();
        for (id, (x, y, w, h)) in &rows {
            t.insert(id.clone(), CropWindow::new(BBox::new(*x, *y, *w, *h).unwrap())).unwrap();
        }
        let text = t.render();
        let back = OffsetTable::parse(&text, Path::new("offsets.tsv")).unwrap();
        prop_assert_eq!(back.render(), text);
        for (id, (x, y, w, h)) in &rows {
            let b = back.get(id).unwrap().source_box;
            prop_assert_eq!((b.x0, b.y0, b.w, b.h), (*x, *y, *w, *h));
        }
    }
}

#[test]
fn saved_files_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let m = split(&manifest_of(25), SplitFractions::EIGHTY_TEN_TEN, 3).unwrap();
    let mut t = OffsetTable::new();
    t.insert("b", CropWindow::new(BBox::new(1, 2, 3, 4).unwrap()))
        .unwrap();
    t.insert("a", CropWindow::new(BBox::new(0, 0, 9, 9).unwrap()))
        .unwrap();
    let (mp, op) = (dir.path().join("m.tsv"), dir.path().join("o.tsv"));
    m.save(&mp).unwrap();
    t.save(&op).unwrap();
    let (m1, o1) = (std::fs::read(&mp).unwrap(), std::fs::read(&op).unwrap());
    Manifest::parse(&String::from_utf8(m1.clone()).unwrap(), &mp)
        .unwrap()
        .save(&mp)
        .unwrap();
    OffsetTable::load(&op).unwrap().save(&op).unwrap();
    assert_eq!(std::fs::read(&mp).unwrap(), m1);
    assert_eq!(std::fs::read(&op).unwrap(), o1);
    assert!(String::from_utf8(o1)
        .unwrap()
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("a\t"));
}
