//! Geometric fault classifier for segmented valve masks.
//!
//! The mask is cleaned, split into the valve body and the long handle, and
//! three landmarks are located: the body's topmost point `p1`, the topmost
//! point `p2` of the body half that does not contain `p1`, and the handle
//! centre `pH`. A valve is faulty when `p1` lies between `pH` and `p2`
//! horizontally, or when `p1` and `p2` sit on the same row.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::morphology::{bbox_of, centroid_of, largest_component, open, StructuringElement};
use crate::raster::{BinaryMask, Point};

/// Which side of the valve's bounding box holds the body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Ground-truth style label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Faulty,
    Normal,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Faulty => "faulty",
            Label::Normal => "normal",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faulty" => Ok(Label::Faulty),
            "normal" => Ok(Label::Normal),
            other => Err(Error::invalid(format!("unknown label `{other}`"))),
        }
    }
}

/// Classifier output label. `Review` marks masks the geometry could not be
/// read from; it is reported as faulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictLabel {
    Faulty,
    Normal,
    Review,
}

impl VerdictLabel {
    /// Label used for scoring: review counts as faulty.
    pub fn operational(self) -> Label {
        match self {
            VerdictLabel::Normal => Label::Normal,
            VerdictLabel::Faulty | VerdictLabel::Review => Label::Faulty,
        }
    }
}

impl fmt::Display for VerdictLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VerdictLabel::Faulty => "faulty",
            VerdictLabel::Normal => "normal",
            VerdictLabel::Review => "review",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    BetweenHandle,
    FlatTop,
    NormalTilt,
    DegenerateMask,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::BetweenHandle => "between-handle",
            Rule::FlatTop => "flat-top",
            Rule::NormalTilt => "normal-tilt",
            Rule::DegenerateMask => "degenerate-mask",
        })
    }
}

/// Body/handle partition of the processed mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValveComponents {
    pub body: BinaryMask,
    pub handle: BinaryMask,
    /// First column of the right half of the valve's bounding box.
    pub split_x: usize,
    pub body_side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValveGeometry {
    pub p1: Point,
    pub p2: Point,
    pub p_handle: Point,
    /// Column splitting the whole valve into body and handle halves.
    pub split_x: usize,
    /// Column splitting the body into its two halves.
    pub b_split_x: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Verdict {
    pub label: VerdictLabel,
    pub rule: Rule,
    pub geometry: Option<ValveGeometry>,
}

impl Verdict {
    pub fn review() -> Self {
        Verdict {
            label: VerdictLabel::Review,
            rule: Rule::DegenerateMask,
            geometry: None,
        }
    }
}

/// Everything computed on the way to a verdict, for rendering and audit.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub processed: BinaryMask,
    pub components: ValveComponents,
    pub b1_columns: Range<usize>,
    pub b2_columns: Range<usize>,
    pub geometry: ValveGeometry,
    pub verdict: Verdict,
}

fn degenerate(msg: impl Into<String>) -> Error {
    Error::DegenerateMask(msg.into())
}

/// Splits the columns of a bounding box into two equally wide halves; the
/// left half gets the smaller share on odd widths.
fn halves(x0: usize, w: usize) -> (Range<usize>, Range<usize>) {
    let split = x0 + w / 2;
    (x0..split, split..x0 + w)
}

fn restrict_columns(mask: &BinaryMask, cols: &Range<usize>) -> BinaryMask {
    BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        cols.contains(&x) && mask.get(x, y)
    })
    .expect("shape preserved")
}

/// Opening with a 3x3 square followed by largest-component selection.
pub fn process_mask(s: &BinaryMask) -> Result<BinaryMask> {
    process_mask_with(s, StructuringElement::default())
}

pub fn process_mask_with(s: &BinaryMask, se: StructuringElement) -> Result<BinaryMask> {
    let opened = open(s, se);
    largest_component(&opened).map_err(|_| degenerate("no foreground left after opening"))
}

/// Splits the valve's bounding box into two equally wide halves and picks the
/// half with the lower foreground-to-area ratio as the handle. Ties assign
/// the handle to the left half.
pub fn find_valve_components(m: &BinaryMask) -> Result<ValveComponents> {
    let bb = bbox_of(m).map_err(|_| degenerate("empty mask"))?;
    let (left, right) = halves(bb.x0, bb.w);
    let count = |cols: &Range<usize>| -> usize {
        (bb.y0..=bb.y1())
            .map(|y| cols.clone().filter(|&x| m.get(x, y)).count())
            .sum()
    };
    let (nl, nr) = (count(&left), count(&right));
    if nl == 0 || nr == 0 {
        return Err(degenerate("a bounding-box half has no foreground"));
    }
    // Compare nl / (wl * h) with nr / (wr * h) without division.
    let (wl, wr) = (left.len(), right.len());
    let handle_left = nl * wr <= nr * wl;
    let (handle_cols, body_cols, body_side) = if handle_left {
        (left, right.clone(), Side::Right)
    } else {
        (right.clone(), left, Side::Left)
    };
    Ok(ValveComponents {
        body: restrict_columns(m, &body_cols),
        handle: restrict_columns(m, &handle_cols),
        split_x: right.start,
        body_side,
    })
}

/// Foreground pixel with minimal `y` among `columns`; ties go to minimal `x`.
pub fn find_topmost(mask: &BinaryMask, columns: Range<usize>) -> Result<Point> {
    let cols = columns.start.min(mask.width())..columns.end.min(mask.width());
    for y in 0..mask.height() {
        if let Some(x) = cols.clone().find(|&x| mask.get(x, y)) {
            return Ok(Point::new(x, y));
        }
    }
    Err(degenerate(format!(
        "no foreground in columns {}..{}",
        columns.start, columns.end
    )))
}

/// Splits the body's bounding box at its mid-column. Returns `(b1, b2)`
/// where `b1` holds `p1`.
pub fn divide_two_halves(body: &BinaryMask, p1: Point) -> Result<(Range<usize>, Range<usize>)> {
    let bb = bbox_of(body).map_err(|_| degenerate("empty body"))?;
    let (left, right) = halves(bb.x0, bb.w);
    if left.contains(&p1.x) {
        Ok((left, right))
    } else {
        Ok((right, left))
    }
}

/// Runs the full landmark chain and returns every intermediate result.
pub fn analyze(s: &BinaryMask) -> Result<Analysis> {
    let processed = process_mask(s)?;
    let components = find_valve_components(&processed)?;
    let p_handle = centroid_of(&components.handle).map_err(|_| degenerate("empty handle"))?;
    let p1 = find_topmost(&components.body, 0..s.width())?;
    let (b1, b2) = divide_two_halves(&components.body, p1)?;
    let p2 = find_topmost(&components.body, b2.clone())?;
    let geometry = ValveGeometry {
        p1,
        p2,
        p_handle,
        split_x: components.split_x,
        b_split_x: b1.start.max(b2.start),
    };
    let verdict = decide(geometry);
    Ok(Analysis {
        processed,
        components,
        b1_columns: b1,
        b2_columns: b2,
        geometry,
        verdict,
    })
}

/// The decision rule on located landmarks.
pub fn decide(g: ValveGeometry) -> Verdict {
    let dx = |a: usize, b: usize| a as i64 - b as i64;
    let product = dx(g.p1.x, g.p_handle.x) * dx(g.p1.x, g.p2.x);
    let (label, rule) = if product <= 0 {
        (VerdictLabel::Faulty, Rule::BetweenHandle)
    } else if g.p2.y == g.p1.y {
        (VerdictLabel::Faulty, Rule::FlatTop)
    } else {
        (VerdictLabel::Normal, Rule::NormalTilt)
    };
    Verdict {
        label,
        rule,
        geometry: Some(g),
    }
}

/// Classifies a segmented mask. Masks whose geometry cannot be read come
/// back as `Review` with the degenerate-mask rule.
pub fn classify(s: &BinaryMask) -> Verdict {
    match analyze(s) {
        Ok(a) => a.verdict,
        Err(_) => Verdict::review(),
    }
}
