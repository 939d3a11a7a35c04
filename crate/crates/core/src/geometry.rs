//! Geometric primitives shared by hole placement and the metrics.
//!
//! Coordinates are continuous pixel coordinates with the origin at the
//! top-left corner. A point `(x, y)` belongs to grid cell
//! `(floor(x), floor(y))`; points lying exactly on the far border
//! (`x == width` or `y == height`) are clamped onto the last cell, and
//! anything outside `[0, width] x [0, height]` is off-grid.

use serde::{Deserialize, Serialize};

/// A 2D point in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_squared(self, other: Self) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Self) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scaled(self, sx: f64, sy: f64) -> Self {
        Self::new(self.x * sx, self.y * sy)
    }
}

/// A line segment; `score` is absent for ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub p1: Point,
    pub p2: Point,
    pub score: Option<f64>,
}

impl LineSegment {
    pub const fn new(p1: Point, p2: Point) -> Self {
        Self { p1, p2, score: None }
    }

    pub fn from_coords(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new(Point::new(x1, y1), Point::new(x2, y2))
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn scaled(self, sx: f64, sy: f64) -> Self {
        Self {
            p1: self.p1.scaled(sx, sy),
            p2: self.p2.scaled(sx, sy),
            score: self.score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Junction {
    pub position: Point,
    pub score: Option<f64>,
}

impl Junction {
    pub const fn new(position: Point) -> Self {
        Self {
            position,
            score: None,
        }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Self::new(Point::new(x, y))
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }
}

/// Line segments and junctions of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct WireframeAnnotation {
    pub width: u32,
    pub height: u32,
    pub lines: Vec<LineSegment>,
    pub junctions: Vec<Junction>,
}

impl WireframeAnnotation {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            lines: Vec::new(),
            junctions: Vec::new(),
        }
    }

    /// Returns the first coordinate that is non-finite or lies outside
    /// `[0, width] x [0, height]`.
    pub fn first_out_of_bounds(&self) -> Option<Point> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        let inside = |p: Point| p.is_finite() && (0.0..=w).contains(&p.x) && (0.0..=h).contains(&p.y);
        self.lines
            .iter()
            .flat_map(|l| [l.p1, l.p2])
            .chain(self.junctions.iter().map(|j| j.position))
            .find(|p| !inside(*p))
    }

    /// Rescales every coordinate into a `width x height` frame.
    pub fn rescaled(&self, width: u32, height: u32) -> Self {
        let sx = f64::from(width) / f64::from(self.width);
        let sy = f64::from(height) / f64::from(self.height);
        Self {
            width,
            height,
            lines: self.lines.iter().map(|l| l.scaled(sx, sy)).collect(),
            junctions: self
                .junctions
                .iter()
                .map(|j| Junction {
                    position: j.position.scaled(sx, sy),
                    score: j.score,
                })
                .collect(),
        }
    }
}

/// Anything that can answer "is this grid cell a hole pixel".
pub trait Occupancy {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    /// `x < width` and `y < height` are guaranteed by callers.
    fn is_hole(&self, x: usize, y: usize) -> bool;
}

/// Binary occupancy grid, `true` = hole pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskBitmap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl MaskBitmap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    /// Returns `None` if `bits.len() != width * height`.
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn hole_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Hole pixels over total pixels; 0 for an empty grid.
    pub fn hole_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.hole_count() as f64 / self.bits.len() as f64
        }
    }
}

impl Occupancy for MaskBitmap {
    fn width(&self) -> usize {
        self.width
    }

    fn height(&self) -> usize {
        self.height
    }

    fn is_hole(&self, x: usize, y: usize) -> bool {
        self.get(x, y)
    }
}

/// Integer cell coordinate along one axis of length `n`.
///
/// Values in `[0, n]` map to `min(floor(v), n - 1)`; anything else keeps its
/// (possibly negative or too large) floor so rasterization can clip.
fn axis_cell(v: f64, n: usize) -> i64 {
    let f = v.floor();
    if v >= 0.0 && v <= n as f64 && n > 0 {
        (f as i64).min(n as i64 - 1)
    } else {
        f as i64
    }
}

/// Grid cell containing `p`, or `None` when `p` is off-grid.
pub fn cell_of(p: Point, width: usize, height: usize) -> Option<(usize, usize)> {
    if !p.is_finite() || width == 0 || height == 0 {
        return None;
    }
    if p.x < 0.0 || p.y < 0.0 || p.x > width as f64 || p.y > height as f64 {
        return None;
    }
    Some((
        axis_cell(p.x, width) as usize,
        axis_cell(p.y, height) as usize,
    ))
}

pub fn segment_length(seg: &LineSegment) -> f64 {
    seg.p1.distance(seg.p2)
}

/// Bresenham walk between integer cells, endpoints included.
///
/// The endpoints are put in lexicographic order first so the walk, and
/// therefore the pixel set, does not depend on segment direction.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (start, end) = if a <= b { (a, b) } else { (b, a) };
    let (x0, y0) = start;
    let (x1, y1) = end;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((x, y));
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

/// 8-connected pixels covered by `seg`, clipped to a `width x height` grid.
pub fn rasterize_segment(seg: &LineSegment, width: usize, height: usize) -> Vec<(usize, usize)> {
    if width == 0 || height == 0 || !seg.p1.is_finite() || !seg.p2.is_finite() {
        return Vec::new();
    }
    let a = (axis_cell(seg.p1.x, width), axis_cell(seg.p1.y, height));
    let b = (axis_cell(seg.p2.x, width), axis_cell(seg.p2.y, height));
    let (w, h) = (width as i64, height as i64);
    let off_grid = a.0.max(b.0) < 0 || a.1.max(b.1) < 0 || a.0.min(b.0) >= w || a.1.min(b.1) >= h;
    if off_grid {
        return Vec::new();
    }
    bresenham(a, b)
        .into_iter()
        .filter(|&(x, y)| x >= 0 && y >= 0 && x < w && y < h)
        .map(|(x, y)| (x as usize, y as usize))
        .collect()
}

pub fn point_in_mask<M: Occupancy + ?Sized>(mask: &M, p: Point) -> bool {
    cell_of(p, mask.width(), mask.height()).is_some_and(|(x, y)| mask.is_hole(x, y))
}

pub fn segment_mask_overlap<M: Occupancy + ?Sized>(seg: &LineSegment, mask: &M) -> usize {
    rasterize_segment(seg, mask.width(), mask.height())
        .into_iter()
        .filter(|&(x, y)| mask.is_hole(x, y))
        .count()
}

/// Lines with both endpoints inside the hole.
pub fn count_contained_segments<M: Occupancy + ?Sized>(ann: &WireframeAnnotation, mask: &M) -> usize {
    ann.lines
        .iter()
        .filter(|l| point_in_mask(mask, l.p1) && point_in_mask(mask, l.p2))
        .count()
}

pub fn count_contained_junctions<M: Occupancy + ?Sized>(ann: &WireframeAnnotation, mask: &M) -> usize {
    ann.junctions
        .iter()
        .filter(|j| point_in_mask(mask, j.position))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn seg(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment {
        LineSegment::from_coords(x1, y1, x2, y2)
    }

    fn as_set(v: Vec<(usize, usize)>) -> BTreeSet<(usize, usize)> {
        v.into_iter().collect()
    }

    #[test]
    fn lengths() {
        assert_eq!(segment_length(&seg(0.0, 0.0, 3.0, 4.0)), 5.0);
        assert_eq!(segment_length(&seg(2.0, 2.0, 2.0, 2.0)), 0.0);
        assert_eq!(segment_length(&seg(0.0, 0.0, 10.0, 0.0)), 10.0);
    }

    #[test]
    fn raster_examples() {
        let h = rasterize_segment(&seg(0.0, 0.0, 3.0, 0.0), 8, 8);
        assert_eq!(as_set(h), [(0, 0), (1, 0), (2, 0), (3, 0)].into_iter().collect());
        assert_eq!(rasterize_segment(&seg(0.0, 0.0, 0.0, 0.0), 8, 8), vec![(0, 0)]);
        let d = rasterize_segment(&seg(0.0, 0.0, 2.0, 2.0), 8, 8);
        assert_eq!(as_set(d), [(0, 0), (1, 1), (2, 2)].into_iter().collect());
    }

    #[test]
    fn raster_clips_and_drops_off_grid() {
        assert!(rasterize_segment(&seg(-10.0, -10.0, -2.0, -5.0), 8, 8).is_empty());
        assert!(rasterize_segment(&seg(20.0, 1.0, 30.0, 1.0), 8, 8).is_empty());
        let clipped = rasterize_segment(&seg(-3.0, 1.0, 3.0, 1.0), 8, 8);
        assert_eq!(as_set(clipped), (0..=3).map(|x| (x, 1)).collect());
        // the far border belongs to the last cell
        assert_eq!(rasterize_segment(&seg(8.0, 8.0, 8.0, 8.0), 8, 8), vec![(7, 7)]);
    }

    #[test]
    fn containment() {
        let empty = MaskBitmap::empty(8, 8);
        let full = MaskBitmap::full(8, 8);
        assert!(!point_in_mask(&empty, Point::new(3.0, 3.0)));
        assert!(point_in_mask(&full, Point::new(3.0, 3.0)));
        assert!(!point_in_mask(&full, Point::new(-1.0, -1.0)));
        assert!(!point_in_mask(&full, Point::new(8.5, 1.0)));
        assert!(point_in_mask(&full, Point::new(8.0, 8.0)));
        assert!(!point_in_mask(&full, Point::new(f64::NAN, 1.0)));
    }

    #[test]
    fn overlap_examples() {
        let outside = MaskBitmap::from_fn(8, 8, |_, y| y == 7);
        assert_eq!(segment_mask_overlap(&seg(0.0, 0.0, 7.0, 0.0), &outside), 0);
        let s = seg(0.0, 0.0, 5.0, 3.0);
        let n = rasterize_segment(&s, 8, 8).len();
        assert_eq!(segment_mask_overlap(&s, &MaskBitmap::full(8, 8)), n);
        let cols = MaskBitmap::from_fn(8, 8, |x, y| y == 0 && x <= 3);
        assert_eq!(segment_mask_overlap(&seg(0.0, 0.0, 7.0, 0.0), &cols), 4);
    }

    fn sample_annotation() -> WireframeAnnotation {
        let mut ann = WireframeAnnotation::new(8, 8);
        ann.lines = vec![
            seg(0.5, 0.5, 2.5, 0.5),
            seg(2.5, 0.5, 2.5, 2.5),
            seg(2.5, 2.5, 0.5, 2.5),
            seg(0.5, 2.5, 0.5, 0.5),
            seg(2.5, 2.5, 7.5, 7.5),
        ];
        ann.junctions = vec![
            Junction::at(0.5, 0.5),
            Junction::at(2.5, 0.5),
            Junction::at(2.5, 2.5),
        ];
        ann
    }

    #[test]
    fn contained_counts() {
        let ann = sample_annotation();
        assert_eq!(count_contained_segments(&ann, &MaskBitmap::empty(8, 8)), 0);
        assert_eq!(count_contained_segments(&ann, &MaskBitmap::full(8, 8)), 5);
        assert_eq!(count_contained_junctions(&ann, &MaskBitmap::empty(8, 8)), 0);
        assert_eq!(count_contained_junctions(&ann, &MaskBitmap::full(8, 8)), 3);

        // only the top-left 3x3 block: the diagonal line has one endpoint out
        let block = MaskBitmap::from_fn(8, 8, |x, y| x < 3 && y < 3);
        assert_eq!(count_contained_segments(&ann, &block), 4);
        assert_eq!(count_contained_junctions(&ann, &block), 3);

        // boundary junction counted iff its cell bit is set
        let mut ann2 = WireframeAnnotation::new(8, 8);
        ann2.junctions = vec![Junction::at(3.0, 1.0)];
        let left = MaskBitmap::from_fn(8, 8, |x, _| x < 3);
        let right = MaskBitmap::from_fn(8, 8, |x, _| x >= 3);
        assert_eq!(count_contained_junctions(&ann2, &left), 0);
        assert_eq!(count_contained_junctions(&ann2, &right), 1);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -4.0f64..36.0
    }

    proptest! {
        #[test]
        fn raster_is_order_invariant(x1 in coord(), y1 in coord(), x2 in coord(), y2 in coord()) {
            let a = as_set(rasterize_segment(&seg(x1, y1, x2, y2), 32, 32));
            let b = as_set(rasterize_segment(&seg(x2, y2, x1, y1), 32, 32));
            prop_assert_eq!(a, b);
        }

        #[test]
        fn raster_bounds(x1 in 0.0f64..32.0, y1 in 0.0f64..32.0, x2 in 0.0f64..32.0, y2 in 0.0f64..32.0) {
            let s = seg(x1, y1, x2, y2);
            let px = rasterize_segment(&s, 32, 32);
            let set = as_set(px.clone());
            prop_assert_eq!(set.len(), px.len());
            prop_assert!(set.contains(&cell_of(s.p1, 32, 32).unwrap()));
            prop_assert!(set.contains(&cell_of(s.p2, 32, 32).unwrap()));
            prop_assert!(px.len() as f64 <= segment_length(&s).ceil() + 1.0);
            prop_assert!((segment_length(&s) - segment_length(&seg(x2, y2, x1, y1))).abs() == 0.0);
        }

        #[test]
        fn overlap_and_containment_monotone(
            x1 in 0.0f64..16.0, y1 in 0.0f64..16.0, x2 in 0.0f64..16.0, y2 in 0.0f64..16.0,
            small in proptest::collection::vec(any::<bool>(), 256),
            extra in proptest::collection::vec(any::<bool>(), 256),
        ) {
            let s = seg(x1, y1, x2, y2);
            let a = MaskBitmap::from_bits(16, 16, small.clone()).unwrap();
            let grown: Vec<bool> = small.iter().zip(&extra).map(|(p, q)| *p || *q).collect();
            let b = MaskBitmap::from_bits(16, 16, grown).unwrap();
            let total = rasterize_segment(&s, 16, 16).len();
            prop_assert!(segment_mask_overlap(&s, &a) <= total);
            prop_assert!(segment_mask_overlap(&s, &a) <= segment_mask_overlap(&s, &b));
            prop_assert_eq!(segment_mask_overlap(&s, &MaskBitmap::full(16, 16)), total);
            prop_assert_eq!(segment_mask_overlap(&s, &MaskBitmap::empty(16, 16)), 0);
            let mut ann = WireframeAnnotation::new(16, 16);
            ann.lines = vec![s, seg(x2, y1, x1, y2)];
            prop_assert!(count_contained_segments(&ann, &a) <= count_contained_segments(&ann, &b));
            prop_assert!(count_contained_segments(&ann, &b) <= 2);
        }
    }
}
