//! Silhouette pools and hole placement.
//!
//! Silhouettes are grouped by their area relative to a 512x512 reference
//! frame into 1%-wide intervals, then placed onto an image frame either at
//! a uniformly random offset or through the avoid-isolation search, which
//! steers holes away from swallowing closed loops of the wireframe.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    cell_of, count_contained_junctions, count_contained_segments, rasterize_segment, segment_mask_overlap,
    MaskBitmap, Occupancy, WireframeAnnotation,
};
use crate::rng::{keyed_stream, StreamRng};

pub const REFERENCE_SIDE: usize = 512;
pub const REFERENCE_AREA: usize = REFERENCE_SIDE * REFERENCE_SIDE;
pub const NUM_INTERVALS: usize = 30;
/// Attempt budget of each avoid-isolation search stage.
pub const DEFAULT_MAX_ATTEMPTS: usize = 500;
pub const DEFAULT_CANDIDATES: usize = 10;
/// Probability of trying for a junction-free hole first.
const TYPE1_PROBABILITY_THRESHOLD: f64 = 0.8;

/// Tight axis-aligned bounding box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// An object silhouette cropped to its tight bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteEntry {
    /// Object pixels, `bbox.w x bbox.h`.
    pub bitmap: MaskBitmap,
    pub area: usize,
    /// Bounding box in the frame the silhouette was extracted from.
    pub bbox: BBox,
    /// `None` when the area falls outside every interval.
    pub interval: Option<usize>,
}

impl SilhouetteEntry {
    pub fn from_bitmap(source: &MaskBitmap) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0;
        for y in 0..source.height() {
            for x in 0..source.width() {
                if source.get(x, y) {
                    area += 1;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if area == 0 {
            return Self {
                bitmap: MaskBitmap::empty(0, 0),
                area: 0,
                bbox: BBox { x: 0, y: 0, w: 0, h: 0 },
                interval: None,
            };
        }
        let bbox = BBox {
            x: x0,
            y: y0,
            w: x1 - x0 + 1,
            h: y1 - y0 + 1,
        };
        let bitmap = MaskBitmap::from_fn(bbox.w, bbox.h, |x, y| source.get(x + x0, y + y0));
        Self {
            bitmap,
            area,
            bbox,
            interval: interval_for_area(area).ok(),
        }
    }

    pub fn area_fraction(&self) -> f64 {
        self.area as f64 / REFERENCE_AREA as f64
    }
}

/// Bounding box under 512 px on its long side and area under 30% of 512².
pub fn filter_silhouette(s: &SilhouetteEntry) -> bool {
    s.bbox.w.max(s.bbox.h) < REFERENCE_SIDE && (s.area as f64) < 0.3 * REFERENCE_AREA as f64
}

/// Interval index of a hole area measured against 512².
///
/// Interval 0 is (0.1%, 1%], interval `i >= 1` is (i%, (i+1)%].
pub fn interval_for_area(area: usize) -> Result<usize> {
    let fraction = area as f64 / REFERENCE_AREA as f64;
    // exact integer comparisons: area / R <= 1/1000
    if area * 1000 <= REFERENCE_AREA {
        return Err(Error::FractionTooSmall { fraction });
    }
    // smallest k with area / R <= k / 100
    let k = (area * 100).div_ceil(REFERENCE_AREA);
    let index = k.saturating_sub(1);
    if index >= NUM_INTERVALS {
        return Err(Error::FractionTooLarge { fraction });
    }
    Ok(index)
}

pub fn interval_of(s: &SilhouetteEntry) -> Result<usize> {
    interval_for_area(s.area)
}

/// `(low, high]` fraction bounds of an interval.
pub fn interval_bounds(interval: usize) -> (f64, f64) {
    let low = if interval == 0 { 0.001 } else { interval as f64 / 100.0 };
    (low, (interval + 1) as f64 / 100.0)
}

pub fn area_in_interval(area: usize, interval: usize) -> bool {
    interval_for_area(area).is_ok_and(|i| i == interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoleType {
    Type1,
    Type2,
    Type3,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    AvoidIsolation,
    Random,
}

impl std::str::FromStr for PlacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avoid-isolation" => Ok(Self::AvoidIsolation),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown placement mode `{other}`"))),
        }
    }
}

/// A silhouette translated onto a frame, answering occupancy queries
/// without materializing the full mask.
#[derive(Debug, Clone, Copy)]
pub struct PlacedSilhouette<'a> {
    pub silhouette: &'a SilhouetteEntry,
    pub offset: (usize, usize),
    pub frame: (usize, usize),
}

impl PlacedSilhouette<'_> {
    pub fn to_mask(&self) -> MaskBitmap {
        let mut mask = MaskBitmap::empty(self.frame.0, self.frame.1);
        let s = self.silhouette;
        for y in 0..s.bitmap.height() {
            for x in 0..s.bitmap.width() {
                if s.bitmap.get(x, y) {
                    mask.set(x + self.offset.0, y + self.offset.1, true);
                }
            }
        }
        mask
    }

    fn intersects(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> bool {
        let (ox, oy) = self.offset;
        let (w, h) = (self.silhouette.bitmap.width(), self.silhouette.bitmap.height());
        x1 >= ox && y1 >= oy && x0 < ox + w && y0 < oy + h
    }
}

impl Occupancy for PlacedSilhouette<'_> {
    fn width(&self) -> usize {
        self.frame.0
    }

    fn height(&self) -> usize {
        self.frame.1
    }

    fn is_hole(&self, x: usize, y: usize) -> bool {
        let (ox, oy) = self.offset;
        let bm = &self.silhouette.bitmap;
        x >= ox && y >= oy && x - ox < bm.width() && y - oy < bm.height() && bm.get(x - ox, y - oy)
    }
}

/// Hole classification from the geometric primitives alone.
///
/// Type3 is never returned here; it only comes out of the fallback search.
pub fn classify_hole<M: Occupancy + ?Sized>(ann: &WireframeAnnotation, mask: &M) -> HoleType {
    let junctions = count_contained_junctions(ann, mask);
    if junctions == 0 {
        if ann.lines.iter().any(|l| segment_mask_overlap(l, mask) > 0) {
            HoleType::Type1
        } else {
            HoleType::Invalid
        }
    } else if count_contained_segments(ann, mask) <= 1 {
        HoleType::Type2
    } else {
        HoleType::Invalid
    }
}

/// Per-placement statistics consumed by the placement search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HoleStats {
    pub contained_junctions: usize,
    pub contained_segments: usize,
    pub overlapping_lines: usize,
    /// Total rasterized length of every line that touches the hole.
    pub overlap_length: usize,
}

impl HoleStats {
    pub fn hole_type(&self) -> HoleType {
        if self.contained_junctions == 0 {
            if self.overlapping_lines > 0 {
                HoleType::Type1
            } else {
                HoleType::Invalid
            }
        } else if self.contained_segments <= 1 {
            HoleType::Type2
        } else {
            HoleType::Invalid
        }
    }
}

type Cell = (usize, usize);

/// Pre-rasterized wireframe for repeated placement queries.
struct SceneIndex {
    endpoints: Vec<(Option<Cell>, Option<Cell>)>,
    rasters: Vec<Vec<(usize, usize)>>,
    raster_bounds: Vec<Option<(usize, usize, usize, usize)>>,
    junctions: Vec<(usize, usize)>,
}

impl SceneIndex {
    fn new(ann: &WireframeAnnotation, frame: (usize, usize)) -> Self {
        let (w, h) = frame;
        let rasters: Vec<Vec<(usize, usize)>> = ann.lines.iter().map(|l| rasterize_segment(l, w, h)).collect();
        let raster_bounds = rasters
            .iter()
            .map(|r| {
                r.iter().fold(None, |acc: Option<(usize, usize, usize, usize)>, &(x, y)| {
                    Some(match acc {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    })
                })
            })
            .collect();
        Self {
            endpoints: ann
                .lines
                .iter()
                .map(|l| (cell_of(l.p1, w, h), cell_of(l.p2, w, h)))
                .collect(),
            rasters,
            raster_bounds,
            junctions: ann
                .junctions
                .iter()
                .filter_map(|j| cell_of(j.position, w, h))
                .collect(),
        }
    }

    fn stats(&self, hole: &PlacedSilhouette<'_>) -> HoleStats {
        let inside = |c: Option<(usize, usize)>| c.is_some_and(|(x, y)| hole.is_hole(x, y));
        let contained_junctions = self.junctions.iter().filter(|&&(x, y)| hole.is_hole(x, y)).count();
        let contained_segments = self
            .endpoints
            .iter()
            .filter(|(a, b)| inside(*a) && inside(*b))
            .count();
        let mut overlapping_lines = 0;
        let mut overlap_length = 0;
        for (raster, bounds) in self.rasters.iter().zip(&self.raster_bounds) {
            let Some((x0, y0, x1, y1)) = *bounds else { continue };
            if !hole.intersects(x0, y0, x1, y1) {
                continue;
            }
            if raster.iter().any(|&(x, y)| hole.is_hole(x, y)) {
                overlapping_lines += 1;
                overlap_length += raster.len();
            }
        }
        HoleStats {
            contained_junctions,
            contained_segments,
            overlapping_lines,
            overlap_length,
        }
    }
}

/// Outcome of placing one silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub offset: (usize, usize),
    pub frame: (usize, usize),
    pub hole_type: HoleType,
    /// The Type3 search ran because no Type2 placement was found.
    pub fallback: bool,
    /// Fallback ran and no attempt overlapped any line; `offset` is the
    /// last attempted placement.
    pub zero_overlap: bool,
}

impl Placement {
    pub fn place<'a>(&self, silhouette: &'a SilhouetteEntry) -> PlacedSilhouette<'a> {
        PlacedSilhouette {
            silhouette,
            offset: self.offset,
            frame: self.frame,
        }
    }

    pub fn to_mask(&self, silhouette: &SilhouetteEntry) -> MaskBitmap {
        self.place(silhouette).to_mask()
    }
}

/// `(contained segments, overlap length)` of one fallback attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FallbackAttempt {
    pub offset: (usize, usize),
    pub contained_segments: usize,
    pub overlap_length: usize,
}

fn random_offset<R: Rng + ?Sized>(s: &SilhouetteEntry, frame: (usize, usize), rng: &mut R) -> Result<(usize, usize)> {
    let (w, h) = (s.bitmap.width(), s.bitmap.height());
    if w > frame.0 || h > frame.1 || frame.0 == 0 || frame.1 == 0 {
        return Err(Error::NoPlacement {
            sil_w: w,
            sil_h: h,
            frame_w: frame.0,
            frame_h: frame.1,
        });
    }
    Ok((rng.random_range(0..=frame.0 - w), rng.random_range(0..=frame.1 - h)))
}

/// Translates the silhouette to a uniformly random on-frame offset.
pub fn random_place(s: &SilhouetteEntry, frame: (usize, usize), rng: &mut impl Rng) -> Result<MaskBitmap> {
    let offset = random_offset(s, frame, rng)?;
    Ok(PlacedSilhouette {
        silhouette: s,
        offset,
        frame,
    }
    .to_mask())
}

/// Avoid-isolation placement in the annotation's own frame.
pub fn avoid_isolation_place(
    s: &SilhouetteEntry,
    ann: &WireframeAnnotation,
    max_attempts: usize,
    rng: &mut impl Rng,
) -> Result<Placement> {
    avoid_isolation_trace(s, ann, max_attempts, rng, None)
}

/// Same as [`avoid_isolation_place`], recording every fallback attempt.
pub fn avoid_isolation_trace(
    s: &SilhouetteEntry,
    ann: &WireframeAnnotation,
    max_attempts: usize,
    rng: &mut impl Rng,
    trace: Option<&mut Vec<FallbackAttempt>>,
) -> Result<Placement> {
    let frame = (ann.width as usize, ann.height as usize);
    let index = SceneIndex::new(ann, frame);
    search_placement(s, &index, frame, max_attempts.max(1), rng, trace)
}

fn search_placement<R: Rng + ?Sized>(
    s: &SilhouetteEntry,
    index: &SceneIndex,
    frame: (usize, usize),
    max_attempts: usize,
    rng: &mut R,
    mut trace: Option<&mut Vec<FallbackAttempt>>,
) -> Result<Placement> {
    let attempt = |rng: &mut R| -> Result<((usize, usize), HoleStats)> {
        let offset = random_offset(s, frame, rng)?;
        let placed = PlacedSilhouette {
            silhouette: s,
            offset,
            frame,
        };
        Ok((offset, index.stats(&placed)))
    };
    let found = |offset, hole_type| Placement {
        offset,
        frame,
        hole_type,
        fallback: false,
        zero_overlap: false,
    };

    if rng.random::<f64>() > TYPE1_PROBABILITY_THRESHOLD {
        for _ in 0..max_attempts {
            let (offset, stats) = attempt(rng)?;
            if stats.hole_type() == HoleType::Type1 {
                return Ok(found(offset, HoleType::Type1));
            }
        }
    }
    for _ in 0..max_attempts {
        let (offset, stats) = attempt(rng)?;
        if stats.hole_type() == HoleType::Type2 {
            return Ok(found(offset, HoleType::Type2));
        }
    }

    // fewest contained segments, then longest overlapped line length
    let mut best_n = usize::MAX;
    let mut best_m = 0;
    let mut best: Option<(usize, usize)> = None;
    let mut last = (0, 0);
    for _ in 0..max_attempts {
        let (offset, stats) = attempt(rng)?;
        let (n, m) = (stats.contained_segments, stats.overlap_length);
        if let Some(t) = trace.as_deref_mut() {
            t.push(FallbackAttempt {
                offset,
                contained_segments: n,
                overlap_length: m,
            });
        }
        if n <= best_n && m > best_m {
            best_n = n;
            best_m = m;
            best = Some(offset);
        }
        last = offset;
    }
    Ok(Placement {
        offset: best.unwrap_or(last),
        frame,
        hole_type: HoleType::Type3,
        fallback: true,
        zero_overlap: best.is_none(),
    })
}

/// Hole-size interval indices requested for a pool.
pub type IntervalRange = RangeInclusive<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolParams {
    pub candidates: usize,
    pub intervals: IntervalRange,
    pub mode: PlacementMode,
    pub seed: u64,
    pub max_attempts: usize,
    pub frame: (usize, usize),
}

impl Default for PoolParams {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_CANDIDATES,
            intervals: 0..=9,
            mode: PlacementMode::AvoidIsolation,
            seed: 0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            frame: (REFERENCE_SIDE, REFERENCE_SIDE),
        }
    }
}

/// One generated mask, stored as a placement of a pool silhouette.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMask {
    pub image_id: String,
    pub interval: usize,
    pub candidate: usize,
    /// Index into [`MaskPool::silhouettes`].
    pub silhouette: usize,
    pub placement: Placement,
    pub hole_count: usize,
}

impl PoolMask {
    pub fn hole_fraction(&self) -> f64 {
        let (w, h) = self.placement.frame;
        self.hole_count as f64 / (w * h) as f64
    }
}

pub type PoolKey = (String, usize);

#[derive(Debug, Clone)]
pub struct MaskPool {
    pub params: PoolParams,
    pub silhouettes: Arc<[SilhouetteEntry]>,
    pub entries: BTreeMap<PoolKey, Vec<PoolMask>>,
}

impl MaskPool {
    pub fn materialize(&self, entry: &PoolMask) -> MaskBitmap {
        entry.placement.to_mask(&self.silhouettes[entry.silhouette])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Masks in `(image_id, interval, candidate)` order.
    pub fn iter(&self) -> impl Iterator<Item = &PoolMask> {
        self.entries.values().flatten()
    }
}

/// Silhouette indices grouped by interval, in input order.
pub fn group_by_interval(silhouettes: &[SilhouetteEntry]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in silhouettes.iter().enumerate() {
        if let Some(interval) = s.interval.filter(|_| filter_silhouette(s)) {
            groups.entry(interval).or_default().push(i);
        }
    }
    groups
}

/// Keeps silhouettes that pass [`filter_silhouette`], then draws up to
/// `per_interval` of them from each interval without replacement.
pub fn select_silhouettes(silhouettes: &[SilhouetteEntry], per_interval: usize, seed: u64) -> Vec<usize> {
    let mut chosen = Vec::new();
    for (interval, members) in group_by_interval(silhouettes) {
        if members.len() <= per_interval {
            chosen.extend(members);
            continue;
        }
        let mut rng = keyed_stream("silhouette-select", seed, &[interval.into()]);
        let mut picks: Vec<usize> = index::sample(&mut rng, members.len(), per_interval).into_vec();
        picks.sort_unstable();
        chosen.extend(picks.into_iter().map(|i| members[i]));
    }
    chosen.sort_unstable();
    chosen
}

pub fn task_stream(seed: u64, image_id: &str, interval: usize, candidate: usize) -> StreamRng {
    keyed_stream("maskgen", seed, &[image_id.into(), interval.into(), candidate.into()])
}

/// Generates `params.candidates` masks per image and interval.
///
/// Each `(image, interval, candidate)` task draws from its own keyed
/// stream, so the pool is identical however rayon schedules the tasks.
pub fn build_mask_pool(
    images: &[(String, WireframeAnnotation)],
    silhouettes: Arc<[SilhouetteEntry]>,
    params: &PoolParams,
) -> Result<MaskPool> {
    let groups = group_by_interval(&silhouettes);
    for interval in params.intervals.clone() {
        if groups.get(&interval).is_none_or(Vec::is_empty) {
            return Err(Error::EmptyInterval { interval });
        }
    }
    let (fw, fh) = params.frame;
    let scenes: Vec<(&str, SceneIndex)> = images
        .par_iter()
        .map(|(id, ann)| {
            let scene = if (ann.width as usize, ann.height as usize) == params.frame {
                SceneIndex::new(ann, params.frame)
            } else {
                SceneIndex::new(&ann.rescaled(fw as u32, fh as u32), params.frame)
            };
            (id.as_str(), scene)
        })
        .collect();

    let tasks: Vec<(usize, usize, usize)> = (0..scenes.len())
        .flat_map(|img| {
            params
                .intervals
                .clone()
                .flat_map(move |iv| (0..params.candidates).map(move |c| (img, iv, c)))
        })
        .collect();

    let masks: Vec<PoolMask> = tasks
        .par_iter()
        .map(|&(img, interval, candidate)| {
            let (image_id, scene) = &scenes[img];
            let mut rng = task_stream(params.seed, image_id, interval, candidate);
            let members = &groups[&interval];
            let silhouette = members[rng.random_range(0..members.len())];
            let s = &silhouettes[silhouette];
            let placement = match params.mode {
                PlacementMode::AvoidIsolation => {
                    search_placement(s, scene, params.frame, params.max_attempts.max(1), &mut rng, None)?
                }
                PlacementMode::Random => {
                    let offset = random_offset(s, params.frame, &mut rng)?;
                    let placed = PlacedSilhouette {
                        silhouette: s,
                        offset,
                        frame: params.frame,
                    };
                    Placement {
                        offset,
                        frame: params.frame,
                        hole_type: scene.stats(&placed).hole_type(),
                        fallback: false,
                        zero_overlap: false,
                    }
                }
            };
            Ok(PoolMask {
                image_id: image_id.to_string(),
                interval,
                candidate,
                silhouette,
                placement,
                hole_count: s.area,
            })
        })
        .collect::<Result<_>>()?;

    let mut entries: BTreeMap<PoolKey, Vec<PoolMask>> = BTreeMap::new();
    for m in masks {
        entries.entry((m.image_id.clone(), m.interval)).or_default().push(m);
    }
    Ok(MaskPool {
        params: params.clone(),
        silhouettes,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Junction, LineSegment};
    use rand::SeedableRng;

    fn entry_with(bbox: (usize, usize), area: usize) -> SilhouetteEntry {
        SilhouetteEntry {
            bitmap: MaskBitmap::empty(0, 0),
            area,
            bbox: BBox {
                x: 0,
                y: 0,
                w: bbox.0,
                h: bbox.1,
            },
            interval: interval_for_area(area).ok(),
        }
    }

    fn square(side: usize) -> SilhouetteEntry {
        SilhouetteEntry::from_bitmap(&MaskBitmap::full(side, side))
    }

    #[test]
    fn silhouette_filter() {
        assert!(!filter_silhouette(&entry_with((600, 100), 5000)));
        assert!(!filter_silhouette(&entry_with((300, 300), 80000)));
        assert!(filter_silhouette(&entry_with((100, 100), 5000)));
        assert!(!filter_silhouette(&entry_with((512, 10), 5000)));
        assert!(filter_silhouette(&entry_with((511, 511), 78643)));
        assert!(!filter_silhouette(&entry_with((511, 511), 78644)));
    }

    #[test]
    fn intervals() {
        // 5000 / 262144 = 1.907%
        assert_eq!(interval_for_area(5000).unwrap(), 1);
        assert!(matches!(interval_for_area(262), Err(Error::FractionTooSmall { .. })));
        // 78000 / 262144 = 29.75%
        assert_eq!(interval_for_area(78000).unwrap(), 29);
        // 263 / 262144 = 0.1003% is the first area above the floor
        assert_eq!(interval_for_area(263).unwrap(), 0);
        // exactly 1% (2621.44 px) is not an integer area; 2621 -> 0, 2622 -> 1
        assert_eq!(interval_for_area(2621).unwrap(), 0);
        assert_eq!(interval_for_area(2622).unwrap(), 1);
        assert!(matches!(interval_for_area(80000), Err(Error::FractionTooLarge { .. })));
    }

    #[test]
    fn interval_matches_bounds() {
        for area in (263..78643).step_by(97) {
            let i = interval_for_area(area).unwrap();
            let (lo, hi) = interval_bounds(i);
            let f = area as f64 / REFERENCE_AREA as f64;
            assert!(f > lo && f <= hi, "area {area} interval {i}");
        }
    }

    #[test]
    fn silhouette_from_bitmap() {
        let bm = MaskBitmap::from_fn(20, 10, |x, y| (3..7).contains(&x) && (2..4).contains(&y));
        let s = SilhouetteEntry::from_bitmap(&bm);
        assert_eq!(s.area, 8);
        assert_eq!(s.bbox, BBox { x: 3, y: 2, w: 4, h: 2 });
        assert_eq!(s.bitmap.hole_count(), 8);
        assert_eq!(s.interval, None);
    }

    fn line(x1: f64, y1: f64, x2: f64, y2: f64) -> LineSegment {
        LineSegment::from_coords(x1, y1, x2, y2)
    }

    #[test]
    fn classify_examples() {
        let mut ann = WireframeAnnotation::new(16, 16);
        ann.lines = vec![line(0.5, 8.5, 15.5, 8.5)];
        ann.junctions = vec![Junction::at(0.5, 8.5), Junction::at(15.5, 8.5)];
        let hole = MaskBitmap::from_fn(16, 16, |x, y| (6..9).contains(&x) && (7..10).contains(&y));
        assert_eq!(classify_hole(&ann, &hole), HoleType::Type1);

        // square loop with a diagonal: 2 junctions inside, one fully inside segment
        let mut ann = WireframeAnnotation::new(16, 16);
        ann.lines = vec![line(2.5, 2.5, 4.5, 2.5), line(4.5, 2.5, 12.5, 12.5)];
        ann.junctions = vec![Junction::at(2.5, 2.5), Junction::at(4.5, 2.5), Junction::at(12.5, 12.5)];
        let hole = MaskBitmap::from_fn(16, 16, |x, y| x < 6 && y < 6);
        assert_eq!(classify_hole(&ann, &hole), HoleType::Type2);

        // 2 junctions and 3 fully-contained segments
        let mut ann = WireframeAnnotation::new(16, 16);
        ann.lines = vec![
            line(2.5, 2.5, 4.5, 2.5),
            line(4.5, 2.5, 2.5, 2.5),
            line(3.0, 3.0, 4.0, 4.0),
        ];
        ann.junctions = vec![Junction::at(2.5, 2.5), Junction::at(4.5, 2.5)];
        assert_eq!(classify_hole(&ann, &hole), HoleType::Invalid);

        assert_eq!(classify_hole(&ann, &MaskBitmap::empty(16, 16)), HoleType::Invalid);
    }

    #[test]
    fn random_place_examples() {
        let s = square(512);
        let mut rng = StreamRng::seed_from_u64(1);
        let m = random_place(&s, (512, 512), &mut rng).unwrap();
        assert_eq!(m.hole_count(), 512 * 512);
        assert!(matches!(random_place(&s, (511, 512), &mut rng), Err(Error::NoPlacement { .. })));

        let small = square(5);
        let a = random_place(&small, (64, 64), &mut StreamRng::seed_from_u64(9)).unwrap();
        let b = random_place(&small, (64, 64), &mut StreamRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hole_count(), 25);
    }

    #[test]
    fn random_place_is_uniform() {
        let s = square(1);
        let mut rng = StreamRng::seed_from_u64(2024);
        let mut counts = [0usize; 16];
        let draws = 10_000;
        for _ in 0..draws {
            let m = random_place(&s, (4, 4), &mut rng).unwrap();
            let pos = m.bits().iter().position(|b| *b).unwrap();
            counts[pos] += 1;
        }
        let expected = draws as f64 / 16.0;
        let sigma = (draws as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{counts:?}");
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 15 dof, p = 0.001 critical value
        assert!(chi2 < 37.70, "chi2 {chi2}");
    }

    /// Star-shaped scene: no closed loops.
    fn star_scene() -> WireframeAnnotation {
        let mut ann = WireframeAnnotation::new(128, 128);
        let c = (64.5, 64.5);
        ann.junctions.push(Junction::at(c.0, c.1));
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            let end = (c.0 + 50.0 * a.cos(), c.1 + 50.0 * a.sin());
            ann.lines.push(line(c.0, c.1, end.0, end.1));
            ann.junctions.push(Junction::at(end.0, end.1));
        }
        ann
    }

    #[test]
    fn avoid_isolation_on_open_scene() {
        let ann = star_scene();
        let s = square(12);
        for seed in 0..100 {
            let mut rng = StreamRng::seed_from_u64(seed);
            let p = avoid_isolation_place(&s, &ann, 500, &mut rng).unwrap();
            let mask = p.to_mask(&s);
            let ty = classify_hole(&ann, &mask);
            assert!(matches!(ty, HoleType::Type1 | HoleType::Type2), "seed {seed}");
            assert_eq!(ty, p.hole_type);
            assert!(!p.fallback);
        }
    }

    /// A closed quadrilateral inside a single pixel: any hole holding one
    /// of its junctions holds all four edges.
    fn tiny_quad_scene() -> WireframeAnnotation {
        let mut ann = WireframeAnnotation::new(64, 64);
        let (a, b) = (30.2, 30.8);
        ann.lines = vec![line(a, a, b, a), line(b, a, b, b), line(b, b, a, b), line(a, b, a, a)];
        ann.junctions = vec![
            Junction::at(a, a),
            Junction::at(b, a),
            Junction::at(b, b),
            Junction::at(a, b),
        ];
        ann
    }

    #[test]
    fn forced_fallback() {
        let ann = tiny_quad_scene();
        let s = square(20);
        let mut trace = Vec::new();
        let mut rng = StreamRng::seed_from_u64(3);
        let p = avoid_isolation_trace(&s, &ann, 500, &mut rng, Some(&mut trace)).unwrap();
        assert!(p.fallback);
        assert_eq!(p.hole_type, HoleType::Type3);
        assert_eq!(trace.len(), 500);
        assert!(!p.zero_overlap);
        let chosen = trace.iter().find(|a| a.offset == p.offset).unwrap();
        assert!(trace
            .iter()
            .all(|a| !(a.contained_segments < chosen.contained_segments && a.overlap_length > chosen.overlap_length)));
    }

    #[test]
    fn zero_overlap_fallback_is_flagged() {
        // junction-free scene whose only line sits in a corner the hole cannot reach
        let mut ann = WireframeAnnotation::new(64, 64);
        ann.lines = vec![line(0.5, 0.5, 1.5, 0.5)];
        let s = SilhouetteEntry::from_bitmap(&MaskBitmap::from_fn(40, 40, |x, y| x >= 20 && y >= 20));
        let p = avoid_isolation_place(&s, &ann, 50, &mut StreamRng::seed_from_u64(0)).unwrap();
        assert!(p.fallback && p.zero_overlap);
    }

    #[test]
    fn single_attempt_is_deterministic() {
        let ann = star_scene();
        let s = square(30);
        let run = || {
            let p = avoid_isolation_place(&s, &ann, 1, &mut StreamRng::seed_from_u64(77)).unwrap();
            p.to_mask(&s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pool_sizes_and_determinism() {
        let sil: Arc<[SilhouetteEntry]> = vec![square(40), square(60), square(17)].into();
        let images: Vec<(String, WireframeAnnotation)> = vec![
            ("a".into(), star_scene()),
            ("b".into(), star_scene().rescaled(256, 256)),
        ];
        let params = PoolParams {
            candidates: 3,
            intervals: 0..=1,
            seed: 11,
            ..PoolParams::default()
        };
        let pool = build_mask_pool(&images, sil.clone(), &params).unwrap();
        assert_eq!(pool.len(), 2 * 2 * 3);
        for m in pool.iter() {
            assert!(area_in_interval(m.hole_count, m.interval));
            assert_eq!(pool.materialize(m).hole_count(), m.hole_count);
        }
        let again = build_mask_pool(&images, sil.clone(), &params).unwrap();
        assert_eq!(pool.entries, again.entries);

        let one = PoolParams {
            candidates: 1,
            intervals: 1..=1,
            ..params.clone()
        };
        assert_eq!(build_mask_pool(&images[..1], sil.clone(), &one).unwrap().len(), 1);

        let missing = PoolParams {
            intervals: 0..=2,
            ..params
        };
        assert!(matches!(
            build_mask_pool(&images, sil, &missing),
            Err(Error::EmptyInterval { interval: 2 })
        ));
    }

    #[test]
    fn stats_agree_with_primitives() {
        let ann = star_scene();
        let s = SilhouetteEntry::from_bitmap(&MaskBitmap::from_fn(30, 25, |x, y| (x * 7 + y * 3) % 5 != 0));
        let index = SceneIndex::new(&ann, (128, 128));
        let mut rng = StreamRng::seed_from_u64(5);
        for _ in 0..200 {
            let offset = random_offset(&s, (128, 128), &mut rng).unwrap();
            let placed = PlacedSilhouette {
                silhouette: &s,
                offset,
                frame: (128, 128),
            };
            let mask = placed.to_mask();
            let stats = index.stats(&placed);
            assert_eq!(stats.contained_junctions, count_contained_junctions(&ann, &mask));
            assert_eq!(stats.contained_segments, count_contained_segments(&ann, &mask));
            assert_eq!(stats.hole_type(), classify_hole(&ann, &mask));
        }
    }

    #[test]
    fn selection_without_replacement() {
        let sil: Vec<SilhouetteEntry> = (0..30).map(|i| square(20 + i % 3)).collect();
        let picked = select_silhouettes(&sil, 4, 1);
        // three distinct areas, all in interval 0 or 1
        let groups = group_by_interval(&sil);
        let expected: usize = groups.values().map(|g| g.len().min(4)).sum();
        assert_eq!(picked.len(), expected);
        let mut dedup = picked.clone();
        dedup.dedup();
        assert_eq!(dedup, picked);
        assert_eq!(picked, select_silhouettes(&sil, 4, 1));
    }
}
