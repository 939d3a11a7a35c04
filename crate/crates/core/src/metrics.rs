//! Wireframe evaluation metrics.
//!
//! All coordinates are expected in the 128x128 evaluation frame.
//!
//! * sAP^T: predictions are walked in descending score order and each one
//!   takes the nearest still-unmatched ground-truth segment whose structural
//!   distance (sum of squared endpoint distances, minimized over the two
//!   endpoint pairings) is at most `T`.
//! * mAP^J: the same greedy walk over junctions with Euclidean distance,
//!   averaged over a list of distance thresholds.
//! * AP^H: predicted and ground-truth lines are rasterized; at each score
//!   threshold prediction pixels are greedily matched to ground-truth pixels
//!   within a tolerance radius.
//!
//! AP is the unsmoothed rectangle rule `sum_k P_k * (R_k - R_{k-1})`.
//! Dataset-level numbers concatenate every image's ranked predictions into
//! one global list (micro average) unless macro averaging is requested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rasterize_segment, Junction, LineSegment, Point, WireframeAnnotation};

pub const EVAL_FRAME: usize = 128;
pub const DEFAULT_SAP_THRESHOLDS: [f64; 3] = [5.0, 10.0, 15.0];
pub const DEFAULT_JUNCTION_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_HEATMAP_LEVELS: usize = 10;
pub const DEFAULT_HEATMAP_TOLERANCE: f64 = 1.5;

/// Score of a prediction; unscored predictions rank as 1.0.
pub fn line_score(seg: &LineSegment) -> f64 {
    seg.score.unwrap_or(1.0)
}

pub fn junction_score(j: &Junction) -> f64 {
    j.score.unwrap_or(1.0)
}

/// Indices sorted by descending score; ties keep input order.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Sum of squared endpoint distances under the better endpoint pairing.
pub fn structural_distance(a: &LineSegment, b: &LineSegment) -> f64 {
    let direct = a.p1.distance_squared(b.p1) + a.p2.distance_squared(b.p2);
    let swapped = a.p1.distance_squared(b.p2) + a.p2.distance_squared(b.p1);
    direct.min(swapped)
}

/// Greedy score-ordered matching of `n_pred` items against `n_gt` targets.
///
/// Returns `(pred_index, gt_index)` pairs in rank order.
fn greedy_match(
    scores: &[f64],
    n_gt: usize,
    threshold: f64,
    distance: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, Option<usize>)> {
    let mut used = vec![false; n_gt];
    rank_by_score(scores)
        .into_iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for g in (0..n_gt).filter(|&g| !used[g]) {
                let d = distance(p, g);
                if d <= threshold && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((g, d));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            (p, best.map(|(g, _)| g))
        })
        .collect()
}

pub fn match_segments(pred: &[LineSegment], gt: &[LineSegment], threshold: f64) -> Vec<(usize, Option<usize>)> {
    let scores: Vec<f64> = pred.iter().map(line_score).collect();
    greedy_match(&scores, gt.len(), threshold, |p, g| structural_distance(&pred[p], &gt[g]))
}

pub fn match_junctions(pred: &[Junction], gt: &[Junction], threshold: f64) -> Vec<(usize, Option<usize>)> {
    let scores: Vec<f64> = pred.iter().map(junction_score).collect();
    greedy_match(&scores, gt.len(), threshold, |p, g| pred[p].position.distance(gt[g].position))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// 1-based rank (or threshold level for AP^H).
    pub rank: usize,
    pub score: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub ap: f64,
    pub max_f: f64,
}

impl PrCurve {
    /// `rank,score,precision,recall` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,score,precision,recall\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.rank, p.score, p.precision, p.recall));
        }
        out
    }
}

/// One ranked decision: the prediction's score and whether it matched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub score: f64,
    pub matched: bool,
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Best F-score over the curve's points; 0 for an empty curve.
pub fn max_f(points: &[PrPoint]) -> f64 {
    points
        .iter()
        .map(|p| f_score(p.precision, p.recall))
        .fold(0.0, f64::max)
}

/// Precision/recall after each ranked decision.
pub fn pr_curve(trace: &[TraceEntry], num_gt: usize) -> Result<PrCurve> {
    if num_gt == 0 {
        return Err(Error::EmptyGt);
    }
    let mut points = Vec::with_capacity(trace.len());
    let mut matched = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, entry) in trace.iter().enumerate() {
        if entry.matched {
            matched += 1;
        }
        let precision = matched as f64 / (k + 1) as f64;
        let recall = matched as f64 / num_gt as f64;
        ap += precision * (recall - prev_recall);
        prev_recall = recall;
        points.push(PrPoint {
            rank: k + 1,
            score: entry.score,
            precision,
            recall,
        });
    }
    let max_f = max_f(&points);
    Ok(PrCurve { points, ap, max_f })
}

fn trace_of(matches: &[(usize, Option<usize>)], scores: &[f64]) -> Vec<TraceEntry> {
    matches
        .iter()
        .map(|&(p, g)| TraceEntry {
            score: scores[p],
            matched: g.is_some(),
        })
        .collect()
}

/// Per-image ranked trace for sAP^T.
pub fn sap_trace(pred: &[LineSegment], gt: &[LineSegment], threshold: f64) -> Vec<TraceEntry> {
    let scores: Vec<f64> = pred.iter().map(line_score).collect();
    trace_of(&match_segments(pred, gt, threshold), &scores)
}

pub fn junction_trace(pred: &[Junction], gt: &[Junction], threshold: f64) -> Vec<TraceEntry> {
    let scores: Vec<f64> = pred.iter().map(junction_score).collect();
    trace_of(&match_junctions(pred, gt, threshold), &scores)
}

pub fn sap(pred: &[LineSegment], gt: &[LineSegment], threshold: f64) -> Result<PrCurve> {
    pr_curve(&sap_trace(pred, gt, threshold), gt.len())
}

pub fn junction_ap(pred: &[Junction], gt: &[Junction], threshold: f64) -> Result<PrCurve> {
    pr_curve(&junction_trace(pred, gt, threshold), gt.len())
}

pub fn mapj(pred: &[Junction], gt: &[Junction], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::Config("mAP^J needs at least one threshold".into()));
    }
    let mut total = 0.0;
    for &t in thresholds {
        total += junction_ap(pred, gt, t)?.ap;
    }
    Ok(total / thresholds.len() as f64)
}

/// Score thresholds used by AP^H.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdLevels {
    /// `n` thresholds at equal quantiles of the prediction scores.
    Quantiles(usize),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapConfig {
    pub frame: (usize, usize),
    pub levels: ThresholdLevels,
    /// Pixel matching radius.
    pub tolerance: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            frame: (EVAL_FRAME, EVAL_FRAME),
            levels: ThresholdLevels::Quantiles(DEFAULT_HEATMAP_LEVELS),
            tolerance: DEFAULT_HEATMAP_TOLERANCE,
        }
    }
}

impl HeatmapConfig {
    /// Distinct thresholds in descending order.
    pub fn thresholds(&self, scores: &[f64]) -> Vec<f64> {
        let mut levels = match &self.levels {
            ThresholdLevels::Explicit(v) => v.clone(),
            ThresholdLevels::Quantiles(n) => {
                if scores.is_empty() || *n == 0 {
                    return Vec::new();
                }
                let mut sorted = scores.to_vec();
                sorted.sort_by(f64::total_cmp);
                (0..*n).map(|i| sorted[i * sorted.len() / n]).collect()
            }
        };
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        levels
    }
}

/// Union of the rasterized lines as a flat occupancy grid.
fn raster_union<'a>(lines: impl IntoIterator<Item = &'a LineSegment>, frame: (usize, usize)) -> Vec<bool> {
    let mut grid = vec![false; frame.0 * frame.1];
    for l in lines {
        for (x, y) in rasterize_segment(l, frame.0, frame.1) {
            grid[y * frame.0 + x] = true;
        }
    }
    grid
}

/// Pixel counts at one threshold: `(matched, predicted, ground truth)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelCounts {
    pub matched: usize,
    pub predicted: usize,
    pub ground_truth: usize,
}

impl std::ops::AddAssign for PixelCounts {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.predicted += o.predicted;
        self.ground_truth += o.ground_truth;
    }
}

/// Greedy one-to-one pixel matching in row-major prediction order; each
/// prediction takes the nearest free ground-truth pixel within `tolerance`.
pub fn match_pixels(pred: &[bool], gt: &[bool], frame: (usize, usize), tolerance: f64) -> PixelCounts {
    let (w, h) = frame;
    let mut used = vec![false; gt.len()];
    let reach = tolerance.floor().max(0.0) as i64;
    let tol2 = tolerance * tolerance;
    let mut counts = PixelCounts {
        matched: 0,
        predicted: pred.iter().filter(|b| **b).count(),
        ground_truth: gt.iter().filter(|b| **b).count(),
    };
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !pred[(y as usize) * w + x as usize] {
                continue;
            }
            let mut best: Option<(usize, i64)> = None;
            for gy in (y - reach).max(0)..=(y + reach).min(h as i64 - 1) {
                for gx in (x - reach).max(0)..=(x + reach).min(w as i64 - 1) {
                    let idx = gy as usize * w + gx as usize;
                    if !gt[idx] || used[idx] {
                        continue;
                    }
                    let d2 = (gx - x).pow(2) + (gy - y).pow(2);
                    if d2 as f64 <= tol2 && best.is_none_or(|(_, bd)| d2 < bd) {
                        best = Some((idx, d2));
                    }
                }
            }
            if let Some((idx, _)) = best {
                used[idx] = true;
                counts.matched += 1;
            }
        }
    }
    counts
}

/// Pixel counts of one image at each threshold (descending).
pub fn heatmap_counts(pred: &[LineSegment], gt: &[LineSegment], thresholds: &[f64], cfg: &HeatmapConfig) -> Vec<PixelCounts> {
    let gt_grid = raster_union(gt, cfg.frame);
    thresholds
        .iter()
        .map(|&tau| {
            let pred_grid = raster_union(pred.iter().filter(|l| line_score(l) >= tau), cfg.frame);
            match_pixels(&pred_grid, &gt_grid, cfg.frame, cfg.tolerance)
        })
        .collect()
}

/// Builds the AP^H curve from per-threshold pixel counts.
///
/// Points stay in descending-threshold order; AP integrates them sorted by
/// recall (ties: higher precision first).
pub fn heatmap_curve(thresholds: &[f64], counts: &[PixelCounts], gt_pixels: usize) -> Result<PrCurve> {
    if gt_pixels == 0 {
        return Err(Error::EmptyGt);
    }
    let points: Vec<PrPoint> = thresholds
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (&tau, c))| PrPoint {
            rank: i + 1,
            score: tau,
            precision: if c.predicted > 0 {
                c.matched as f64 / c.predicted as f64
            } else {
                0.0
            },
            recall: c.matched as f64 / gt_pixels as f64,
        })
        .collect();
    let mut sorted = points.clone();
    sorted.sort_by(|a, b| a.recall.total_cmp(&b.recall).then(b.precision.total_cmp(&a.precision)));
    let mut ap = 0.0;
    let mut prev = 0.0;
    for p in &sorted {
        ap += p.precision * (p.recall - prev);
        prev = p.recall;
    }
    let max_f = max_f(&points);
    Ok(PrCurve { points, ap, max_f })
}

pub fn aph(pred: &[LineSegment], gt: &[LineSegment], cfg: &HeatmapConfig) -> Result<PrCurve> {
    let gt_pixels = raster_union(gt, cfg.frame).iter().filter(|b| **b).count();
    let scores: Vec<f64> = pred.iter().map(line_score).collect();
    let thresholds = cfg.thresholds(&scores);
    let counts = heatmap_counts(pred, gt, &thresholds, cfg);
    heatmap_curve(&thresholds, &counts, gt_pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    #[default]
    Micro,
    Macro,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro" => Ok(Self::Micro),
            "macro" => Ok(Self::Macro),
            other => Err(Error::Config(format!("unknown averaging `{other}`"))),
        }
    }
}

/// Prediction and ground truth of one image, in the evaluation frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub name: String,
    pub pred: WireframeAnnotation,
    pub gt: WireframeAnnotation,
}

impl EvalPair {
    /// Rescales both sides into the evaluation frame.
    pub fn new(name: impl Into<String>, pred: &WireframeAnnotation, gt: &WireframeAnnotation, frame: usize) -> Self {
        let f = frame as u32;
        Self {
            name: name.into(),
            pred: pred.rescaled(f, f),
            gt: gt.rescaled(f, f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub sap_thresholds: Vec<f64>,
    pub junction_thresholds: Vec<f64>,
    pub heatmap: HeatmapConfig,
    pub averaging: Averaging,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sap_thresholds: DEFAULT_SAP_THRESHOLDS.to_vec(),
            junction_thresholds: DEFAULT_JUNCTION_THRESHOLDS.to_vec(),
            heatmap: HeatmapConfig::default(),
            averaging: Averaging::Micro,
        }
    }
}

/// Merges per-image traces into one globally ranked trace.
///
/// Ties keep image order, then per-image rank order.
pub fn merge_traces(traces: Vec<Vec<TraceEntry>>) -> Vec<TraceEntry> {
    let mut all: Vec<TraceEntry> = traces.into_iter().flatten().collect();
    all.sort_by(|a, b| b.score.total_cmp(&a.score));
    all
}

pub fn sap_dataset(pairs: &[EvalPair], threshold: f64) -> Result<PrCurve> {
    let num_gt = pairs.iter().map(|p| p.gt.lines.len()).sum();
    let traces = pairs
        .iter()
        .map(|p| sap_trace(&p.pred.lines, &p.gt.lines, threshold))
        .collect();
    pr_curve(&merge_traces(traces), num_gt)
}

pub fn junction_ap_dataset(pairs: &[EvalPair], threshold: f64) -> Result<PrCurve> {
    let num_gt = pairs.iter().map(|p| p.gt.junctions.len()).sum();
    let traces = pairs
        .iter()
        .map(|p| junction_trace(&p.pred.junctions, &p.gt.junctions, threshold))
        .collect();
    pr_curve(&merge_traces(traces), num_gt)
}

pub fn mapj_dataset(pairs: &[EvalPair], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::Config("mAP^J needs at least one threshold".into()));
    }
    let mut total = 0.0;
    for &t in thresholds {
        total += junction_ap_dataset(pairs, t)?.ap;
    }
    Ok(total / thresholds.len() as f64)
}

pub fn aph_dataset(pairs: &[EvalPair], cfg: &HeatmapConfig) -> Result<PrCurve> {
    let scores: Vec<f64> = pairs
        .iter()
        .flat_map(|p| p.pred.lines.iter().map(line_score))
        .collect();
    let thresholds = cfg.thresholds(&scores);
    let mut totals = vec![PixelCounts::default(); thresholds.len()];
    let mut gt_pixels = 0;
    for p in pairs {
        gt_pixels += raster_union(&p.gt.lines, cfg.frame).iter().filter(|b| **b).count();
        for (t, c) in totals.iter_mut().zip(heatmap_counts(&p.pred.lines, &p.gt.lines, &thresholds, cfg)) {
            *t += c;
        }
    }
    heatmap_curve(&thresholds, &totals, gt_pixels)
}

/// Dataset-level results; curves are always micro-averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `(T, value, max F, curve)` per structural threshold.
    pub sap: Vec<(f64, f64, f64, PrCurve)>,
    pub mapj: f64,
    pub aph: f64,
    pub fh: f64,
    pub aph_curve: PrCurve,
}

fn macro_mean(pairs: &[EvalPair], per_image: impl Fn(&EvalPair) -> Option<Result<f64>>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for p in pairs {
        if let Some(v) = per_image(p) {
            total += v?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyGt);
    }
    Ok(total / n as f64)
}

pub fn evaluate(pairs: &[EvalPair], cfg: &EvalConfig) -> Result<EvalReport> {
    let mut sap_rows = Vec::with_capacity(cfg.sap_thresholds.len());
    for &t in &cfg.sap_thresholds {
        let curve = sap_dataset(pairs, t)?;
        let (value, f) = match cfg.averaging {
            Averaging::Micro => (curve.ap, curve.max_f),
            Averaging::Macro => {
                let has_gt = |p: &EvalPair| !p.gt.lines.is_empty();
                let ap = macro_mean(pairs, |p| has_gt(p).then(|| sap(&p.pred.lines, &p.gt.lines, t).map(|c| c.ap)))?;
                let f = macro_mean(pairs, |p| has_gt(p).then(|| sap(&p.pred.lines, &p.gt.lines, t).map(|c| c.max_f)))?;
                (ap, f)
            }
        };
        sap_rows.push((t, value, f, curve));
    }
    let aph_curve = aph_dataset(pairs, &cfg.heatmap)?;
    let (mapj, aph, fh) = match cfg.averaging {
        Averaging::Micro => (
            mapj_dataset(pairs, &cfg.junction_thresholds)?,
            aph_curve.ap,
            aph_curve.max_f,
        ),
        Averaging::Macro => {
            let has_junctions = |p: &EvalPair| !p.gt.junctions.is_empty();
            let has_lines = |p: &EvalPair| !p.gt.lines.is_empty();
            (
                macro_mean(pairs, |p| {
                    has_junctions(p).then(|| mapj(&p.pred.junctions, &p.gt.junctions, &cfg.junction_thresholds))
                })?,
                macro_mean(pairs, |p| has_lines(p).then(|| aph(&p.pred.lines, &p.gt.lines, &cfg.heatmap).map(|c| c.ap)))?,
                macro_mean(pairs, |p| {
                    has_lines(p).then(|| aph(&p.pred.lines, &p.gt.lines, &cfg.heatmap).map(|c| c.max_f))
                })?,
            )
        }
    };
    Ok(EvalReport {
        sap: sap_rows,
        mapj,
        aph,
        fh,
        aph_curve,
    })
}

/// Point helper for callers building junction lists.
pub fn junctions_from_points(points: &[Point]) -> Vec<Junction> {
    points.iter().map(|&p| Junction::new(p)).collect()
}
