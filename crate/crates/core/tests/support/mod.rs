//! Synthetic data and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use holewire::geometry::{Junction, LineSegment, MaskBitmap, WireframeAnnotation};
use holewire::maskgen::{interval_bounds, REFERENCE_AREA, REFERENCE_SIDE};
use rand::Rng;

/// A random tree: every new node hangs off an earlier one, so the line
/// graph never closes a loop.
pub fn random_tree_scene<R: Rng>(rng: &mut R, side: u32) -> WireframeAnnotation {
    let mut ann = WireframeAnnotation::new(side, side);
    let s = f64::from(side);
    let nodes = rng.random_range(4..40);
    let mut pts = vec![(rng.random_range(0.0..s), rng.random_range(0.0..s))];
    for _ in 1..nodes {
        let &(px, py) = &pts[rng.random_range(0..pts.len())];
        let reach = rng.random_range(8.0..120.0);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let q = (
            (px + reach * angle.cos()).clamp(0.0, s),
            (py + reach * angle.sin()).clamp(0.0, s),
        );
        if q == (px, py) {
            continue;
        }
        ann.lines.push(LineSegment::from_coords(px, py, q.0, q.1));
        pts.push(q);
    }
    ann.junctions = pts.iter().map(|&(x, y)| Junction::at(x, y)).collect();
    ann
}

/// A 4-connected blob of exactly `area` pixels grown by random accretion
/// inside a `side x side` canvas.
pub fn random_blob<R: Rng>(rng: &mut R, area: usize, side: usize) -> MaskBitmap {
    assert!(area <= side * side);
    let mut mask = MaskBitmap::empty(side, side);
    let mut frontier = vec![(side / 2, side / 2)];
    let mut queued = vec![false; side * side];
    queued[(side / 2) * side + side / 2] = true;
    let mut filled = 0;
    while filled < area {
        let i = rng.random_range(0..frontier.len());
        let (x, y) = frontier.swap_remove(i);
        mask.set(x, y, true);
        filled += 1;
        let mut push = |nx: usize, ny: usize| {
            if !queued[ny * side + nx] {
                queued[ny * side + nx] = true;
                frontier.push((nx, ny));
            }
        };
        if x > 0 {
            push(x - 1, y);
        }
        if y > 0 {
            push(x, y - 1);
        }
        if x + 1 < side {
            push(x + 1, y);
        }
        if y + 1 < side {
            push(x, y + 1);
        }
    }
    mask
}

/// An area strictly inside interval `i` of the 512x512 reference frame.
pub fn area_for_interval<R: Rng>(rng: &mut R, interval: usize) -> usize {
    let (lo, hi) = interval_bounds(interval);
    let r = REFERENCE_AREA as f64;
    let a = (lo * r).floor() as usize + 1;
    let b = (hi * r).floor() as usize;
    rng.random_range(a..=b)
}

/// A blob silhouette on the reference canvas whose area lies in `interval`.
pub fn silhouette_for_interval<R: Rng>(rng: &mut R, interval: usize) -> MaskBitmap {
    let area = area_for_interval(rng, interval);
    random_blob(rng, area, REFERENCE_SIDE)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Squared endpoint distance, minimized over both endpoint pairings.
pub fn oracle_structural(p: &LineSegment, g: &LineSegment) -> f64 {
    let (p1, p2) = ((p.p1.x, p.p1.y), (p.p2.x, p.p2.y));
    let (g1, g2) = ((g.p1.x, g.p1.y), (g.p2.x, g.p2.y));
    f64::min(dist2(p1, g1) + dist2(p2, g2), dist2(p1, g2) + dist2(p2, g1))
}

/// Rank order: descending score, ties in input order; unscored lines rank as 1.0.
pub fn oracle_rank(pred: &[LineSegment]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pred.len()).collect();
    let s = |i: usize| pred[i].score.unwrap_or(1.0);
    // insertion sort keeps it obviously stable
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && s(idx[j]) > s(idx[j - 1]) {
            idx.swap(j, j - 1);
            j -= 1;
        }
    }
    idx
}

/// Enumerates every partial injection of ranked predictions into GT
/// (respecting the threshold) and keeps the lexicographically smallest
/// per-rank key `(unmatched, distance, gt index)`. That assignment is the
/// greedy trace, returned as `(score, matched)` in rank order.
pub fn oracle_trace(pred: &[LineSegment], gt: &[LineSegment], threshold: f64) -> Vec<(f64, bool)> {
    let order = oracle_rank(pred);
    type Key = Vec<(u8, f64, usize)>;
    fn better(a: &Key, b: &Key) -> bool {
        for (x, y) in a.iter().zip(b) {
            let ord = x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2));
            match ord {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
        false
    }
    #[allow(clippy::too_many_arguments)]
    fn walk(
        k: usize,
        order: &[usize],
        pred: &[LineSegment],
        gt: &[LineSegment],
        t: f64,
        used: &mut Vec<bool>,
        key: &mut Key,
        best: &mut Option<Key>,
    ) {
        if k == order.len() {
            if best.as_ref().is_none_or(|b| better(key, b)) {
                *best = Some(key.clone());
            }
            return;
        }
        key.push((1, 0.0, 0));
        walk(k + 1, order, pred, gt, t, used, key, best);
        key.pop();
        for g in 0..gt.len() {
            let d = oracle_structural(&pred[order[k]], &gt[g]);
            if !used[g] && d <= t {
                used[g] = true;
                key.push((0, d, g));
                walk(k + 1, order, pred, gt, t, used, key, best);
                key.pop();
                used[g] = false;
            }
        }
    }
    let mut best = None;
    walk(0, &order, pred, gt, threshold, &mut vec![false; gt.len()], &mut Vec::new(), &mut best);
    let key = best.unwrap_or_default();
    order
        .iter()
        .zip(&key)
        .map(|(&p, &(unmatched, _, _))| (pred[p].score.unwrap_or(1.0), unmatched == 0))
        .collect()
}

/// Rectangle-rule AP of a ranked `(score, matched)` list.
pub fn oracle_ap(trace: &[(f64, bool)], num_gt: usize) -> f64 {
    assert!(num_gt > 0);
    let mut tp = 0usize;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(_, matched)) in trace.iter().enumerate() {
        if matched {
            tp += 1;
        }
        let recall = tp as f64 / num_gt as f64;
        ap += tp as f64 / (k + 1) as f64 * (recall - prev_recall);
        prev_recall = recall;
    }
    ap
}

pub fn oracle_sap(pred: &[LineSegment], gt: &[LineSegment], threshold: f64) -> f64 {
    oracle_ap(&oracle_trace(pred, gt, threshold), gt.len())
}

/// Micro average: per-image traces merged into one list ranked by score,
/// ties kept in image order.
pub fn oracle_micro_sap(images: &[(Vec<LineSegment>, Vec<LineSegment>)], threshold: f64) -> f64 {
    let mut all: Vec<(f64, bool)> = images.iter().flat_map(|(p, g)| oracle_trace(p, g, threshold)).collect();
    // stable insertion sort, descending score
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && all[j].0 > all[j - 1].0 {
            all.swap(j, j - 1);
            j -= 1;
        }
    }
    oracle_ap(&all, images.iter().map(|(_, g)| g.len()).sum())
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(n: usize, m: &[f64]) -> Vec<f64> {
    let mut a = m.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

pub fn write_annotation(dir: &Path, stem: &str, ann: &WireframeAnnotation) {
    holewire::io::save_annotation(&dir.join(format!("{stem}.json")), ann).unwrap();
}

/// Runs the CLI binary and returns `(exit code, stdout, stderr)`.
pub fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_holewire"))
        .args(args)
        .output()
        .expect("spawn holewire");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}
