//! Pseudo-label filtering by line count, total line length and the
//! junction-to-line ratio.

use serde::{Deserialize, Serialize};

use crate::geometry::{segment_length, WireframeAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaStats {
    pub num_lines: usize,
    pub total_length: f64,
    /// Junction count over line count; `None` without lines.
    pub junction_line_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub min_lines: f64,
    pub min_total_length: f64,
    pub max_ratio: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            min_lines: 74.98,
            min_total_length: 6456.57,
            max_ratio: 1.34,
        }
    }
}

pub fn criteria_stats(ann: &WireframeAnnotation) -> CriteriaStats {
    let num_lines = ann.lines.len();
    CriteriaStats {
        num_lines,
        total_length: ann.lines.iter().map(segment_length).sum(),
        junction_line_ratio: (num_lines > 0).then(|| ann.junctions.len() as f64 / num_lines as f64),
    }
}

/// All three strict inequalities; an undefined ratio fails.
pub fn passes_filter(stats: &CriteriaStats, th: &FilterThresholds) -> bool {
    stats.num_lines as f64 > th.min_lines
        && stats.total_length > th.min_total_length
        && stats.junction_line_ratio.is_some_and(|r| r < th.max_ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Lines,
    Length,
    Ratio,
}

impl Criterion {
    pub fn value(self, stats: &CriteriaStats) -> Option<f64> {
        match self {
            Self::Lines => Some(stats.num_lines as f64),
            Self::Length => Some(stats.total_length),
            Self::Ratio => stats.junction_line_ratio,
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "lines" => Ok(Self::Lines),
            "length" => Ok(Self::Length),
            "ratio" => Ok(Self::Ratio),
            other => Err(crate::Error::Config(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Equal-width histogram over `[lo, hi)` with overflow buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
    /// Images whose statistic is undefined (ratio without lines).
    pub undefined: usize,
}

impl Histogram {
    pub fn new(bin_count: usize, lo: f64, hi: f64) -> Self {
        assert!(bin_count >= 1 && lo < hi, "histogram needs bins >= 1 and lo < hi");
        Self {
            lo,
            hi,
            counts: vec![0; bin_count],
            underflow: 0,
            overflow: 0,
            undefined: 0,
        }
    }

    pub fn bin_edges(&self, bin: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + bin as f64 * width, self.lo + (bin + 1) as f64 * width)
    }

    pub fn add(&mut self, value: Option<f64>) {
        let Some(v) = value.filter(|v| !v.is_nan()) else {
            self.undefined += 1;
            return;
        };
        if v < self.lo {
            self.underflow += 1;
        } else if v >= self.hi {
            self.overflow += 1;
        } else {
            let bins = self.counts.len();
            let idx = ((v - self.lo) / (self.hi - self.lo) * bins as f64) as usize;
            self.counts[idx.min(bins - 1)] += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.undefined += other.undefined;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.underflow + self.overflow + self.undefined
    }

    /// Rows of `bin_lo,bin_hi,count`, under/overflow with infinite edges and
    /// undefined values (when present) as `nan,nan`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        out.push_str(&format!("-inf,{},{}\n", self.lo, self.underflow));
        for (i, c) in self.counts.iter().enumerate() {
            let (a, b) = self.bin_edges(i);
            out.push_str(&format!("{a},{b},{c}\n"));
        }
        out.push_str(&format!("{},inf,{}\n", self.hi, self.overflow));
        if self.undefined > 0 {
            out.push_str(&format!("nan,nan,{}\n", self.undefined));
        }
        out
    }
}

pub fn histogram<'a>(
    dataset: impl IntoIterator<Item = &'a CriteriaStats>,
    criterion: Criterion,
    bin_count: usize,
    range: (f64, f64),
) -> Histogram {
    let mut h = Histogram::new(bin_count, range.0, range.1);
    for stats in dataset {
        h.add(criterion.value(stats));
    }
    h
}
