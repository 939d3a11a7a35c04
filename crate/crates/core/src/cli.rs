//! Command-line surface.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::conditioning::{
    apply_hole, mean_rgb, relight, sample_candidate, schedule_interval, Lighting, LightingParams, SampleCase,
    ScheduleConfig,
};
use crate::config::{parse_interval_range, parse_list, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::WireframeAnnotation;
use crate::io::{
    list_stems, load_annotation, read_json, read_mask, read_rgb, read_tensor, write_bytes, write_json, write_mask,
    write_rgb, ManifestEntry, MaskManifest, SilhouettePoolFile, SilhouetteRecord,
};
use crate::losses::{grad_check, random_instance, LossKernel, LossWeights};
use crate::maskgen::{
    build_mask_pool, select_silhouettes, PlacementMode, PoolParams, SilhouetteEntry, DEFAULT_CANDIDATES,
    DEFAULT_MAX_ATTEMPTS, REFERENCE_SIDE,
};
use crate::metrics::{
    junction_ap_dataset, evaluate, Averaging, EvalConfig, EvalPair, HeatmapConfig, ThresholdLevels,
    DEFAULT_HEATMAP_LEVELS, DEFAULT_HEATMAP_TOLERANCE, DEFAULT_JUNCTION_THRESHOLDS, DEFAULT_SAP_THRESHOLDS,
    EVAL_FRAME,
};
use crate::pseudo::{criteria_stats, histogram, passes_filter, Criterion, FilterThresholds};
use crate::rng::keyed_stream;

/// Silhouettes drawn per hole-size interval when building a pool.
pub const DEFAULT_PER_INTERVAL: usize = 1500;
/// Largest acceptable finite-difference relative error in `loss check`.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "holewire", version, about = "Occlusion-conditional wireframe dataset tooling and evaluation")]
pub struct Cli {
    /// Flat key = value TOML file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Silhouette pool operations.
    #[command(subcommand)]
    Pool(PoolCommand),
    /// Mask generation.
    #[command(subcommand)]
    Masks(MasksCommand),
    /// Fill the hole of a mask with a constant color.
    Apply(ApplyArgs),
    /// Simulate dim or over-lit capture.
    Light(LightArgs),
    /// Print the progressive hole-size schedule.
    Schedule(ScheduleArgs),
    /// Pseudo-label filtering.
    #[command(subcommand)]
    Pseudo(PseudoCommand),
    /// Evaluate predictions against ground truth.
    Eval(EvalArgs),
    /// Loss kernel utilities.
    #[command(subcommand)]
    Loss(LossCommand),
}

#[derive(Debug, Subcommand)]
pub enum PoolCommand {
    /// Read silhouette PGMs, filter, group and sample them into a pool file.
    Build(PoolBuildArgs),
    /// Draw one mask from a generated mask manifest.
    Sample(PoolSampleArgs),
}

#[derive(Debug, Subcommand)]
pub enum MasksCommand {
    /// Generate N candidate masks per image and interval.
    Gen(MasksGenArgs),
}

#[derive(Debug, Subcommand)]
pub enum PseudoCommand {
    /// Keep annotations passing all three criteria.
    Filter(PseudoFilterArgs),
    /// Histogram of one criterion over a directory of annotations.
    Hist(PseudoHistArgs),
}

#[derive(Debug, Subcommand)]
pub enum LossCommand {
    /// Compare analytic gradients with central finite differences.
    Check(LossCheckArgs),
}

#[derive(Debug, Args)]
pub struct PoolBuildArgs {
    /// Directory of silhouette PGMs (255 = object).
    #[arg(long)]
    pub silhouettes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub per_interval: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PoolSampleArgs {
    /// Manifest written by `masks gen`.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub image_id: String,
    #[arg(long)]
    pub interval: usize,
    /// `case1` (own candidates) or `case2` (all images' candidates).
    #[arg(long, default_value = "case1")]
    pub case: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Copy the chosen mask here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MasksGenArgs {
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Directory of annotation JSON files.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Candidates per image and interval.
    #[arg(long)]
    pub n: Option<usize>,
    /// Interval indices, e.g. `0-9`.
    #[arg(long)]
    pub intervals: Option<String>,
    #[arg(long)]
    pub mode: Option<PlacementMode>,
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Side of the square mask frame.
    #[arg(long)]
    pub frame: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fill color `r,g,b`.
    #[arg(long, conflicts_with = "mean_of")]
    pub fill: Option<String>,
    /// Directory of PPM images whose mean color is the fill.
    #[arg(long)]
    pub mean_of: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LightArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `dim` or `over`.
    #[arg(long)]
    pub mode: Lighting,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed scale instead of a draw from the mode's range.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub epochs: usize,
    /// Epochs per interval.
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub intervals: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PseudoFilterArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub min_lines: Option<f64>,
    #[arg(long)]
    pub min_total_length: Option<f64>,
    #[arg(long)]
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PseudoHistArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `lines`, `length` or `ratio`.
    #[arg(long)]
    pub criterion: Criterion,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// `lo,hi`; defaults to the data range.
    #[arg(long)]
    pub range: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// sAP thresholds, e.g. `5,10,15`.
    #[arg(long)]
    pub thresholds: Option<String>,
    #[arg(long)]
    pub junction_thresholds: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub frame: Option<usize>,
    #[arg(long)]
    pub averaging: Option<Averaging>,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// adversarial, generator, perceptual, style, gram or reconstruction.
    #[arg(long)]
    pub kernel: LossKernel,
    /// Tensor files in the kernel's input order; random instances otherwise.
    #[arg(long, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("`--{name}` is required (flag or config key)")))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ))
    }
}

fn thread_pool(workers: Option<usize>) -> Result<Option<rayon::ThreadPool>> {
    match workers {
        None => Ok(None),
        Some(0) => Err(Error::Config("`--workers` must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| Error::Config(e.to_string())),
    }
}

fn in_pool<T: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// `10` for integral values, shortest decimal otherwise.
pub fn threshold_label(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

fn load_annotations(dir: &Path) -> Result<Vec<(String, WireframeAnnotation)>> {
    list_stems(dir, "json")?
        .into_iter()
        .map(|(stem, path)| Ok((stem, load_annotation(&path)?)))
        .collect()
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Pool(PoolCommand::Build(a)) => pool_build(a, &cfg, out),
        Command::Pool(PoolCommand::Sample(a)) => pool_sample(a, &cfg, out),
        Command::Masks(MasksCommand::Gen(a)) => masks_gen(a, &cfg, out),
        Command::Apply(a) => apply(a, out),
        Command::Light(a) => light(a, &cfg, out),
        Command::Schedule(a) => schedule(a, &cfg, out),
        Command::Pseudo(PseudoCommand::Filter(a)) => pseudo_filter(a, &cfg, out),
        Command::Pseudo(PseudoCommand::Hist(a)) => pseudo_hist(a, &cfg, out),
        Command::Eval(a) => eval(a, &cfg, out),
        Command::Loss(LossCommand::Check(a)) => loss_check(a, &cfg, out),
    }
    .and_then(|()| out.flush().map_err(|e| Error::io("<stdout>", e)))
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

fn pool_build(a: PoolBuildArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = required(a.seed, cfg.seed, "seed")?;
    let dir = existing(required(a.silhouettes, cfg.silhouettes.clone(), "silhouettes")?)?;
    let dest = required(a.out, cfg.out.clone(), "out")?;
    let per_interval = a.per_interval.or(cfg.per_interval).unwrap_or(DEFAULT_PER_INTERVAL);

    let files = list_stems(&dir, "pgm")?;
    let entries: Vec<SilhouetteEntry> = files
        .par_iter()
        .map(|(_, path)| read_mask(path).map(|m| SilhouetteEntry::from_bitmap(&m)))
        .collect::<Result<_>>()?;
    let chosen = select_silhouettes(&entries, per_interval, seed);
    let file = SilhouettePoolFile {
        seed,
        per_interval,
        silhouettes: chosen
            .iter()
            .map(|&i| SilhouetteRecord::new(files[i].0.clone(), &entries[i]))
            .collect(),
    };
    write_json(&dest, &file)?;
    let mut per: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &file.silhouettes {
        *per.entry(r.interval.unwrap_or(usize::MAX)).or_default() += 1;
    }
    emit(
        out,
        format_args!("read {} silhouettes, kept {} in {} intervals", entries.len(), chosen.len(), per.len()),
    )?;
    for (iv, n) in per {
        emit(out, format_args!("interval {iv}: {n}"))?;
    }
    Ok(())
}

fn masks_gen(a: MasksGenArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = required(a.seed, cfg.seed, "seed")?;
    let pool_path = existing(required(a.pool, cfg.pool.clone(), "pool")?)?;
    let ann_dir = existing(required(a.annotations, cfg.annotations.clone(), "annotations")?)?;
    let out_dir = required(a.out, cfg.out.clone(), "out")?;
    let intervals = parse_interval_range(a.intervals.as_deref().or(cfg.intervals.as_deref()).unwrap_or("0-9"))?;
    let side = a.frame.or(cfg.frame).unwrap_or(REFERENCE_SIDE);
    let candidates = a.n.or(cfg.candidates).unwrap_or(DEFAULT_CANDIDATES);
    if candidates == 0 || side == 0 {
        return Err(Error::Config("`--n` and `--frame` must be positive".into()));
    }
    let params = PoolParams {
        candidates,
        intervals: intervals.clone(),
        mode: a.mode.or(cfg.mode).unwrap_or(PlacementMode::AvoidIsolation),
        seed,
        max_attempts: a.max_attempts.or(cfg.max_attempts).unwrap_or(DEFAULT_MAX_ATTEMPTS),
        frame: (side, side),
    };
    let workers = thread_pool(a.workers.or(cfg.workers))?;

    let pool_file: SilhouettePoolFile = read_json(&pool_path)?;
    let silhouettes: Arc<[SilhouetteEntry]> = pool_file.entries()?.into();
    let images = load_annotations(&ann_dir)?;
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let masks = in_pool(&workers, || -> Result<Vec<ManifestEntry>> {
        let pool = build_mask_pool(&images, silhouettes, &params)?;
        let all: Vec<_> = pool.iter().collect();
        all.par_iter()
            .map(|m| {
                let rel = format!("{}/i{}_c{}.pgm", m.image_id, m.interval, m.candidate);
                write_mask(&out_dir.join(&rel), &pool.materialize(m))?;
                Ok(ManifestEntry {
                    image_id: m.image_id.clone(),
                    interval: m.interval,
                    candidate: m.candidate,
                    path: rel,
                    hole_fraction: m.hole_fraction(),
                    hole_type: m.placement.hole_type,
                    fallback: m.placement.fallback,
                    zero_overlap: m.placement.zero_overlap,
                    silhouette: m.silhouette,
                    offset: m.placement.offset,
                })
            })
            .collect()
    })?;
    let count = masks.len();
    let fallbacks = masks.iter().filter(|m| m.fallback).count();
    let manifest = MaskManifest {
        seed,
        mode: params.mode,
        frame: params.frame,
        candidates,
        intervals: (*intervals.start(), *intervals.end()),
        max_attempts: params.max_attempts,
        masks,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    emit(
        out,
        format_args!("wrote {count} masks for {} images ({fallbacks} fallback placements)", images.len()),
    )
}

fn parse_case(s: &str) -> Result<SampleCase> {
    match s {
        "case1" => Ok(SampleCase::Case1),
        "case2" => Ok(SampleCase::Case2),
        other => Err(Error::Config(format!("unknown sampling case `{other}`"))),
    }
}

fn pool_sample(a: PoolSampleArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let seed = required(a.seed, cfg.seed, "seed")?;
    let case = parse_case(&a.case)?;
    let manifest_path = existing(a.manifest)?;
    let manifest: MaskManifest = read_json(&manifest_path)?;
    let mut groups: BTreeMap<(String, usize), Vec<&ManifestEntry>> = BTreeMap::new();
    for m in &manifest.masks {
        groups.entry((m.image_id.clone(), m.interval)).or_default().push(m);
    }
    for list in groups.values_mut() {
        list.sort_by_key(|m| m.candidate);
    }
    let mut rng = keyed_stream("pool-sample", seed, &[a.image_id.as_str().into(), a.interval.into()]);
    let chosen = sample_candidate(&groups, &a.image_id, a.interval, case, &mut rng)?;
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    let src = base.join(&chosen.path);
    if let Some(dest) = a.out {
        write_mask(&dest, &read_mask(&src)?)?;
    }
    emit(out, src.display())
}

fn parse_fill(s: &str) -> Result<[f64; 3]> {
    let v = parse_list(s)?;
    match v.as_slice() {
        &[r, g, b] if v.iter().all(|c| (0.0..=255.0).contains(c)) => Ok([r, g, b]),
        _ => Err(Error::Config(format!("`--fill` expects r,g,b in [0,255], got `{s}`"))),
    }
}

fn apply(a: ApplyArgs, out: &mut dyn Write) -> Result<()> {
    let fill = match (&a.fill, &a.mean_of) {
        (Some(f), None) => parse_fill(f)?,
        (None, Some(dir)) => {
            let images: Vec<_> = list_stems(&existing(dir.clone())?, "ppm")?
                .iter()
                .map(|(_, p)| read_rgb(p))
                .collect::<Result<_>>()?;
            mean_rgb(&images)?
        }
        _ => return Err(Error::Config("exactly one of `--fill` or `--mean-of` is required".into())),
    };
    let mask = read_mask(&a.mask)?;
    let img = read_rgb(&a.image)?.resize_bilinear(mask.width(), mask.height());
    let filled = apply_hole(&img, &mask, fill)?;
    write_rgb(&a.out, &filled)?;
    emit(
        out,
        format_args!(
            "filled {} of {} pixels with ({:.3}, {:.3}, {:.3})",
            mask.hole_count(),
            mask.width() * mask.height(),
            fill[0],
            fill[1],
            fill[2]
        ),
    )
}

fn light(a: LightArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let img = read_rgb(&a.image)?;
    let noisy = !a.no_noise && a.mode == Lighting::Dim;
    let seed = a.seed.or(cfg.seed);
    let (lo, hi) = a.mode.scale_range();
    let scale = match a.scale {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(Error::Config(format!("`--scale` must be positive, got {s}"))),
        None => {
            let seed = seed.ok_or_else(|| Error::Config("`--seed` is required unless `--scale` is given".into()))?;
            let mut rng = keyed_stream("light-scale", seed, &[]);
            rand::Rng::random_range(&mut rng, lo..=hi)
        }
    };
    if noisy && seed.is_none() {
        return Err(Error::Config("`--seed` is required for shot noise (or pass `--no-noise`)".into()));
    }
    let mut rng = keyed_stream("light-noise", seed.unwrap_or(0), &[]);
    let params = LightingParams {
        mode: a.mode,
        scale,
        shot_noise: noisy,
    };
    write_rgb(&a.out, &relight(&img, &params, &mut rng))?;
    emit(out, format_args!("scale {scale}"))
}

fn schedule(a: ScheduleArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let defaults = ScheduleConfig::default();
    let sc = ScheduleConfig {
        epochs_per_interval: a.period.or(cfg.epochs_per_interval).unwrap_or(defaults.epochs_per_interval),
        num_intervals: a.intervals.or(cfg.num_intervals).unwrap_or(defaults.num_intervals),
        mode: cfg.mode.unwrap_or(defaults.mode),
    };
    if sc.epochs_per_interval == 0 || sc.num_intervals == 0 {
        return Err(Error::Config("period and interval count must be positive".into()));
    }
    emit(out, "epoch,interval")?;
    for epoch in 0..a.epochs {
        emit(out, format_args!("{epoch},{}", schedule_interval(epoch, &sc)))?;
    }
    Ok(())
}

fn pseudo_filter(a: PseudoFilterArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = existing(required(a.annotations, cfg.annotations.clone(), "annotations")?)?;
    let dest = required(a.out, cfg.out.clone(), "out")?;
    let d = FilterThresholds::default();
    let th = FilterThresholds {
        min_lines: a.min_lines.or(cfg.min_lines).unwrap_or(d.min_lines),
        min_total_length: a.min_total_length.or(cfg.min_total_length).unwrap_or(d.min_total_length),
        max_ratio: a.max_ratio.or(cfg.max_ratio).unwrap_or(d.max_ratio),
    };
    let images = load_annotations(&dir)?;
    let mut rows = Vec::with_capacity(images.len());
    let mut passed = Vec::new();
    for (id, ann) in &images {
        let stats = criteria_stats(ann);
        let pass = passes_filter(&stats, &th);
        if pass {
            passed.push(id.clone());
        }
        rows.push(json!({
            "image_id": id,
            "num_lines": stats.num_lines,
            "total_length": stats.total_length,
            "junction_line_ratio": stats.junction_line_ratio,
            "pass": pass,
        }));
    }
    let n_pass = passed.len();
    write_json(
        &dest,
        &json!({ "thresholds": th, "images": rows, "passed": passed }),
    )?;
    emit(out, format_args!("{n_pass} of {} annotations pass", images.len()))
}

fn pseudo_hist(a: PseudoHistArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let dir = existing(required(a.annotations, cfg.annotations.clone(), "annotations")?)?;
    let dest = required(a.out, cfg.out.clone(), "out")?;
    if a.bins == 0 {
        return Err(Error::Config("`--bins` must be positive".into()));
    }
    let stats: Vec<_> = load_annotations(&dir)?.iter().map(|(_, ann)| criteria_stats(ann)).collect();
    let range = match &a.range {
        Some(r) => match parse_list(r)?.as_slice() {
            &[lo, hi] if lo < hi => (lo, hi),
            _ => return Err(Error::Config(format!("`--range` expects lo,hi with lo < hi, got `{r}`"))),
        },
        None => {
            let values: Vec<f64> = stats.iter().filter_map(|s| a.criterion.value(s)).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if values.is_empty() {
                (0.0, 1.0)
            } else if lo < hi {
                // widen so the maximum lands in the last bin
                (lo, hi + (hi - lo) * 1e-9)
            } else {
                (lo, lo + 1.0)
            }
        }
    };
    let h = histogram(&stats, a.criterion, a.bins, range);
    write_bytes(&dest, h.to_csv().as_bytes())?;
    emit(out, format_args!("{} values in {} bins", h.total(), a.bins))
}

fn eval(a: EvalArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let pred_dir = existing(required(a.pred, cfg.pred.clone(), "pred")?)?;
    let gt_dir = existing(required(a.gt, cfg.gt.clone(), "gt")?)?;
    let out_dir = required(a.out, cfg.out.clone(), "out")?;
    let frame = a.frame.or(cfg.eval_frame).unwrap_or(EVAL_FRAME);
    let list = |flag: &Option<String>, file: &Option<Vec<f64>>, default: &[f64]| -> Result<Vec<f64>> {
        match (flag, file) {
            (Some(s), _) => parse_list(s),
            (None, Some(v)) => Ok(v.clone()),
            (None, None) => Ok(default.to_vec()),
        }
    };
    let ecfg = EvalConfig {
        sap_thresholds: list(&a.thresholds, &cfg.sap_thresholds, &DEFAULT_SAP_THRESHOLDS)?,
        junction_thresholds: list(&a.junction_thresholds, &cfg.junction_thresholds, &DEFAULT_JUNCTION_THRESHOLDS)?,
        heatmap: HeatmapConfig {
            frame: (frame, frame),
            levels: ThresholdLevels::Quantiles(a.levels.or(cfg.heatmap_levels).unwrap_or(DEFAULT_HEATMAP_LEVELS)),
            tolerance: a.tolerance.or(cfg.heatmap_tolerance).unwrap_or(DEFAULT_HEATMAP_TOLERANCE),
        },
        averaging: a.averaging.or(cfg.averaging).unwrap_or_default(),
    };
    if frame == 0 || ecfg.sap_thresholds.is_empty() || ecfg.junction_thresholds.is_empty() {
        return Err(Error::Config("evaluation needs a positive frame and non-empty threshold lists".into()));
    }

    let gt = list_stems(&gt_dir, "json")?;
    let pred = list_stems(&pred_dir, "json")?;
    if gt.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred_map: BTreeMap<&str, &PathBuf> = pred.iter().map(|(s, p)| (s.as_str(), p)).collect();
    if !pred.is_empty() {
        let gt_stems: BTreeSet<&str> = gt.iter().map(|(s, _)| s.as_str()).collect();
        let pred_stems: BTreeSet<&str> = pred_map.keys().copied().collect();
        let unmatched: Vec<String> = gt_stems
            .symmetric_difference(&pred_stems)
            .map(|s| s.to_string())
            .collect();
        if !unmatched.is_empty() {
            return Err(Error::MissingPair(unmatched));
        }
    }
    let pairs: Vec<EvalPair> = gt
        .par_iter()
        .map(|(stem, gt_path)| {
            let g = load_annotation(gt_path)?;
            let p = match pred_map.get(stem.as_str()) {
                Some(path) => load_annotation(path)?,
                None => WireframeAnnotation::new(g.width, g.height),
            };
            Ok(EvalPair::new(stem.clone(), &p, &g, frame))
        })
        .collect::<Result<_>>()?;

    let report = evaluate(&pairs, &ecfg)?;
    let mut doc = Map::new();
    for (t, value, f, curve) in &report.sap {
        let label = threshold_label(*t);
        doc.insert(format!("sap@{label}"), json!(value));
        doc.insert(format!("sf@{label}"), json!(f));
        write_bytes(&out_dir.join(format!("pr_sap@{label}.csv")), curve.to_csv().as_bytes())?;
    }
    for &t in &ecfg.junction_thresholds {
        let curve = junction_ap_dataset(&pairs, t)?;
        write_bytes(
            &out_dir.join(format!("pr_apj@{}.csv", threshold_label(t))),
            curve.to_csv().as_bytes(),
        )?;
    }
    write_bytes(&out_dir.join("pr_aph.csv"), report.aph_curve.to_csv().as_bytes())?;
    doc.insert("mapj".into(), json!(report.mapj));
    doc.insert("aph".into(), json!(report.aph));
    doc.insert("fh".into(), json!(report.fh));
    write_json(&out_dir.join("report.json"), &Value::Object(doc.clone()))?;
    for (k, v) in &doc {
        emit(out, format_args!("{k} {v}"))?;
    }
    Ok(())
}

fn loss_check(a: LossCheckArgs, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let eps = a.eps.or(cfg.eps).unwrap_or(1e-6);
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("`--eps` must be positive, got {eps}")));
    }
    let kernel = match (a.kernel, a.gamma.or(cfg.gamma)) {
        (LossKernel::Adversarial { .. }, Some(gamma)) => LossKernel::Adversarial { gamma },
        (LossKernel::Adversarial { .. }, None) => LossKernel::Adversarial {
            gamma: LossWeights::default().gamma,
        },
        (k, _) => k,
    };
    let (instances, max_rel_error, value) = if a.inputs.is_empty() {
        let seed = required(a.seed, cfg.seed, "seed")?;
        let mut rng = keyed_stream("loss-check", seed, &[]);
        let mut worst: f64 = 0.0;
        for _ in 0..a.instances {
            let inputs = random_instance(&kernel, eps, &mut rng);
            worst = worst.max(grad_check(&kernel, &inputs, eps)?.max_rel_error);
        }
        (a.instances, worst, None)
    } else {
        let inputs: Vec<_> = a.inputs.iter().map(|p| read_tensor(p)).collect::<Result<_>>()?;
        let r = grad_check(&kernel, &inputs, eps)?;
        (1, r.max_rel_error, Some(r.value))
    };
    let pass = max_rel_error < GRAD_TOLERANCE;
    emit(
        out,
        json!({
            "kernel": kernel,
            "instances": instances,
            "eps": eps,
            "value": value,
            "max_rel_error": max_rel_error,
            "pass": pass,
        }),
    )?;
    if !pass {
        return Err(Error::Invariant(format!(
            "gradient check failed: relative error {max_rel_error:e} >= {GRAD_TOLERANCE:e}"
        )));
    }
    Ok(())
}
