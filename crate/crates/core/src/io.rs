//! On-disk formats: annotation JSON, binary PGM/PPM, raw tensors and the
//! silhouette pool / mask manifest documents.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::RgbImage;
use crate::error::{Error, Result};
use crate::geometry::{Junction, LineSegment, MaskBitmap, WireframeAnnotation};
use crate::losses::Tensor;
use crate::maskgen::{BBox, HoleType, PlacementMode, SilhouetteEntry};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see
/// a partial file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Invariant(e.to_string()))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// JSON layout of a [`WireframeAnnotation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub width: u32,
    pub height: u32,
    pub lines: Vec<[f64; 4]>,
    pub junctions: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub junction_scores: Option<Vec<f64>>,
}

fn all_or_none(scores: impl ExactSizeIterator<Item = Option<f64>>, field: &str) -> Result<Option<Vec<f64>>> {
    let n = scores.len();
    let present: Vec<f64> = scores.flatten().collect();
    match present.len() {
        0 if n > 0 => Ok(None),
        k if k == n => Ok((n > 0).then_some(present)),
        _ => Err(Error::Format(format!("`{field}` given for some entries but not all"))),
    }
}

impl AnnotationFile {
    pub fn from_annotation(ann: &WireframeAnnotation) -> Result<Self> {
        Ok(Self {
            width: ann.width,
            height: ann.height,
            lines: ann.lines.iter().map(|l| [l.p1.x, l.p1.y, l.p2.x, l.p2.y]).collect(),
            junctions: ann.junctions.iter().map(|j| [j.position.x, j.position.y]).collect(),
            scores: all_or_none(ann.lines.iter().map(|l| l.score), "scores")?,
            junction_scores: all_or_none(ann.junctions.iter().map(|j| j.score), "junction_scores")?,
        })
    }

    pub fn into_annotation(self, path: &Path) -> Result<WireframeAnnotation> {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            message,
        };
        if self.width == 0 || self.height == 0 {
            return Err(parse_err(format!("field `width`/`height`: empty frame {}x{}", self.width, self.height)));
        }
        if let Some(s) = &self.scores {
            if s.len() != self.lines.len() {
                return Err(parse_err(format!(
                    "field `scores`: {} scores for {} lines",
                    s.len(),
                    self.lines.len()
                )));
            }
        }
        if let Some(s) = &self.junction_scores {
            if s.len() != self.junctions.len() {
                return Err(parse_err(format!(
                    "field `junction_scores`: {} scores for {} junctions",
                    s.len(),
                    self.junctions.len()
                )));
            }
        }
        let mut ann = WireframeAnnotation::new(self.width, self.height);
        ann.lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(i, &[x1, y1, x2, y2])| {
                let l = LineSegment::from_coords(x1, y1, x2, y2);
                match &self.scores {
                    Some(s) => l.with_score(s[i]),
                    None => l,
                }
            })
            .collect();
        ann.junctions = self
            .junctions
            .iter()
            .enumerate()
            .map(|(i, &[x, y])| {
                let j = Junction::at(x, y);
                match &self.junction_scores {
                    Some(s) => j.with_score(s[i]),
                    None => j,
                }
            })
            .collect();
        if let Some(p) = ann.first_out_of_bounds() {
            return Err(Error::Bounds {
                path: path.to_path_buf(),
                x: p.x,
                y: p.y,
                width: ann.width,
                height: ann.height,
            });
        }
        Ok(ann)
    }
}

pub fn parse_annotation(bytes: &[u8], path: &Path) -> Result<WireframeAnnotation> {
    let file: AnnotationFile = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    file.into_annotation(path)
}

pub fn load_annotation(path: &Path) -> Result<WireframeAnnotation> {
    parse_annotation(&read_bytes(path)?, path)
}

/// Compact JSON with shortest round-trip float formatting.
pub fn annotation_to_json(ann: &WireframeAnnotation) -> Result<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec(&AnnotationFile::from_annotation(ann)?).map_err(|e| Error::Invariant(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn save_annotation(path: &Path, ann: &WireframeAnnotation) -> Result<()> {
    write_bytes(path, &annotation_to_json(ann)?)
}

/// A decoded binary netpbm raster, 1 (P5) or 3 (P6) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Pnm {
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = bytes.get(..2).ok_or_else(|| Error::Format("truncated netpbm header".into()))?;
        pos += 2;
        let channels = match magic {
            b"P5" => 1,
            b"P6" => 3,
            b"P1" | b"P2" | b"P3" => {
                return Err(Error::Format(format!(
                    "ASCII netpbm variant {} is not supported",
                    String::from_utf8_lossy(magic)
                )))
            }
            _ => return Err(Error::Format("not a binary PGM/PPM file".into())),
        };
        let mut field = || -> Result<usize> {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    _ => break,
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad netpbm header field at byte {start}")))
        };
        let width = field()?;
        let height = field()?;
        let maxval = field()?;
        if maxval != 255 {
            return Err(Error::Format(format!("maxval {maxval} unsupported, expected 255")));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::Format("missing whitespace after netpbm header".into()));
        }
        pos += 1;
        let n = width * height * channels;
        let data = bytes.get(pos..pos + n).ok_or_else(|| {
            Error::Format(format!("raster truncated: expected {n} bytes, found {}", bytes.len() - pos))
        })?;
        Ok(Self {
            width,
            height,
            channels,
            data: data.to_vec(),
        })
    }

    fn decode_at(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Hole pixels are 255 on disk, known pixels 0.
pub fn mask_to_pgm(mask: &MaskBitmap) -> Vec<u8> {
    Pnm {
        width: mask.width(),
        height: mask.height(),
        channels: 1,
        data: mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect(),
    }
    .encode()
}

/// Decodes a P5 mask; values >= 128 are holes.
pub fn mask_from_pgm(bytes: &[u8]) -> Result<MaskBitmap> {
    let pnm = Pnm::decode(bytes)?;
    if pnm.channels != 1 {
        return Err(Error::Format("masks must be single-channel P5".into()));
    }
    let bits = pnm.data.iter().map(|&v| v >= 128).collect();
    MaskBitmap::from_bits(pnm.width, pnm.height, bits).ok_or_else(|| Error::Invariant("mask size".into()))
}

pub fn read_mask(path: &Path) -> Result<MaskBitmap> {
    mask_from_pgm(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_mask(path: &Path, mask: &MaskBitmap) -> Result<()> {
    write_bytes(path, &mask_to_pgm(mask))
}

/// Reads a P6 image; P5 input is replicated across channels.
pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let pnm = Pnm::decode_at(path)?;
    let data = if pnm.channels == 3 {
        pnm.data
    } else {
        pnm.data.iter().flat_map(|&v| [v; 3]).collect()
    };
    RgbImage::from_raw(pnm.width, pnm.height, data).ok_or_else(|| Error::Invariant("image size".into()))
}

pub fn rgb_to_ppm(img: &RgbImage) -> Vec<u8> {
    Pnm {
        width: img.width(),
        height: img.height(),
        channels: 3,
        data: img.as_raw().to_vec(),
    }
    .encode()
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &rgb_to_ppm(img))
}

/// Little-endian `u64` rank, `u64` dims, then `f64` values in row-major order.
pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * (1 + t.shape().len() + t.len()));
    out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    let mut words = bytes.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("chunk of 8"));
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Format("tensor file length is not a multiple of 8".into()));
    }
    let mut next_u64 = || words.next().map(u64::from_le_bytes);
    let rank = next_u64().ok_or_else(|| Error::Format("empty tensor file".into()))? as usize;
    if rank > 8 {
        return Err(Error::Format(format!("tensor rank {rank} too large")));
    }
    let shape: Vec<usize> = (0..rank)
        .map(|_| next_u64().map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Format("truncated tensor shape".into()))?;
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor size overflows".into()))?;
    let header = 8 * (1 + rank);
    if bytes.len() - header != 8 * n {
        return Err(Error::Format(format!(
            "tensor shape {shape:?} needs {} data bytes, found {}",
            8 * n,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    tensor_from_bytes(&read_bytes(path)?).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    write_bytes(path, &tensor_to_bytes(t))
}

/// Run-length encoding of a bitmap in row-major order, starting with a
/// run of known pixels (possibly empty).
pub fn encode_runs(mask: &MaskBitmap) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &b in mask.bits() {
        if b != current {
            runs.push(len);
            current = b;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn decode_runs(width: usize, height: usize, runs: &[u32]) -> Result<MaskBitmap> {
    let mut bits = Vec::with_capacity(width * height);
    for (i, &r) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(i % 2 == 1, r as usize));
    }
    MaskBitmap::from_bits(width, height, bits)
        .ok_or_else(|| Error::Format(format!("run lengths do not cover a {width}x{height} bitmap")))
}

/// Serialized silhouette with its cropped bitmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteRecord {
    pub source: String,
    pub area: usize,
    pub bbox: BBox,
    pub interval: Option<usize>,
    pub runs: Vec<u32>,
}

impl SilhouetteRecord {
    pub fn new(source: impl Into<String>, entry: &SilhouetteEntry) -> Self {
        Self {
            source: source.into(),
            area: entry.area,
            bbox: entry.bbox,
            interval: entry.interval,
            runs: encode_runs(&entry.bitmap),
        }
    }

    pub fn to_entry(&self) -> Result<SilhouetteEntry> {
        let bitmap = decode_runs(self.bbox.w, self.bbox.h, &self.runs)?;
        if bitmap.hole_count() != self.area {
            return Err(Error::Format(format!(
                "silhouette `{}` declares area {} but its bitmap has {}",
                self.source,
                self.area,
                bitmap.hole_count()
            )));
        }
        Ok(SilhouetteEntry {
            bitmap,
            area: self.area,
            bbox: self.bbox,
            interval: self.interval,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouettePoolFile {
    pub seed: u64,
    pub per_interval: usize,
    pub silhouettes: Vec<SilhouetteRecord>,
}

impl SilhouettePoolFile {
    pub fn entries(&self) -> Result<Vec<SilhouetteEntry>> {
        self.silhouettes.iter().map(SilhouetteRecord::to_entry).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub interval: usize,
    pub candidate: usize,
    /// Relative to the manifest's directory.
    pub path: String,
    pub hole_fraction: f64,
    pub hole_type: HoleType,
    pub fallback: bool,
    pub zero_overlap: bool,
    pub silhouette: usize,
    pub offset: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub seed: u64,
    pub mode: PlacementMode,
    pub frame: (usize, usize),
    pub candidates: usize,
    pub intervals: (usize, usize),
    pub max_attempts: usize,
    pub masks: Vec<ManifestEntry>,
}

/// File stems of regular files with the given extension, sorted.
pub fn list_stems(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use rand::{Rng, SeedableRng};

    fn p() -> &'static Path {
        Path::new("mem.json")
    }

    #[test]
    fn annotation_examples() {
        let ann = parse_annotation(br#"{"width":4,"height":4,"lines":[],"junctions":[]}"#, p()).unwrap();
        assert_eq!(ann, WireframeAnnotation::new(4, 4));
        let ann = parse_annotation(
            br#"{"width":8,"height":8,"lines":[[0,0,4,4]],"junctions":[[0,0],[4,4]],"scores":[0.5]}"#,
            p(),
        )
        .unwrap();
        assert_eq!((ann.lines.len(), ann.junctions.len()), (1, 2));
        assert_eq!(ann.lines[0].score, Some(0.5));

        let err = parse_annotation(br#"{"width":4,"height":4,"lines":[[0,0,1]"#, p()).unwrap_err();
        assert_eq!(err.kind(), "ParseError");
        assert!(err.to_string().contains("line 1"), "{err}");
        let err = parse_annotation(br#"{"width":4,"height":4,"lines":[[0,0,5,1]],"junctions":[]}"#, p()).unwrap_err();
        assert!(matches!(err, Error::Bounds { x, .. } if x == 5.0));
        let err = parse_annotation(
            br#"{"width":4,"height":4,"lines":[[0,0,1,1]],"junctions":[],"scores":[0.1,0.2]}"#,
            p(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("scores"), "{err}");
        let err = parse_annotation(br#"{"width":4,"height":4,"lines":[],"junctions":[],"extra":1}"#, p()).unwrap_err();
        assert_eq!(err.kind(), "ParseError");
    }

    #[test]
    fn annotation_round_trip_is_bit_exact() {
        let mut rng = StreamRng::seed_from_u64(5);
        for _ in 0..50 {
            let (w, h) = (rng.random_range(1..600u32), rng.random_range(1..600u32));
            let mut ann = WireframeAnnotation::new(w, h);
            let scored = rng.random_bool(0.5);
            for _ in 0..rng.random_range(0..20) {
                let l = LineSegment::from_coords(
                    rng.random_range(0.0..=f64::from(w)),
                    rng.random_range(0.0..=f64::from(h)),
                    rng.random_range(0.0..=f64::from(w)),
                    rng.random_range(0.0..=f64::from(h)),
                );
                ann.lines.push(if scored { l.with_score(rng.random()) } else { l });
            }
            for _ in 0..rng.random_range(0..20) {
                ann.junctions.push(Junction::at(rng.random_range(0.0..=f64::from(w)), rng.random_range(0.0..=f64::from(h))));
            }
            let bytes = annotation_to_json(&ann).unwrap();
            let back = parse_annotation(&bytes, p()).unwrap();
            assert_eq!(back, ann);
            assert_eq!(annotation_to_json(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn partial_scores_cannot_be_saved() {
        let mut ann = WireframeAnnotation::new(4, 4);
        ann.lines.push(LineSegment::from_coords(0.0, 0.0, 1.0, 1.0).with_score(0.2));
        ann.lines.push(LineSegment::from_coords(0.0, 0.0, 2.0, 1.0));
        assert_eq!(annotation_to_json(&ann).unwrap_err().kind(), "FormatError");
    }

    #[test]
    fn pnm_examples() {
        let full = Pnm {
            width: 512,
            height: 512,
            channels: 1,
            data: vec![255; 512 * 512],
        };
        let mask = mask_from_pgm(&full.encode()).unwrap();
        assert_eq!(mask.hole_fraction(), 1.0);

        let ascii = b"P2\n2 1\n255\n0 255\n";
        assert_eq!(Pnm::decode(ascii).unwrap_err().kind(), "FormatError");
        let deep = b"P5\n1 1\n65535\n\0\0";
        assert_eq!(Pnm::decode(deep).unwrap_err().kind(), "FormatError");
        let short = b"P5\n2 2\n255\n\0\0\0";
        assert_eq!(Pnm::decode(short).unwrap_err().kind(), "FormatError");
        let commented = b"P5\n# made by hand\n2 1\n255\n\x7f\x80";
        let m = mask_from_pgm(commented).unwrap();
        assert_eq!(m.bits(), &[false, true]);
    }

    #[test]
    fn pnm_round_trips() {
        let mut rng = StreamRng::seed_from_u64(6);
        for channels in [1, 3] {
            for _ in 0..10 {
                let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
                let data = (0..w * h * channels).map(|_| rng.random()).collect();
                let pnm = Pnm { width: w, height: h, channels, data };
                assert_eq!(Pnm::decode(&pnm.encode()).unwrap(), pnm);
            }
        }
        let mask = MaskBitmap::from_fn(17, 9, |x, y| (x * 7 + y * 3) % 5 == 0);
        assert_eq!(mask_from_pgm(&mask_to_pgm(&mask)).unwrap(), mask);
    }

    #[test]
    fn tensor_round_trip() {
        let t = Tensor::from_fn(vec![2, 3, 4], |i| (i as f64).sin() * 1e-300);
        assert_eq!(tensor_from_bytes(&tensor_to_bytes(&t)).unwrap(), t);
        let bytes = tensor_to_bytes(&t);
        assert_eq!(tensor_from_bytes(&bytes[..bytes.len() - 8]).unwrap_err().kind(), "FormatError");
    }

    #[test]
    fn runs_round_trip() {
        for mask in [
            MaskBitmap::empty(5, 3),
            MaskBitmap::full(4, 4),
            MaskBitmap::from_fn(9, 7, |x, y| x > y),
        ] {
            let runs = encode_runs(&mask);
            assert_eq!(decode_runs(mask.width(), mask.height(), &runs).unwrap(), mask);
        }
        assert!(decode_runs(2, 2, &[1, 1]).is_err());
    }
}
