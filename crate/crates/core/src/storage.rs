//! On-disk dataset layout and score files.
//!
//! ```text
//! root/
//!   manifest.json                 labels and seeds of every video
//!   <video_id>/meta.json          camera, frame count, depth encoding
//!   <video_id>/rgb_000.png        8-bit RGB
//!   <video_id>/depth_000.png      16-bit (or 8-bit) grayscale depth
//!   <video_id>/mask_000.png       8-bit object ids
//!   latent/<video_id>.json        ground-truth trajectory
//! ```
//!
//! Depth is stored as `round(max · (d − near) / (far − near))` where `max` is
//! 65535 for 16-bit planes and 255 for 8-bit ones.
//!
//! A score file holds one JSON object per line:
//! `{"video_id": "...", "s": 0.0, "s_img": 0.0, "s_dyn": 0.0, "agent": "..."}`
//! with `s_img` and `s_dyn` optional.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Dataset, DatasetKind, GenConfig, Observation, VideoMeta, VideoRecord};
use crate::metrics::ScoredVideo;
use crate::render::{Frame, MaskSet};
use crate::dynamics::Trajectory;
use crate::world::{Camera, MAX_OBJECTS};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";
pub const LATENT_DIR: &str = "latent";

/// Decoded planes larger than this are rejected.
const MAX_PLANE_BYTES: usize = 64 << 20;
const MAX_META_FRAMES: usize = 1000;
const MAX_DIMENSION: u32 = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthBits {
    #[default]
    #[serde(rename = "16")]
    Sixteen,
    #[serde(rename = "8")]
    Eight,
}

impl DepthBits {
    fn max(self) -> f64 {
        match self {
            DepthBits::Sixteen => 65535.0,
            DepthBits::Eight => 255.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteOptions {
    pub depth_bits: DepthBits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub config: GenConfig,
    pub videos: Vec<VideoMeta>,
}

impl Manifest {
    pub fn find(&self, video_id: &str) -> Option<&VideoMeta> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }
}

/// Per-video metadata visible to models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoFileMeta {
    pub video_id: String,
    pub camera: Camera,
    pub frames: usize,
    pub depth_bits: DepthBits,
}

pub fn rgb_file(frame: usize) -> String {
    format!("rgb_{frame:03}.png")
}

pub fn depth_file(frame: usize) -> String {
    format!("depth_{frame:03}.png")
}

pub fn mask_file(frame: usize) -> String {
    format!("mask_{frame:03}.png")
}

pub fn quantize_depth(d: f64, camera: &Camera, bits: DepthBits) -> u16 {
    let t = ((d - camera.near) / (camera.far - camera.near)).clamp(0.0, 1.0);
    (bits.max() * t).round() as u16
}

pub fn dequantize_depth(px: u16, camera: &Camera, bits: DepthBits) -> f64 {
    camera.near + px as f64 / bits.max() * (camera.far - camera.near)
}

/// A decoded PNG image: 8-bit samples, or 16-bit samples stored big-endian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plane {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub bit_depth: u8,
    pub data: Vec<u8>,
}

impl Plane {
    fn expect(&self, width: u32, height: u32, channels: usize, bit_depth: u8) -> std::result::Result<(), String> {
        if (self.width, self.height) != (width, height) {
            return Err(format!("expected {width}x{height}, found {}x{}", self.width, self.height));
        }
        if (self.channels, self.bit_depth) != (channels, bit_depth) {
            return Err(format!(
                "expected {channels} channel(s) at {bit_depth} bits, found {} at {}",
                self.channels, self.bit_depth
            ));
        }
        Ok(())
    }
}

pub fn encode_png(width: u32, height: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let fail = |e: png::EncodingError| Error::format("<png>", e.to_string());
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut w = enc.write_header().map_err(fail)?;
        w.write_image_data(data).map_err(fail)?;
        w.finish().map_err(fail)?;
    }
    Ok(out)
}

pub fn encode_rgb_png(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    encode_png(width, height, png::ColorType::Rgb, png::BitDepth::Eight, rgb)
}

/// Decodes a grayscale or RGB PNG without palette expansion.
pub fn decode_png(bytes: &[u8]) -> std::result::Result<Plane, String> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_limits(png::Limits { bytes: MAX_PLANE_BYTES });
    let mut reader = dec.read_info().map_err(|e| e.to_string())?;
    let size = reader.output_buffer_size().ok_or("image too large")?;
    if size > MAX_PLANE_BYTES {
        return Err("image too large".into());
    }
    let mut data = vec![0; size];
    let info = reader.next_frame(&mut data).map_err(|e| e.to_string())?;
    data.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(format!("unsupported color type {other:?}")),
    };
    let bit_depth = match info.bit_depth {
        png::BitDepth::Eight => 8,
        png::BitDepth::Sixteen => 16,
        other => return Err(format!("unsupported bit depth {other:?}")),
    };
    Ok(Plane { width: info.width, height: info.height, channels, bit_depth, data })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

fn encode_frame(frame: &Frame, mask: &MaskSet, camera: &Camera, bits: DepthBits) -> Result<[Vec<u8>; 3]> {
    use png::{BitDepth, ColorType};
    let (w, h) = (frame.width, frame.height);
    let rgb = encode_png(w, h, ColorType::Rgb, BitDepth::Eight, &frame.rgb)?;
    let depth = match bits {
        DepthBits::Sixteen => {
            let data: Vec<u8> =
                frame.depth.iter().flat_map(|&d| quantize_depth(d as f64, camera, bits).to_be_bytes()).collect();
            encode_png(w, h, ColorType::Grayscale, BitDepth::Sixteen, &data)?
        }
        DepthBits::Eight => {
            let data: Vec<u8> = frame.depth.iter().map(|&d| quantize_depth(d as f64, camera, bits) as u8).collect();
            encode_png(w, h, ColorType::Grayscale, BitDepth::Eight, &data)?
        }
    };
    let ids = encode_png(w, h, ColorType::Grayscale, BitDepth::Eight, &mask.ids)?;
    Ok([rgb, depth, ids])
}

/// Writes the model-facing files of one video and its latent sidecar.
pub fn write_video(record: &VideoRecord, root: &Path, options: WriteOptions) -> Result<()> {
    let id = &record.meta.video_id;
    let dir = root.join(id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let camera = record.latent.scene.camera;
    for (f, (frame, mask)) in record.frames.iter().zip(&record.masks).enumerate() {
        let [rgb, depth, ids] = encode_frame(frame, mask, &camera, options.depth_bits)?;
        write_file(&dir.join(rgb_file(f)), &rgb)?;
        write_file(&dir.join(depth_file(f)), &depth)?;
        write_file(&dir.join(mask_file(f)), &ids)?;
    }
    let meta = VideoFileMeta { video_id: id.clone(), camera, frames: record.frames.len(), depth_bits: options.depth_bits };
    write_json(&dir.join(META_FILE), &meta)?;
    let latent = root.join(LATENT_DIR);
    fs::create_dir_all(&latent).map_err(|e| Error::io(&latent, e))?;
    write_json(&latent.join(format!("{id}.json")), &record.latent)
}

/// Renders and writes every video, then the manifest.
pub fn write_dataset(dataset: &Dataset, root: &Path, options: WriteOptions) -> Result<Manifest> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    dataset.videos.par_iter().try_for_each(|v| write_video(&v.render(), root, options))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        kind: dataset.kind,
        config: dataset.config.clone(),
        videos: dataset.videos.iter().map(|v| v.meta.clone()).collect(),
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    parse_manifest(&bytes).map_err(|m| Error::format(path, m))
}

/// Parses and checks a manifest: version, config and unique video ids.
pub fn parse_manifest(bytes: &[u8]) -> std::result::Result<Manifest, String> {
    let m: Manifest = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    if m.format_version != FORMAT_VERSION {
        return Err(format!("unsupported format_version {}", m.format_version));
    }
    m.config.validate().map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    for v in &m.videos {
        if !seen.insert(v.video_id.as_str()) {
            return Err(format!("video {} listed twice", v.video_id));
        }
    }
    Ok(m)
}

/// Parses a video's meta.json and rejects cameras no writer produces.
pub fn parse_video_meta(bytes: &[u8]) -> std::result::Result<VideoFileMeta, String> {
    let m: VideoFileMeta = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    let c = &m.camera;
    if !(1..=MAX_META_FRAMES).contains(&m.frames) {
        return Err(format!("frame count {} outside 1..={MAX_META_FRAMES}", m.frames));
    }
    if !(1..=MAX_DIMENSION).contains(&c.width) || !(1..=MAX_DIMENSION).contains(&c.height) {
        return Err(format!("image size {}x{} outside 1..={MAX_DIMENSION}", c.width, c.height));
    }
    let finite = [c.x_min, c.x_max, c.y_min, c.y_max, c.near, c.far].iter().all(|v| v.is_finite());
    if !finite || c.x_min >= c.x_max || c.y_min >= c.y_max || c.near < 0.0 || c.near >= c.far {
        return Err("invalid camera".into());
    }
    Ok(m)
}

fn read_plane(path: &Path) -> Result<Plane> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|m| Error::format(path, m))
}

/// Reads one video's frames and masks. The latent sidecar is never touched.
pub fn read_video(root: &Path, video_id: &str) -> Result<Observation> {
    let manifest = read_manifest(root)?;
    if manifest.find(video_id).is_none() {
        return Err(Error::UnknownVideo(video_id.to_string()));
    }
    read_video_files(&root.join(video_id))
}

/// Reads a video directory without consulting a manifest.
pub fn read_video_files(dir: &Path) -> Result<Observation> {
    let meta_path = dir.join(META_FILE);
    let bytes = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta = parse_video_meta(&bytes).map_err(|m| Error::format(&meta_path, m))?;
    let cam = meta.camera;
    let (w, h) = (cam.width, cam.height);
    let mut frames = Vec::with_capacity(meta.frames);
    let mut masks = Vec::with_capacity(meta.frames);
    for f in 0..meta.frames {
        let p = dir.join(rgb_file(f));
        let rgb = read_plane(&p)?;
        rgb.expect(w, h, 3, 8).map_err(|m| Error::format(&p, m))?;

        let p = dir.join(depth_file(f));
        let dp = read_plane(&p)?;
        let depth: Vec<f32> = match meta.depth_bits {
            DepthBits::Sixteen => {
                dp.expect(w, h, 1, 16).map_err(|m| Error::format(&p, m))?;
                dp.data
                    .chunks_exact(2)
                    .map(|b| dequantize_depth(u16::from_be_bytes([b[0], b[1]]), &cam, meta.depth_bits) as f32)
                    .collect()
            }
            DepthBits::Eight => {
                dp.expect(w, h, 1, 8).map_err(|m| Error::format(&p, m))?;
                dp.data.iter().map(|&b| dequantize_depth(b as u16, &cam, meta.depth_bits) as f32).collect()
            }
        };

        let p = dir.join(mask_file(f));
        let mp = read_plane(&p)?;
        mp.expect(w, h, 1, 8).map_err(|m| Error::format(&p, m))?;
        if let Some(&bad) = mp.data.iter().find(|&&i| i as usize >= MAX_OBJECTS + 2) {
            return Err(Error::format(&p, format!("mask id {bad} out of range")));
        }

        frames.push(Frame { width: w, height: h, rgb: rgb.data, depth });
        masks.push(MaskSet { width: w, height: h, ids: mp.data });
    }
    Ok(Observation { video_id: meta.video_id, camera: cam, frames, masks })
}

pub fn read_latent(root: &Path, video_id: &str) -> Result<Trajectory> {
    read_json(&root.join(LATENT_DIR).join(format!("{video_id}.json")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub video_id: String,
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_img: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_dyn: Option<f64>,
    pub agent: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScore {
    video_id: String,
    s: serde_json::Value,
    #[serde(default)]
    s_img: Option<serde_json::Value>,
    #[serde(default)]
    s_dyn: Option<serde_json::Value>,
    agent: String,
}

fn number(v: &serde_json::Value, field: &str) -> std::result::Result<f64, String> {
    let x = match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| format!("{field} is not a number"))?,
        // Non-finite values have no JSON literal; accept the common spellings so they can be reported.
        serde_json::Value::String(s) => match s.to_ascii_lowercase().as_str() {
            "nan" | "inf" | "+inf" | "-inf" | "infinity" | "+infinity" | "-infinity" => f64::NAN,
            _ => return Err(format!("{field} is not a number")),
        },
        _ => return Err(format!("{field} is not a number")),
    };
    if !x.is_finite() {
        return Err(format!("non-finite {}", if field == "s" { "score" } else { field }));
    }
    if x < 0.0 {
        return Err(format!("negative {}", if field == "s" { "score" } else { field }));
    }
    Ok(x)
}

/// Parses one score line. `line` is 1-based and only used in errors.
pub fn parse_score_line(text: &str, line: usize) -> Result<ScoreRecord> {
    let err = |message: String| Error::ScoreLine { line, message };
    let raw: RawScore = serde_json::from_str(text).map_err(|e| err(format!("invalid record: {e}")))?;
    if raw.video_id.is_empty() {
        return Err(err("empty video_id".into()));
    }
    let s = number(&raw.s, "s").map_err(err)?;
    let s_img = raw.s_img.as_ref().map(|v| number(v, "s_img")).transpose().map_err(err)?;
    let s_dyn = raw.s_dyn.as_ref().map(|v| number(v, "s_dyn")).transpose().map_err(err)?;
    Ok(ScoreRecord { video_id: raw.video_id, s, s_img, s_dyn, agent: raw.agent })
}

pub fn format_score_line(r: &ScoreRecord) -> String {
    serde_json::to_string(r).expect("score records serialize")
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        writeln!(out, "{}", format_score_line(r)).map_err(|e| Error::io(path, e))?;
    }
    write_file(path, &out)
}

/// Parses a score file, rejecting duplicates. Blank lines are skipped.
pub fn read_scores(path: &Path) -> Result<Vec<(usize, ScoreRecord)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scores(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_scores(reader: impl BufRead) -> Result<Vec<(usize, ScoreRecord)>> {
    let mut out = Vec::new();
    let mut first: HashMap<String, usize> = HashMap::new();
    let mut agent: Option<(String, usize)> = None;
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| Error::io(PathBuf::new(), e))?;
        if text.trim().is_empty() {
            continue;
        }
        let r = parse_score_line(&text, line)?;
        if let Some(prev) = first.get(&r.video_id) {
            return Err(Error::ScoreLine { line, message: format!("duplicate video_id {} (first on line {prev})", r.video_id) });
        }
        match &agent {
            Some((a, l)) if *a != r.agent => {
                return Err(Error::ScoreLine { line, message: format!("agent {} differs from {a} on line {l}", r.agent) })
            }
            None => agent = Some((r.agent.clone(), line)),
            _ => {}
        }
        first.insert(r.video_id.clone(), line);
        out.push((line, r));
    }
    Ok(out)
}

/// Joins parsed scores with the manifest's labels.
pub fn join_scores(records: &[(usize, ScoreRecord)], manifest: &Manifest) -> Result<Vec<ScoredVideo>> {
    if manifest.kind != DatasetKind::Test {
        return Err(Error::Config("scores can only be evaluated against a test dataset".into()));
    }
    let mut by_id: HashMap<&str, (usize, &ScoreRecord)> = HashMap::new();
    for (line, r) in records {
        if manifest.find(&r.video_id).is_none() {
            return Err(Error::ScoreLine { line: *line, message: format!("unknown video id {}", r.video_id) });
        }
        if let Some((prev, _)) = by_id.insert(&r.video_id, (*line, r)) {
            return Err(Error::ScoreLine { line: *line, message: format!("duplicate video_id {} (first on line {prev})", r.video_id) });
        }
    }
    let missing: Vec<String> =
        manifest.videos.iter().filter(|v| !by_id.contains_key(v.video_id.as_str())).map(|v| v.video_id.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingScores(missing));
    }
    manifest
        .videos
        .iter()
        .map(|m| {
            let (line, r) = by_id[m.video_id.as_str()];
            let labelled = |what| Error::format(MANIFEST_FILE, format!("{} has no {what}", m.video_id));
            let v = ScoredVideo {
                video_id: m.video_id.clone(),
                scenario: m.scenario.ok_or_else(|| labelled("scenario"))?,
                setting: m.setting.ok_or_else(|| labelled("setting"))?,
                role: m.role.ok_or_else(|| labelled("role"))?,
                pair: m.pair,
                plausible: m.plausible,
                s: r.s,
                s_img: r.s_img,
                s_dyn: r.s_dyn,
            };
            v.validate().map_err(|e| Error::ScoreLine { line, message: e.to_string() })?;
            Ok(v)
        })
        .collect()
}

/// Reads a score file and joins it with the dataset at `root`.
pub fn ingest_scores(path: &Path, root: &Path) -> Result<Vec<ScoredVideo>> {
    let manifest = read_manifest(root)?;
    join_scores(&read_scores(path)?, &manifest)
}
