//! File formats: JSON Lines frame streams, JSON gesture clouds and dataset
//! manifests. All numbers are read and written as 64-bit floats with
//! shortest round-trip formatting, so write→read is lossless.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud::{Frame, FrameStream, GestureCloud, Point};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    frame_rate: f64,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    frame: u64,
    t: f64,
    points: Vec<[f64; 5]>,
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse { line, msg: e.to_string() }
}

fn to_rows(points: &[Point<f64>]) -> Vec<[f64; 5]> {
    points.iter().map(Point::to_array).collect()
}

/// Header line followed by one line per frame.
pub fn render_stream(stream: &FrameStream<f64>) -> String {
    let header = StreamHeader { frame_rate: stream.frame_rate, meta: stream.meta.clone() };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for f in &stream.frames {
        let rec = FrameRecord { frame: f.index, t: f.t, points: to_rows(&f.points) };
        out.push_str(&serde_json::to_string(&rec).expect("frame serializes"));
        out.push('\n');
    }
    out
}

/// Parses a stream document. Blank lines are skipped; line numbers in errors
/// are 1-based.
pub fn parse_stream(text: &str) -> Result<FrameStream<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "missing header line"))?;
    let header: StreamHeader = serde_json::from_str(header).map_err(|e| parse_err(hl + 1, e))?;
    if !(header.frame_rate > 0.0) {
        return Err(parse_err(hl + 1, format!("frame_rate must be positive, got {}", header.frame_rate)));
    }
    let mut stream = FrameStream::new(header.frame_rate);
    stream.meta = header.meta;
    for (i, line) in lines {
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| parse_err(i + 1, e))?;
        if stream.frames.last().is_some_and(|f| f.index >= rec.frame) {
            return Err(Error::NonMonotoneFrames { line: i + 1 });
        }
        let points = rec.points.into_iter().map(Point::from_array).collect();
        stream.frames.push(Frame { index: rec.frame, t: rec.t, points });
    }
    Ok(stream)
}

pub fn write_stream(stream: &FrameStream<f64>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, render_stream(stream))?)
}

pub fn read_stream(path: impl AsRef<Path>) -> Result<FrameStream<f64>> {
    parse_stream(&fs::read_to_string(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CloudRecord {
    start_frame: u64,
    end_frame: u64,
    #[serde(default)]
    source: String,
    points: Vec<[f64; 5]>,
}

pub fn render_cloud(c: &GestureCloud<f64>) -> String {
    let rec = CloudRecord { start_frame: c.start_frame, end_frame: c.end_frame, source: c.source.clone(), points: to_rows(&c.points) };
    serde_json::to_string(&rec).expect("cloud serializes") + "\n"
}

pub fn parse_cloud(text: &str) -> Result<GestureCloud<f64>> {
    let rec: CloudRecord = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e))?;
    Ok(GestureCloud {
        points: rec.points.into_iter().map(Point::from_array).collect(),
        start_frame: rec.start_frame,
        end_frame: rec.end_frame,
        source: rec.source,
    })
}

pub fn write_cloud(c: &GestureCloud<f64>, path: impl AsRef<Path>) -> Result<()> {
    Ok(fs::write(path, render_cloud(c))?)
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<GestureCloud<f64>> {
    parse_cloud(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Cloud file, relative to the manifest's directory.
    pub path: String,
    pub gesture: usize,
    pub user: usize,
}

/// Labeled cloud files. Labels index into the name lists.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub gestures: Vec<String>,
    pub users: Vec<String>,
    pub clouds: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        for e in &self.clouds {
            if e.gesture >= self.gestures.len() {
                return Err(Error::LabelOutOfRange { label: e.gesture, classes: self.gestures.len() });
            }
            if e.user >= self.users.len() {
                return Err(Error::LabelOutOfRange { label: e.user, classes: self.users.len() });
            }
        }
        Ok(())
    }

    pub fn gesture_labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|e| e.gesture).collect()
    }

    pub fn user_labels(&self) -> Vec<usize> {
        self.clouds.iter().map(|e| e.user).collect()
    }

    /// Reads every listed cloud, resolving paths against `base`.
    pub fn load_clouds(&self, base: impl AsRef<Path>) -> Result<Vec<GestureCloud<f64>>> {
        self.clouds.iter().map(|e| read_cloud(base.as_ref().join(&e.path))).collect()
    }
}

pub fn write_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    m.validate()?;
    Ok(fs::write(path, serde_json::to_string_pretty(m).expect("manifest serializes") + "\n")?)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| parse_err(e.line(), e))?;
    m.validate()?;
    Ok(m)
}
