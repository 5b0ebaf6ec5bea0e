//! Demonstration data model and file I/O.
//!
//! A demonstration set is a list of trajectories, each an ordered list of
//! fixed-dimension feature vectors. Two on-disk formats are supported:
//!
//! * CSV: header `traj_id,frame_idx,v0,..,v{d-1}`, frames of a trajectory
//!   contiguous and ascending from 0.
//! * Binary: magic `RMD1`, little-endian u32 dimension, u32 trajectory
//!   count, then per trajectory a u32 frame count followed by the f64
//!   payload. Round-trips are bit-exact; trajectory ids are positional.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

const BINARY_MAGIC: &[u8; 4] = b"RMD1";

/// On-disk encoding for demonstration sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoFormat {
    Csv,
    Binary,
}

impl std::str::FromStr for DemoFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DemoFormat::Csv),
            "binary" | "bin" => Ok(DemoFormat::Binary),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// A fixed-dimension embedding of one environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature vector",
            });
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean distance to another vector of the same dimension.
    pub fn distance(&self, other: &FeatureVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One demonstration: an ordered sequence of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    frames: Vec<FeatureVector>,
}

impl Trajectory {
    /// Builds a trajectory; it must be non-empty and dimensionally uniform.
    pub fn new(id: impl Into<String>, frames: Vec<FeatureVector>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyInput("trajectory has no frames"));
        }
        let d = frames[0].dim();
        for f in &frames {
            if f.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    actual: f.dim(),
                });
            }
        }
        Ok(Trajectory {
            id: id.into(),
            frames,
        })
    }

    pub fn frames(&self) -> &[FeatureVector] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }
}

/// A set of trajectories sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    trajectories: Vec<Trajectory>,
    dim: usize,
}

impl DemonstrationSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::EmptyInput("demonstration set has no trajectories"));
        }
        let dim = trajectories[0].dim();
        for t in &trajectories {
            if t.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: t.dim(),
                });
            }
        }
        Ok(DemonstrationSet { trajectories, dim })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// All frames flattened row-major: trajectory order, then frame order.
    pub fn flat_points(&self) -> Vec<&FeatureVector> {
        self.trajectories
            .iter()
            .flat_map(|t| t.frames().iter())
            .collect()
    }

    /// Maps a flattened point index back to (trajectory index, frame index).
    pub fn locate(&self, flat_index: usize) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (ti, t) in self.trajectories.iter().enumerate() {
            if flat_index < offset + t.len() {
                return Some((ti, flat_index - offset));
            }
            offset += t.len();
        }
        None
    }

    /// Flattened indices of each trajectory's frame 0.
    pub fn first_frame_indices(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.trajectories.len());
        let mut offset = 0;
        for t in &self.trajectories {
            out.push(offset);
            offset += t.len();
        }
        out
    }
}

/// The image of one trajectory under the labeling function: per frame, the
/// set of true proposition ids (at most one when kappa is tuned).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractDemonstration {
    pub steps: Vec<Vec<usize>>,
}

impl AbstractDemonstration {
    pub fn new(steps: Vec<Vec<usize>>) -> Self {
        AbstractDemonstration { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Consecutively deduplicated non-empty labels, in order of appearance.
    pub fn subgoal_sequence(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for step in &self.steps {
            for &p in step {
                if out.last() != Some(&p) {
                    out.push(p);
                }
            }
        }
        out
    }
}

/// Loads a demonstration set from disk.
pub fn load_demonstrations(path: impl AsRef<Path>, format: DemoFormat) -> Result<DemonstrationSet> {
    match format {
        DemoFormat::Csv => load_csv(path.as_ref()),
        DemoFormat::Binary => load_binary(path.as_ref()),
    }
}

/// Saves a demonstration set to disk.
pub fn save_demonstrations(
    set: &DemonstrationSet,
    path: impl AsRef<Path>,
    format: DemoFormat,
) -> Result<()> {
    match format {
        DemoFormat::Csv => save_csv(set, path.as_ref()),
        DemoFormat::Binary => save_binary(set, path.as_ref()),
    }
}

fn save_csv(set: &DemonstrationSet, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec!["traj_id".to_string(), "frame_idx".to_string()];
    header.extend((0..set.dim()).map(|i| format!("v{i}")));
    wtr.write_record(&header).map_err(csv_io)?;
    for t in set.trajectories() {
        for (i, frame) in t.frames().iter().enumerate() {
            let mut rec = vec![t.id.clone(), i.to_string()];
            rec.extend(frame.as_slice().iter().map(|v| format_f64(*v)));
            wtr.write_record(&rec).map_err(csv_io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

// Shortest round-trip decimal form, matching serde_json's float output.
fn format_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json::Number preserves the shortest representation via ryu.
    serde_json::Number::from_f64(v)
        .map(|n| n.to_string())
        .unwrap_or_else(|| v.to_string())
}

fn csv_io(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        },
    }
}

fn load_csv(path: &Path) -> Result<DemonstrationSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_io)?;
    let headers = rdr.headers().map_err(csv_io)?.clone();
    if headers.len() < 3 {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `traj_id,frame_idx,v0,..`, found {} columns",
                headers.len()
            ),
        });
    }
    let dim = headers.len() - 2;

    let mut trajectories: Vec<Trajectory> = Vec::new();
    let mut current_id: Option<String> = None;
    let mut current_frames: Vec<FeatureVector> = Vec::new();

    for record in rdr.records() {
        let record = record.map_err(csv_io)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != dim + 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} fields, found {}", dim + 2, record.len()),
            });
        }
        let id = record[0].to_string();
        let frame_idx: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("invalid frame index `{}`", &record[1]),
        })?;
        let mut values = Vec::with_capacity(dim);
        for field in record.iter().skip(2) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid value `{field}`"),
            })?;
            values.push(v);
        }
        let frame = FeatureVector::new(values).map_err(|_| Error::Parse {
            line,
            msg: "non-finite value".to_string(),
        })?;

        let starts_new = current_id.as_deref() != Some(id.as_str());
        if starts_new {
            if let Some(prev) = current_id.take() {
                trajectories.push(Trajectory::new(prev, std::mem::take(&mut current_frames))?);
            }
            if trajectories.iter().any(|t| t.id == id) {
                return Err(Error::Parse {
                    line,
                    msg: format!("trajectory `{id}` is not contiguous"),
                });
            }
            if frame_idx != 0 {
                return Err(Error::Parse {
                    line,
                    msg: format!("trajectory `{id}` must start at frame 0, found {frame_idx}"),
                });
            }
            current_id = Some(id);
        } else if frame_idx != current_frames.len() {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "frame index {frame_idx} out of order (expected {})",
                    current_frames.len()
                ),
            });
        }
        current_frames.push(frame);
    }
    if let Some(prev) = current_id.take() {
        trajectories.push(Trajectory::new(prev, current_frames)?);
    }

    if trajectories.is_empty() {
        return Err(Error::EmptyInput("no data rows in csv file"));
    }
    DemonstrationSet::new(trajectories)
}

fn save_binary(set: &DemonstrationSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_u32::<LittleEndian>(set.dim() as u32)?;
    w.write_u32::<LittleEndian>(set.len() as u32)?;
    for t in set.trajectories() {
        w.write_u32::<LittleEndian>(t.len() as u32)?;
        for frame in t.frames() {
            for &v in frame.as_slice() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn load_binary(path: &Path) -> Result<DemonstrationSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Parse {
        line: 0,
        msg: "file too short for RMD1 header".to_string(),
    })?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse {
            line: 0,
            msg: "bad magic bytes (expected RMD1)".to_string(),
        });
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count == 0 {
        return Err(Error::EmptyInput("binary file holds no trajectories"));
    }
    if dim == 0 {
        return Err(Error::Parse {
            line: 0,
            msg: "dimension 0 in header".to_string(),
        });
    }
    let mut trajectories = Vec::with_capacity(count);
    for ti in 0..count {
        let frames = r.read_u32::<LittleEndian>()? as usize;
        let mut fv = Vec::with_capacity(frames);
        for _ in 0..frames {
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(r.read_f64::<LittleEndian>()?);
            }
            fv.push(FeatureVector::new(values)?);
        }
        trajectories.push(Trajectory::new(ti.to_string(), fv)?);
    }
    DemonstrationSet::new(trajectories)
}
