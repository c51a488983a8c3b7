//! Dataset directories: a manifest, three CSV indices and a folder of
//! grayscale images.
//!
//! ```text
//! dataset.toml        frames = frames.csv
//!                     odometry = odometry.csv
//!                     groundtruth = groundtruth.csv   (optional)
//!                     image_dir = images
//!                     image_format = pgm | png
//!                     odometry_kind = delta | heading_speed
//!                     groundtruth_kind = latlon | xy
//!                     resize = 640x480                 (optional)
//! frames.csv          timestamp,filename
//! odometry.csv        timestamp,delta_s,delta_theta  |  timestamp,heading,speed
//! groundtruth.csv     timestamp,lat,lon  |  timestamp,x,y
//! ```

use std::path::{Path, PathBuf};

use crate::config::key_values;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, OdometryDelta};
use crate::local_view::Frame;

pub const MANIFEST_NAME: &str = "dataset.toml";

/// Mean Earth radius used by the local projection, meters.
pub const EARTH_RADIUS: f64 = 6_378_137.0;

/// Largest gap allowed when joining ground truth to a frame, seconds.
pub const GT_JOIN_WINDOW: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageKind {
    Pgm,
    Png,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdometryKind {
    Delta,
    HeadingSpeed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroundTruthKind {
    LatLon,
    Xy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub frames: String,
    pub odometry: String,
    pub groundtruth: Option<String>,
    pub image_dir: String,
    pub image_format: ImageKind,
    pub odometry_kind: OdometryKind,
    pub groundtruth_kind: GroundTruthKind,
    pub resize: Option<(u32, u32)>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            frames: "frames.csv".into(),
            odometry: "odometry.csv".into(),
            groundtruth: None,
            image_dir: "images".into(),
            image_format: ImageKind::Pgm,
            odometry_kind: OdometryKind::Delta,
            groundtruth_kind: GroundTruthKind::Xy,
            resize: None,
        }
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        for (line, key, value) in key_values(text)? {
            let bad = |message: String| Error::Parse { line, message };
            match key.as_str() {
                "frames" => m.frames = value,
                "odometry" => m.odometry = value,
                "groundtruth" => m.groundtruth = Some(value),
                "image_dir" => m.image_dir = value,
                "image_format" => {
                    m.image_format = match value.as_str() {
                        "pgm" => ImageKind::Pgm,
                        "png" => ImageKind::Png,
                        _ => return Err(bad(format!("image_format must be pgm or png, got `{value}`"))),
                    }
                }
                "odometry_kind" => {
                    m.odometry_kind = match value.as_str() {
                        "delta" => OdometryKind::Delta,
                        "heading_speed" => OdometryKind::HeadingSpeed,
                        _ => return Err(bad(format!("odometry_kind must be delta or heading_speed, got `{value}`"))),
                    }
                }
                "groundtruth_kind" => {
                    m.groundtruth_kind = match value.as_str() {
                        "latlon" => GroundTruthKind::LatLon,
                        "xy" => GroundTruthKind::Xy,
                        _ => return Err(bad(format!("groundtruth_kind must be latlon or xy, got `{value}`"))),
                    }
                }
                "resize" => {
                    let parsed = value
                        .split_once('x')
                        .and_then(|(w, h)| Some((w.trim().parse().ok()?, h.trim().parse().ok()?)))
                        .filter(|&(w, h): &(u32, u32)| w > 0 && h > 0);
                    m.resize = Some(parsed.ok_or_else(|| bad(format!("resize must be WxH, got `{value}`")))?);
                }
                _ => return Err(bad(format!("unknown manifest key `{key}`"))),
            }
        }
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "frames = {}\nodometry = {}\n",
            self.frames, self.odometry
        );
        if let Some(gt) = &self.groundtruth {
            out += &format!("groundtruth = {gt}\n");
        }
        out += &format!("image_dir = {}\n", self.image_dir);
        out += match self.image_format {
            ImageKind::Pgm => "image_format = pgm\n",
            ImageKind::Png => "image_format = png\n",
        };
        out += match self.odometry_kind {
            OdometryKind::Delta => "odometry_kind = delta\n",
            OdometryKind::HeadingSpeed => "odometry_kind = heading_speed\n",
        };
        out += match self.groundtruth_kind {
            GroundTruthKind::LatLon => "groundtruth_kind = latlon\n",
            GroundTruthKind::Xy => "groundtruth_kind = xy\n",
        };
        if let Some((w, h)) = self.resize {
            out += &format!("resize = {w}x{h}\n");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRef {
    pub timestamp: f64,
    pub path: PathBuf,
}

/// One odometry row as recorded: either a delta or an absolute heading with
/// a speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdometryRow {
    pub timestamp: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthPoint {
    pub timestamp: f64,
    /// Meters east of the first fix (or raw x).
    pub x: f64,
    /// Meters north of the first fix (or raw y).
    pub y: f64,
}

#[derive(Clone, Debug)]
pub struct DatasetStream {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<FrameRef>,
    pub odometry: Vec<OdometryRow>,
    pub ground_truth: Vec<GroundTruthPoint>,
    /// First GPS fix, when ground truth came as latitude and longitude.
    pub gps_origin: Option<(f64, f64)>,
}

impl DatasetStream {
    pub fn has_ground_truth(&self) -> bool {
        !self.ground_truth.is_empty()
    }

    /// Decodes a frame image, resizing first when the manifest asks for it.
    pub fn load_frame(&self, frame: &FrameRef) -> Result<Frame> {
        load_image(&frame.path, self.manifest.image_format, self.manifest.resize)
    }

    /// Odometry rows converted to per-row deltas.
    pub fn odometry_deltas(&self) -> Vec<(f64, OdometryDelta)> {
        match self.manifest.odometry_kind {
            OdometryKind::Delta => self
                .odometry
                .iter()
                .map(|r| (r.timestamp, OdometryDelta::new(r.a, r.b)))
                .collect(),
            OdometryKind::HeadingSpeed => {
                let mut out = Vec::with_capacity(self.odometry.len());
                for (i, r) in self.odometry.iter().enumerate() {
                    let delta = match i.checked_sub(1).map(|j| self.odometry[j]) {
                        None => OdometryDelta::default(),
                        Some(prev) => OdometryDelta::new(
                            0.5 * (prev.b + r.b) * (r.timestamp - prev.timestamp),
                            wrap_angle(r.a - prev.a),
                        ),
                    };
                    out.push((r.timestamp, delta));
                }
                out
            }
        }
    }
}

pub fn load_image(path: &Path, kind: ImageKind, resize: Option<(u32, u32)>) -> Result<Frame> {
    let image_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.set_format(match kind {
        ImageKind::Pgm => image::ImageFormat::Pnm,
        ImageKind::Png => image::ImageFormat::Png,
    });
    let mut luma = reader.decode().map_err(|e| image_err(e.to_string()))?.to_luma8();
    if let Some((w, h)) = resize {
        if luma.dimensions() != (w, h) {
            luma = image::imageops::resize(&luma, w, h, image::imageops::FilterType::Triangle);
        }
    }
    let (w, h) = luma.dimensions();
    Frame::from_luma8(w as usize, h as usize, luma.as_raw())
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{}: {other:?}", path.display())),
    }
}

fn numeric_rows(path: &Path, records: &[csv::StringRecord]) -> Result<Vec<[f64; 3]>> {
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            if rec.len() != 3 {
                return Err(Error::Dataset(format!(
                    "{} row {}: expected 3 columns, got {}",
                    path.display(),
                    i + 1,
                    rec.len()
                )));
            }
            let mut out = [0.0; 3];
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Dataset(format!("{} row {}: `{field}` is not a number", path.display(), i + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{} row {}", path.display(), i + 1)));
                }
                out[k] = v;
            }
            Ok(out)
        })
        .collect()
}

fn check_increasing(name: &str, stamps: impl Iterator<Item = f64>) -> Result<()> {
    let mut last = f64::NEG_INFINITY;
    for (i, t) in stamps.enumerate() {
        if t <= last {
            return Err(Error::Dataset(format!(
                "{name}: timestamp {t} at row {} does not increase (previous {last})",
                i + 1
            )));
        }
        last = t;
    }
    Ok(())
}

/// Reads and validates a dataset directory. Images are only checked for
/// existence here and decoded on demand.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DatasetStream> {
    let root = root.as_ref().to_path_buf();
    let manifest_path = root.join(MANIFEST_NAME);
    if !manifest_path.is_file() {
        return Err(Error::MissingData(format!("no {MANIFEST_NAME} in {}", root.display())));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = Manifest::parse(&text)?;

    let frames_path = root.join(&manifest.frames);
    let image_dir = root.join(&manifest.image_dir);
    let mut frames = Vec::new();
    for (i, rec) in read_csv(&frames_path)?.iter().enumerate() {
        if rec.len() != 2 {
            return Err(Error::Dataset(format!(
                "{} row {}: expected timestamp,filename",
                frames_path.display(),
                i + 1
            )));
        }
        let timestamp: f64 = rec[0]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::Dataset(format!("{} row {}: bad timestamp", frames_path.display(), i + 1)))?;
        let path = image_dir.join(&rec[1]);
        if !path.is_file() {
            return Err(Error::Image {
                path,
                message: "image file not found".into(),
            });
        }
        frames.push(FrameRef { timestamp, path });
    }
    check_increasing("frames", frames.iter().map(|f| f.timestamp))?;

    let odom_path = root.join(&manifest.odometry);
    let odometry: Vec<OdometryRow> = numeric_rows(&odom_path, &read_csv(&odom_path)?)?
        .into_iter()
        .map(|[timestamp, a, b]| OdometryRow { timestamp, a, b })
        .collect();
    check_increasing("odometry", odometry.iter().map(|r| r.timestamp))?;

    if frames.is_empty() {
        return Err(Error::Dataset("no frames".into()));
    }
    if odometry.is_empty() {
        return Err(Error::Dataset("no odometry".into()));
    }

    let mut ground_truth = Vec::new();
    let mut gps_origin = None;
    if let Some(name) = &manifest.groundtruth {
        let gt_path = root.join(name);
        let rows = numeric_rows(&gt_path, &read_csv(&gt_path)?)?;
        check_increasing("groundtruth", rows.iter().map(|r| r[0]))?;
        match manifest.groundtruth_kind {
            GroundTruthKind::Xy => {
                ground_truth = rows
                    .iter()
                    .map(|&[timestamp, x, y]| GroundTruthPoint { timestamp, x, y })
                    .collect();
            }
            GroundTruthKind::LatLon => {
                if let Some(&[_, lat0, lon0]) = rows.first() {
                    gps_origin = Some((lat0, lon0));
                    for &[timestamp, lat, lon] in &rows {
                        let (x, y) = gps_to_local(lat, lon, (lat0, lon0))?;
                        ground_truth.push(GroundTruthPoint { timestamp, x, y });
                    }
                }
            }
        }
    }

    Ok(DatasetStream {
        root,
        manifest,
        frames,
        odometry,
        ground_truth,
        gps_origin,
    })
}

/// One pipeline step: a frame, the odometry since the previous frame and the
/// nearest ground-truth fix, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncedStep {
    pub index: usize,
    pub timestamp: f64,
    pub frame: FrameRef,
    pub odometry: OdometryDelta,
    pub ground_truth: Option<(f64, f64)>,
}

/// Emits one step per frame. Step `k` integrates the odometry rows with
/// timestamps in `(t[k-1], t[k]]`; rows before the first frame go to step 0
/// and rows after the last frame to the final step, so no motion is lost.
pub fn synchronize(stream: &DatasetStream) -> Vec<SyncedStep> {
    let deltas = stream.odometry_deltas();
    let n = stream.frames.len();
    let mut sums = vec![OdometryDelta::default(); n];
    let mut counts = vec![0usize; n];
    for (t, d) in &deltas {
        let k = stream.frames.partition_point(|f| f.timestamp < *t).min(n - 1);
        sums[k].delta_s += d.delta_s;
        sums[k].delta_theta += d.delta_theta;
        counts[k] += 1;
    }

    let mut steps = Vec::with_capacity(n);
    for (k, frame) in stream.frames.iter().enumerate() {
        if counts[k] == 0 && k > 0 {
            log::warn!("no odometry between t={} and t={}", stream.frames[k - 1].timestamp, frame.timestamp);
        }
        let odometry = OdometryDelta::new(sums[k].delta_s, wrap_angle(sums[k].delta_theta));
        steps.push(SyncedStep {
            index: k,
            timestamp: frame.timestamp,
            frame: frame.clone(),
            odometry,
            ground_truth: nearest_ground_truth(&stream.ground_truth, frame.timestamp),
        });
    }
    steps
}

/// Nearest fix within the join window; the earlier fix wins an exact tie.
fn nearest_ground_truth(gt: &[GroundTruthPoint], t: f64) -> Option<(f64, f64)> {
    let i = gt.partition_point(|p| p.timestamp < t);
    let candidates = [i.checked_sub(1), Some(i)];
    candidates
        .into_iter()
        .flatten()
        .filter_map(|j| gt.get(j))
        .map(|p| ((p.timestamp - t).abs(), p))
        .filter(|(dt, _)| *dt <= GT_JOIN_WINDOW)
        .fold(None, |best: Option<(f64, &GroundTruthPoint)>, cand| match best {
            Some(b) if b.0 <= cand.0 => Some(b),
            _ => Some(cand),
        })
        .map(|(_, p)| (p.x, p.y))
}

fn check_latlon(lat: f64, lon: f64) -> Result<()> {
    if !(lat.abs() <= 90.0 && lon.abs() <= 180.0) {
        return Err(Error::Invalid(format!("coordinate ({lat}, {lon}) out of range")));
    }
    Ok(())
}

/// Equirectangular projection about `origin`: meters east and north.
pub fn gps_to_local(lat: f64, lon: f64, origin: (f64, f64)) -> Result<(f64, f64)> {
    check_latlon(lat, lon)?;
    check_latlon(origin.0, origin.1)?;
    let (lat0, lon0) = origin;
    let x = EARTH_RADIUS * lat0.to_radians().cos() * (lon - lon0).to_radians();
    let y = EARTH_RADIUS * (lat - lat0).to_radians();
    Ok((x, y))
}

/// Inverse of [`gps_to_local`].
pub fn local_to_gps(x: f64, y: f64, origin: (f64, f64)) -> Result<(f64, f64)> {
    check_latlon(origin.0, origin.1)?;
    let (lat0, lon0) = origin;
    let cos0 = lat0.to_radians().cos();
    if cos0.abs() < 1e-12 {
        return Err(Error::Degenerate("origin at a pole".into()));
    }
    let lat = lat0 + (y / EARTH_RADIUS).to_degrees();
    let lon = lon0 + (x / (EARTH_RADIUS * cos0)).to_degrees();
    check_latlon(lat, lon)?;
    Ok((lat, lon))
}
