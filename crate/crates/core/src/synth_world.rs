//! Deterministic synthetic datasets: a vehicle driving a closed polyline at
//! constant speed past procedurally textured scenes, with biased and noisy
//! odometry.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::key_values;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::ingest::{GroundTruthKind, ImageKind, Manifest, OdometryKind, MANIFEST_NAME};

/// Side length of the texture blocks, pixels.
const BLOCK: u32 = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub path: Vec<(f64, f64)>,
    /// Times the path is traversed; more than one requires a closed path.
    pub laps: usize,
    pub speed: f64,
    pub rate: f64,
    pub n_scenes: usize,
    /// Constant heading error added to every odometry row, rad/s.
    pub heading_bias: f64,
    pub noise_s: f64,
    pub noise_theta: f64,
    /// Per-pixel Gaussian noise, in intensity units of [0, 1].
    pub image_noise: f64,
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::square(40.0)
    }
}

impl ScenarioSpec {
    /// Closed square with one corner at the origin, driven counter-clockwise.
    pub fn square(side: f64) -> Self {
        Self {
            path: vec![(0.0, 0.0), (side, 0.0), (side, side), (0.0, side), (0.0, 0.0)],
            laps: 2,
            speed: 1.0,
            rate: 1.0,
            n_scenes: 64,
            heading_bias: 0.0,
            noise_s: 0.0,
            noise_theta: 0.0,
            image_noise: 0.02,
            seed: 0,
            image_width: 120,
            image_height: 40,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (line, key, value) in key_values(text)? {
            let bad = |message: String| Error::Parse { line, message };
            let real = || {
                value
                    .parse::<f64>()
                    .map_err(|_| bad(format!("{key}: expected a number, got `{value}`")))
            };
            let int = || {
                value
                    .parse::<u64>()
                    .map_err(|_| bad(format!("{key}: expected a nonnegative integer, got `{value}`")))
            };
            match key.as_str() {
                "path" => spec.path = parse_path(&value).map_err(bad)?,
                "laps" => spec.laps = int()? as usize,
                "speed" => spec.speed = real()?,
                "rate" => spec.rate = real()?,
                "n_scenes" => spec.n_scenes = int()? as usize,
                "heading_bias" => spec.heading_bias = real()?,
                "noise_s" => spec.noise_s = real()?,
                "noise_theta" => spec.noise_theta = real()?,
                "image_noise" => spec.image_noise = real()?,
                "seed" => spec.seed = int()?,
                "image_width" => spec.image_width = int()? as u32,
                "image_height" => spec.image_height = int()? as u32,
                _ => return Err(bad(format!("unknown scenario key `{key}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let path: Vec<String> = self.path.iter().map(|(x, y)| format!("{x:?},{y:?}")).collect();
        format!(
            "path = {}\nlaps = {}\nspeed = {:?}\nrate = {:?}\nn_scenes = {}\nheading_bias = {:?}\n\
             noise_s = {:?}\nnoise_theta = {:?}\nimage_noise = {:?}\nseed = {}\nimage_width = {}\nimage_height = {}\n",
            path.join("; "),
            self.laps,
            self.speed,
            self.rate,
            self.n_scenes,
            self.heading_bias,
            self.noise_s,
            self.noise_theta,
            self.image_noise,
            self.seed,
            self.image_width,
            self.image_height
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.path.len() < 2 {
            return fail("path needs at least 2 waypoints");
        }
        if self.path.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return fail("waypoints must be finite");
        }
        if path_length(&self.path) <= 0.0 {
            return fail("path has zero length");
        }
        if self.laps == 0 {
            return fail("laps must be at least 1");
        }
        if self.laps > 1 && self.path.first() != self.path.last() {
            return fail("multiple laps need a closed path (last waypoint equal to the first)");
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return fail("speed must be positive");
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return fail("rate must be positive");
        }
        if self.n_scenes == 0 {
            return fail("n_scenes must be at least 1");
        }
        for (name, v) in [
            ("heading_bias", self.heading_bias),
            ("noise_s", self.noise_s),
            ("noise_theta", self.noise_theta),
            ("image_noise", self.image_noise),
        ] {
            if !v.is_finite() || (name != "heading_bias" && v < 0.0) {
                return Err(Error::Invalid(format!("{name} must be finite and nonnegative")));
            }
        }
        if self.image_width == 0 || self.image_height == 0 {
            return fail("image size must be positive");
        }
        Ok(())
    }

    /// Arc length of one lap.
    pub fn lap_length(&self) -> f64 {
        path_length(&self.path)
    }

    /// Number of frames the scenario produces.
    pub fn frame_count(&self) -> usize {
        let total = self.lap_length() * self.laps as f64;
        let step = self.speed / self.rate;
        (total / step + 1e-9).floor() as usize + 1
    }
}

fn parse_path(text: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    text.split(';')
        .map(|pair| {
            let (x, y) = pair
                .split_once(',')
                .ok_or_else(|| format!("waypoint `{}` is not x,y", pair.trim()))?;
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad coordinate `{}`", s.trim()));
            Ok((num(x)?, num(y)?))
        })
        .collect()
}

fn path_length(path: &[(f64, f64)]) -> f64 {
    path.windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .sum()
}

/// Point at arc length `s` along the polyline, clamped to its ends.
fn point_at(path: &[(f64, f64)], mut s: f64) -> (f64, f64) {
    for w in path.windows(2) {
        let len = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
        if s <= len && len > 0.0 {
            let f = s / len;
            return (w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1));
        }
        s -= len;
    }
    *path.last().unwrap()
}

/// Ground truth and true odometry for a scenario, before any corruption.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueMotion {
    pub timestamps: Vec<f64>,
    pub positions: Vec<(f64, f64)>,
    /// Heading held while moving from frame k to k+1.
    pub headings: Vec<f64>,
    /// `(delta_s, delta_theta)` applied between frame k-1 and k; zero at k=0.
    pub deltas: Vec<(f64, f64)>,
}

pub fn true_motion(spec: &ScenarioSpec) -> TrueMotion {
    let n = spec.frame_count();
    let positions: Vec<(f64, f64)> = (0..n).map(|k| point_at(&spec.path, lap_position(spec, k))).collect();
    let mut headings = Vec::with_capacity(n);
    for k in 0..n {
        let next = if k + 1 < n { positions[k + 1] } else { positions[k] };
        let h = if next != positions[k] {
            (next.1 - positions[k].1).atan2(next.0 - positions[k].0)
        } else {
            headings.last().copied().unwrap_or_else(|| {
                let (a, b) = (spec.path[0], spec.path[1]);
                (b.1 - a.1).atan2(b.0 - a.0)
            })
        };
        headings.push(h);
    }
    let mut deltas = vec![(0.0, 0.0)];
    for k in 1..n {
        let (a, b) = (positions[k - 1], positions[k]);
        deltas.push(((b.0 - a.0).hypot(b.1 - a.1), wrap_angle(headings[k] - headings[k - 1])));
    }
    TrueMotion {
        timestamps: (0..n).map(|k| k as f64 / spec.rate).collect(),
        positions,
        headings,
        deltas,
    }
}

fn is_closed(spec: &ScenarioSpec) -> bool {
    spec.path.first() == spec.path.last()
}

/// Arc length within the current lap at frame `k`. Closed paths wrap back
/// to 0; open paths stop at their end.
pub fn lap_position(spec: &ScenarioSpec, k: usize) -> f64 {
    let s = k as f64 * spec.speed / spec.rate;
    let lap = spec.lap_length();
    if is_closed(spec) {
        s % lap
    } else {
        s.min(lap)
    }
}

/// Scene anchors at the midpoints of `n_scenes` equal arc-length bins.
pub fn scene_anchors(spec: &ScenarioSpec) -> Vec<(f64, f64)> {
    let lap = spec.lap_length();
    (0..spec.n_scenes)
        .map(|i| point_at(&spec.path, lap * (i as f64 + 0.5) / spec.n_scenes as f64))
        .collect()
}

/// Scene whose anchor is nearest along the path to arc position `s`. Bins
/// end up on a single side of a corner whenever the side lengths are
/// multiples of the bin length, so views stay heading-consistent.
pub fn scene_at(spec: &ScenarioSpec, s: f64) -> usize {
    let bin = (s / spec.lap_length() * spec.n_scenes as f64).floor() as usize;
    if is_closed(spec) {
        bin % spec.n_scenes
    } else {
        bin.min(spec.n_scenes - 1)
    }
}

/// Noise-free texture for scene `index`: a grid of random gray blocks.
pub fn scene_pattern(index: usize, width: u32, height: u32) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 ^ index as u64);
    let bw = width.div_ceil(BLOCK) as usize;
    let bh = height.div_ceil(BLOCK) as usize;
    let blocks: Vec<f64> = (0..bw * bh).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            out.push(blocks[(y / BLOCK) as usize * bw + (x / BLOCK) as usize]);
        }
    }
    out
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes a dataset directory in the ingest format.
pub fn generate(spec: &ScenarioSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    let image_dir = out.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let motion = true_motion(spec);
    let patterns: Vec<Vec<f64>> = (0..spec.n_scenes)
        .map(|i| scene_pattern(i, spec.image_width, spec.image_height))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pixel_noise = Normal::new(0.0, spec.image_noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let s_noise = Normal::new(0.0, spec.noise_s).map_err(|e| Error::Invalid(e.to_string()))?;
    let th_noise = Normal::new(0.0, spec.noise_theta).map_err(|e| Error::Invalid(e.to_string()))?;
    let dt = 1.0 / spec.rate;

    let mut frames = String::from("timestamp,filename\n");
    let mut odometry = String::from("timestamp,delta_s,delta_theta\n");
    let mut groundtruth = String::from("timestamp,x,y\n");
    for (k, &t) in motion.timestamps.iter().enumerate() {
        let name = format!("{k:05}.pgm");
        let scene = scene_at(spec, lap_position(spec, k));
        let pixels: Vec<u8> = patterns[scene]
            .iter()
            .map(|&v| quantize(v + pixel_noise.sample(&mut rng)))
            .collect();
        let img = image::GrayImage::from_raw(spec.image_width, spec.image_height, pixels)
            .expect("pixel buffer sized from the spec");
        let path = image_dir.join(&name);
        img.save_with_format(&path, image::ImageFormat::Pnm).map_err(|e| Error::Image {
            path: path.clone(),
            message: e.to_string(),
        })?;

        let (ds, dth) = motion.deltas[k];
        let (ds, dth) = if k == 0 {
            (0.0, 0.0)
        } else {
            (
                ds + s_noise.sample(&mut rng),
                dth + spec.heading_bias * dt + th_noise.sample(&mut rng),
            )
        };
        let (x, y) = motion.positions[k];
        let _ = writeln!(frames, "{t},{name}");
        let _ = writeln!(odometry, "{t},{ds},{dth}");
        let _ = writeln!(groundtruth, "{t},{x},{y}");
    }

    let manifest = Manifest {
        groundtruth: Some("groundtruth.csv".into()),
        image_format: ImageKind::Pgm,
        odometry_kind: OdometryKind::Delta,
        groundtruth_kind: GroundTruthKind::Xy,
        ..Manifest::default()
    };
    for (name, body) in [
        ("frames.csv", frames),
        ("odometry.csv", odometry),
        ("groundtruth.csv", groundtruth),
        (MANIFEST_NAME, manifest.to_text()),
    ] {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Initial heading of the scenario's first segment.
pub fn initial_heading(spec: &ScenarioSpec) -> f64 {
    true_motion(spec).headings[0]
}
