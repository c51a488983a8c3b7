//! Local view cells: low-resolution intensity templates learned from camera
//! frames, matched by a horizontal shift search.

use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pose_cells::PackedPose;

/// Floor applied to patch variances before dividing.
const VARIANCE_FLOOR: f64 = 1e-6;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    intensities: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, intensities: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || intensities.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} intensities for a {width}x{height} frame",
                intensities.len()
            )));
        }
        if let Some(bad) = intensities.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            intensities,
        })
    }

    pub fn from_luma8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.intensities[y * self.width + x]
    }
}

/// `cols x rows` normalized intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateVector {
    cols: usize,
    rows: usize,
    values: Vec<f64>,
}

impl TemplateVector {
    pub fn new(cols: usize, rows: usize, values: Vec<f64>) -> Result<Self> {
        if cols == 0 || rows == 0 || values.len() != cols * rows {
            return Err(Error::Dimension(format!(
                "{} values for a {cols}x{rows} template",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("template value".into()));
        }
        Ok(Self { cols, rows, values })
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Crops, block-averages to the template grid, then applies the optional
/// global and patch normalizations.
pub fn preprocess(frame: &Frame, cfg: &RunConfig) -> Result<TemplateVector> {
    let (x0, x1) = (cfg.image_crop_x_min, cfg.image_crop_x_max);
    let (y0, y1) = (cfg.image_crop_y_min, cfg.image_crop_y_max);
    if x0 >= x1 || y0 >= y1 || x1 > frame.width || y1 > frame.height {
        return Err(Error::Invalid(format!(
            "crop [{x0}, {x1}) x [{y0}, {y1}) outside {}x{} frame",
            frame.width, frame.height
        )));
    }
    let (cols, rows) = (cfg.template_x_size, cfg.template_y_size);
    let (crop_w, crop_h) = (x1 - x0, y1 - y0);
    if cols > crop_w || rows > crop_h {
        return Err(Error::Invalid(format!(
            "{cols}x{rows} template larger than {crop_w}x{crop_h} crop"
        )));
    }

    let mut values = Vec::with_capacity(cols * rows);
    for r in 0..rows {
        let (ya, yb) = (y0 + r * crop_h / rows, y0 + (r + 1) * crop_h / rows);
        for c in 0..cols {
            let (xa, xb) = (x0 + c * crop_w / cols, x0 + (c + 1) * crop_w / cols);
            let mut sum = 0.0;
            for y in ya..yb {
                let line = &frame.intensities[y * frame.width..(y + 1) * frame.width];
                sum += line[xa..xb].iter().sum::<f64>();
            }
            values.push(sum / ((yb - ya) * (xb - xa)) as f64);
        }
    }

    if cfg.vt_normalisation > 0.0 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let shift = cfg.vt_normalisation * (0.5 - mean);
        values.iter_mut().for_each(|v| *v = (*v + shift).clamp(0.0, 1.0));
    }

    if cfg.vt_patch_normalise > 0 {
        values = patch_normalize(&values, cols, rows, cfg.vt_patch_normalise);
    }

    TemplateVector::new(cols, rows, values)
}

/// Per-cell z-score over the `(2r+1)²` window (clipped at the borders),
/// mapped from [-3, 3] onto [0, 1].
fn patch_normalize(values: &[f64], cols: usize, rows: usize, radius: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for r in 0..rows {
        let (ra, rb) = (r.saturating_sub(radius), (r + radius + 1).min(rows));
        for c in 0..cols {
            let (ca, cb) = (c.saturating_sub(radius), (c + radius + 1).min(cols));
            let n = ((rb - ra) * (cb - ca)) as f64;
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for rr in ra..rb {
                for v in &values[rr * cols + ca..rr * cols + cb] {
                    sum += v;
                    sum_sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(VARIANCE_FLOOR);
            let z = (values[r * cols + c] - mean) / var.sqrt();
            out.push(((z + 3.0) / 6.0).clamp(0.0, 1.0));
        }
    }
    out
}

/// Shifts tested by [`compare`], in search order: 0, -step, +step, -2step, ...
fn candidate_shifts(cfg: &RunConfig) -> impl Iterator<Item = isize> {
    let step = cfg.vt_step_match as isize;
    let limit = cfg.vt_shift_match as isize;
    (0..=limit / step).flat_map(move |k| {
        let s = k * step;
        if s == 0 {
            vec![0]
        } else {
            vec![-s, s]
        }
    })
}

/// Mean absolute difference between `a[col]` and `b[col + shift]`.
///
/// Without panoramic wrapping only overlapping columns are compared. A
/// positive shift means `b`'s content sits to the right of `a`'s.
pub fn shifted_difference(a: &TemplateVector, b: &TemplateVector, shift: isize, panoramic: bool) -> f64 {
    let cols = a.cols as isize;
    let mut total = 0.0;
    let mut count = 0usize;
    for col in 0..cols {
        let other = col + shift;
        let other = if panoramic {
            other.rem_euclid(cols)
        } else if (0..cols).contains(&other) {
            other
        } else {
            continue;
        };
        for row in 0..a.rows {
            total += (a.at(col as usize, row) - b.at(other as usize, row)).abs();
        }
        count += a.rows;
    }
    if count == 0 {
        f64::INFINITY
    } else {
        total / count as f64
    }
}

/// Best (lowest) mean absolute difference over the horizontal shift search,
/// with the shift that achieved it. Ties keep the smallest |shift|.
pub fn compare(a: &TemplateVector, b: &TemplateVector, cfg: &RunConfig) -> Result<(f64, isize)> {
    if a.cols != b.cols || a.rows != b.rows {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{} templates",
            a.cols, a.rows, b.cols, b.rows
        )));
    }
    let mut best = (f64::INFINITY, 0);
    for shift in candidate_shifts(cfg) {
        let score = shifted_difference(a, b, shift, cfg.vt_panoramic);
        if score < best.0 {
            best = (score, shift);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualTemplate {
    pub id: usize,
    pub data: TemplateVector,
    /// Pose-cell coordinate this view injects energy into.
    pub beta_pose: PackedPose,
    /// Saturation state, raised on every activation and decayed every step.
    pub activity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViewEvent {
    Matched { id: usize, strength: f64 },
    Created { id: usize },
}

impl ViewEvent {
    pub fn id(&self) -> usize {
        match *self {
            ViewEvent::Matched { id, .. } | ViewEvent::Created { id } => id,
        }
    }
}

/// Append-only template store.
#[derive(Clone, Debug)]
pub struct LocalViewCells {
    cfg: RunConfig,
    templates: Vec<VisualTemplate>,
}

impl LocalViewCells {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            templates: Vec::new(),
        }
    }

    pub fn templates(&self) -> &[VisualTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Best match as `(id, score)`; the lowest id wins ties.
    pub fn best_match(&self, view: &TemplateVector) -> Result<Option<(usize, f64)>> {
        let mut best: Option<(usize, f64)> = None;
        for t in &self.templates {
            let (score, _) = compare(view, &t.data, &self.cfg)?;
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((t.id, score));
            }
        }
        Ok(best)
    }

    /// Processes one frame. A match below the threshold activates that
    /// template with injection strength `1 / (1 + activity)`; otherwise a new
    /// template is learned and bound to `current_pc`.
    pub fn observe(&mut self, frame: &Frame, current_pc: PackedPose) -> Result<ViewEvent> {
        let view = preprocess(frame, &self.cfg)?;
        self.observe_template(view, current_pc)
    }

    pub fn observe_template(&mut self, view: TemplateVector, current_pc: PackedPose) -> Result<ViewEvent> {
        let matched = self
            .best_match(&view)?
            .filter(|&(_, score)| score <= self.cfg.vt_match_threshold);
        let active = matched.map(|(id, _)| id);
        let restore = self.cfg.pc_vt_restore;
        for t in self.templates.iter_mut().filter(|t| Some(t.id) != active) {
            t.activity = (t.activity - restore).max(0.0);
        }
        match matched {
            Some((id, _)) => {
                let t = &mut self.templates[id];
                let strength = 1.0 / (1.0 + t.activity);
                t.activity += self.cfg.vt_active_decay;
                Ok(ViewEvent::Matched { id, strength })
            }
            None => {
                let id = self.templates.len();
                self.templates.push(VisualTemplate {
                    id,
                    data: view,
                    beta_pose: current_pc,
                    activity: self.cfg.vt_active_decay,
                });
                Ok(ViewEvent::Created { id })
            }
        }
    }

    /// Injection list for the pose cells given this step's event.
    pub fn injections(&self, event: &ViewEvent) -> Vec<(PackedPose, f64)> {
        match *event {
            ViewEvent::Matched { id, strength } => vec![(self.templates[id].beta_pose, strength)],
            ViewEvent::Created { .. } => Vec::new(),
        }
    }

    /// Line-oriented export, one template per line:
    /// `id beta_x beta_y beta_theta activity cols rows v0 v1 ...`.
    pub fn export(&self) -> String {
        let mut out = String::from("# id beta_x beta_y beta_theta activity cols rows values...\n");
        for t in &self.templates {
            let _ = write!(
                out,
                "{} {} {} {} {} {} {}",
                t.id, t.beta_pose.x, t.beta_pose.y, t.beta_pose.theta, t.activity, t.data.cols, t.data.rows
            );
            for v in &t.data.values {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`LocalViewCells::export`] output.
    pub fn import(text: &str, cfg: &RunConfig) -> Result<Self> {
        let mut templates = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 7 {
                return Err(bad("expected at least 7 fields".into()));
            }
            let num = |i: usize| fields[i].parse::<f64>().map_err(|e| bad(format!("field {i}: {e}")));
            let int = |i: usize| fields[i].parse::<usize>().map_err(|e| bad(format!("field {i}: {e}")));
            let id = int(0)?;
            if id != templates.len() {
                return Err(bad(format!("template id {id} out of sequence")));
            }
            let (cols, rows) = (int(5)?, int(6)?);
            let values = (7..fields.len()).map(num).collect::<Result<Vec<_>>>()?;
            templates.push(VisualTemplate {
                id,
                data: TemplateVector::new(cols, rows, values)?,
                beta_pose: PackedPose::new(num(1)?, num(2)?, num(3)?),
                activity: num(4)?,
            });
        }
        Ok(Self {
            cfg: cfg.clone(),
            templates,
        })
    }
}
