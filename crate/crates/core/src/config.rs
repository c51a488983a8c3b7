//! Run configuration: every tunable parameter, its default, and validation.
//!
//! The on-disk format is flat `key = value` text. Blank lines and `#`
//! comments are ignored, unknown keys are rejected, and absent keys keep
//! their defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

trait ParamValue: Sized {
    fn parse_value(raw: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

impl ParamValue for f64 {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse::<f64>()
            .map_err(|e| format!("expected a number, got `{raw}` ({e})"))
    }

    fn format_value(&self) -> String {
        // `{:?}` prints the shortest string that round-trips exactly.
        format!("{self:?}")
    }
}

impl ParamValue for usize {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse::<usize>()
            .map_err(|e| format!("expected a nonnegative integer, got `{raw}` ({e})"))
    }

    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ParamValue for bool {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        match raw {
            "0" | "false" => Ok(false),
            "1" | "true" => Ok(true),
            _ => Err(format!("expected 0 or 1, got `{raw}`")),
        }
    }

    fn format_value(&self) -> String {
        if *self { "1" } else { "0" }.to_string()
    }
}

macro_rules! run_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Full parameter set for one run. Immutable once loaded.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $name: $default, )* }
            }
        }

        impl RunConfig {
            /// Every recognised key, in serialization order.
            pub const KEYS: &'static [&'static str] = &[$( stringify!($name), )*];

            /// Sets one parameter from its textual value. Does not validate.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $( stringify!($name) => {
                        self.$name = <$ty as ParamValue>::parse_value(raw)
                            .map_err(|message| Error::Invalid(format!("{key}: {message}")))?;
                    } )*
                    _ => return Err(Error::UnknownKey(key.to_string())),
                }
                Ok(())
            }

            /// Serializes every parameter as `key = value` lines.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $( let _ = writeln!(out, "{} = {}", stringify!($name), self.$name.format_value()); )*
                out
            }
        }
    };
}

run_config! {
    // local view
    /// Crop window, inclusive min / exclusive max, in pixels.
    image_crop_x_min: usize = 40,
    image_crop_x_max: usize = 600,
    image_crop_y_min: usize = 150,
    image_crop_y_max: usize = 300,
    template_x_size: usize = 60,
    template_y_size: usize = 20,
    /// Largest horizontal comparison shift, in template columns.
    vt_shift_match: usize = 25,
    /// Stride between tested shifts, in template columns.
    vt_step_match: usize = 5,
    /// Mean absolute difference at or below which a template matches.
    vt_match_threshold: f64 = 0.073,
    /// Global brightness normalization strength; 0 disables it.
    vt_normalisation: f64 = 0.0,
    /// Patch normalization radius in template cells; 0 disables it.
    vt_patch_normalise: usize = 2,
    vt_panoramic: bool = false,
    vt_active_decay: f64 = 1.0,

    // pose cells
    pc_dim_xy: usize = 18,
    pc_dim_th: usize = 12,
    /// Meters covered by one pose cell.
    pc_cell_x_size: f64 = 1.0,
    pc_vt_inject_energy: f64 = 0.2,
    pc_vt_restore: f64 = 0.05,
    pc_w_e_dim: usize = 5,
    pc_w_i_dim: usize = 11,
    pc_sigma_e: f64 = 1.0,
    pc_sigma_i: f64 = 5.0,
    pc_global_inhibit: f64 = 0.00027,

    // experience map
    /// Pose-cell distance (cells) at or beyond which a new experience is created.
    exp_delta_pc_threshold: f64 = 2.0,
    exp_loops: usize = 50,
    exp_correction: f64 = 0.5,
    exp_initial_em_deg: f64 = 180.0,
}

impl RunConfig {
    /// Parses configuration text on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw_line) in text.lines().enumerate() {
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_assignment(line).ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key, value).map_err(|err| match err {
                Error::UnknownKey(_) | Error::Invalid(_) => Error::Parse {
                    line: idx + 1,
                    message: err.to_string(),
                },
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies a single `key=value` override, as passed to `--set`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment)
            .ok_or_else(|| Error::Invalid(format!("expected key=value, got `{assignment}`")))?;
        self.set(key, value)
    }

    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Invalid(msg));

        if self.image_crop_x_min >= self.image_crop_x_max {
            return fail(format!(
                "image_crop_x_min ({}) must be below image_crop_x_max ({})",
                self.image_crop_x_min, self.image_crop_x_max
            ));
        }
        if self.image_crop_y_min >= self.image_crop_y_max {
            return fail(format!(
                "image_crop_y_min ({}) must be below image_crop_y_max ({})",
                self.image_crop_y_min, self.image_crop_y_max
            ));
        }
        if self.template_x_size == 0 || self.template_y_size == 0 {
            return fail("template sizes must be positive".into());
        }
        if self.template_x_size > self.image_crop_x_max - self.image_crop_x_min
            || self.template_y_size > self.image_crop_y_max - self.image_crop_y_min
        {
            return fail("template is larger than the crop window".into());
        }
        if self.vt_step_match == 0 {
            return fail("vt_step_match must be positive".into());
        }
        if !self.vt_panoramic && self.vt_shift_match >= self.template_x_size {
            return fail("vt_shift_match must leave at least one overlapping column".into());
        }
        for (name, v) in [
            ("vt_match_threshold", self.vt_match_threshold),
            ("vt_normalisation", self.vt_normalisation),
            ("vt_active_decay", self.vt_active_decay),
            ("pc_vt_inject_energy", self.pc_vt_inject_energy),
            ("pc_vt_restore", self.pc_vt_restore),
            ("pc_global_inhibit", self.pc_global_inhibit),
            ("exp_delta_pc_threshold", self.exp_delta_pc_threshold),
        ] {
            if !v.is_finite() || v < 0.0 {
                return fail(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !self.exp_initial_em_deg.is_finite() {
            return fail("exp_initial_em_deg must be finite".into());
        }
        if self.pc_dim_xy == 0 || self.pc_dim_th == 0 {
            return fail("pose-cell dimensions must be positive".into());
        }
        if !(self.pc_cell_x_size.is_finite() && self.pc_cell_x_size > 0.0) {
            return fail(format!(
                "pc_cell_x_size must be positive, got {}",
                self.pc_cell_x_size
            ));
        }
        for (name, dim) in [("pc_w_e_dim", self.pc_w_e_dim), ("pc_w_i_dim", self.pc_w_i_dim)] {
            if dim % 2 == 0 {
                return fail(format!("{name} must be odd, got {dim}"));
            }
            if dim > self.pc_dim_xy || dim > self.pc_dim_th {
                return fail(format!("{name} ({dim}) exceeds the pose-cell grid"));
            }
        }
        if !(self.pc_sigma_e.is_finite() && self.pc_sigma_e > 0.0) {
            return fail(format!("pc_sigma_e must be positive, got {}", self.pc_sigma_e));
        }
        if !(self.pc_sigma_i.is_finite() && self.pc_sigma_i > self.pc_sigma_e) {
            return fail(format!(
                "pc_sigma_i ({}) must exceed pc_sigma_e ({})",
                self.pc_sigma_i, self.pc_sigma_e
            ));
        }
        if !(self.exp_correction > 0.0 && self.exp_correction <= 1.0) {
            return fail(format!(
                "exp_correction must lie in (0, 1], got {}",
                self.exp_correction
            ));
        }
        if self.exp_loops == 0 {
            return fail("exp_loops must be at least 1".into());
        }
        Ok(())
    }

    /// Initial experience-map heading in radians.
    pub fn initial_heading(&self) -> f64 {
        self.exp_initial_em_deg.to_radians()
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::parse(&text)
}

/// Parses generic `key = value` text into `(line number, key, value)`
/// triples, skipping blanks and comments.
pub(crate) fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = split_assignment(line).ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        out.push((idx + 1, key.to_string(), value.to_string()));
    }
    Ok(out)
}

pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

pub(crate) fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (key, value) = line.split_once('=')?;
    let (key, value) = (key.trim(), value.trim());
    if key.is_empty() || value.is_empty() {
        return None;
    }
    Some((key, value))
}
