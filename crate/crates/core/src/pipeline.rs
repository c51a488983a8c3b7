//! Offline per-step loop: view matching, pose-cell update, map update, and
//! the artifacts a run leaves behind.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{align, PointSet2, RigidTransform};
use crate::experience_map::{ExperienceMap, MapEvent, MapPose};
use crate::geometry::OdometryDelta;
use crate::ingest::{DatasetStream, SyncedStep};
use crate::local_view::{Frame, LocalViewCells, ViewEvent};
use crate::pose_cells::{PackedPose, PoseCellNetwork};

pub const MAP_FILE: &str = "experience_map.txt";
pub const TEMPLATES_FILE: &str = "templates.txt";
pub const STEPS_FILE: &str = "steps.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const OVERLAY_FILE: &str = "overlay.svg";
pub const CONFIG_FILE: &str = "config.txt";
pub const VOLUMES_DIR: &str = "volumes";

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub timestamp: f64,
    pub view: ViewEvent,
    pub map: MapEvent,
    pub pc_pose: PackedPose,
    pub n_experiences: usize,
    pub n_templates: usize,
    /// Motion since the active experience, in its frame.
    pub offset: MapPose,
}

impl StepRecord {
    pub fn active_experience(&self) -> usize {
        self.map.active()
    }

    pub fn active_template(&self) -> usize {
        self.view.id()
    }
}

/// The three coupled modules plus their step history.
pub struct Slam {
    pose_cells: PoseCellNetwork,
    views: LocalViewCells,
    map: ExperienceMap,
    records: Vec<StepRecord>,
    last_timestamp: Option<f64>,
}

impl Slam {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            pose_cells: PoseCellNetwork::new(cfg)?,
            views: LocalViewCells::new(cfg),
            map: ExperienceMap::new(cfg),
            records: Vec::new(),
            last_timestamp: None,
        })
    }

    pub fn pose_cells(&self) -> &PoseCellNetwork {
        &self.pose_cells
    }

    pub fn views(&self) -> &LocalViewCells {
        &self.views
    }

    pub fn map(&self) -> &ExperienceMap {
        &self.map
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn step(&mut self, timestamp: f64, frame: &Frame, odom: OdometryDelta) -> Result<&StepRecord> {
        if !odom.is_finite() {
            return Err(Error::NonFinite(format!("odometry at t={timestamp}")));
        }
        let dt = self.last_timestamp.map_or(0.0, |t| (timestamp - t).max(0.0));
        self.last_timestamp = Some(timestamp);

        let view = self.views.observe(frame, self.pose_cells.pose())?;
        let injections = self.views.injections(&view);
        let pc_pose = self.pose_cells.step(odom, &injections)?;
        let map = self.map.update(pc_pose, view.id(), odom, dt);
        let active = self.map.active_id();
        let offset = self.map.experiences()[active]
            .pose
            .relative(&self.map.current_pose().expect("map is nonempty after an update"));

        self.records.push(StepRecord {
            step: self.records.len(),
            timestamp,
            view,
            map,
            pc_pose,
            n_experiences: self.map.len(),
            n_templates: self.views.len(),
            offset,
        });
        Ok(self.records.last().unwrap())
    }

    /// Per-step position estimates using the final (relaxed) experience poses.
    pub fn trajectory(&self) -> Vec<(usize, f64, usize, MapPose)> {
        self.records
            .iter()
            .map(|r| {
                let id = r.active_experience();
                let pose = self.map.experiences()[id].pose.compose(&r.offset);
                (r.step, r.timestamp, id, pose)
            })
            .collect()
    }

    pub fn steps_csv(&self) -> String {
        let mut out =
            String::from("step,timestamp,active_experience,active_template,n_experiences,n_templates,event\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.step,
                r.timestamp,
                r.active_experience(),
                r.active_template(),
                r.n_experiences,
                r.n_templates,
                r.map.name()
            );
        }
        out
    }

    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("step,timestamp,experience,x,y,theta\n");
        for (step, t, id, p) in self.trajectory() {
            let _ = writeln!(out, "{step},{t},{id},{},{},{}", p.x, p.y, p.theta);
        }
        out
    }
}

/// Integrates raw odometry from the origin at `heading`, one pose per step.
pub fn dead_reckon(steps: &[SyncedStep], heading: f64) -> Vec<MapPose> {
    let mut pose = MapPose::new(0.0, 0.0, heading);
    steps
        .iter()
        .map(|s| {
            pose = pose.advance(s.odometry);
            pose
        })
        .collect()
}

/// Runs the whole dataset and writes every artifact into `out`.
pub fn run_dataset(
    stream: &DatasetStream,
    steps: &[SyncedStep],
    cfg: &RunConfig,
    out: &Path,
    dump_volumes: bool,
) -> Result<Slam> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let volumes = out.join(VOLUMES_DIR);
    if dump_volumes {
        std::fs::create_dir_all(&volumes).map_err(|e| Error::io(&volumes, e))?;
    }
    let mut slam = Slam::new(cfg)?;
    for s in steps {
        let frame = stream.load_frame(&s.frame)?;
        let record = slam.step(s.timestamp, &frame, s.odometry)?;
        log::debug!(
            "step {} view {:?} map {:?}",
            record.step,
            record.view,
            record.map
        );
        if dump_volumes {
            slam.pose_cells
                .volume()
                .save_snapshot(&volumes.join(format!("{:05}.bin", s.index)))?;
        }
    }

    let gt: Vec<(usize, (f64, f64))> = steps
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.ground_truth.map(|g| (i, g)))
        .collect();
    let write = |name: &str, body: String| {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write(MAP_FILE, slam.map.export())?;
    write(TEMPLATES_FILE, slam.views.export())?;
    write(STEPS_FILE, slam.steps_csv())?;
    write(TRAJECTORY_FILE, slam.trajectory_csv())?;
    write(CONFIG_FILE, cfg.to_text())?;
    write(OVERLAY_FILE, overlay_svg(&slam, &gt))?;
    Ok(slam)
}

/// Estimate (and ground truth, when present) as SVG polylines. The estimate
/// is rigidly aligned to ground truth for display.
pub fn overlay_svg(slam: &Slam, gt: &[(usize, (f64, f64))]) -> String {
    let traj = slam.trajectory();
    let est: Vec<(f64, f64)> = traj.iter().map(|t| (t.3.x, t.3.y)).collect();
    let transform = if gt.len() >= 2 {
        let e: Vec<_> = gt.iter().map(|&(i, _)| est[i]).collect();
        let g: Vec<_> = gt.iter().map(|&(_, p)| p).collect();
        align(&e, &g).unwrap_or(RigidTransform::IDENTITY)
    } else {
        RigidTransform::IDENTITY
    };
    let est = PointSet2::new(est).transformed(&transform).points;
    let nodes: Vec<(f64, f64)> = slam
        .map
        .experiences()
        .iter()
        .map(|e| transform.apply((e.pose.x, e.pose.y)))
        .collect();
    let truth: Vec<(f64, f64)> = gt.iter().map(|&(_, p)| p).collect();

    let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
    for &(x, y) in est.iter().chain(&truth).chain(&nodes) {
        lo = (lo.0.min(x), lo.1.min(y));
        hi = (hi.0.max(x), hi.1.max(y));
    }
    if !lo.0.is_finite() {
        lo = (0.0, 0.0);
        hi = (1.0, 1.0);
    }
    let size = 800.0;
    let margin = 20.0;
    let span = (hi.0 - lo.0).max(hi.1 - lo.1).max(1e-9);
    let scale = (size - 2.0 * margin) / span;
    // SVG y grows downward; flip so north is up.
    let px = |p: &(f64, f64)| (margin + (p.0 - lo.0) * scale, size - margin - (p.1 - lo.1) * scale);
    let polyline = |pts: &[(f64, f64)], colour: &str| {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        format!(
            "  <polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    };

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    if !truth.is_empty() {
        svg += &polyline(&truth, "#999999");
    }
    svg += &polyline(&est, "#1f5fbf");
    for n in &nodes {
        let (x, y) = px(n);
        let _ = writeln!(svg, "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"#d04010\"/>");
    }
    svg += "</svg>\n";
    svg
}
