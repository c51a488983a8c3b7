//! Semi-metric experience graph: creation, transition links, loop closure and
//! iterative relaxation.

use std::fmt::Write as _;

use crate::config::RunConfig;
use crate::geometry::{wrap_angle, OdometryDelta};
use crate::pose_cells::PackedPose;

/// Planar pose in map coordinates; `theta` in (-pi, pi].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MapPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl MapPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// `self ⊕ delta`, with `delta` expressed in this pose's frame.
    pub fn compose(&self, delta: &MapPose) -> MapPose {
        let (s, c) = self.theta.sin_cos();
        MapPose::new(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.theta + delta.theta,
        )
    }

    /// Pose of `other` expressed in this pose's frame, so that
    /// `self.compose(&self.relative(other)) == other`.
    pub fn relative(&self, other: &MapPose) -> MapPose {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (other.x - self.x, other.y - self.y);
        MapPose::new(c * dx + s * dy, -s * dx + c * dy, other.theta - self.theta)
    }

    /// Advances along the current heading, then turns.
    pub fn advance(&self, odom: OdometryDelta) -> MapPose {
        let (s, c) = self.theta.sin_cos();
        MapPose::new(
            self.x + odom.delta_s * c,
            self.y + odom.delta_s * s,
            self.theta + odom.delta_theta,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    pub id: usize,
    pub pc_pose: PackedPose,
    pub view_id: usize,
    pub pose: MapPose,
    pub out_links: Vec<usize>,
    pub in_links: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub from_id: usize,
    pub to_id: usize,
    /// Transform from the source experience to the target, in the source frame.
    pub delta_pose: MapPose,
    pub delta_t: f64,
    /// Heading of the source experience when the link was made. Relaxation
    /// rotates `delta_pose` by this fixed angle, keeping each constraint
    /// linear in the poses.
    pub frame_heading: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MapEvent {
    Stayed { id: usize },
    Created { id: usize },
    LoopClosed { from: usize, to: usize },
}

impl MapEvent {
    /// Active experience after the event.
    pub fn active(&self) -> usize {
        match *self {
            MapEvent::Stayed { id } | MapEvent::Created { id } => id,
            MapEvent::LoopClosed { to, .. } => to,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapEvent::Stayed { .. } => "stayed",
            MapEvent::Created { .. } => "created",
            MapEvent::LoopClosed { .. } => "loop_closed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperienceMap {
    experiences: Vec<Experience>,
    links: Vec<Link>,
    active_id: usize,
    /// Motion since arriving at the active experience, in its frame.
    accum: MapPose,
    accum_t: f64,
    pc_dims: [usize; 3],
    view_weight: f64,
    create_threshold: f64,
    initial_heading: f64,
    loops: usize,
    alpha: f64,
}

impl ExperienceMap {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            experiences: Vec::new(),
            links: Vec::new(),
            active_id: 0,
            accum: MapPose::default(),
            accum_t: 0.0,
            pc_dims: [cfg.pc_dim_xy, cfg.pc_dim_xy, cfg.pc_dim_th],
            view_weight: 10.0 * cfg.pc_dim_xy as f64,
            create_threshold: cfg.exp_delta_pc_threshold,
            initial_heading: cfg.initial_heading(),
            loops: cfg.exp_loops,
            alpha: cfg.exp_correction,
        }
    }

    /// Builds a map directly from poses and links, for relaxation studies.
    pub fn from_graph(poses: &[MapPose], links: &[(usize, usize, MapPose)]) -> Self {
        let mut map = Self::new(&RunConfig::default());
        map.experiences = poses
            .iter()
            .enumerate()
            .map(|(id, &pose)| Experience {
                id,
                pc_pose: PackedPose::default(),
                view_id: 0,
                pose,
                out_links: Vec::new(),
                in_links: Vec::new(),
            })
            .collect();
        for &(from, to, delta) in links {
            map.push_link(from, to, delta, 0.0);
        }
        map
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn active_id(&self) -> usize {
        self.active_id
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    /// Current pose estimate: the active experience composed with the motion
    /// accumulated since reaching it.
    pub fn current_pose(&self) -> Option<MapPose> {
        self.experiences.get(self.active_id).map(|e| e.pose.compose(&self.accum))
    }

    fn push_link(&mut self, from: usize, to: usize, delta_pose: MapPose, delta_t: f64) {
        let id = self.links.len();
        self.links.push(Link {
            from_id: from,
            to_id: to,
            delta_pose,
            delta_t,
            frame_heading: self.experiences[from].pose.theta,
        });
        self.experiences[from].out_links.push(id);
        self.experiences[to].in_links.push(id);
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        self.experiences[a]
            .out_links
            .iter()
            .chain(&self.experiences[a].in_links)
            .any(|&l| {
                let link = &self.links[l];
                (link.from_id == a && link.to_id == b) || (link.from_id == b && link.to_id == a)
            })
    }

    /// Match score of every experience: wrapped pose-cell distance plus a
    /// large penalty when the view differs.
    pub fn score_all(&self, current_pc: PackedPose, current_view: usize) -> Vec<f64> {
        self.experiences
            .iter()
            .map(|e| {
                let view = if e.view_id == current_view { 0.0 } else { self.view_weight };
                e.pc_pose.wrapped_distance(&current_pc, self.pc_dims) + view
            })
            .collect()
    }

    fn create(&mut self, pc_pose: PackedPose, view_id: usize, pose: MapPose) -> usize {
        let id = self.experiences.len();
        self.experiences.push(Experience {
            id,
            pc_pose,
            view_id,
            pose,
            out_links: Vec::new(),
            in_links: Vec::new(),
        });
        id
    }

    /// Integrates `odom` over `dt` seconds, then creates, keeps or switches
    /// the active experience.
    pub fn update(&mut self, current_pc: PackedPose, current_view: usize, odom: OdometryDelta, dt: f64) -> MapEvent {
        if self.experiences.is_empty() {
            let id = self.create(current_pc, current_view, MapPose::new(0.0, 0.0, self.initial_heading));
            self.active_id = id;
            self.accum = MapPose::default();
            self.accum_t = 0.0;
            return MapEvent::Created { id };
        }
        self.accum = self.accum.advance(odom);
        self.accum_t += dt;

        let scores = self.score_all(current_pc, current_view);
        let (best, best_score) = scores
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });

        let from = self.active_id;
        if best_score >= self.create_threshold {
            let pose = self.experiences[from].pose.compose(&self.accum);
            let id = self.create(current_pc, current_view, pose);
            self.push_link(from, id, self.accum, self.accum_t);
            self.active_id = id;
            self.accum = MapPose::default();
            self.accum_t = 0.0;
            return MapEvent::Created { id };
        }
        if best == from {
            return MapEvent::Stayed { id: from };
        }
        if !self.linked(from, best) {
            self.push_link(from, best, self.accum, self.accum_t);
        }
        self.active_id = best;
        self.accum = MapPose::default();
        self.accum_t = 0.0;
        self.relax();
        MapEvent::LoopClosed { from, to: best }
    }

    /// Constraint error of a link: where the target is, minus where the link
    /// says it should be.
    fn link_error(&self, link: &Link) -> [f64; 3] {
        let from = &self.experiences[link.from_id].pose;
        let to = &self.experiences[link.to_id].pose;
        let d = &link.delta_pose;
        let (s, c) = link.frame_heading.sin_cos();
        [
            to.x - (from.x + c * d.x - s * d.y),
            to.y - (from.y + s * d.x + c * d.y),
            wrap_angle(to.theta - from.theta - d.theta),
        ]
    }

    /// Overwrites an experience pose, leaving links untouched.
    pub fn set_pose(&mut self, id: usize, pose: MapPose) {
        self.experiences[id].pose = pose;
    }

    /// Sum of squared link errors (x, y and wrapped theta).
    pub fn residual(&self) -> f64 {
        self.links
            .iter()
            .map(|l| self.link_error(l).iter().map(|e| e * e).sum::<f64>())
            .sum()
    }

    /// One simultaneous correction pass. Each link pulls its source toward and
    /// pushes its target away from agreement, scaled by `alpha` over the
    /// node's link count. Returns the largest translation applied.
    pub fn relax_once(&mut self, alpha: f64) -> f64 {
        let mut corrections = vec![[0.0f64; 3]; self.experiences.len()];
        for link in &self.links {
            let err = self.link_error(link);
            for k in 0..3 {
                corrections[link.from_id][k] += err[k];
                corrections[link.to_id][k] -= err[k];
            }
        }
        let mut largest = 0.0f64;
        for (exp, corr) in self.experiences.iter_mut().zip(&corrections) {
            let degree = exp.out_links.len() + exp.in_links.len();
            if degree == 0 {
                continue;
            }
            let gain = alpha / degree as f64;
            let (dx, dy) = (gain * corr[0], gain * corr[1]);
            exp.pose = MapPose::new(exp.pose.x + dx, exp.pose.y + dy, exp.pose.theta + gain * corr[2]);
            largest = largest.max(dx.hypot(dy));
        }
        largest
    }

    /// Runs the configured number of passes and returns the final residual.
    pub fn relax(&mut self) -> f64 {
        for _ in 0..self.loops {
            self.relax_once(self.alpha);
        }
        self.residual()
    }

    /// Experiences in creation order with their current poses.
    pub fn trajectory(&self) -> Vec<(usize, MapPose)> {
        self.experiences.iter().map(|e| (e.id, e.pose)).collect()
    }

    /// Text export with stable column order:
    /// `experience id x y theta view_id pc_x pc_y pc_theta` then
    /// `link from to dx dy dtheta dt frame_heading`.
    pub fn export(&self) -> String {
        let mut out = String::from("# experience id x y theta view_id pc_x pc_y pc_theta\n");
        for e in &self.experiences {
            let _ = writeln!(
                out,
                "experience {} {} {} {} {} {} {} {}",
                e.id, e.pose.x, e.pose.y, e.pose.theta, e.view_id, e.pc_pose.x, e.pc_pose.y, e.pc_pose.theta
            );
        }
        out.push_str("# link from to dx dy dtheta dt frame_heading\n");
        for l in &self.links {
            let d = &l.delta_pose;
            let _ = writeln!(
                out,
                "link {} {} {} {} {} {} {}",
                l.from_id, l.to_id, d.x, d.y, d.theta, l.delta_t, l.frame_heading
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pose(x: f64, y: f64, t: f64) -> MapPose {
        MapPose::new(x, y, t)
    }

    #[test]
    fn compose_and_relative_invert() {
        let a = pose(1.0, -2.0, 0.7);
        let b = pose(-3.0, 4.5, -2.9);
        let back = a.compose(&a.relative(&b));
        assert!((back.x - b.x).abs() < 1e-12 && (back.y - b.y).abs() < 1e-12);
        assert!(wrap_angle(back.theta - b.theta).abs() < 1e-12);
        let r = pose(0.0, 0.0, PI / 2.0).compose(&pose(1.0, 0.0, 0.0));
        assert!(r.x.abs() < 1e-12 && (r.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_example() {
        let mut map = ExperienceMap::from_graph(&[pose(0.0, 0.0, 0.0), pose(2.0, 0.0, 0.0)], &[(0, 1, pose(1.0, 0.0, 0.0))]);
        let moved = map.relax_once(0.5);
        assert_eq!(moved, 0.5);
        assert_eq!(map.experiences()[0].pose, pose(0.5, 0.0, 0.0));
        assert_eq!(map.experiences()[1].pose, pose(1.5, 0.0, 0.0));
    }

    #[test]
    fn consistent_graph_is_fixed_point() {
        let a = pose(1.0, 1.0, 0.3);
        let d = pose(2.0, 0.5, 0.4);
        let mut map = ExperienceMap::from_graph(&[a, a.compose(&d)], &[(0, 1, d)]);
        assert!(map.residual() < 1e-24);
        assert!(map.relax_once(0.5) < 1e-12);
    }

    #[test]
    fn star_with_bad_spoke_improves() {
        let hub = pose(0.0, 0.0, 0.0);
        let spokes = [pose(1.0, 0.0, 0.0), pose(0.0, 1.0, 0.0), pose(-1.0, 0.0, 0.0)];
        let mut poses = vec![hub];
        poses.extend(spokes.iter().map(|d| hub.compose(d)));
        poses[3] = pose(-1.4, 0.3, 0.1);
        let links: Vec<_> = spokes.iter().enumerate().map(|(i, d)| (0, i + 1, *d)).collect();
        let mut map = ExperienceMap::from_graph(&poses, &links);
        let before = map.residual();
        map.relax_once(0.5);
        assert!(map.residual() < before);
    }

    #[test]
    fn drifted_square_converges() {
        // Links measured on the true square; node poses then drift away.
        let side = pose(10.0, 0.0, PI / 2.0);
        let truth = [
            pose(0.0, 0.0, 0.0),
            pose(10.0, 0.0, PI / 2.0),
            pose(10.0, 10.0, PI),
            pose(0.0, 10.0, -PI / 2.0),
        ];
        let links = vec![(0, 1, side), (1, 2, side), (2, 3, side), (3, 0, side)];
        let mut map = ExperienceMap::from_graph(&truth, &links);
        let mut drifted = truth[0];
        for i in 1..4 {
            let drift = pose(0.3 * i as f64, -0.2 * i as f64, 0.05 * i as f64);
            drifted = drifted.compose(&side).compose(&drift);
            map.set_pose(i, drifted);
        }
        let initial = map.residual();
        for _ in 0..50 {
            map.relax_once(0.5);
        }
        assert!(map.residual() < 0.01 * initial, "{} vs {initial}", map.residual());
    }

    fn map_with_cfg() -> (RunConfig, ExperienceMap) {
        let cfg = RunConfig::default();
        let map = ExperienceMap::new(&cfg);
        (cfg, map)
    }

    #[test]
    fn first_update_creates_at_initial_heading() {
        let (_, mut map) = map_with_cfg();
        let ev = map.update(PackedPose::new(9.0, 9.0, 0.0), 0, OdometryDelta::default(), 0.0);
        assert_eq!(ev, MapEvent::Created { id: 0 });
        let p = map.experiences()[0].pose;
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert!((p.theta - PI).abs() < 1e-12);
        assert_eq!(map.score_all(PackedPose::new(9.0, 9.0, 0.0), 0), vec![0.0]);
    }

    #[test]
    fn scores() {
        let (_, mut map) = map_with_cfg();
        map.update(PackedPose::new(1.0, 1.0, 1.0), 3, OdometryDelta::default(), 0.0);
        assert_eq!(map.score_all(PackedPose::new(1.0, 1.0, 1.0), 3), vec![0.0]);
        assert_eq!(map.score_all(PackedPose::new(2.5, 1.0, 1.0), 3), vec![1.5]);
        // 17.5 is 1.5 cells from 1.0 on an 18-cell axis.
        assert_eq!(map.score_all(PackedPose::new(17.5, 1.0, 1.0), 3), vec![1.5]);
        assert_eq!(map.score_all(PackedPose::new(1.0, 1.0, 1.0), 4), vec![180.0]);
    }

    #[test]
    fn stay_create_and_close() {
        let (_, mut map) = map_with_cfg();
        let pc0 = PackedPose::new(5.0, 5.0, 0.0);
        map.update(pc0, 0, OdometryDelta::default(), 0.0);
        let step = OdometryDelta::new(1.0, 0.0);
        assert_eq!(map.update(PackedPose::new(5.5, 5.0, 0.0), 0, step, 1.0), MapEvent::Stayed { id: 0 });
        let ev = map.update(PackedPose::new(8.0, 5.0, 0.0), 1, step, 1.0);
        assert_eq!(ev, MapEvent::Created { id: 1 });
        // Two unit steps along heading pi.
        let p = map.experiences()[1].pose;
        assert!((p.x + 2.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        assert_eq!(map.links()[0].delta_t, 2.0);
        assert_eq!(map.score_all(PackedPose::new(8.0, 5.0, 0.0), 1)[1], 0.0);

        let ev = map.update(pc0, 0, OdometryDelta::new(1.5, 0.0), 1.0);
        assert_eq!(ev, MapEvent::LoopClosed { from: 1, to: 0 });
        assert_eq!(map.active_id(), 0);
        // Link 1 -> 0 already implied by 0 -> 1, so no new link.
        assert_eq!(map.links().len(), 1);
    }

    #[test]
    fn closure_adds_link_and_relaxes() {
        let (_, mut map) = map_with_cfg();
        let pcs = [(2.0, 2.0), (6.0, 2.0), (6.0, 6.0), (2.0, 6.0)];
        map.update(PackedPose::new(2.0, 2.0, 0.0), 0, OdometryDelta::default(), 0.0);
        for (i, &(x, y)) in pcs.iter().enumerate().skip(1) {
            map.update(PackedPose::new(x, y, 0.0), i, OdometryDelta::new(10.0, PI / 2.0 + 0.05), 1.0);
        }
        let before = map.experiences()[3].pose;
        let ev = map.update(PackedPose::new(2.0, 2.0, 0.0), 0, OdometryDelta::new(10.0, PI / 2.0 + 0.05), 1.0);
        assert_eq!(ev, MapEvent::LoopClosed { from: 3, to: 0 });
        assert_eq!(map.links().len(), 4);
        assert_ne!(map.experiences()[3].pose, before);
        assert_eq!(map.trajectory().len(), 4);
    }

    #[test]
    fn export_layout() {
        let m = ExperienceMap::from_graph(&[pose(0.0, 0.0, 0.0), pose(1.0, 0.0, 0.0)], &[(0, 1, pose(1.0, 0.0, 0.0))]);
        let text = m.export();
        assert!(text.contains("experience 1 1 0 0 0 0 0 0\n"));
        assert!(text.ends_with("link 0 1 1 0 0 0 0\n"));
    }
}
