//! Trajectory accuracy: Hausdorff distance and rigid 2-D alignment.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet2 {
    pub points: Vec<(f64, f64)>,
}

impl PointSet2 {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &RigidTransform) -> PointSet2 {
        PointSet2::new(self.points.iter().map(|&p| t.apply(p)).collect())
    }
}

#[inline]
fn dist_sq(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    dx * dx + dy * dy
}

/// Largest nearest-neighbor squared distance from `a` into `b`, brute force.
fn directed_brute(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .map(|&p| b.iter().map(|&q| dist_sq(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Reference O(|A||B|) Hausdorff distance.
pub fn hausdorff_brute(a: &PointSet2, b: &PointSet2) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed_brute(&a.points, &b.points)
        .max(directed_brute(&b.points, &a.points))
        .sqrt())
}

/// Uniform bucket grid over a point set for exact nearest-neighbor queries.
struct Grid<'a> {
    points: &'a [(f64, f64)],
    origin: (f64, f64),
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [(f64, f64)]) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for &(x, y) in points {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let extent = (hi.0 - lo.0).max(hi.1 - lo.1);
        let per_axis = (points.len() as f64).sqrt().ceil().max(1.0);
        let cell = if extent > 0.0 { extent / per_axis } else { 1.0 };
        let nx = ((hi.0 - lo.0) / cell).floor() as usize + 1;
        let ny = ((hi.1 - lo.1) / cell).floor() as usize + 1;
        let mut grid = Grid {
            points,
            origin: lo,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, &p) in points.iter().enumerate() {
            let (cx, cy) = grid.cell_of(p);
            let (cx, cy) = (cx.clamp(0, nx as isize - 1) as usize, cy.clamp(0, ny as isize - 1) as usize);
            grid.buckets[cy * nx + cx].push(i);
        }
        grid
    }

    fn cell_of(&self, p: (f64, f64)) -> (isize, isize) {
        (
            ((p.0 - self.origin.0) / self.cell).floor() as isize,
            ((p.1 - self.origin.1) / self.cell).floor() as isize,
        )
    }

    /// Squared distance to the nearest indexed point, scanning rings of cells
    /// outward until no unvisited cell can hold anything closer.
    fn nearest_sq(&self, p: (f64, f64)) -> f64 {
        let (cx, cy) = self.cell_of(p);
        let (cx, cy) = (cx.clamp(-1, self.nx as isize), cy.clamp(-1, self.ny as isize));
        // Clamping moved the query's cell; account for that gap in the bound.
        let max_ring = self.nx.max(self.ny) as isize + 2;
        let mut best = f64::INFINITY;
        for r in 0..=max_ring {
            let mut visit = |x: isize, y: isize| {
                if x < 0 || y < 0 || x >= self.nx as isize || y >= self.ny as isize {
                    return;
                }
                for &i in &self.buckets[y as usize * self.nx + x as usize] {
                    best = best.min(dist_sq(p, self.points[i]));
                }
            };
            if r == 0 {
                visit(cx, cy);
            } else {
                for x in cx - r..=cx + r {
                    visit(x, cy - r);
                    visit(x, cy + r);
                }
                for y in cy - r + 1..cy + r {
                    visit(cx - r, y);
                    visit(cx + r, y);
                }
            }
            // Anything in ring r+1 lies at least r cells (minus the query's
            // offset inside its own cell) away; keep a small safety margin.
            let reach = (r as f64 - 1e-6).max(0.0) * self.cell;
            if best.is_finite() && reach * reach > best {
                break;
            }
        }
        if best.is_finite() {
            best
        } else {
            // Unreachable for nonempty sets, kept as an exact fallback.
            self.points.iter().map(|&q| dist_sq(p, q)).fold(f64::INFINITY, f64::min)
        }
    }
}

fn directed_grid(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let grid = Grid::new(b);
    a.iter().map(|&p| grid.nearest_sq(p)).fold(0.0, f64::max)
}

/// Hausdorff distance using a bucket grid; bit-identical to
/// [`hausdorff_brute`].
pub fn hausdorff(a: &PointSet2, b: &PointSet2) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(directed_grid(&a.points, &b.points)
        .max(directed_grid(&b.points, &a.points))
        .sqrt())
}

/// `p -> R(theta) p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        theta: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * p.0 - s * p.1 + self.tx, s * p.0 + c * p.1 + self.ty)
    }
}

/// Least-squares rotation and translation taking `est[i]` onto `gt[i]`.
pub fn align(est: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<RigidTransform> {
    if est.len() != gt.len() {
        return Err(Error::Dimension(format!("{} estimates vs {} references", est.len(), gt.len())));
    }
    if est.len() < 2 {
        return Err(Error::Degenerate("alignment needs at least 2 correspondences".into()));
    }
    let n = est.len() as f64;
    let mean = |s: &[(f64, f64)]| {
        let (x, y) = s.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
        (x / n, y / n)
    };
    let (ce, cg) = (mean(est), mean(gt));
    let (mut dot, mut cross, mut spread) = (0.0, 0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        let (ex, ey) = (e.0 - ce.0, e.1 - ce.1);
        let (gx, gy) = (g.0 - cg.0, g.1 - cg.1);
        dot += ex * gx + ey * gy;
        cross += ex * gy - ey * gx;
        spread += ex * ex + ey * ey;
    }
    if spread <= f64::EPSILON * n {
        return Err(Error::Degenerate("estimated points all coincide".into()));
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Ok(RigidTransform {
        theta,
        tx: cg.0 - (c * ce.0 - s * ce.1),
        ty: cg.1 - (s * ce.0 + c * ce.1),
    })
}

pub fn rms_error(est: &[(f64, f64)], gt: &[(f64, f64)]) -> f64 {
    let sum: f64 = est.iter().zip(gt).map(|(&a, &b)| dist_sq(a, b)).sum();
    (sum / est.len().max(1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Headline distance: aligned when alignment was requested.
    pub d_hausdorff: f64,
    pub d_hausdorff_raw: f64,
    pub d_hausdorff_aligned: f64,
    pub n_est: usize,
    pub n_gt: usize,
    pub aligned: bool,
    pub transform: RigidTransform,
}

/// Evaluates an estimate against ground truth. `pairs` holds index
/// correspondences `(est, gt)` used for the alignment.
pub fn evaluate(est: &PointSet2, gt: &PointSet2, pairs: &[(usize, usize)], use_alignment: bool) -> Result<EvalReport> {
    let raw = hausdorff(est, gt)?;
    let (e, g): (Vec<_>, Vec<_>) = pairs.iter().map(|&(i, j)| (est.points[i], gt.points[j])).unzip();
    let transform = align(&e, &g)?;
    let aligned = hausdorff(&est.transformed(&transform), gt)?;
    Ok(EvalReport {
        d_hausdorff: if use_alignment { aligned } else { raw },
        d_hausdorff_raw: raw,
        d_hausdorff_aligned: aligned,
        n_est: est.len(),
        n_gt: gt.len(),
        aligned: use_alignment,
        transform,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        format!(
            "d_hausdorff = {}\nd_hausdorff_raw = {}\nd_hausdorff_aligned = {}\nn_est = {}\nn_gt = {}\naligned = {}\n\
             transform_theta = {}\ntransform_tx = {}\ntransform_ty = {}\n",
            self.d_hausdorff,
            self.d_hausdorff_raw,
            self.d_hausdorff_aligned,
            self.n_est,
            self.n_gt,
            u8::from(self.aligned),
            self.transform.theta,
            self.transform.tx,
            self.transform.ty
        )
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "d_hausdorff": self.d_hausdorff,
            "d_hausdorff_raw": self.d_hausdorff_raw,
            "d_hausdorff_aligned": self.d_hausdorff_aligned,
            "n_est": self.n_est,
            "n_gt": self.n_gt,
            "aligned": self.aligned,
            "transform": {
                "theta": self.transform.theta,
                "tx": self.transform.tx,
                "ty": self.transform.ty,
            },
        });
        serde_json::to_string_pretty(&value).expect("report is plain data") + "\n"
    }
}
