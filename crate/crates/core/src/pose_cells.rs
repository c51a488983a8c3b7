//! Pose cell network: a 3-D continuous attractor over (x', y', theta').
//!
//! All three axes wrap. One update is
//!
//! 1. inject view energy at the linked cell coordinates,
//! 2. add local excitation (circular convolution with a narrow Gaussian),
//! 3. add local and global inhibition (convolution with a broader Gaussian of
//!    the excited volume, minus a constant),
//! 4. clip negatives and renormalize to unit total energy,
//! 5. shift the packet by the odometry increment (path integration),
//!
//! after which the packet centroid is read out.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{wrap_coord, wrap_index, OdometryDelta};

/// Shifts within this distance of an integer are treated as integer shifts.
const INTEGER_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ActivityVolume {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl ActivityVolume {
    pub fn zeros(dims: [usize; 3]) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "volume dims must be positive");
        Self {
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn uniform(dims: [usize; 3]) -> Self {
        let mut v = Self::zeros(dims);
        let n = v.values.len() as f64;
        v.values.iter_mut().for_each(|x| *x = 1.0 / n);
        v
    }

    /// All energy in a single cell.
    pub fn impulse(dims: [usize; 3], cell: [usize; 3]) -> Self {
        let mut v = Self::zeros(dims);
        let idx = v.index(cell[0], cell[1], cell[2]);
        v.values[idx] = 1.0;
        v
    }

    pub fn from_values(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) || values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Dimension(format!(
                "{} values for dims {:?}",
                values.len(),
                dims
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, th: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + th
    }

    #[inline]
    fn coords(&self, idx: usize) -> [usize; 3] {
        let th = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], th]
    }

    pub fn get(&self, x: usize, y: usize, th: usize) -> f64 {
        self.values[self.index(x, y, th)]
    }

    pub fn set(&mut self, x: usize, y: usize, th: usize, value: f64) {
        let idx = self.index(x, y, th);
        self.values[idx] = value;
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ActivityVolume) -> Result<()> {
        check_same_dims(self.dims, other.dims)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// Cyclic shift by `offset` cells along `axis` (0 = x', 1 = y', 2 = theta').
    pub fn roll(&self, axis: usize, offset: isize) -> ActivityVolume {
        let mut out = ActivityVolume::zeros(self.dims);
        for (idx, &v) in self.values.iter().enumerate() {
            let mut c = self.coords(idx);
            c[axis] = wrap_index(c[axis] as isize + offset, self.dims[axis]);
            let j = out.index(c[0], c[1], c[2]);
            out.values[j] = v;
        }
        out
    }

    /// Linear index of the largest cell; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax_cell(&self) -> [usize; 3] {
        self.coords(self.argmax())
    }

    /// Energy inside the wrapped cube of half-width `radius` around the argmax.
    pub fn energy_near_peak(&self, radius: usize) -> f64 {
        let peak = self.argmax_cell();
        let mut total = 0.0;
        let half = |axis: usize| radius.min((self.dims[axis] - 1) / 2) as isize;
        let (rx, ry, rt) = (half(0), half(1), half(2));
        for dx in -rx..=rx {
            let x = wrap_index(peak[0] as isize + dx, self.dims[0]);
            for dy in -ry..=ry {
                let y = wrap_index(peak[1] as isize + dy, self.dims[1]);
                for dt in -rt..=rt {
                    let t = wrap_index(peak[2] as isize + dt, self.dims[2]);
                    total += self.get(x, y, t);
                }
            }
        }
        total
    }

    /// Writes the debug snapshot format: three little-endian `u64` dims
    /// followed by the row-major (x', y', theta') values as little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in self.dims {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::Dimension("truncated volume snapshot".into());
        if bytes.len() < 24 {
            return Err(bad());
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let raw: [u8; 8] = bytes[i * 8..i * 8 + 8].try_into().map_err(|_| bad())?;
            *d = u64::from_le_bytes(raw) as usize;
        }
        let body = &bytes[24..];
        if !body.len().is_multiple_of(8) {
            return Err(bad());
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_values(dims, values)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_snapshot(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn check_same_dims(a: [usize; 3], b: [usize; 3]) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Excitatory,
    Inhibitory,
}

/// Normalized 3-D Gaussian weight cube with odd side length.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel3 {
    dims: [usize; 3],
    sigma: f64,
    kind: KernelKind,
    weights: Vec<f64>,
}

impl Kernel3 {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at signed offset `(a, b, c)` from the kernel centre, zero outside.
    pub fn weight(&self, a: isize, b: isize, c: isize) -> f64 {
        let h = |axis: usize| (self.dims[axis] / 2) as isize;
        if a.abs() > h(0) || b.abs() > h(1) || c.abs() > h(2) {
            return 0.0;
        }
        let i = (a + h(0)) as usize;
        let j = (b + h(1)) as usize;
        let k = (c + h(2)) as usize;
        self.weights[(i * self.dims[1] + j) * self.dims[2] + k]
    }
}

/// Builds a `dim`³ Gaussian kernel with `exp(-(a² + b² + c²) / 2σ²)` weights,
/// normalized to unit sum.
pub fn build_kernel(sigma: f64, dim: usize, kind: KernelKind) -> Result<Kernel3> {
    if dim.is_multiple_of(2) {
        return Err(Error::Invalid(format!("kernel dimension must be odd, got {dim}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Invalid(format!("kernel sigma must be positive, got {sigma}")));
    }
    let h = (dim / 2) as isize;
    let mut weights = Vec::with_capacity(dim * dim * dim);
    for a in -h..=h {
        for b in -h..=h {
            for c in -h..=h {
                let r2 = (a * a + b * b + c * c) as f64;
                weights.push((-r2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Kernel3 {
        dims: [dim; 3],
        sigma,
        kind,
        weights,
    })
}

/// Circular convolution of `p` with `kernel`.
fn convolve(p: &ActivityVolume, kernel: &Kernel3) -> Result<ActivityVolume> {
    let [nx, ny, nt] = p.dims;
    let [kx, ky, kt] = kernel.dims;
    if kx > nx || ky > ny || kt > nt {
        return Err(Error::Dimension(format!(
            "kernel {:?} larger than grid {:?}",
            kernel.dims, p.dims
        )));
    }
    let (hx, hy, ht) = ((kx / 2) as isize, (ky / 2) as isize, (kt / 2) as isize);
    let mut out = ActivityVolume::zeros(p.dims);
    // Scatter from nonzero sources only; a converged packet occupies few cells.
    for (src, &v) in p.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let [sx, sy, st] = p.coords(src);
        let mut w = kernel.weights.iter();
        for a in -hx..=hx {
            let x = wrap_index(sx as isize + a, nx);
            for b in -hy..=hy {
                let row = (x * ny + wrap_index(sy as isize + b, ny)) * nt;
                for c in -ht..=ht {
                    let t = wrap_index(st as isize + c, nt);
                    out.values[row + t] += v * w.next().expect("kernel weight");
                }
            }
        }
    }
    Ok(out)
}

/// Local excitation increment: the circular convolution of `p` with `eps`.
pub fn excite(p: &ActivityVolume, eps: &Kernel3) -> Result<ActivityVolume> {
    convolve(p, eps)
}

/// Inhibition increment: minus the circular convolution of `p` with `psi`,
/// minus the global constant `phi` in every cell.
pub fn inhibit(p: &ActivityVolume, psi: &Kernel3, phi: f64) -> Result<ActivityVolume> {
    let mut delta = convolve(p, psi)?;
    delta.values.iter_mut().for_each(|v| *v = -*v - phi);
    Ok(delta)
}

/// Clips negative cells to zero and rescales to unit total energy.
pub fn clip_normalize(p: &ActivityVolume) -> Result<ActivityVolume> {
    let mut out = p.clone();
    clip_normalize_in_place(&mut out)?;
    Ok(out)
}

fn clip_normalize_in_place(p: &mut ActivityVolume) -> Result<()> {
    let mut total = 0.0;
    for v in p.values.iter_mut() {
        if v.is_nan() || *v <= 0.0 {
            *v = 0.0;
        }
        total += *v;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Collapse);
    }
    p.values.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Splits a real shift into an integer part and a fractional remainder in [0, 1).
fn split_shift(shift: f64) -> (isize, f64) {
    let nearest = shift.round();
    if (shift - nearest).abs() < INTEGER_SNAP {
        return (nearest as isize, 0.0);
    }
    let base = shift.floor();
    (base as isize, shift - base)
}

/// Moves the packet by `odom`: each theta' layer translates along its own
/// heading by `delta_s / pc_cell_x_size` cells, then the volume rotates by
/// `delta_theta * n_theta / 2pi` cells. Fractional shifts are shared between
/// neighbouring cells with linear weights, so energy is conserved.
pub fn path_integrate(
    p: &ActivityVolume,
    odom: OdometryDelta,
    cell_size: f64,
) -> Result<ActivityVolume> {
    if !odom.is_finite() {
        return Err(Error::NonFinite(format!("odometry {odom:?}")));
    }
    let [nx, ny, nt] = p.dims;
    let mut translated = ActivityVolume::zeros(p.dims);
    for t in 0..nt {
        let heading = t as f64 * 2.0 * PI / nt as f64;
        let dx = odom.delta_s * heading.cos() / cell_size;
        let dy = odom.delta_s * heading.sin() / cell_size;
        let (ix, fx) = split_shift(dx);
        let (iy, fy) = split_shift(dy);
        let taps = [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ];
        for x in 0..nx {
            for y in 0..ny {
                let v = p.get(x, y, t);
                if v == 0.0 {
                    continue;
                }
                for &(ox, oy, w) in &taps {
                    if w == 0.0 {
                        continue;
                    }
                    let tx = wrap_index(x as isize + ix + ox, nx);
                    let ty = wrap_index(y as isize + iy + oy, ny);
                    let j = translated.index(tx, ty, t);
                    translated.values[j] += v * w;
                }
            }
        }
    }

    let dt = odom.delta_theta * nt as f64 / (2.0 * PI);
    let (it, ft) = split_shift(dt);
    if it == 0 && ft == 0.0 {
        return Ok(translated);
    }
    let mut rotated = ActivityVolume::zeros(p.dims);
    for (idx, &v) in translated.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let [x, y, t] = translated.coords(idx);
        let t0 = wrap_index(t as isize + it, nt);
        let j0 = rotated.index(x, y, t0);
        rotated.values[j0] += v * (1.0 - ft);
        if ft != 0.0 {
            let t1 = wrap_index(t as isize + it + 1, nt);
            let j1 = rotated.index(x, y, t1);
            rotated.values[j1] += v * ft;
        }
    }
    Ok(rotated)
}

/// Fractional pose-cell coordinate of the dominant packet's centroid.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PackedPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PackedPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// True when every coordinate lies in `[0, dim)` for its axis.
    pub fn in_range(&self, dims: [usize; 3]) -> bool {
        [self.x, self.y, self.theta]
            .iter()
            .zip(dims)
            .all(|(&v, d)| v.is_finite() && v >= 0.0 && v < d as f64)
    }

    /// Euclidean distance with each axis wrapped on its own period.
    pub fn wrapped_distance(&self, other: &PackedPose, dims: [usize; 3]) -> f64 {
        let axis = |a: f64, b: f64, n: usize| {
            let n = n as f64;
            let d = (a - b).rem_euclid(n);
            d.min(n - d)
        };
        let dx = axis(self.x, other.x, dims[0]);
        let dy = axis(self.y, other.y, dims[1]);
        let dt = axis(self.theta, other.theta, dims[2]);
        (dx * dx + dy * dy + dt * dt).sqrt()
    }
}

/// Adds `gain * strength` for each link, spread trilinearly around the link's
/// fractional coordinate.
pub fn inject(p: &ActivityVolume, links: &[(PackedPose, f64)], gain: f64) -> Result<ActivityVolume> {
    let mut out = p.clone();
    let dims = p.dims;
    for (pose, strength) in links {
        if !pose.in_range(dims) {
            return Err(Error::Invalid(format!(
                "injection coordinate {pose:?} outside grid {dims:?}"
            )));
        }
        if !(strength.is_finite() && *strength >= 0.0) {
            return Err(Error::Invalid(format!("injection strength {strength}")));
        }
        let energy = gain * strength;
        let split = |v: f64| {
            let base = v.floor();
            (base as isize, v - base)
        };
        let (ix, fx) = split(pose.x);
        let (iy, fy) = split(pose.y);
        let (it, ft) = split(pose.theta);
        for (ox, wx) in [(0, 1.0 - fx), (1, fx)] {
            for (oy, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (ot, wt) in [(0, 1.0 - ft), (1, ft)] {
                    let w = wx * wy * wt;
                    if w == 0.0 {
                        continue;
                    }
                    let j = out.index(
                        wrap_index(ix + ox, dims[0]),
                        wrap_index(iy + oy, dims[1]),
                        wrap_index(it + ot, dims[2]),
                    );
                    out.values[j] += energy * w;
                }
            }
        }
    }
    Ok(out)
}

/// Centroid of the packet around the global maximum: the energy-weighted
/// mean offset over the wrapped cube of half-width `radius` around the argmax,
/// added to the argmax and wrapped back into range.
pub fn centroid(p: &ActivityVolume, radius: usize) -> PackedPose {
    let peak = p.argmax_cell();
    let dims = p.dims;
    let half = |axis: usize| radius.min((dims[axis] - 1) / 2) as isize;
    let (rx, ry, rt) = (half(0), half(1), half(2));
    let (mut mass, mut sx, mut sy, mut st) = (0.0, 0.0, 0.0, 0.0);
    for dx in -rx..=rx {
        let x = wrap_index(peak[0] as isize + dx, dims[0]);
        for dy in -ry..=ry {
            let y = wrap_index(peak[1] as isize + dy, dims[1]);
            for dt in -rt..=rt {
                let t = wrap_index(peak[2] as isize + dt, dims[2]);
                let v = p.get(x, y, t);
                mass += v;
                sx += v * dx as f64;
                sy += v * dy as f64;
                st += v * dt as f64;
            }
        }
    }
    let (ox, oy, ot) = if mass > 0.0 {
        (sx / mass, sy / mass, st / mass)
    } else {
        (0.0, 0.0, 0.0)
    };
    PackedPose::new(
        wrap_coord(peak[0] as f64 + ox, dims[0] as f64),
        wrap_coord(peak[1] as f64 + oy, dims[1] as f64),
        wrap_coord(peak[2] as f64 + ot, dims[2] as f64),
    )
}

/// The attractor network with its kernels and current state.
#[derive(Clone, Debug)]
pub struct PoseCellNetwork {
    volume: ActivityVolume,
    excitation: Kernel3,
    inhibition: Kernel3,
    global_inhibition: f64,
    inject_energy: f64,
    cell_size: f64,
    centroid_radius: usize,
    pose: PackedPose,
}

impl PoseCellNetwork {
    /// Network with all energy in the cell `(dim/2, dim/2, 0)`.
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let dims = [cfg.pc_dim_xy, cfg.pc_dim_xy, cfg.pc_dim_th];
        let start = [cfg.pc_dim_xy / 2, cfg.pc_dim_xy / 2, 0];
        Self::with_volume(cfg, ActivityVolume::impulse(dims, start))
    }

    pub fn with_volume(cfg: &RunConfig, volume: ActivityVolume) -> Result<Self> {
        let dims = [cfg.pc_dim_xy, cfg.pc_dim_xy, cfg.pc_dim_th];
        check_same_dims(dims, volume.dims())?;
        let excitation = build_kernel(cfg.pc_sigma_e, cfg.pc_w_e_dim, KernelKind::Excitatory)?;
        let inhibition = build_kernel(cfg.pc_sigma_i, cfg.pc_w_i_dim, KernelKind::Inhibitory)?;
        let centroid_radius = cfg.pc_w_e_dim / 2;
        let pose = centroid(&volume, centroid_radius);
        Ok(Self {
            volume,
            excitation,
            inhibition,
            global_inhibition: cfg.pc_global_inhibit,
            inject_energy: cfg.pc_vt_inject_energy,
            cell_size: cfg.pc_cell_x_size,
            centroid_radius,
            pose,
        })
    }

    pub fn volume(&self) -> &ActivityVolume {
        &self.volume
    }

    pub fn dims(&self) -> [usize; 3] {
        self.volume.dims()
    }

    /// Centroid after the most recent step.
    pub fn pose(&self) -> PackedPose {
        self.pose
    }

    pub fn excitation(&self) -> &Kernel3 {
        &self.excitation
    }

    pub fn inhibition(&self) -> &Kernel3 {
        &self.inhibition
    }

    /// One full update; returns the new packet centroid.
    pub fn step(&mut self, odom: OdometryDelta, injections: &[(PackedPose, f64)]) -> Result<PackedPose> {
        let mut p = inject(&self.volume, injections, self.inject_energy)?;
        let excitation = excite(&p, &self.excitation)?;
        p.add_assign(&excitation)?;
        let inhibition = inhibit(&p, &self.inhibition, self.global_inhibition)?;
        p.add_assign(&inhibition)?;
        clip_normalize_in_place(&mut p)?;
        let p = path_integrate(&p, odom, self.cell_size)?;
        self.pose = centroid(&p, self.centroid_radius);
        self.volume = p;
        Ok(self.pose)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_kernel() {
        let k = build_kernel(1.0, 1, KernelKind::Excitatory).unwrap();
        assert_eq!(k.weights(), &[1.0]);
    }

    #[test]
    fn kernel_errors() {
        assert!(build_kernel(1.0, 4, KernelKind::Excitatory).is_err());
        assert!(build_kernel(0.0, 3, KernelKind::Excitatory).is_err());
        assert!(build_kernel(-2.0, 3, KernelKind::Inhibitory).is_err());
    }

    #[test]
    fn kernel_dim3_centre_weight() {
        // Brute-force the 27 raw exponentials.
        let mut raw = Vec::new();
        for a in -1i32..=1 {
            for b in -1i32..=1 {
                for c in -1i32..=1 {
                    raw.push((-((a * a + b * b + c * c) as f64) / 2.0).exp());
                }
            }
        }
        let total: f64 = raw.iter().sum();
        let expected = 1.0 / total;
        let closed = 1.0 / (1.0 + 6.0 * (-0.5f64).exp() + 12.0 * (-1.0f64).exp() + 8.0 * (-1.5f64).exp());
        assert!((expected - closed).abs() < 1e-15);
        assert!((expected - 0.092_261_4).abs() < 1e-7);
        let k = build_kernel(1.0, 3, KernelKind::Excitatory).unwrap();
        assert!((k.weight(0, 0, 0) - expected).abs() < 1e-15);
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_even() {
        let k = build_kernel(1.7, 5, KernelKind::Inhibitory).unwrap();
        for a in -2..=2 {
            for b in -2..=2 {
                for c in -2..=2 {
                    let w = k.weight(a, b, c);
                    assert_eq!(w, k.weight(-a, b, c));
                    assert_eq!(w, k.weight(a, -b, c));
                    assert_eq!(w, k.weight(a, b, -c));
                }
            }
        }
    }

    #[test]
    fn excite_uniform_stays_uniform() {
        let p = ActivityVolume::uniform([6, 6, 8]);
        let k = build_kernel(1.0, 5, KernelKind::Excitatory).unwrap();
        let d = excite(&p, &k).unwrap();
        let n = p.len() as f64;
        assert!(d.values().iter().all(|v| (v - 1.0 / n).abs() < 1e-15));
    }

    #[test]
    fn excite_impulse_response_wraps() {
        let p = ActivityVolume::impulse([5, 5, 5], [0, 0, 0]);
        let k = build_kernel(1.0, 3, KernelKind::Excitatory).unwrap();
        let d = excite(&p, &k).unwrap();
        for a in -1isize..=1 {
            for b in -1isize..=1 {
                for c in -1isize..=1 {
                    let got = d.get(wrap_index(a, 5), wrap_index(b, 5), wrap_index(c, 5));
                    assert_eq!(got, k.weight(a, b, c));
                }
            }
        }
        assert_eq!(d.get(2, 2, 2), 0.0);
        assert_eq!(d.get(4, 4, 4), k.weight(-1, -1, -1));
    }

    #[test]
    fn excite_rejects_oversized_kernel() {
        let p = ActivityVolume::uniform([3, 3, 3]);
        let k = build_kernel(1.0, 5, KernelKind::Excitatory).unwrap();
        assert!(matches!(excite(&p, &k), Err(Error::Dimension(_))));
    }

    #[test]
    fn inhibit_examples() {
        let k = build_kernel(2.0, 3, KernelKind::Inhibitory).unwrap();
        let p = ActivityVolume::uniform([4, 4, 4]);
        let d = inhibit(&p, &k, 0.0).unwrap();
        assert!(d.values().iter().all(|v| (v + 1.0 / 64.0).abs() < 1e-15));

        let z = ActivityVolume::zeros([4, 4, 4]);
        let d = inhibit(&z, &k, 0.1).unwrap();
        assert!(d.values().iter().all(|&v| v == -0.1));
    }

    #[test]
    fn clip_normalize_examples() {
        let mut p = ActivityVolume::zeros([2, 2, 2]);
        p.values_mut().iter_mut().for_each(|v| *v = -1.0);
        p.set(1, 0, 1, 2.0);
        let q = clip_normalize(&p).unwrap();
        assert_eq!(q.get(1, 0, 1), 1.0);
        assert_eq!(q.sum(), 1.0);

        let mut half = ActivityVolume::zeros([2, 2, 2]);
        half.values_mut().iter_mut().for_each(|v| *v = 0.5);
        let q = clip_normalize(&half).unwrap();
        assert!(q.values().iter().all(|&v| v == 0.125));

        let again = clip_normalize(&q).unwrap();
        for (a, b) in again.values().iter().zip(q.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let dead = ActivityVolume::zeros([2, 2, 2]);
        assert!(matches!(clip_normalize(&dead), Err(Error::Collapse)));
    }

    #[test]
    fn path_integration_identity_and_integer_shift() {
        let p = ActivityVolume::impulse([8, 8, 12], [3, 4, 0]);
        let same = path_integrate(&p, OdometryDelta::new(0.0, 0.0), 1.0).unwrap();
        assert_eq!(same, p);

        let moved = path_integrate(&p, OdometryDelta::new(2.0, 0.0), 2.0).unwrap();
        let c = centroid(&moved, 2);
        assert_eq!((c.x, c.y, c.theta), (4.0, 4.0, 0.0));

        let wrapped = path_integrate(&ActivityVolume::impulse([8, 8, 12], [7, 0, 0]), OdometryDelta::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(wrapped.get(0, 0, 0), 1.0);
    }

    #[test]
    fn path_integration_half_cell_split() {
        let p = ActivityVolume::impulse([8, 8, 12], [3, 4, 0]);
        let q = path_integrate(&p, OdometryDelta::new(0.5, 0.0), 1.0).unwrap();
        assert_eq!(q.get(3, 4, 0), 0.5);
        assert_eq!(q.get(4, 4, 0), 0.5);
        let c = centroid(&q, 2);
        assert!((c.x - 3.5).abs() < 1e-12 && c.y == 4.0);
    }

    #[test]
    fn path_integration_heading_layers() {
        // Layer 3 of 12 represents heading pi/2: forward motion is +y'.
        let p = ActivityVolume::impulse([8, 8, 12], [3, 4, 3]);
        let q = path_integrate(&p, OdometryDelta::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(q.get(3, 5, 3), 1.0);
        // A quarter turn is three theta' cells.
        let r = path_integrate(&p, OdometryDelta::new(0.0, PI / 2.0), 1.0).unwrap();
        assert_eq!(r.get(3, 4, 6), 1.0);
        let back = path_integrate(&p, OdometryDelta::new(0.0, -PI / 2.0), 1.0).unwrap();
        assert_eq!(back.get(3, 4, 0), 1.0);
    }

    #[test]
    fn path_integration_rejects_nan() {
        let p = ActivityVolume::uniform([4, 4, 4]);
        assert!(path_integrate(&p, OdometryDelta::new(f64::NAN, 0.0), 1.0).is_err());
    }

    #[test]
    fn inject_examples() {
        let p = ActivityVolume::uniform([6, 6, 6]);
        assert_eq!(inject(&p, &[], 0.2).unwrap(), p);

        let z = ActivityVolume::zeros([6, 6, 6]);
        let q = inject(&z, &[(PackedPose::new(1.0, 2.0, 3.0), 1.0)], 0.2).unwrap();
        assert_eq!(q.get(1, 2, 3), 0.2);
        assert_eq!(q.sum(), 0.2);

        let q = inject(&z, &[(PackedPose::new(1.5, 2.0, 3.0), 1.0)], 0.2).unwrap();
        assert!((q.get(1, 2, 3) - 0.1).abs() < 1e-15);
        assert!((q.get(2, 2, 3) - 0.1).abs() < 1e-15);

        let edge = inject(&z, &[(PackedPose::new(5.5, 0.0, 0.0), 1.0)], 1.0).unwrap();
        assert_eq!(edge.get(0, 0, 0), 0.5);

        assert!(inject(&z, &[(PackedPose::new(6.0, 0.0, 0.0), 1.0)], 0.2).is_err());
        assert!(inject(&z, &[(PackedPose::new(-0.1, 0.0, 0.0), 1.0)], 0.2).is_err());
    }

    #[test]
    fn centroid_examples() {
        let dims = [18, 18, 18];
        let c = centroid(&ActivityVolume::impulse(dims, [3, 4, 5]), 2);
        assert_eq!((c.x, c.y, c.theta), (3.0, 4.0, 5.0));

        let mut p = ActivityVolume::zeros(dims);
        p.set(0, 0, 0, 0.5);
        p.set(1, 0, 0, 0.5);
        assert_eq!(centroid(&p, 2).x, 0.5);

        let mut p = ActivityVolume::zeros(dims);
        p.set(17, 0, 0, 0.5);
        p.set(0, 0, 0, 0.5);
        let c = centroid(&p, 2);
        assert!((c.x - 17.5).abs() < 1e-12, "{c:?}");

        let flat = ActivityVolume::uniform(dims);
        let c = centroid(&flat, 2);
        assert!(c.x.abs() < 1e-12 && c.y.abs() < 1e-12 && c.theta.abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn wrapped_distance() {
        let dims = [18, 18, 36];
        let a = PackedPose::new(0.5, 1.0, 0.0);
        let b = PackedPose::new(17.5, 1.0, 35.0);
        assert!((a.wrapped_distance(&b, dims) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn roll_and_snapshot() {
        let mut p = ActivityVolume::zeros([3, 4, 5]);
        for (i, v) in p.values_mut().iter_mut().enumerate() {
            *v = i as f64;
        }
        let r = p.roll(1, -1);
        assert_eq!(r.get(0, 3, 2), p.get(0, 0, 2));
        let mut bytes = Vec::new();
        p.write_snapshot(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 24 + 8 * 60);
        assert_eq!(ActivityVolume::read_snapshot(&bytes).unwrap(), p);
        assert!(ActivityVolume::read_snapshot(&bytes[..30]).is_err());
    }
}
