use std::f64::consts::PI;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Wraps `v` into `[0, n)`.
pub fn wrap_coord(v: f64, n: f64) -> f64 {
    let w = v.rem_euclid(n);
    // rem_euclid can return n itself for tiny negative inputs.
    if w >= n {
        0.0
    } else {
        w
    }
}

/// Wraps an integer index into `[0, n)`.
#[inline]
pub fn wrap_index(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Odometry increment over one pipeline step: forward distance then heading change.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OdometryDelta {
    pub delta_s: f64,
    pub delta_theta: f64,
}

impl OdometryDelta {
    pub fn new(delta_s: f64, delta_theta: f64) -> Self {
        Self {
            delta_s,
            delta_theta,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta_s.is_finite() && self.delta_theta.is_finite()
    }
}
