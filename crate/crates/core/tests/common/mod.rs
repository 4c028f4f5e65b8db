//! Test-only oracles, independent of the closed-form discretization.

#![allow(dead_code)]

/// One scalar mass-spring-damper `M ẍ + D ẋ + K x = F` with a held force.
#[derive(Debug, Clone, Copy)]
pub struct Msd {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
}

/// Classic RK4 over `duration` with steps no longer than `max_dt`.
pub fn rk4(sys: Msd, x: f64, v: f64, force: f64, duration: f64, max_dt: f64) -> (f64, f64) {
    let n = (duration / max_dt).ceil().max(1.0) as usize;
    let h = duration / n as f64;
    let accel = |x: f64, v: f64| (force - sys.damping * v - sys.stiffness * x) / sys.mass;
    let (mut x, mut v) = (x, v);
    for _ in 0..n {
        let (k1x, k1v) = (v, accel(x, v));
        let (k2x, k2v) = (v + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v));
        let (k3x, k3v) = (v + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v));
        let (k4x, k4v) = (v + h * k3v, accel(x + h * k3x, v + h * k3v));
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    (x, v)
}

pub const LANES: usize = 8;

/// RK4 on `LANES` independent systems in lockstep, so the hot loop
/// vectorizes. Every lane takes `steps` equal steps of its own length
/// `periods[i] / steps` under its own held force.
pub struct Rk4Lanes {
    neg_k_over_m: [f64; LANES],
    neg_d_over_m: [f64; LANES],
    inv_m: [f64; LANES],
    pub x: [f64; LANES],
    pub v: [f64; LANES],
}

impl Rk4Lanes {
    pub fn new(systems: &[Msd; LANES]) -> Self {
        Self {
            neg_k_over_m: systems.map(|s| -s.stiffness / s.mass),
            neg_d_over_m: systems.map(|s| -s.damping / s.mass),
            inv_m: systems.map(|s| 1.0 / s.mass),
            x: [0.0; LANES],
            v: [0.0; LANES],
        }
    }

    pub fn advance(&mut self, forces: &[f64; LANES], periods: &[f64; LANES], steps: usize) {
        let mut h = [0.0; LANES];
        let mut g = [0.0; LANES];
        for i in 0..LANES {
            h[i] = periods[i] / steps as f64;
            g[i] = forces[i] * self.inv_m[i];
        }
        let (a, b) = (self.neg_k_over_m, self.neg_d_over_m);
        let (mut x, mut v) = (self.x, self.v);
        for _ in 0..steps {
            for i in 0..LANES {
                let hh = h[i];
                let f = |x: f64, v: f64| a[i] * x + b[i] * v + g[i];
                let k1x = v[i];
                let k1v = f(x[i], v[i]);
                let k2x = v[i] + 0.5 * hh * k1v;
                let k2v = f(x[i] + 0.5 * hh * k1x, k2x);
                let k3x = v[i] + 0.5 * hh * k2v;
                let k3v = f(x[i] + 0.5 * hh * k2x, k3x);
                let k4x = v[i] + hh * k3v;
                let k4v = f(x[i] + hh * k3x, k4x);
                x[i] += hh / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
                v[i] += hh / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
        }
        self.x = x;
        self.v = v;
    }
}
