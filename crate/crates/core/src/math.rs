//! Float helpers that work without `std`, Gauss–Legendre rules and product
//! quadratures on the unit sphere `S^{d-1}` for `d <= 3`.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn powi(x: f64, n: i32) -> f64 {
    libm::pow(x, n as f64)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// `sign(t)` with `sign(0) = 0`.
#[inline]
pub fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Surface measure of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    2.0 * powf(PI, half) / gamma(half)
}

/// Lebesgue measure of the unit ball in `R^k` (`ω_k`); `ω_0 = 1`.
pub fn unit_ball_volume(k: usize) -> f64 {
    let half = k as f64 / 2.0;
    powf(PI, half) / gamma(half + 1.0)
}

/// Mean of `|e · e_d|` over the unit sphere `S^{d-1}`.
pub fn sphere_mean_abs_coordinate(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    gamma(half) / (sqrt(PI) * gamma(half + 0.5))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = alloc::vec![0.0; n];
    let mut weights = alloc::vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A fixed Gauss–Legendre rule mapped onto arbitrary intervals.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        GaussRule { nodes, weights }
    }

    /// Nodes and weights on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal panels.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let step = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + step * i as f64;
                self.integrate(lo, lo + step, &mut f)
            })
            .sum()
    }
}

/// A quadrature rule on `S^{d-1}`: unit directions (padded to three
/// components) with weights summing to the sphere area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub points: Vec<([f64; 3], f64)>,
}

impl SphereRule {
    /// Product rule whose polar axis is `axis` (a unit vector); the rule is
    /// split along the great sphere `e · axis = 0`, so integrands with a kink
    /// there such as `|e · axis|` are integrated piecewise smoothly.
    pub fn aligned(dim: usize, axis: &[f64], resolution: usize) -> Self {
        let mut points = Vec::new();
        match dim {
            1 => {
                points.push(([1.0, 0.0, 0.0], 1.0));
                points.push(([-1.0, 0.0, 0.0], 1.0));
            }
            2 => {
                let a = [axis[0], axis[1]];
                let perp = [-a[1], a[0]];
                let rule = GaussRule::new(16);
                let panels = resolution.max(1);
                for (lo, hi) in [(-PI / 2.0, PI / 2.0), (PI / 2.0, 3.0 * PI / 2.0)] {
                    let step = (hi - lo) / panels as f64;
                    for p in 0..panels {
                        let l = lo + step * p as f64;
                        for (t, w) in rule.on(l, l + step) {
                            let (c, s) = (cos(t), sin(t));
                            points.push(([c * a[0] + s * perp[0], c * a[1] + s * perp[1], 0.0], w));
                        }
                    }
                }
            }
            3 => {
                let a = [axis[0], axis[1], axis[2]];
                let (u, v) = orthonormal_complement(a);
                let polar = GaussRule::new(16);
                let panels = resolution.max(1);
                let n_phi = 32 * panels;
                let dphi = 2.0 * PI / n_phi as f64;
                for (lo, hi) in [(0.0, PI / 2.0), (PI / 2.0, PI)] {
                    let step = (hi - lo) / panels as f64;
                    for p in 0..panels {
                        let l = lo + step * p as f64;
                        for (theta, w) in polar.on(l, l + step) {
                            let (ct, st) = (cos(theta), sin(theta));
                            for k in 0..n_phi {
                                let phi = dphi * (k as f64 + 0.5);
                                let (cp, sp) = (cos(phi), sin(phi));
                                let mut e = [0.0; 3];
                                for i in 0..3 {
                                    e[i] = ct * a[i] + st * (cp * u[i] + sp * v[i]);
                                }
                                points.push((e, w * st * dphi));
                            }
                        }
                    }
                }
            }
            _ => {}
        }
        SphereRule { dim, points }
    }

    pub fn standard(dim: usize, resolution: usize) -> Self {
        let mut axis = [0.0; 3];
        axis[dim.clamp(1, 3) - 1] = 1.0;
        Self::aligned(dim, &axis, resolution)
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().map(|(e, w)| w * f(&e[..self.dim])).sum()
    }
}

fn orthonormal_complement(a: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let pick = if a[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = a[0] * pick[0] + a[1] * pick[1] + a[2] * pick[2];
    let mut u = [pick[0] - d * a[0], pick[1] - d * a[1], pick[2] - d * a[2]];
    let nu = sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for x in &mut u {
        *x /= nu;
    }
    let v = [
        a[1] * u[2] - a[2] * u[1],
        a[2] * u[0] - a[0] * u[2],
        a[0] * u[1] - a[1] * u[0],
    ];
    (u, v)
}
