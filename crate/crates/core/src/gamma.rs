//! Limits of the rescaled energies `ε⁻¹ J_{K_ε}` with `K_ε(z) = ε^{-d} K(z/ε)`.
//!
//! The limit is the anisotropic perimeter `J₀(E) = ∫_{∂E∩Ω} σ_K(n̂) dH^{d−1}`
//! with `σ_K(p) = ½ ∫ K(z)|z·p| dz`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::domain::{symdiff_measure, ScalarField};
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::math::{self, GaussRule, SphereRule};
use crate::MAX_DIM;

/// Angular panels per hemisphere in the `σ_K` quadrature.
const SPHERE_PANELS: usize = 4;

/// `ω_k`, the Lebesgue measure of the unit ball of `R^k` (`ω_0 = 1`).
pub fn omega(k: usize) -> f64 {
    math::unit_ball_volume(k)
}

fn finite_moment(k: &KernelSpec) -> Result<f64> {
    let m = k.first_moment();
    if m.finite {
        Ok(m.value)
    } else {
        Err(Error::InfiniteFirstMoment)
    }
}

fn sigma_unchecked(k: &KernelSpec, p: &[f64]) -> f64 {
    let len = math::norm(p);
    if len == 0.0 {
        return 0.0;
    }
    let d = k.dim();
    let mut e = [0.0; MAX_DIM];
    for i in 0..d {
        e[i] = p[i] / len;
    }
    let rule = GaussRule::new(16);
    // split at e·p = 0, where |e·p| has its kink
    let sphere = SphereRule::aligned(d, &e[..d], SPHERE_PANELS);
    let total = sphere.integrate(|dir| {
        let proj = math::dot(dir, &e[..d]).abs();
        if proj == 0.0 {
            return 0.0;
        }
        proj * k.radial_first_moment(dir, &rule).0
    });
    0.5 * total * len
}

/// `σ_K(p) = ½ ∫ K(z)|z·p| dz` by polar quadrature.
pub fn sigma_k(k: &KernelSpec, p: &[f64]) -> Result<f64> {
    if p.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            found: p.len(),
        });
    }
    finite_moment(k)?;
    Ok(sigma_unchecked(k, p))
}

/// `(M/2) · ⨍_{S^{d−1}} |e·e_d|` for radial kernels, `M = ∫ K(z)|z| dz`.
pub fn sigma_k_radial(k: &KernelSpec) -> Result<f64> {
    if !k.is_radial() {
        return Err(Error::NotRadial);
    }
    let m = finite_moment(k)?;
    Ok(0.5 * m * math::sphere_mean_abs_coordinate(k.dim()))
}

/// `σ_K` sampled on a fixed set of unit directions, with the constants of
/// the limit.
#[derive(Debug, Clone)]
pub struct LimitNorm {
    kernel: KernelSpec,
    /// `M = ∫ K(z)|z| dz`.
    pub first_moment: f64,
    /// `ω_{d−1}`.
    pub omega: f64,
    directions: Vec<([f64; MAX_DIM], f64)>,
}

impl LimitNorm {
    /// Caches `σ_K` on `samples` directions: evenly spaced angles on the
    /// upper half circle in `d = 2`, a golden-spiral hemisphere in `d = 3`
    /// (`σ_K` is even, so half the sphere suffices), `+1` in `d = 1`.
    pub fn new(k: &KernelSpec, samples: usize) -> Result<Self> {
        let first_moment = finite_moment(k)?;
        let d = k.dim();
        let count = if d == 1 { 1 } else { samples.max(1) };
        let mut directions = Vec::with_capacity(count);
        for i in 0..count {
            let mut e = [0.0; MAX_DIM];
            match d {
                1 => e[0] = 1.0,
                2 => {
                    let t = core::f64::consts::PI * i as f64 / count as f64;
                    e[0] = math::cos(t);
                    e[1] = math::sin(t);
                }
                _ => {
                    let z = (i as f64 + 0.5) / count as f64;
                    let r = math::sqrt(1.0 - z * z);
                    let phi = core::f64::consts::PI * (3.0 - math::sqrt(5.0)) * i as f64;
                    e[0] = r * math::cos(phi);
                    e[1] = r * math::sin(phi);
                    e[2] = z;
                }
            }
            directions.push((e, sigma_unchecked(k, &e[..d])));
        }
        Ok(LimitNorm {
            kernel: k.clone(),
            first_moment,
            omega: omega(d - 1),
            directions,
        })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Cached `(direction, σ_K(direction))` pairs.
    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        let d = self.kernel.dim();
        self.directions.iter().map(move |(e, s)| (&e[..d], *s))
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        sigma_k(&self.kernel, p)
    }

    /// `max_e |σ_K(e) − σ_radial| / σ_radial` over the cached directions.
    pub fn isotropy_defect(&self) -> Result<f64> {
        let r = sigma_k_radial(&self.kernel)?;
        Ok(self.directions.iter().map(|(_, s)| (s - r).abs() / r).fold(0.0, f64::max))
    }
}

/// A flat piece of `∂E ∩ Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub normal: Vec<f64>,
    /// `H^{d−1}` measure inside Ω.
    pub area: f64,
}

impl Facet {
    /// The facet of `{x·n > c}` in a ball of radius `r` centered at the
    /// origin, at distance `|c| < r`.
    pub fn halfspace_in_ball(normal: &[f64], offset: f64, radius: f64) -> Result<Self> {
        let len = math::norm(normal);
        if (len - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitNormal(len));
        }
        if !(offset.abs() < radius) {
            return Err(Error::InvalidSweep("hyperplane misses the ball".into()));
        }
        let d = normal.len();
        let chord = math::sqrt(radius * radius - offset * offset);
        Ok(Facet {
            normal: normal.to_vec(),
            area: omega(d - 1) * math::powi(chord, d as i32 - 1),
        })
    }
}

/// `J₀ = Σ σ_K(n̂_i) · area_i`.
pub fn j0_polyhedral(facets: &[Facet], k: &KernelSpec) -> Result<f64> {
    let mut total = 0.0;
    for f in facets {
        total += sigma_k(k, &f.normal)? * f.area;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaRow {
    pub eps: f64,
    /// `ε⁻¹ J_ε¹`, the interior term.
    pub j1: f64,
    /// `ε⁻¹ J_ε²`, the cross term.
    pub j2: f64,
    /// `ε⁻¹ J_ε`.
    pub j: f64,
    pub j0: f64,
    /// `|j1 − j0| / j0`.
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSweepReport {
    pub kernel: String,
    pub set: String,
    pub rows: Vec<GammaRow>,
    /// Least-squares slope of `log error` against `log ε` over the last three
    /// rows with positive error.
    pub rate: Option<f64>,
}

impl GammaSweepReport {
    /// Number of steps where the error grows as `ε` decreases.
    pub fn error_inversions(&self) -> usize {
        self.rows
            .windows(2)
            .filter(|w| w[1].relative_error > w[0].relative_error)
            .count()
    }
}

fn fit_rate(rows: &[GammaRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .rev()
        .take(3)
        .filter(|r| r.relative_error > 0.0)
        .map(|r| (math::ln(r.eps), math::ln(r.relative_error)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

fn check_eps(h: f64, eps: &[f64]) -> Result<f64> {
    let Some(&eps_min) = eps.last() else {
        return Err(Error::InvalidSweep("empty epsilon list".into()));
    };
    if eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSweep(
            "epsilon list must be positive and strictly decreasing".into(),
        ));
    }
    let limit = eps_min / 8.0;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse { h, limit });
    }
    Ok(eps_min)
}

/// Tabulates `ε⁻¹ J_ε¹`, `ε⁻¹ J_ε²` of a binary field against an analytic
/// `J₀` for a decreasing list of `ε`. Requires `h <= ε_min/8` and, for
/// compact kernels, a bounding-box margin covering the largest support.
pub fn gamma_sweep(
    set: &ScalarField,
    set_label: &str,
    j0: f64,
    kernel: &KernelSpec,
    eps: &[f64],
) -> Result<GammaSweepReport> {
    let grid = set.grid();
    if !set.is_binary() {
        return Err(Error::NotBinary);
    }
    if !(j0 > 0.0 && j0.is_finite()) {
        return Err(Error::InvalidSweep(alloc::format!("reference J0 = {j0} must be positive")));
    }
    check_eps(grid.spacing(), eps)?;
    finite_moment(kernel)?;
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let k = kernel.rescale(e)?;
        let b = Energy::new(grid, &k)?.evaluate(set)?;
        let j1 = b.interior_term / e;
        rows.push(GammaRow {
            eps: e,
            j1,
            j2: b.cross_term / e,
            j: b.total / e,
            j0,
            relative_error: (j1 - j0).abs() / j0,
        });
    }
    let rate = fit_rate(&rows);
    Ok(GammaSweepReport {
        kernel: String::from(kernel.label()),
        set: String::from(set_label),
        rows,
        rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossTermRow {
    pub eps: f64,
    /// `ε⁻¹ |J_ε²(E) − J_ε²(H)|`.
    pub measured: f64,
    /// `(2/δ) · |E Δ H| · M`.
    pub bound: f64,
}

/// `(2/δ) · symdiff · M`.
pub fn cross_term_bound(delta: f64, symdiff: f64, first_moment: f64) -> f64 {
    2.0 / delta * symdiff * first_moment
}

/// Cross-term differences between a perturbation `perturbed` of `reference`
/// that differs only inside `B_{r−δ}` of a ball domain of radius `r`, and
/// the bound from the first moment.
pub fn cross_term_check(
    reference: &ScalarField,
    perturbed: &ScalarField,
    kernel: &KernelSpec,
    eps: &[f64],
    delta: f64,
) -> Result<Vec<CrossTermRow>> {
    let grid = reference.grid();
    if !grid.same_as(perturbed.grid()) {
        return Err(Error::GridMismatch);
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidSweep("delta must be positive".into()));
    }
    check_eps(grid.spacing(), eps)?;
    let m = finite_moment(kernel)?;
    let symdiff = symdiff_measure(reference, perturbed)?;
    let bound = cross_term_bound(delta, symdiff, m);
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let en = Energy::new(grid, &kernel.rescale(e)?)?;
        let a = en.evaluate(reference)?.cross_term;
        let b = en.evaluate(perturbed)?.cross_term;
        rows.push(CrossTermRow {
            eps: e,
            measured: (b - a).abs() / e,
            bound,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
