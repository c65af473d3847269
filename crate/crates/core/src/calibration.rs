//! Nonlocal calibrations `ζ(x, y)` and the minimality certificate.
//!
//! For an antisymmetric `ζ` with `|ζ| <= 1` and every competitor `v` sharing
//! the exterior datum `χ_{E₀}`,
//!
//! ```text
//! J_K(v; Ω) >= a(v) + b₁(v) + b₀
//! a(v)  = ½ ∬_{Ω×Ω}  K ζ(x,y) (v(y) − v(x))
//! b₁(v) = −∬_{Ω×Ωᶜ} K ζ(x,y) v(x)
//! b₀    =  ∬_{Ω×Ωᶜ} K ζ(x,y) χ_{E₀}(y)
//! ```
//!
//! and `a + b₁` vanishes when the nonlocal divergence of `ζ` does, so `b₀` is
//! a lower bound attained by the calibrated field. All sums use the pair
//! weights of [`Energy`] and evaluate `ζ` at cell centers.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::domain::{CellTag, ScalarField};
use crate::energy::{for_each_segment, Energy};
use crate::error::{Error, Result};
use crate::math;
use crate::parallel;
use crate::MAX_DIM;

type DisplacementFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GeneralFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum PairFunction {
    /// `ζ(x, y) = f(y − x)`.
    Displacement(Arc<DisplacementFn>),
    /// `ζ(x, y) = f(x, y)`.
    General(Arc<GeneralFn>),
}

impl fmt::Debug for PairFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairFunction::Displacement(_) => f.write_str("Displacement(..)"),
            PairFunction::General(_) => f.write_str("General(..)"),
        }
    }
}

/// A pair function with metadata. `antisymmetric` is a claim, checked by
/// [`Calibration::antisymmetry_defect`] rather than enforced.
#[derive(Debug, Clone)]
pub struct Calibration {
    dim: usize,
    zeta: PairFunction,
    antisymmetric: bool,
    label: String,
}

impl Calibration {
    pub fn displacement<F>(dim: usize, label: impl Into<String>, antisymmetric: bool, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Calibration {
            dim,
            zeta: PairFunction::Displacement(Arc::new(f)),
            antisymmetric,
            label: label.into(),
        }
    }

    pub fn general<F>(dim: usize, label: impl Into<String>, antisymmetric: bool, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Calibration {
            dim,
            zeta: PairFunction::General(Arc::new(f)),
            antisymmetric,
            label: label.into(),
        }
    }

    /// `ζ(x, y) = sign((y − x)·n)`, the calibration of `{x·n > c}`.
    pub fn halfspace_sign(normal: &[f64]) -> Result<Self> {
        let dim = normal.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        let len = math::norm(normal);
        if (len - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitNormal(len));
        }
        let n = normal.to_vec();
        Ok(Calibration::displacement(dim, "halfspace_sign", true, move |z| {
            math::sign(math::dot(z, &n))
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_antisymmetric(&self) -> bool {
        self.antisymmetric
    }

    pub fn pair_function(&self) -> &PairFunction {
        &self.zeta
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.zeta {
            PairFunction::Displacement(f) => {
                let mut z = [0.0; MAX_DIM];
                for k in 0..self.dim {
                    z[k] = y[k] - x[k];
                }
                f(&z[..self.dim])
            }
            PairFunction::General(f) => f(x, y),
        }
    }

    /// `(ζ(x, y) − ζ(y, x)) / 2`, flagged antisymmetric.
    pub fn antisymmetrize(&self) -> Self {
        let zeta = match &self.zeta {
            PairFunction::Displacement(f) => {
                let f = f.clone();
                let dim = self.dim;
                PairFunction::Displacement(Arc::new(move |z: &[f64]| {
                    let mut m = [0.0; MAX_DIM];
                    for k in 0..dim {
                        m[k] = -z[k];
                    }
                    (f(z) - f(&m[..dim])) / 2.0
                }))
            }
            PairFunction::General(f) => {
                let f = f.clone();
                PairFunction::General(Arc::new(move |x: &[f64], y: &[f64]| (f(x, y) - f(y, x)) / 2.0))
            }
        };
        Calibration {
            dim: self.dim,
            zeta,
            antisymmetric: true,
            label: self.label.clone(),
        }
    }

    /// `ζ(h o)` per stencil slot for displacement calibrations. Offsets are
    /// exact multiples of `h`, so `ζ(−z) = −ζ(z)` holds bitwise for odd `ζ`.
    fn offset_table(&self, energy: &Energy) -> Option<Vec<f64>> {
        match &self.zeta {
            PairFunction::Displacement(f) => Some(energy.stencil().sampled(|z| f(z))),
            PairFunction::General(_) => None,
        }
    }

    fn check_dim(&self, energy: &Energy) -> Result<()> {
        if self.dim == energy.grid().dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: energy.grid().dim(),
                found: self.dim,
            })
        }
    }

    /// Applies `f(ζ(x, y), ζ(y, x))` to every interacting pair with `x`
    /// interior and returns the maximum.
    fn max_over_pairs<F>(&self, energy: &Energy, f: F) -> Result<f64>
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        self.check_dim(energy)?;
        let grid = energy.grid();
        let d = self.dim;
        let w = energy.stencil().weights();
        let per_cell = |x: usize| {
            let cx = grid.center(x);
            let mut m: f64 = 0.0;
            for_each_segment(energy.stencil(), grid, x, |ws, y0, len| {
                for j in 0..len {
                    if w[ws + j] == 0.0 {
                        continue;
                    }
                    let cy = grid.center(y0 + j);
                    m = m.max(f(self.eval(&cx[..d], &cy[..d]), self.eval(&cy[..d], &cx[..d])));
                }
            });
            m
        };
        let rows = match &self.zeta {
            // translation invariant: one cell sees every offset
            PairFunction::Displacement(_) => {
                let h = grid.spacing();
                let zero = [0.0; MAX_DIM];
                energy
                    .stencil()
                    .symmetric_pairs()
                    .iter()
                    .map(|(o, _)| {
                        let mut z = [0.0; MAX_DIM];
                        for k in 0..d {
                            z[k] = o[k] as f64 * h;
                        }
                        f(self.eval(&zero[..d], &z[..d]), self.eval(&z[..d], &zero[..d]))
                    })
                    .collect()
            }
            PairFunction::General(_) => parallel::map_cells(grid.interior_cells(), per_cell),
        };
        Ok(rows.into_iter().fold(0.0, f64::max))
    }

    /// `max |ζ|` over the interacting pairs of the grid.
    pub fn max_abs_sampled(&self, energy: &Energy) -> Result<f64> {
        self.max_over_pairs(energy, |a, _| a.abs())
    }

    /// `max |ζ(x, y) + ζ(y, x)|` over the interacting pairs of the grid.
    pub fn antisymmetry_defect(&self, energy: &Energy) -> Result<f64> {
        self.max_over_pairs(energy, |a, b| (a + b).abs())
    }
}

/// Radii `{8h, 4h, 2h}`.
pub fn default_radii(h: f64) -> Vec<f64> {
    alloc::vec![8.0 * h, 4.0 * h, 2.0 * h]
}

/// Truncated divergence `∫_{|y−x|>=r} K(y−x)(ζ(y,x) − ζ(x,y)) dy` at one cell
/// center for a decreasing list of radii.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceCheck {
    pub cell: usize,
    pub radii: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Bound on the part of the integral beyond the grid (zero for compact
    /// kernels and for odd displacement calibrations).
    pub tail_bound: f64,
    pub tol: f64,
}

impl DivergenceCheck {
    pub fn last(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// Residual magnitudes nonincreasing as `r` shrinks and the final one
    /// within `tol`.
    pub fn trend_ok(&self) -> bool {
        let nonincreasing = self
            .residuals
            .windows(2)
            .all(|w| w[1].abs() <= w[0].abs() + self.tol);
        nonincreasing && self.last().abs() <= self.tol
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidCalibration("radius list is empty".into()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidCalibration(
            "radii must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Divergence residuals at the center of `cell`. Offsets are visited in
/// `(o, −o)` pairs, so odd displacement calibrations cancel exactly.
pub fn check_divergence(cal: &Calibration, energy: &Energy, cell: usize, radii: &[f64]) -> Result<DivergenceCheck> {
    cal.check_dim(energy)?;
    check_radii(radii)?;
    let grid = energy.grid();
    if cell >= grid.len() {
        return Err(Error::InvalidCalibration("cell index out of range".into()));
    }
    let summ = energy.kernel().check_summability();
    if !summ.finite {
        return Err(Error::NotSummable {
            lower_bound: summ.value,
        });
    }
    Ok(divergence_at(cal, energy, cell, radii))
}

fn divergence_at(cal: &Calibration, energy: &Energy, cell: usize, radii: &[f64]) -> DivergenceCheck {
    let grid = energy.grid();
    let d = grid.dim();
    let h = grid.spacing();
    let hd = grid.cell_volume();
    let idx = grid.multi_index(cell);
    let counts = grid.counts();
    let cx = grid.center(cell);
    let partner = |o: &[i32; MAX_DIM]| -> Option<usize> {
        let mut p = [0usize; MAX_DIM];
        for k in 0..d {
            let q = idx[k] as i64 + o[k] as i64;
            if q < 0 || q >= counts[k] as i64 {
                return None;
            }
            p[k] = q as usize;
        }
        Some(grid.linear_index(&p[..d]))
    };
    // bins[k] collects offsets with r_k <= |z| < r_{k−1}
    let mut bins = alloc::vec![0.0; radii.len()];
    let mut magnitude = 0.0;
    let pairs = energy.stencil().symmetric_pairs();
    let mut missing = false;
    for pair in pairs.chunks_exact(2) {
        let (o, w) = pair[0];
        let r = h * math::sqrt((0..d).map(|k| (o[k] as f64) * (o[k] as f64)).sum());
        let Some(bin) = radii.iter().position(|&rk| r >= rk) else {
            continue;
        };
        let mut s = 0.0;
        for &(oo, _) in pair {
            match partner(&oo) {
                Some(y) => {
                    let t = match &cal.zeta {
                        PairFunction::Displacement(f) => {
                            let mut z = [0.0; MAX_DIM];
                            let mut m = [0.0; MAX_DIM];
                            for k in 0..d {
                                z[k] = oo[k] as f64 * h;
                                m[k] = -z[k];
                            }
                            f(&m[..d]) - f(&z[..d])
                        }
                        PairFunction::General(f) => {
                            let cy = grid.center(y);
                            f(&cy[..d], &cx[..d]) - f(&cx[..d], &cy[..d])
                        }
                    };
                    s += w * t;
                    magnitude += (w * t).abs();
                }
                None => missing = true,
            }
        }
        bins[bin] += s * hd;
    }
    let mut residuals = Vec::with_capacity(radii.len());
    let mut acc = 0.0;
    for b in &bins {
        acc += b;
        residuals.push(acc);
    }
    let odd_displacement = matches!(cal.zeta, PairFunction::Displacement(_)) && cal.antisymmetric;
    let tail_bound = if odd_displacement || (energy.kernel().support_radius().is_some() && !missing) {
        0.0
    } else {
        2.0 * energy.kernel().tail_mass(grid.domain().tail_radius())
    };
    DivergenceCheck {
        cell,
        radii: radii.to_vec(),
        residuals,
        tail_bound,
        tol: 10.0 * f64::EPSILON * magnitude * hd + tail_bound,
    }
}

/// [`check_divergence`] at every interior cell center.
pub fn check_divergence_all(cal: &Calibration, energy: &Energy, radii: &[f64]) -> Result<Vec<DivergenceCheck>> {
    let grid = energy.grid();
    if let Some(&c) = grid.interior_cells().first() {
        check_divergence(cal, energy, c, radii)?;
    }
    Ok(parallel::map_cells(grid.interior_cells(), |x| {
        divergence_at(cal, energy, x, radii)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalCheck {
    /// Kernel-weighted fraction of differing pairs whose defect exceeds the
    /// tolerance (zero when no pair differs).
    pub violation_fraction: f64,
    /// `(x, y, defect)` for the largest defect, if any pair differs.
    pub worst_pair: Option<(usize, usize, f64)>,
}

/// Defect tolerance in the normal condition.
pub const NORMAL_TOL: f64 = 1e-12;

/// Checks `ζ(x,y)(u(y) − u(x)) = |u(y) − u(x)|` on all interacting pairs with
/// `x` interior.
pub fn check_normal_condition(cal: &Calibration, energy: &Energy, u: &ScalarField) -> Result<NormalCheck> {
    cal.check_dim(energy)?;
    let grid = energy.grid();
    if !grid.same_as(u.grid()) {
        return Err(Error::GridMismatch);
    }
    let d = grid.dim();
    let w = energy.stencil().weights();
    let vals = u.values();
    let table = cal.offset_table(energy);
    let rows = parallel::map_cells(grid.interior_cells(), |x| {
        let cx = grid.center(x);
        let ux = vals[x];
        let (mut differ, mut bad) = (0.0, 0.0);
        let mut worst: Option<(usize, usize, f64)> = None;
        for_each_segment(energy.stencil(), grid, x, |ws, y0, len| {
            for j in 0..len {
                let y = y0 + j;
                let wy = w[ws + j];
                let du = vals[y] - ux;
                if wy == 0.0 || du == 0.0 {
                    continue;
                }
                let zeta = match &table {
                    Some(t) => t[ws + j],
                    None => {
                        let cy = grid.center(y);
                        cal.eval(&cx[..d], &cy[..d])
                    }
                };
                let defect = du.abs() - zeta * du;
                differ += wy;
                if defect > NORMAL_TOL {
                    bad += wy;
                }
                if worst.map_or(true, |(_, _, m)| defect > m) {
                    worst = Some((x, y, defect));
                }
            }
        });
        (differ, bad, worst)
    });
    let (mut differ, mut bad) = (0.0, 0.0);
    let mut worst: Option<(usize, usize, f64)> = None;
    for (a, b, wp) in rows {
        differ += a;
        bad += b;
        if let Some(p) = wp {
            if worst.map_or(true, |(_, _, m)| p.2 > m) {
                worst = Some(p);
            }
        }
    }
    Ok(NormalCheck {
        violation_fraction: if differ > 0.0 { bad / differ } else { 0.0 },
        worst_pair: worst,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub a: f64,
    pub b1: f64,
    pub b0: f64,
    pub energy_of_candidate: f64,
    /// `energy_of_candidate − b0`.
    pub gap: f64,
    /// `a + b1`, zero in exact arithmetic for a divergence-free calibration.
    pub identity_residual: f64,
    /// Ten times the roundoff estimate of the energy.
    pub tol: f64,
    /// Residual at the smallest radius for each sampled cell.
    pub divergence_residuals: Vec<(usize, f64)>,
    pub normal_violation_fraction: f64,
}

impl CertificateReport {
    /// `J(v) >= b0` up to roundoff.
    pub fn lower_bound_holds(&self) -> bool {
        self.gap >= -self.tol
    }
}

/// Divergence and normal checks for a calibration/candidate pair, computed
/// once and reused for any number of competitors.
#[derive(Debug, Clone)]
pub struct Certifier<'a> {
    cal: Calibration,
    energy: &'a Energy,
    candidate: ScalarField,
    /// `K̄(o) ζ(o)` for displacement calibrations.
    zeta_weights: Option<Vec<f64>>,
    divergence: Vec<(usize, f64)>,
    normal: NormalCheck,
}

impl<'a> Certifier<'a> {
    /// Rejects calibrations with `max |ζ| > 1 + 1e-12`. Divergence residuals
    /// are computed at every interior cell with radii `{8h, 4h, 2h}`.
    pub fn new(cal: &Calibration, energy: &'a Energy, candidate: &ScalarField) -> Result<Self> {
        Self::with_radii(cal, energy, candidate, &default_radii(energy.grid().spacing()))
    }

    pub fn with_radii(cal: &Calibration, energy: &'a Energy, candidate: &ScalarField, radii: &[f64]) -> Result<Self> {
        if !energy.grid().same_as(candidate.grid()) {
            return Err(Error::GridMismatch);
        }
        let bound = cal.max_abs_sampled(energy)?;
        if bound > 1.0 + 1e-12 {
            return Err(Error::InvalidCalibration(alloc::format!("max |zeta| = {bound} exceeds 1")));
        }
        let divergence = check_divergence_all(cal, energy, radii)?
            .into_iter()
            .map(|c| (c.cell, c.last()))
            .collect();
        let normal = check_normal_condition(cal, energy, candidate)?;
        let zeta_weights = match &cal.zeta {
            PairFunction::Displacement(f) => Some(energy.stencil().weighted_by(|z| f(z))),
            PairFunction::General(_) => None,
        };
        Ok(Certifier {
            cal: cal.clone(),
            energy,
            candidate: candidate.clone(),
            zeta_weights,
            divergence,
            normal,
        })
    }

    pub fn normal_check(&self) -> NormalCheck {
        self.normal
    }

    /// Per interior cell `x`: `[Σ_{y∈Ω} Kζ v(y), Σ_{y∈Ω} Kζ, Σ_{y∈Ωᶜ} Kζ, Σ_{y∈Ωᶜ} Kζ v(y)]`.
    fn row_sums(&self, vals: &[f64]) -> Vec<[f64; 4]> {
        let grid = self.energy.grid();
        let d = grid.dim();
        let tags = grid.tags();
        let w = self.energy.stencil().weights();
        parallel::map_cells(grid.interior_cells(), |x| {
            let cx = grid.center(x);
            let mut s = [0.0; 4];
            for_each_segment(self.energy.stencil(), grid, x, |ws, y0, len| {
                for j in 0..len {
                    let y = y0 + j;
                    let kz = match &self.zeta_weights {
                        Some(zw) => zw[ws + j],
                        None => {
                            let wy = w[ws + j];
                            if wy == 0.0 {
                                continue;
                            }
                            let cy = grid.center(y);
                            wy * self.cal.eval(&cx[..d], &cy[..d])
                        }
                    };
                    match tags[y] {
                        CellTag::Interior => {
                            s[0] += kz * vals[y];
                            s[1] += kz;
                        }
                        CellTag::Exterior => {
                            s[2] += kz;
                            s[3] += kz * vals[y];
                        }
                    }
                }
            });
            s
        })
    }

    pub fn certify(&self, v: &ScalarField) -> Result<CertificateReport> {
        if !self.energy.grid().same_as(v.grid()) {
            return Err(Error::GridMismatch);
        }
        if let Some(cell) = self.candidate.exterior_mismatch(v)? {
            return Err(Error::ExteriorMismatch(cell));
        }
        let vals = v.values();
        let rows = self.row_sums(vals);
        let (mut a, mut b1, mut b0) = (0.0, 0.0, 0.0);
        for (&x, s) in self.energy.grid().interior_cells().iter().zip(&rows) {
            a += 0.5 * (s[0] - vals[x] * s[1]);
            b1 -= vals[x] * s[2];
            b0 += s[3];
        }
        let scale = self.energy.pair_volume();
        let (a, b1, b0) = (a * scale, b1 * scale, b0 * scale);
        let e = self.energy.evaluate(v)?;
        Ok(CertificateReport {
            a,
            b1,
            b0,
            energy_of_candidate: e.total,
            gap: e.total - b0,
            identity_residual: a + b1,
            tol: 10.0 * e.roundoff.max(f64::EPSILON * (a.abs() + b1.abs() + b0.abs())),
            divergence_residuals: self.divergence.clone(),
            normal_violation_fraction: self.normal.violation_fraction,
        })
    }
}

/// One-shot certificate of `v` against the candidate `u`.
pub fn certificate(cal: &Calibration, u: &ScalarField, v: &ScalarField, energy: &Energy) -> Result<CertificateReport> {
    if let Some(cell) = u.exterior_mismatch(v)? {
        return Err(Error::ExteriorMismatch(cell));
    }
    Certifier::new(cal, energy, u)?.certify(v)
}

#[cfg(test)]
mod tests;
