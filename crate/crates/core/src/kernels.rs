//! Interaction kernels `K`: even, nonnegative weights on displacements that may
//! carry a non-integrable singularity at the origin.
//!
//! Every form records its singularity exponent `q` (`K(x) ~ |x|^{-q}` near the
//! origin) and a decay bound `K(x) <= C |x|^{-p}` analytically, so quadratures
//! can treat the origin and the far field in closed form instead of sampling.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{self, GaussRule, SphereRule};
use crate::MAX_DIM;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const ANISOTROPY_SAMPLES: usize = 10_000;
const EVENNESS_SAMPLES: usize = 1_000;
const VALIDATION_SEED: u64 = 0x6e6c_7065_7269_6d00;

/// Angular factor `a(x)` of a fractional kernel `a(x)/|x|^{d+s}`.
///
/// Only continuous anisotropies are accepted; measurable but discontinuous
/// factors would defeat the angular quadratures.
#[derive(Clone)]
pub enum Anisotropy {
    Constant(f64),
    /// `a(x) = λ + (Λ − λ)(x̂ · axis)²`, even and bounded by construction.
    Quadratic {
        axis: Vec<f64>,
        lambda: f64,
        big_lambda: f64,
    },
    Custom(PointFn),
}

impl Anisotropy {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Anisotropy::Constant(c) => *c,
            Anisotropy::Quadratic {
                axis,
                lambda,
                big_lambda,
            } => {
                let r = math::norm(x);
                if r == 0.0 {
                    return *lambda;
                }
                let c = math::dot(x, axis) / r;
                lambda + (big_lambda - lambda) * c * c
            }
            Anisotropy::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Anisotropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anisotropy::Constant(c) => write!(f, "Constant({c})"),
            Anisotropy::Quadratic {
                axis,
                lambda,
                big_lambda,
            } => write!(f, "Quadratic({axis:?}, {lambda}, {big_lambda})"),
            Anisotropy::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// `K(x) <= constant · |x|^{-exponent}` whenever `|x| >= from_radius`.
///
/// `exact` marks a pure power tail (`K(r e) r^{exponent}` independent of `r`
/// beyond `from_radius`), which lets quadratures add the tail in closed form
/// instead of only bounding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBound {
    pub exponent: f64,
    pub constant: f64,
    pub from_radius: f64,
    pub exact: bool,
}

#[derive(Clone)]
pub enum KernelForm {
    Fractional {
        s: f64,
        anisotropy: Anisotropy,
        lambda: f64,
        big_lambda: f64,
    },
    RadialProfile {
        profile: ProfileFn,
        support: Option<f64>,
        singular_exponent: f64,
        decay: Option<DecayBound>,
    },
    CompactIndicator {
        radius: f64,
    },
    Custom {
        func: PointFn,
        support: Option<f64>,
        singular_exponent: f64,
        decay: DecayBound,
    },
}

impl fmt::Debug for KernelForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelForm::Fractional {
                s,
                anisotropy,
                lambda,
                big_lambda,
            } => write!(f, "Fractional(s={s}, a={anisotropy:?}, [{lambda}, {big_lambda}])"),
            KernelForm::RadialProfile { support, .. } => {
                write!(f, "RadialProfile(support={support:?})")
            }
            KernelForm::CompactIndicator { radius } => write!(f, "CompactIndicator(R={radius})"),
            KernelForm::Custom { support, .. } => write!(f, "Custom(support={support:?})"),
        }
    }
}

/// Immutable kernel description; cheap to clone and safe to share.
#[derive(Clone, Debug)]
pub struct KernelSpec {
    dim: usize,
    form: KernelForm,
    /// Rescaling parameter: this kernel evaluates to `ε^{-d} K(x/ε)`.
    scale: f64,
    label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summability {
    pub finite: bool,
    /// Estimate of `∫ (1 ∧ |x|) K(x) dx`; a lower bound when not finite.
    pub value: f64,
    pub quadrature_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstMoment {
    pub finite: bool,
    /// `∫ K(x)|x| dx`; a lower bound when not finite.
    pub value: f64,
    pub quadrature_error: f64,
}

/// Radial weights used by the polar quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    /// `(1 ∧ r)`
    Summability,
    /// `r`
    First,
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

impl KernelSpec {
    /// `a(x)/|x|^{d+s}` with `λ <= a <= Λ`, validated on sampled points.
    pub fn fractional(
        dim: usize,
        s: f64,
        anisotropy: Anisotropy,
        lambda: f64,
        big_lambda: f64,
    ) -> Result<Self> {
        check_dim(dim)?;
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::FractionalOrder(s));
        }
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "anisotropy bounds must satisfy 0 < lambda <= Lambda < inf (got {lambda}, {big_lambda})"
            )));
        }
        if let Anisotropy::Quadratic { axis, .. } = &anisotropy {
            if axis.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: axis.len(),
                });
            }
        }
        validate_anisotropy(dim, &anisotropy, lambda, big_lambda)?;
        Ok(KernelSpec {
            dim,
            form: KernelForm::Fractional {
                s,
                anisotropy,
                lambda,
                big_lambda,
            },
            scale: 1.0,
            label: format!("fractional(s={s})"),
        })
    }

    /// `|x|^{-d-s}`.
    pub fn fractional_isotropic(dim: usize, s: f64) -> Result<Self> {
        Self::fractional(dim, s, Anisotropy::Constant(1.0), 1.0, 1.0)
    }

    /// `χ_{B(0,R)}`, taking the value ½ on the sphere `|x| = R` (the mean of
    /// both one-sided limits) so that lattice sums treat the jump symmetrically.
    pub fn indicator(dim: usize, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "indicator radius must be positive and finite (got {radius})"
            )));
        }
        Ok(KernelSpec {
            dim,
            form: KernelForm::CompactIndicator { radius },
            scale: 1.0,
            label: format!("indicator(R={radius})"),
        })
    }

    /// `K(x) = profile(|x|)`. A decay bound is mandatory when the support is
    /// unbounded.
    pub fn radial_profile(
        dim: usize,
        profile: ProfileFn,
        support: Option<f64>,
        singular_exponent: f64,
        decay: Option<DecayBound>,
    ) -> Result<Self> {
        check_dim(dim)?;
        check_support(support)?;
        if support.is_none() && decay.is_none() {
            return Err(Error::InvalidKernel(
                "radial profile with unbounded support needs a decay bound".into(),
            ));
        }
        if let Some(d) = decay {
            check_decay(&d)?;
        }
        let k = KernelSpec {
            dim,
            form: KernelForm::RadialProfile {
                profile,
                support,
                singular_exponent,
                decay,
            },
            scale: 1.0,
            label: "radial-profile".into(),
        };
        k.validate_samples()?;
        Ok(k)
    }

    /// A user kernel; evenness and nonnegativity are checked on sampled points.
    pub fn custom(
        dim: usize,
        func: PointFn,
        support: Option<f64>,
        singular_exponent: f64,
        decay: DecayBound,
    ) -> Result<Self> {
        check_dim(dim)?;
        check_support(support)?;
        check_decay(&decay)?;
        let k = KernelSpec {
            dim,
            form: KernelForm::Custom {
                func,
                support,
                singular_exponent,
                decay,
            },
            scale: 1.0,
            label: "custom".into(),
        };
        k.validate_samples()?;
        Ok(k)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `ε^{-d} K(x/ε)`; composes with any previous rescaling.
    pub fn rescale(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidKernel(format!(
                "rescaling parameter must be positive (got {eps})"
            )));
        }
        let mut k = self.clone();
        k.scale *= eps;
        Ok(k)
    }

    /// Radius outside which the kernel vanishes; `None` for unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        let base = match &self.form {
            KernelForm::Fractional { .. } => None,
            KernelForm::RadialProfile { support, .. } | KernelForm::Custom { support, .. } => {
                *support
            }
            KernelForm::CompactIndicator { radius } => Some(*radius),
        };
        base.map(|r| r * self.scale)
    }

    /// Exponent `q` with `K(x) ~ |x|^{-q}` at the origin; zero when bounded.
    pub fn singular_exponent(&self) -> f64 {
        match &self.form {
            KernelForm::Fractional { s, .. } => self.dim as f64 + s,
            KernelForm::RadialProfile {
                singular_exponent, ..
            }
            | KernelForm::Custom {
                singular_exponent, ..
            } => *singular_exponent,
            KernelForm::CompactIndicator { .. } => 0.0,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.singular_exponent() > 0.0
    }

    /// Decay bound of the (rescaled) kernel, if one is known.
    pub fn decay(&self) -> Option<DecayBound> {
        let base = match &self.form {
            KernelForm::Fractional { s, big_lambda, .. } => Some(DecayBound {
                exponent: self.dim as f64 + s,
                constant: *big_lambda,
                from_radius: 0.0,
                exact: true,
            }),
            KernelForm::RadialProfile { decay, .. } => *decay,
            KernelForm::Custom { decay, .. } => Some(*decay),
            KernelForm::CompactIndicator { .. } => None,
        }?;
        let eps = self.scale;
        Some(DecayBound {
            constant: base.constant * math::powf(eps, base.exponent - self.dim as f64),
            from_radius: base.from_radius * eps,
            ..base
        })
    }

    pub fn is_radial(&self) -> bool {
        match &self.form {
            KernelForm::Fractional { anisotropy, .. } => {
                matches!(anisotropy, Anisotropy::Constant(_))
            }
            KernelForm::RadialProfile { .. } | KernelForm::CompactIndicator { .. } => true,
            KernelForm::Custom { .. } => false,
        }
    }

    /// Upper bound on `∫_{|z| > radius} K(z) dz`; infinite when no bound applies.
    pub fn tail_mass(&self, radius: f64) -> f64 {
        if let Some(rho) = self.support_radius() {
            if radius >= rho {
                return 0.0;
            }
        }
        match self.decay() {
            Some(d) if d.exponent > self.dim as f64 && radius >= d.from_radius && radius > 0.0 => {
                let dd = self.dim as f64;
                d.constant * math::sphere_area(self.dim) * math::powf(radius, dd - d.exponent)
                    / (d.exponent - dd)
            }
            _ => f64::INFINITY,
        }
    }

    /// `K(x)`. Singular forms reject the origin.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if self.is_singular() && x.iter().all(|&c| c == 0.0) {
            return Err(Error::Singularity);
        }
        Ok(self.eval_unchecked(x))
    }

    /// `K(x)` without dimension or singularity checks.
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        if self.scale == 1.0 {
            return self.eval_base(x);
        }
        let mut y = [0.0; MAX_DIM];
        let inv = 1.0 / self.scale;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi * inv;
        }
        math::powi(inv, self.dim as i32) * self.eval_base(&y[..self.dim])
    }

    fn eval_base(&self, y: &[f64]) -> f64 {
        let r = math::norm(y);
        match &self.form {
            KernelForm::Fractional { s, anisotropy, .. } => {
                anisotropy.eval(y) * math::powf(r, -(self.dim as f64) - s)
            }
            KernelForm::RadialProfile {
                profile, support, ..
            } => match support {
                Some(rho) if r > *rho => 0.0,
                _ => profile(r),
            },
            KernelForm::CompactIndicator { radius } => {
                let tie = 1e-12 * radius;
                if r < radius - tie {
                    1.0
                } else if r <= radius + tie {
                    0.5
                } else {
                    0.0
                }
            }
            KernelForm::Custom { func, support, .. } => match support {
                Some(rho) if r > *rho => 0.0,
                _ => func(y),
            },
        }
    }

    fn validate_samples(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
        let reach = self.support_radius().unwrap_or(10.0);
        let mut x = [0.0; MAX_DIM];
        let mut mx = [0.0; MAX_DIM];
        for _ in 0..EVENNESS_SAMPLES {
            sample_point(&mut rng, self.dim, 1e-3 * reach, 1.5 * reach, &mut x);
            for i in 0..self.dim {
                mx[i] = -x[i];
            }
            let a = self.eval_unchecked(&x[..self.dim]);
            let b = self.eval_unchecked(&mx[..self.dim]);
            if !(a >= 0.0) {
                return Err(Error::Negative(a));
            }
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()) {
                return Err(Error::NotEven {
                    forward: a,
                    backward: b,
                });
            }
        }
        Ok(())
    }

    /// Radial integral `∫_0^∞ K(r e) r^{d-1} m(r) dr` along the unit direction
    /// `e`, with `m` the moment weight. Returns `(value, error bound, finite)`.
    fn radial_integral(&self, e: &[f64], moment: Moment, rule: &GaussRule) -> (f64, f64, bool) {
        let d = self.dim as f64;
        let mut point = [0.0; MAX_DIM];
        let mut g = |r: f64| {
            for i in 0..self.dim {
                point[i] = r * e[i];
            }
            let weight = match moment {
                Moment::Summability => r.min(1.0),
                Moment::First => r,
            };
            self.eval_unchecked(&point[..self.dim]) * math::powi(r, self.dim as i32 - 1) * weight
        };
        let support = self.support_radius();
        let first_break = support.map_or(1.0, |rho| rho.min(1.0));

        // integrand ~ r^{alpha} at the origin
        let alpha = d - self.singular_exponent();
        let mut finite = alpha > -1.0;
        let mut value = 0.0;
        let mut error = 0.0;

        const GRADED: i32 = 48;
        for k in 0..GRADED {
            let hi = first_break * math::powi(0.5, k);
            value += rule.integrate(0.5 * hi, hi, &mut g);
        }
        let r0 = first_break * math::powi(0.5, GRADED);
        if finite {
            value += g(r0) * r0 / (alpha + 1.0);
        } else {
            return (value, f64::INFINITY, false);
        }

        match support {
            Some(rho) if rho > first_break => {
                value += rule.integrate_composite(first_break, rho, 16, &mut g);
            }
            Some(_) => {}
            None => {
                // geometric panels out to a far radius, then the decay tail
                let decay = self.decay().expect("unbounded kernels carry a decay bound");
                let start = first_break.max(decay.from_radius);
                if start > first_break {
                    value += rule.integrate_composite(first_break, start, 16, &mut g);
                }
                const DOUBLINGS: i32 = 30;
                let mut lo = start;
                for _ in 0..DOUBLINGS {
                    value += rule.integrate(lo, 2.0 * lo, &mut g);
                    lo *= 2.0;
                }
                let far = lo;
                let tail_power = match moment {
                    Moment::Summability => d - decay.exponent,
                    Moment::First => d + 1.0 - decay.exponent,
                };
                if tail_power >= 0.0 {
                    finite = false;
                    error = f64::INFINITY;
                } else {
                    let coefficient = if decay.exact {
                        for i in 0..self.dim {
                            point[i] = far * e[i];
                        }
                        self.eval_unchecked(&point[..self.dim]) * math::powf(far, decay.exponent)
                    } else {
                        decay.constant
                    };
                    let tail = coefficient * math::powf(far, tail_power) / -tail_power;
                    if decay.exact {
                        value += tail;
                    } else {
                        error += tail;
                    }
                }
            }
        }
        (value, error, finite)
    }

    /// `∫ K(x) |x|^{d-1} m(|x|) ...` over all of `R^d` in polar coordinates.
    fn polar_moment(&self, moment: Moment, nodes: usize) -> (f64, f64, bool) {
        let rule = GaussRule::new(nodes);
        if self.is_radial() {
            let mut e = [0.0; MAX_DIM];
            e[self.dim - 1] = 1.0;
            let (v, err, fin) = self.radial_integral(&e[..self.dim], moment, &rule);
            let area = math::sphere_area(self.dim);
            return (v * area, err * area, fin);
        }
        let sphere = SphereRule::standard(self.dim, 2);
        let mut value = 0.0;
        let mut error = 0.0;
        let mut finite = true;
        for (e, w) in &sphere.points {
            let (v, err, fin) = self.radial_integral(&e[..self.dim], moment, &rule);
            value += w * v;
            error += w * err;
            finite &= fin;
        }
        (value, error, finite)
    }

    /// Numerical estimate of `∫ (1 ∧ |x|) K(x) dx`.
    pub fn check_summability(&self) -> Summability {
        let (fine, tail_err, finite) = self.polar_moment(Moment::Summability, 16);
        let (coarse, _, _) = self.polar_moment(Moment::Summability, 8);
        let finite = finite
            && match &self.form {
                KernelForm::Fractional { .. } => true,
                _ => fine.is_finite(),
            };
        Summability {
            finite,
            value: fine,
            quadrature_error: (fine - coarse).abs() + tail_err,
        }
    }

    /// `M = ∫ K(x) |x| dx`. Fractional kernels always report an infinite moment.
    pub fn first_moment(&self) -> FirstMoment {
        if let KernelForm::Fractional { .. } = self.form {
            let (v, _, _) = self.polar_moment(Moment::First, 8);
            return FirstMoment {
                finite: false,
                value: v,
                quadrature_error: f64::INFINITY,
            };
        }
        let (fine, tail_err, finite) = self.polar_moment(Moment::First, 16);
        let (coarse, _, _) = self.polar_moment(Moment::First, 8);
        FirstMoment {
            finite: finite && fine.is_finite(),
            value: fine,
            quadrature_error: (fine - coarse).abs() + tail_err,
        }
    }

    /// `∫_0^∞ K(r e) r^d dr` for a unit direction `e`.
    pub(crate) fn radial_first_moment(&self, e: &[f64], rule: &GaussRule) -> (f64, f64, bool) {
        self.radial_integral(e, Moment::First, rule)
    }
}

fn check_support(support: Option<f64>) -> Result<()> {
    match support {
        Some(r) if !(r > 0.0 && r.is_finite()) => Err(Error::InvalidKernel(format!(
            "support radius must be positive and finite (got {r})"
        ))),
        _ => Ok(()),
    }
}

fn check_decay(d: &DecayBound) -> Result<()> {
    if !(d.constant >= 0.0 && d.constant.is_finite() && d.from_radius >= 0.0 && d.exponent > 0.0)
    {
        return Err(Error::InvalidKernel(format!("invalid decay bound {d:?}")));
    }
    Ok(())
}

fn sample_point(rng: &mut ChaCha8Rng, dim: usize, r_min: f64, r_max: f64, out: &mut [f64]) {
    loop {
        let mut n2 = 0.0;
        for c in out.iter_mut().take(dim) {
            *c = rng.gen_range(-1.0..1.0);
            n2 += *c * *c;
        }
        if n2 > 1e-6 && n2 <= 1.0 {
            let t: f64 = rng.gen();
            let r = r_min * math::powf(r_max / r_min, t);
            let scale = r / math::sqrt(n2);
            for c in out.iter_mut().take(dim) {
                *c *= scale;
            }
            return;
        }
    }
}

fn validate_anisotropy(dim: usize, a: &Anisotropy, lambda: f64, big_lambda: f64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED ^ 0xa5);
    let mut x = [0.0; MAX_DIM];
    let mut mx = [0.0; MAX_DIM];
    let tol = 1e-12 * big_lambda;
    for _ in 0..ANISOTROPY_SAMPLES {
        sample_point(&mut rng, dim, 1e-3, 1e3, &mut x);
        for i in 0..dim {
            mx[i] = -x[i];
        }
        let v = a.eval(&x[..dim]);
        if !(v >= lambda - tol && v <= big_lambda + tol) {
            return Err(Error::AnisotropyBounds {
                lambda,
                big_lambda,
                value: v,
            });
        }
        let w = a.eval(&mx[..dim]);
        if (v - w).abs() > tol {
            return Err(Error::NotEven {
                forward: v,
                backward: w,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;

    #[test]
    fn fractional_eval_matches_formula() {
        let k = KernelSpec::fractional_isotropic(1, 0.5).unwrap();
        assert_relative_eq!(k.eval(&[4.0]).unwrap(), 0.125, max_relative = 1e-15);
        assert_eq!(k.eval(&[-4.0]).unwrap(), k.eval(&[4.0]).unwrap());
        assert_eq!(k.eval(&[0.0]), Err(Error::Singularity));
    }

    #[test]
    fn indicator_eval() {
        let k = KernelSpec::indicator(2, 1.0).unwrap();
        assert_eq!(k.eval(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(k.eval(&[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(k.eval(&[1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(k.eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(k.eval(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fractional_order_is_validated() {
        assert_eq!(
            KernelSpec::fractional_isotropic(2, 1.5).unwrap_err(),
            Error::FractionalOrder(1.5)
        );
        assert!(KernelSpec::fractional_isotropic(2, 0.0).is_err());
    }

    #[test]
    fn anisotropy_bounds_are_validated() {
        let bad = Anisotropy::Custom(Arc::new(|x: &[f64]| 1.0 + x[0].abs()));
        assert!(matches!(
            KernelSpec::fractional(2, 0.5, bad, 1.0, 2.0),
            Err(Error::AnisotropyBounds { .. })
        ));
        let odd = Anisotropy::Custom(Arc::new(|x: &[f64]| {
            1.5 + 0.4 * x[0].signum() * (x[0].abs() / (1.0 + x[0].abs()))
        }));
        assert!(matches!(
            KernelSpec::fractional(2, 0.5, odd, 1.0, 2.0),
            Err(Error::NotEven { .. })
        ));
        let quad = Anisotropy::Quadratic {
            axis: alloc::vec![1.0, 0.0],
            lambda: 1.0,
            big_lambda: 3.0,
        };
        let k = KernelSpec::fractional(2, 0.3, quad, 1.0, 3.0).unwrap();
        assert!(!k.is_radial());
    }

    #[test]
    fn custom_kernels_must_be_even_and_nonnegative() {
        let decay = DecayBound {
            exponent: 4.0,
            constant: 1.0,
            from_radius: 1.0,
            exact: false,
        };
        let skew: PointFn = Arc::new(|x: &[f64]| if x[0] > 0.0 { 2.0 } else { 1.0 });
        assert!(matches!(
            KernelSpec::custom(1, skew, Some(1.0), 0.0, decay),
            Err(Error::NotEven { .. })
        ));
        let neg: PointFn = Arc::new(|_x: &[f64]| -1.0);
        assert!(matches!(
            KernelSpec::custom(1, neg, Some(1.0), 0.0, decay),
            Err(Error::Negative(_))
        ));
    }

    #[test]
    fn summability_of_fractional_kernel() {
        // 2 (∫_0^1 x^{-1/2} dx + ∫_1^∞ x^{-3/2} dx) = 8
        let k = KernelSpec::fractional_isotropic(1, 0.5).unwrap();
        let s = k.check_summability();
        assert!(s.finite);
        assert_relative_eq!(s.value, 8.0, max_relative = 1e-4);
        // d = 2: 2π (1/(1-s) + 1/s)
        for s_ord in [0.1, 0.5, 0.9] {
            let k = KernelSpec::fractional_isotropic(2, s_ord).unwrap();
            let r = k.check_summability();
            assert!(r.finite);
            let exact = 2.0 * PI * (1.0 / (1.0 - s_ord) + 1.0 / s_ord);
            assert_relative_eq!(r.value, exact, max_relative = 1e-4);
        }
    }

    #[test]
    fn summability_of_indicator() {
        let k = KernelSpec::indicator(1, 1.0).unwrap();
        let s = k.check_summability();
        assert!(s.finite);
        assert_relative_eq!(s.value, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn divergent_custom_kernel_is_flagged() {
        // K = |x|^{-1} in d = 1 away from the origin: tail not integrable
        let decay = DecayBound {
            exponent: 1.0,
            constant: 1.0,
            from_radius: 1.0,
            exact: true,
        };
        let f: PointFn = Arc::new(|x: &[f64]| 1.0 / x[0].abs().max(1.0));
        let k = KernelSpec::custom(1, f, None, 0.0, decay).unwrap();
        let s = k.check_summability();
        assert!(!s.finite);
        assert!(s.value > 0.0 && s.value.is_finite());
    }

    #[test]
    fn first_moments() {
        let k1 = KernelSpec::indicator(1, 1.0).unwrap();
        let m1 = k1.first_moment();
        assert!(m1.finite);
        assert_relative_eq!(m1.value, 1.0, max_relative = 1e-12);
        let k2 = KernelSpec::indicator(2, 1.0).unwrap();
        assert_relative_eq!(k2.first_moment().value, 2.0 * PI / 3.0, max_relative = 1e-12);
        let f = KernelSpec::fractional_isotropic(2, 0.5).unwrap();
        assert!(!f.first_moment().finite);
    }

    #[test]
    fn rescaling() {
        let k = KernelSpec::indicator(1, 1.0).unwrap();
        assert_eq!(k.rescale(1.0).unwrap().eval(&[0.3]).unwrap(), k.eval(&[0.3]).unwrap());
        let half = k.rescale(0.5).unwrap();
        assert_eq!(half.eval(&[0.25]).unwrap(), 2.0);
        assert_eq!(half.support_radius(), Some(0.5));
        assert_relative_eq!(half.first_moment().value, 0.5, max_relative = 1e-12);
        assert!(k.rescale(0.0).is_err());
    }

    #[test]
    fn tail_mass_of_fractional_kernel() {
        let k = KernelSpec::fractional_isotropic(2, 0.5).unwrap();
        // 2π ∫_R^∞ r^{-1.5} dr = 2π · 2 R^{-1/2}
        assert_relative_eq!(k.tail_mass(4.0), 2.0 * PI * 2.0 * 0.5, max_relative = 1e-12);
        let c = KernelSpec::indicator(2, 1.0).unwrap();
        assert_eq!(c.tail_mass(1.0), 0.0);
    }
}
