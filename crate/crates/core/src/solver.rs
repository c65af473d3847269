//! Discrete Plateau problem: minimize `J_K(v; Ω)` over `v ∈ [0,1]` with the
//! exterior frozen to a datum.
//!
//! `|t|` is replaced by the Huber function `φ_δ` and the smoothed energy is
//! minimized by projected gradient descent, continuing over a decreasing list
//! of `δ`. Minimizers are then rounded to sets through the coarea formula.

use alloc::format;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{indicator_halfspace, superlevel, symdiff_measure, Grid, ScalarField};
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::math;

/// Consecutive energy increases tolerated before giving up.
const MAX_INCREASES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `1/L` with `L = 2 max_x Σ_y K̄ h^d / δ`; guarantees descent.
    Lipschitz,
    /// `initial · (1 + k)^{-exponent}` at the `k`-th iteration of a stage.
    Decaying { initial: f64, exponent: f64 },
}

#[derive(Debug, Clone)]
pub enum Init {
    Constant(f64),
    /// Start from the datum itself.
    Datum,
    /// Independent uniform values, drawn from the options' seed.
    Random,
    Field(ScalarField),
}

/// Field the rounded minimizer is compared against.
#[derive(Debug, Clone)]
pub enum Reference {
    /// `χ_{x·n > offset}`; also the direction of the monotonicity check.
    Halfspace { normal: Vec<f64>, offset: f64 },
    Field(ScalarField),
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Smoothing parameters, strictly decreasing, final one `<= h²`.
    pub deltas: Vec<f64>,
    pub step: StepRule,
    /// Iteration cap per smoothing stage.
    pub max_iterations: usize,
    /// Nesterov extrapolation between steps, restarted whenever a step
    /// would increase the energy, so accepted iterates still decrease.
    pub momentum: bool,
    /// Start each stage from the previous minimizer with its deviation from
    /// `χ_{u > 1/2}` scaled by `δ_k / δ_{k−1}`.
    pub rescale_stages: bool,
    /// A stage ends once the relative decrease of the smoothed energy falls
    /// below this.
    pub tolerance: f64,
    pub init: Init,
    pub seed: u64,
    pub reference: Option<Reference>,
}

impl SolveOptions {
    /// `δ = 1, 1/4, 1/16, …` down to `h²`, Lipschitz steps, start at ½.
    pub fn for_spacing(h: f64) -> Self {
        SolveOptions {
            deltas: default_schedule(h),
            step: StepRule::Lipschitz,
            max_iterations: 2000,
            momentum: true,
            rescale_stages: true,
            tolerance: 1e-9,
            init: Init::Constant(0.5),
            seed: 0,
            reference: None,
        }
    }

    pub fn validate(&self, h: f64) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidOptions(m.into()));
        let Some(&last) = self.deltas.last() else {
            return bad("smoothing schedule is empty");
        };
        if self.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("smoothing parameters must be positive");
        }
        if self.deltas.windows(2).any(|p| p[1] >= p[0]) {
            return bad("smoothing schedule must be strictly decreasing");
        }
        if last > h * h * (1.0 + 1e-12) {
            return Err(Error::InvalidOptions(format!(
                "final smoothing parameter {last} exceeds h^2 = {}",
                h * h
            )));
        }
        if let StepRule::Decaying { initial, exponent } = self.step {
            if !(initial > 0.0 && initial.is_finite() && exponent >= 0.0) {
                return bad("step rule needs a positive initial step and nonnegative exponent");
            }
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.tolerance >= 0.0) {
            return bad("tolerance must be nonnegative");
        }
        if let Init::Constant(c) = self.init {
            if !(0.0..=1.0).contains(&c) {
                return bad("initial constant must lie in [0,1]");
            }
        }
        Ok(())
    }
}

pub fn default_schedule(h: f64) -> Vec<f64> {
    let floor = h * h;
    let mut out = Vec::new();
    let mut d = 1.0;
    while d > floor {
        out.push(d);
        d *= 0.25;
    }
    out.push(floor);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub stage: usize,
    pub delta: f64,
    /// Iteration count over all stages.
    pub iteration: usize,
    pub smoothed: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Rounding {
    pub threshold: f64,
    pub set: ScalarField,
    pub perimeter: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: ScalarField,
    pub trace: Vec<TraceRow>,
    pub energy: f64,
    /// `δ_final · (pair mass) / 2`, bounding `J(u*) − min J` from the
    /// smoothing alone.
    pub smoothing_gap: f64,
    pub threshold: f64,
    pub rounded: ScalarField,
    pub rounded_perimeter: f64,
    pub monotonicity_defect: Option<f64>,
    /// `‖χ_{u*>t*} − reference‖_{L¹}`; equals the symmetric difference
    /// measure for binary references.
    pub reference_l1: Option<f64>,
    pub converged_stages: usize,
}

/// Huber-smoothed energy with its gradient, on raw cell values.
pub struct SmoothedEnergy<'a> {
    energy: &'a Energy,
    delta: f64,
}

impl<'a> SmoothedEnergy<'a> {
    pub fn new(energy: &'a Energy, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidOptions(format!("smoothing parameter {delta} must be positive")));
        }
        Ok(SmoothedEnergy { energy, delta })
    }

    pub fn value(&self, values: &[f64]) -> f64 {
        self.energy.smoothed(values, self.delta, None).0
    }

    /// Value and gradient with respect to each cell value (zero on exterior
    /// cells).
    pub fn value_and_gradient(&self, values: &[f64]) -> (f64, Vec<f64>) {
        let mut g = alloc::vec![0.0; values.len()];
        let (v, _) = self.energy.smoothed(values, self.delta, Some(&mut g));
        (v, g)
    }
}

fn initial_values(datum: &ScalarField, opts: &SolveOptions) -> Result<Vec<f64>> {
    let field = match &opts.init {
        Init::Constant(c) => ScalarField::constant_interior(datum, *c)?,
        Init::Datum => datum.clone(),
        Init::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            ScalarField::with_datum(datum, |_, _| rng.gen::<f64>())?
        }
        Init::Field(f) => {
            if let Some(cell) = datum.exterior_mismatch(f)? {
                return Err(Error::ExteriorMismatch(cell));
            }
            f.clone()
        }
    };
    Ok(field.values().to_vec())
}

/// Minimizes the energy over fields sharing the exterior of `datum`.
pub fn minimize(datum: &ScalarField, kernel: &KernelSpec, opts: &SolveOptions) -> Result<SolveReport> {
    let grid = datum.grid().clone();
    opts.validate(grid.spacing())?;
    let energy = Energy::new(&grid, kernel)?;
    let datum_energy = energy.evaluate(datum)?;
    if !datum_energy.total.is_finite() {
        return Err(Error::NonFiniteDatumEnergy);
    }
    let reference = match &opts.reference {
        Some(Reference::Halfspace { normal, offset }) => Some(indicator_halfspace(&grid, normal, *offset)?),
        Some(Reference::Field(f)) => {
            if !grid.same_as(f.grid()) {
                return Err(Error::GridMismatch);
            }
            Some(f.clone())
        }
        None => None,
    };

    let mut y = initial_values(datum, opts)?;
    let (pair_mass, row_max) = energy.pair_masses();
    let cell_volume = grid.cell_volume();
    let interior = grid.interior_cells();
    let mut grad = alloc::vec![0.0; y.len()];
    let mut z = y.clone();
    let mut z_prev = y.clone();
    let mut y_next = y.clone();
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut converged_stages = 0;

    for (stage, &delta) in opts.deltas.iter().enumerate() {
        let lipschitz = 2.0 * row_max / delta;
        if stage > 0 && opts.rescale_stages {
            // smoothed minimizers behave like χ + δ·v near a sharp interface
            let ratio = delta / opts.deltas[stage - 1];
            for &c in interior {
                let r = if y[c] > 0.5 { 1.0 } else { 0.0 };
                y[c] = r + ratio * (y[c] - r);
            }
        }
        let (mut fy, ey) = energy.smoothed(&y, delta, Some(&mut grad));
        trace.push(TraceRow {
            stage,
            delta,
            iteration,
            smoothed: fy,
            energy: ey,
        });
        z_prev.copy_from_slice(&y);
        let mut t = 1.0;
        let mut increases = 0;
        for k in 0..opts.max_iterations {
            let tau = match opts.step {
                StepRule::Lipschitz => 1.0 / lipschitz,
                StepRule::Decaying { initial, exponent } => initial * math::powf(1.0 + k as f64, -exponent),
            };
            // gradient in the L² inner product is grad / h^d
            let scale = tau / cell_volume;
            for &c in interior {
                z[c] = (y[c] - scale * grad[c]).clamp(0.0, 1.0);
            }
            let t_next = 0.5 * (1.0 + math::sqrt(1.0 + 4.0 * t * t));
            let beta = if opts.momentum { (t - 1.0) / t_next } else { 0.0 };
            let (mut f_new, mut e_new);
            if beta > 0.0 {
                for &c in interior {
                    y_next[c] = (z[c] + beta * (z[c] - z_prev[c])).clamp(0.0, 1.0);
                }
                (f_new, e_new) = energy.smoothed(&y_next, delta, Some(&mut grad));
                if f_new > fy {
                    // restart from the plain projected step, which cannot
                    // increase the energy when the step is 1/L
                    t = 1.0;
                    y_next.copy_from_slice(&z);
                    (f_new, e_new) = energy.smoothed(&y_next, delta, Some(&mut grad));
                } else {
                    t = t_next;
                }
            } else {
                y_next.copy_from_slice(&z);
                (f_new, e_new) = energy.smoothed(&y_next, delta, Some(&mut grad));
                t = t_next;
            }
            iteration += 1;
            if f_new > fy {
                increases += 1;
                if increases >= MAX_INCREASES {
                    return Err(Error::Diverged {
                        stage,
                        iteration,
                        consecutive: increases,
                    });
                }
                if opts.step == StepRule::Lipschitz {
                    // only roundoff is left to gain
                    energy.smoothed(&y, delta, Some(&mut grad));
                    converged_stages += 1;
                    break;
                }
            } else {
                increases = 0;
            }
            let decrease = (fy - f_new) / f_new.abs().max(f64::MIN_POSITIVE);
            core::mem::swap(&mut z_prev, &mut z);
            core::mem::swap(&mut y, &mut y_next);
            fy = f_new;
            trace.push(TraceRow {
                stage,
                delta,
                iteration,
                smoothed: f_new,
                energy: e_new,
            });
            if (0.0..=opts.tolerance).contains(&decrease) {
                converged_stages += 1;
                break;
            }
        }
    }

    let field = ScalarField::from_values(grid.clone(), y)?;
    let final_energy = energy.evaluate(&field)?.total;
    let rounding = round_with(&energy, &field)?;
    let (monotonicity, reference_l1) = match (&opts.reference, &reference) {
        (Some(Reference::Halfspace { normal, .. }), Some(r)) => (
            Some(monotonicity_defect(&field, normal)?),
            Some(rounding.set.l1_distance(r)?),
        ),
        (_, Some(r)) => (None, Some(rounding.set.l1_distance(r)?)),
        _ => (None, None),
    };
    Ok(SolveReport {
        field,
        trace,
        energy: final_energy,
        smoothing_gap: 0.5 * opts.deltas[opts.deltas.len() - 1] * pair_mass,
        threshold: rounding.threshold,
        rounded: rounding.set,
        rounded_perimeter: rounding.perimeter,
        monotonicity_defect: monotonicity,
        reference_l1,
        converged_stages,
    })
}

/// Threshold `t*` with `Per_K({u > t*}) <= J_K(u)`: the gap of smallest
/// perimeter (ties to the smallest `t`), `t*` at its midpoint.
pub fn round_by_coarea(u: &ScalarField, kernel: &KernelSpec) -> Result<Rounding> {
    let energy = Energy::new(u.grid(), kernel)?;
    round_with(&energy, u)
}

pub fn round_with(energy: &Energy, u: &ScalarField) -> Result<Rounding> {
    let levels = energy.superlevel_perimeters(u)?;
    let threshold = match levels
        .iter()
        .min_by(|a, b| a.perimeter.total_cmp(&b.perimeter).then(a.lower.total_cmp(&b.lower)))
    {
        Some(l) => 0.5 * (l.lower + l.upper),
        None => 0.5,
    };
    let set = superlevel(u, threshold);
    let perimeter = energy.perimeter(&set)?.total;
    Ok(Rounding {
        threshold,
        set,
        perimeter,
    })
}

/// `max (u(x) − u(y))⁺` over cell pairs with `x·n < y·n − h`.
pub fn monotonicity_defect(u: &ScalarField, normal: &[f64]) -> Result<f64> {
    let grid: &Grid = u.grid();
    let dim = grid.dim();
    if normal.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: normal.len(),
        });
    }
    let len = math::norm(normal);
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::NonUnitNormal(len));
    }
    let h = grid.spacing();
    let mut proj: Vec<(f64, f64)> = (0..grid.len())
        .map(|c| (math::dot(&grid.center(c)[..dim], normal), u.value(c)))
        .collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut defect: f64 = 0.0;
    let mut running = f64::NEG_INFINITY;
    let mut j = 0;
    for &(p, v) in &proj {
        while j < proj.len() && proj[j].0 < p - h {
            running = running.max(proj[j].1);
            j += 1;
        }
        defect = defect.max(running - v);
    }
    Ok(defect)
}

/// `symdiff_measure` of the rounded field against `χ_{x·n > offset}`.
pub fn halfspace_symdiff(rounded: &ScalarField, normal: &[f64], offset: f64) -> Result<f64> {
    let r = indicator_halfspace(rounded.grid(), normal, offset)?;
    symdiff_measure(rounded, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use alloc::sync::Arc;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn line(h: f64) -> Arc<Grid> {
        Grid::new(DomainSpec::ball_with_margin(vec![0.0], 1.0, 1.0).unwrap(), h).unwrap()
    }

    #[test]
    fn schedule_ends_at_h_squared() {
        let d = default_schedule(0.125);
        assert_eq!(d[0], 1.0);
        assert_eq!(*d.last().unwrap(), 0.125 * 0.125);
        assert!(d.windows(2).all(|p| p[1] < p[0]));
        assert!(SolveOptions::for_spacing(0.125).validate(0.125).is_ok());
        let mut o = SolveOptions::for_spacing(0.125);
        o.deltas = vec![1.0, 0.1];
        assert!(matches!(o.validate(0.125), Err(Error::InvalidOptions(_))));
        o.deltas = vec![0.001, 0.01];
        assert!(matches!(o.validate(0.125), Err(Error::InvalidOptions(_))));
    }

    #[test]
    fn one_dimensional_minimum_is_one_half() {
        let g = line(1.0 / 32.0);
        let k = KernelSpec::indicator(1, 1.0).unwrap();
        let datum = indicator_halfspace(&g, &[1.0], 0.0).unwrap();
        let mut opts = SolveOptions::for_spacing(g.spacing());
        opts.reference = Some(Reference::Halfspace {
            normal: vec![1.0],
            offset: 0.0,
        });
        let rep = minimize(&datum, &k, &opts).unwrap();
        assert!((rep.energy - 0.5).abs() <= rep.smoothing_gap + 1e-9);
        // every halfline {x > a} with |a| < 1 has perimeter ½ here, so only
        // the energy and the monotone shape are determined
        assert_relative_eq!(rep.rounded_perimeter, 0.5, max_relative = 1e-12);
        assert!(rep.monotonicity_defect.unwrap() <= 1e-3);
        for w in rep.trace.windows(2) {
            if w[0].stage == w[1].stage {
                assert!(w[1].smoothed <= w[0].smoothed * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn minimizer_start_is_a_fixed_point() {
        let g = line(1.0 / 16.0);
        let k = KernelSpec::indicator(1, 1.0).unwrap();
        let datum = indicator_halfspace(&g, &[1.0], 0.0).unwrap();
        let mut opts = SolveOptions::for_spacing(g.spacing());
        opts.init = Init::Datum;
        let rep = minimize(&datum, &k, &opts).unwrap();
        assert!((rep.energy - 0.5).abs() <= rep.smoothing_gap + 1e-12);
        let first = rep.trace[0].energy;
        assert!(rep.trace.iter().all(|r| (r.energy - first).abs() <= 2.0 * rep.smoothing_gap + 1e-12));
    }

    #[test]
    fn rounding_examples() {
        let g = line(1.0 / 16.0);
        let k = KernelSpec::indicator(1, 1.0).unwrap();
        let en = Energy::new(&g, &k).unwrap();
        let c = ScalarField::from_fn(g.clone(), |_| 0.3).unwrap();
        let r = round_with(&en, &c).unwrap();
        assert_eq!(r.perimeter, 0.0);
        assert!(r.set.values().iter().all(|&v| v == r.set.value(0)));

        let b = indicator_halfspace(&g, &[1.0], 0.25).unwrap();
        let r = round_with(&en, &b).unwrap();
        assert!(r.threshold > 0.0 && r.threshold < 1.0);
        assert_eq!(r.set.values(), b.values());

        // two parallel interfaces at different heights; the one nearer the
        // middle of Ω sees more of the kernel, so the other wins
        let u = ScalarField::from_fn(g.clone(), |x| {
            0.5 * f64::from(u8::from(x[0] > 0.0)) + 0.5 * f64::from(u8::from(x[0] > 0.5))
        })
        .unwrap();
        let lo = en.perimeter(&superlevel(&u, 0.25)).unwrap().total;
        let hi = en.perimeter(&superlevel(&u, 0.75)).unwrap().total;
        let r = round_with(&en, &u).unwrap();
        let expect = if hi < lo { 0.75 } else { 0.25 };
        assert_eq!(r.threshold, expect);
        assert!(r.perimeter <= en.evaluate(&u).unwrap().total + 1e-12);
    }

    #[test]
    fn incremental_perimeters_match_direct() {
        let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 0.5, 0.3).unwrap(), 0.05).unwrap();
        let k = KernelSpec::indicator(2, 0.3).unwrap();
        let en = Energy::new(&g, &k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = ScalarField::from_fn(g.clone(), |_| f64::from(rng.gen_range(0u8..6)) / 5.0).unwrap();
        let fast = en.superlevel_perimeters(&u).unwrap();
        let direct = en.coarea_decompose(&u).unwrap().levels;
        assert_eq!(fast.len(), direct.len());
        for (a, b) in fast.iter().zip(&direct) {
            assert_eq!((a.lower, a.upper), (b.lower, b.upper));
            assert_relative_eq!(a.perimeter, b.perimeter, max_relative = 1e-11, epsilon = 1e-14);
        }
    }

    #[test]
    fn monotonicity_examples() {
        let g = Grid::new(DomainSpec::ball_with_margin(vec![0.0, 0.0], 1.0, 0.5).unwrap(), 0.1).unwrap();
        let n = [0.6, 0.8];
        let h = indicator_halfspace(&g, &n, 0.0).unwrap();
        assert_eq!(monotonicity_defect(&h, &n).unwrap(), 0.0);
        assert_eq!(monotonicity_defect(&h.complement(), &n).unwrap(), 1.0);
        assert!(matches!(monotonicity_defect(&h, &[1.0, 1.0]), Err(Error::NonUnitNormal(_))));
    }
}
