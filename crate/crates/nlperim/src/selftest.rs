//! The acceptance suite: fixed settings, one row per check.

use std::sync::Arc;

use nlperim_core::domain::{indicator_halfspace, symdiff_measure};
use nlperim_core::energy::truncate;
use nlperim_core::gamma::{cross_term_check, gamma_sweep, j0_polyhedral, sigma_k, sigma_k_radial, GammaSweepReport};
use nlperim_core::solver::minimize;
use nlperim_core::{
    Calibration, Certifier, DomainSpec, Energy, Facet, Grid, KernelSpec, Reference, ScalarField, SmoothedEnergy,
    SolveOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::Outcome;
use crate::config::Loaded;
use crate::error::CliResult;
use crate::io::{num, write_table, OutputDir};

pub const CRITERIA: [u32; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub criterion: u32,
    pub name: &'static str,
    pub setting: String,
    pub measured: f64,
    pub limit: f64,
    /// `measured <= limit` when true, `measured >= limit` otherwise.
    pub upper: bool,
    /// Known not to be attainable in this setting; reported, not gating.
    pub known_deviation: bool,
}

impl Check {
    fn at_most(criterion: u32, name: &'static str, setting: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check {
            criterion,
            name,
            setting: setting.into(),
            measured,
            limit,
            upper: true,
            known_deviation: false,
        }
    }

    fn at_least(criterion: u32, name: &'static str, setting: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check {
            upper: false,
            ..Self::at_most(criterion, name, setting, measured, limit)
        }
    }

    fn known(mut self) -> Self {
        self.known_deviation = true;
        self
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.measured <= self.limit
        } else {
            self.measured >= self.limit
        }
    }

    pub fn status(&self) -> &'static str {
        match (self.passed(), self.known_deviation) {
            (true, _) => "pass",
            (false, false) => "fail",
            (false, true) => "fail-known",
        }
    }

    pub fn gates(&self) -> bool {
        self.passed() || self.known_deviation
    }
}

/// Extra tables a criterion wants on disk next to the check rows.
#[derive(Debug, Default)]
pub struct Tables {
    pub gamma: Vec<Vec<String>>,
    pub cross_term: Vec<Vec<String>>,
    pub trace: Vec<Vec<String>>,
}

fn unit_ball(dim: usize, margin: f64, h: f64) -> CliResult<Arc<Grid>> {
    Ok(Grid::new(DomainSpec::ball_with_margin(vec![0.0; dim], 1.0, margin)?, h)?)
}

const E2: [f64; 2] = [0.0, 1.0];

/// Competitors sharing the exterior of `datum = χ_{x·n > 0}`, cycling
/// through uniform noise, interface flips, tilted halfspaces and ramps.
fn competitor(datum: &ScalarField, n: &[f64], kind: usize, rng: &mut ChaCha8Rng) -> CliResult<ScalarField> {
    let dot = |x: &[f64]| x.iter().zip(n).map(|(a, b)| a * b).sum::<f64>();
    let v = match kind % 4 {
        0 => ScalarField::with_datum(datum, |_, _| rng.gen::<f64>())?,
        1 => {
            let p = rng.gen_range(0.05..0.5);
            let w = rng.gen_range(0.05..0.3);
            ScalarField::with_datum(datum, |c, x| {
                let base = datum.value(c);
                if dot(x).abs() < w && rng.gen::<f64>() < p {
                    1.0 - base
                } else {
                    base
                }
            })?
        }
        2 => {
            let t = rng.gen_range(-0.6..0.6f64);
            let c = rng.gen_range(-0.3..0.3);
            let m = [t.sin(), t.cos()];
            ScalarField::with_datum(datum, |_, x| if x[0] * m[0] + x[1] * m[1] > c { 1.0 } else { 0.0 })?
        }
        _ => {
            let w = rng.gen_range(0.01..0.5);
            let c = rng.gen_range(-0.2..0.2);
            ScalarField::with_datum(datum, |_, x| (0.5 + (dot(x) - c) / w).clamp(0.0, 1.0))?
        }
    };
    Ok(v)
}

pub fn criterion_1(seed: u64) -> CliResult<Vec<Check>> {
    let h = 1.0 / 64.0;
    let g = unit_ball(2, 1.0, h)?;
    let k = KernelSpec::indicator(2, 1.0)?;
    let u = indicator_halfspace(&g, &E2, 0.0)?;
    let e = Energy::new(&g, &k)?;
    let ju = e.evaluate(&u)?.total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for i in 0..100 {
        let v = competitor(&u, &E2, i, &mut rng)?;
        worst = worst.min(e.evaluate(&v)?.total - ju);
    }
    let cal = Calibration::halfspace_sign(&E2)?;
    let own = Certifier::new(&cal, &e, &u)?.certify(&u)?;
    let setting = "d=2 unit ball, indicator R=1, h=1/64, H={x2>0}";
    Ok(vec![
        Check::at_least(1, "min over 100 competitors of J(v) - J(H)", setting, worst, -1e-9),
        Check::at_most(1, "certificate gap of H over b0", setting, own.gap.abs() / own.b0, 1e-6),
    ])
}

pub fn criterion_2(tables: &mut Tables) -> CliResult<Vec<Check>> {
    let h = 1.0 / 64.0;
    let g = unit_ball(2, 1.0, h)?;
    let k = KernelSpec::indicator(2, 1.0)?;
    let datum = indicator_halfspace(&g, &E2, 0.0)?;
    let mut o = SolveOptions::for_spacing(h);
    o.reference = Some(Reference::Halfspace {
        normal: E2.to_vec(),
        offset: 0.0,
    });
    let rep = minimize(&datum, &k, &o)?;
    tables.trace = rep
        .trace
        .iter()
        .map(|t| {
            vec![
                t.stage.to_string(),
                num(t.delta),
                t.iteration.to_string(),
                num(t.smoothed),
                num(t.energy),
            ]
        })
        .collect();
    let setting = "d=2 unit ball, indicator R=1, h=1/64, start u=0.5";
    let sd = symdiff_measure(&rep.rounded, &datum)?;
    Ok(vec![
        Check::at_most(2, "symmetric difference of rounded minimizer to H", setting, sd, 6.0 * h),
        Check::at_most(
            2,
            "monotonicity defect along the normal",
            setting,
            rep.monotonicity_defect.unwrap_or(f64::INFINITY),
            1e-3,
        ),
    ])
}

pub fn criterion_3(seed: u64) -> CliResult<Vec<Check>> {
    let h = 1.0 / 64.0;
    let g = unit_ball(2, 1.0, h)?;
    let k = KernelSpec::indicator(2, 1.0)?;
    let u = indicator_halfspace(&g, &E2, 0.0)?;
    let e = Energy::new(&g, &k)?;
    let cal = Calibration::halfspace_sign(&E2)?;
    let cert = Certifier::new(&cal, &e, &u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v = ScalarField::with_datum(&u, |_, _| rng.gen::<f64>())?;
        let r = cert.certify(&v)?;
        worst = worst.max((r.a + r.b1).abs() / (r.a.abs() + r.b1.abs() + 1.0));
    }
    Ok(vec![Check::at_most(
        3,
        "max |a + b1| / (|a| + |b1| + 1) over 20 random fields",
        "d=2 unit ball, indicator R=1, h=1/64, halfspace calibration",
        worst,
        1e-9,
    )])
}

fn small_setting() -> CliResult<(Energy, ScalarField)> {
    let g = unit_ball(2, 0.5, 1.0 / 16.0)?;
    let k = KernelSpec::fractional_isotropic(2, 0.5)?;
    let datum = indicator_halfspace(&g, &[0.6, 0.8], 0.0)?;
    Ok((Energy::new(&g, &k)?, datum))
}

const SMALL: &str = "d=2 unit ball, fractional s=0.5, h=1/16";

pub fn criterion_4(seed: u64) -> CliResult<Vec<Check>> {
    let (e, datum) = small_setting()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut levels = vec![0.0, 1.0];
        let extra = rng.gen_range(0..=6);
        levels.extend((0..extra).map(|_| rng.gen::<f64>()));
        let u = ScalarField::with_datum(&datum, |_, _| levels[rng.gen_range(0..levels.len())])?;
        let direct = e.evaluate(&u)?.total;
        let split = e.coarea_decompose(&u)?.integral;
        worst = worst.max((direct - split).abs() / direct);
    }
    Ok(vec![Check::at_most(
        4,
        "max relative |coarea integral - J| over 100 step fields",
        SMALL,
        worst,
        1e-12,
    )])
}

pub fn criterion_5(seed: u64) -> CliResult<Vec<Check>> {
    let (e, datum) = small_setting()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..100 {
        let mut values = datum.values().to_vec();
        for &c in e.grid().interior_cells() {
            values[c] = rng.gen_range(-1.0..2.0);
        }
        let before = e.evaluate_values(&values).total;
        let after = e.evaluate(&truncate(e.grid(), &values)?)?.total;
        if after > before {
            violations += 1;
        }
    }
    Ok(vec![Check::at_most(
        5,
        "violations of J(T u) <= J(u) over 100 out-of-range fields",
        SMALL,
        violations as f64,
        0.0,
    )])
}

pub fn criterion_6() -> CliResult<Vec<Check>> {
    let k1 = KernelSpec::indicator(1, 1.0)?;
    let k2 = KernelSpec::indicator(2, 1.0)?;
    let dirs: Vec<[f64; 2]> = (0..16)
        .map(|i| {
            let t = std::f64::consts::PI * i as f64 / 8.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let radial = sigma_k_radial(&k2)?;
    let mut off: f64 = 0.0;
    let mut disagree: f64 = 0.0;
    for p in &dirs {
        let s = sigma_k(&k2, p)?;
        off = off.max((s - 2.0 / 3.0).abs());
        disagree = disagree.max((s - radial).abs() / radial);
    }
    Ok(vec![
        Check::at_most(6, "|sigma_K - 1/2|", "d=1 indicator R=1", (sigma_k(&k1, &[1.0])? - 0.5).abs(), 1e-10),
        Check::at_most(6, "max |sigma_K - 2/3| over 16 directions", "d=2 indicator R=1", off, 1e-3),
        Check::at_most(
            6,
            "max relative |sigma_K - sigma_K_radial| over 16 directions",
            "d=2 indicator R=1",
            disagree,
            1e-3,
        ),
    ])
}

const EPS: [f64; 3] = [0.2, 0.1, 0.05];

fn sweep(dim: usize, per_eps_min: f64) -> CliResult<GammaSweepReport> {
    let h = EPS[2] / per_eps_min;
    let g = unit_ball(dim, 0.2, h)?;
    let k = KernelSpec::indicator(dim, 1.0)?;
    let n: Vec<f64> = (0..dim).map(|i| if i + 1 == dim { 1.0 } else { 0.0 }).collect();
    let set = indicator_halfspace(&g, &n, 0.0)?;
    let j0 = j0_polyhedral(&[Facet::halfspace_in_ball(&n, 0.0, 1.0)?], &k)?;
    Ok(gamma_sweep(&set, "H", j0, &k, &EPS)?)
}

fn sweep_checks(rep: &GammaSweepReport, setting: &str, known: bool, tables: &mut Tables) -> Vec<Check> {
    for r in &rep.rows {
        tables.gamma.push(vec![
            setting.to_owned(),
            num(r.eps),
            num(r.j1),
            num(r.j2),
            num(r.j),
            num(r.j0),
            num(r.relative_error),
        ]);
    }
    let last = rep.rows.last().map_or(f64::INFINITY, |r| r.relative_error);
    let mark = |c: Check| if known { c.known() } else { c };
    vec![
        mark(Check::at_most(
            7,
            "error increases across eps = 0.2, 0.1, 0.05",
            setting,
            rep.error_inversions() as f64,
            0.0,
        )),
        mark(Check::at_most(7, "relative error of J1/(eps omega_1) at eps = 0.05", setting, last, 0.05)),
    ]
}

pub fn criterion_7(tables: &mut Tables) -> CliResult<Vec<Check>> {
    let mut out = sweep_checks(&sweep(2, 8.0)?, "d=2 unit ball, indicator R=1, h=eps_min/8", true, tables);
    out.extend(sweep_checks(
        &sweep(2, 24.0)?,
        "d=2 unit ball, indicator R=1, h=eps_min/24",
        false,
        tables,
    ));
    let one = sweep(1, 8.0)?;
    let worst = one.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    for r in &one.rows {
        tables.gamma.push(vec![
            "d=1".into(),
            num(r.eps),
            num(r.j1),
            num(r.j2),
            num(r.j),
            num(r.j0),
            num(r.relative_error),
        ]);
    }
    out.push(Check::at_most(
        7,
        "max relative error over the sweep",
        "d=1 ball, indicator R=1, h=eps_min/8",
        worst,
        1e-9,
    ));
    Ok(out)
}

pub fn criterion_8(seed: u64, tables: &mut Tables) -> CliResult<Vec<Check>> {
    let h = EPS[2] / 8.0;
    let g = unit_ball(2, 0.2, h)?;
    let k = KernelSpec::indicator(2, 1.0)?;
    let href = indicator_halfspace(&g, &E2, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..3 {
        let p = [0.05, 0.2, 0.5][trial];
        let mut pert = href.clone();
        for &c in g.interior_cells() {
            let x = g.center(c);
            if x[0] * x[0] + x[1] * x[1] < 0.75 * 0.75 && rng.gen::<f64>() < p {
                pert.set(c, 1.0 - href.value(c))?;
            }
        }
        for r in cross_term_check(&href, &pert, &k, &EPS, 0.25)? {
            tables.cross_term.push(vec![trial.to_string(), num(r.eps), num(r.measured), num(r.bound)]);
            worst = worst.max(r.measured - r.bound);
        }
    }
    Ok(vec![Check::at_most(
        8,
        "max over eps and 3 perturbations in B_0.75 of measured - bound",
        "d=2 unit ball, indicator R=1, h=eps_min/8",
        worst,
        1e-6,
    )])
}

pub fn criterion_9(seed: u64) -> CliResult<Vec<Check>> {
    let h = 1.0 / 16.0;
    let g = unit_ball(2, 1.0, h)?;
    let k = KernelSpec::indicator(2, 1.0)?;
    let datum = indicator_halfspace(&g, &E2, 0.0)?;
    let e = Energy::new(&g, &k)?;
    let f = SmoothedEnergy::new(&e, 0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interior = g.interior_cells();
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let u = ScalarField::with_datum(&datum, |_, _| rng.gen::<f64>())?;
        let (_, grad) = f.value_and_gradient(u.values());
        for _ in 0..20 {
            let c = interior[rng.gen_range(0..interior.len())];
            let mut v = u.values().to_vec();
            v[c] += step;
            let up = f.value(&v);
            v[c] -= 2.0 * step;
            let down = f.value(&v);
            let fd = (up - down) / (2.0 * step);
            worst = worst.max((fd - grad[c]).abs() / grad[c].abs().max(fd.abs()));
        }
    }
    Ok(vec![Check::at_most(
        9,
        "max relative gap between gradient and central differences",
        "d=2 unit ball, indicator R=1, h=1/16, delta=0.1, 3 fields x 20 cells",
        worst,
        1e-5,
    )])
}

pub fn run_criterion(c: u32, seed: u64, tables: &mut Tables) -> CliResult<Vec<Check>> {
    let s = seed.wrapping_mul(1_000).wrapping_add(c as u64);
    match c {
        1 => criterion_1(s),
        2 => criterion_2(tables),
        3 => criterion_3(s),
        4 => criterion_4(s),
        5 => criterion_5(s),
        6 => criterion_6(),
        7 => criterion_7(tables),
        8 => criterion_8(s, tables),
        9 => criterion_9(s),
        other => Err(crate::CliError::config(format!("selftest has no criterion {other} (expected 1..=9)"))),
    }
}

pub fn run(loaded: &Loaded, out: &mut OutputDir) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let only = cfg.selftest.as_ref().and_then(|s| s.only.clone()).unwrap_or_else(|| CRITERIA.to_vec());
    let mut tables = Tables::default();
    let mut checks = Vec::new();
    for c in only {
        checks.extend(run_criterion(c, cfg.seed, &mut tables)?);
    }
    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| {
            vec![
                c.criterion.to_string(),
                c.name.to_owned(),
                c.setting.clone(),
                num(c.measured),
                format!("{} {}", if c.upper { "<=" } else { ">=" }, num(c.limit)),
                c.status().to_owned(),
            ]
        })
        .collect();
    write_table(
        out.file("selftest.csv"),
        &["criterion", "check", "setting", "measured", "limit", "status"],
        &rows,
    )?;
    if !tables.gamma.is_empty() {
        write_table(
            out.file("selftest_gamma.csv"),
            &["setting", "eps", "j1", "j2", "j", "j0", "relative_error"],
            &tables.gamma,
        )?;
    }
    if !tables.cross_term.is_empty() {
        write_table(
            out.file("selftest_cross_term.csv"),
            &["perturbation", "eps", "measured", "bound"],
            &tables.cross_term,
        )?;
    }
    if !tables.trace.is_empty() {
        write_table(
            out.file("selftest_trace.csv"),
            &["stage", "delta", "iteration", "smoothed", "energy"],
            &tables.trace,
        )?;
    }
    let mut lines: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "selftest: [{}] {}: {} ({}; measured {}, limit {} {})",
                c.criterion,
                c.status(),
                c.name,
                c.setting,
                c.measured,
                if c.upper { "<=" } else { ">=" },
                c.limit
            )
        })
        .collect();
    let failed = checks.iter().filter(|c| !c.gates()).count();
    let known = checks.iter().filter(|c| !c.passed() && c.known_deviation).count();
    lines.push(format!(
        "selftest: {} checks, {} failed, {} known deviations",
        checks.len(),
        failed,
        known
    ));
    Ok(Outcome {
        summary: lines.join("\n"),
        ok: failed == 0,
    })
}
