//! One driver per subcommand. Each writes its CSVs into the output directory
//! and returns the human-readable summary.

use std::path::PathBuf;
use std::time::Instant;

use nlperim_core::calibration::{certificate, NORMAL_TOL};
use nlperim_core::domain::symdiff_measure;
use nlperim_core::gamma::{cross_term_check, gamma_sweep, j0_polyhedral};
use nlperim_core::solver::minimize;
use nlperim_core::{
    Calibration, Certifier, Energy, Facet, Init, Reduction, Reference, ScalarField, Shape, SolveOptions, StepRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Loaded, Task};
use crate::error::{CliError, CliResult};
use crate::io::{self, num, opt, write_table, Manifest, OutputDir};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub task: Task,
    pub overrides: Vec<String>,
    /// Forces ordered reductions on top of the config's `deterministic`.
    pub deterministic: bool,
    pub threads: usize,
    /// Overrides the config's `output`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: String,
    /// False when a check inside the task failed (selftest, certificate).
    pub ok: bool,
}

/// Validates, runs the task, then writes the resolved config and manifest.
pub fn run(loaded: &Loaded, opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    cfg.validate_for(opts.task)?;
    let deterministic = opts.deterministic || cfg.deterministic;
    let root = opts
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut out = OutputDir::create(root)?;
    let start = Instant::now();
    let passed = |summary| Outcome { summary, ok: true };
    let outcome = match opts.task {
        Task::Energy => passed(energy(loaded, deterministic, &mut out)?),
        Task::Minimize => passed(minimize_task(loaded, &mut out)?),
        Task::Calibrate => calibrate(loaded, deterministic, &mut out)?,
        Task::Gamma => passed(gamma(loaded, &mut out)?),
        Task::Selftest => crate::selftest::run(loaded, &mut out)?,
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: opts.task.name().into(),
        config_file: "config.toml".into(),
        config_sha256: loaded.sha256(),
        overrides: opts.overrides.clone(),
        deterministic,
        threads: opts.threads,
        seed: cfg.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: Vec::new(),
    };
    out.finish(&loaded.resolved_toml, manifest)?;
    Ok(outcome)
}

fn reduction(deterministic: bool) -> Reduction {
    if deterministic {
        Reduction::Ordered
    } else {
        Reduction::Tree
    }
}

fn energy(loaded: &Loaded, deterministic: bool, out: &mut OutputDir) -> CliResult<String> {
    let cfg = &loaded.config;
    let kernel = cfg.kernel()?;
    let grid = cfg.grid()?;
    let u = cfg.field(&grid, &loaded.base_dir)?;
    let e = Energy::new(&grid, &kernel)?.with_reduction(reduction(deterministic));
    let b = e.evaluate(&u)?;
    write_table(
        out.file("energy.csv"),
        &[
            "kernel",
            "dim",
            "h",
            "cells",
            "interior_cells",
            "interior_term",
            "cross_term",
            "tail_bound",
            "total",
            "roundoff",
        ],
        &[vec![
            kernel.label().to_owned(),
            grid.dim().to_string(),
            num(grid.spacing()),
            grid.len().to_string(),
            grid.interior_cells().len().to_string(),
            num(b.interior_term),
            num(b.cross_term),
            num(b.tail_bound),
            num(b.total),
            num(b.roundoff),
        ]],
    )?;
    let mut s = format!(
        "energy: J = {} (interior {}, cross {}, tail bound {}) on {} interior cells, h = {}",
        b.total,
        b.interior_term,
        b.cross_term,
        b.tail_bound,
        grid.interior_cells().len(),
        grid.spacing()
    );
    if b.tail_dominates() {
        s.push_str("\nenergy: warning: unresolved tail exceeds 1% of the energy; enlarge the margin");
    }
    if cfg.energy.as_ref().is_some_and(|e| e.coarea) {
        let c = e.coarea_decompose(&u)?;
        let rows: Vec<Vec<String>> = c
            .levels
            .iter()
            .map(|l| vec![num(l.lower), num(l.upper), num(l.perimeter)])
            .collect();
        write_table(out.file("coarea.csv"), &["lower", "upper", "perimeter"], &rows)?;
        s.push_str(&format!("\nenergy: coarea integral {} over {} levels", c.integral, c.levels.len()));
    }
    Ok(s)
}

/// `halfspace:n₁,n₂[,n₃][@offset]`.
pub fn parse_reference(spec: &str) -> CliResult<Reference> {
    let bad = || CliError::config(format!("reference `{spec}` is not of the form halfspace:n1,n2[@offset]"));
    let rest = spec.strip_prefix("halfspace:").ok_or_else(bad)?;
    let (normal, offset) = match rest.split_once('@') {
        Some((n, o)) => (n, o.trim().parse::<f64>().map_err(|_| bad())?),
        None => (rest, 0.0),
    };
    let normal = normal
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok(Reference::Halfspace { normal, offset })
}

fn solve_options(loaded: &Loaded, h: f64) -> CliResult<SolveOptions> {
    let cfg = &loaded.config;
    let m = cfg.minimize.clone().unwrap_or_default();
    let mut o = SolveOptions::for_spacing(h);
    o.seed = cfg.seed;
    if let Some(d) = m.deltas {
        o.deltas = d;
    }
    if let Some(v) = m.max_iterations {
        o.max_iterations = v;
    }
    if let Some(v) = m.tolerance {
        o.tolerance = v;
    }
    if let Some(v) = m.momentum {
        o.momentum = v;
    }
    if let Some(v) = m.rescale_stages {
        o.rescale_stages = v;
    }
    o.init = match m.init.as_deref().unwrap_or("constant") {
        "constant" => Init::Constant(m.init_value.unwrap_or(0.5)),
        "datum" => Init::Datum,
        "random" => Init::Random,
        other => return Err(CliError::config(format!("unknown init `{other}` (expected constant, datum or random)"))),
    };
    o.step = match m.step.as_deref().unwrap_or("lipschitz") {
        "lipschitz" => StepRule::Lipschitz,
        "decaying" => StepRule::Decaying {
            initial: m.step_initial.unwrap_or(1.0),
            exponent: m.step_exponent.unwrap_or(0.5),
        },
        other => return Err(CliError::config(format!("unknown step rule `{other}` (expected lipschitz or decaying)"))),
    };
    if let Some(r) = &m.reference {
        o.reference = Some(parse_reference(r)?);
    }
    o.validate(h)?;
    Ok(o)
}

fn minimize_task(loaded: &Loaded, out: &mut OutputDir) -> CliResult<String> {
    let cfg = &loaded.config;
    let kernel = cfg.kernel()?;
    let grid = cfg.grid()?;
    let datum = cfg.field(&grid, &loaded.base_dir)?;
    let o = solve_options(loaded, grid.spacing())?;
    let rep = minimize(&datum, &kernel, &o)?;
    let trace: Vec<Vec<String>> = rep
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
    write_table(out.file("trace.csv"), &["stage", "delta", "iteration", "smoothed", "energy"], &trace)?;
    io::write_field(out.file("field.csv"), &rep.field)?;
    io::write_field(out.file("rounded.csv"), &rep.rounded)?;
    let iterations = rep.trace.last().map_or(0, |t| t.iteration);
    write_table(
        out.file("summary.csv"),
        &[
            "energy",
            "smoothing_gap",
            "threshold",
            "rounded_perimeter",
            "reference_l1",
            "monotonicity_defect",
            "converged_stages",
            "stages",
            "iterations",
        ],
        &[vec![
            num(rep.energy),
            num(rep.smoothing_gap),
            num(rep.threshold),
            num(rep.rounded_perimeter),
            opt(rep.reference_l1),
            opt(rep.monotonicity_defect),
            rep.converged_stages.to_string(),
            o.deltas.len().to_string(),
            iterations.to_string(),
        ]],
    )?;
    let mut s = format!(
        "minimize: J(u*) = {} (smoothing gap {}), rounded at t* = {} with perimeter {}, {} of {} stages converged in {} iterations",
        rep.energy,
        rep.smoothing_gap,
        rep.threshold,
        rep.rounded_perimeter,
        rep.converged_stages,
        o.deltas.len(),
        iterations
    );
    if let Some(l1) = rep.reference_l1 {
        s.push_str(&format!("\nminimize: L1 distance to reference {l1}"));
    }
    if let Some(m) = rep.monotonicity_defect {
        s.push_str(&format!("\nminimize: monotonicity defect {m}"));
    }
    Ok(s)
}

/// Uniform interior values with the exterior of `datum`.
pub fn random_competitor(datum: &ScalarField, rng: &mut ChaCha8Rng) -> CliResult<ScalarField> {
    Ok(ScalarField::with_datum(datum, |_, _| rng.gen::<f64>())?)
}

fn calibrate(loaded: &Loaded, deterministic: bool, out: &mut OutputDir) -> CliResult<Outcome> {
    let cfg = &loaded.config;
    let section = cfg.calibrate.clone().unwrap_or_default();
    let kernel = cfg.kernel()?;
    let grid = cfg.grid()?;
    let u = cfg.field(&grid, &loaded.base_dir)?;
    let cal = match section.calibration.as_str() {
        "halfspace" => {
            let n = match section.normal.clone() {
                Some(n) => n,
                None => cfg
                    .field_normal()?
                    .ok_or_else(|| CliError::config("halfspace calibration needs `calibrate.normal` or `field.normal`"))?,
            };
            Calibration::halfspace_sign(&n)?
        }
        other => {
            return Err(CliError::config(format!(
                "unknown calibration `{other}`; the builtin calibration is `halfspace`"
            )))
        }
    };
    let e = Energy::new(&grid, &kernel)?.with_reduction(reduction(deterministic));
    let cert = Certifier::new(&cal, &e, &u)?;
    let own = certificate(&cal, &u, &u, &e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(section.competitors + 1);
    let row = |label: String, r: &nlperim_core::CertificateReport| {
        vec![
            label,
            num(r.a),
            num(r.b1),
            num(r.b0),
            num(r.energy_of_candidate),
            num(r.gap),
            num(r.identity_residual),
            num(r.tol),
            r.lower_bound_holds().to_string(),
        ]
    };
    rows.push(row("candidate".into(), &own));
    let mut all_hold = own.lower_bound_holds();
    for i in 0..section.competitors {
        let v = random_competitor(&u, &mut rng)?;
        let r = cert.certify(&v)?;
        all_hold &= r.lower_bound_holds();
        rows.push(row(i.to_string(), &r));
    }
    write_table(
        out.file("certificate.csv"),
        &["competitor", "a", "b1", "b0", "energy", "gap", "identity_residual", "tol", "lower_bound_holds"],
        &rows,
    )?;
    let div: Vec<Vec<String>> = own
        .divergence_residuals
        .iter()
        .map(|&(c, r)| vec![c.to_string(), num(r)])
        .collect();
    write_table(out.file("divergence.csv"), &["cell", "residual"], &div)?;
    let worst_div = own.divergence_residuals.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let sharp = own.gap.abs() <= own.tol.max(1e-6 * own.b0);
    let normal_ok = own.normal_violation_fraction <= NORMAL_TOL;
    let pass = all_hold && sharp && normal_ok;
    let summary = format!(
        "calibrate: {} ({}): candidate gap {} against b0 = {}, normal violations {}, max divergence residual {}, {} of {} competitors bounded",
        if pass { "PASS" } else { "FAIL" },
        cal.label(),
        own.gap,
        own.b0,
        own.normal_violation_fraction,
        worst_div,
        rows.iter().skip(1).filter(|r| r[8] == "true").count(),
        section.competitors
    );
    Ok(Outcome { summary, ok: pass })
}

fn gamma(loaded: &Loaded, out: &mut OutputDir) -> CliResult<String> {
    let cfg = &loaded.config;
    let section = cfg.gamma.clone().ok_or_else(|| CliError::config("gamma needs a [gamma] section with `eps`"))?;
    if cfg.kernel.as_ref().is_some_and(|k| k.eps.is_some()) {
        return Err(CliError::config("gamma rescales the kernel itself; drop `kernel.eps`"));
    }
    let kernel = cfg.base_kernel()?;
    let grid = cfg.grid()?;
    let f = cfg.field_section()?;
    if f.source != "halfspace" {
        return Err(CliError::config("gamma needs a halfspace field"));
    }
    let Shape::Ball { center, radius } = grid.domain().shape().clone() else {
        return Err(CliError::config("gamma needs a ball domain"));
    };
    let normal = f.normal.clone().ok_or_else(|| CliError::config("halfspace field needs `field.normal`"))?;
    let set = cfg.field(&grid, &loaded.base_dir)?;
    let shift: f64 = normal.iter().zip(&center).map(|(n, c)| n * c).sum();
    let facet = Facet::halfspace_in_ball(&normal, f.offset - shift, radius)?;
    let j0 = j0_polyhedral(&[facet], &kernel)?;
    let rep = gamma_sweep(&set, "halfspace", j0, &kernel, &section.eps)?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| vec![num(r.eps), num(r.j1), num(r.j2), num(r.j), num(r.j0), num(r.relative_error)])
        .collect();
    write_table(
        out.file("gamma.csv"),
        &["eps", "j1", "j2", "j", "j0", "relative_error"],
        &rows,
    )?;
    let mut s = format!(
        "gamma: {} on {} with J0 = {}: rate {}, {} error inversions",
        rep.kernel,
        rep.set,
        j0,
        rep.rate.map_or("n/a".into(), |r| format!("{r:.3}")),
        rep.error_inversions()
    );
    if let Some(pr) = section.perturb_radius {
        if !(pr > 0.0 && pr < radius) {
            return Err(CliError::config("gamma.perturb_radius must lie in (0, domain radius)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = grid.dim();
        let mut pert = set.clone();
        for &c in grid.interior_cells() {
            let x = grid.center(c);
            let r2: f64 = (0..d).map(|k| (x[k] - center[k]).powi(2)).sum();
            if r2 < pr * pr && rng.gen::<f64>() < section.flip_probability {
                pert.set(c, 1.0 - set.value(c))?;
            }
        }
        let cross = cross_term_check(&set, &pert, &kernel, &section.eps, radius - pr)?;
        let rows: Vec<Vec<String>> = cross
            .iter()
            .map(|r| vec![num(r.eps), num(r.measured), num(r.bound)])
            .collect();
        write_table(out.file("cross_term.csv"), &["eps", "measured", "bound"], &rows)?;
        let ok = cross.iter().all(|r| r.measured <= r.bound + 1e-6);
        s.push_str(&format!(
            "\ngamma: cross-term bound {} for a perturbation of measure {}",
            if ok { "holds" } else { "VIOLATED" },
            symdiff_measure(&set, &pert)?
        ));
    }
    Ok(s)
}
