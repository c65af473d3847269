//! TOML experiment configs. Sections mirror the core modules (`kernel`,
//! `domain`, `grid`, `field`) plus one section per task; `--set a.b=v`
//! overrides any dotted key before validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlperim_core::domain::indicator_halfspace;
use nlperim_core::{Anisotropy, DomainSpec, Grid, KernelSpec, ScalarField, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Energy,
    Minimize,
    Calibrate,
    Gamma,
    Selftest,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Energy => "energy",
            Task::Minimize => "minimize",
            Task::Calibrate => "calibrate",
            Task::Gamma => "gamma",
            Task::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub form: String,
    pub dim: usize,
    pub radius: Option<f64>,
    pub s: Option<f64>,
    pub lambda: Option<f64>,
    pub big_lambda: Option<f64>,
    /// Axis of the quadratic anisotropy `λ + (Λ − λ)(x̂·axis)²`.
    pub axis: Option<Vec<f64>>,
    /// Rescale to `K_ε(x) = ε^{-d} K(x/ε)`.
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_shape")]
    pub shape: String,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
    pub margin: f64,
    pub tail_radius: Option<f64>,
}

fn default_shape() -> String {
    "ball".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub h: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// `halfspace`, `constant`, `random` or `file`.
    pub source: String,
    pub normal: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: f64,
    /// Interior value for `constant`; exterior cells follow the halfspace
    /// given by `normal`/`offset` when present, else take this value too.
    pub value: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    /// Also write the per-level coarea decomposition.
    #[serde(default)]
    pub coarea: bool,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeSection {
    /// `constant`, `datum` or `random`.
    pub init: Option<String>,
    pub init_value: Option<f64>,
    pub max_iterations: Option<usize>,
    pub tolerance: Option<f64>,
    pub momentum: Option<bool>,
    pub rescale_stages: Option<bool>,
    /// `lipschitz` or `decaying`.
    pub step: Option<String>,
    pub step_initial: Option<f64>,
    pub step_exponent: Option<f64>,
    pub deltas: Option<Vec<f64>>,
    /// `halfspace:n₁,n₂[,n₃][@offset]`.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSection {
    #[serde(default = "default_calibration")]
    pub calibration: String,
    pub normal: Option<Vec<f64>>,
    #[serde(default = "default_competitors")]
    pub competitors: usize,
}

fn default_calibration() -> String {
    "halfspace".into()
}

fn default_competitors() -> usize {
    20
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSection {
    pub eps: Vec<f64>,
    /// Perturbation radius for the cross-term check; skipped when absent.
    pub perturb_radius: Option<f64>,
    #[serde(default = "default_flip")]
    pub flip_probability: f64,
}

fn default_flip() -> f64 {
    0.1
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestSection {
    /// Criteria to run; all when absent.
    pub only: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub output: Option<PathBuf>,
    pub kernel: Option<KernelSection>,
    pub domain: Option<DomainSection>,
    pub grid: Option<GridSection>,
    pub field: Option<FieldSection>,
    pub energy: Option<EnergySection>,
    pub minimize: Option<MinimizeSection>,
    pub calibrate: Option<CalibrateSection>,
    pub gamma: Option<GammaSection>,
    pub selftest: Option<SelftestSection>,
}

/// A config after overrides, with the exact text it was built from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub resolved_toml: String,
    /// Directory relative file paths are resolved against.
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.resolved_toml.as_bytes()))
    }
}

fn parse_override(raw: &str) -> CliResult<(Vec<String>, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{raw}` is not of the form key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::config(format!("override key `{key}` has an empty component")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> CliResult<()> {
    let (last, parents) = path.split_last().expect("nonempty key path");
    let mut node = table;
    for p in parents {
        let entry = node
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("`{p}` is not a section")))?;
    }
    node.insert(last.clone(), value);
    Ok(())
}

/// Parses `text` and applies overrides in order.
pub fn from_str(text: &str, overrides: &[String], base_dir: PathBuf) -> CliResult<Loaded> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::config(e.message().to_owned()))?;
    for raw in overrides {
        let (path, value) = parse_override(raw)?;
        apply_override(&mut table, &path, value)?;
    }
    let resolved_toml = toml::to_string(&table).map_err(CliError::config)?;
    let config = ExperimentConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| CliError::config(e.to_string().trim_end()))?;
    Ok(Loaded {
        config,
        resolved_toml,
        base_dir,
    })
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Loaded> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            from_str(&text, overrides, base)
        }
        None => from_str("", overrides, PathBuf::new()),
    }
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> CliResult<T> {
    v.clone().ok_or_else(|| CliError::config(format!("missing `{key}`")))
}

fn check_len(v: &[f64], dim: usize, key: &str) -> CliResult<()> {
    if v.len() == dim {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "`{key}` has {} components but the kernel dimension is {dim}",
            v.len()
        )))
    }
}

impl ExperimentConfig {
    /// Rejects sections that belong to a different task than `task`, plus
    /// dimension mismatches between sections.
    pub fn validate_for(&self, task: Task) -> CliResult<()> {
        let present = [
            (Task::Energy, self.energy.is_some()),
            (Task::Minimize, self.minimize.is_some()),
            (Task::Calibrate, self.calibrate.is_some()),
            (Task::Gamma, self.gamma.is_some()),
            (Task::Selftest, self.selftest.is_some()),
        ];
        for (t, here) in present {
            if here && t != task {
                return Err(CliError::config(format!(
                    "config has a [{}] section but the task is `{}`; one task per invocation",
                    t.name(),
                    task.name()
                )));
            }
        }
        if task == Task::Selftest {
            return Ok(());
        }
        let dim = self.kernel_section()?.dim;
        let d = self.domain_section()?;
        for (v, key) in [
            (&d.center, "domain.center"),
            (&d.lo, "domain.lo"),
            (&d.hi, "domain.hi"),
        ] {
            if let Some(v) = v {
                check_len(v, dim, key)?;
            }
        }
        if let Some(a) = &self.kernel_section()?.axis {
            check_len(a, dim, "kernel.axis")?;
        }
        if let Some(f) = &self.field {
            if let Some(n) = &f.normal {
                check_len(n, dim, "field.normal")?;
            }
        }
        if let Some(c) = &self.calibrate {
            if let Some(n) = &c.normal {
                check_len(n, dim, "calibrate.normal")?;
            }
        }
        self.grid_section()?;
        Ok(())
    }

    fn kernel_section(&self) -> CliResult<&KernelSection> {
        self.kernel.as_ref().ok_or_else(|| CliError::config("missing [kernel] section"))
    }

    fn domain_section(&self) -> CliResult<&DomainSection> {
        self.domain.as_ref().ok_or_else(|| CliError::config("missing [domain] section"))
    }

    fn grid_section(&self) -> CliResult<&GridSection> {
        self.grid.as_ref().ok_or_else(|| CliError::config("missing [grid] section"))
    }

    pub fn field_section(&self) -> CliResult<&FieldSection> {
        self.field.as_ref().ok_or_else(|| CliError::config("missing [field] section"))
    }

    /// The kernel before any `eps` rescaling.
    pub fn base_kernel(&self) -> CliResult<KernelSpec> {
        let k = self.kernel_section()?;
        let spec = match k.form.as_str() {
            "indicator" => KernelSpec::indicator(k.dim, require(&k.radius, "kernel.radius")?)?,
            "fractional" => {
                let s = require(&k.s, "kernel.s")?;
                let lambda = k.lambda.unwrap_or(1.0);
                let big_lambda = k.big_lambda.unwrap_or(lambda);
                let anisotropy = match &k.axis {
                    Some(axis) => Anisotropy::Quadratic {
                        axis: axis.clone(),
                        lambda,
                        big_lambda,
                    },
                    None if lambda == big_lambda => Anisotropy::Constant(lambda),
                    None => {
                        return Err(CliError::config(
                            "fractional kernel with lambda != big_lambda needs `kernel.axis`",
                        ))
                    }
                };
                KernelSpec::fractional(k.dim, s, anisotropy, lambda, big_lambda)?
            }
            other => {
                return Err(CliError::config(format!(
                    "unknown kernel form `{other}` (expected indicator or fractional)"
                )))
            }
        };
        Ok(spec)
    }

    pub fn kernel(&self) -> CliResult<KernelSpec> {
        let k = self.base_kernel()?;
        match self.kernel_section()?.eps {
            Some(e) => Ok(k.rescale(e)?),
            None => Ok(k),
        }
    }

    pub fn grid(&self) -> CliResult<Arc<Grid>> {
        let dim = self.kernel_section()?.dim;
        let d = self.domain_section()?;
        let spec = match d.shape.as_str() {
            "ball" => {
                let center = d.center.clone().unwrap_or_else(|| vec![0.0; dim]);
                DomainSpec::ball_with_margin(center, require(&d.radius, "domain.radius")?, d.margin)?
            }
            "box" => {
                let lo = require(&d.lo, "domain.lo")?;
                let hi = require(&d.hi, "domain.hi")?;
                let inner = nlperim_core::Aabb::new(lo.clone(), hi.clone())?;
                let outer = nlperim_core::Aabb::new(
                    lo.iter().map(|v| v - d.margin).collect(),
                    hi.iter().map(|v| v + d.margin).collect(),
                )?;
                DomainSpec::new(Shape::Box(inner), outer)?
            }
            other => return Err(CliError::config(format!("unknown domain shape `{other}` (expected ball or box)"))),
        };
        let spec = match d.tail_radius {
            Some(r) => spec.with_tail_radius(r)?,
            None => spec,
        };
        Ok(Grid::new(spec, self.grid_section()?.h)?)
    }

    pub fn field_normal(&self) -> CliResult<Option<Vec<f64>>> {
        Ok(self.field_section()?.normal.clone())
    }

    /// The field named by `[field]`: exterior cells are the datum.
    pub fn field(&self, grid: &Arc<Grid>, base_dir: &Path) -> CliResult<ScalarField> {
        let f = self.field_section()?;
        let halfspace = |offset: f64| -> CliResult<Option<ScalarField>> {
            match &f.normal {
                Some(n) => Ok(Some(indicator_halfspace(grid, n, offset)?)),
                None => Ok(None),
            }
        };
        match f.source.as_str() {
            "halfspace" => halfspace(f.offset)?.ok_or_else(|| CliError::config("halfspace field needs `field.normal`")),
            "constant" => {
                let v = require(&f.value, "field.value")?;
                match halfspace(f.offset)? {
                    Some(datum) => Ok(ScalarField::constant_interior(&datum, v)?),
                    None => Ok(ScalarField::from_fn(grid.clone(), |_| v)?),
                }
            }
            "random" => {
                let datum = halfspace(f.offset)?.ok_or_else(|| CliError::config("random field needs `field.normal` for its exterior"))?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Ok(ScalarField::with_datum(&datum, |_, _| rng.gen::<f64>())?)
            }
            "file" => {
                let p = require(&f.path, "field.path")?;
                let p = if p.is_relative() { base_dir.join(p) } else { p };
                if !p.exists() {
                    return Err(CliError::config(format!("field file {} does not exist", p.display())));
                }
                crate::io::read_field(&p, grid)
            }
            other => Err(CliError::config(format!(
                "unknown field source `{other}` (expected halfspace, constant, random or file)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[kernel]
form = "fractional"
dim = 2
s = 0.5

[domain]
radius = 1.0
margin = 0.5

[grid]
h = 0.125
"#;

    #[test]
    fn overrides_reach_nested_keys_and_change_the_hash() {
        let a = from_str(BASE, &[], PathBuf::new()).unwrap();
        let b = from_str(BASE, &["kernel.s=0.25".into(), "field.source=halfspace".into()], PathBuf::new()).unwrap();
        assert_eq!(b.config.kernel.as_ref().unwrap().s, Some(0.25));
        assert_eq!(b.config.field.as_ref().unwrap().source, "halfspace");
        assert_ne!(a.sha256(), b.sha256());
        let again = from_str(&b.resolved_toml, &[], PathBuf::new()).unwrap();
        assert_eq!(again.resolved_toml, b.resolved_toml);
    }

    #[test]
    fn fractional_order_is_checked() {
        let l = from_str(BASE, &["kernel.s=1.5".into()], PathBuf::new()).unwrap();
        let err = l.config.kernel().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("(0,1)"), "{err}");
    }

    #[test]
    fn rejects_typos_foreign_tasks_and_dimension_mismatch() {
        assert!(from_str(BASE, &["grid.hh=0.1".into()], PathBuf::new()).is_err());
        assert!(from_str(BASE, &["bogus".into()], PathBuf::new()).is_err());
        let l = from_str(BASE, &["gamma.eps=[0.2]".into()], PathBuf::new()).unwrap();
        assert!(l.config.validate_for(Task::Energy).is_err());
        assert!(l.config.validate_for(Task::Gamma).is_ok());
        let l = from_str(BASE, &["domain.center=[0.0]".into()], PathBuf::new()).unwrap();
        assert!(l.config.validate_for(Task::Energy).is_err());
    }
}
