//! Run configuration: one TOML file per run, nested blocks, unknown keys
//! rejected, every numeric range checked at parse time.

use fptd_core::{Interval, JumpDensity, LevyExponent, Measure, Model};
use serde::{Deserialize, Serialize};

/// Raised for malformed configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_cm: Option<CheckCmTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyTask>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub psi: PsiConfig,
    #[serde(default)]
    pub killing: f64,
    pub gamma: GammaConfig,
    #[serde(default)]
    pub interval: IntervalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    /// One of `brownian`, `bm_drift`, `cpp_jump`; or give the triplet below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<f64>,
    /// `(size, rate)` atoms of the jump measure.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<(f64, f64)>,
    /// Exponential jump density `scale * e^{-decay r}` on `(0, cutoff]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp_density: Option<ExpDensityConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExpDensityConfig {
    pub scale: f64,
    pub decay: f64,
    #[serde(default = "default_density_cutoff")]
    pub cutoff: f64,
}

fn default_density_cutoff() -> f64 {
    40.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    /// One of `dirac0`, `lebesgue`, `lattice`; or give atoms/density below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Lebesgue preset: truncation (default 40) and bin count (default 40).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// `(location, mass)` atoms.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub origin: f64,
    pub spacing: f64,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    /// Absent means `inf I = -oo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default)]
    pub included: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolveTask {
    pub q: Vec<f64>,
    pub level: f64,
    pub x: Vec<f64>,
    /// `auto` routes by the shape of gamma; or one of `series`, `lattice`,
    /// `volterra`, `closed-levy`, `closed-csbp`.
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Grid for the density solvers, from the base point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

fn default_method() -> String {
    "auto".into()
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_k_max() -> usize {
    200
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub span: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct McTask {
    pub q: Vec<f64>,
    pub level: f64,
    pub x: Vec<f64>,
    pub n: usize,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_jump_cutoff")]
    pub jump_cutoff: f64,
    /// Dump a line-oriented trace of the first `trace_paths` paths.
    #[serde(default)]
    pub trace_paths: usize,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
}

fn default_trace_every() -> usize {
    100
}

fn default_budget() -> f64 {
    1e4
}

fn default_jump_cutoff() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareTask {
    #[serde(default = "default_z_threshold")]
    pub z_threshold: f64,
    #[serde(default = "default_pass_fraction")]
    pub pass_fraction: f64,
}

fn default_z_threshold() -> f64 {
    3.0
}

fn default_pass_fraction() -> f64 {
    0.95
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CheckCmTask {
    pub q: f64,
    pub level: f64,
    #[serde(default = "default_span")]
    pub span: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// `gamma-hat` (the model's 1/A) or the built-in negative control
    /// `one-plus-sin-squared` (A = 1 + sin^2, so 1/A is not cm).
    #[serde(default = "default_a_source")]
    pub a_source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

fn default_span() -> f64 {
    5.0
}

fn default_points() -> usize {
    64
}

fn default_max_order() -> usize {
    6
}

fn default_a_source() -> String {
    "gamma-hat".into()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ClassifyTask {
    pub q: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            prefix: default_prefix(),
        }
    }
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_prefix() -> String {
    "run".into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| bad(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if let Some(s) = &self.solve {
            for &q in &s.q {
                if q < 0.0 || !q.is_finite() {
                    return Err(bad("q must be positive"));
                }
            }
            if s.x.is_empty() {
                return Err(bad("solve.x must be non-empty"));
            }
            for &x in &s.x {
                if !x.is_finite() || x < s.level {
                    return Err(bad(format!(
                        "solve.x entries must be finite and >= level, got {x}"
                    )));
                }
            }
            if !(s.tolerance > 0.0) {
                return Err(bad("solve.tolerance must be positive"));
            }
            if s.k_max == 0 {
                return Err(bad("solve.k_max must be positive"));
            }
            if let Some(g) = &s.grid {
                if !(g.step > 0.0) || !(g.span > g.step) {
                    return Err(bad("solve.grid needs 0 < step < span"));
                }
            }
            match s.method.as_str() {
                "auto" | "series" | "lattice" | "volterra" | "closed-levy" | "closed-csbp" => {}
                other => return Err(bad(format!("unknown solve.method `{other}`"))),
            }
        }
        if let Some(m) = &self.mc {
            for &q in &m.q {
                if q < 0.0 || !q.is_finite() {
                    return Err(bad("q must be positive"));
                }
            }
            if m.x.is_empty() {
                return Err(bad("mc.x must be non-empty"));
            }
            for &x in &m.x {
                if !x.is_finite() || x <= m.level {
                    return Err(bad(format!("mc.x entries must exceed the level, got {x}")));
                }
            }
            if m.n < 100 {
                return Err(bad("mc.n must be at least 100"));
            }
            if !(m.dt > 0.0) {
                return Err(bad("mc.dt must be positive"));
            }
            if !(m.budget > 0.0) {
                return Err(bad("mc.budget must be positive"));
            }
            if !(m.jump_cutoff > 0.0) {
                return Err(bad("mc.jump_cutoff must be positive"));
            }
            if m.trace_every == 0 {
                return Err(bad("mc.trace_every must be positive"));
            }
        }
        if let Some(c) = &self.compare {
            if !(c.z_threshold > 0.0) {
                return Err(bad("compare.z_threshold must be positive"));
            }
            if !(c.pass_fraction > 0.0 && c.pass_fraction <= 1.0) {
                return Err(bad("compare.pass_fraction must lie in (0, 1]"));
            }
        }
        if let Some(k) = &self.check_cm {
            if k.q < 0.0 || !k.q.is_finite() {
                return Err(bad("q must be positive"));
            }
            if k.points < k.max_order + 1 {
                return Err(bad("check_cm.points must exceed max_order"));
            }
            if !(k.span > 0.0) {
                return Err(bad("check_cm.span must be positive"));
            }
            match k.a_source.as_str() {
                "gamma-hat" | "one-plus-sin-squared" => {}
                other => return Err(bad(format!("unknown check_cm.a_source `{other}`"))),
            }
        }
        if let Some(c) = &self.classify {
            if c.q <= 0.0 || !c.q.is_finite() {
                return Err(bad("q must be positive"));
            }
        }
        if !(self.model.killing >= 0.0) || !self.model.killing.is_finite() {
            return Err(bad("model.killing must be nonnegative"));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<Model, ConfigError> {
        let psi = build_psi(&self.model.psi)?;
        let gamma = build_gamma(&self.model.gamma)?;
        let interval = match self.model.interval.lower {
            None => Interval::WHOLE_LINE,
            Some(l) => Interval::half_line(l, self.model.interval.included),
        };
        Model::new(psi, self.model.killing, gamma, interval)
            .map_err(|e| bad(format!("invalid model: {e}")))
    }
}

fn build_psi(cfg: &PsiConfig) -> Result<LevyExponent, ConfigError> {
    if let Some(name) = &cfg.preset {
        if cfg.drift.is_some() || cfg.gaussian.is_some() || !cfg.jumps.is_empty() {
            return Err(bad(
                "model.psi: give either a preset or a triplet, not both",
            ));
        }
        return match name.as_str() {
            "brownian" => Ok(fptd_core::presets::brownian()),
            "bm_drift" => Ok(fptd_core::presets::brownian_with_drift()),
            "cpp_jump" => Ok(fptd_core::presets::compound_poisson()),
            other => Err(bad(format!("unknown psi preset `{other}`"))),
        };
    }
    let drift = cfg.drift.unwrap_or(0.0);
    let gaussian = cfg.gaussian.unwrap_or(0.0);
    let density = match &cfg.exp_density {
        None => None,
        Some(d) => {
            if !(d.scale > 0.0) || !(d.decay > 0.0) || !(d.cutoff > 0.0) {
                return Err(bad(
                    "model.psi.exp_density needs positive scale, decay, cutoff",
                ));
            }
            let (scale, decay) = (d.scale, d.decay);
            Some(
                JumpDensity::new(move |r: f64| scale * (-decay * r).exp(), 0.0, d.cutoff)
                    .map_err(|e| bad(format!("invalid jump density: {e}")))?,
            )
        }
    };
    LevyExponent::new(drift, gaussian, cfg.jumps.clone(), density)
        .map_err(|e| bad(format!("invalid psi: {e}")))
}

fn build_gamma(cfg: &GammaConfig) -> Result<Measure, ConfigError> {
    if let Some(name) = &cfg.preset {
        if !cfg.atoms.is_empty() || cfg.density.is_some() {
            return Err(bad(
                "model.gamma: give either a preset or explicit parts, not both",
            ));
        }
        return match name.as_str() {
            "dirac0" => Ok(fptd_core::presets::gamma_dirac_zero()),
            "lebesgue" => {
                let z_max = cfg.z_max.unwrap_or(40.0);
                let bins = cfg.bins.unwrap_or(40);
                if !(z_max > 0.0) || bins == 0 {
                    return Err(bad("gamma lebesgue preset needs z_max > 0 and bins > 0"));
                }
                fptd_core::presets::gamma_lebesgue(z_max, bins)
                    .map_err(|e| bad(format!("invalid gamma: {e}")))
            }
            "lattice" => Ok(fptd_core::presets::gamma_single_atom(1.0, 1.0)),
            other => Err(bad(format!("unknown gamma preset `{other}`"))),
        };
    }
    if cfg.z_max.is_some() || cfg.bins.is_some() {
        return Err(bad("gamma.z_max/bins apply to the lebesgue preset only"));
    }
    let mut gamma = Measure::from_atoms(cfg.atoms.clone())
        .map_err(|e| bad(format!("invalid gamma atoms: {e}")))?;
    if let Some(d) = &cfg.density {
        let grid = Measure::from_grid(d.origin, d.spacing, d.masses.clone())
            .map_err(|e| bad(format!("invalid gamma density: {e}")))?;
        gamma = gamma
            .add(&grid)
            .map_err(|e| bad(format!("invalid gamma: {e}")))?;
    }
    if gamma.is_zero() {
        return Err(bad("model.gamma must be non-zero"));
    }
    Ok(gamma)
}
