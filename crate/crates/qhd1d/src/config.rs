//! Plain-text run configuration: `[section]` headers, `key = value` lines,
//! `#` comments. Parsing is strict: unknown sections or keys are rejected,
//! and every numeric range is validated against the solver preconditions
//! before any solver state is allocated.

use crate::analysis::{SmallnessGuards, SweepAxes, SweepConfig};
use crate::error::{QhdError, Result};
use crate::grid::Grid;
use crate::model::{DopingProfile, ModelParams, ProfileKind};
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct ProfileConfig {
    pub kind: String,
    pub rho_b: f64,
    pub amplitude: Option<f64>,
    pub delta0: Option<f64>,
    pub k: u32,
    pub s: [f64; 3],
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            kind: "constant".into(),
            rho_b: 1.0,
            amplitude: None,
            delta0: None,
            k: 1,
            s: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub theta_step: f64,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            tol: 1e-10,
            max_iter: 200,
            theta_step: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransientConfig {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub tail_fraction: f64,
    /// None means the production default sigma = 1e-4 h^2.
    pub sigma: Option<f64>,
    pub sigmas: Vec<f64>,
    pub init_composite: f64,
    pub seed: u64,
    pub separation: f64,
    pub growth_cap: f64,
}

impl Default for TransientConfig {
    fn default() -> Self {
        TransientConfig {
            dt: 1e-4,
            t_end: 1.0,
            sample_every: 100,
            tail_fraction: 0.5,
            sigma: None,
            sigmas: vec![1e-2, 1e-3, 1e-4],
            init_composite: 1e-6,
            seed: 42,
            separation: 1e-8,
            growth_cap: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepBlock {
    pub axes: SweepAxes,
    pub workers: usize,
    pub guards: SmallnessGuards,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock {
            axes: SweepAxes::default(),
            workers: 4,
            guards: SmallnessGuards::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: String,
    pub csv: bool,
    pub json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            csv: true,
            json: true,
        }
    }
}

/// Fully parsed configuration with per-section presence tracking.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub profile: ProfileConfig,
    pub grid_n: usize,
    pub steady: SteadyConfig,
    pub transient: TransientConfig,
    pub sweep: SweepBlock,
    pub output: OutputConfig,
    pub present: BTreeSet<String>,
}

impl RunConfig {
    pub fn parse_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QhdError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            grid_n: 201,
            ..RunConfig::default()
        };
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if ![
                    "model",
                    "profile",
                    "grid",
                    "steady",
                    "transient",
                    "sweep",
                    "output",
                ]
                .contains(&name.as_str())
                {
                    return Err(QhdError::Config(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                cfg.present.insert(name.clone());
                section = name;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                QhdError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set(&section, key, value).map_err(|e| {
                QhdError::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        let f = |v: &str| -> std::result::Result<f64, String> {
            v.parse::<f64>().map_err(|_| format!("bad number `{v}`"))
        };
        let u = |v: &str| -> std::result::Result<usize, String> {
            v.parse::<usize>().map_err(|_| format!("bad integer `{v}`"))
        };
        let list = |v: &str| -> std::result::Result<Vec<f64>, String> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad list `{v}`")))
                .collect()
        };
        match (section, key) {
            ("model", "nu") => self.model.nu = f(value)?,
            ("model", "epsilon") => self.model.epsilon = f(value)?,
            ("model", "tau") => self.model.tau = f(value)?,
            ("model", "mu") => self.model.mu = f(value)?,
            ("model", "lambda") => self.model.lambda = f(value)?,
            ("model", "j_b") => self.model.j_b = f(value)?,
            ("model", "v_b") => self.model.v_b = f(value)?,
            ("model", "sigma") => {
                if value == "auto" {
                    self.transient.sigma = None;
                } else {
                    let s = f(value)?;
                    self.model.sigma = s;
                    self.transient.sigma = Some(s);
                }
            }
            ("profile", "kind") => {
                if !["constant", "sine", "bump"].contains(&value) {
                    return Err(format!("unknown profile kind `{value}`"));
                }
                self.profile.kind = value.into();
            }
            ("profile", "rho_b") => self.profile.rho_b = f(value)?,
            ("profile", "amplitude") => self.profile.amplitude = Some(f(value)?),
            ("profile", "delta0") => self.profile.delta0 = Some(f(value)?),
            ("profile", "k") => self.profile.k = u(value)? as u32,
            ("profile", "s0") => self.profile.s[0] = f(value)?,
            ("profile", "s1") => self.profile.s[1] = f(value)?,
            ("profile", "s2") => self.profile.s[2] = f(value)?,
            ("grid", "n") => self.grid_n = u(value)?,
            ("steady", "tol") => self.steady.tol = f(value)?,
            ("steady", "max_iter") => self.steady.max_iter = u(value)?,
            ("steady", "theta_step") => self.steady.theta_step = f(value)?,
            ("transient", "dt") => self.transient.dt = f(value)?,
            ("transient", "t_end") => self.transient.t_end = f(value)?,
            ("transient", "sample_every") => self.transient.sample_every = u(value)?,
            ("transient", "tail_fraction") => self.transient.tail_fraction = f(value)?,
            ("transient", "sigmas") => self.transient.sigmas = list(value)?,
            ("transient", "init_composite") => self.transient.init_composite = f(value)?,
            ("transient", "seed") => {
                self.transient.seed = value.parse().map_err(|_| format!("bad seed `{value}`"))?
            }
            ("transient", "separation") => self.transient.separation = f(value)?,
            ("transient", "growth_cap") => self.transient.growth_cap = f(value)?,
            ("sweep", "nu") => self.sweep.axes.nu = list(value)?,
            ("sweep", "tau") => self.sweep.axes.tau = list(value)?,
            ("sweep", "mu") => self.sweep.axes.mu = list(value)?,
            ("sweep", "lambda") => self.sweep.axes.lambda = list(value)?,
            ("sweep", "delta0") => self.sweep.axes.delta0 = list(value)?,
            ("sweep", "j_b") => self.sweep.axes.j_b = list(value)?,
            ("sweep", "workers") => self.sweep.workers = u(value)?,
            ("sweep", "guard_margin") => self.sweep.guards.condition_guard = f(value)?,
            ("sweep", "delta0_max") => self.sweep.guards.delta0_max = f(value)?,
            ("sweep", "j_b_max") => self.sweep.guards.j_b_max = f(value)?,
            ("sweep", "init_max") => self.sweep.guards.init_composite_max = f(value)?,
            ("output", "dir") => self.output.dir = value.into(),
            ("output", "formats") => {
                self.output.csv = false;
                self.output.json = false;
                for part in value.split(',') {
                    match part.trim() {
                        "csv" => self.output.csv = true,
                        "json" => self.output.json = true,
                        other => return Err(format!("unknown format `{other}`")),
                    }
                }
            }
            ("", k) => return Err(format!("key `{k}` outside any section")),
            (s, k) => return Err(format!("unknown key `{k}` in section [{s}]")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.grid_n < Grid::MIN_NODES {
            return Err(QhdError::Config(format!(
                "grid n must be >= {}, got {}",
                Grid::MIN_NODES,
                self.grid_n
            )));
        }
        let t = &self.transient;
        for (name, v, lo) in [
            ("steady tol", self.steady.tol, 0.0),
            ("theta_step", self.steady.theta_step, 0.0),
            ("dt", t.dt, 0.0),
            ("t_end", t.t_end, 0.0),
            ("tail_fraction", t.tail_fraction, 0.0),
            ("init_composite", t.init_composite, 0.0),
            ("separation", t.separation, 0.0),
        ] {
            if !(v > lo) {
                return Err(QhdError::Config(format!("{name} must be > {lo}, got {v}")));
            }
        }
        if self.steady.theta_step > 1.0 || self.transient.tail_fraction > 1.0 {
            return Err(QhdError::Config(
                "theta_step and tail_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.transient.sample_every == 0 || self.steady.max_iter == 0 {
            return Err(QhdError::Config(
                "sample_every and max_iter must be positive".into(),
            ));
        }
        if !t.sigmas.is_empty()
            && !(t.sigmas.windows(2).all(|w| w[0] > w[1]) && t.sigmas.iter().all(|&s| s > 0.0))
        {
            return Err(QhdError::Config(
                "sigmas must be strictly decreasing and positive".into(),
            ));
        }
        if self.profile.kind == "sine" && self.profile.k == 0 {
            return Err(QhdError::Config("sine profile needs k >= 1".into()));
        }
        // the profile itself (positivity etc.) is validated on construction
        self.build_profile(&Grid::new(self.grid_n)?)?;
        Ok(())
    }

    /// Construct the doping profile on the run grid, resolving the
    /// delta0-targeted amplitude if requested.
    pub fn build_profile(&self, grid: &Arc<Grid>) -> Result<DopingProfile> {
        let p = &self.profile;
        let base = match p.kind.as_str() {
            "constant" => DopingProfile::constant(p.rho_b)?,
            "sine" => DopingProfile::sine(p.rho_b, p.amplitude.unwrap_or(1.0), p.k)?,
            "bump" => DopingProfile::bump(p.rho_b, p.amplitude.unwrap_or(1.0), p.s)?,
            other => return Err(QhdError::Config(format!("unknown profile kind `{other}`"))),
        };
        match (p.delta0, &base.kind) {
            (Some(d), ProfileKind::Constant) if d != 0.0 => Err(QhdError::Config(
                "constant profile cannot match a nonzero delta0".into(),
            )),
            (Some(d), ProfileKind::Constant) => {
                let _ = d;
                Ok(base)
            }
            (Some(d), _) => base.with_delta0(d, grid),
            (None, _) => Ok(base),
        }
    }

    /// Model parameters with the production sigma default resolved.
    pub fn resolved_params(&self) -> ModelParams {
        let h = 1.0 / (self.grid_n - 1) as f64;
        ModelParams {
            sigma: self.transient.sigma.unwrap_or(1e-4 * h * h),
            ..self.model
        }
    }

    pub fn require(&self, sections: &[&str]) -> Result<()> {
        for s in sections {
            if !self.present.contains(*s) {
                return Err(QhdError::Config(format!(
                    "subcommand requires a [{s}] section"
                )));
            }
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            base: self.resolved_params(),
            rho_b: self.profile.rho_b,
            profile_k: self.profile.k,
            grid_n: self.grid_n,
            steady_tol: self.steady.tol,
            steady_max_iter: self.steady.max_iter,
            theta_step: self.steady.theta_step,
            dt: self.transient.dt,
            t_end: self.transient.t_end,
            sample_every: self.transient.sample_every,
            tail_fraction: self.transient.tail_fraction,
            init_composite: self.transient.init_composite,
            seed: self.transient.seed,
            workers: self.sweep.workers,
            guards: self.sweep.guards,
        }
    }
}
