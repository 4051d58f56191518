//! Flat key-value run configuration with `[section]` headers.

use crate::error::{CoreError, Result};
use crate::grid::{Domain, Grid};
use crate::potential::{example_potential, linear_potential, PotentialSpec};
use crate::solver::{default_eps_schedule, KineticModel, Problem, SolveConfig};
use std::path::PathBuf;

/// Everything needed to reproduce a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub t: f64,
    pub l: f64,
    pub n: usize,
    pub g: f64,
    pub a: f64,
    pub nt: usize,
    pub nx: usize,
    pub theta: f64,
    pub beta: f64,
    pub eps_schedule: Vec<f64>,
    pub potential_name: String,
    /// Explicit shift; absent means "shift the example so s_V = 0".
    pub shift: Option<f64>,
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub ls_shrink: f64,
    pub ls_slope: f64,
    pub lm_shift0: f64,
    pub e_tilde: f64,
    /// Mixing threshold; absent means 10·√newton_tol.
    pub tau: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// T values for sweeps.
    pub t_list: Vec<f64>,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SolveConfig::default();
        RunConfig {
            t: 1.0,
            l: 1.0,
            n: 2,
            g: 1.0,
            a: 1.0,
            nt: 64,
            nx: 64,
            theta: 1.5,
            beta: 1.25,
            eps_schedule: default_eps_schedule(),
            potential_name: "example".into(),
            shift: None,
            newton_tol: s.newton_tol,
            max_newton_iters: s.max_newton_iters,
            ls_shrink: s.ls_shrink,
            ls_slope: s.ls_slope,
            lm_shift0: s.lm_shift0,
            e_tilde: 1e-3,
            tau: None,
            out_dir: None,
            seed: 0,
            t_list: vec![1.0, 2.0, 4.0],
            threads: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(line_no: usize, key: &str, val: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    val.parse().map_err(|e| {
        CoreError::InvalidInput(format!("line {line_no}: bad value for {key}: {e}"))
    })
}

fn parse_list(line_no: usize, key: &str, val: &str) -> Result<Vec<f64>> {
    val.split(',')
        .map(|s| parse_num(line_no, key, s.trim()))
        .collect()
}

impl RunConfig {
    /// Parse the flat `key = value` format; unknown keys are rejected with a
    /// line-anchored message.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, val) = line.split_once('=').ok_or_else(|| {
                CoreError::InvalidInput(format!("line {line_no}: expected `key = value`: {line}"))
            })?;
            let key = key.trim();
            let val = val.trim();
            match (section.as_str(), key) {
                ("domain", "T") => cfg.t = parse_num(line_no, key, val)?,
                ("domain", "L") => cfg.l = parse_num(line_no, key, val)?,
                ("domain", "n") => cfg.n = parse_num(line_no, key, val)?,
                ("domain", "g") => cfg.g = parse_num(line_no, key, val)?,
                ("domain", "A") => cfg.a = parse_num(line_no, key, val)?,
                ("grid", "Nt") => cfg.nt = parse_num(line_no, key, val)?,
                ("grid", "Nx") => cfg.nx = parse_num(line_no, key, val)?,
                ("regularization", "theta") => cfg.theta = parse_num(line_no, key, val)?,
                ("regularization", "beta") => cfg.beta = parse_num(line_no, key, val)?,
                ("regularization", "eps_schedule") => {
                    cfg.eps_schedule = parse_list(line_no, key, val)?
                }
                ("potential", "name") => cfg.potential_name = val.to_string(),
                ("potential", "shift") => cfg.shift = Some(parse_num(line_no, key, val)?),
                ("solver", "newton_tol") => cfg.newton_tol = parse_num(line_no, key, val)?,
                ("solver", "max_newton_iters") => {
                    cfg.max_newton_iters = parse_num(line_no, key, val)?
                }
                ("solver", "ls_shrink") => cfg.ls_shrink = parse_num(line_no, key, val)?,
                ("solver", "ls_slope") => cfg.ls_slope = parse_num(line_no, key, val)?,
                ("solver", "lm_shift0") => cfg.lm_shift0 = parse_num(line_no, key, val)?,
                ("diagnostics", "e_tilde") => cfg.e_tilde = parse_num(line_no, key, val)?,
                ("diagnostics", "tau") => cfg.tau = Some(parse_num(line_no, key, val)?),
                ("output", "dir") => cfg.out_dir = Some(PathBuf::from(val)),
                ("output", "seed") => cfg.seed = parse_num(line_no, key, val)?,
                ("sweep", "T_list") => cfg.t_list = parse_list(line_no, key, val)?,
                ("sweep", "threads") => cfg.threads = parse_num(line_no, key, val)?,
                _ => {
                    return Err(CoreError::InvalidInput(format!(
                        "line {line_no}: unknown key `{key}` in section `[{section}]`"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Re-validate every owning-module constraint.
    pub fn validate(&self) -> Result<()> {
        let dom = self.domain()?;
        Grid::new(self.nt, self.nx, &dom)?;
        self.solve_config().validate()?;
        crate::integrand::RegularizationParams::new(
            self.eps_schedule[0],
            self.theta,
            self.beta,
        )?;
        if self.e_tilde <= 0.0 {
            return Err(CoreError::InvalidInput("e_tilde must be > 0".into()));
        }
        match self.potential_name.as_str() {
            "example" | "linear" | "zero" => {}
            other => {
                return Err(CoreError::InvalidInput(format!("unknown potential `{other}`")))
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::new(self.t, self.l, self.n, self.g, self.a)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            eps_schedule: self.eps_schedule.clone(),
            newton_tol: self.newton_tol,
            max_newton_iters: self.max_newton_iters,
            ls_shrink: self.ls_shrink,
            ls_slope: self.ls_slope,
            lm_shift0: self.lm_shift0,
        }
    }

    /// Resolve the configured potential, applying the explicit shift or the
    /// s_V = 0 normalization.
    pub fn potential(&self) -> Result<PotentialSpec> {
        let dom = self.domain()?;
        let base = match self.potential_name.as_str() {
            "example" => example_potential(&dom),
            "linear" => linear_potential(&dom),
            "zero" => PotentialSpec::zero(),
            other => {
                return Err(CoreError::InvalidInput(format!("unknown potential `{other}`")))
            }
        };
        match self.shift {
            Some(s) => Ok(base.with_shift(s)),
            None => base.auto_shifted(&dom, 256),
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let dom = self.domain()?;
        let grid = Grid::new(self.nt, self.nx, &dom)?;
        Ok(Problem::new(dom, grid, self.potential()?, self.theta, self.beta)
            .with_kinetic(KineticModel::Extension))
    }

    pub fn mixing_tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| crate::analysis::default_mixing_tau(self.newton_tol))
    }
}
