//! Flat key-value experiment configuration.
//!
//! The grammar is one `key = value` pair per line. Keys are either bare
//! words (`experiment`) or a section and a name joined by a single dot
//! (`grid.N`). Values are scalars, words, or comma-separated lists; `#`
//! starts a comment anywhere on a line. Unknown keys are rejected so a
//! typo cannot silently fall back to a default.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use renewal_core::grid::InitKind;
use renewal_core::model::RateSpec;
use renewal_core::particles::InitLaw;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}:{line}: parse error: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{file}: field {field}: {msg}")]
    Field { file: String, field: String, msg: String },
    #[error("{file}: validation error: {msg}")]
    Validation { file: String, msg: String },
}

/// Which experiment a config drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Solve,
    Steady,
    Hierarchy,
    Doeblin,
    Particles,
    Couple,
    MkExact,
    UniformLimit,
}

impl Kind {
    fn parse(word: &str) -> Option<Kind> {
        Some(match word {
            "solve" => Kind::Solve,
            "steady" => Kind::Steady,
            "hierarchy" => Kind::Hierarchy,
            "doeblin" => Kind::Doeblin,
            "particles" => Kind::Particles,
            "couple" => Kind::Couple,
            "mk-exact" => Kind::MkExact,
            "uniform-limit" => Kind::UniformLimit,
            _ => return None,
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = match self {
            Kind::Solve => "solve",
            Kind::Steady => "steady",
            Kind::Hierarchy => "hierarchy",
            Kind::Doeblin => "doeblin",
            Kind::Particles => "particles",
            Kind::Couple => "couple",
            Kind::MkExact => "mk-exact",
            Kind::UniformLimit => "uniform-limit",
        };
        f.write_str(word)
    }
}

#[derive(Debug)]
struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Parsed key-value table with typed, consumption-tracked access.
#[derive(Debug)]
pub struct Raw {
    file: String,
    entries: BTreeMap<String, Entry>,
}

impl Raw {
    pub fn parse(text: &str, file: &str) -> Result<Raw, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            };
            let stripped = stripped.trim();
            if stripped.is_empty() {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or_else(|| ConfigError::Parse {
                file: file.into(),
                line,
                msg: format!("expected `key = value`, got `{stripped}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let valid_key = !key.is_empty()
                && key.matches('.').count() <= 1
                && key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-');
            if !valid_key {
                return Err(ConfigError::Parse {
                    file: file.into(),
                    line,
                    msg: format!("invalid key `{key}` (one dot, alphanumeric/_/- parts)"),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Parse {
                    file: file.into(),
                    line,
                    msg: format!("key `{key}` has an empty value"),
                });
            }
            if entries
                .insert(
                    key.to_string(),
                    Entry {
                        line,
                        value: value.to_string(),
                        used: false,
                    },
                )
                .is_some()
            {
                return Err(ConfigError::Parse {
                    file: file.into(),
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Raw {
            file: file.into(),
            entries,
        })
    }

    fn field_err(&self, field: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            file: self.file.clone(),
            field: field.into(),
            msg: msg.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<&str> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            e.value.as_str()
        })
    }

    pub fn str_opt(&mut self, key: &str) -> Option<String> {
        self.take(key).map(str::to_string)
    }

    pub fn str_req(&mut self, key: &str) -> Result<String, ConfigError> {
        self.str_opt(key)
            .ok_or_else(|| self.field_err(key, "missing required field"))
    }

    pub fn f64_opt(&mut self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let v = v.to_string();
                v.parse::<f64>()
                    .map(Some)
                    .map_err(|_| self.field_err(key, format!("`{v}` is not a number")))
            }
        }
    }

    pub fn f64_req(&mut self, key: &str) -> Result<f64, ConfigError> {
        self.f64_opt(key)?
            .ok_or_else(|| self.field_err(key, "missing required field"))
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_opt(&mut self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let v = v.to_string();
                v.parse::<usize>()
                    .map(Some)
                    .map_err(|_| self.field_err(key, format!("`{v}` is not a nonnegative integer")))
            }
        }
    }

    pub fn usize_req(&mut self, key: &str) -> Result<usize, ConfigError> {
        self.usize_opt(key)?
            .ok_or_else(|| self.field_err(key, "missing required field"))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => {
                let v = v.to_string();
                v.parse::<u64>()
                    .map_err(|_| self.field_err(key, format!("`{v}` is not a u64")))
            }
        }
    }

    pub fn f64_list_opt(&mut self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => {
                let v = v.to_string();
                let parsed: Result<Vec<f64>, _> =
                    v.split(',').map(|p| p.trim().parse::<f64>()).collect();
                parsed
                    .map(Some)
                    .map_err(|_| self.field_err(key, format!("`{v}` is not a comma list of numbers")))
            }
        }
    }

    pub fn f64_list_req(&mut self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.f64_list_opt(key)?
            .ok_or_else(|| self.field_err(key, "missing required field"))
    }

    pub fn usize_list_req(&mut self, key: &str) -> Result<Vec<usize>, ConfigError> {
        let v = self.str_req(key)?;
        let parsed: Result<Vec<usize>, _> =
            v.split(',').map(|p| p.trim().parse::<usize>()).collect();
        parsed.map_err(|_| self.field_err(key, format!("`{v}` is not a comma list of integers")))
    }

    /// Reject any key that was never consumed by the chosen experiment.
    fn finish(self) -> Result<(), ConfigError> {
        for (key, entry) in &self.entries {
            if !entry.used {
                return Err(ConfigError::Parse {
                    file: self.file.clone(),
                    line: entry.line,
                    msg: format!("unknown or unused key `{key}` for this experiment"),
                });
            }
        }
        Ok(())
    }
}

/// Grid block: number of times N, cells per axis M, cell width h.
#[derive(Clone, Copy, Debug)]
pub struct GridBlock {
    pub n: usize,
    pub m: usize,
    pub h: f64,
}

/// Solver block; `dt` must equal the grid width.
#[derive(Clone, Debug)]
pub struct SolverBlock {
    pub dt: f64,
    pub t_end: f64,
    pub snapshots: Vec<f64>,
    pub steady_tol: f64,
    pub steady_max_time: f64,
    pub init_rate: f64,
    /// Initial law override; product exponential at `init_rate` otherwise.
    pub init: Option<InitLaw<f64>>,
}

/// Tolerances for the PASS/FAIL bounds, in the units the bounds use.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Steady-state L1 error budget, in cells (bound = cells * h).
    pub steady_cells: f64,
    /// Discretization budget for convergence and hierarchy bounds, in cells.
    pub disc_cells: f64,
    /// Sigma-moment drift budget, in cells.
    pub sigma_cells: f64,
    /// Relative slack on the quadrature rate bound.
    pub quad_slack: f64,
    /// Absolute duality-gap budget for the exact transport solver.
    pub gap: f64,
    /// Mass-conservation drift budget per trajectory row.
    pub mass_drift: f64,
}

/// Particle block shared by the stochastic experiments.
#[derive(Clone, Debug)]
pub struct ParticleBlock {
    pub count: usize,
    pub seed: u64,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    pub init: InitLaw<f64>,
    pub init2: Option<InitLaw<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct TransportBlock {
    pub beta: f64,
    pub a: f64,
    pub exact_support: usize,
}

/// A fully validated experiment description.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub kind: Kind,
    pub spec: RateSpec<f64>,
    pub rate_kind: String,
    pub grid: Option<GridBlock>,
    /// State dimension for the grid-free particle experiments.
    pub dim: Option<usize>,
    pub solver: Option<SolverBlock>,
    pub particles: Option<ParticleBlock>,
    pub transport: Option<TransportBlock>,
    pub tol: Tolerances,
    pub hierarchy_k: Option<usize>,
    pub doeblin_n_max: Option<usize>,
    pub limit_n_list: Option<Vec<usize>>,
    pub out_dir: PathBuf,
}

fn rate_spec(raw: &mut Raw) -> Result<(RateSpec<f64>, String), ConfigError> {
    let kind = raw.str_req("rate.kind")?;
    let spec = match kind.as_str() {
        "constant" => RateSpec::constant(raw.f64_req("rate.value")?),
        "constants" => RateSpec::constants(&raw.f64_list_req("rate.values")?),
        "geometric" => RateSpec::geometric(raw.f64_req("rate.first")?, raw.f64_req("rate.ratio")?),
        "clamped_identity" => RateSpec::clamped_identity(
            raw.f64_req("rate.floor")?,
            raw.f64_req("rate.cap_ratio")?,
            raw.f64_req("rate.beta")?,
        ),
        other => {
            return Err(raw.field_err(
                "rate.kind",
                format!(
                    "unknown rate family `{other}` (constant, constants, geometric, clamped_identity)"
                ),
            ))
        }
    };
    let spec = spec.map_err(|e| raw.field_err("rate.kind", e.to_string()))?;
    Ok((spec, kind))
}

fn grid_block(raw: &mut Raw) -> Result<GridBlock, ConfigError> {
    Ok(GridBlock {
        n: raw.usize_req("grid.N")?,
        m: raw.usize_req("grid.M")?,
        h: raw.f64_req("grid.h")?,
    })
}

fn solver_block(raw: &mut Raw, grid: &GridBlock) -> Result<SolverBlock, ConfigError> {
    let dt = raw.f64_or("solver.dt", grid.h)?;
    if !(dt == grid.h) {
        return Err(ConfigError::Validation {
            file: raw.file.clone(),
            msg: format!(
                "the scheme requires solver.dt = grid.h (unit CFL); got dt = {dt}, h = {}",
                grid.h
            ),
        });
    }
    Ok(SolverBlock {
        dt,
        t_end: raw.f64_or("solver.t_end", 10.0)?,
        snapshots: raw.f64_list_opt("solver.snapshots")?.unwrap_or_default(),
        steady_tol: raw.f64_or("solver.steady_tol", 1e-6)?,
        steady_max_time: raw.f64_or("solver.steady_max_time", 300.0)?,
        init_rate: raw.f64_or("solver.init_rate", 1.0)?,
        init: init_law(raw, "solver.init", grid.n)?,
    })
}

fn tolerances(raw: &mut Raw) -> Result<Tolerances, ConfigError> {
    Ok(Tolerances {
        steady_cells: raw.f64_or("tol.steady_cells", 3.0)?,
        disc_cells: raw.f64_or("tol.disc_cells", 10.0)?,
        sigma_cells: raw.f64_or("tol.sigma_cells", 5.0)?,
        quad_slack: raw.f64_or("tol.quad_slack", 1e-9)?,
        gap: raw.f64_or("tol.gap", 1e-9)?,
        mass_drift: raw.f64_or("tol.mass_drift", 1e-12)?,
    })
}

fn init_law(raw: &mut Raw, prefix: &str, dim: usize) -> Result<Option<InitLaw<f64>>, ConfigError> {
    let key = format!("{prefix}_kind");
    let Some(kind) = raw.str_opt(&key) else {
        return Ok(None);
    };
    let law = match kind.as_str() {
        "origin" => InitLaw::Origin,
        "exp_gaps" => InitLaw::ExpGaps {
            rate: raw.f64_req(&format!("{prefix}_rate"))?,
        },
        "dirac" => InitLaw::DiracAges(raw.f64_list_req(&format!("{prefix}_ages"))?),
        "uniform_box" => {
            let lo = raw
                .f64_list_opt(&format!("{prefix}_lo"))?
                .unwrap_or_else(|| vec![0.0; dim]);
            let hi = raw.f64_list_req(&format!("{prefix}_hi"))?;
            InitLaw::UniformGapBox { lo, hi }
        }
        other => {
            return Err(raw.field_err(
                &key,
                format!("unknown initial law `{other}` (origin, exp_gaps, dirac, uniform_box)"),
            ))
        }
    };
    Ok(Some(law))
}

fn particle_block(
    raw: &mut Raw,
    dim: usize,
    need_second: bool,
) -> Result<ParticleBlock, ConfigError> {
    let init = init_law(raw, "particles.init", dim)?.unwrap_or(InitLaw::Origin);
    let init2 = init_law(raw, "particles.init2", dim)?;
    if need_second && init2.is_none() {
        return Err(raw.field_err(
            "particles.init2_kind",
            "this experiment compares two laws and needs a second initial law",
        ));
    }
    let checkpoints = raw
        .f64_list_opt("particles.t_checkpoints")?
        .unwrap_or_default();
    let t_end = raw.f64_opt("particles.t_end")?;
    let t_end = match t_end {
        Some(t) => t,
        None => checkpoints.iter().cloned().fold(0.0, f64::max),
    };
    Ok(ParticleBlock {
        count: raw.usize_req("particles.M")?,
        seed: raw.u64_or("particles.seed", 0)?,
        t_end,
        checkpoints,
        init,
        init2,
    })
}

fn transport_block(raw: &mut Raw) -> Result<TransportBlock, ConfigError> {
    Ok(TransportBlock {
        beta: raw.f64_req("transport.beta")?,
        a: raw.f64_req("transport.a")?,
        exact_support: raw.usize_or("transport.exact_support", 0)?,
    })
}

impl Experiment {
    /// Parse and validate a config file's text.
    pub fn from_text(text: &str, file: &str) -> Result<Experiment, ConfigError> {
        let mut raw = Raw::parse(text, file)?;
        let kind_word = raw.str_req("experiment")?;
        let kind = Kind::parse(&kind_word).ok_or_else(|| {
            raw.field_err("experiment", format!("unknown experiment kind `{kind_word}`"))
        })?;
        let (spec, rate_kind) = rate_spec(&mut raw)?;
        let out_dir = PathBuf::from(raw.str_opt("output.dir").unwrap_or_else(|| "out".into()));
        let tol = tolerances(&mut raw)?;

        let mut grid = None;
        let mut dim = None;
        let mut solver = None;
        let mut particles = None;
        let mut transport = None;
        let mut hierarchy_k = None;
        let mut doeblin_n_max = None;
        let mut limit_n_list = None;

        match kind {
            Kind::Solve | Kind::Steady | Kind::Hierarchy => {
                let g = grid_block(&mut raw)?;
                solver = Some(solver_block(&mut raw, &g)?);
                if kind == Kind::Hierarchy {
                    let k = raw.usize_req("hierarchy.K")?;
                    if k == 0 || k >= g.n {
                        return Err(raw.field_err(
                            "hierarchy.K",
                            format!("need 0 < K < grid.N = {}", g.n),
                        ));
                    }
                    hierarchy_k = Some(k);
                }
                grid = Some(g);
            }
            Kind::Doeblin => {
                doeblin_n_max = Some(raw.usize_req("doeblin.n_max")?);
            }
            Kind::Particles | Kind::Couple | Kind::MkExact => {
                let n = raw.usize_req("grid.N")?;
                let p = particle_block(&mut raw, n, kind != Kind::Particles)?;
                if kind != Kind::Particles {
                    transport = Some(transport_block(&mut raw)?);
                }
                if kind == Kind::Couple && p.checkpoints.is_empty() {
                    return Err(raw.field_err(
                        "particles.t_checkpoints",
                        "the coupling experiment needs at least one checkpoint",
                    ));
                }
                particles = Some(p);
                dim = Some(n);
            }
            Kind::UniformLimit => {
                limit_n_list = Some(raw.usize_list_req("limit.n_list")?);
            }
        }
        raw.finish()?;
        Ok(Experiment {
            kind,
            spec,
            rate_kind,
            grid,
            dim,
            solver,
            particles,
            transport,
            tol,
            hierarchy_k,
            doeblin_n_max,
            limit_n_list,
            out_dir,
        })
    }

    pub fn from_file(path: &Path) -> Result<Experiment, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Validation {
            file: path.display().to_string(),
            msg: format!("cannot read config: {e}"),
        })?;
        Self::from_text(&text, &path.display().to_string())
    }
}

/// Convert a particle init law to the matching density initializer.
pub fn init_kind_of(law: &InitLaw<f64>, dim: usize) -> InitKind<f64> {
    match law {
        InitLaw::Origin => InitKind::DiracAges(vec![0.0; dim]),
        InitLaw::ExpGaps { rate } => InitKind::ProductExponential { rate: *rate },
        InitLaw::DiracAges(ages) => InitKind::DiracAges(ages.clone()),
        InitLaw::UniformGapBox { lo, hi } => InitKind::UniformGapBox {
            lo: lo.clone(),
            hi: hi.clone(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steady_text() -> &'static str {
        "# sample\nexperiment = steady\nrate.kind = constant\nrate.value = 1.0\n\
         grid.N = 2\ngrid.M = 40\ngrid.h = 0.1\n"
    }

    #[test]
    fn parses_a_minimal_steady_config() {
        let exp = Experiment::from_text(steady_text(), "mem").unwrap();
        assert_eq!(exp.kind, Kind::Steady);
        let g = exp.grid.unwrap();
        assert_eq!((g.n, g.m), (2, 40));
        let s = exp.solver.unwrap();
        assert_eq!(s.dt, 0.1);
        assert_eq!(exp.tol.steady_cells, 3.0);
    }

    #[test]
    fn rejects_mismatched_dt_naming_the_constraint() {
        let text = format!("{}solver.dt = 0.2\n", steady_text());
        let err = Experiment::from_text(&text, "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("solver.dt = grid.h"), "{msg}");
    }

    #[test]
    fn parse_errors_name_file_and_line() {
        let err = Raw::parse("a = 1\nnonsense line\n", "conf.cfg").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conf.cfg:2"), "{msg}");
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = format!("{}grid.bogus = 3\n", steady_text());
        let err = Experiment::from_text(&text, "mem").unwrap_err();
        assert!(err.to_string().contains("grid.bogus"));
    }

    #[test]
    fn rejects_duplicate_keys_and_empty_values() {
        assert!(Raw::parse("a = 1\na = 2\n", "f").is_err());
        assert!(Raw::parse("a =\n", "f").is_err());
    }

    #[test]
    fn missing_required_field_is_named() {
        let err = Experiment::from_text("experiment = steady\n", "mem").unwrap_err();
        assert!(err.to_string().contains("rate.kind"));
    }

    #[test]
    fn comma_lists_and_comments_parse() {
        let text = "experiment = uniform-limit\nrate.kind = geometric\n\
                    rate.first = 0.4\nrate.ratio = 0.4 # tail\nlimit.n_list = 1, 2, 4\n";
        let exp = Experiment::from_text(text, "mem").unwrap();
        assert_eq!(exp.limit_n_list.unwrap(), vec![1, 2, 4]);
    }

    #[test]
    fn couple_requires_a_second_law_and_checkpoints() {
        let text = "experiment = couple\nrate.kind = clamped_identity\nrate.floor = 1.0\n\
                    rate.cap_ratio = 1.4\nrate.beta = 1.0\ntransport.beta = 1.0\ntransport.a = 0.4\n\
                    grid.N = 4\nparticles.M = 10\n\
                    particles.init_kind = origin\nparticles.t_checkpoints = 1, 2\n";
        let err = Experiment::from_text(text, "mem").unwrap_err();
        assert!(err.to_string().contains("init2"));
    }
}
