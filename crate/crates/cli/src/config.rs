//! Sectioned `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Read(#[from] ini::Error),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key {0}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue { key: String, value: String, reason: String },
    #[error("override must look like section.key=value, got {0:?}")]
    BadOverride(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kappa {
    Critical,
    Value(f64),
}

impl Kappa {
    pub fn value(self) -> f64 {
        match self {
            Kappa::Critical => std::f64::consts::FRAC_1_SQRT_2,
            Kappa::Value(k) => k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SweepScale {
    Bradlow,
    Absolute,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n1: usize,
    pub n2: usize,
    pub len1: f64,
    pub len2: f64,
    pub degree: u32,

    pub tau: f64,
    pub kappa: Kappa,

    pub grad_tol: f64,
    pub max_iter: usize,
    pub newton_max_iter: usize,
    pub irreducible_tol: f64,
    pub vortex_tol: f64,
    pub seed: u64,
    pub init_amplitude: f64,
    pub hessian_check: bool,

    pub spectrum_k: usize,

    pub hessian_count: usize,
    pub hessian_input: Option<PathBuf>,

    pub level: usize,
    pub t_list: Vec<f64>,
    pub refine: bool,
    pub nonlinear: bool,

    pub certify_input: Option<PathBuf>,
    pub threshold_c: f64,
    pub roughness_cut: f64,
    pub kernel_count: usize,

    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_points: usize,
    pub sweep_scale: SweepScale,

    pub output_dir: PathBuf,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n1: 32,
            n2: 32,
            len1: 1.0,
            len2: 1.0,
            degree: 1,
            tau: 8.0 * std::f64::consts::PI,
            kappa: Kappa::Critical,
            grad_tol: 1e-8,
            max_iter: 20000,
            newton_max_iter: 60,
            irreducible_tol: 1e-4,
            vortex_tol: 1e-2,
            seed: 1,
            init_amplitude: 1.0,
            hessian_check: false,
            spectrum_k: 8,
            hessian_count: 8,
            hessian_input: None,
            level: 2,
            t_list: vec![0.1],
            refine: false,
            nonlinear: false,
            certify_input: None,
            threshold_c: 10.0,
            roughness_cut: 1.0,
            kernel_count: 16,
            sweep_start: 0.5,
            sweep_stop: 2.0,
            sweep_points: 16,
            sweep_scale: SweepScale::Bradlow,
            output_dir: PathBuf::from("out"),
            threads: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Read(ini::Error::Parse(e)))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (k, v) in props.iter() {
                cfg.set(section, k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(ini::Error::Io(e)))?;
        Self::from_str(&text)
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadOverride(spec.to_string());
        let (path, value) = spec.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        self.set(section, key, value)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let full = format!("{section}.{key}");
        let k = full.as_str();
        match (section, key) {
            ("lattice", "n1") => self.n1 = parse(k, value)?,
            ("lattice", "n2") => self.n2 = parse(k, value)?,
            ("lattice", "len1") => self.len1 = parse(k, value)?,
            ("lattice", "len2") => self.len2 = parse(k, value)?,
            ("lattice", "degree") => self.degree = parse(k, value)?,
            ("coupling", "tau") => self.tau = parse(k, value)?,
            ("coupling", "kappa") => {
                self.kappa = if value.trim() == "critical" { Kappa::Critical } else { Kappa::Value(parse(k, value)?) }
            }
            ("solver", "grad_tol") => self.grad_tol = parse(k, value)?,
            ("solver", "max_iter") => self.max_iter = parse(k, value)?,
            ("solver", "newton_max_iter") => self.newton_max_iter = parse(k, value)?,
            ("solver", "irreducible_tol") => self.irreducible_tol = parse(k, value)?,
            ("solver", "vortex_tol") => self.vortex_tol = parse(k, value)?,
            ("solver", "seed") => self.seed = parse(k, value)?,
            ("solver", "init_amplitude") => self.init_amplitude = parse(k, value)?,
            ("solver", "hessian_check") => self.hessian_check = parse(k, value)?,
            ("spectrum", "k") => self.spectrum_k = parse(k, value)?,
            ("hessian", "count") => self.hessian_count = parse(k, value)?,
            ("hessian", "input") => self.hessian_input = parse_path(value),
            ("bifurcate", "level") => self.level = parse(k, value)?,
            ("bifurcate", "t_list") => self.t_list = parse_list(k, value)?,
            ("bifurcate", "refine") => self.refine = parse(k, value)?,
            ("bifurcate", "nonlinear") => self.nonlinear = parse(k, value)?,
            ("certify", "input") => self.certify_input = parse_path(value),
            ("certify", "threshold_c") => self.threshold_c = parse(k, value)?,
            ("certify", "roughness_cut") => self.roughness_cut = parse(k, value)?,
            ("certify", "count") => self.kernel_count = parse(k, value)?,
            ("sweep", "start") => self.sweep_start = parse(k, value)?,
            ("sweep", "stop") => self.sweep_stop = parse(k, value)?,
            ("sweep", "points") => self.sweep_points = parse(k, value)?,
            ("sweep", "scale") => {
                self.sweep_scale = match value.trim() {
                    "bradlow" => SweepScale::Bradlow,
                    "absolute" => SweepScale::Absolute,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: full.clone(),
                            value: other.to_string(),
                            reason: "expected bradlow or absolute".into(),
                        })
                    }
                }
            }
            ("output", "dir") => self.output_dir = PathBuf::from(value.trim()),
            ("output", "threads") => self.threads = parse(k, value)?,
            ("lattice" | "coupling" | "solver" | "spectrum" | "hessian" | "bifurcate" | "certify" | "sweep" | "output", _) => {
                return Err(ConfigError::UnknownKey(full))
            }
            _ => return Err(ConfigError::UnknownSection(section.to_string())),
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let kappa = match self.kappa {
            Kappa::Critical => "critical".to_string(),
            Kappa::Value(k) => format!("{k:?}"),
        };
        let scale = match self.sweep_scale {
            SweepScale::Bradlow => "bradlow",
            SweepScale::Absolute => "absolute",
        };
        let _ = write!(
            s,
            "[lattice]\nn1 = {}\nn2 = {}\nlen1 = {:?}\nlen2 = {:?}\ndegree = {}\n\n",
            self.n1, self.n2, self.len1, self.len2, self.degree
        );
        let _ = write!(s, "[coupling]\ntau = {:?}\nkappa = {}\n\n", self.tau, kappa);
        let _ = write!(
            s,
            "[solver]\ngrad_tol = {:?}\nmax_iter = {}\nnewton_max_iter = {}\nirreducible_tol = {:?}\nvortex_tol = {:?}\nseed = {}\ninit_amplitude = {:?}\nhessian_check = {}\n\n",
            self.grad_tol,
            self.max_iter,
            self.newton_max_iter,
            self.irreducible_tol,
            self.vortex_tol,
            self.seed,
            self.init_amplitude,
            self.hessian_check
        );
        let _ = write!(s, "[spectrum]\nk = {}\n\n", self.spectrum_k);
        let _ = write!(s, "[hessian]\ncount = {}\ninput = {}\n\n", self.hessian_count, fmt_path(&self.hessian_input));
        let _ = write!(
            s,
            "[bifurcate]\nlevel = {}\nt_list = {}\nrefine = {}\nnonlinear = {}\n\n",
            self.level,
            fmt_list(&self.t_list),
            self.refine,
            self.nonlinear
        );
        let _ = write!(
            s,
            "[certify]\ninput = {}\nthreshold_c = {:?}\nroughness_cut = {:?}\ncount = {}\n\n",
            fmt_path(&self.certify_input),
            self.threshold_c,
            self.roughness_cut,
            self.kernel_count
        );
        let _ = write!(
            s,
            "[sweep]\nstart = {:?}\nstop = {:?}\npoints = {}\nscale = {}\n\n",
            self.sweep_start, self.sweep_stop, self.sweep_points, scale
        );
        let _ = write!(s, "[output]\ndir = {}\nthreads = {}\n", self.output_dir.display(), self.threads);
        s
    }

    /// SHA-256 of the canonical form without the `[output]` section,
    /// which does not affect results.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = self.canonical();
        let body = text.split("[output]").next().unwrap_or(&text);
        Sha256::digest(body.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
