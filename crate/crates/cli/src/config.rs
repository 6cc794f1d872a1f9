//! Run configuration: flat `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, ValueEnum};
use treeloc_core::disorder::DisorderDensity;
use treeloc_core::kernel::Quadrature;
use treeloc_core::thresholds::Method;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    RdeDiag,
    Eigen,
    Profile,
    Cavity,
    Threshold,
    Table,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::RdeDiag => "rde-diag",
            Command::Eigen => "eigen",
            Command::Profile => "profile",
            Command::Cavity => "cavity",
            Command::Threshold => "threshold",
            Command::Table => "table",
        })
    }
}

/// Every option, as raw text. Validation happens after merging with the
/// config file so that all problems can be reported together.
#[derive(Debug, Parser)]
#[command(name = "treeloc", version, allow_negative_numbers = true, about = "Localization thresholds of the Anderson model on regular trees")]
pub struct Cli {
    pub command: Command,
    /// Flat `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub methods: Option<String>,
    /// uniform[:w], cauchy[:gamma] or file:<path>.
    #[arg(long)]
    pub disorder: Option<String>,
    #[arg(long)]
    pub tail_power: Option<String>,
    /// Branching number or range `a..b`.
    #[arg(long = "K")]
    pub k: Option<String>,
    #[arg(long = "E")]
    pub e: Option<String>,
    #[arg(long)]
    pub s: Option<String>,
    #[arg(long)]
    pub t: Option<String>,
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub g_bracket: Option<String>,
    #[arg(long)]
    pub g_steps: Option<String>,
    #[arg(long)]
    pub grid_n: Option<String>,
    #[arg(long)]
    pub x_max: Option<String>,
    #[arg(long)]
    pub x_min_factor: Option<String>,
    /// Kernel quadrature: midpoint or cell.
    #[arg(long)]
    pub quadrature: Option<String>,
    /// Pool size, or a comma-separated list for the cavity route.
    #[arg(long)]
    pub pool_size: Option<String>,
    /// Sweep count, or a comma-separated list for the cavity route.
    #[arg(long)]
    pub sweeps: Option<String>,
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub burn_in_frac: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub z_max: Option<String>,
    #[arg(long)]
    pub tol: Option<String>,
    #[arg(long)]
    pub power_tol: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub dump_kernel: Option<String>,
    #[arg(long, action = ArgAction::SetTrue)]
    pub with_cavity: bool,
    /// Record the wall-clock duration in output headers.
    #[arg(long, action = ArgAction::SetTrue)]
    pub timing: bool,
}

/// Keys accepted in config files (flags with `-` replaced by `_`).
pub const KEYS: &[&str] = &[
    "method",
    "methods",
    "disorder",
    "tail_power",
    "K",
    "E",
    "s",
    "t",
    "g",
    "g_bracket",
    "g_steps",
    "grid_n",
    "x_max",
    "x_min_factor",
    "quadrature",
    "pool_size",
    "sweeps",
    "seeds",
    "burn_in_frac",
    "samples",
    "z_max",
    "tol",
    "power_tol",
    "seed",
    "threads",
    "out",
    "dump_kernel",
    "with_cavity",
    "timing",
];

/// Configuration problems, one message per violation.
#[derive(Debug, thiserror::Error)]
pub struct ConfigError {
    pub violations: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// The coupling given on the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CouplingArg {
    Hopping(f64),
    Scaled(f64),
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub disorder: DisorderDensity,
    pub ks: Vec<usize>,
    pub energy: f64,
    pub s: f64,
    pub coupling: Option<CouplingArg>,
    pub methods: Vec<Method>,
    pub g_bracket: Option<(f64, f64)>,
    pub g_steps: usize,
    pub grid_n: Option<usize>,
    pub x_max: Option<f64>,
    pub x_min_factor: Option<f64>,
    pub quadrature: Option<Quadrature>,
    pub pool_sizes: Option<Vec<usize>>,
    pub sweeps: Option<Vec<usize>>,
    pub seeds: Option<usize>,
    pub burn_in_frac: Option<f64>,
    pub samples: Option<usize>,
    pub z_max: Option<f64>,
    pub tol: Option<f64>,
    pub power_tol: Option<f64>,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub dump_kernel: Option<PathBuf>,
    pub with_cavity: bool,
    pub timing: bool,
    /// The merged key/value entries, for output headers.
    pub entries: BTreeMap<String, String>,
}

/// Parses a flat config file into key/value pairs.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { violations: vec![format!("cannot read config file {}: {e}", path.display())] })?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    let mut violations = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                let key = k.trim().to_string();
                if !KEYS.contains(&key.as_str()) {
                    violations.push(format!("unknown key {key:?} on config line {}", i + 1));
                } else {
                    map.insert(key, v.trim().to_string());
                }
            }
            None => violations.push(format!("config line {} is not `key = value`", i + 1)),
        }
    }
    if violations.is_empty() {
        Ok(map)
    } else {
        Err(ConfigError { violations })
    }
}

fn flag_entries(cli: &Cli) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: &Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v.clone());
        }
    };
    put("method", &cli.method);
    put("methods", &cli.methods);
    put("disorder", &cli.disorder);
    put("tail_power", &cli.tail_power);
    put("K", &cli.k);
    put("E", &cli.e);
    put("s", &cli.s);
    put("t", &cli.t);
    put("g", &cli.g);
    put("g_bracket", &cli.g_bracket);
    put("g_steps", &cli.g_steps);
    put("grid_n", &cli.grid_n);
    put("x_max", &cli.x_max);
    put("x_min_factor", &cli.x_min_factor);
    put("quadrature", &cli.quadrature);
    put("pool_size", &cli.pool_size);
    put("sweeps", &cli.sweeps);
    put("seeds", &cli.seeds);
    put("burn_in_frac", &cli.burn_in_frac);
    put("samples", &cli.samples);
    put("z_max", &cli.z_max);
    put("tol", &cli.tol);
    put("power_tol", &cli.power_tol);
    put("seed", &cli.seed);
    put("threads", &cli.threads);
    put("out", &cli.out);
    put("dump_kernel", &cli.dump_kernel);
    if cli.with_cavity {
        m.insert("with_cavity".into(), "true".into());
    }
    if cli.timing {
        m.insert("timing".into(), "true".into());
    }
    m
}

/// Parses `argv` (including the program name), merges the optional config
/// file named by `--config` (flags win) and validates the result.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| ConfigError { violations: vec![e.to_string()] })?;
    let mut entries = match &cli.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    entries.extend(flag_entries(&cli));
    validate(cli.command, entries)
}

struct Validator<'a> {
    entries: &'a BTreeMap<String, String>,
    violations: Vec<String>,
}

impl<'a> Validator<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let raw = self.raw(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.violations.push(format!("{key} must be {what}, got {raw:?}"));
                None
            }
        }
    }

    fn real(&mut self, key: &str, ok: impl Fn(f64) -> bool, rule: &str) -> Option<f64> {
        let v: f64 = self.parse(key, "a real number")?;
        if !v.is_finite() || !ok(v) {
            self.violations.push(format!("{key} must be {rule}"));
            return None;
        }
        Some(v)
    }

    fn int(&mut self, key: &str, min: usize, rule: &str) -> Option<usize> {
        let raw = self.raw(key)?;
        let Some(v) = parse_count(raw) else {
            self.violations.push(format!("{key} must be a non-negative integer, got {raw:?}"));
            return None;
        };
        if v < min {
            self.violations.push(format!("{key} must be {rule}"));
            return None;
        }
        Some(v)
    }

    fn int_list(&mut self, key: &str, min: usize, rule: &str) -> Option<Vec<usize>> {
        let raw = self.raw(key)?;
        let mut out = Vec::new();
        for part in raw.split(',') {
            match parse_count(part.trim()) {
                Some(v) if v >= min => out.push(v),
                _ => {
                    self.violations.push(format!("{key} must be {rule}, got {raw:?}"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn boolean(&mut self, key: &str) -> bool {
        match self.raw(key) {
            None => false,
            Some("true") | Some("1") | Some("yes") => true,
            Some("false") | Some("0") | Some("no") => false,
            Some(other) => {
                self.violations.push(format!("{key} must be true or false, got {other:?}"));
                false
            }
        }
    }
}

/// Integer counts may be written as `100000` or `1e5`.
fn parse_count(s: &str) -> Option<usize> {
    if let Ok(v) = s.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = s.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < 1e15).then_some(v as usize)
}

fn parse_k_range(raw: &str) -> Option<Vec<i64>> {
    match raw.split_once("..") {
        Some((a, b)) => {
            let (a, b): (i64, i64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            (a <= b).then(|| (a..=b).collect())
        }
        None => raw.split(',').map(|p| p.trim().parse().ok()).collect(),
    }
}

/// Builds the disorder law from its textual description.
pub fn parse_disorder(raw: &str, tail_power: f64) -> Result<DisorderDensity, String> {
    let (name, arg) = match raw.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (raw, None),
    };
    let param = |default: f64| -> Result<f64, String> {
        match arg {
            None => Ok(default),
            Some(a) => a.parse::<f64>().map_err(|_| format!("disorder parameter {a:?} is not a number")),
        }
    };
    match name {
        "uniform" => DisorderDensity::uniform(param(1.0)?).map_err(|e| e.to_string()),
        "cauchy" => DisorderDensity::cauchy(param(1.0)?).map_err(|e| e.to_string()),
        "file" => match arg {
            Some(path) => DisorderDensity::from_file(Path::new(path), tail_power).map_err(|e| e.to_string()),
            None => Err("file disorder needs a path: file:<path>".into()),
        },
        other => Err(format!("disorder must be uniform, cauchy or file:<path>, got {other:?}")),
    }
}

/// Validates merged entries for `command`.
pub fn validate(command: Command, entries: BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
    let mut v = Validator { entries: &entries, violations: Vec::new() };

    let tail_power = v.real("tail_power", |x| x > 1.0, "> 1").unwrap_or(2.0);
    let disorder = match v.raw("disorder") {
        None => {
            v.violations.push("missing required field: disorder".into());
            None
        }
        Some(raw) => match parse_disorder(raw, tail_power) {
            Ok(d) => Some(d),
            Err(e) => {
                v.violations.push(e);
                None
            }
        },
    };

    let ks = match v.raw("K") {
        None => {
            v.violations.push("missing required field: K".into());
            Vec::new()
        }
        Some(raw) => match parse_k_range(raw) {
            None => {
                v.violations.push(format!("K must be an integer, a list or a range a..b, got {raw:?}"));
                Vec::new()
            }
            Some(list) if list.iter().any(|&k| k < 2) => {
                v.violations.push("K must be ≥ 2".into());
                Vec::new()
            }
            Some(list) if list.iter().any(|&k| k > 100_000) => {
                v.violations.push("K must be ≤ 100000".into());
                Vec::new()
            }
            Some(list) => list.into_iter().map(|k| k as usize).collect(),
        },
    };
    if matches!(command, Command::Profile | Command::Cavity | Command::RdeDiag) && ks.len() > 1 {
        v.violations.push(format!("{command} takes a single K"));
    }

    let energy = v.real("E", |_| true, "finite").unwrap_or(0.0);
    let s = v.real("s", |x| x > 0.0 && x <= 2.0, "in (0, 2]").unwrap_or(1.0);
    let t = v.real("t", |x| x > 0.0, "> 0");
    let g = v.real("g", |x| x > 0.0, "> 0");
    let coupling = match (t, g) {
        (Some(_), Some(_)) => {
            v.violations.push("give either t or g, not both".into());
            None
        }
        (Some(t), None) => Some(CouplingArg::Hopping(t)),
        (None, Some(g)) => Some(CouplingArg::Scaled(g)),
        (None, None) => None,
    };
    if matches!(command, Command::Profile | Command::Cavity | Command::RdeDiag)
        && coupling.is_none()
        && !entries.contains_key("t")
        && !entries.contains_key("g")
    {
        v.violations.push(format!("missing required field: t or g (needed by {command})"));
    }

    let mut methods = Vec::new();
    let method_list = match command {
        Command::Table => Some(v.raw("methods").unwrap_or("A,B,D,E")),
        Command::Threshold => match v.raw("method") {
            Some(m) => Some(m),
            None => {
                v.violations.push("missing required field: method".into());
                None
            }
        },
        _ => Some(v.raw("method").unwrap_or("A")),
    };
    if let Some(list) = method_list {
        for part in list.split(',') {
            match part.parse::<Method>() {
                Ok(Method::Asymptotic) | Err(_) => v.violations.push(format!("method must be one of A, B, C, D, E, got {part:?}")),
                Ok(m) => methods.push(m),
            }
        }
    }
    if matches!(command, Command::Eigen | Command::Profile) && methods.iter().any(|m| !matches!(m, Method::A | Method::B)) {
        v.violations.push(format!("{command} supports methods A and B only"));
    }
    if command == Command::Threshold && methods.len() > 1 {
        v.violations.push("threshold takes a single method; use table for several".into());
    }
    let with_cavity = v.boolean("with_cavity");
    if command == Command::Table && with_cavity && !methods.contains(&Method::C) {
        methods.push(Method::C);
        methods.sort();
    }

    let g_bracket = match v.raw("g_bracket") {
        None => None,
        Some(raw) => {
            let parts: Vec<Option<f64>> = raw.split(',').map(|p| p.trim().parse().ok()).collect();
            match parts.as_slice() {
                [Some(a), Some(b)] if *a > 0.0 && b > a => Some((*a, *b)),
                _ => {
                    v.violations.push(format!("g_bracket must be lo,hi with 0 < lo < hi, got {raw:?}"));
                    None
                }
            }
        }
    };
    let g_steps = v.int("g_steps", 2, "≥ 2").unwrap_or(9);
    let grid_n = v.int("grid_n", 64, "≥ 64");
    let x_max = v.real("x_max", |x| x > 0.0, "> 0");
    let x_min_factor = v.real("x_min_factor", |x| x > 0.0, "> 0");
    let quadrature = match v.raw("quadrature") {
        None => None,
        Some("midpoint") => Some(Quadrature::Midpoint),
        Some("cell") => Some(Quadrature::CellIntegrated),
        Some(other) => {
            v.violations.push(format!("quadrature must be midpoint or cell, got {other:?}"));
            None
        }
    };
    let pool_sizes = v.int_list("pool_size", 1000, "≥ 1000 (or a list of such)");
    let sweeps = v.int_list("sweeps", 1, "≥ 1 (or a list of such)");
    let seeds = v.int("seeds", 1, "≥ 1");
    let burn_in_frac = v.real("burn_in_frac", |x| (0.0..1.0).contains(&x), "in [0, 1)");
    let samples = v.int("samples", 1000, "≥ 1000");
    let z_max = v.real("z_max", |x| x > 0.0, "> 0");
    let tol = v.real("tol", |x| x > 0.0, "> 0");
    let power_tol = v.real("power_tol", |x| x > 0.0, "> 0");
    let seed = v.parse::<u64>("seed", "a non-negative integer").unwrap_or(DEFAULT_SEED);
    let threads = v.int("threads", 1, "≥ 1").unwrap_or(1);
    let out = PathBuf::from(v.raw("out").map(str::to_string).unwrap_or_else(|| format!("{command}.csv")));
    let dump_kernel = v.raw("dump_kernel").map(PathBuf::from);
    let timing = v.boolean("timing");

    if !v.violations.is_empty() {
        return Err(ConfigError { violations: v.violations });
    }
    Ok(RunConfig {
        command,
        disorder: disorder.expect("validated"),
        ks,
        energy,
        s,
        coupling,
        methods,
        g_bracket,
        g_steps,
        grid_n,
        x_max,
        x_min_factor,
        quadrature,
        pool_sizes,
        sweeps,
        seeds,
        burn_in_frac,
        samples,
        z_max,
        tol,
        power_tol,
        seed,
        threads,
        out,
        dump_kernel,
        with_cavity,
        timing,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        std::iter::once("treeloc".to_string()).chain(s.split_whitespace().map(String::from)).collect()
    }

    #[test]
    fn threshold_flags_are_valid() {
        let c = parse_config(argv("threshold --method B --disorder uniform --K 2 --E 0 --seed 7")).unwrap();
        assert_eq!(c.command, Command::Threshold);
        assert_eq!(c.methods, vec![Method::B]);
        assert_eq!(c.ks, vec![2]);
        assert_eq!(c.seed, 7);
    }

    #[test]
    fn k_below_two_is_named() {
        let err = parse_config(argv("threshold --method B --disorder uniform --K 1")).unwrap_err();
        assert!(err.violations.iter().any(|v| v == "K must be ≥ 2"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let err = parse_config(argv("threshold --K 1 --grid-n 3 --tol -1")).unwrap_err();
        let text = err.to_string();
        for needle in ["disorder", "K must be ≥ 2", "grid_n", "tol", "method"] {
            assert!(text.contains(needle), "{needle} missing from {text}");
        }
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = parse_config_text("grid_n = 10\ngrdi_n = 20\n").unwrap_err();
        assert_eq!(err.violations.len(), 1);
        assert!(err.violations[0].contains("grdi_n"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let m = parse_config_text("# header\n\nK = 2..4  # range\nE=0\n").unwrap();
        assert_eq!(m["K"], "2..4");
        assert_eq!(m["E"], "0");
    }

    #[test]
    fn default_seed_is_fixed() {
        let c = parse_config(argv("table --disorder cauchy --K 2..3")).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.ks, vec![2, 3]);
        assert_eq!(c.methods, vec![Method::A, Method::B, Method::D, Method::E]);
    }

    #[test]
    fn pool_lists_and_scientific_counts() {
        let c = parse_config(argv("table --disorder uniform --K 2 --pool-size 1e4,3e4,100000 --with-cavity")).unwrap();
        assert_eq!(c.pool_sizes, Some(vec![10_000, 30_000, 100_000]));
        assert!(c.methods.contains(&Method::C));
    }
}
