use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use linkbn::baselines::SampleMode;
use linkbn::catalog::Schema;
use linkbn::method;

/// Flags shared by every subcommand. Anything left out falls back to the
/// config file, then to the built-in default.
#[derive(Args, Clone, Debug, Default)]
pub struct Flags {
    /// Schema file (JSON); relative data paths resolve against its directory.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,

    /// Model file written by `build`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Number of attributes each referenced relation exports.
    #[arg(short = 'k', long = "k", global = true, allow_negative_numbers = true)]
    pub k: Option<i64>,

    /// Per-edge override, `relation.fk=N`. Repeatable.
    #[arg(long = "k-edge", global = true, value_name = "EDGE=N")]
    pub k_edges: Vec<String>,

    /// Estimators to run: avi, sampling, correlated, k0, k1, ...
    #[arg(long = "methods", alias = "method", global = true, value_delimiter = ',')]
    pub methods: Vec<String>,

    /// Sampling rate in (0, 1].
    #[arg(long, global = true)]
    pub rate: Option<f64>,

    /// Seed for sampling and for the workload cap.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory of persisted samples to use instead of drawing new ones.
    #[arg(long, global = true)]
    pub samples: Option<PathBuf>,

    /// Clamp selectivities below at 1/(2 * join size) (default).
    #[arg(long, global = true, overrides_with = "no_clamp")]
    pub clamp: bool,

    /// Report raw selectivities, zeros included.
    #[arg(long = "no-clamp", global = true)]
    pub no_clamp: bool,

    /// Keep at most this many expanded queries.
    #[arg(long = "expand-cap", global = true)]
    pub expand_cap: Option<usize>,

    /// Worker threads for `bench`.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output file (`build`, `workload expand`) or directory (`bench`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Row cap for the exact oracle; larger joins are skipped.
    #[arg(long = "max-rows", global = true)]
    pub max_rows: Option<usize>,
}

/// Contents of a `--config` file (TOML). Keys mirror the long flags.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub k: Option<i64>,
    #[serde(default)]
    pub k_edges: BTreeMap<String, i64>,
    pub methods: Option<Vec<String>>,
    pub rate: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<PathBuf>,
    pub clamp: Option<bool>,
    pub expand_cap: Option<usize>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub max_rows: Option<usize>,
}

impl ConfigFile {
    /// Reads a config file. Relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut file: ConfigFile =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut file.schema, &mut file.model, &mut file.samples, &mut file.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// An estimator selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Avi,
    Sampling,
    Correlated,
    Linked(usize),
}

impl Method {
    pub fn sample_mode(self) -> Option<SampleMode> {
        match self {
            Method::Sampling => Some(SampleMode::Uniform),
            Method::Correlated => Some(SampleMode::Correlated),
            _ => None,
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            method::AVI => Ok(Method::Avi),
            method::SAMPLING => Ok(Method::Sampling),
            method::CORRELATED => Ok(Method::Correlated),
            _ => match s.strip_prefix('k').map(str::parse::<usize>) {
                Some(Ok(k)) => Ok(Method::Linked(k)),
                _ => bail!("unknown method `{s}` (expected avi, sampling, correlated or k<N>)"),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Avi => f.write_str(method::AVI),
            Method::Sampling => f.write_str(method::SAMPLING),
            Method::Correlated => f.write_str(method::CORRELATED),
            Method::Linked(k) => f.write_str(&method::linked(*k)),
        }
    }
}

pub const DEFAULT_METHODS: [Method; 6] = [
    Method::Avi,
    Method::Sampling,
    Method::Correlated,
    Method::Linked(0),
    Method::Linked(1),
    Method::Linked(2),
];

pub const DEFAULT_RATE: f64 = 0.01;

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub k: usize,
    /// `relation.fk` → k for that edge.
    pub k_edges: BTreeMap<String, usize>,
    /// Empty when none were asked for; each command picks its own default.
    pub methods: Vec<Method>,
    pub rate: f64,
    /// `None` leaves the workload file's own seed in place.
    pub seed: Option<u64>,
    pub samples: Option<PathBuf>,
    pub clamp: bool,
    pub expand_cap: Option<usize>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub max_rows: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: None,
            model: None,
            k: 1,
            k_edges: BTreeMap::new(),
            methods: Vec::new(),
            rate: DEFAULT_RATE,
            seed: None,
            samples: None,
            clamp: true,
            expand_cap: None,
            jobs: 1,
            out: None,
            max_rows: None,
        }
    }
}

fn non_negative(what: &str, k: i64) -> Result<usize> {
    if k < 0 {
        bail!("{what} must be >= 0, got {k}");
    }
    Ok(k as usize)
}

fn absolute(path: PathBuf) -> Result<PathBuf> {
    std::path::absolute(&path).with_context(|| format!("resolving {}", path.display()))
}

impl RunConfig {
    /// Layers flags over the config file over the defaults, validates, and
    /// makes every path absolute.
    pub fn resolve(file: Option<ConfigFile>, flags: &Flags) -> Result<RunConfig> {
        let file = file.unwrap_or_default();
        let mut cfg = RunConfig {
            schema: flags.schema.clone().or(file.schema),
            model: flags.model.clone().or(file.model),
            samples: flags.samples.clone().or(file.samples),
            out: flags.out.clone().or(file.out),
            ..RunConfig::default()
        };
        if let Some(k) = flags.k.or(file.k) {
            cfg.k = non_negative("k", k)?;
        }
        for (edge, k) in file.k_edges {
            cfg.k_edges.insert(edge.clone(), non_negative(&format!("k for {edge}"), k)?);
        }
        for spec in &flags.k_edges {
            let (edge, k) = spec
                .split_once('=')
                .with_context(|| format!("--k-edge expects relation.fk=N, got `{spec}`"))?;
            let k: i64 = k.trim().parse().with_context(|| format!("--k-edge {spec}: not a number"))?;
            cfg.k_edges.insert(edge.trim().to_string(), non_negative(&format!("k for {edge}"), k)?);
        }
        let names = if flags.methods.is_empty() {
            file.methods.unwrap_or_default()
        } else {
            flags.methods.clone()
        };
        for name in names.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            let m: Method = name.parse()?;
            if !cfg.methods.contains(&m) {
                cfg.methods.push(m);
            }
        }
        cfg.rate = flags.rate.or(file.rate).unwrap_or(DEFAULT_RATE);
        if !(cfg.rate > 0.0 && cfg.rate <= 1.0) {
            bail!("rate must be in (0, 1], got {}", cfg.rate);
        }
        cfg.seed = flags.seed.or(file.seed);
        cfg.clamp = if flags.no_clamp {
            false
        } else if flags.clamp {
            true
        } else {
            file.clamp.unwrap_or(true)
        };
        cfg.expand_cap = flags.expand_cap.or(file.expand_cap);
        cfg.jobs = flags.jobs.or(file.jobs).unwrap_or(1);
        if cfg.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        cfg.max_rows = flags.max_rows.or(file.max_rows);

        cfg.schema = cfg.schema.map(absolute).transpose()?;
        cfg.model = cfg.model.map(absolute).transpose()?;
        cfg.samples = cfg.samples.map(absolute).transpose()?;
        cfg.out = cfg.out.map(absolute).transpose()?;
        Ok(cfg)
    }

    pub fn schema_path(&self) -> Result<&Path> {
        self.schema.as_deref().context("--schema is required")
    }

    pub fn out_path(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required")
    }

    /// Copies the per-edge overrides into the schema declarations.
    pub fn apply_k_edges(&self, schema: &mut Schema) -> Result<()> {
        for (edge, &k) in &self.k_edges {
            let (relation, attribute) = edge
                .split_once('.')
                .with_context(|| format!("edge `{edge}` should read relation.fk"))?;
            let fk = schema
                .relations
                .iter_mut()
                .find(|r| r.name == relation)
                .and_then(|r| r.foreign_keys.iter_mut().find(|fk| fk.attribute == attribute))
                .with_context(|| format!("`{edge}` is not a foreign key of the schema"))?;
            fk.k = Some(k);
        }
        Ok(())
    }
}
