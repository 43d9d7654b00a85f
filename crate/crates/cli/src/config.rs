//! Run configuration: defaults, an optional JSON file, then flags.

use crate::error::CliError;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Test hooks for `verify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    SignFlip,
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the defaults in `RunConfig::default`.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any of the fields below; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of sampled phase points
    #[arg(long)]
    pub count: Option<usize>,
    /// Lower bound on |v·n|/|v| at the relevant boundary point, in (0, 1)
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub speed_min: Option<f64>,
    #[arg(long)]
    pub speed_max: Option<f64>,
    /// Time value; repeat for several
    #[arg(long = "t")]
    pub t: Vec<f64>,
    /// Built-in initial-data family
    #[arg(long)]
    pub family: Option<String>,
    /// JSON polynomial spec, used instead of --family
    #[arg(long)]
    pub poly_spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output path; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_bounces: Option<usize>,
    /// Derivative order for `bounds`
    #[arg(long)]
    pub order: Option<u8>,
    /// Pass/fail threshold on absolute residuals for `check`
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub count: usize,
    pub margin: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub t: Vec<f64>,
    pub family: String,
    pub poly_spec: Option<PathBuf>,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub max_bounces: usize,
    pub order: u8,
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 1000,
            margin: disk_billiard::sample::DEFAULT_MARGIN,
            speed_min: 0.5,
            speed_max: 2.0,
            t: Vec::new(),
            family: "bump_radial_gauss".into(),
            poly_spec: None,
            format: Format::Csv,
            out: None,
            max_bounces: disk_billiard::flow::DEFAULT_MAX_BOUNCES,
            order: 1,
            threshold: 1e-10,
        }
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let mut c = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = args.seed {
            c.seed = s;
        }
        if let Some(n) = args.count {
            c.count = n;
        }
        if let Some(m) = args.margin {
            c.margin = m;
        }
        if let Some(s) = args.speed_min {
            c.speed_min = s;
        }
        if let Some(s) = args.speed_max {
            c.speed_max = s;
        }
        if !args.t.is_empty() {
            c.t = args.t.clone();
        }
        if let Some(f) = &args.family {
            c.family = f.clone();
            c.poly_spec = None;
        }
        if let Some(p) = &args.poly_spec {
            c.poly_spec = Some(p.clone());
        }
        if let Some(f) = args.format {
            c.format = f;
        }
        if let Some(o) = &args.out {
            c.out = Some(o.clone());
        }
        if let Some(m) = args.max_bounces {
            c.max_bounces = m;
        }
        if let Some(o) = args.order {
            c.order = o;
        }
        if let Some(t) = args.threshold {
            c.threshold = t;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.count < 1 {
            return bad("count must be at least 1".into());
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return bad(format!("margin must lie in (0, 1), got {}", self.margin));
        }
        if !(self.speed_min > 0.0 && self.speed_min.is_finite() && self.speed_max.is_finite()) {
            return bad("speeds must be positive and finite".into());
        }
        if self.speed_max < self.speed_min {
            return bad(format!("speed range [{}, {}] is empty", self.speed_min, self.speed_max));
        }
        if let Some(t) = self.t.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return bad(format!("time values must be finite and nonnegative, got {t}"));
        }
        if self.max_bounces < 1 {
            return bad("max-bounces must be at least 1".into());
        }
        if self.order != 1 && self.order != 2 {
            return bad(format!("order must be 1 or 2, got {}", self.order));
        }
        if !(self.threshold >= 0.0) {
            return bad(format!("threshold must be nonnegative, got {}", self.threshold));
        }
        Ok(())
    }

    pub fn speed_range(&self) -> (f64, f64) {
        (self.speed_min, self.speed_max)
    }

    /// `t` values, or `default` when none were given.
    pub fn times_or(&self, default: &[f64]) -> Vec<f64> {
        if self.t.is_empty() {
            default.to_vec()
        } else {
            self.t.clone()
        }
    }
}
