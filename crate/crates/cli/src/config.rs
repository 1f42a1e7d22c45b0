//! Experiment configuration shared by flags and config files.

use std::fs;
use std::path::Path;

use clap::{Args, ValueEnum};
use num_rational::BigRational;
use prcm_core::lattice::parse_cell_list;
use prcm_core::measure::parse_rational;
use prcm_core::{BoundaryCondition, Cell, Chain, Context, Convention, LatticeBox};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SWEEPS: u64 = 10_000;
pub const DEFAULT_BURN_IN: u64 = 1_000;
pub const DEFAULT_EP_SAMPLES: usize = 1_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoxConvention {
    #[default]
    Open,
    Closed,
}

impl From<BoxConvention> for Convention {
    fn from(c: BoxConvention) -> Convention {
        match c {
            BoxConvention::Open => Convention::Open,
            BoxConvention::Closed => Convention::Closed,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    #[default]
    Free,
    Wired,
    Plaquettes,
    WiredAtInfinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Density,
    Pressure,
    Wilson,
}

/// Every knob of every subcommand; unused fields are ignored.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentConfig {
    /// Ambient dimension; inferred from --box when omitted.
    #[arg(long)]
    pub d: Option<usize>,
    /// Plaquette dimension.
    #[arg(long)]
    pub i: Option<usize>,
    /// Coefficient modulus.
    #[arg(long)]
    pub q: Option<u64>,
    /// Plaquette probabilities as "a/b" or decimals, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<String>,
    /// Box extents, e.g. "0,2x0,3" for [0,2] x [0,3].
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub extents: Option<String>,
    #[arg(long, value_enum)]
    pub convention: Option<BoxConvention>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryKind>,
    /// Boundary cells for `plaquettes` / `wired-at-infinity`: inline cells
    /// separated by '|', or @path to a cell-list file.
    #[arg(long)]
    pub cells: Option<String>,
    /// Truncation radius for external boundary data.
    #[arg(long)]
    pub radius: Option<u32>,
    /// Largest plaquette count for exact enumeration.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Include the full probability table in `enumerate` reports.
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sweeps per chain, burn-in included.
    #[arg(long)]
    pub sweeps: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Observables: density, open:<cell>, null-homology, spin-indicator,
    /// spin-character. The cycle ones use --gamma.
    #[arg(long, value_delimiter = ',')]
    pub observe: Vec<String>,
    /// Cycle for Wilson observables: inline "coef cell" terms separated by
    /// '|', or @path to a chain file.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<String>,
    /// Fail a sampling run whose total variation to the exact law exceeds this.
    #[arg(long)]
    pub tv_threshold: Option<f64>,
    /// Inner box for `verify-conditioning`.
    #[arg(long)]
    pub inner_box: Option<String>,
    /// Annulus state as a bit string; every state is checked when omitted.
    #[arg(long)]
    pub annulus_state: Option<String>,
    /// Upper measure for `verify-holley` (defaults: wired, same p).
    #[arg(long, value_enum)]
    pub upper_boundary: Option<BoundaryKind>,
    #[arg(long)]
    pub upper_cells: Option<String>,
    #[arg(long)]
    pub upper_p: Option<String>,
    /// Random configurations for `verify-ep` when exhaustive checking is too large.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub quantity: Option<Quantity>,
    /// Report path; standard output when omitted.
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// A config file: flags plus the subcommand name.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub command: String,
    pub config: ExperimentConfig,
}

impl ConfigFile {
    /// Reads TOML, JSON, or a JSON report with an embedded `config`.
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let fail = |e: String| CliError::Usage(format!("{}: {e}", path.display()));
        let text = fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| fail(e.to_string()))?;
            ConfigFile::from_json(value).map_err(fail)
        } else {
            ConfigFile::from_toml(&text).map_err(fail)
        }
    }

    pub fn from_json(value: serde_json::Value) -> Result<ConfigFile, String> {
        let command = value.get("command").and_then(|c| c.as_str()).map(str::to_string);
        let mut inner = value.get("config").cloned().unwrap_or(value);
        let command = command.ok_or("missing \"command\"")?;
        if let Some(map) = inner.as_object_mut() {
            map.remove("command");
        }
        let config = serde_json::from_value(inner).map_err(|e| e.to_string())?;
        Ok(ConfigFile { command, config })
    }

    pub fn from_toml(text: &str) -> Result<ConfigFile, String> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        let command = match table.remove("command") {
            Some(toml::Value::String(c)) => c,
            _ => return Err("missing \"command\"".into()),
        };
        let config = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.to_string())?;
        Ok(ConfigFile { command, config })
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(&self.config).expect("config serializes");
        table.insert("command".into(), toml::Value::String(self.command.clone()));
        toml::to_string(&table).expect("table serializes")
    }
}

pub fn parse_box(s: &str, convention: Convention) -> Result<LatticeBox, CliError> {
    let bad = || CliError::Usage(format!("cannot read box {s:?}; expected e.g. 0,2x0,3"));
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for axis in s.trim().split('x') {
        let (a, b) = axis.split_once(',').ok_or_else(bad)?;
        lo.push(a.trim().parse::<i64>().map_err(|_| bad())?);
        hi.push(b.trim().parse::<i64>().map_err(|_| bad())?);
    }
    LatticeBox::primal(&lo, &hi, convention).map_err(|e| CliError::Usage(e.to_string()))
}

/// Inline text with '|' as line separator, or the contents of `@path`.
fn spec_text(spec: &str) -> Result<String, CliError> {
    match spec.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{path}: {e}"))),
        None => Ok(spec.replace('|', "\n")),
    }
}

pub fn parse_cells(spec: &str) -> Result<Vec<Cell>, CliError> {
    parse_cell_list(&spec_text(spec)?).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn parse_chain(spec: &str) -> Result<Chain, CliError> {
    spec_text(spec)?.parse().map_err(|e: prcm_core::LatticeError| CliError::Usage(e.to_string()))
}

fn boundary(kind: BoundaryKind, cells: Option<&str>) -> Result<BoundaryCondition, CliError> {
    let list = || cells.map(parse_cells).transpose().map(Option::unwrap_or_default);
    Ok(match kind {
        BoundaryKind::Free | BoundaryKind::Wired if cells.is_some() => {
            return Err(CliError::Usage("--cells only applies to plaquettes and wired-at-infinity".into()))
        }
        BoundaryKind::Free => BoundaryCondition::Free,
        BoundaryKind::Wired => BoundaryCondition::Wired,
        BoundaryKind::Plaquettes => BoundaryCondition::Plaquettes(list()?),
        BoundaryKind::WiredAtInfinity => BoundaryCondition::WiredAtInfinity(list()?),
    })
}

fn rational(s: &str) -> Result<BigRational, CliError> {
    parse_rational(s).map_err(|e| CliError::Usage(e.to_string()))
}

/// The configuration with defaults filled in and every field parsed.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub raw: ExperimentConfig,
    pub lattice_box: LatticeBox,
    pub i: usize,
    pub q: u64,
    pub ps: Vec<BigRational>,
    pub boundary: BoundaryCondition,
}

impl Resolved {
    pub fn new(raw: &ExperimentConfig) -> Result<Resolved, CliError> {
        let mut raw = raw.clone();
        let extents = raw.extents.clone().ok_or_else(|| CliError::Usage("--box is required".into()))?;
        let convention = *raw.convention.get_or_insert(BoxConvention::Open);
        let lattice_box = parse_box(&extents, convention.into())?;
        let d = *raw.d.get_or_insert(lattice_box.dim());
        if d != lattice_box.dim() {
            return Err(CliError::Usage(format!("--d {d} does not match the {}-dimensional box", lattice_box.dim())));
        }
        let i = *raw.i.get_or_insert(1);
        let q = *raw.q.get_or_insert(2);
        if raw.p.is_empty() {
            raw.p.push("1/2".into());
        }
        let ps = raw.p.iter().map(|s| rational(s)).collect::<Result<Vec<_>, _>>()?;
        let kind = *raw.boundary.get_or_insert(BoundaryKind::Free);
        let boundary = boundary(kind, raw.cells.as_deref())?;
        raw.seed.get_or_insert(0);
        raw.format.get_or_insert(Format::Json);
        let resolved = Resolved { raw, lattice_box, i, q, ps, boundary };
        for p in &resolved.ps {
            resolved.context(p)?;
        }
        Ok(resolved)
    }

    pub fn context(&self, p: &BigRational) -> Result<Context, CliError> {
        let mut ctx = Context::new(self.lattice_box.clone(), self.i, self.q, p.clone(), self.boundary.clone())
            .map_err(|e| CliError::Usage(e.to_string()))?;
        ctx.radius = self.raw.radius;
        Ok(ctx)
    }

    pub fn cap(&self) -> usize {
        self.raw.cap.unwrap_or(prcm_core::measure::DEFAULT_ENUMERATION_CAP)
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed.unwrap_or(0)
    }

    pub fn upper(&self, p: &BigRational) -> Result<Context, CliError> {
        let kind = self.raw.upper_boundary.unwrap_or(BoundaryKind::Wired);
        let bc = boundary(kind, self.raw.upper_cells.as_deref())?;
        let p = self.raw.upper_p.as_deref().map(rational).transpose()?.unwrap_or_else(|| p.clone());
        Context::new(self.lattice_box.clone(), self.i, self.q, p, bc).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn gamma(&self) -> Result<Chain, CliError> {
        let spec = self.raw.gamma.as_deref().ok_or_else(|| CliError::Usage("--gamma is required".into()))?;
        parse_chain(spec)
    }

    pub fn run_config(&self) -> Result<prcm_core::RunConfig, CliError> {
        let sweeps = self.raw.sweeps.unwrap_or(DEFAULT_SWEEPS);
        let burn_in = self.raw.burn_in.unwrap_or(DEFAULT_BURN_IN.min(sweeps / 10));
        if sweeps <= burn_in {
            return Err(CliError::Usage(format!("--sweeps ({sweeps}) must exceed --burn-in ({burn_in})")));
        }
        let chains = self.raw.chains.unwrap_or(1);
        if chains == 0 {
            return Err(CliError::Usage("--chains must be at least 1".into()));
        }
        Ok(prcm_core::RunConfig { sweeps, burn_in, seed: self.seed(), chains, histogram: false })
    }

    /// The raw config with every default written out, for reports.
    pub fn echo(&self) -> ExperimentConfig {
        let mut raw = self.raw.clone();
        if let Ok(rc) = self.run_config() {
            raw.sweeps = Some(rc.sweeps);
            raw.burn_in = Some(rc.burn_in);
            raw.chains = Some(rc.chains);
        }
        raw.cap.get_or_insert(self.cap());
        raw
    }
}
