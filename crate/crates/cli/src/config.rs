//! Experiment config, schema version 1.

use std::path::Path;

use rumorlab::criteria_line::IndexedLawFamily;
use rumorlab::dist::{check_standing_assumption, OffspringLaw, RadiusLaw, SiteLaw, StationLaw};
use rumorlab::estimator::{CriteriaSettings, Process, Scenario, DEFAULT_EXTINCTION_TOL};
use rumorlab::sim_line::LineLaws;
use rumorlab::sim_tree::DEFAULT_NODE_BUDGET;
use rumorlab::Outcome;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub master_seed: u64,
    /// Monte Carlo replicates per cell; 0 skips simulation.
    #[serde(default)]
    pub replicates: u64,
    /// Line length or tree depth reached for a success.
    pub horizon: u64,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub criteria: Option<CriteriaConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
    pub cells: Vec<CellConfig>,
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolConfig {
    #[default]
    Annealed,
    Quenched {
        #[serde(rename = "envSeed")]
        env_seed: u64,
    },
    QuenchedPanel {
        size: usize,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CriteriaConfig {
    pub horizon: u64,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_band() -> f64 {
    rumorlab::criteria_line::DEFAULT_BAND
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_json")]
    pub json: String,
    #[serde(default = "default_plot")]
    pub plot: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            csv: default_csv(),
            json: default_json(),
            plot: default_plot(),
        }
    }
}

fn default_csv() -> String {
    "report.csv".into()
}
fn default_json() -> String {
    "report.json".into()
}
fn default_plot() -> String {
    "plot.tsv".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Line,
    GwTree,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CellConfig {
    pub id: String,
    pub graph: GraphKind,
    pub process: Process,
    #[serde(default)]
    pub n_law: Option<StationLaw>,
    #[serde(default)]
    pub r_law: Option<RadiusLaw>,
    #[serde(default)]
    pub offspring: Option<OffspringLaw>,
    /// Heterogeneous line: phase i % P governs site i.
    #[serde(default)]
    pub family: Option<IndexedLawFamily>,
    #[serde(default)]
    pub forced_zero: Option<[u32; 2]>,
    #[serde(default)]
    pub node_budget: Option<u64>,
    #[serde(default)]
    pub expected: Option<Outcome>,
    #[serde(default)]
    pub extinction_tol: Option<f64>,
    #[serde(default)]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub replicates: Option<u64>,
}

impl CellConfig {
    pub fn extinction_tol(&self) -> f64 {
        self.extinction_tol.unwrap_or(DEFAULT_EXTINCTION_TOL)
    }

    fn site(&self) -> Result<SiteLaw, CliError> {
        let n = self
            .n_law
            .clone()
            .ok_or_else(|| self.err("nLaw is required"))?;
        let r = self
            .r_law
            .clone()
            .ok_or_else(|| self.err("rLaw is required"))?;
        n.validate().map_err(|e| self.err(e))?;
        r.validate().map_err(|e| self.err(e))?;
        check_standing_assumption(&n, &r).map_err(|e| self.err(e))?;
        Ok(SiteLaw::new(n, r))
    }

    fn err(&self, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("cell '{}': {msg}", self.id))
    }

    /// Builds and validates the scenario.
    pub fn scenario(&self) -> Result<Scenario, CliError> {
        match self.graph {
            GraphKind::Line => {
                if self.offspring.is_some()
                    || self.forced_zero.is_some()
                    || self.node_budget.is_some()
                {
                    return Err(self
                        .err("offspring, forcedZero and nodeBudget apply to gw-tree cells only"));
                }
                let laws = match &self.family {
                    Some(f) => {
                        if self.n_law.is_some() || self.r_law.is_some() {
                            return Err(self.err("give either family or nLaw/rLaw, not both"));
                        }
                        f.validate().map_err(|e| self.err(e))?;
                        LineLaws::Family(f.clone())
                    }
                    None => LineLaws::Homogeneous(self.site()?),
                };
                Ok(Scenario::Line {
                    process: self.process,
                    laws,
                })
            }
            GraphKind::GwTree => {
                if self.family.is_some() {
                    return Err(self.err("family applies to line cells only"));
                }
                let offspring = self
                    .offspring
                    .clone()
                    .ok_or_else(|| self.err("offspring is required for gw-tree"))?;
                let budget = self.node_budget.unwrap_or(DEFAULT_NODE_BUDGET);
                if budget == 0 {
                    return Err(self.err("nodeBudget must be >= 1"));
                }
                Ok(Scenario::Tree {
                    process: self.process,
                    site: self.site()?,
                    offspring,
                    forced_zero: self.forced_zero.map(|[a, b]| (a, b)),
                    node_budget: budget,
                })
            }
        }
    }
}

impl ExperimentConfig {
    pub fn criteria_settings(&self) -> CriteriaSettings {
        match self.criteria {
            Some(c) => CriteriaSettings {
                horizon: c.horizon,
                band: c.band,
                tol: c.tol,
            },
            None => CriteriaSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<Vec<Scenario>, CliError> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.cells.is_empty() {
            return Err(CliError::Config("cells must not be empty".into()));
        }
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be >= 1".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(CliError::Config("confidence must lie in (0, 1)".into()));
        }
        if let Some(c) = self.criteria {
            if c.horizon < 10 || !(c.band > 0.0) || !(c.tol > 0.0) {
                return Err(CliError::Config(
                    "criteria needs horizon >= 10, band > 0, tol > 0".into(),
                ));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for c in &self.cells {
            if !ids.insert(c.id.as_str()) {
                return Err(CliError::Config(format!("duplicate cell id '{}'", c.id)));
            }
        }
        self.cells.iter().map(CellConfig::scenario).collect()
    }
}

pub fn read_raw(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse(raw: Value) -> Result<ExperimentConfig, CliError> {
    serde_json::from_value(raw).map_err(|e| CliError::Config(e.to_string()))
}

/// Sets the field at a dotted path (object keys or array indices) inside `v`.
pub fn set_path(v: &mut Value, path: &str, new: Value) -> Result<(), CliError> {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(m) => {
                if last {
                    if !m.contains_key(*p) {
                        return Err(CliError::Config(format!("axis '{path}': no field '{p}'")));
                    }
                    m.insert(p.to_string(), new);
                    return Ok(());
                }
                m.get_mut(*p)
                    .ok_or_else(|| CliError::Config(format!("axis '{path}': no field '{p}'")))?
            }
            Value::Array(a) => {
                let k: usize = p.parse().map_err(|_| {
                    CliError::Config(format!("axis '{path}': '{p}' is not an index"))
                })?;
                let len = a.len();
                let slot = a.get_mut(k).ok_or_else(|| {
                    CliError::Config(format!("axis '{path}': index {k} out of {len}"))
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Config(format!(
                    "axis '{path}': '{p}' is not inside an object"
                )))
            }
        };
    }
    Err(CliError::Config("empty axis".into()))
}

/// A sweep value as a JSON number, integral when it reads as one.
pub fn number(s: &str) -> Result<Value, CliError> {
    let s = s.trim();
    if let Ok(i) = s.parse::<u64>() {
        return Ok(Value::from(i));
    }
    let x: f64 = s
        .parse()
        .map_err(|_| CliError::Config(format!("sweep value '{s}' is not a number")))?;
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .ok_or_else(|| CliError::Config(format!("sweep value '{s}' is not finite")))
}
