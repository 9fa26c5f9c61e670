//! Report rows. The CSV column order below is frozen; new columns go at the end.

use std::path::Path;

use rumorlab::estimator::Estimate;
use rumorlab::verdict::ext_real;
use rumorlab::Verdict;
use serde::Serialize;

use crate::CliError;

pub const CSV_COLUMNS: [&str; 30] = [
    "id",
    "graph",
    "process",
    "protocol",
    "env_seed",
    "master_seed",
    "horizon",
    "theorem_tag",
    "outcome",
    "criterion_value",
    "threshold",
    "margin",
    "horizon_used",
    "margin_note",
    "expected",
    "unexpected",
    "successes",
    "trials",
    "exhausted",
    "point_estimate",
    "wilson_lo",
    "wilson_hi",
    "confidence",
    "mismatch",
    "oracle",
    "mc_lower",
    "mc_upper",
    "panel_size",
    "panel_positive",
    "axis_value",
];

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Row {
    pub id: String,
    pub graph: String,
    pub process: String,
    pub protocol: String,
    pub env_seed: Option<u64>,
    pub master_seed: u64,
    pub horizon: u64,
    pub verdict: Verdict,
    pub expected: Option<String>,
    pub unexpected: bool,
    pub estimate: Option<Estimate>,
    pub mismatch: bool,
    pub oracle: Option<f64>,
    pub mc_lower: Option<f64>,
    pub mc_upper: Option<f64>,
    pub panel_size: Option<usize>,
    pub panel_positive: Option<usize>,
    /// Sweep axis value, when the row comes from a sweep.
    pub axis_value: Option<String>,
    pub wall_seconds: f64,
}

fn real(x: f64) -> String {
    ext_real::format(x)
}

fn opt<T>(x: Option<T>, f: impl Fn(T) -> String) -> String {
    x.map(f).unwrap_or_default()
}

impl Row {
    fn csv_fields(&self) -> Vec<String> {
        let v = &self.verdict;
        let e = self.estimate.as_ref();
        vec![
            self.id.clone(),
            self.graph.clone(),
            self.process.clone(),
            self.protocol.clone(),
            opt(self.env_seed, |s| s.to_string()),
            self.master_seed.to_string(),
            self.horizon.to_string(),
            v.theorem_tag.clone(),
            v.outcome.to_string(),
            real(v.criterion_value),
            real(v.threshold),
            real(v.margin),
            v.horizon_used.to_string(),
            v.margin_note.clone(),
            self.expected.clone().unwrap_or_default(),
            self.unexpected.to_string(),
            opt(e, |e| e.successes.to_string()),
            opt(e, |e| e.trials.to_string()),
            opt(e, |e| e.exhausted.to_string()),
            opt(e, |e| real(e.point_estimate)),
            opt(e, |e| real(e.wilson_lo)),
            opt(e, |e| real(e.wilson_hi)),
            opt(e, |e| real(e.confidence)),
            self.mismatch.to_string(),
            opt(self.oracle, real),
            opt(self.mc_lower, real),
            opt(self.mc_upper, real),
            opt(self.panel_size, |s| s.to_string()),
            opt(self.panel_positive, |s| s.to_string()),
            self.axis_value.clone().unwrap_or_default(),
        ]
    }
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(CSV_COLUMNS).map_err(io)?;
    for r in rows {
        w.write_record(r.csv_fields()).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct JsonReport<'a> {
    schema: u32,
    command: &'a str,
    rows: &'a [Row],
}

pub fn write_json(path: &Path, command: &str, rows: &[Row]) -> Result<(), CliError> {
    let rep = JsonReport {
        schema: crate::config::SCHEMA_VERSION,
        command,
        rows,
    };
    let text = serde_json::to_string_pretty(&rep).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Two tab-separated columns: axis value, metric.
pub fn write_plot(
    path: &Path,
    axis: &str,
    metric: &str,
    points: &[(String, f64)],
) -> Result<(), CliError> {
    let mut s = format!("{axis}\t{metric}\n");
    for (x, y) in points {
        s.push_str(&format!("{x}\t{}\n", real(*y)));
    }
    std::fs::write(path, s).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
