use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mvharnack::harnack::exit_code;
use mvharnack::Result;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Warn => "WARN",
            Status::Fail => "FAIL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status.label(), self.name, self.detail)
    }
}

/// Collects check outcomes and the files written for one subcommand.
#[derive(Debug)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plot_data: bool,
    pub checks: Vec<CheckLine>,
    pub files: Vec<String>,
    pub payload: Map<String, Value>,
}

impl Report {
    pub fn new(command: &str, seed: u64, out_dir: &Path, plot_data: bool) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            command: command.to_string(),
            seed,
            out_dir: out_dir.to_path_buf(),
            plot_data,
            checks: Vec::new(),
            files: Vec::new(),
            payload: Map::new(),
        })
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.push(name, if pass { Status::Pass } else { Status::Fail }, detail);
    }

    pub fn warn(&mut self, name: impl Into<String>, detail: impl Into<String>) {
        self.push(name, Status::Warn, detail);
    }

    fn push(&mut self, name: impl Into<String>, status: Status, detail: impl Into<String>) {
        self.checks.push(CheckLine {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.payload.insert(key.to_string(), value);
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Fail).count()
    }

    pub fn warnings(&self) -> usize {
        self.checks.iter().filter(|c| c.status == Status::Warn).count()
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.failures(), self.warnings())
    }

    /// Writes `name` from a header and rows of already formatted cells.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.file(name, text.as_bytes())
    }

    pub fn file(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.out_dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// An `x,y` series, written only with `--plot-data`.
    pub fn series(&mut self, name: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> Result<()> {
        if !self.plot_data {
            return Ok(());
        }
        let mut text = format!("{x_label},{y_label}\n");
        for (x, y) in points {
            let _ = writeln!(text, "{x},{y}");
        }
        self.file(&format!("plot_{name}.csv"), text.as_bytes())
    }

    /// Writes `summary_<command>.json` and returns the exit code.
    pub fn finish(&mut self) -> Result<i32> {
        let code = self.exit_code();
        let mut files = self.files.clone();
        files.sort();
        let summary = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "seed": self.seed,
            "exit_code": code,
            "failures": self.failures(),
            "warnings": self.warnings(),
            "checks": self.checks,
            "files": files,
            "results": self.payload,
        });
        let mut text = serde_json::to_string_pretty(&summary).map_err(|e| mvharnack::Error::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.out_dir.join(format!("summary_{}.json", self.command)), text)?;
        Ok(code)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn vec_cell(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
