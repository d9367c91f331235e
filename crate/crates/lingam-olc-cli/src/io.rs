//! CSV datasets, canonical JSON files and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use lingam_olc::json::to_canonical_string;
use lingam_olc::{Config, Dataset};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn read_csv(path: &Path) -> CliResult<Dataset> {
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_csv(file, &path.display().to_string())
}

pub fn parse_csv(reader: impl std::io::Read, name: &str) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let bad = |line: u64, msg: String| CliError::Input(format!("{name} line {line}: {msg}"));
    let labels: Vec<String> = rdr.headers().map_err(|e| bad(1, e.to_string()))?.iter().map(str::to_string).collect();
    if labels.iter().any(|l| l.is_empty()) {
        return Err(bad(1, "empty column label in header".into()));
    }
    let mut columns = vec![Vec::new(); labels.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            bad(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| bad(line, format!("column {} value {field:?} is not a number", labels[j])))?;
            if !v.is_finite() {
                return Err(bad(line, format!("column {} value {field:?} is not finite", labels[j])));
            }
            columns[j].push(v);
        }
    }
    Ok(Dataset::new(labels, columns)?)
}

pub fn write_csv(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Internal(format!("{}: {e}", path.display()));
    w.write_record(data.labels()).map_err(io)?;
    for t in 0..data.n_samples() {
        w.write_record(data.columns().iter().map(|c| c[t].to_string())).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_text(path, &to_canonical_string(&v))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Serialize)]
pub struct Digest256 {
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: Option<Config>,
    pub inputs: Vec<Digest256>,
    pub outputs: Vec<String>,
    pub wall_time: f64,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time: 0.0,
            seed: None,
            details: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(Digest256 { path: path.display().to_string(), sha256 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(mut self, dir: &Path, wall_time: f64) -> CliResult<PathBuf> {
        self.wall_time = wall_time;
        let path = dir.join("manifest.json");
        write_json(&path, &self)?;
        Ok(path)
    }
}
