//! File writers. Every CSV starts with `#` comment lines echoing the library
//! version, the seed, and the full resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use graph_approx::bounds::BoundCheckReport;

use crate::config::ExperimentConfig;
use crate::{CliError, VERSION};

pub fn header(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config is serializable");
    format!(
        "# graph-approx {VERSION}\n# seed: {}\n# nodes: {} trials: {}\n# config: {json}\n",
        config.seed,
        config.num_nodes(),
        config.trials()
    )
}

pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `header(config)` followed by `body`.
    pub fn csv(
        &mut self,
        name: &str,
        config: &ExperimentConfig,
        body: &str,
    ) -> Result<PathBuf, CliError> {
        self.raw(name, &format!("{}{body}", header(config)))
    }

    pub fn report(&mut self, report: &BoundCheckReport) -> Result<PathBuf, CliError> {
        self.raw(&format!("{}.json", report.name), &report.to_json())
    }

    pub fn raw(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

/// Parses a CSV written by [`OutputDir::csv`], skipping comment lines.
/// Returns the column names and the numeric rows.
pub fn read_numeric_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Compute("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|line| {
            line.split(',')
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|e| CliError::Compute(format!("bad cell {cell:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((columns, rows))
}
