//! CSV rows of every study, with atomic writers and matching readers.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStartRow {
    pub seed: u64,
    pub arm: String,
    pub iteration: usize,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub active: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTraceRow {
    pub arm: String,
    pub iteration: usize,
    /// Optimizer step counted across iterations.
    pub step: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub beta: f64,
    pub threshold: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub beta: f64,
    pub depth: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub std_steps: f64,
    pub convergence_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub kind: String,
    pub beta: f64,
    pub gamma: f64,
    pub qubits: usize,
    pub mean_kappa: f64,
    pub std_kappa: f64,
    pub bound_thm: f64,
    pub bound_empirical: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityRow {
    pub kind: String,
    pub beta: f64,
    pub qubits: usize,
    pub trials: usize,
    pub max_row_nnz: usize,
    pub max_col_nnz: usize,
    pub bound: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub trial: usize,
    pub dim: usize,
    pub unitarity: f64,
    pub reconstruction: f64,
    pub passed: bool,
}

pub use crate::qpi::RunLogRow;

pub fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read, T: DeserializeOwned>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    write_rows(&mut buf, rows)?;
    write_atomic(path, &buf)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_rows(fs::File::open(path)?)
}

pub fn read_warm_start(path: &Path) -> Result<Vec<WarmStartRow>> {
    read_csv(path)
}

pub fn read_loss_traces(path: &Path) -> Result<Vec<LossTraceRow>> {
    read_csv(path)
}

pub fn read_threshold(path: &Path) -> Result<Vec<ThresholdRow>> {
    read_csv(path)
}

pub fn read_depth(path: &Path) -> Result<Vec<DepthRow>> {
    read_csv(path)
}

pub fn read_kappa(path: &Path) -> Result<Vec<KappaRow>> {
    read_csv(path)
}

pub fn read_sparsity(path: &Path) -> Result<Vec<SparsityRow>> {
    read_csv(path)
}

pub fn read_decomposition(path: &Path) -> Result<Vec<DecompositionRow>> {
    read_csv(path)
}

pub fn read_run_log(path: &Path) -> Result<Vec<RunLogRow>> {
    crate::qpi::read_run_log(fs::File::open(path)?)
}

/// `dir/stem_suffix.ext` next to `path`, e.g. the loss-trace file beside
/// the warm-start table.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let name = if suffix.is_empty() {
        format!("{stem}.{ext}")
    } else {
        format!("{stem}_{suffix}.{ext}")
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_loss_is_empty_field() {
        let rows = vec![
            WarmStartRow {
                seed: 3,
                arm: "warm".into(),
                iteration: 2,
                steps: 0,
                final_loss: None,
                active: 0,
            },
            WarmStartRow {
                seed: 3,
                arm: "cold".into(),
                iteration: 1,
                steps: 12,
                final_loss: Some(5e-5),
                active: 1,
            },
        ];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("seed,arm,iteration,steps,final_loss,active\n"));
        assert!(text.contains("3,warm,2,0,,0\n"));
        let back: Vec<WarmStartRow> = read_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("k.csv");
        let rows = vec![KappaRow {
            kind: "uniform".into(),
            beta: 1.0,
            gamma: 0.9,
            qubits: 3,
            mean_kappa: 12.5,
            std_kappa: 0.0,
            bound_thm: 19.0,
            bound_empirical: 9.0,
            violations: 0,
        }];
        write_csv(&path, &rows).unwrap();
        write_csv(&path, &rows).unwrap();
        assert_eq!(read_kappa(&path).unwrap(), rows);
        let leftovers = fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn sibling_names() {
        let p = Path::new("/tmp/ws.csv");
        assert_eq!(sibling(p, "loss", "csv"), Path::new("/tmp/ws_loss.csv"));
        assert_eq!(sibling(p, "", "svg"), Path::new("/tmp/ws.svg"));
    }
}
