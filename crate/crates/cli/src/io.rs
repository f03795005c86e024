//! Matrix, label, solution, and config file formats.
//!
//! Matrices travel either as CSV (one row per line, comma-separated decimals)
//! or as JSON `{"rows": N, "cols": M, "data": [row-major]}`. Solutions are
//! self-contained JSON carrying the crossbar parameters they were mapped
//! against.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use xbarmap_core::mapping::{
    ErrorBreakdown, FlagReason, FlaggedCell, MappingMetadata, MappingMethod, MappingSolution,
};
use xbarmap_core::{ConductanceGrid, CrossbarConfig};

use crate::config::{CrossbarSection, ExperimentConfig};

#[derive(Debug, Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Load a matrix from `.csv` or `.json` by extension.
pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading matrix file {}", path.display()))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => parse_matrix_csv(&text)
            .with_context(|| format!("parsing CSV matrix {}", path.display())),
        Some("json") => parse_matrix_json(&text)
            .with_context(|| format!("parsing JSON matrix {}", path.display())),
        other => bail!(
            "unsupported matrix extension {:?} for {} (use .csv or .json)",
            other,
            path.display()
        ),
    }
}

pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (fieldno, field) in line.split(',').enumerate() {
            let value: f64 = field.trim().parse().map_err(|e| {
                anyhow!("line {}, field {}: {e} ({field:?})", lineno + 1, fieldno + 1)
            })?;
            row.push(value);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                bail!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                );
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("empty matrix");
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())?)
}

pub fn parse_matrix_json(text: &str) -> Result<Array2<f64>> {
    let file: MatrixFile = serde_json::from_str(text)?;
    if file.rows == 0 || file.cols == 0 {
        bail!("matrix dimensions must be positive, got {}x{}", file.rows, file.cols);
    }
    if file.rows * file.cols != file.data.len() {
        bail!(
            "dimension mismatch: {}x{} needs {} entries, data has {}",
            file.rows,
            file.cols,
            file.rows * file.cols,
            file.data.len()
        );
    }
    Ok(Array2::from_shape_vec((file.rows, file.cols), file.data)?)
}

pub fn save_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn save_matrix_json(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = MatrixFile {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.iter().copied().collect(),
    };
    write_json(path, &file)
}

/// Class labels as a JSON array of integers.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serialize to pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SolutionFile {
    pub schema_version: u32,
    pub method: String,
    pub rows: usize,
    pub cols: usize,
    pub alpha: f64,
    pub crossbar: CrossbarSection,
    pub g: Vec<f64>,
    pub g_quantized: Vec<f64>,
    pub s: Option<Vec<f64>>,
    pub error: ErrorSection,
    pub metadata: MetadataSection,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorSection {
    pub total: f64,
    pub value_range: f64,
    pub precision: f64,
}

#[derive(Debug, Serialize, Deserialize, Default)]
pub struct MetadataSection {
    pub calibration_residual: Option<f64>,
    pub rows_without_adjustable: Vec<usize>,
    pub flagged_cells: Vec<FlaggedCellRecord>,
    pub alpha_iterations: usize,
    pub error_at_alpha_search: Option<ErrorSection>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FlaggedCellRecord {
    pub row: usize,
    pub col: usize,
    pub reason: String,
    pub value: f64,
}

pub fn solution_to_file(
    sol: &MappingSolution<f64>,
    crossbar: &CrossbarSection,
) -> SolutionFile {
    let flags = sol
        .metadata
        .flagged_cells
        .iter()
        .map(|f| match f.reason {
            FlagReason::OutOfRange { solved } => FlaggedCellRecord {
                row: f.row,
                col: f.col,
                reason: "out-of-range".into(),
                value: solved,
            },
            FlagReason::NonConvergence { residual } => FlaggedCellRecord {
                row: f.row,
                col: f.col,
                reason: "non-convergence".into(),
                value: residual,
            },
        })
        .collect();
    SolutionFile {
        schema_version: crate::config::SCHEMA_VERSION,
        method: sol.method.as_str().into(),
        rows: sol.g.nrows(),
        cols: sol.g.ncols(),
        alpha: sol.alpha,
        crossbar: crossbar.clone(),
        g: sol.g.values().iter().copied().collect(),
        g_quantized: sol.g_quantized.values().iter().copied().collect(),
        s: sol.s.as_ref().map(|s| s.iter().copied().collect()),
        error: ErrorSection {
            total: sol.error.total,
            value_range: sol.error.value_range,
            precision: sol.error.precision,
        },
        metadata: MetadataSection {
            calibration_residual: sol.metadata.calibration_residual,
            rows_without_adjustable: sol.metadata.rows_without_adjustable.clone(),
            flagged_cells: flags,
            alpha_iterations: sol.metadata.alpha_iterations,
            error_at_alpha_search: sol.metadata.error_at_alpha_search.map(|e| ErrorSection {
                total: e.total,
                value_range: e.value_range,
                precision: e.precision,
            }),
        },
    }
}

pub fn solution_from_file(file: &SolutionFile) -> Result<(MappingSolution<f64>, CrossbarConfig<f64>)> {
    let config = file.crossbar.to_core(file.rows, file.cols)?;
    let shape = (file.rows, file.cols);
    let g = ConductanceGrid::new(Array2::from_shape_vec(shape, file.g.clone())?, &config)
        .map_err(|e| anyhow!("{e}"))?;
    let g_quantized =
        ConductanceGrid::new(Array2::from_shape_vec(shape, file.g_quantized.clone())?, &config)
            .map_err(|e| anyhow!("{e}"))?;
    let s = file
        .s
        .as_ref()
        .map(|s| Array2::from_shape_vec(shape, s.clone()))
        .transpose()?;
    let method = match file.method.as_str() {
        "proposed" => MappingMethod::Proposed,
        "baseline-fixed-alpha" => MappingMethod::BaselineFixedAlpha,
        "baseline-calibration" => MappingMethod::BaselineCalibration,
        other => bail!("unknown mapping method {other:?}"),
    };
    let metadata = MappingMetadata {
        error_at_alpha_search: file.metadata.error_at_alpha_search.as_ref().map(|e| {
            ErrorBreakdown {
                total: e.total,
                value_range: e.value_range,
                precision: e.precision,
            }
        }),
        calibration_residual: file.metadata.calibration_residual,
        rows_without_adjustable: file.metadata.rows_without_adjustable.clone(),
        flagged_cells: file
            .metadata
            .flagged_cells
            .iter()
            .map(|f| FlaggedCell {
                row: f.row,
                col: f.col,
                reason: match f.reason.as_str() {
                    "out-of-range" => FlagReason::OutOfRange { solved: f.value },
                    _ => FlagReason::NonConvergence { residual: f.value },
                },
            })
            .collect(),
        alpha_iterations: file.metadata.alpha_iterations,
    };
    let sol = MappingSolution {
        g,
        g_quantized,
        alpha: file.alpha,
        s,
        method,
        error: ErrorBreakdown {
            total: file.error.total,
            value_range: file.error.value_range,
            precision: file.error.precision,
        },
        metadata,
    };
    Ok((sol, config))
}

pub fn load_solution(path: &Path) -> Result<(MappingSolution<f64>, CrossbarConfig<f64>)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading solution {}", path.display()))?;
    // accept both the bare solution and the report envelope `map` writes
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing solution {}", path.display()))?;
    if let Some(payload) = value.get_mut("payload") {
        value = payload.take();
    }
    let file: SolutionFile = serde_json::from_value(value)
        .with_context(|| format!("parsing solution {}", path.display()))?;
    solution_from_file(&file)
}

/// Load an input set: each CSV/JSON matrix row is one input vector.
pub fn load_inputs(path: &Path, expected_len: usize) -> Result<Vec<Array1<f64>>> {
    let m = load_matrix(path)?;
    if m.ncols() != expected_len {
        bail!(
            "input vectors have {} entries but the tile has {} columns",
            m.ncols(),
            expected_len
        );
    }
    Ok(m.rows().into_iter().map(|r| r.to_owned()).collect())
}
