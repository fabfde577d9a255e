//! Instance files.
//!
//! A data directory holds `X.csv` (`n` rows of `p` comma-separated reals, no
//! header), `y.csv` (one value per line) and `meta.json`. Generated data also
//! carries `beta_true.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LossKind, ProblemInstance, SyntheticData, SyntheticSpec};

pub const X_FILE: &str = "X.csv";
pub const Y_FILE: &str = "y.csv";
pub const META_FILE: &str = "meta.json";
pub const BETA_TRUE_FILE: &str = "beta_true.csv";

/// Contents of `meta.json`. Problem parameters are optional so that a
/// generated data set can be solved with different `λ₂`, `M`, `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub loss: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<SyntheticSpec>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_row(line: &str, path: &Path, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|field| {
            let field = field.trim();
            field.parse::<f64>().map_err(|_| {
                Error::Parse(format!("{}:{lineno}: not a number: {field:?}", path.display()))
            })
        })
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (lineno, line) in data_lines(&text) {
        let row = parse_row(line, path, lineno)?;
        match ncols {
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::Parse(format!(
                    "{}:{lineno}: expected {c} columns, found {}",
                    path.display(),
                    row.len()
                )))
            }
            Some(_) => {}
        }
        values.extend(row);
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| Error::Parse(format!("{}: no rows", path.display())))?;
    Array2::from_shape_vec((nrows, ncols), values).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_vector_csv(path: &Path) -> Result<Array1<f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut values = Vec::new();
    for (lineno, line) in data_lines(&text) {
        let row = parse_row(line, path, lineno)?;
        if row.len() != 1 {
            return Err(Error::Parse(format!(
                "{}:{lineno}: expected one value, found {}",
                path.display(),
                row.len()
            )));
        }
        values.push(row[0]);
    }
    Ok(Array1::from(values))
}

// `{}` on f64 prints the shortest string that round-trips.
pub fn write_matrix_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut out = String::new();
    for row in x.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<()> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = String::new();
    for x in v {
        out.push_str(&x.to_string());
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(io_err(path))
}

pub fn read_meta(path: &Path) -> Result<InstanceMeta> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn write_meta(path: &Path, meta: &InstanceMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Raw contents of a data directory.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub meta: InstanceMeta,
}

/// Problem parameters that override (or fill in) `meta.json`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub lambda2: Option<f64>,
    pub m: Option<f64>,
    pub k: Option<usize>,
}

impl DataSet {
    pub fn read(dir: &Path) -> Result<DataSet> {
        let x = read_matrix_csv(&dir.join(X_FILE))?;
        let y = read_vector_csv(&dir.join(Y_FILE))?;
        let meta = read_meta(&dir.join(META_FILE))?;
        Ok(DataSet { x, y, meta })
    }

    pub fn instance(&self, overrides: Overrides) -> Result<ProblemInstance> {
        let missing = |name: &str| Error::InvalidInstance(format!("{name} not given and absent from {META_FILE}"));
        let lambda2 = overrides.lambda2.or(self.meta.lambda2).ok_or_else(|| missing("lambda2"))?;
        let m = overrides.m.or(self.meta.m).ok_or_else(|| missing("M"))?;
        let k = overrides.k.or(self.meta.k).ok_or_else(|| missing("k"))?;
        ProblemInstance::new(self.x.clone(), self.y.clone(), self.meta.loss, lambda2, m, k)
    }
}

/// Writes `X.csv`, `y.csv`, `meta.json` and `beta_true.csv` into `dir`,
/// creating it if needed. Returns the written paths.
pub fn write_synthetic(dir: &Path, data: &SyntheticData, spec: &SyntheticSpec) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths: Vec<PathBuf> = [X_FILE, Y_FILE, META_FILE, BETA_TRUE_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_matrix_csv(&paths[0], &data.x)?;
    write_vector_csv(&paths[1], &data.y)?;
    write_meta(
        &paths[2],
        &InstanceMeta {
            loss: data.loss,
            lambda2: None,
            m: None,
            k: None,
            generator: Some(spec.clone()),
        },
    )?;
    write_vector_csv(&paths[3], &data.beta_true)?;
    Ok(paths)
}
