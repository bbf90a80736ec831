//! Output files.
//!
//! CSV files start with a `# configHash=<hex>` comment line followed by a
//! header. Floats use Rust's shortest round-trip formatting, so reading a
//! value back gives the same bits. JSON files carry a `configHash` field.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lqmfg_core::riccati::MatrixPath;
use lqmfg_core::DMatrix;
use serde_json::{json, Map, Value};

/// Accumulates a CSV document in memory.
pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(config_hash: &str, header: &[String]) -> Self {
        let mut text = format!("# configHash={config_hash}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text, columns: header.len() }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{v}").expect("write to string");
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.text)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `value` pretty-printed with `configHash` as its first field.
pub fn write_json(path: &Path, config_hash: &str, value: Value) -> Result<()> {
    let mut out = Map::new();
    out.insert("configHash".into(), json!(config_hash));
    match value {
        Value::Object(fields) => out.extend(fields),
        other => {
            out.insert("data".into(), other);
        }
    }
    let mut text = serde_json::to_string_pretty(&Value::Object(out))?;
    text.push('\n');
    write_file(path, &text)
}

/// Row-major nested arrays.
pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| json!((0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())).collect())
}

/// One matrix per grid node.
pub fn path_json(p: &MatrixPath) -> Value {
    Value::Array(p.values().iter().map(matrix_json).collect())
}

/// Column names `name[i,j]` in row-major order.
pub fn entry_names(name: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows).flat_map(|i| (0..cols).map(move |j| format!("{name}[{i},{j}]"))).collect()
}

/// Several paths on one grid side by side: `t` followed by every entry of each path.
pub fn paths_csv(config_hash: &str, paths: &[(&str, &MatrixPath)]) -> Csv {
    let mut header = vec!["t".to_string()];
    for (name, p) in paths {
        let (r, c) = p.shape();
        header.extend(entry_names(name, r, c));
    }
    let mut csv = Csv::new(config_hash, &header);
    let Some((_, first)) = paths.first() else { return csv };
    let grid = *first.grid();
    let mut row = Vec::with_capacity(header.len());
    for i in 0..grid.n_nodes() {
        row.clear();
        row.push(grid.time(i));
        for (_, p) in paths {
            let m = p.node(i);
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    row.push(m[(r, c)]);
                }
            }
        }
        csv.row(&row);
    }
    csv
}
