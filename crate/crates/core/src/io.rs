//! Plain-text interchange: comma-separated grid functions with 17
//! significant digits (`{:.16e}`), which round-trips `f64` exactly.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::model::{Grid, Path};
use crate::{Error, Result};

/// Node coordinates read from a file must match the uniform grid to this.
const NODE_TOL: f64 = 1e-12;

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `u,x_1,...,x_d[,y_1,...,y_n]`, one row per node.
pub fn write_path_csv<W: Write>(mut w: W, x: &Path<f64>, y: Option<&Path<f64>>) -> Result<()> {
    let grid = x.grid();
    if let Some(y) = y {
        if y.grid() != grid {
            return Err(Error::GridMismatch("x and y paths on different grids".into()));
        }
    }
    let mut header = vec!["u".to_string()];
    header.extend((1..=x.dim()).map(|k| format!("x_{k}")));
    if let Some(y) = y {
        header.extend((1..=y.dim()).map(|k| format!("y_{k}")));
    }
    writeln!(w, "{}", header.join(","))?;
    for j in 0..grid.n_nodes() {
        let mut row = vec![fmt_num(grid.node(j))];
        row.extend(x.at(j).iter().map(|&v| fmt_num(v)));
        if let Some(y) = y {
            row.extend(y.at(j).iter().map(|&v| fmt_num(v)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns of a path file, grouped by prefix.
#[derive(Debug, Clone)]
pub struct PathTable {
    pub grid: Grid,
    pub x: Option<Path<f64>>,
    pub y: Option<Path<f64>>,
}

/// Reads a file written by [`write_path_csv`]. The `u` column must be the
/// uniform grid on `[0, 1]`.
pub fn read_path_csv<R: BufRead>(r: R) -> Result<PathTable> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty path file".into()))??;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    if cols.first().map(String::as_str) != Some("u") {
        return Err(Error::Parse("first column must be `u`".into()));
    }
    let x_cols: Vec<usize> = (0..cols.len()).filter(|&i| cols[i].starts_with("x_")).collect();
    let y_cols: Vec<usize> = (0..cols.len()).filter(|&i| cols[i].starts_with("y_")).collect();
    let mut us = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", n + 2)))?;
        if vals.len() != cols.len() {
            return Err(Error::Parse(format!("row {} has {} fields, header has {}", n + 2, vals.len(), cols.len())));
        }
        us.push(vals[0]);
        rows.push(vals);
    }
    let grid = Grid::new(us.len())?;
    for (j, &u) in us.iter().enumerate() {
        let node: f64 = grid.node(j);
        if (u - node).abs() > NODE_TOL {
            return Err(Error::GridMismatch(format!("node {j} is at u = {u}, expected {node}")));
        }
    }
    let take = |idx: &[usize]| -> Option<Path<f64>> {
        if idx.is_empty() {
            return None;
        }
        let data = DVector::from_iterator(rows.len() * idx.len(), rows.iter().flat_map(|r| idx.iter().map(|&i| r[i])));
        Some(Path::new(grid, idx.len(), data).expect("sized from the table"))
    };
    Ok(PathTable { grid, x: take(&x_cols), y: take(&y_cols) })
}

/// Writes named columns of equal length with a header row.
pub fn write_columns<W: Write>(mut w: W, names: &[String], columns: &[Vec<f64>]) -> Result<()> {
    if names.len() != columns.len() {
        return Err(Error::DimensionMismatch {
            context: "column names",
            expected: columns.len(),
            got: names.len(),
        });
    }
    let len = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("columns", "columns differ in length"));
    }
    writeln!(w, "{}", names.join(","))?;
    for i in 0..len {
        let row: Vec<String> = columns.iter().map(|c| fmt_num(c[i])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
