//! CSV dumps, CSV field input and atomic report writes.

use crate::abp::{AbpSolution, ContactSet};
use crate::density::DensityFamily;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{norm, BallGrid};
use crate::transport::TransportPlan;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `rows` with a header into CSV text.
pub fn csv_string<S: serde::Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("x{k}")).collect()
}

/// `x1..xn,u,grad_norm,in_contact`, one row per active node.
pub fn abp_solution_csv(sol: &AbpSolution, contact: &ContactSet) -> Result<String> {
    let grid = sol.grid();
    let n = grid.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = coord_header(n);
    header.extend(["u", "grad_norm", "in_contact"].map(String::from));
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let u = sol.u().values();
    for (k, &i) in grid.active().iter().enumerate() {
        let x = grid.coords(i as usize);
        let mut rec: Vec<String> = x[..n].iter().map(|v| v.to_string()).collect();
        rec.push(u[i as usize].to_string());
        rec.push(norm(&sol.gradient(k), n).to_string());
        rec.push(u8::from(contact.contains(k)).to_string());
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `x1..xn,value`, one row per active node. Reads back with
/// [`read_field_csv`].
pub fn field_csv(f: &ScalarField) -> Result<String> {
    let grid = f.grid();
    let n = grid.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = coord_header(n);
    header.push("value".to_string());
    w.write_record(&header).map_err(|e| Error::Parse(e.to_string()))?;
    for &i in grid.active() {
        let x = grid.coords(i as usize);
        let mut rec: Vec<String> = x[..n].iter().map(|v| v.to_string()).collect();
        rec.push(f.value(i as usize).to_string());
        w.write_record(&rec).map_err(|e| Error::Parse(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `i,j,mass` for every positive plan entry.
pub fn plan_csv(plan: &TransportPlan) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Row {
        i: usize,
        j: usize,
        mass: f64,
    }
    let rows: Vec<Row> = plan.entries().iter().map(|&(i, j, mass)| Row { i, j, mass }).collect();
    csv_string(&rows)
}

/// `j,c_j,alpha_j,pi_over_c_j`.
pub fn density_csv(families: &[DensityFamily]) -> Result<String> {
    #[derive(serde::Serialize)]
    struct Row {
        j: u64,
        c_j: f64,
        alpha_j: f64,
        pi_over_c_j: f64,
    }
    let rows: Vec<Row> = families
        .iter()
        .map(|f| Row {
            j: f.j,
            c_j: f.c,
            alpha_j: f.alpha,
            pi_over_c_j: f.pi_over_c(),
        })
        .collect();
    csv_string(&rows)
}

/// Reads a nodal field `x1..xn,f` (header required, last column is the
/// value). Every active node of `grid` must appear exactly once.
pub fn read_field_csv(path: &Path, grid: Arc<BallGrid>) -> Result<ScalarField> {
    let n = grid.dim();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut values = vec![f64::NAN; grid.len()];
    let tol = 1e-6 * grid.h();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != n + 1 {
            return Err(Error::Parse(format!("row {}: expected {} columns", line + 2, n + 1)));
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?;
        let mut p = [0.0; 3];
        p[..n].copy_from_slice(&nums[..n]);
        let idx = grid.node_near(&p);
        let q = grid.coords(idx);
        if (0..n).any(|a| (q[a] - p[a]).abs() > tol) || !grid.is_active(idx) {
            return Err(Error::InvalidGeometry(format!("row {}: {p:?} is not an active grid node", line + 2)));
        }
        if !values[idx].is_nan() {
            return Err(Error::Parse(format!("row {}: duplicate node", line + 2)));
        }
        values[idx] = nums[n];
    }
    let missing = grid.active().iter().filter(|&&i| values[i as usize].is_nan()).count();
    if missing > 0 {
        return Err(Error::InvalidArgument(format!("{missing} active nodes missing from {}", path.display())));
    }
    ScalarField::from_nodal(grid, values)
}
