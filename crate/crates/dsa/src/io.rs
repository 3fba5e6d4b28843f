//! Structured text formats: geometry records, complex-matrix dumps, and
//! pattern tables. All files are header-first CSV-style text with dot
//! decimal separators so runs stay reproducible and diffable.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;

use crate::em::Dipole;
use crate::error::{DsaError, Result};
use crate::geometry::DsaGeometry;

/// Writes a geometry as one record per element:
/// `role,x,y,z,ox,oy,oz,length,radius` with a `# lambda=...` header line.
pub fn write_geometry(path: &Path, geom: &DsaGeometry) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# lambda={:.17e}", geom.lambda)?;
    writeln!(f, "role,x,y,z,ox,oy,oz,length,radius")?;
    let mut write_one = |role: &str, d: &Dipole| -> std::io::Result<()> {
        writeln!(
            f,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            role,
            d.position.x,
            d.position.y,
            d.position.z,
            d.orientation.x,
            d.orientation.y,
            d.orientation.z,
            d.length,
            d.radius
        )
    };
    for d in &geom.active {
        write_one("active", d)?;
    }
    for d in &geom.scatterers {
        write_one("scatterer", d)?;
    }
    Ok(())
}

/// Reads a geometry written by [`write_geometry`].
pub fn read_geometry(path: &Path) -> Result<DsaGeometry> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut lambda = None;
    let mut active = Vec::new();
    let mut scatterers = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some(value) = rest.trim().strip_prefix("lambda=") {
                lambda = Some(value.trim().parse::<f64>().map_err(|e| {
                    DsaError::Io(format!("line {}: bad lambda: {e}", lineno + 1))
                })?);
            }
            continue;
        }
        if trimmed.starts_with("role,") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 9 {
            return Err(DsaError::Io(format!(
                "line {}: expected 9 fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| DsaError::Io(format!("line {}: field {}: {e}", lineno + 1, i)))
        };
        let dipole = Dipole::new(
            Vector3::new(num(1)?, num(2)?, num(3)?),
            Vector3::new(num(4)?, num(5)?, num(6)?),
            num(7)?,
            num(8)?,
        )?;
        match fields[0].trim() {
            "active" => active.push(dipole),
            "scatterer" => scatterers.push(dipole),
            other => {
                return Err(DsaError::Io(format!(
                    "line {}: unknown role '{other}'",
                    lineno + 1
                )))
            }
        }
    }
    let lambda = lambda.ok_or_else(|| DsaError::Io("missing '# lambda=' header".into()))?;
    DsaGeometry::new(active, scatterers, lambda)
}

/// Writes a complex matrix as row-major text: one matrix row per line, cells
/// as `re,im` pairs separated by single spaces, preceded by a `rows cols`
/// header line.
pub fn write_complex_matrix(path: &Path, m: &DMatrix<Complex64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let mut cells = Vec::with_capacity(m.ncols());
        for j in 0..m.ncols() {
            cells.push(format!("{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im));
        }
        writeln!(f, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Reads a matrix written by [`write_complex_matrix`].
pub fn read_complex_matrix(path: &Path) -> Result<DMatrix<Complex64>> {
    let f = std::fs::File::open(path)?;
    let reader = BufReader::new(f);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| DsaError::Io("empty matrix file".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| DsaError::Io(e.to_string())))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(DsaError::Io("matrix header must be 'rows cols'".into()));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let line = lines
            .next()
            .ok_or_else(|| DsaError::Io(format!("missing matrix row {i}")))??;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() != cols {
            return Err(DsaError::Io(format!(
                "row {i}: expected {cols} cells, found {}",
                cells.len()
            )));
        }
        for (j, cell) in cells.iter().enumerate() {
            let parts: Vec<&str> = cell.split(',').collect();
            if parts.len() != 2 {
                return Err(DsaError::Io(format!("row {i}, col {j}: expected re,im")));
            }
            let re = parts[0]
                .parse::<f64>()
                .map_err(|e| DsaError::Io(e.to_string()))?;
            let im = parts[1]
                .parse::<f64>()
                .map_err(|e| DsaError::Io(e.to_string()))?;
            m[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(m)
}

/// Writes a gain pattern as `angle_deg,gain_db` CSV.
pub fn write_pattern_csv(path: &Path, pattern: &[(f64, f64)]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "angle_deg,gain_db")?;
    for (angle, gain) in pattern {
        writeln!(f, "{angle},{gain}")?;
    }
    Ok(())
}
