//! CSV and JSON output formats.
//!
//! CSV holds array-like data, JSON scalars and manifests. Floats are
//! written with Rust's shortest round-trip formatting, so identical inputs
//! produce byte-identical files.

use std::io::Write;

use crate::error::Result;
use crate::kernels::Field;
use crate::mesoscale::ScalingReport;
use crate::particles::Snapshot;
use crate::stationary::DispersionPoint;

/// Field CSV: one row per cell with per-axis index, per-axis coordinate,
/// and the value.
pub fn write_field_csv<W: Write>(field: &Field, w: &mut W) -> Result<()> {
    let grid = field.grid();
    match grid.dimension() {
        1 => {
            writeln!(w, "i,x,value")?;
            for (idx, &v) in field.values().iter().enumerate() {
                let x = grid.coordinate(idx)[0];
                writeln!(w, "{idx},{x},{v}")?;
            }
        }
        _ => {
            writeln!(w, "i,j,x,y,value")?;
            for (idx, &v) in field.values().iter().enumerate() {
                let ij = grid.axis_indices(idx);
                let xy = grid.coordinate(idx);
                writeln!(w, "{},{},{},{},{v}", ij[0], ij[1], xy[0], xy[1])?;
            }
        }
    }
    Ok(())
}

/// Particle snapshot CSV header: `replica,time,type,x[,y]`.
pub fn write_snapshot_header<W: Write>(dimension: u8, w: &mut W) -> Result<()> {
    if dimension == 1 {
        writeln!(w, "replica,time,type,x")?;
    } else {
        writeln!(w, "replica,time,type,x,y")?;
    }
    Ok(())
}

/// Append one snapshot's particle rows.
pub fn write_snapshot_rows<W: Write>(snapshot: &Snapshot, replica: u64, w: &mut W) -> Result<()> {
    let d = snapshot.config.dimension;
    for ty in 0..2 {
        for p in &snapshot.config.points[ty] {
            if d == 1 {
                writeln!(w, "{replica},{},{ty},{}", snapshot.time, p[0])?;
            } else {
                writeln!(w, "{replica},{},{ty},{},{}", snapshot.time, p[0], p[1])?;
            }
        }
    }
    Ok(())
}

/// Dispersion table CSV: `p,product_hat,lambda_max,lambda_min`.
pub fn write_dispersion_csv<W: Write>(points: &[DispersionPoint], w: &mut W) -> Result<()> {
    writeln!(w, "p,product_hat,lambda_max,lambda_min")?;
    for pt in points {
        writeln!(
            w,
            "{},{},{},{}",
            pt.p, pt.product_hat, pt.growth_rates[0], pt.growth_rates[1]
        )?;
    }
    Ok(())
}

/// Scaling report CSV: `epsilon,error,se,replicas`.
pub fn write_scaling_csv<W: Write>(report: &ScalingReport, w: &mut W) -> Result<()> {
    writeln!(w, "epsilon,error,se,replicas")?;
    for (eps, err, se, replicas) in report.rows() {
        writeln!(w, "{eps},{err},{se},{replicas}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GridSpec;

    #[test]
    fn field_csv_shape() {
        let grid = GridSpec::new(1, 4.0, 4).unwrap();
        let f = Field::from_fn(grid, |x| x[0] * 2.0);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "i,x,value");
        assert_eq!(lines[2], "1,1,2");
    }

    #[test]
    fn field_csv_2d_shape() {
        let grid = GridSpec::new(2, 2.0, 2).unwrap();
        let f = Field::constant(grid, 1.5);
        let mut buf = Vec::new();
        write_field_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,j,x,y,value\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
