use std::io::{Read, Write};
use std::path::Path;

use super::{Bounds, FieldError, UdfGrid};

pub const GRID_MAGIC: &[u8; 4] = b"UDFG";

/// `"UDFG"`, `H` as u32, six bounds, `H³` udf values then `3·H³` gradient
/// components, all little-endian `f64`.
pub fn write_grid(grid: &UdfGrid, path: impl AsRef<Path>) -> Result<(), FieldError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(GRID_MAGIC)?;
    w.write_all(&(grid.h as u32).to_le_bytes())?;
    for v in grid.bounds.lo.iter().chain(&grid.bounds.hi) {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &grid.udf {
        w.write_all(&v.to_le_bytes())?;
    }
    for g in &grid.grad {
        for v in g {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<UdfGrid, FieldError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != GRID_MAGIC {
        return Err(FieldError::Format("missing UDFG header".into()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n = h.checked_pow(3).ok_or_else(|| FieldError::Format("resolution overflow".into()))?;
    let expected = 8 + 8 * (6 + 4 * n);
    if bytes.len() != expected {
        return Err(FieldError::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let f: Vec<f64> = bytes[8..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let bounds = Bounds::new([f[0], f[1], f[2]], [f[3], f[4], f[5]]);
    let udf = f[6..6 + n].to_vec();
    let grad = f[6 + n..].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    UdfGrid::new(h, bounds, udf, grad)
}

/// The `H×H` udf slice orthogonal to `axis` at lattice index `index`; row
/// `r`, column `c` run along the two remaining axes in increasing order.
pub fn slice(grid: &UdfGrid, axis: usize, index: usize) -> Vec<Vec<f64>> {
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    (0..grid.h)
        .map(|r| {
            (0..grid.h)
                .map(|c| {
                    let mut v = [0usize; 3];
                    v[axis] = index;
                    v[a] = c;
                    v[b] = r;
                    grid.udf[grid.index(v[0], v[1], v[2])]
                })
                .collect()
        })
        .collect()
}

pub fn write_slice_csv(rows: &[Vec<f64>], mut w: impl Write) -> std::io::Result<()> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Binary greyscale PGM scaled so that `max` (or the slice maximum when
/// `None`) maps to 255.
pub fn write_slice_pgm(rows: &[Vec<f64>], max: Option<f64>, mut w: impl Write) -> std::io::Result<()> {
    let hgt = rows.len();
    let wid = rows.first().map_or(0, |r| r.len());
    let top = max.unwrap_or_else(|| rows.iter().flatten().copied().fold(0.0, f64::max));
    write!(w, "P5\n{wid} {hgt}\n255\n")?;
    let px: Vec<u8> = rows.iter().flatten().map(|&v| if top > 0.0 { (v / top * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 }).collect();
    w.write_all(&px)
}

/// `Σ|a − b| / Σ|b|` over two equally sized slices.
pub fn slice_relative_l1(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let num: f64 = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().flatten().map(|y| y.abs()).sum();
    num / den
}
