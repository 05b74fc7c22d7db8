//! Field snapshots on disk.
//!
//! CSV: header `y1,y2,z,v1,v2,v3,p`, one row per lattice point and level,
//! values printed with 17 significant digits.
//!
//! EKBL binary dump (all little-endian):
//!
//! | offset      | type        | content                                   |
//! |-------------|-------------|-------------------------------------------|
//! | 0           | `[u8; 4]`   | magic `EKBL`                              |
//! | 4           | `u32`       | format version (1)                        |
//! | 8           | `u32`       | rank, always 4                            |
//! | 12          | `u32 × 4`   | dims `[n, n, nz, ncomp]`                  |
//! | 28          | `f64`       | period `L`                                |
//! | 36          | `f64 × nz`  | vertical nodes                            |
//! | 36 + 8·nz   | `f64 × …`   | `(re, im)` pairs, component-major, then mode `m = i₁·n + i₂`, then level |
//!
//! Components, in order: `v1 v2 v3 dz_v1 dz_v2 dz_v3 p omega`.

use crate::error::{EkblError, Result};
use crate::halfspace::{physical_slice, FlowField};
use crate::spectral::{FieldRole, Fft2, SpectralField, SpectralGrid, VerticalGrid};
use crate::strip::{StripOperator, StripSolution};
use num_complex::Complex64 as C64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const EKBL_MAGIC: [u8; 4] = *b"EKBL";
pub const EKBL_VERSION: u32 = 1;
pub const EKBL_COMPONENTS: [&str; 8] = ["v1", "v2", "v3", "dz_v1", "dz_v2", "dz_v3", "p", "omega"];
pub const CSV_HEADER: &str = "y1,y2,z,v1,v2,v3,p";

fn components(u: &FlowField) -> [&SpectralField; 8] {
    [&u.v[0], &u.v[1], &u.v[2], &u.dz_v[0], &u.dz_v[1], &u.dz_v[2], &u.p, &u.omega]
}

/// Streams `u` to `w` in the EKBL layout.
pub fn write_ekbl<W: Write>(w: W, grid: &SpectralGrid, u: &FlowField) -> Result<()> {
    let mut w = BufWriter::new(w);
    let (n, nz) = (grid.n, grid.nz());
    for f in components(u) {
        if f.n != n || f.nz != nz {
            return Err(EkblError::Shape("field does not match grid".into()));
        }
    }
    w.write_all(&EKBL_MAGIC)?;
    w.write_all(&EKBL_VERSION.to_le_bytes())?;
    w.write_all(&4u32.to_le_bytes())?;
    for d in [n, n, nz, EKBL_COMPONENTS.len()] {
        let d = u32::try_from(d).map_err(|_| EkblError::Shape("dimension exceeds u32".into()))?;
        w.write_all(&d.to_le_bytes())?;
    }
    w.write_all(&grid.period.to_le_bytes())?;
    for z in grid.z() {
        w.write_all(&z.to_le_bytes())?;
    }
    for f in components(u) {
        for m in 0..grid.n_modes() {
            for c in f.mode(m) {
                w.write_all(&c.re.to_le_bytes())?;
                w.write_all(&c.im.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> EkblError + '_ {
    move |e| EkblError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_ekbl_file(path: &Path, grid: &SpectralGrid, u: &FlowField) -> Result<()> {
    write_ekbl(File::create(path).map_err(with_path(path))?, grid, u)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_ekbl<R: Read>(r: R) -> Result<(SpectralGrid, FlowField)> {
    let mut r = BufReader::new(r);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != EKBL_MAGIC {
        return Err(EkblError::Shape("not an EKBL dump (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != EKBL_VERSION {
        return Err(EkblError::Shape(format!("unsupported EKBL version {version}")));
    }
    if read_u32(&mut r)? != 4 {
        return Err(EkblError::Shape("EKBL rank must be 4".into()));
    }
    let dims: Vec<usize> = (0..4).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<_>>()?;
    if dims[0] != dims[1] || dims[3] != EKBL_COMPONENTS.len() {
        return Err(EkblError::Shape(format!("unexpected EKBL dims {dims:?}")));
    }
    let (n, nz) = (dims[0], dims[2]);
    let period = read_f64(&mut r)?;
    let z: Vec<f64> = (0..nz).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
    let grid = SpectralGrid::new(period, n, VerticalGrid::from_nodes(z)?)?;
    let mut u = FlowField::zeros(&grid);
    let read_field = |f: &mut SpectralField, r: &mut BufReader<R>| -> Result<()> {
        for c in f.data.iter_mut() {
            let re = read_f64(r)?;
            *c = C64::new(re, read_f64(r)?);
        }
        Ok(())
    };
    for f in u.v.iter_mut() {
        read_field(f, &mut r)?;
    }
    for f in u.dz_v.iter_mut() {
        read_field(f, &mut r)?;
    }
    read_field(&mut u.p, &mut r)?;
    read_field(&mut u.omega, &mut r)?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(EkblError::Shape("trailing bytes after EKBL payload".into()));
    }
    debug_assert_eq!(u.p.role, FieldRole::Pressure);
    Ok((grid, u))
}

pub fn read_ekbl_file(path: &Path) -> Result<(SpectralGrid, FlowField)> {
    read_ekbl(File::open(path).map_err(with_path(path))?)
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(w: &mut impl Write, y1: f64, y2: f64, z: f64, v: [f64; 3], p: f64) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        fmt17(y1),
        fmt17(y2),
        fmt17(z),
        fmt17(v[0]),
        fmt17(v[1]),
        fmt17(v[2]),
        fmt17(p)
    )
}

/// Half-space field in physical space, one level at a time. `z_shift` is added to
/// every height (the interface height for the upper piece of a coupled solve).
pub fn write_flow_csv<W: Write>(w: &mut W, grid: &SpectralGrid, u: &FlowField, z_shift: f64, header: bool) -> Result<()> {
    let fft = Fft2::new(grid.n);
    let hstep = grid.period / grid.n as f64;
    if header {
        writeln!(w, "{CSV_HEADER}")?;
    }
    for (j, &z) in grid.z().iter().enumerate() {
        let v: Vec<Vec<C64>> = u.v.iter().map(|f| physical_slice(&fft, f, j)).collect();
        let p = physical_slice(&fft, &u.p, j);
        for q in 0..grid.n_modes() {
            let (i1, i2) = (q / grid.n, q % grid.n);
            csv_row(w, i1 as f64 * hstep, i2 as f64 * hstep, z + z_shift, [v[0][q].re, v[1][q].re, v[2][q].re], p[q].re)?;
        }
    }
    Ok(())
}

/// Strip field at the physical node heights, one σ-level at a time.
pub fn write_strip_csv<W: Write>(w: &mut W, op: &StripOperator, sol: &StripSolution, header: bool) -> Result<()> {
    let g = &op.grid;
    let fft = Fft2::new(g.n);
    let hstep = g.period / g.n as f64;
    if header {
        writeln!(w, "{CSV_HEADER}")?;
    }
    for k in 0..g.n_sigma() {
        let v: Vec<Vec<C64>> = (0..3).map(|c| fft.to_physical(&op.velocity(sol, c, k))).collect();
        let p = fft.to_physical(&op.pressure(sol, k));
        for q in 0..g.n_modes() {
            let (i1, i2) = (q / g.n, q % g.n);
            csv_row(w, i1 as f64 * hstep, i2 as f64 * hstep, g.height(q, k), [v[0][q].re, v[1][q].re, v[2][q].re], p[q].re)?;
        }
    }
    Ok(())
}

pub fn write_flow_csv_file(path: &Path, grid: &SpectralGrid, u: &FlowField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(with_path(path))?);
    write_flow_csv(&mut w, grid, u, 0.0, true)?;
    w.flush()?;
    Ok(())
}

/// `z, sup|v|, (1+z)^{1/3} sup|v|` per level.
pub fn write_profile_csv<W: Write>(w: &mut W, profile: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "z,sup_v,weighted_sup_v")?;
    for &(z, s) in profile {
        writeln!(w, "{},{},{}", fmt17(z), fmt17(s), fmt17((1.0 + z).cbrt() * s))?;
    }
    Ok(())
}
