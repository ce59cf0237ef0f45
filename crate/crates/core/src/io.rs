//! Plain-text artifacts: CSV payloads with 17 significant digits (so every `f64`
//! reads back bit-exactly) and JSON sidecars carrying the grids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cm::WidthTrajectory;
use crate::density::{KGrid, ScatteringFactor};
use crate::error::{Error, Result};
use crate::grids::{PotentialTrajectory, RadialField, RadialGrid, StencilQuality, TimeGrid};
use crate::response::{CausalKernel, ResponseSeries};
use crate::rm::WavefunctionTrajectory;
use crate::virial::ResidualField;

/// Grid metadata stored next to a radial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub quantity: String,
    pub grid: RadialGrid,
    pub times: TimeGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn with_ext(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Write `t,r,value` rows, time-major.
pub fn write_field_csv<W: Write>(mut w: W, field: &RadialField) -> Result<()> {
    writeln!(w, "t,r,value")?;
    for (k, row) in field.values.iter().enumerate() {
        let t = num(field.times.t(k));
        for (j, v) in row.iter().enumerate() {
            writeln!(w, "{t},{},{}", num(field.grid.r(j)), num(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_rows<R: BufRead>(r: R, header: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let mut lines = r.lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(Error::Parse(format!("expected header `{header}`, found `{first}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        if row.len() != columns {
            return Err(Error::Parse(format!("line {}: {} columns, expected {columns}", i + 2, row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

/// Read back what [`write_field_csv`] wrote for the given grids.
pub fn read_field_csv<R: BufRead>(r: R, grid: RadialGrid, times: TimeGrid) -> Result<RadialField> {
    let rows = parse_rows(r, "t,r,value", 3)?;
    let n = grid.n_points();
    if rows.len() != n * times.n_slices() {
        return Err(Error::InputShape(format!(
            "{} samples for a {}×{} grid",
            rows.len(),
            times.n_slices(),
            n
        )));
    }
    let values = rows.chunks(n).map(|c| c.iter().map(|row| row[2]).collect()).collect();
    RadialField::new(grid, times, values)
}

/// `<stem>.csv` plus `<stem>.json`; returns the files written.
pub fn save_field(stem: &Path, field: &RadialField, quantity: &str) -> Result<Vec<PathBuf>> {
    let csv = with_ext(stem, ".csv");
    let json = with_ext(stem, ".json");
    write_field_csv(create(&csv)?, field)?;
    write_json(
        &json,
        &Sidecar {
            quantity: quantity.into(),
            grid: field.grid,
            times: field.times,
            mass: None,
        },
    )?;
    Ok(vec![csv, json])
}

pub fn load_field(stem: &Path) -> Result<(Sidecar, RadialField)> {
    let meta: Sidecar = read_json(&with_ext(stem, ".json"))?;
    let field = read_field_csv(BufReader::new(File::open(with_ext(stem, ".csv"))?), meta.grid, meta.times)?;
    Ok((meta, field))
}

/// `<stem>_re.csv`, `<stem>_im.csv` and `<stem>.json` for a reduced wavefunction `χ(s, t)`.
pub fn save_wavefunction(stem: &Path, traj: &WavefunctionTrajectory) -> Result<Vec<PathBuf>> {
    let part = |f: fn(&Complex64) -> f64| RadialField {
        grid: traj.grid,
        times: traj.times,
        values: traj.chi.iter().map(|row| row.iter().map(f).collect()).collect(),
    };
    let re = with_ext(stem, "_re.csv");
    let im = with_ext(stem, "_im.csv");
    let json = with_ext(stem, ".json");
    write_field_csv(create(&re)?, &part(|c| c.re))?;
    write_field_csv(create(&im)?, &part(|c| c.im))?;
    write_json(
        &json,
        &Sidecar {
            quantity: "reduced_wavefunction".into(),
            grid: traj.grid,
            times: traj.times,
            mass: Some(traj.mass),
        },
    )?;
    Ok(vec![re, im, json])
}

pub fn load_wavefunction(stem: &Path) -> Result<WavefunctionTrajectory> {
    let meta: Sidecar = read_json(&with_ext(stem, ".json"))?;
    let read = |suffix: &str| -> Result<RadialField> {
        read_field_csv(BufReader::new(File::open(with_ext(stem, suffix))?), meta.grid, meta.times)
    };
    let (re, im) = (read("_re.csv")?, read("_im.csv")?);
    let chi = re
        .values
        .iter()
        .zip(&im.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| Complex64::new(*x, *y)).collect())
        .collect();
    Ok(WavefunctionTrajectory {
        grid: meta.grid,
        times: meta.times,
        mass: meta.mass.ok_or_else(|| Error::Parse("wavefunction sidecar lacks `mass`".into()))?,
        chi,
    })
}

/// `t,a,adot`.
pub fn write_widths_csv<W: Write>(mut w: W, width: &WidthTrajectory) -> Result<()> {
    writeln!(w, "t,a,adot")?;
    for k in 0..width.a.len() {
        writeln!(w, "{},{},{}", num(width.times.t(k)), num(width.a[k]), num(width.adot[k]))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,k,re_f,im_f`.
pub fn write_scattering_csv<W: Write>(mut w: W, f: &ScatteringFactor) -> Result<()> {
    writeln!(w, "t,k,re_f,im_f")?;
    for (k, row) in f.f.iter().enumerate() {
        let t = num(f.times.t(k));
        for (q, v) in row.iter().enumerate() {
            writeln!(w, "{t},{},{},{}", num(f.kgrid.k(q)), num(v.re), num(v.im))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_scattering_csv<R: BufRead>(r: R, times: TimeGrid, kgrid: KGrid) -> Result<ScatteringFactor> {
    let rows = parse_rows(r, "t,k,re_f,im_f", 4)?;
    if rows.len() != kgrid.n_k * times.n_slices() {
        return Err(Error::InputShape("scattering table does not match its grids".into()));
    }
    let f = rows
        .chunks(kgrid.n_k)
        .map(|c| c.iter().map(|row| Complex64::new(row[2], row[3])).collect())
        .collect();
    Ok(ScatteringFactor { times, kgrid, f })
}

/// `t,r,V,mask` with `mask = 1` inside the evaluation region (`V` is `NaN` outside).
pub fn write_potential_csv<W: Write>(mut w: W, v: &PotentialTrajectory) -> Result<()> {
    writeln!(w, "t,r,V,mask")?;
    let f = &v.field;
    for (k, row) in f.values.iter().enumerate() {
        let t = num(f.times.t(k));
        for (j, x) in row.iter().enumerate() {
            let inside = u8::from(j < v.mask_len[k]);
            writeln!(w, "{t},{},{},{inside}", num(f.grid.r(j)), num(*x))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_potential_csv<R: BufRead>(r: R, grid: RadialGrid, times: TimeGrid) -> Result<PotentialTrajectory> {
    let rows = parse_rows(r, "t,r,V,mask", 4)?;
    let n = grid.n_points();
    if rows.len() != n * times.n_slices() {
        return Err(Error::InputShape("potential table does not match its grids".into()));
    }
    let values: Vec<Vec<f64>> = rows.chunks(n).map(|c| c.iter().map(|row| row[2]).collect()).collect();
    let mask_len = rows.chunks(n).map(|c| c.iter().take_while(|row| row[3] == 1.0).count()).collect();
    Ok(PotentialTrajectory {
        field: RadialField::new(grid, times, values)?,
        mask_len,
        quality: vec![StencilQuality::Central; times.n_slices()],
    })
}

/// Per-slice norms of a residual field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub grid: RadialGrid,
    pub times: TimeGrid,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
    pub mask_len: Vec<usize>,
    pub quality: Vec<StencilQuality>,
    /// Maxima over centrally differenced slices.
    pub max_l2: f64,
    pub max_linf: f64,
}

impl ResidualReport {
    pub fn new(name: &str, r: &ResidualField) -> Self {
        Self {
            name: name.into(),
            grid: r.field.grid,
            times: r.field.times,
            l2: r.l2.clone(),
            linf: r.linf.clone(),
            mask_len: r.mask_len.clone(),
            quality: r.quality.clone(),
            max_l2: r.max_l2(),
            max_linf: r.max_linf(),
        }
    }
}

pub fn save_residual(path: &Path, name: &str, r: &ResidualField) -> Result<()> {
    write_json(path, &ResidualReport::new(name, r))
}

/// Header of a lower-triangular kernel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelHeader {
    pub d: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub layout: String,
}

const KERNEL_LAYOUT: &str = "k,kp,i,j row-major; kp <= k only";

/// `<stem>.json` header plus `<stem>.csv` rows `k,kp,i,j,value` for `kp ≤ k`.
pub fn save_kernel(stem: &Path, chi: &CausalKernel) -> Result<Vec<PathBuf>> {
    let csv = with_ext(stem, ".csv");
    let json = with_ext(stem, ".json");
    let mut w = create(&csv)?;
    writeln!(w, "k,kp,i,j,value")?;
    let d = chi.dim();
    for k in 0..chi.n_slices() {
        for kp in 0..=k {
            let b = chi.block(k, kp);
            for i in 0..d {
                for j in 0..d {
                    writeln!(w, "{k},{kp},{i},{j},{}", num(b[i * d + j]))?;
                }
            }
        }
    }
    w.flush()?;
    let times = chi.times();
    write_json(
        &json,
        &KernelHeader {
            d,
            n_steps: times.n_steps(),
            dt: times.dt(),
            t_final: times.t_final(),
            layout: KERNEL_LAYOUT.into(),
        },
    )?;
    Ok(vec![csv, json])
}

pub fn load_kernel(stem: &Path) -> Result<CausalKernel> {
    let head: KernelHeader = read_json(&with_ext(stem, ".json"))?;
    let times = TimeGrid::new(head.t_final, head.n_steps)?;
    let rows = parse_rows(BufReader::new(File::open(with_ext(stem, ".csv"))?), "k,kp,i,j,value", 5)?;
    let dd = head.d * head.d;
    let mut out: Vec<Vec<f64>> = (0..times.n_slices()).map(|k| Vec::with_capacity((k + 1) * dd)).collect();
    for row in rows {
        let (k, kp) = (row[0] as usize, row[1] as usize);
        if kp > k || k >= out.len() {
            return Err(Error::Parse(format!("kernel entry ({k}, {kp}) outside the lower triangle")));
        }
        out[k].push(row[4]);
    }
    CausalKernel::from_rows(head.d, times, out)
}

/// `t,v_0,…,v_{d−1}`.
pub fn write_series_csv<W: Write>(mut w: W, s: &ResponseSeries, name: &str) -> Result<()> {
    let d = s.dim();
    let cols: Vec<String> = (0..d).map(|i| format!("{name}_{i}")).collect();
    writeln!(w, "t,{}", cols.join(","))?;
    for (k, row) in s.values.iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|x| num(*x)).collect();
        writeln!(w, "{},{}", num(s.times.t(k)), vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_roundtrip_is_bit_exact() {
        let grid = RadialGrid::new(3.0, 31).unwrap();
        let times = TimeGrid::new(1.0, 7).unwrap();
        let f = RadialField::from_fn(grid, times, |t, r| (r * 1.1 + t / 3.0).sin() * 1e-300f64.max((-r * r).exp()) + 0.1);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("n");
        save_field(&stem, &f, "density").unwrap();
        let (meta, back) = load_field(&stem).unwrap();
        assert_eq!(meta.quantity, "density");
        for (a, b) in f.values.iter().flatten().zip(back.values.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn kernel_roundtrip_keeps_the_triangle() {
        let times = TimeGrid::new(0.5, 5).unwrap();
        let chi = CausalKernel::from_fn(2, times, |k, kp, i, j| (k * 7 + kp * 3 + i + 2 * j) as f64 / 7.0);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("chi");
        save_kernel(&stem, &chi).unwrap();
        let back = load_kernel(&stem).unwrap();
        assert_eq!(back, chi);
        assert_eq!(back.audit().stored_upper_blocks, 0);
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let text = "t,r,value\n0.0,0.0,1.0\n0.0,oops,1.0\n";
        let grid = RadialGrid::new(1.0, 16).unwrap();
        let err = read_field_csv(text.as_bytes(), grid, TimeGrid::snapshot()).unwrap_err();
        assert!(matches!(err, Error::Parse(m) if m.contains("line 3")));
    }
}
