//! CSV and JSON formats for landscapes, gradient curves, spectra and
//! reports. Floats are written with the shortest round-trip representation,
//! so write → read reproduces values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{CurvePoint, GradientCurve};
use crate::error::{Error, Result};
use crate::icla::{Landscape, LandscapeMeta};

fn parse_err(path: &Path, line: Option<u64>, message: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    Ok(csv::Writer::from_path(path)?)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| parse_err(path, None, e.to_string()))
}

fn read_records(path: &Path) -> Result<(csv::StringRecord, Vec<(u64, csv::StringRecord)>)> {
    let mut rdr = csv_reader(path)?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, Some(1), e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok((header, rows))
}

fn column(path: &Path, header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| parse_err(path, Some(1), format!("missing column '{name}'")))
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| parse_err(path, Some(line), format!("missing value for '{name}'")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, Some(line), format!("cannot parse '{raw}' as {name}")))
}

/// Metadata file stored next to a landscape CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn write_landscape(path: &Path, ls: &Landscape) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (0..ls.m).map(|k| format!("theta_{k}")).collect();
    header.push("cost".into());
    header.push("cost_err".into());
    w.write_record(&header)?;
    for ((p, c), e) in ls.points.iter().zip(&ls.costs).zip(&ls.cost_errors) {
        let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
        row.push(c.to_string());
        row.push(e.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), &ls.meta)
}

/// Reads a landscape CSV; the JSON sidecar is optional.
pub fn read_landscape(path: &Path) -> Result<Landscape> {
    let (header, rows) = read_records(path)?;
    let mut theta_cols = Vec::new();
    while let Some(i) = header.iter().position(|h| h.trim() == format!("theta_{}", theta_cols.len())) {
        theta_cols.push(i);
    }
    if theta_cols.is_empty() {
        return Err(parse_err(path, Some(1), "missing column 'theta_0'"));
    }
    let cost_col = column(path, &header, "cost")?;
    let err_col = column(path, &header, "cost_err")?;
    let mut points = Vec::with_capacity(rows.len());
    let mut costs = Vec::with_capacity(rows.len());
    let mut errs = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let p = theta_cols
            .iter()
            .enumerate()
            .map(|(k, &c)| field::<f64>(path, *line, rec, c, &format!("theta_{k}")))
            .collect::<Result<Vec<f64>>>()?;
        points.push(p);
        costs.push(field::<f64>(path, *line, rec, cost_col, "cost")?);
        errs.push(field::<f64>(path, *line, rec, err_col, "cost_err")?);
    }
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        let text = fs::read_to_string(&sidecar)?;
        serde_json::from_str::<LandscapeMeta>(&text).map_err(|e| {
            parse_err(&sidecar, Some(e.line() as u64), e.to_string())
        })?
    } else {
        LandscapeMeta::default()
    };
    Landscape::new(points, costs, errs, meta).map_err(|e| parse_err(path, None, e.to_string()))
}

pub fn write_curve(path: &Path, curve: &GradientCurve) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_cir_us", "grad_norm", "grad_err", "layers", "n_qubits", "noise_tag"])?;
    for p in &curve.points {
        w.write_record([
            p.t_cir_us.to_string(),
            p.gradient.to_string(),
            p.err.to_string(),
            p.layers.to_string(),
            curve.n_qubits.to_string(),
            curve.noise_tag.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<GradientCurve> {
    let (header, rows) = read_records(path)?;
    let t = column(path, &header, "t_cir_us")?;
    let g = column(path, &header, "grad_norm")?;
    let e = column(path, &header, "grad_err")?;
    let l = column(path, &header, "layers")?;
    let n = column(path, &header, "n_qubits")?;
    let tag = column(path, &header, "noise_tag")?;
    let mut points = Vec::with_capacity(rows.len());
    let mut n_qubits = 0;
    let mut noise_tag = String::new();
    for (line, rec) in &rows {
        points.push(CurvePoint {
            t_cir_us: field(path, *line, rec, t, "t_cir_us")?,
            gradient: field(path, *line, rec, g, "grad_norm")?,
            err: field(path, *line, rec, e, "grad_err")?,
            layers: field(path, *line, rec, l, "layers")?,
        });
        n_qubits = field(path, *line, rec, n, "n_qubits")?;
        noise_tag = rec.get(tag).unwrap_or_default().to_string();
    }
    GradientCurve::new(points, n_qubits, &noise_tag, "").map_err(|e| parse_err(path, None, e.to_string()))
}

pub fn write_spectrum(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rank", "eigenvalue"])?;
    for (k, v) in eigenvalues.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectral_histogram(path: &Path, bins: &[crate::analysis::SpectralBin]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["lo", "hi", "count"])?;
    for b in bins {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_analytic_spectrum(path: &Path, levels: &[(f64, u64)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["decayed", "eigenvalue", "multiplicity"])?;
    for (k, (v, m)) in levels.iter().enumerate() {
        w.write_record([k.to_string(), v.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cost_spectrum(path: &Path, sorted: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["sorted_index", "energy"])?;
    for (k, e) in sorted.iter().enumerate() {
        w.write_record([k.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Landscape costs sorted ascending, with their original point index.
pub fn write_sorted_costs(path: &Path, ls: &Landscape) -> Result<()> {
    let mut idx: Vec<usize> = (0..ls.len()).collect();
    idx.sort_by(|&a, &b| ls.costs[a].total_cmp(&ls.costs[b]));
    let mut w = csv_writer(path)?;
    w.write_record(["param_index", "cost_mean", "std_error"])?;
    for i in idx {
        w.write_record([i.to_string(), ls.costs[i].to_string(), ls.cost_errors[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Parameter vectors, one per row, comma separated. Lines starting with `#`
/// and a non-numeric first line (header) are skipped.
pub fn read_parameter_sets(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => out.push(v),
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(_) => return Err(parse_err(path, Some(i as u64 + 1), format!("not a number list: '{line}'"))),
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, None, "no parameter vectors found"));
    }
    Ok(out)
}

/// T1 values in µs: whitespace or comma separated, `#` comments allowed,
/// an optional leading header line.
pub fn read_t1_list(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        for tok in body.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            match tok.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) if out.is_empty() && i == 0 => break,
                Err(_) => return Err(parse_err(path, Some(i as u64 + 1), format!("cannot parse '{tok}' as T1"))),
            }
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, None, "no T1 values found"));
    }
    Ok(out)
}
