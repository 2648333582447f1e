//! Measured-trace ingestion and CSV emission.
//!
//! Trace files are UTF-8 CSV: optional `# key=value` metadata lines, the
//! header `freq_hz,s21_re,s21_im`, then one numeric row per frequency.
//! Output tables carry one header row and 12 significant digits.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::paramp::{GainProfile, PumpSettings, Saturation};

pub const TRACE_HEADER: [&str; 3] = ["freq_hz", "s21_re", "s21_im"];
pub const SWEEP_HEADER: [&str; 2] = ["power_dbm", "gain_db"];

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    pub freq: Vec<f64>,
    pub s21: Vec<Complex64>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSweep {
    pub power_dbm: Vec<f64>,
    pub gain_db: Vec<f64>,
}

/// Numeric table parsed from CSV, with the 1-based line of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<Vec<f64>>,
    pub lines: Vec<usize>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Reads `# key=value` lines, the exact `header`, then numeric rows.
pub fn parse_csv(text: &str, header: &[&str]) -> Result<CsvTable> {
    let mut meta = BTreeMap::new();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut seen_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim_end_matches('\r');
        if body.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if let Some(m) = body.strip_prefix('#') {
                let (k, v) = m
                    .split_once('=')
                    .ok_or_else(|| parse_err(line, format!("metadata must be `# key=value`, found `{body}`")))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            let cols: Vec<&str> = body.split(',').map(str::trim).collect();
            if cols != header {
                return Err(parse_err(line, format!("expected header `{}`, found `{body}`", header.join(","))));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = body.split(',').collect();
        if fields.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), fields.len())));
        }
        let row = fields
            .iter()
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|_| parse_err(line, format!("invalid number `{}`", f.trim())))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(line, "non-finite value"))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        lines.push(line);
    }
    if !seen_header {
        return Err(parse_err(text.lines().count().max(1), format!("missing header `{}`", header.join(","))));
    }
    Ok(CsvTable { meta, rows, lines })
}

fn check_increasing(table: &CsvTable) -> Result<()> {
    for k in 1..table.rows.len() {
        if !(table.rows[k][0] > table.rows[k - 1][0]) {
            return Err(Error::Order { line: table.lines[k], freq: table.rows[k][0] });
        }
    }
    Ok(())
}

pub fn parse_trace_csv(bytes: &[u8]) -> Result<MeasuredTrace> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(1, format!("not UTF-8: {e}")))?;
    let table = parse_csv(text, &TRACE_HEADER)?;
    if table.rows.is_empty() {
        return Err(parse_err(text.lines().count(), "trace has no data rows"));
    }
    check_increasing(&table)?;
    let line_of = |key: &str| {
        text.lines().position(|l| l.starts_with('#') && l[1..].trim_start().starts_with(key)).map_or(1, |p| p + 1)
    };
    if let Some(p) = table.meta.get("pump") {
        if p != "on" && p != "off" {
            return Err(parse_err(line_of("pump"), format!("pump must be `on` or `off`, found `{p}`")));
        }
    }
    for key in ["flux", "power_dbm"] {
        if let Some(v) = table.meta.get(key) {
            if !v.parse::<f64>().is_ok_and(f64::is_finite) {
                return Err(parse_err(line_of(key), format!("{key} must be a number, found `{v}`")));
            }
        }
    }
    Ok(MeasuredTrace {
        freq: table.rows.iter().map(|r| r[0]).collect(),
        s21: table.rows.iter().map(|r| Complex64::new(r[1], r[2])).collect(),
        meta: table.meta,
    })
}

pub fn parse_power_sweep_csv(bytes: &[u8]) -> Result<PowerSweep> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(1, format!("not UTF-8: {e}")))?;
    let table = parse_csv(text, &SWEEP_HEADER)?;
    check_increasing(&table)?;
    Ok(PowerSweep {
        power_dbm: table.rows.iter().map(|r| r[0]).collect(),
        gain_db: table.rows.iter().map(|r| r[1]).collect(),
    })
}

/// Gain |on|/|off| on the on-trace grid, with the off trace interpolated
/// linearly (real and imaginary parts) over the overlap only.
pub fn measured_gain(on: &MeasuredTrace, off: &MeasuredTrace) -> Result<GainProfile> {
    let (lo, hi) = (off.freq[0], off.freq[off.freq.len() - 1]);
    let mut freqs = Vec::new();
    let mut gain = Vec::new();
    let mut j = 0;
    for (&f, &s_on) in on.freq.iter().zip(&on.s21) {
        if f < lo || f > hi {
            continue;
        }
        while j + 1 < off.freq.len() && off.freq[j + 1] < f {
            j += 1;
        }
        let s_off = if j + 1 < off.freq.len() {
            let (f0, f1) = (off.freq[j], off.freq[j + 1]);
            let w = if f <= f0 { 0.0 } else { (f - f0) / (f1 - f0) };
            off.s21[j] * (1.0 - w) + off.s21[j + 1] * w
        } else {
            off.s21[j]
        };
        if s_off.norm() == 0.0 {
            return Err(Error::domain(format!("pump-off trace has zero magnitude at {f} Hz")));
        }
        freqs.push(f);
        gain.push(Complex64::new(s_on.norm() / s_off.norm(), 0.0));
    }
    if freqs.is_empty() {
        return Err(Error::domain(format!(
            "traces do not overlap: on {}..{} Hz, off {lo}..{hi} Hz",
            on.freq[0],
            on.freq[on.freq.len() - 1]
        )));
    }
    let n = freqs.len();
    Ok(GainProfile {
        freq_grid: freqs,
        signal_gain: gain,
        idler_gain: vec![Complex64::new(0.0, 0.0); n],
        pump: PumpSettings::off(f64::NAN),
    })
}

/// Restricts a profile to `[f_lo, f_hi]`.
pub fn crop_profile(profile: &GainProfile, f_lo: f64, f_hi: f64) -> GainProfile {
    let keep: Vec<usize> = (0..profile.freq_grid.len())
        .filter(|&k| profile.freq_grid[k] >= f_lo && profile.freq_grid[k] <= f_hi)
        .collect();
    GainProfile {
        freq_grid: keep.iter().map(|&k| profile.freq_grid[k]).collect(),
        signal_gain: keep.iter().map(|&k| profile.signal_gain[k]).collect(),
        idler_gain: keep.iter().map(|&k| profile.idler_gain[k]).collect(),
        pump: profile.pump,
    }
}

pub const PLATEAU_POINTS: usize = 3;
pub const PLATEAU_TOLERANCE_DB: f64 = 0.2;

/// 1-dB compression point relative to the mean of the low-power plateau.
pub fn compression_from_sweep(sweep: &PowerSweep) -> Result<Saturation> {
    let (p, g) = (&sweep.power_dbm, &sweep.gain_db);
    if p.len() != g.len() {
        return Err(Error::domain("power and gain columns differ in length"));
    }
    if p.len() < 5 {
        return Err(Error::domain(format!("need at least 5 sweep points, got {}", p.len())));
    }
    let plateau = &g[..PLATEAU_POINTS];
    let (lo, hi) = plateau.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    if hi - lo > PLATEAU_TOLERANCE_DB {
        return Err(Error::domain(format!(
            "no low-power plateau: first {PLATEAU_POINTS} gains span {:.3} dB",
            hi - lo
        )));
    }
    let reference = plateau.iter().sum::<f64>() / PLATEAU_POINTS as f64;
    let target = reference - 1.0;
    for k in 1..p.len() {
        if g[k] <= target {
            let p1db = p[k - 1] + (p[k] - p[k - 1]) * (g[k - 1] - target) / (g[k - 1] - g[k]);
            return Ok(Saturation::Compressed { p1db_dbm: p1db, small_signal_db: reference });
        }
    }
    Ok(Saturation::NoCompression { small_signal_db: reference })
}

/// 12 significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

/// CSV text with one header row and `\n` line endings.
pub fn table_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_value).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &MeasuredTrace) -> String {
    let mut out = String::new();
    for (k, v) in &trace.meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(&table_csv(
        &TRACE_HEADER,
        trace.freq.iter().zip(&trace.s21).map(|(f, s)| vec![*f, s.re, s.im]),
    ));
    out
}

pub fn power_sweep_csv(sweep: &PowerSweep) -> String {
    table_csv(&SWEEP_HEADER, sweep.power_dbm.iter().zip(&sweep.gain_db).map(|(p, g)| vec![*p, *g]))
}

/// Writes to a temporary file in the target directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
    let mut tmp = builder.tempfile_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
