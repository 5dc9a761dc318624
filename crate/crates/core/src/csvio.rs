//! CSV readers and writers for every emitted data format. Floats are
//! written with Rust's shortest round-trip formatter and parsed back with
//! `f64::from_str`, so write -> read is exact.

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::holeburn::{FeatureKind, HoleFeature, HolePattern};
use crate::levels::{m_label, parse_m_label, PopulationState, LEVELS};
use crate::spectrum::Spectrum;
use std::fmt::Write as _;
use std::path::Path;

pub const SPECTRUM_HEADER: &str = "frequency_hz,value";
pub const TRAJECTORY_HEADER: &str = "time_s,p0,p1,p2,p3,p4,p5,p6,p7";
pub const LIFETIME_HEADER: &str = "field_T,lifetime_s";
pub const PATTERN_HEADER: &str = "frequency_hz,sign,amplitude,ground_m";
pub const TRACE_HEADER: &str = "time_s,amplitude";
pub const DECAY_HEADER: &str = "tau_s,amplitude";
pub const RATE_HEADER: &str = "temperature_k,gamma_per_s";
pub const FIT_HEADER: &str = "parameter,value,interval_low,interval_high";

/// Write via a temp file plus rename so readers never observe a partial
/// file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn parse_float(field: &str, line_no: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Parse(format!("line {line_no}: '{field}' is not a number"))
    })
}

/// Split CSV content into records, enforcing the header and a fixed column
/// count. Returns (line number, fields) pairs; blank trailing lines are
/// allowed, interior blank lines are not.
fn records<'a>(
    content: &'a str,
    header: &str,
    columns: usize,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == header => {}
        Some((_, first)) => {
            return Err(Error::Parse(format!(
                "expected header '{header}', got '{}'",
                first.trim()
            )))
        }
        None => return Err(Error::Parse(format!("empty file, expected header '{header}'"))),
    }
    let mut out = Vec::new();
    let mut blank_at: Option<usize> = None;
    for (i, line) in lines {
        if line.trim().is_empty() {
            blank_at.get_or_insert(i + 1);
            continue;
        }
        if let Some(b) = blank_at {
            return Err(Error::Parse(format!("line {b}: blank line between records")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::Parse(format!(
                "line {}: expected {columns} fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

fn format_pairs(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = String::with_capacity(rows.len() * 24 + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for &(a, b) in rows {
        let _ = writeln!(s, "{a},{b}");
    }
    s
}

fn parse_pairs(content: &str, header: &str) -> Result<Vec<(f64, f64)>> {
    records(content, header, 2)?
        .into_iter()
        .map(|(no, f)| Ok((parse_float(f[0], no)?, parse_float(f[1], no)?)))
        .collect()
}

pub fn format_spectrum(spectrum: &Spectrum) -> String {
    let rows: Vec<(f64, f64)> = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.values)
        .map(|(&f, &v)| (f, v))
        .collect();
    format_pairs(SPECTRUM_HEADER, &rows)
}

pub fn parse_spectrum(content: &str) -> Result<Spectrum> {
    let (frequencies, values) = parse_pairs(content, SPECTRUM_HEADER)?.into_iter().unzip();
    Spectrum::new(frequencies, values)
}

pub fn format_lifetime_curve(rows: &[(f64, f64)]) -> String {
    format_pairs(LIFETIME_HEADER, rows)
}

pub fn parse_lifetime_curve(content: &str) -> Result<Vec<(f64, f64)>> {
    parse_pairs(content, LIFETIME_HEADER)
}

pub fn format_trace(rows: &[(f64, f64)]) -> String {
    format_pairs(TRACE_HEADER, rows)
}

pub fn parse_trace(content: &str) -> Result<Vec<(f64, f64)>> {
    parse_pairs(content, TRACE_HEADER)
}

pub fn format_decay(rows: &[(f64, f64)]) -> String {
    format_pairs(DECAY_HEADER, rows)
}

pub fn parse_decay(content: &str) -> Result<Vec<(f64, f64)>> {
    parse_pairs(content, DECAY_HEADER)
}

pub fn format_rate_curve(rows: &[(f64, f64)]) -> String {
    format_pairs(RATE_HEADER, rows)
}

pub fn parse_rate_curve(content: &str) -> Result<Vec<(f64, f64)>> {
    parse_pairs(content, RATE_HEADER)
}

pub fn format_trajectory(times: &[f64], states: &[PopulationState]) -> Result<String> {
    if times.len() != states.len() {
        return Err(Error::InvalidState(format!(
            "trajectory has {} times but {} states",
            times.len(),
            states.len()
        )));
    }
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for (t, state) in times.iter().zip(states) {
        let _ = write!(s, "{t}");
        for g in 0..LEVELS {
            let _ = write!(s, ",{}", state.fraction(g));
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_trajectory(content: &str) -> Result<(Vec<f64>, Vec<[f64; LEVELS]>)> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (no, f) in records(content, TRAJECTORY_HEADER, 1 + LEVELS)? {
        times.push(parse_float(f[0], no)?);
        let mut p = [0.0; LEVELS];
        for (g, slot) in p.iter_mut().enumerate() {
            *slot = parse_float(f[g + 1], no)?;
        }
        states.push(p);
    }
    Ok((times, states))
}

/// One row of a hole-pattern CSV. `frequency_hz` is the offset from the
/// burned transition; sign -1 marks a hole, +1 an anti-hole.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternRow {
    pub frequency_hz: f64,
    pub sign: i8,
    pub amplitude: f64,
    pub ground: usize,
}

impl From<&HoleFeature> for PatternRow {
    fn from(f: &HoleFeature) -> Self {
        PatternRow {
            frequency_hz: f.offset_hz,
            sign: match f.kind {
                FeatureKind::Hole => -1,
                FeatureKind::AntiHole => 1,
            },
            amplitude: f.amplitude,
            ground: f.ground,
        }
    }
}

pub fn format_pattern(pattern: &HolePattern) -> String {
    let mut s = String::from(PATTERN_HEADER);
    s.push('\n');
    for f in &pattern.features {
        let row = PatternRow::from(f);
        let _ = writeln!(
            s,
            "{},{},{},{}",
            row.frequency_hz,
            row.sign,
            row.amplitude,
            m_label(row.ground)
        );
    }
    s
}

pub fn parse_pattern(content: &str) -> Result<Vec<PatternRow>> {
    records(content, PATTERN_HEADER, 4)?
        .into_iter()
        .map(|(no, f)| {
            let sign = match f[1].trim() {
                "-1" => -1,
                "1" | "+1" => 1,
                other => {
                    return Err(Error::Parse(format!(
                        "line {no}: sign must be -1 or 1, got '{other}'"
                    )))
                }
            };
            Ok(PatternRow {
                frequency_hz: parse_float(f[0], no)?,
                sign,
                amplitude: parse_float(f[2], no)?,
                ground: parse_m_label(f[3].trim())?,
            })
        })
        .collect()
}

/// One row of a fitted-parameter CSV. Interval endpoints that ran into a
/// bound before doubling the deviation (open endpoints) serialize as
/// -inf/inf, which `{}`/from_str round-trip.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub parameter: String,
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

pub fn format_fit(result: &FitResult) -> String {
    let mut s = String::from(FIT_HEADER);
    s.push('\n');
    for (i, name) in result.names.iter().enumerate() {
        let (low, high) = match result.intervals.get(i) {
            Some(iv) => (
                if iv.low_open { f64::NEG_INFINITY } else { iv.low },
                if iv.high_open { f64::INFINITY } else { iv.high },
            ),
            None => (result.params[i], result.params[i]),
        };
        let _ = writeln!(s, "{},{},{},{}", name, result.params[i], low, high);
    }
    s
}

pub fn parse_fit(content: &str) -> Result<Vec<FitRow>> {
    records(content, FIT_HEADER, 4)?
        .into_iter()
        .map(|(no, f)| {
            if f[0].trim().is_empty() {
                return Err(Error::Parse(format!("line {no}: empty parameter name")));
            }
            Ok(FitRow {
                parameter: f[0].trim().to_string(),
                value: parse_float(f[1], no)?,
                low: parse_float(f[2], no)?,
                high: parse_float(f[3], no)?,
            })
        })
        .collect()
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
