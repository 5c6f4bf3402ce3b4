//! Newline-delimited telemetry log.
//!
//! Vector line:   `tick,device_id,level,v1,...,vd`
//! Sequence line: `tick,device_id,level,seq_len,dim,x(0,0),x(0,1),...` (row-major)
//!
//! Floats use Rust's shortest round-trip formatting, so a written log parses
//! back bit-exactly. `NaN` is accepted.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::types::{BehaviorLevel, DeviceId, Sample, SequenceSample, TelemetrySample};
use super::TelemetryError;

pub fn format_sample(sample: &Sample) -> String {
    let mut out = String::new();
    match sample {
        Sample::Vector(v) => {
            write!(out, "{},{},{}", v.tick, v.device_id, v.level).unwrap();
            for x in &v.values {
                write!(out, ",{x}").unwrap();
            }
        }
        Sample::Sequence(s) => {
            write!(out, "{},{},{},{},{}", s.tick, s.device_id, s.level, s.seq_len, s.dim).unwrap();
            for x in &s.data {
                write!(out, ",{x}").unwrap();
            }
        }
    }
    out
}

/// Parses one line. `is_sequence` tells whether the `(device, level)` pair
/// emits sequences; `None` means the pair is unknown.
pub fn parse_line<F>(line: &str, is_sequence: F) -> Result<Sample, TelemetryError>
where
    F: Fn(&DeviceId, BehaviorLevel) -> Option<bool>,
{
    let mut fields = line.trim_end().split(',');
    let mut next = |what: &str| fields.next().ok_or_else(|| TelemetryError::Parse(format!("missing {what}")));
    let tick: u64 = next("tick")?.parse().map_err(|e| TelemetryError::Parse(format!("bad tick: {e}")))?;
    let device_id = DeviceId::new(next("device_id")?);
    let level: BehaviorLevel = next("level")?.parse()?;
    let seq = is_sequence(&device_id, level)
        .ok_or_else(|| TelemetryError::Parse(format!("unknown target {device_id}/{level}")))?;
    if seq {
        let seq_len: usize =
            next("seq_len")?.parse().map_err(|e| TelemetryError::Parse(format!("bad seq_len: {e}")))?;
        let dim: usize = next("dim")?.parse().map_err(|e| TelemetryError::Parse(format!("bad dim: {e}")))?;
        let data = parse_floats(fields)?;
        if data.len() != seq_len * dim {
            return Err(TelemetryError::Parse(format!(
                "sequence carries {} values, header says {seq_len}x{dim}",
                data.len()
            )));
        }
        Ok(Sample::Sequence(SequenceSample { tick, device_id, level, seq_len, dim, data }))
    } else {
        let values = parse_floats(fields)?;
        Ok(Sample::Vector(TelemetrySample { tick, device_id, level, values }))
    }
}

fn parse_floats<'a>(fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>, TelemetryError> {
    fields.map(|f| f.parse::<f64>().map_err(|e| TelemetryError::Parse(format!("bad value `{f}`: {e}")))).collect()
}

pub fn write_samples<W: Write>(mut w: W, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        writeln!(w, "{}", format_sample(s))?;
    }
    Ok(())
}

pub fn read_samples<R, F>(r: R, is_sequence: F) -> Result<Vec<Sample>, TelemetryError>
where
    R: BufRead,
    F: Fn(&DeviceId, BehaviorLevel) -> Option<bool>,
{
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| TelemetryError::Parse(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, &is_sequence).map_err(|e| TelemetryError::Parse(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}
