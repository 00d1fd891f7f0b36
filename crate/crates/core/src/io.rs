//! WAV and CSV readers and writers.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::parse(path, other.to_string()),
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    if !e.is_io_error() {
        return Error::parse(path, e.to_string());
    }
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::parse(path, format!("{kind:?}")),
    }
}

/// Writes mono 32-bit float PCM.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in samples {
        writer.write_sample(s as f32).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Reads mono 16-bit integer or 32-bit float PCM as samples in `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::parse(path, format!("expected mono audio, found {} channels", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (format, bits) => {
            return Err(Error::parse(path, format!("unsupported sample format {format:?} with {bits} bits")));
        }
    }
    .map_err(|e| wav_error(path, e))?;
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// One reference pitch; `f0_hz == 0` marks an unvoiced frame.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Annotation {
    pub time_sec: f64,
    pub f0_hz: f64,
}

pub fn write_annotations(path: &Path, rows: &[Annotation]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `time_sec,f0_hz` rows.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<Annotation>().enumerate() {
        let row = rec.map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2)))?;
        if !(row.time_sec.is_finite() && row.f0_hz.is_finite() && row.f0_hz >= 0.0) {
            return Err(Error::parse(path, format!("line {}: invalid values", i + 2)));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Reads `position,weight` rows; a header line is optional.
pub fn read_distribution_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let (mut positions, mut weights) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        if line == 1 && rec.get(0) == Some("position") {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::parse(path, format!("line {line}: expected 2 fields, found {}", rec.len())));
        }
        let field = |j: usize| {
            rec[j]
                .parse::<f64>()
                .map_err(|e| Error::parse(path, format!("line {line}: {:?}: {e}", &rec[j])))
        };
        positions.push(field(0)?);
        weights.push(field(1)?);
    }
    Ok((positions, weights))
}
