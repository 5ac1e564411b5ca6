//! Line-delimited JSON dataset files, one recording per line.
//!
//! Each line is an object with the keys `id`, `label`, `participant`,
//! `tilt_deg`, `speed`, `rate_hz` and `frames` (a list of 81-element
//! lists). Frame timestamps default to the nominal schedule
//! `round(i * 1000 / rate_hz)`; recordings whose timestamps differ carry an
//! extra `timestamps_ms` list, and zero-padded recordings carry `true_len`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Frame, GestureClass, Recording, Speed, Tilt, TAXELS};

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    label: Option<GestureClass>,
    participant: String,
    tilt_deg: Tilt,
    speed: Speed,
    rate_hz: f64,
    frames: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamps_ms: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_len: Option<usize>,
}

/// Timestamp of frame `index` on the nominal sampling schedule.
pub fn nominal_timestamp_ms(index: usize, rate_hz: f64) -> u64 {
    (index as f64 * 1000.0 / rate_hz).round() as u64
}

fn to_line(rec: &Recording) -> RecordLine {
    let nominal = rec
        .frames
        .iter()
        .enumerate()
        .all(|(i, f)| f.timestamp_ms == nominal_timestamp_ms(i, rec.rate_hz));
    RecordLine {
        id: rec.id.clone(),
        label: rec.label,
        participant: rec.participant.clone(),
        tilt_deg: rec.tilt,
        speed: rec.speed,
        rate_hz: rec.rate_hz,
        frames: rec.frames.iter().map(|f| f.pressures.to_vec()).collect(),
        timestamps_ms: (!nominal).then(|| rec.frames.iter().map(|f| f.timestamp_ms).collect()),
        true_len: (rec.true_len != rec.frames.len()).then_some(rec.true_len),
    }
}

fn from_line(line: RecordLine) -> Result<Recording> {
    if let Some(ts) = &line.timestamps_ms {
        if ts.len() != line.frames.len() {
            return Err(Error::Domain(format!(
                "{} timestamps for {} frames",
                ts.len(),
                line.frames.len()
            )));
        }
    }
    let mut frames = Vec::with_capacity(line.frames.len());
    for (i, values) in line.frames.iter().enumerate() {
        if values.len() != TAXELS {
            return Err(Error::Domain(format!(
                "frame {i} has {} values, expected {TAXELS}",
                values.len()
            )));
        }
        let ts = match &line.timestamps_ms {
            Some(ts) => ts[i],
            None => nominal_timestamp_ms(i, line.rate_hz),
        };
        frames.push(Frame::from_slice(values, ts)?);
    }
    let mut rec = Recording::new(
        line.id,
        frames,
        line.label,
        line.participant,
        line.tilt_deg,
        line.speed,
        line.rate_hz,
    )?;
    if let Some(n) = line.true_len {
        rec.true_len = n;
        rec.validate()?;
    }
    Ok(rec)
}

pub fn write_dataset_to<W: Write>(recordings: &[Recording], mut out: W) -> Result<usize> {
    for rec in recordings {
        serde_json::to_writer(&mut out, &to_line(rec))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(recordings.len())
}

/// Writes the dataset and returns the number of recordings written.
pub fn write_dataset(recordings: &[Recording], path: impl AsRef<Path>) -> Result<usize> {
    let file = File::create(path)?;
    write_dataset_to(recordings, BufWriter::new(file))
}

pub fn read_dataset_from<R: BufRead>(input: R) -> Result<Vec<Recording>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        let rec = from_line(parsed).map_err(|e| Error::Dataset {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Recording>> {
    let file = File::open(path)?;
    read_dataset_from(BufReader::new(file))
}
