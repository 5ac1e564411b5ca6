//! Domain types shared by every stage of the pipeline.
//!
//! Pressure frames are stored row-major with row 0 at the *top* of the
//! sensor. Trajectory coordinates use a bottom-left origin with `x`
//! growing rightward and `y` growing upward, so the two systems are
//! related by [`SensorCoord::to_index`] and [`SensorCoord::cell_center`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Side length of the taxel grid.
pub const GRID: usize = 9;
/// Number of taxels in one frame.
pub const TAXELS: usize = GRID * GRID;
/// Nominal sensor sampling rate.
pub const NOMINAL_RATE_HZ: f64 = 15.0;
/// Number of gesture classes.
pub const NUM_CLASSES: usize = 10;

/// One 9x9 pressure snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub pressures: [f64; TAXELS],
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn zeros(timestamp_ms: u64) -> Self {
        Frame {
            pressures: [0.0; TAXELS],
            timestamp_ms,
        }
    }

    /// Builds a frame, rejecting negative or NaN pressures.
    pub fn new(pressures: [f64; TAXELS], timestamp_ms: u64) -> Result<Self> {
        if let Some(i) = pressures.iter().position(|p| p.is_nan() || *p < 0.0) {
            return Err(Error::Domain(format!(
                "taxel {i} has invalid pressure {}",
                pressures[i]
            )));
        }
        Ok(Frame {
            pressures,
            timestamp_ms,
        })
    }

    pub fn from_slice(values: &[f64], timestamp_ms: u64) -> Result<Self> {
        let pressures: [f64; TAXELS] = values.try_into().map_err(|_| {
            Error::Domain(format!(
                "frame needs {TAXELS} pressures, got {}",
                values.len()
            ))
        })?;
        Frame::new(pressures, timestamp_ms)
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pressures[row * GRID + col]
    }

    pub fn sum(&self) -> f64 {
        self.pressures.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pressures.iter().copied().fold(0.0, f64::max)
    }
}

/// Position on the sensor surface in taxel units, origin bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorCoord {
    pub x: f64,
    pub y: f64,
}

impl SensorCoord {
    pub fn new(x: f64, y: f64) -> Self {
        SensorCoord { x, y }
    }

    /// Storage index of the cell containing this coordinate.
    pub fn to_index(self) -> Result<usize> {
        let limit = GRID as f64;
        if !(0.0..limit).contains(&self.x) || !(0.0..limit).contains(&self.y) {
            return Err(Error::Domain(format!(
                "coordinate ({}, {}) outside [0,{GRID})",
                self.x, self.y
            )));
        }
        let col = self.x.floor() as usize;
        let row = GRID - 1 - self.y.floor() as usize;
        Ok(row * GRID + col)
    }

    /// Center of the cell with the given storage index.
    pub fn cell_center(index: usize) -> Result<Self> {
        if index >= TAXELS {
            return Err(Error::Domain(format!("taxel index {index} out of range")));
        }
        let (row, col) = (index / GRID, index % GRID);
        Ok(SensorCoord {
            x: col as f64 + 0.5,
            y: (GRID - 1 - row) as f64 + 0.5,
        })
    }
}

/// The ten gesture classes, in label-id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureClass {
    Tap,
    DoubleTap,
    SwipeDown,
    SwipeUp,
    SwipeRight,
    SwipeLeft,
    CircleCw,
    CircleCcw,
    #[serde(rename = "swipe_up_2f")]
    SwipeUp2f,
    #[serde(rename = "swipe_down_2f")]
    SwipeDown2f,
}

impl GestureClass {
    pub const ALL: [GestureClass; NUM_CLASSES] = [
        GestureClass::Tap,
        GestureClass::DoubleTap,
        GestureClass::SwipeDown,
        GestureClass::SwipeUp,
        GestureClass::SwipeRight,
        GestureClass::SwipeLeft,
        GestureClass::CircleCw,
        GestureClass::CircleCcw,
        GestureClass::SwipeUp2f,
        GestureClass::SwipeDown2f,
    ];

    pub fn from_id(id: usize) -> Result<Self> {
        GestureClass::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Domain(format!("gesture id {id} out of range 0..{NUM_CLASSES}")))
    }

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::Tap => "tap",
            GestureClass::DoubleTap => "double_tap",
            GestureClass::SwipeDown => "swipe_down",
            GestureClass::SwipeUp => "swipe_up",
            GestureClass::SwipeRight => "swipe_right",
            GestureClass::SwipeLeft => "swipe_left",
            GestureClass::CircleCw => "circle_cw",
            GestureClass::CircleCcw => "circle_ccw",
            GestureClass::SwipeUp2f => "swipe_up_2f",
            GestureClass::SwipeDown2f => "swipe_down_2f",
        }
    }
}

/// Looks up the class for a numeric label.
pub fn label_of_id(id: usize) -> Result<GestureClass> {
    GestureClass::from_id(id)
}

pub fn id_of_label(class: GestureClass) -> usize {
    class.id()
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GestureClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown gesture name {s:?}")))
    }
}

/// Sensor inclination during a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Tilt {
    Flat,
    Deg30,
    Deg60,
}

impl Tilt {
    pub const ALL: [Tilt; 3] = [Tilt::Flat, Tilt::Deg30, Tilt::Deg60];

    pub fn degrees(self) -> u32 {
        match self {
            Tilt::Flat => 0,
            Tilt::Deg30 => 30,
            Tilt::Deg60 => 60,
        }
    }
}

impl TryFrom<u32> for Tilt {
    type Error = Error;

    fn try_from(deg: u32) -> Result<Self> {
        match deg {
            0 => Ok(Tilt::Flat),
            30 => Ok(Tilt::Deg30),
            60 => Ok(Tilt::Deg60),
            other => Err(Error::Domain(format!("tilt must be 0, 30 or 60, got {other}"))),
        }
    }
}

impl From<Tilt> for u32 {
    fn from(t: Tilt) -> u32 {
        t.degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    Slow,
    Regular,
    Fast,
}

impl Speed {
    pub const ALL: [Speed; 3] = [Speed::Slow, Speed::Regular, Speed::Fast];
}

/// A variable-length gesture recording plus its metadata.
///
/// `true_len` is the number of real frames; it equals `frames.len()`
/// unless the recording was zero-padded by
/// [`pad_to_length`](crate::preprocess::pad_to_length).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub frames: Vec<Frame>,
    pub label: Option<GestureClass>,
    pub participant: String,
    pub tilt: Tilt,
    pub speed: Speed,
    pub rate_hz: f64,
    pub true_len: usize,
}

impl Recording {
    /// Validates the recording invariants: at least one frame, nondecreasing
    /// timestamps and no negative or NaN pressure.
    pub fn new(
        id: impl Into<String>,
        frames: Vec<Frame>,
        label: Option<GestureClass>,
        participant: impl Into<String>,
        tilt: Tilt,
        speed: Speed,
        rate_hz: f64,
    ) -> Result<Self> {
        let rec = Recording {
            id: id.into(),
            true_len: frames.len(),
            frames,
            label,
            participant: participant.into(),
            tilt,
            speed,
            rate_hz,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// Unlabelled recording with neutral metadata, used for live segments.
    pub fn unlabeled(id: impl Into<String>, frames: Vec<Frame>, rate_hz: f64) -> Result<Self> {
        Recording::new(id, frames, None, "", Tilt::Flat, Speed::Regular, rate_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Domain(format!("recording {} has no frames", self.id)));
        }
        if self.true_len == 0 || self.true_len > self.frames.len() {
            return Err(Error::Domain(format!(
                "recording {} has true length {} for {} frames",
                self.id,
                self.true_len,
                self.frames.len()
            )));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::Domain(format!(
                "recording {} has invalid rate {}",
                self.id, self.rate_hz
            )));
        }
        for (t, pair) in self.frames.windows(2).enumerate() {
            if pair[1].timestamp_ms < pair[0].timestamp_ms {
                return Err(Error::Domain(format!(
                    "recording {} timestamps decrease at frame {}",
                    self.id,
                    t + 1
                )));
            }
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.pressures.iter().any(|p| p.is_nan() || *p < 0.0) {
                return Err(Error::Domain(format!(
                    "recording {} frame {t} has a negative or NaN pressure",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Number of frames, including any padding.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The real (unpadded) frames.
    pub fn real_frames(&self) -> &[Frame] {
        &self.frames[..self.true_len]
    }

    pub fn total_pressure(&self) -> f64 {
        self.frames.iter().map(Frame::sum).sum()
    }

    /// Copy of the metadata with a different frame sequence.
    pub fn with_frames(&self, id: impl Into<String>, frames: Vec<Frame>) -> Recording {
        Recording {
            id: id.into(),
            true_len: frames.len(),
            frames,
            label: self.label,
            participant: self.participant.clone(),
            tilt: self.tilt,
            speed: self.speed,
            rate_hz: self.rate_hz,
        }
    }
}

/// One detected finger contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Finger {
    pub position: SensorCoord,
    /// Sum of the member taxel pressures.
    pub mass: f64,
}

/// Up to three finger contacts, sorted by descending mass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub fingers: Vec<Finger>,
}
