//! Shift augmentation: every gesture is copied to the four extreme
//! positions it can occupy without any active taxel leaving the grid.
//!
//! The bounding box is taken over *all* frames, so the whole gesture moves
//! rigidly. A direction whose maximal shift is zero is skipped rather than
//! emitted as a duplicate, which gives between one and five outputs per
//! gesture.
//!
//! ```
//! use tactile_gesture::augment::{augment_dataset, bounding_box};
//! use tactile_gesture::types::{Frame, Recording};
//!
//! let mut frame = Frame::zeros(0);
//! frame.pressures[4 * 9 + 4] = 1.0; // centre taxel
//! let rec = Recording::unlabeled("g", vec![frame], 15.0).unwrap();
//! let bx = bounding_box(&rec, 0.1).unwrap();
//! assert_eq!((bx.x_tl, bx.y_tl, bx.x_br, bx.y_br), (4, 4, 4, 4));
//! let out = augment_dataset(&[rec], 0.1);
//! assert_eq!(out.recordings.len(), 5);
//! ```

use crate::error::{Error, Result};
use crate::types::{Frame, Recording, GRID};

/// Inclusive box in storage coordinates: `x` is the column, `y` the row
/// (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub x_tl: usize,
    pub y_tl: usize,
    pub x_br: usize,
    pub y_br: usize,
}

impl BoundingBox {
    pub fn shift_amounts(&self) -> ShiftAmounts {
        ShiftAmounts {
            right: GRID - self.x_br - 1,
            left: self.x_tl,
            up: self.y_tl,
            down: GRID - self.y_br - 1,
        }
    }
}

/// Largest translation in each direction that keeps the box on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftAmounts {
    pub right: usize,
    pub left: usize,
    pub up: usize,
    pub down: usize,
}

impl ShiftAmounts {
    /// `(suffix, dx, dy)` for each nonzero direction, in the order
    /// right, left, up, down.
    pub fn translations(&self) -> Vec<(&'static str, i32, i32)> {
        [
            ("r", self.right as i32, 0),
            ("l", -(self.left as i32), 0),
            ("u", 0, -(self.up as i32)),
            ("d", 0, self.down as i32),
        ]
        .into_iter()
        .filter(|(_, dx, dy)| *dx != 0 || *dy != 0)
        .collect()
    }
}

/// Tightest box covering every taxel above `threshold` in any frame.
pub fn bounding_box(rec: &Recording, threshold: f64) -> Result<BoundingBox> {
    let mut bx: Option<BoundingBox> = None;
    for frame in &rec.frames {
        for (i, p) in frame.pressures.iter().enumerate() {
            if *p <= threshold {
                continue;
            }
            let (row, col) = (i / GRID, i % GRID);
            bx = Some(match bx {
                None => BoundingBox {
                    x_tl: col,
                    y_tl: row,
                    x_br: col,
                    y_br: row,
                },
                Some(b) => BoundingBox {
                    x_tl: b.x_tl.min(col),
                    y_tl: b.y_tl.min(row),
                    x_br: b.x_br.max(col),
                    y_br: b.y_br.max(row),
                },
            });
        }
    }
    bx.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "recording {} has no taxel above {threshold}",
            rec.id
        ))
    })
}

/// Translates every frame by `dx` columns (positive = right) and `dy` rows
/// (positive = down). Vacated cells are zero. Fails if a taxel above
/// `threshold` would leave the grid; weaker pressure shifted off the edge
/// is dropped.
pub fn shift(rec: &Recording, dx: i32, dy: i32, threshold: f64) -> Result<Recording> {
    let g = GRID as i32;
    let mut frames = Vec::with_capacity(rec.frames.len());
    for (t, frame) in rec.frames.iter().enumerate() {
        let mut out = Frame::zeros(frame.timestamp_ms);
        for (i, p) in frame.pressures.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let row = (i / GRID) as i32 + dy;
            let col = (i % GRID) as i32 + dx;
            if (0..g).contains(&row) && (0..g).contains(&col) {
                out.pressures[(row * g + col) as usize] = *p;
            } else if *p > threshold {
                return Err(Error::InvalidArgument(format!(
                    "shift ({dx}, {dy}) pushes active taxel {i} of frame {t} off the grid"
                )));
            }
        }
        frames.push(out);
    }
    let mut out = rec.with_frames(rec.id.clone(), frames);
    out.true_len = rec.true_len;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutput {
    pub recordings: Vec<Recording>,
    /// Recordings dropped because no taxel exceeded the threshold.
    pub skipped_silent: usize,
}

/// Emits each recording followed by its maximal right, left, up and down
/// shifts (zero-length shifts omitted). Shifted copies get the id
/// `"{source}+{r|l|u|d}{amount}"`.
pub fn augment_dataset(recordings: &[Recording], threshold: f64) -> AugmentOutput {
    let mut out = AugmentOutput::default();
    for rec in recordings {
        let bx = match bounding_box(rec, threshold) {
            Ok(b) => b,
            Err(_) => {
                log::warn!("augmentation skipped silent recording {}", rec.id);
                out.skipped_silent += 1;
                continue;
            }
        };
        out.recordings.push(rec.clone());
        for (suffix, dx, dy) in bx.shift_amounts().translations() {
            let mut copy = shift(rec, dx, dy, threshold)
                .expect("maximal shift keeps the bounding box on the grid");
            copy.id = format!("{}+{suffix}{}", rec.id, dx.abs().max(dy.abs()));
            out.recordings.push(copy);
        }
    }
    out
}

/// Id of the recording an augmented copy was derived from.
pub fn source_id(id: &str) -> &str {
    id.split_once('+').map_or(id, |(src, _)| src)
}
