//! Temporal filtering, normalization, padding and finger tracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Finger, Frame, Recording, SensorCoord, TrajectoryFrame, GRID, TAXELS};

/// Pressure above which a taxel counts as touched.
pub const CONTACT_THRESHOLD: f64 = 0.1;
/// Canonical padded sequence length.
pub const PAD_LENGTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub window: usize,
    pub pad_length: usize,
    pub contact_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window: 3,
            pad_length: PAD_LENGTH,
            contact_threshold: CONTACT_THRESHOLD,
        }
    }
}

/// Per-taxel centered moving mean over time. Near the ends the window
/// shrinks to the frames that exist.
pub fn running_average(rec: &Recording, window: usize) -> Result<Recording> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window must be odd and positive, got {window}"
        )));
    }
    let t_len = rec.frames.len();
    if window > t_len {
        return Err(Error::InvalidArgument(format!(
            "window {window} longer than recording ({t_len} frames)"
        )));
    }
    let half = window / 2;
    // Prefix sums per taxel keep this O(T * 81) regardless of window.
    let mut prefix = vec![[0.0f64; TAXELS]; t_len + 1];
    for (t, f) in rec.frames.iter().enumerate() {
        for i in 0..TAXELS {
            prefix[t + 1][i] = prefix[t][i] + f.pressures[i];
        }
    }
    let frames = (0..t_len)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half).min(t_len - 1);
            let n = (hi - lo + 1) as f64;
            let mut out = Frame::zeros(rec.frames[t].timestamp_ms);
            for i in 0..TAXELS {
                // Clamp tiny negative round-off from the prefix difference.
                out.pressures[i] = ((prefix[hi + 1][i] - prefix[lo][i]) / n).max(0.0);
            }
            out
        })
        .collect();
    let mut out = rec.with_frames(rec.id.clone(), frames);
    out.true_len = rec.true_len;
    Ok(out)
}

/// Min-max scaling over all taxels and frames jointly onto [0, 1].
/// A constant recording maps to all zeros.
pub fn normalize(rec: &Recording) -> Recording {
    let (lo, hi) = rec
        .frames
        .iter()
        .flat_map(|f| f.pressures.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(*p), hi.max(*p))
        });
    let range = hi - lo;
    let mut out = rec.clone();
    for f in &mut out.frames {
        for p in f.pressures.iter_mut() {
            *p = if range > 0.0 { (*p - lo) / range } else { 0.0 };
        }
    }
    out
}

/// Appends zero frames up to `length`, recording the original length in
/// `true_len`.
pub fn pad_to_length(rec: &Recording, length: usize) -> Result<Recording> {
    let t_len = rec.frames.len();
    if t_len > length {
        return Err(Error::InvalidArgument(format!(
            "recording {} has {t_len} frames, longer than pad length {length}",
            rec.id
        )));
    }
    let mut out = rec.clone();
    let last_ts = rec.frames.last().map(|f| f.timestamp_ms).unwrap_or(0);
    out.frames.resize(length, Frame::zeros(last_ts));
    out.true_len = rec.true_len;
    Ok(out)
}

/// Drops padding, returning only the real frames.
pub fn truncate_to_true_len(rec: &Recording) -> Recording {
    let mut out = rec.clone();
    out.frames.truncate(rec.true_len);
    out
}

/// Running average (window clipped to the recording length) followed by
/// normalization. This is the canonical cleanup applied to every
/// recording before featurization.
pub fn preprocess(rec: &Recording, cfg: &PreprocessConfig) -> Result<Recording> {
    let t_len = rec.frames.len();
    let mut window = cfg.window.min(t_len);
    if window.is_multiple_of(2) {
        window -= 1;
    }
    Ok(normalize(&running_average(rec, window.max(1))?))
}

/// Finds up to three finger contacts as 4-connected blobs of taxels above
/// `threshold`, located at their pressure-weighted centroids.
pub fn extract_trajectory(frame: &Frame, threshold: f64) -> TrajectoryFrame {
    let mut component = [usize::MAX; TAXELS];
    let mut blobs: Vec<(Finger, usize)> = Vec::new();
    let mut stack = Vec::with_capacity(TAXELS);
    for seed in 0..TAXELS {
        if component[seed] != usize::MAX || frame.pressures[seed] <= threshold {
            continue;
        }
        let id = blobs.len();
        component[seed] = id;
        stack.push(seed);
        let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
        while let Some(idx) = stack.pop() {
            let p = frame.pressures[idx];
            let (row, col) = (idx / GRID, idx % GRID);
            mass += p;
            mx += p * (col as f64 + 0.5);
            my += p * ((GRID - 1 - row) as f64 + 0.5);
            let mut visit = |r: usize, c: usize| {
                let n = r * GRID + c;
                if component[n] == usize::MAX && frame.pressures[n] > threshold {
                    component[n] = id;
                    stack.push(n);
                }
            };
            if row > 0 {
                visit(row - 1, col);
            }
            if row + 1 < GRID {
                visit(row + 1, col);
            }
            if col > 0 {
                visit(row, col - 1);
            }
            if col + 1 < GRID {
                visit(row, col + 1);
            }
        }
        blobs.push((
            Finger {
                position: SensorCoord::new(mx / mass, my / mass),
                mass,
            },
            seed,
        ));
    }
    // Ties keep scan order.
    blobs.sort_by(|a, b| b.0.mass.total_cmp(&a.0.mass).then(a.1.cmp(&b.1)));
    TrajectoryFrame {
        fingers: blobs.into_iter().take(3).map(|(f, _)| f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_from(values: &[f64], taxel: usize) -> Recording {
        let frames = values
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let mut f = Frame::zeros(t as u64 * 66);
                f.pressures[taxel] = *v;
                f
            })
            .collect();
        Recording::unlabeled("r", frames, 15.0).unwrap()
    }

    #[test]
    fn impulse_moving_mean() {
        let r = running_average(&rec_from(&[0.0, 0.0, 1.0, 0.0, 0.0], 7), 3).unwrap();
        let got: Vec<f64> = r.frames.iter().map(|f| f.pressures[7]).collect();
        let third = 1.0 / 3.0;
        let want = [0.0, third, third, third, 0.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
    }

    #[test]
    fn constant_unchanged_and_window_errors() {
        let r = rec_from(&[0.4; 6], 3);
        let avg = running_average(&r, 5).unwrap();
        for f in &avg.frames {
            assert!((f.pressures[3] - 0.4).abs() < 1e-15);
        }
        assert!(running_average(&rec_from(&[1.0; 3], 0), 5).is_err());
        assert!(running_average(&r, 4).is_err());
    }

    #[test]
    fn normalize_examples() {
        let r = rec_from(&[2.0, 6.0, 4.0], 0);
        // Untouched taxels are 0, so the joint minimum is 0.
        let n = normalize(&r);
        assert_eq!(n.frames[1].pressures[0], 1.0);
        assert_eq!(n.frames[0].pressures[0], 2.0 / 6.0);

        let mut full = r.clone();
        for f in &mut full.frames {
            let base = f.pressures[0];
            f.pressures = [2.0; TAXELS];
            f.pressures[0] = base;
        }
        let n = normalize(&full);
        assert_eq!(n.frames[0].pressures[0], 0.0);
        assert_eq!(n.frames[1].pressures[0], 1.0);
        assert_eq!(n.frames[2].pressures[0], 0.5);

        let zero = rec_from(&[0.0; 4], 0);
        assert_eq!(normalize(&zero), zero);
        let canonical = rec_from(&[0.0, 1.0, 0.25], 5);
        assert_eq!(normalize(&canonical), canonical);
    }

    #[test]
    fn padding() {
        let r = rec_from(&[0.5; 10], 1);
        let p = pad_to_length(&r, 64).unwrap();
        assert_eq!(p.frames.len(), 64);
        assert_eq!(p.true_len, 10);
        assert!(p.frames[10..].iter().all(|f| f.sum() == 0.0));
        assert_eq!(truncate_to_true_len(&p), r);
        let same = rec_from(&[0.5; 64], 1);
        assert_eq!(pad_to_length(&same, 64).unwrap(), same);
        assert!(pad_to_length(&rec_from(&[0.5; 70], 1), 64).is_err());
    }

    #[test]
    fn trajectory_single_cell() {
        let mut f = Frame::zeros(0);
        f.pressures[8 * GRID] = 0.9;
        let tr = extract_trajectory(&f, 0.1);
        assert_eq!(tr.fingers.len(), 1);
        assert!((tr.fingers[0].position.x - 0.5).abs() < 1e-12);
        assert!((tr.fingers[0].position.y - 0.5).abs() < 1e-12);
        assert!(extract_trajectory(&Frame::zeros(0), 0.1).fingers.is_empty());
    }

    #[test]
    fn trajectory_two_blobs_brute_force() {
        let mut f = Frame::zeros(0);
        let blob_a = [(1, 1, 0.5), (1, 2, 0.7), (2, 1, 0.3), (2, 2, 0.9)];
        let blob_b = [(5, 5, 0.2), (5, 6, 0.4), (6, 5, 0.6), (6, 6, 0.3)];
        for (r, c, p) in blob_a.iter().chain(&blob_b) {
            f.pressures[r * GRID + c] = *p;
        }
        let centroid = |cells: &[(usize, usize, f64)]| {
            let m: f64 = cells.iter().map(|c| c.2).sum();
            let x = cells.iter().map(|c| c.2 * (c.1 as f64 + 0.5)).sum::<f64>() / m;
            let y = cells.iter().map(|c| c.2 * (8.0 - c.0 as f64 + 0.5)).sum::<f64>() / m;
            (m, x, y)
        };
        let tr = extract_trajectory(&f, 0.1);
        assert_eq!(tr.fingers.len(), 2);
        for (finger, cells) in tr.fingers.iter().zip([&blob_a[..], &blob_b[..]]) {
            let (m, x, y) = centroid(cells);
            assert!((finger.mass - m).abs() < 1e-12);
            assert!((finger.position.x - x).abs() < 1e-12);
            assert!((finger.position.y - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_keeps_three_heaviest() {
        let mut f = Frame::zeros(0);
        for (k, idx) in [0usize, 4, 8, 40, 80].iter().enumerate() {
            f.pressures[*idx] = 0.2 + 0.1 * k as f64;
        }
        let tr = extract_trajectory(&f, 0.1);
        assert_eq!(tr.fingers.len(), 3);
        assert!(tr.fingers.windows(2).all(|w| w[0].mass >= w[1].mass));
        assert!((tr.fingers[0].mass - 0.6).abs() < 1e-12);
    }

    #[test]
    fn preprocess_short_recordings() {
        let cfg = PreprocessConfig::default();
        let r = rec_from(&[0.3], 2);
        let p = preprocess(&r, &cfg).unwrap();
        assert_eq!(p.frames[0].pressures[2], 1.0);
        let r2 = rec_from(&[0.3, 0.6], 2);
        assert_eq!(preprocess(&r2, &cfg).unwrap().frames.len(), 2);
    }
}
