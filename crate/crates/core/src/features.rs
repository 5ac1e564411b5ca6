//! Hand-designed feature vectors and motion history images.
//!
//! Two fixed-length feature families are produced from a preprocessed
//! recording:
//!
//! * **spatio-temporal** (`spatio_temporal_v1`, 1623 values): a three-level
//!   orthonormal Haar transform of every taxel's 64-frame series, summarised
//!   per band by L1 norm, L2 norm, skewness, excess kurtosis and standard
//!   deviation, followed by the mean, maximum and variance of the whole
//!   recording.
//! * **touch-pattern** (`touch_pattern_v1`, 24 values): pressure level,
//!   frame-to-frame variability, row and column profiles, contact area and
//!   duration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::PAD_LENGTH;
use crate::types::{Recording, GRID, TAXELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSchema {
    #[serde(rename = "spatio_temporal_v1")]
    SpatioTemporalV1,
    #[serde(rename = "touch_pattern_v1")]
    TouchPatternV1,
}

impl FeatureSchema {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureSchema::SpatioTemporalV1 => "spatio_temporal_v1",
            FeatureSchema::TouchPatternV1 => "touch_pattern_v1",
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            FeatureSchema::SpatioTemporalV1 => TAXELS * 4 * 5 + 3,
            FeatureSchema::TouchPatternV1 => 24,
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "spatio_temporal_v1" => Ok(FeatureSchema::SpatioTemporalV1),
            "touch_pattern_v1" => Ok(FeatureSchema::TouchPatternV1),
            other => Err(Error::Domain(format!("unknown feature schema {other:?}"))),
        }
    }
}

impl fmt::Display for FeatureSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A feature vector tagged with the schema that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub schema: FeatureSchema,
    pub values: Vec<f64>,
}

/// Haar coefficients of a 64-sample series after three levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DwtBands {
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub d3: Vec<f64>,
    pub a3: Vec<f64>,
}

impl DwtBands {
    pub fn bands(&self) -> [&[f64]; 4] {
        [&self.d1, &self.d2, &self.d3, &self.a3]
    }
}

/// Three-level orthonormal Haar transform of a length-64 series.
pub fn haar_dwt(series: &[f64]) -> Result<DwtBands> {
    if series.len() != PAD_LENGTH {
        return Err(Error::Shape(format!(
            "Haar transform needs {PAD_LENGTH} samples, got {}",
            series.len()
        )));
    }
    let step = |s: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.chunks_exact(2)
            .map(|p| {
                (
                    (p[0] + p[1]) * std::f64::consts::FRAC_1_SQRT_2,
                    (p[0] - p[1]) * std::f64::consts::FRAC_1_SQRT_2,
                )
            })
            .unzip()
    };
    let (a1, d1) = step(series);
    let (a2, d2) = step(&a1);
    let (a3, d3) = step(&a2);
    Ok(DwtBands { d1, d2, d3, a3 })
}

/// `[L1, L2, skewness, excess kurtosis, std]` of a band, using population
/// central moments. Skewness and kurtosis are 0 when the variance is below
/// `1e-12`.
pub fn band_stats(band: &[f64]) -> [f64; 5] {
    if band.is_empty() {
        return [0.0; 5];
    }
    let n = band.len() as f64;
    let l1 = band.iter().map(|v| v.abs()).sum();
    let l2 = band.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mean = band.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in band {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let (skew, kurt) = if m2 < 1e-12 {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    [l1, l2, skew, kurt, m2.sqrt()]
}

/// Haar band statistics of every taxel plus global mean, max and variance.
/// The recording must already be padded to 64 frames.
pub fn spatio_temporal_features(rec: &Recording) -> Result<FeatureVector> {
    if rec.frames.len() != PAD_LENGTH {
        return Err(Error::Shape(format!(
            "spatio-temporal features need a recording padded to {PAD_LENGTH} frames, got {}",
            rec.frames.len()
        )));
    }
    let schema = FeatureSchema::SpatioTemporalV1;
    let mut values = Vec::with_capacity(schema.dimension());
    let mut series = vec![0.0; PAD_LENGTH];
    for taxel in 0..TAXELS {
        for (s, f) in series.iter_mut().zip(&rec.frames) {
            *s = f.pressures[taxel];
        }
        let bands = haar_dwt(&series)?;
        for band in bands.bands() {
            values.extend_from_slice(&band_stats(band));
        }
    }
    let count = (PAD_LENGTH * TAXELS) as f64;
    let all = || rec.frames.iter().flat_map(|f| f.pressures.iter().copied());
    let mean = all().sum::<f64>() / count;
    let max = all().fold(0.0, f64::max);
    let var = all().map(|p| (p - mean) * (p - mean)).sum::<f64>() / count;
    values.extend_from_slice(&[mean, max, var]);
    Ok(FeatureVector { schema, values })
}

/// Index of each touch-pattern feature.
pub mod touch_index {
    pub const MEAN: usize = 0;
    pub const MAX: usize = 1;
    pub const VARIABILITY: usize = 2;
    pub const ROW_MEANS: usize = 3;
    pub const COL_MEANS: usize = 12;
    pub const MAX_AREA: usize = 21;
    pub const MEAN_AREA: usize = 22;
    pub const DURATION: usize = 23;
}

/// Touch-pattern features over the real (unpadded) frames. A taxel is in
/// contact when its pressure exceeds `contact_threshold`.
pub fn touch_pattern_features(rec: &Recording, contact_threshold: f64) -> FeatureVector {
    let frames = rec.real_frames();
    let t_len = frames.len() as f64;
    let mut v = vec![0.0; FeatureSchema::TouchPatternV1.dimension()];

    let mut total = 0.0;
    let mut max = 0.0f64;
    let mut rows = [0.0; GRID];
    let mut cols = [0.0; GRID];
    let mut max_area = 0usize;
    let mut area_sum = 0usize;
    for f in frames {
        let mut area = 0;
        for (i, p) in f.pressures.iter().enumerate() {
            total += p;
            max = max.max(*p);
            rows[i / GRID] += p;
            cols[i % GRID] += p;
            if *p > contact_threshold {
                area += 1;
            }
        }
        max_area = max_area.max(area);
        area_sum += area;
    }
    let variability = if frames.len() > 1 {
        let diffs: f64 = frames
            .windows(2)
            .map(|w| {
                w[0].pressures
                    .iter()
                    .zip(&w[1].pressures)
                    .map(|(a, b)| (b - a).abs())
                    .sum::<f64>()
            })
            .sum();
        diffs / ((frames.len() - 1) * TAXELS) as f64
    } else {
        0.0
    };

    use touch_index::*;
    v[MEAN] = total / (t_len * TAXELS as f64);
    v[MAX] = max;
    v[VARIABILITY] = variability;
    for k in 0..GRID {
        v[ROW_MEANS + k] = rows[k] / (t_len * GRID as f64);
        v[COL_MEANS + k] = cols[k] / (t_len * GRID as f64);
    }
    v[MAX_AREA] = max_area as f64;
    v[MEAN_AREA] = area_sum as f64 / t_len;
    v[DURATION] = t_len / rec.rate_hz;
    FeatureVector {
        schema: FeatureSchema::TouchPatternV1,
        values: v,
    }
}

/// Motion history image: 9x9 intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Mhi {
    pub values: [f64; TAXELS],
}

/// Builds the motion history image of the real frames: active taxels
/// (pressure above `threshold`) are set to 1, all others decay by `1/T`.
pub fn mhi(rec: &Recording, threshold: f64) -> Mhi {
    let frames = rec.real_frames();
    let decay = 1.0 / frames.len() as f64;
    let mut h = [0.0f64; TAXELS];
    for f in frames {
        for (hv, p) in h.iter_mut().zip(&f.pressures) {
            *hv = if *p > threshold {
                1.0
            } else {
                (*hv - decay).max(0.0)
            };
        }
    }
    Mhi { values: h }
}
