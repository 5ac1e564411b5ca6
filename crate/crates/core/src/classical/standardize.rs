use crate::error::{Error, Result};
use crate::model_file::{ModelFile, ParamBlock};

const MIN_STD: f64 = 1e-12;

/// Per-dimension z-scoring learned from training rows. Dimensions whose
/// standard deviation is below `1e-12` are only centred.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::EmptyDataset("cannot standardize zero rows".into()))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape(format!("row of length {} among {dim}", r.len())));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    fn scale(&self, d: usize) -> f64 {
        if self.std[d] < MIN_STD {
            1.0
        } else {
            self.std[d]
        }
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(d, v)| (v - self.mean[d]) / self.scale(d))
            .collect()
    }

    pub fn apply_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(d, v)| v * self.scale(d) + self.mean[d])
            .collect()
    }

    pub fn write_params(&self, file: &mut ModelFile) {
        let d = self.dimension();
        file.push(ParamBlock::new("std.mean", vec![d], self.mean.clone()));
        file.push(ParamBlock::new("std.std", vec![d], self.std.clone()));
    }

    pub fn read_params(file: &ModelFile) -> Result<Self> {
        let mean = file.block("std.mean")?.data.clone();
        let std = file.data("std.std", &[mean.len()])?.to_vec();
        Ok(Standardizer { mean, std })
    }
}
