use crate::error::{Error, Result};
use crate::model_file::{ModelFile, ParamBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
}

/// Exhaustive-scan k-nearest-neighbour classifier (Euclidean distance).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub dim: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

pub fn knn_fit(x: &[Vec<f64>], y: &[usize], cfg: KnnConfig) -> Result<KnnModel> {
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if x.len() < cfg.k {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {} training points",
            cfg.k,
            x.len()
        )));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("ragged training rows".into()));
    }
    Ok(KnnModel {
        k: cfg.k,
        dim,
        x: x.to_vec(),
        y: y.to_vec(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl KnnModel {
    /// Votes per class among the k nearest points, with the mean distance
    /// of each class's voters.
    fn neighbour_votes(&self, query: &[f64]) -> Result<Vec<(usize, usize, f64)>> {
        if query.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} features, model expects {}",
                query.len(),
                self.dim
            )));
        }
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .zip(&self.y)
            .map(|(row, label)| (sq_dist(row, query), *label))
            .collect();
        // Equal distances order by label so the chosen set does not depend
        // on training order.
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, by_dist);
        }
        let nearest = &mut d[..self.k];
        nearest.sort_unstable_by(by_dist);
        let mut votes: Vec<(usize, usize, f64)> = Vec::new();
        for (dist, label) in nearest.iter() {
            match votes.iter_mut().find(|v| v.0 == *label) {
                Some(v) => {
                    v.1 += 1;
                    v.2 += dist.sqrt();
                }
                None => votes.push((*label, 1, dist.sqrt())),
            }
        }
        for v in votes.iter_mut() {
            v.2 /= v.1 as f64;
        }
        Ok(votes)
    }

    /// Majority class; ties go to the smaller mean distance, then the lower
    /// class id.
    pub fn predict(&self, query: &[f64]) -> Result<usize> {
        let votes = self.neighbour_votes(query)?;
        let best = votes
            .iter()
            .min_by(|a, b| {
                b.1.cmp(&a.1)
                    .then(a.2.total_cmp(&b.2))
                    .then(a.0.cmp(&b.0))
            })
            .expect("k >= 1");
        Ok(best.0)
    }

    /// Fraction of the k neighbours voting for each class.
    pub fn vote_shares(&self, query: &[f64], num_classes: usize) -> Result<Vec<f64>> {
        let mut shares = vec![0.0; num_classes];
        for (label, count, _) in self.neighbour_votes(query)? {
            if label < num_classes {
                shares[label] = count as f64 / self.k as f64;
            }
        }
        Ok(shares)
    }

    pub fn write_params(&self, file: &mut ModelFile) {
        let n = self.x.len();
        file.push(ParamBlock::scalar("knn.k", self.k as f64));
        file.push(ParamBlock::new(
            "knn.x",
            vec![n, self.dim],
            self.x.iter().flatten().copied().collect(),
        ));
        file.push(ParamBlock::from_usizes("knn.y", &self.y));
    }

    pub fn read_params(file: &ModelFile) -> Result<Self> {
        let k = file.scalar("knn.k")? as usize;
        let xb = file.block("knn.x")?;
        if xb.shape.len() != 2 {
            return Err(Error::Model("knn.x must be two-dimensional".into()));
        }
        let (n, dim) = (xb.shape[0], xb.shape[1]);
        let y = file.usizes("knn.y")?;
        if y.len() != n || k == 0 || k > n.max(1) {
            return Err(Error::Model("inconsistent KNN parameters".into()));
        }
        let x = if dim == 0 {
            vec![Vec::new(); n]
        } else {
            xb.data.chunks(dim).map(|c| c.to_vec()).collect()
        };
        Ok(KnnModel { k, dim, x, y })
    }
}
