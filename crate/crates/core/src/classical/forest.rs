//! Random forest of Gini CART trees.
//!
//! Each tree is grown on a bootstrap sample drawn with its own generator,
//! seeded with `seed + tree_index`, so a forest is reproducible regardless
//! of how trees are scheduled. Only integer draws are taken from the
//! generator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model_file::{ModelFile, ParamBlock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features examined per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            n_estimators: 200,
            max_depth: 9,
            min_samples_split: 2,
            features_per_split: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf {
        class: usize,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfModel {
    pub dim: usize,
    pub num_classes: usize,
    pub trees: Vec<Tree>,
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    num_classes: usize,
    max_depth: usize,
    min_samples_split: usize,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    // scratch buffers reused across nodes
    pairs: Vec<(f64, usize)>,
    features: Vec<usize>,
}

fn gini_sum_sq(counts: &[usize]) -> f64 {
    counts.iter().map(|c| (*c * *c) as f64).sum()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, n) in counts.iter().enumerate() {
        if *n > counts[best] {
            best = c;
        }
    }
    best
}

impl Grower<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in samples {
            counts[self.y[*s]] += 1;
        }
        counts
    }

    /// Best (weighted child impurity, feature, threshold) over a random
    /// subset of features. Keeps drawing features past `mtry` until some
    /// feature admits a split.
    fn best_split(&mut self, samples: &[usize]) -> Option<(usize, f64)> {
        let dim = self.features.len();
        let n = samples.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        for drawn in 0..dim {
            if drawn >= self.mtry && best.is_some() {
                break;
            }
            let pick = self.rng.random_range(drawn..dim);
            self.features.swap(drawn, pick);
            let f = self.features[drawn];

            self.pairs.clear();
            self.pairs
                .extend(samples.iter().map(|s| (self.x[*s][f], self.y[*s])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.pairs[0].0 == self.pairs[self.pairs.len() - 1].0 {
                continue;
            }
            let mut left = vec![0usize; self.num_classes];
            let mut right = vec![0usize; self.num_classes];
            for (_, c) in &self.pairs {
                right[*c] += 1;
            }
            let mut left_sq = 0.0;
            let mut right_sq = gini_sum_sq(&right);
            for k in 0..self.pairs.len() - 1 {
                let c = self.pairs[k].1;
                left_sq += (2 * left[c] + 1) as f64;
                left[c] += 1;
                right_sq -= (2 * right[c] - 1) as f64;
                right[c] -= 1;
                let (v, next) = (self.pairs[k].0, self.pairs[k + 1].0);
                if v == next {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                // n * weighted Gini = nl - left_sq / nl + nr - right_sq / nr
                let impurity = n - left_sq / nl - right_sq / nr;
                if best.is_none_or(|b| impurity < b.0) {
                    let mut threshold = 0.5 * (v + next);
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.counts(samples);
        let class = majority(&counts);
        self.nodes.push(Node::Leaf { class });
        let pure = counts.iter().filter(|c| **c > 0).count() <= 1;
        if pure || depth >= self.max_depth || samples.len() < self.min_samples_split {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(samples) else {
            return id;
        };
        let mut split = 0;
        for i in 0..samples.len() {
            if self.x[samples[i]][feature] <= threshold {
                samples.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = samples.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Grows `n_estimators` trees. A training set with a single class yields
/// depth-0 trees that always predict it.
pub fn rf_fit(x: &[Vec<f64>], y: &[usize], cfg: RfConfig) -> Result<RfModel> {
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "random forest needs at least two samples".into(),
        ));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
    }
    if cfg.n_estimators == 0 || cfg.max_depth == 0 {
        return Err(Error::InvalidArgument(
            "n_estimators and max_depth must be positive".into(),
        ));
    }
    let dim = x[0].len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("ragged or empty training rows".into()));
    }
    let num_classes = y.iter().max().copied().unwrap_or(0) + 1;
    let mtry = cfg
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
        .clamp(1, dim);
    let n = x.len();
    let trees = (0..cfg.n_estimators)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(t as u64));
            let mut samples: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut grower = Grower {
                x,
                y,
                num_classes,
                max_depth: cfg.max_depth,
                min_samples_split: cfg.min_samples_split,
                mtry,
                rng,
                nodes: Vec::new(),
                pairs: Vec::with_capacity(n),
                features: (0..dim).collect(),
            };
            grower.grow(&mut samples, 0);
            Tree {
                nodes: grower.nodes,
            }
        })
        .collect();
    Ok(RfModel {
        dim,
        num_classes,
        trees,
    })
}

impl RfModel {
    pub fn votes(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "query has {} features, model expects {}",
                x.len(),
                self.dim
            )));
        }
        let mut votes = vec![0; self.num_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        Ok(votes)
    }

    /// Plurality vote; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(majority(&self.votes(x)?))
    }

    pub fn write_params(&self, file: &mut ModelFile) {
        let mut offsets = Vec::with_capacity(self.trees.len() + 1);
        let (mut feature, mut threshold, mut left, mut right, mut class) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        offsets.push(0);
        for t in &self.trees {
            for node in &t.nodes {
                match *node {
                    Node::Leaf { class: c } => {
                        feature.push(-1.0);
                        threshold.push(0.0);
                        left.push(0.0);
                        right.push(0.0);
                        class.push(c as f64);
                    }
                    Node::Split {
                        feature: f,
                        threshold: th,
                        left: l,
                        right: r,
                    } => {
                        feature.push(f as f64);
                        threshold.push(th);
                        left.push(l as f64);
                        right.push(r as f64);
                        class.push(0.0);
                    }
                }
            }
            offsets.push(feature.len());
        }
        let n = feature.len();
        file.push(ParamBlock::scalar("rf.dim", self.dim as f64));
        file.push(ParamBlock::scalar("rf.num_classes", self.num_classes as f64));
        file.push(ParamBlock::from_usizes("rf.offsets", &offsets));
        file.push(ParamBlock::new("rf.feature", vec![n], feature));
        file.push(ParamBlock::new("rf.threshold", vec![n], threshold));
        file.push(ParamBlock::new("rf.left", vec![n], left));
        file.push(ParamBlock::new("rf.right", vec![n], right));
        file.push(ParamBlock::new("rf.class", vec![n], class));
    }

    pub fn read_params(file: &ModelFile) -> Result<Self> {
        let dim = file.scalar("rf.dim")? as usize;
        let num_classes = file.scalar("rf.num_classes")? as usize;
        let offsets = file.usizes("rf.offsets")?;
        let n = *offsets.last().unwrap_or(&0);
        let feature = file.data("rf.feature", &[n])?;
        let threshold = file.data("rf.threshold", &[n])?;
        let left = file.data("rf.left", &[n])?;
        let right = file.data("rf.right", &[n])?;
        let class = file.data("rf.class", &[n])?;
        let mut trees = Vec::with_capacity(offsets.len().saturating_sub(1));
        for w in offsets.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if lo >= hi || hi > n {
                return Err(Error::Model("bad tree offsets".into()));
            }
            let size = hi - lo;
            let mut nodes = Vec::with_capacity(size);
            for i in lo..hi {
                let node = if feature[i] < 0.0 {
                    let c = class[i] as usize;
                    if c >= num_classes {
                        return Err(Error::Model("leaf class out of range".into()));
                    }
                    Node::Leaf { class: c }
                } else {
                    let (f, l, r) = (feature[i] as usize, left[i] as usize, right[i] as usize);
                    if f >= dim || l >= size || r >= size || l <= i - lo || r <= i - lo {
                        return Err(Error::Model("malformed split node".into()));
                    }
                    Node::Split {
                        feature: f,
                        threshold: threshold[i],
                        left: l,
                        right: r,
                    }
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(RfModel {
            dim,
            num_classes,
            trees,
        })
    }
}
