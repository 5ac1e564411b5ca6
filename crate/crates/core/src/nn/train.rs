use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, Net, NetInput};
use crate::error::{Error, Result};
use crate::types::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Share of source groups held out for validation; 0 disables early
    /// stopping.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 60,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
        }
    }
}

/// A labelled training input. `group` ties augmented copies to their source
/// recording so validation never sees a relative of a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: NetInput,
    pub label: usize,
    pub group: String,
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: Net,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

fn accuracy(net: &Net, samples: &[&Sample]) -> Result<f64> {
    let mut correct = 0;
    for chunk in samples.chunks(128) {
        let inputs: Vec<&NetInput> = chunk.iter().map(|s| &s.input).collect();
        let logits = net.forward(&inputs)?.logits;
        for (row, s) in logits.chunks(NUM_CLASSES).zip(chunk) {
            if argmax(row) == s.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains a freshly initialized network with Adam on shuffled minibatches.
pub fn train(arch: Architecture, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainedNet> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("no training samples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let mut groups: Vec<&str> = samples
        .iter()
        .filter(|s| !s.augmented)
        .map(|s| s.group.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    groups.shuffle(&mut rng);
    let n_val = if cfg.val_fraction > 0.0 && groups.len() >= 2 {
        ((cfg.val_fraction * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1)
    } else {
        0
    };
    let held: BTreeSet<&str> = groups[..n_val].iter().copied().collect();
    let val: Vec<&Sample> = samples
        .iter()
        .filter(|s| !s.augmented && held.contains(s.group.as_str()))
        .collect();
    let fit: Vec<&Sample> = samples
        .iter()
        .filter(|s| !held.contains(s.group.as_str()))
        .collect();

    let mut net = Net::init(arch, cfg.seed);
    let mut adam = Adam::new(net.params.len());
    let mut best = (f64::NEG_INFINITY, net.params.clone(), 0usize);
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..fit.len()).collect();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs: Vec<&NetInput> = batch.iter().map(|&i| &fit[i].input).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| fit[i].label).collect();
            let (loss, grad) = net.loss_and_grad(&inputs, &labels)?;
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut net.params, &grad, cfg);
        }
        let train_loss = loss_sum / fit.len() as f64;
        let val_accuracy = if val.is_empty() { None } else { Some(accuracy(&net, &val)?) };
        log::info!(
            "{} epoch {epoch}: loss {train_loss:.4} val {}",
            arch.tag(),
            val_accuracy.map_or("-".into(), |a| format!("{a:.4}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        match val_accuracy {
            Some(acc) => {
                if acc > best.0 {
                    best = (acc, net.params.clone(), epoch);
                } else if epoch - best.2 >= cfg.patience {
                    break;
                }
            }
            None => best = (f64::NEG_INFINITY, net.params.clone(), epoch),
        }
    }
    net.params = best.1;
    Ok(TrainedNet {
        net,
        history,
        best_epoch: best.2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_by_hand() {
        // f(w) = (w - 3)^2 at w = 1: g = -4. m1 = 0.4, v1 = 0.016,
        // m_hat = -4, v_hat = 16, step = lr * 4 / (4 + eps).
        let cfg = TrainConfig::default();
        let mut w = [1.0];
        let mut adam = Adam::new(1);
        let g = 2.0 * (w[0] - 3.0);
        adam.step(&mut w, &[g], &cfg);
        let expected = 1.0 + 1e-3 * 4.0 / (4.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        // second step with the same gradient moves by the same amount
        adam.step(&mut w, &[-4.0], &cfg);
        assert!((w[0] - (1.0 + 2.0 * 1e-3 * 4.0 / (4.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_errors() {
        assert!(train(Architecture::Lstm, &[], &TrainConfig::default()).is_err());
    }
}
