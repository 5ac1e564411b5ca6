use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{self, Fault};
use super::{softmax_xent, Architecture, Net, NetInput, Tensor};
use crate::types::{NUM_CLASSES, TAXELS};

/// Central difference step.
pub const GRAD_CHECK_H: f64 = 1e-5;
const MIN_CHECKED: usize = 200;
const PER_TENSOR: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_a - g_n| / max(1e-8, |g_a| + |g_n|)` over the checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries dropped because the step crossed a kink.
    pub skipped: usize,
    /// Tensor name and flat index of the worst entry.
    pub worst: (String, usize),
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-8)
}

/// Compares backpropagated gradients of a freshly initialized network with
/// central differences on a small random batch (sequences of up to 5
/// frames). Every parameter tensor is sampled.
pub fn grad_check(arch: Architecture, seed: u64) -> GradCheckReport {
    grad_check_with(arch, seed, None)
}

#[doc(hidden)]
pub fn grad_check_with(arch: Architecture, seed: u64, fault: Option<Fault>) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Net::init(arch, seed);
    let inputs: Vec<NetInput> = [5usize, 3, 5]
        .iter()
        .map(|&t| {
            let frames = if arch.is_sequence() { t } else { 1 };
            let data: Vec<f64> = (0..frames * TAXELS).map(|_| rng.random::<f64>()).collect();
            let shape = if arch.is_sequence() { vec![frames, TAXELS] } else { vec![1, 9, 9] };
            NetInput {
                tensor: Tensor { shape, data },
                true_len: frames,
            }
        })
        .collect();
    let refs: Vec<&NetInput> = inputs.iter().collect();
    let labels: Vec<usize> = (0..refs.len()).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
    let (_, analytic) = net
        .loss_and_grad_with(&refs, &labels, fault)
        .expect("grad check batch is well formed");

    let (_, base) = net.loss_with_pattern(&refs, &labels).unwrap();
    let layout = net.layout();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        worst: (String::new(), 0),
    };
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    // Entries whose perturbation flips a ReLU or a pooling choice are
    // skipped: the loss is not differentiable across the kink.
    let probe = |i: usize, net: &mut Net, report: &mut GradCheckReport| -> bool {
        let keep = net.params[i];
        net.params[i] = keep + GRAD_CHECK_H;
        let (up, pu) = net.loss_with_pattern(&refs, &labels).unwrap();
        net.params[i] = keep - GRAD_CHECK_H;
        let (down, pd) = net.loss_with_pattern(&refs, &labels).unwrap();
        net.params[i] = keep;
        if pu != base || pd != base {
            report.skipped += 1;
            return false;
        }
        report.checked += 1;
        let e = rel_error(analytic[i], (up - down) / (2.0 * GRAD_CHECK_H));
        if e > report.max_rel_error {
            let t = layout.iter().find(|t| t.range().contains(&i)).unwrap();
            report.max_rel_error = e;
            report.worst = (t.name.clone(), i - t.offset);
        }
        true
    };
    for t in &layout {
        let mut got = 0;
        while got < PER_TENSOR.min(t.len()) && seen.range(t.range()).count() < t.len() {
            let i = rng.random_range(t.range());
            if seen.insert(i) && probe(i, &mut net, &mut report) {
                got += 1;
            }
        }
    }
    while report.checked < MIN_CHECKED && seen.len() < net.params.len() {
        let i = rng.random_range(0..net.params.len());
        if seen.insert(i) {
            probe(i, &mut net, &mut report);
        }
    }
    report
}

/// Gradient check of a single dense layer under softmax cross-entropy,
/// over all of its parameters.
pub fn dense_grad_check(seed: u64) -> f64 {
    let (n, inp, out) = (4, 16, NUM_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * inp).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut w: Vec<f64> = (0..out * inp).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut b: Vec<f64> = (0..out).map(|_| rng.random_range(-0.5..0.5)).collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..out)).collect();
    let loss = |w: &[f64], b: &[f64]| {
        let z = ops::dense_forward(w, b, &x, n, inp, out);
        let mut d = vec![0.0; z.len()];
        softmax_xent(&z, &labels, &mut d)
    };
    let z = ops::dense_forward(&w, &b, &x, n, inp, out);
    let mut dz = vec![0.0; z.len()];
    softmax_xent(&z, &labels, &mut dz);
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    ops::dense_backward(&w, &x, &dz, n, inp, out, &mut gw, &mut gb);

    let mut worst: f64 = 0.0;
    for i in 0..w.len() {
        let keep = w[i];
        w[i] = keep + GRAD_CHECK_H;
        let up = loss(&w, &b);
        w[i] = keep - GRAD_CHECK_H;
        let down = loss(&w, &b);
        w[i] = keep;
        worst = worst.max(rel_error(gw[i], (up - down) / (2.0 * GRAD_CHECK_H)));
    }
    for i in 0..b.len() {
        let keep = b[i];
        b[i] = keep + GRAD_CHECK_H;
        let up = loss(&w, &b);
        b[i] = keep - GRAD_CHECK_H;
        let down = loss(&w, &b);
        b[i] = keep;
        worst = worst.max(rel_error(gb[i], (up - down) / (2.0 * GRAD_CHECK_H)));
    }
    worst
}
