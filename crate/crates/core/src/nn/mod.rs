//! A small neural-network engine with hand-written backpropagation.
//!
//! Three fixed architectures are supported:
//!
//! * [`Architecture::CnnMhi`]: four 3x3 convolutions (8/16/32/32 channels,
//!   leaky ReLU) over a motion history image, then dense 64 and dense 10.
//! * [`Architecture::Lstm`]: an LSTM with 32 hidden units over flattened
//!   frames, read out at the last real frame.
//! * [`Architecture::CnnLstm`]: two per-frame convolutions (8/16, ReLU),
//!   2x2 max pooling, then the same LSTM head.
//!
//! All parameters live in one flat `Vec<f64>`; [`Architecture::layout`]
//! names the slices. Sequence nets only ever touch the first `true_len`
//! frames of an input, so zero padding cannot change their output.

mod gradcheck;
pub(crate) mod ops;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::mhi;
use crate::model_file::{ModelFile, ModelKind, ParamBlock};
use crate::preprocess::CONTACT_THRESHOLD;
use crate::types::{Recording, NUM_CLASSES, TAXELS};

pub use gradcheck::{dense_grad_check, grad_check, grad_check_with, GradCheckReport, GRAD_CHECK_H};
#[doc(hidden)]
pub use ops::Fault;
pub use train::{train, Adam, EpochRecord, Sample, TrainConfig, TrainedNet};

use ops::{ConvCache, Packing};

const LSTM_HIDDEN: usize = 32;
const DENSE_HIDDEN: usize = 64;
const LEAKY_SLOPE: f64 = 0.01;
const CNN_CHANNELS: [usize; 5] = [1, 8, 16, 32, 32];
const CNN_LSTM_CHANNELS: [usize; 3] = [1, 8, 16];
const CNN_LSTM_FEATURES: usize = 16 * ops::POOLED_CELLS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    CnnMhi,
    Lstm,
    CnnLstm,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::CnnMhi, Architecture::Lstm, Architecture::CnnLstm];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::CnnMhi => "cnn_mhi",
            Architecture::Lstm => "lstm",
            Architecture::CnnLstm => "cnn_lstm",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown network {tag:?}")))
    }

    pub fn model_kind(self) -> ModelKind {
        match self {
            Architecture::CnnMhi => ModelKind::Cnn,
            Architecture::Lstm => ModelKind::Lstm,
            Architecture::CnnLstm => ModelKind::Cnnlstm,
        }
    }

    pub fn is_sequence(self) -> bool {
        self != Architecture::CnnMhi
    }

    pub fn layout(self) -> Vec<ParamTensor> {
        let mut shapes: Vec<(String, Vec<usize>)> = Vec::new();
        let conv = |shapes: &mut Vec<(String, Vec<usize>)>, chans: &[usize]| {
            for (i, w) in chans.windows(2).enumerate() {
                shapes.push((format!("conv{}.w", i + 1), vec![w[1], w[0] * 9]));
                shapes.push((format!("conv{}.b", i + 1), vec![w[1]]));
            }
        };
        let lstm = |shapes: &mut Vec<(String, Vec<usize>)>, d: usize| {
            shapes.push(("lstm.wx".into(), vec![4 * LSTM_HIDDEN, d]));
            shapes.push(("lstm.wh".into(), vec![4 * LSTM_HIDDEN, LSTM_HIDDEN]));
            shapes.push(("lstm.b".into(), vec![4 * LSTM_HIDDEN]));
            shapes.push(("fc.w".into(), vec![NUM_CLASSES, LSTM_HIDDEN]));
            shapes.push(("fc.b".into(), vec![NUM_CLASSES]));
        };
        match self {
            Architecture::CnnMhi => {
                conv(&mut shapes, &CNN_CHANNELS);
                shapes.push(("fc1.w".into(), vec![DENSE_HIDDEN, 32 * TAXELS]));
                shapes.push(("fc1.b".into(), vec![DENSE_HIDDEN]));
                shapes.push(("fc2.w".into(), vec![NUM_CLASSES, DENSE_HIDDEN]));
                shapes.push(("fc2.b".into(), vec![NUM_CLASSES]));
            }
            Architecture::Lstm => lstm(&mut shapes, TAXELS),
            Architecture::CnnLstm => {
                conv(&mut shapes, &CNN_LSTM_CHANNELS);
                lstm(&mut shapes, CNN_LSTM_FEATURES);
            }
        }
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let t = ParamTensor { name, shape, offset };
                offset += t.len();
                t
            })
            .collect()
    }

    pub fn param_count(self) -> usize {
        self.layout().iter().map(ParamTensor::len).sum()
    }
}

/// Row-major tensor of up to four axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 4 || shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} does not hold {} elements",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }
}

/// One network input: a `1x9x9` image, or a `Tx81` / `Tx1x9x9` sequence of
/// which the first `true_len` frames are real.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub tensor: Tensor,
    pub true_len: usize,
}

impl NetInput {
    fn frame(&self, t: usize) -> &[f64] {
        &self.tensor.data[t * TAXELS..(t + 1) * TAXELS]
    }
}

/// The motion history image of a preprocessed recording.
pub fn build_mhi_input(r: &Recording) -> NetInput {
    let m = mhi(r, CONTACT_THRESHOLD);
    NetInput {
        tensor: Tensor {
            shape: vec![1, 9, 9],
            data: m.values.to_vec(),
        },
        true_len: 1,
    }
}

/// Frames flattened in storage order, `T x 81`.
pub fn build_sequence_input(r: &Recording) -> NetInput {
    let data = r.frames.iter().flat_map(|f| f.pressures).collect::<Vec<_>>();
    NetInput {
        tensor: Tensor {
            shape: vec![r.frames.len(), TAXELS],
            data,
        },
        true_len: r.true_len,
    }
}

/// Network input for a preprocessed recording.
pub fn build_input(arch: Architecture, r: &Recording) -> NetInput {
    if arch.is_sequence() {
        build_sequence_input(r)
    } else {
        build_mhi_input(r)
    }
}

/// Logits and (optionally) the mean cross-entropy of one batch.
#[derive(Debug, Clone)]
pub struct BatchOutput {
    /// `[batch, 10]` in input order.
    pub logits: Vec<f64>,
    pub loss: Option<f64>,
    /// Hash of every ReLU sign and pooling choice, so callers can tell
    /// whether two parameter settings sit on the same linear piece.
    #[doc(hidden)]
    pub pattern: u64,
}

impl BatchOutput {
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = self.logits.clone();
        ops::softmax_rows(&mut p, NUM_CLASSES);
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub arch: Architecture,
    pub params: Vec<f64>,
}

fn pattern_hash<'a>(acts: impl IntoIterator<Item = &'a [f64]>, argmax: &[usize]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for a in acts {
        for v in a {
            (*v > 0.0).hash(&mut h);
        }
    }
    argmax.hash(&mut h);
    h.finish()
}

/// Mutable views of consecutive tensors of the gradient vector.
fn split_grads<'a>(g: &'a mut [f64], tensors: &[&ParamTensor]) -> Vec<&'a mut [f64]> {
    let mut out = Vec::with_capacity(tensors.len());
    let mut rest = g;
    let mut pos = 0;
    for t in tensors {
        assert!(t.offset >= pos);
        let (_, tail) = std::mem::take(&mut rest).split_at_mut(t.offset - pos);
        let (this, tail) = tail.split_at_mut(t.len());
        out.push(this);
        rest = tail;
        pos = t.offset + t.len();
    }
    out
}

/// Softmax cross-entropy averaged over the batch; writes `dlogits`.
pub(crate) fn softmax_xent(logits: &[f64], labels: &[usize], dlogits: &mut [f64]) -> f64 {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    dlogits.copy_from_slice(logits);
    ops::softmax_rows(dlogits, NUM_CLASSES);
    for (row, y) in dlogits.chunks_mut(NUM_CLASSES).zip(labels) {
        loss -= row[*y].max(f64::MIN_POSITIVE).ln();
        row[*y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    loss / n
}

impl Net {
    /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
    pub fn init(arch: Architecture, seed: u64) -> Net {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = arch.layout();
        let mut params = vec![0.0; arch.param_count()];
        for t in &layout {
            let p = &mut params[t.range()];
            if t.name.ends_with(".w") || t.name.ends_with(".wx") || t.name.ends_with(".wh") {
                let (fan_out, fan_in) = (t.shape[0], t.shape[1]);
                let (fan_in, fan_out) = if t.name.starts_with("conv") {
                    (fan_in, fan_out * 9)
                } else {
                    (fan_in, fan_out)
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                p.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
            } else if t.name == "lstm.b" {
                p[LSTM_HIDDEN..2 * LSTM_HIDDEN].iter_mut().for_each(|v| *v = 1.0);
            }
        }
        Net { arch, params }
    }

    pub fn layout(&self) -> Vec<ParamTensor> {
        self.arch.layout()
    }

    fn tensor(&self, layout: &[ParamTensor], name: &str) -> ParamTensor {
        layout
            .iter()
            .find(|t| t.name == name)
            .cloned()
            .unwrap_or_else(|| panic!("no tensor {name} in {}", self.arch.tag()))
    }

    fn check_inputs(&self, inputs: &[&NetInput]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::EmptyDataset("empty batch".into()));
        }
        for x in inputs {
            let shape = &x.tensor.shape;
            let ok = if self.arch.is_sequence() {
                let frames = x.tensor.data.len() / TAXELS;
                (shape.len() == 2 && shape[1] == TAXELS || shape.len() == 4 && shape[1..] == [1, 9, 9])
                    && x.true_len >= 1
                    && x.true_len <= frames
            } else {
                shape[..] == [1, 9, 9] || shape[..] == [9, 9]
            };
            if !ok || x.tensor.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Shape(format!(
                    "{} cannot take input of shape {shape:?} with true length {}",
                    self.arch.tag(),
                    x.true_len
                )));
            }
        }
        Ok(())
    }

    /// Logits for a batch of inputs.
    pub fn forward(&self, inputs: &[&NetInput]) -> Result<BatchOutput> {
        self.check_inputs(inputs)?;
        Ok(self.run(inputs, None, None, None))
    }

    /// Class probabilities of a single input.
    pub fn predict_proba(&self, input: &NetInput) -> Result<[f64; NUM_CLASSES]> {
        let p = self.forward(&[input])?.probabilities();
        let mut out = [0.0; NUM_CLASSES];
        out.copy_from_slice(&p);
        Ok(out)
    }

    /// Mean loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, inputs: &[&NetInput], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad_with(inputs, labels, None)
    }

    #[doc(hidden)]
    pub fn loss_and_grad_with(
        &self,
        inputs: &[&NetInput],
        labels: &[usize],
        fault: Option<Fault>,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(inputs)?;
        check_labels(inputs.len(), labels)?;
        let mut grad = vec![0.0; self.params.len()];
        let out = self.run(inputs, Some(labels), Some(&mut grad), fault);
        Ok((out.loss.unwrap_or(0.0), grad))
    }

    /// Mean loss without gradients.
    pub fn loss(&self, inputs: &[&NetInput], labels: &[usize]) -> Result<f64> {
        Ok(self.loss_with_pattern(inputs, labels)?.0)
    }

    pub(crate) fn loss_with_pattern(&self, inputs: &[&NetInput], labels: &[usize]) -> Result<(f64, u64)> {
        self.check_inputs(inputs)?;
        check_labels(inputs.len(), labels)?;
        let out = self.run(inputs, Some(labels), None, None);
        Ok((out.loss.unwrap_or(0.0), out.pattern))
    }

    fn run(
        &self,
        inputs: &[&NetInput],
        labels: Option<&[usize]>,
        grad: Option<&mut [f64]>,
        fault: Option<Fault>,
    ) -> BatchOutput {
        match self.arch {
            Architecture::CnnMhi => self.run_cnn(inputs, labels, grad, fault),
            Architecture::Lstm | Architecture::CnnLstm => self.run_seq(inputs, labels, grad, fault),
        }
    }

    fn run_cnn(
        &self,
        inputs: &[&NetInput],
        labels: Option<&[usize]>,
        grad: Option<&mut [f64]>,
        fault: Option<Fault>,
    ) -> BatchOutput {
        let layout = self.layout();
        let n = inputs.len();
        let x0: Vec<f64> = inputs.iter().flat_map(|x| x.tensor.data.iter().copied()).collect();
        let mut caches: Vec<ConvCache> = Vec::with_capacity(4);
        for (i, ch) in CNN_CHANNELS.windows(2).enumerate() {
            let w = self.tensor(&layout, &format!("conv{}.w", i + 1));
            let b = self.tensor(&layout, &format!("conv{}.b", i + 1));
            let input = caches.last().map_or(&x0, |c| &c.out);
            let c = ops::conv_forward(
                &self.params[w.range()],
                &self.params[b.range()],
                input,
                ch[0],
                ch[1],
                n,
                LEAKY_SLOPE,
            );
            caches.push(c);
        }
        let flat = ops::to_rows(&caches[3].out, 32, n, TAXELS);
        let (w1, b1) = (self.tensor(&layout, "fc1.w"), self.tensor(&layout, "fc1.b"));
        let (w2, b2) = (self.tensor(&layout, "fc2.w"), self.tensor(&layout, "fc2.b"));
        let mut hidden = ops::dense_forward(
            &self.params[w1.range()],
            &self.params[b1.range()],
            &flat,
            n,
            32 * TAXELS,
            DENSE_HIDDEN,
        );
        hidden.iter_mut().for_each(|v| *v = ops::leaky(*v, LEAKY_SLOPE));
        let logits = ops::dense_forward(
            &self.params[w2.range()],
            &self.params[b2.range()],
            &hidden,
            n,
            DENSE_HIDDEN,
            NUM_CLASSES,
        );
        let pattern = pattern_hash(
            caches.iter().map(|c| c.out.as_slice()).chain([hidden.as_slice()]),
            &[],
        );
        let Some(labels) = labels else {
            return BatchOutput { logits, loss: None, pattern };
        };
        let mut dlogits = vec![0.0; logits.len()];
        let loss = softmax_xent(&logits, labels, &mut dlogits);
        let Some(grad) = grad else {
            return BatchOutput { logits, loss: Some(loss), pattern };
        };

        let mut g = split_grads(grad, &[&w2, &b2]);
        let (gb2, gw2) = (g.pop().unwrap(), g.pop().unwrap());
        let mut dhidden = ops::dense_backward(
            &self.params[w2.range()],
            &hidden,
            &dlogits,
            n,
            DENSE_HIDDEN,
            NUM_CLASSES,
            gw2,
            gb2,
        );
        for (d, h) in dhidden.iter_mut().zip(&hidden) {
            if *h <= 0.0 {
                *d *= LEAKY_SLOPE;
            }
        }
        let mut g = split_grads(grad, &[&w1, &b1]);
        let (gb1, gw1) = (g.pop().unwrap(), g.pop().unwrap());
        let dflat = ops::dense_backward(
            &self.params[w1.range()],
            &flat,
            &dhidden,
            n,
            32 * TAXELS,
            DENSE_HIDDEN,
            gw1,
            gb1,
        );
        let mut dout = ops::from_rows(&dflat, 32, n, TAXELS);
        for i in (0..4).rev() {
            let w = self.tensor(&layout, &format!("conv{}.w", i + 1));
            let b = self.tensor(&layout, &format!("conv{}.b", i + 1));
            let mut g = split_grads(grad, &[&w, &b]);
            let (gb, gw) = (g.pop().unwrap(), g.pop().unwrap());
            let din = ops::conv_backward(
                &self.params[w.range()],
                &caches[i],
                dout,
                CNN_CHANNELS[i],
                CNN_CHANNELS[i + 1],
                n,
                LEAKY_SLOPE,
                gw,
                gb,
                i > 0,
                fault,
            );
            dout = din.unwrap_or_default();
        }
        BatchOutput { logits, loss: Some(loss), pattern }
    }

    fn run_seq(
        &self,
        inputs: &[&NetInput],
        labels: Option<&[usize]>,
        grad: Option<&mut [f64]>,
        fault: Option<Fault>,
    ) -> BatchOutput {
        let layout = self.layout();
        let n = inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(inputs[i].true_len));
        let pack = Packing::new(order.iter().map(|&i| inputs[i].true_len).collect());
        let total = pack.total();
        let mut frames = vec![0.0; total * TAXELS];
        for t in 0..pack.active.len() {
            for j in 0..pack.active[t] {
                frames[pack.row(t, j) * TAXELS..][..TAXELS].copy_from_slice(inputs[order[j]].frame(t));
            }
        }

        let cnn = self.arch == Architecture::CnnLstm;
        let mut conv_caches: Vec<ConvCache> = Vec::new();
        let mut pool_arg = Vec::new();
        let (x, d) = if cnn {
            for (i, ch) in CNN_LSTM_CHANNELS.windows(2).enumerate() {
                let w = self.tensor(&layout, &format!("conv{}.w", i + 1));
                let b = self.tensor(&layout, &format!("conv{}.b", i + 1));
                let input = conv_caches.last().map_or(&frames, |c| &c.out);
                let c = ops::conv_forward(
                    &self.params[w.range()],
                    &self.params[b.range()],
                    input,
                    ch[0],
                    ch[1],
                    total,
                    0.0,
                );
                conv_caches.push(c);
            }
            let (pooled, arg) = ops::maxpool_forward(&conv_caches[1].out, 16, total);
            pool_arg = arg;
            (ops::to_rows(&pooled, 16, total, ops::POOLED_CELLS), CNN_LSTM_FEATURES)
        } else {
            (frames, TAXELS)
        };

        let (wx, wh, lb) = (
            self.tensor(&layout, "lstm.wx"),
            self.tensor(&layout, "lstm.wh"),
            self.tensor(&layout, "lstm.b"),
        );
        let (fw, fb) = (self.tensor(&layout, "fc.w"), self.tensor(&layout, "fc.b"));
        let (last, cache) = ops::lstm_forward(
            &self.params[wx.range()],
            &self.params[wh.range()],
            &self.params[lb.range()],
            &x,
            &pack,
            d,
            LSTM_HIDDEN,
        );
        let sorted_logits = ops::dense_forward(
            &self.params[fw.range()],
            &self.params[fb.range()],
            &last,
            n,
            LSTM_HIDDEN,
            NUM_CLASSES,
        );
        let mut logits = vec![0.0; n * NUM_CLASSES];
        for (j, &i) in order.iter().enumerate() {
            logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES]
                .copy_from_slice(&sorted_logits[j * NUM_CLASSES..(j + 1) * NUM_CLASSES]);
        }
        let pattern = pattern_hash(conv_caches.iter().map(|c| c.out.as_slice()), &pool_arg);
        let Some(labels) = labels else {
            return BatchOutput { logits, loss: None, pattern };
        };
        let sorted_labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let mut dlogits = vec![0.0; logits.len()];
        let loss = softmax_xent(&sorted_logits, &sorted_labels, &mut dlogits);
        let Some(grad) = grad else {
            return BatchOutput { logits, loss: Some(loss), pattern };
        };

        let mut g = split_grads(grad, &[&fw, &fb]);
        let (gfb, gfw) = (g.pop().unwrap(), g.pop().unwrap());
        let dlast = ops::dense_backward(
            &self.params[fw.range()],
            &last,
            &dlogits,
            n,
            LSTM_HIDDEN,
            NUM_CLASSES,
            gfw,
            gfb,
        );
        let mut g = split_grads(grad, &[&wx, &wh, &lb]);
        let glb = g.pop().unwrap();
        let gwh = g.pop().unwrap();
        let gwx = g.pop().unwrap();
        let dx = ops::lstm_backward(
            &self.params[wx.range()],
            &self.params[wh.range()],
            &x,
            &cache,
            &pack,
            &dlast,
            d,
            LSTM_HIDDEN,
            gwx,
            gwh,
            glb,
        );
        if cnn {
            let dpooled = ops::from_rows(&dx, 16, total, ops::POOLED_CELLS);
            let mut dout = ops::maxpool_backward(&dpooled, &pool_arg, conv_caches[1].out.len());
            for i in (0..2).rev() {
                let w = self.tensor(&layout, &format!("conv{}.w", i + 1));
                let b = self.tensor(&layout, &format!("conv{}.b", i + 1));
                let mut g = split_grads(grad, &[&w, &b]);
                let (gb, gw) = (g.pop().unwrap(), g.pop().unwrap());
                let din = ops::conv_backward(
                    &self.params[w.range()],
                    &conv_caches[i],
                    dout,
                    CNN_LSTM_CHANNELS[i],
                    CNN_LSTM_CHANNELS[i + 1],
                    total,
                    0.0,
                    gw,
                    gb,
                    i > 0,
                    fault,
                );
                dout = din.unwrap_or_default();
            }
        }
        BatchOutput { logits, loss: Some(loss), pattern }
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut mf = ModelFile::new(self.arch.model_kind(), input_schema(self.arch));
        mf.metadata.insert("netspec".into(), self.arch.tag().into());
        for t in self.layout() {
            mf.push(ParamBlock::new(t.name.clone(), t.shape.clone(), self.params[t.range()].to_vec()));
        }
        mf
    }

    pub fn from_model_file(mf: &ModelFile) -> Result<Net> {
        let arch = Architecture::from_tag(mf.meta_str("netspec")?)?;
        if arch.model_kind() != mf.kind {
            return Err(Error::Model(format!(
                "network {} stored under kind {}",
                arch.tag(),
                mf.kind.tag()
            )));
        }
        let mut params = vec![0.0; arch.param_count()];
        for t in arch.layout() {
            params[t.range()].copy_from_slice(mf.data(&t.name, &t.shape)?);
        }
        Ok(Net { arch, params })
    }
}

/// Schema tag of a network's inputs.
pub fn input_schema(arch: Architecture) -> &'static str {
    if arch.is_sequence() {
        "sequence"
    } else {
        "mhi"
    }
}

fn check_labels(n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} inputs but {} labels", labels.len())));
    }
    if let Some(y) = labels.iter().find(|y| **y >= NUM_CLASSES) {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    Ok(())
}
