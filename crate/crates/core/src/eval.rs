//! Offline evaluation (stratified split, leave-one-subject-out search,
//! confusion matrices) and the online path: a streaming segmenter and the
//! recognizer that classifies each completed segment.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, source_id};
use crate::error::{Error, Result};
use crate::method::{Prediction, TrainedModel};
use crate::preprocess::CONTACT_THRESHOLD;
use crate::synth::SyntheticSession;
use crate::types::{Frame, Recording, NOMINAL_RATE_HZ, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Augment the training partition after splitting.
    pub augment_train_only: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.85,
            seed: 0,
            augment_train_only: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Recording>,
    pub test: Vec<Recording>,
}

fn label_id(r: &Recording) -> Result<usize> {
    r.label
        .map(|c| c.id())
        .ok_or_else(|| Error::InvalidArgument(format!("recording {} has no label", r.id)))
}

/// Stratified, seeded train/test split. The test size is
/// `round(n * (1 - train_fraction))`, spread over classes by largest
/// remainder (ties to the lower class id).
pub fn split(ds: &[Recording], spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.iter().enumerate() {
        by_class.entry(label_id(r)?).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(Error::EmptyDataset("nothing to split".into()));
    }
    if let Some((c, v)) = by_class.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has {} recording(s); at least 2 are needed to split",
            v.len()
        )));
    }
    let test_share = 1.0 - spec.train_fraction;
    let total_test = (ds.len() as f64 * test_share).round() as usize;
    let mut quota: Vec<(usize, usize, f64)> = by_class
        .iter()
        .map(|(c, v)| {
            let exact = v.len() as f64 * test_share;
            (*c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quota.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|a, b| quota[*b].2.total_cmp(&quota[*a].2).then(a.cmp(b)));
    for k in order.into_iter().take(total_test.saturating_sub(assigned)) {
        quota[k].1 += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut test_idx = BTreeSet::new();
    for (c, n_test, _) in quota {
        let mut members = by_class[&c].clone();
        members.shuffle(&mut rng);
        // every class keeps at least one recording on each side
        let n_test = n_test.clamp(1, members.len() - 1);
        test_idx.extend(members.into_iter().take(n_test));
    }
    let mut train = Vec::with_capacity(ds.len() - test_idx.len());
    let mut test = Vec::with_capacity(test_idx.len());
    for (i, r) in ds.iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    if spec.augment_train_only {
        train = augment_dataset(&train, CONTACT_THRESHOLD).recordings;
    }
    Ok(Split { train, test })
}

/// Outcome of a leave-one-subject-out search.
#[derive(Debug, Clone, PartialEq)]
pub struct LosoResult<H> {
    pub best: H,
    pub best_index: usize,
    /// Participant held out in each fold.
    pub held_out: Vec<String>,
    /// `fold_scores[g][f]`: accuracy of grid point `g` on fold `f`.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
}

/// Scores every grid point on `folds` folds, each holding out all
/// recordings of one seeded random participant. `fit_score` trains on the
/// first slice and returns accuracy on the second, or `None` when the grid
/// point cannot be fit (scored 0). Augmented copies of held-out recordings
/// carry the same participant and are never trained on; only originals are
/// scored.
pub fn loso_cv<H: Clone>(
    data: &[Recording],
    grid: &[H],
    folds: usize,
    seed: u64,
    mut fit_score: impl FnMut(&H, &[Recording], &[Recording]) -> Result<Option<f64>>,
) -> Result<LosoResult<H>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    if let Some(r) = data.iter().find(|r| r.participant.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "recording {} has no participant id",
            r.id
        )));
    }
    let mut people: Vec<&str> = data
        .iter()
        .map(|r| r.participant.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if people.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds need {folds} participants, found {}",
            people.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    people.shuffle(&mut rng);
    let held_out: Vec<String> = people[..folds].iter().map(|p| p.to_string()).collect();

    let mut fold_scores = vec![Vec::with_capacity(folds); grid.len()];
    for person in &held_out {
        let train: Vec<Recording> = data.iter().filter(|r| &r.participant != person).cloned().collect();
        let test: Vec<Recording> = data
            .iter()
            .filter(|r| &r.participant == person && source_id(&r.id) == r.id)
            .cloned()
            .collect();
        for (g, h) in grid.iter().enumerate() {
            fold_scores[g].push(fit_score(h, &train, &test)?.unwrap_or(0.0));
        }
    }
    let mean_scores: Vec<f64> = fold_scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / s.len() as f64)
        .collect();
    let mut best_index = 0;
    for (i, m) in mean_scores.iter().enumerate() {
        if *m > mean_scores[best_index] {
            best_index = i;
        }
    }
    Ok(LosoResult {
        best: grid[best_index].clone(),
        best_index,
        held_out,
        fold_scores,
        mean_scores,
    })
}

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.trace() as f64 / t as f64
        }
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        let n: u64 = self.counts[class].iter().sum();
        (n > 0).then(|| self.counts[class][class] as f64 / n as f64)
    }

    pub fn precision(&self, class: usize) -> Option<f64> {
        let n: u64 = (0..NUM_CLASSES).map(|r| self.counts[r][class]).sum();
        (n > 0).then(|| self.counts[class][class] as f64 / n as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// Unordered class pairs by total confusions in both directions, most
    /// confused first (ties by pair order). Pairs never confused are left
    /// out.
    pub fn confused_pairs(&self) -> Vec<((usize, usize), u64)> {
        let mut pairs = Vec::new();
        for a in 0..NUM_CLASSES {
            for b in a + 1..NUM_CLASSES {
                let n = self.counts[a][b] + self.counts[b][a];
                if n > 0 {
                    pairs.push(((a, b), n));
                }
            }
        }
        pairs.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
        pairs
    }

    /// Plain-text table with class ids as headers.
    pub fn render(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in 0..NUM_CLASSES {
            s.push_str(&format!("{c:>5}"));
        }
        s.push('\n');
        for (r, row) in self.counts.iter().enumerate() {
            s.push_str(&format!("{r:>9}"));
            for v in row {
                s.push_str(&format!("{v:>5}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
}

/// Scores any labeled-recording classifier.
pub fn evaluate_with(
    test: &[Recording],
    mut predict: impl FnMut(&Recording) -> Result<usize>,
) -> Result<Evaluation> {
    let mut confusion = ConfusionMatrix::default();
    let mut predictions = Vec::with_capacity(test.len());
    for r in test {
        let p = predict(r)?;
        confusion.add(label_id(r)?, p);
        predictions.push(p);
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
        predictions,
    })
}

pub fn evaluate(model: &TrainedModel, test: &[Recording]) -> Result<Evaluation> {
    evaluate_with(test, |r| Ok(model.predict(r)?.label))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// A frame is active when any taxel exceeds this...
    pub on_taxel: f64,
    /// ...or the frame sum exceeds this.
    pub on_sum: f64,
    /// Consecutive inactive frames that close a segment.
    pub k_gap: usize,
    pub max_segment: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            on_taxel: 0.15,
            on_sum: 0.5,
            k_gap: 8,
            max_segment: 120,
        }
    }
}

impl SegmenterConfig {
    pub fn is_active(&self, f: &Frame) -> bool {
        f.max() > self.on_taxel || f.sum() > self.on_sum
    }
}

/// A completed segment, trimmed of leading and trailing inactive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub frames: Vec<Frame>,
    /// Stream index of the first and last kept frame.
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn duration_ms(&self) -> u64 {
        let first = self.frames.first().map_or(0, |f| f.timestamp_ms);
        let last = self.frames.last().map_or(0, |f| f.timestamp_ms);
        last - first
    }

    pub fn to_recording(&self, id: impl Into<String>) -> Result<Recording> {
        Recording::unlabeled(id, self.frames.clone(), NOMINAL_RATE_HZ)
    }
}

/// Single-pass state machine: IDLE until an active frame, ACTIVE until
/// `k_gap` inactive frames in a row or `max_segment` frames.
#[derive(Debug, Clone)]
pub struct Segmenter {
    cfg: SegmenterConfig,
    frames: Vec<Frame>,
    start: usize,
    quiet: usize,
    seen: usize,
}

impl Segmenter {
    pub fn new(cfg: SegmenterConfig) -> Self {
        Segmenter {
            cfg,
            frames: Vec::new(),
            start: 0,
            quiet: 0,
            seen: 0,
        }
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.cfg
    }

    pub fn is_active(&self) -> bool {
        !self.frames.is_empty()
    }

    pub fn feed(&mut self, f: Frame) -> Option<Segment> {
        let index = self.seen;
        self.seen += 1;
        let active = self.cfg.is_active(&f);
        if self.frames.is_empty() {
            if active {
                self.frames.push(f);
                self.start = index;
                self.quiet = 0;
                if self.cfg.max_segment <= 1 {
                    return self.close();
                }
            }
            return None;
        }
        self.frames.push(f);
        self.quiet = if active { 0 } else { self.quiet + 1 };
        if self.quiet >= self.cfg.k_gap || self.frames.len() >= self.cfg.max_segment {
            return self.close();
        }
        None
    }

    /// Emits whatever is buffered (end of stream).
    pub fn flush(&mut self) -> Option<Segment> {
        if self.frames.is_empty() {
            None
        } else {
            self.close()
        }
    }

    fn close(&mut self) -> Option<Segment> {
        let mut frames = std::mem::take(&mut self.frames);
        frames.truncate(frames.len() - self.quiet);
        self.quiet = 0;
        let end = self.start + frames.len() - 1;
        Some(Segment {
            frames,
            start: self.start,
            end,
        })
    }
}

/// One online classification.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlinePrediction {
    pub segment: Segment,
    pub prediction: Prediction,
    pub segment_ms: u64,
    /// Wall-clock time from segment completion to prediction.
    pub latency_ms: f64,
}

/// Segmenter plus classifier.
pub struct Recognizer<'m> {
    pub segmenter: Segmenter,
    model: &'m TrainedModel,
    count: usize,
}

impl<'m> Recognizer<'m> {
    pub fn new(model: &'m TrainedModel, cfg: SegmenterConfig) -> Self {
        Recognizer {
            segmenter: Segmenter::new(cfg),
            model,
            count: 0,
        }
    }

    pub fn feed(&mut self, f: Frame) -> Result<Option<OnlinePrediction>> {
        match self.segmenter.feed(f) {
            Some(seg) => self.classify(seg).map(Some),
            None => Ok(None),
        }
    }

    pub fn flush(&mut self) -> Result<Option<OnlinePrediction>> {
        match self.segmenter.flush() {
            Some(seg) => self.classify(seg).map(Some),
            None => Ok(None),
        }
    }

    fn classify(&mut self, segment: Segment) -> Result<OnlinePrediction> {
        let t0 = Instant::now();
        self.count += 1;
        let rec = segment.to_recording(format!("live-{:05}", self.count))?;
        let prediction = self.model.predict(&rec)?;
        let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
        Ok(OnlinePrediction {
            segment_ms: segment.duration_ms(),
            segment,
            prediction,
            latency_ms,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub expected: usize,
    pub detected: usize,
    /// Gestures overlapped by exactly one segment that overlaps nothing
    /// else.
    pub matched: usize,
    pub match_rate: f64,
    pub online_accuracy: f64,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Streams a synthetic session through a recognizer and compares the
/// segments with the ground-truth boundaries.
pub fn stream_evaluate(
    session: &SyntheticSession,
    model: &TrainedModel,
    cfg: &SegmenterConfig,
) -> Result<StreamReport> {
    let mut rec = Recognizer::new(model, cfg.clone());
    let mut out = Vec::new();
    for f in &session.frames {
        out.extend(rec.feed(*f)?);
    }
    out.extend(rec.flush()?);

    let spans: Vec<(usize, usize)> = out.iter().map(|p| (p.segment.start, p.segment.end)).collect();
    let mut matched = 0;
    let mut correct = 0;
    for g in &session.gestures {
        let gs = (g.start, g.end.saturating_sub(1));
        let hits: Vec<usize> = (0..spans.len()).filter(|&i| overlaps(spans[i], gs)).collect();
        if let [i] = hits[..] {
            let clean = session
                .gestures
                .iter()
                .filter(|o| overlaps(spans[i], (o.start, o.end.saturating_sub(1))))
                .count()
                == 1;
            if clean {
                matched += 1;
                if out[i].prediction.label == g.label.id() {
                    correct += 1;
                }
            }
        }
    }
    let lat: Vec<f64> = out.iter().map(|p| p.latency_ms).collect();
    let expected = session.gestures.len();
    Ok(StreamReport {
        expected,
        detected: out.len(),
        matched,
        match_rate: if expected == 0 { 1.0 } else { matched as f64 / expected as f64 },
        online_accuracy: if matched == 0 { 0.0 } else { correct as f64 / matched as f64 },
        mean_latency_ms: if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 },
        max_latency_ms: lat.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_dataset, SynthSpec};
    use crate::types::TAXELS;

    fn small_corpus() -> Vec<Recording> {
        synth_dataset(
            &SynthSpec {
                participants: 6,
                ..SynthSpec::default()
            },
            1,
        )
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = synth_dataset(&SynthSpec::default(), 2);
        let spec = SplitSpec {
            augment_train_only: false,
            ..SplitSpec::default()
        };
        let s = split(&ds, &spec).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2601, 459));
        let mut per_class = [0usize; NUM_CLASSES];
        for r in &s.test {
            per_class[r.label.unwrap().id()] += 1;
        }
        assert!(per_class.iter().all(|n| (45..=47).contains(n)));
        let test_ids: BTreeSet<&str> = s.test.iter().map(|r| r.id.as_str()).collect();
        assert!(s.train.iter().all(|r| !test_ids.contains(r.id.as_str())));
        let again = split(&ds, &spec).unwrap();
        assert_eq!(
            s.test.iter().map(|r| &r.id).collect::<Vec<_>>(),
            again.test.iter().map(|r| &r.id).collect::<Vec<_>>()
        );
    }

    #[test]
    fn augmentation_stays_in_train() {
        let ds = small_corpus();
        let s = split(&ds, &SplitSpec::default()).unwrap();
        let test_ids: BTreeSet<&str> = s.test.iter().map(|r| r.id.as_str()).collect();
        assert!(s.train.iter().all(|r| !test_ids.contains(source_id(&r.id))));
        assert!(s.train.iter().any(|r| source_id(&r.id) != r.id));
        assert!(s.test.iter().all(|r| source_id(&r.id) == r.id));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let ds = small_corpus();
        let one: Vec<Recording> = ds[..1].to_vec();
        assert!(split(&one, &SplitSpec::default()).is_err());
    }

    #[test]
    fn loso_single_point_and_leakage_guard() {
        let ds = small_corpus();
        let res = loso_cv(&ds, &[1u8], 5, 3, |_, train, test| {
            let held = &test[0].participant;
            assert!(train.iter().all(|r| &r.participant != held));
            assert!(test.iter().all(|r| &r.participant == held));
            Ok(Some(0.5))
        })
        .unwrap();
        assert_eq!(res.best, 1);
        assert_eq!(res.fold_scores, vec![vec![0.5; 5]]);
        assert_eq!(res.held_out.len(), 5);
        let uniq: BTreeSet<&String> = res.held_out.iter().collect();
        assert_eq!(uniq.len(), 5);
    }

    #[test]
    fn loso_infeasible_point_scores_zero() {
        let ds = small_corpus();
        let res = loso_cv(&ds, &[1usize, 501], 5, 3, |k, train, _| {
            Ok((*k <= train.len()).then_some(0.3))
        })
        .unwrap();
        assert_eq!(res.best, 1);
        assert_eq!(res.mean_scores[1], 0.0);
    }

    #[test]
    fn loso_needs_participants() {
        let mut ds = small_corpus();
        ds[0].participant.clear();
        assert!(loso_cv(&ds, &[0], 5, 0, |_, _, _| Ok(Some(1.0))).is_err());
        let two = SynthSpec {
            participants: 2,
            ..SynthSpec::default()
        };
        assert!(loso_cv(&synth_dataset(&two, 0), &[0], 5, 0, |_, _, _| Ok(Some(1.0))).is_err());
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let ds = synth_dataset(
            &SynthSpec {
                participants: 1,
                ..SynthSpec::default()
            },
            4,
        );
        let e = evaluate_with(&ds, |r| Ok(r.label.unwrap().id())).unwrap();
        assert_eq!(e.accuracy, 1.0);
        for a in 0..NUM_CLASSES {
            for b in 0..NUM_CLASSES {
                assert_eq!(e.confusion.counts[a][b] > 0, a == b);
            }
        }
        let e = evaluate_with(&ds, |_| Ok(3)).unwrap();
        assert!((e.accuracy - 0.1).abs() < 1e-12);
        assert_eq!(e.confusion.row_sums(), [9; NUM_CLASSES]);
    }

    #[test]
    fn confused_pairs_are_symmetric_totals() {
        let mut m = ConfusionMatrix::default();
        m.add(6, 7);
        m.add(7, 6);
        m.add(2, 3);
        m.add(1, 1);
        assert_eq!(m.confused_pairs(), vec![((6, 7), 2), ((2, 3), 1)]);
    }

    fn active(ts: u64) -> Frame {
        let mut p = [0.0; TAXELS];
        p[40] = 0.8;
        Frame::new(p, ts).unwrap()
    }

    fn feed_all(seg: &mut Segmenter, frames: &[Frame]) -> Vec<Segment> {
        let mut out: Vec<Segment> = frames.iter().filter_map(|f| seg.feed(*f)).collect();
        out.extend(seg.flush());
        out
    }

    #[test]
    fn double_tap_gap_stays_one_segment() {
        let mut frames = vec![Frame::zeros(0); 3];
        frames.extend((0..3).map(active));
        frames.extend(vec![Frame::zeros(0); 5]);
        frames.extend((0..3).map(active));
        frames.extend(vec![Frame::zeros(0); 12]);
        let segs = feed_all(&mut Segmenter::new(SegmenterConfig::default()), &frames);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start, segs[0].end), (3, 13));
        assert_eq!(segs[0].frames.len(), 11);
    }

    #[test]
    fn separated_taps_give_two_segments() {
        let mut frames: Vec<Frame> = (0..3).map(active).collect();
        frames.extend(vec![Frame::zeros(0); 20]);
        frames.extend((0..3).map(active));
        let segs = feed_all(&mut Segmenter::new(SegmenterConfig::default()), &frames);
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn noise_below_threshold_is_ignored() {
        let mut p = [0.004; TAXELS];
        p[0] = 0.1;
        let frames = vec![Frame::new(p, 0).unwrap(); 200];
        assert!(feed_all(&mut Segmenter::new(SegmenterConfig::default()), &frames).is_empty());
    }

    #[test]
    fn long_touch_is_cut_at_max_segment() {
        let frames: Vec<Frame> = (0..250).map(active).collect();
        let segs = feed_all(&mut Segmenter::new(SegmenterConfig::default()), &frames);
        assert_eq!(segs.iter().map(|s| s.frames.len()).collect::<Vec<_>>(), vec![120, 120, 10]);
    }
}
