//! Acceptance run: one PASS/FAIL line per criterion, then a nonzero exit if
//! any criterion failed.

mod common;

use std::collections::BTreeMap;
use std::net::UdpSocket;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use tactile_gesture::dataset::write_dataset_to;
use tactile_gesture::eval::{stream_evaluate, ConfusionMatrix, Recognizer, SegmenterConfig};
use tactile_gesture::listener::{listen_udp, FrameQueue, QUEUE_CAPACITY};
use tactile_gesture::method::{run_experiment, Experiment, ExperimentConfig, Method};
use tactile_gesture::model_file::sha256_hex;
use tactile_gesture::nn::{grad_check, grad_check_with, Architecture, Fault};
use tactile_gesture::osc::encode_osc_frame;
use tactile_gesture::synth::{synth_dataset, synth_session, SynthSpec};
use tactile_gesture::Recording;

const CORPUS_SEED: u64 = 7;
const TRAIN_SEED: u64 = 1;
const SESSION_SEED: u64 = 99;

const HAAR_TOL: f64 = 1e-12;
const STATS_TOL: f64 = 1e-9;
const SVM_TOL: f64 = 1e-9;
const ORACLE_BUDGET_S: f64 = 30.0;
const GRAD_TOL: f64 = 1e-4;
const MUTATION_FLOOR: f64 = 1e-2;
const GRAD_BUDGET_S: f64 = 60.0;
const ALGO1_BUDGET_S: f64 = 5.0;
const TP_RF_FLOOR: f64 = 0.90;
const CNNLSTM_FLOOR: f64 = 0.90;
const AUG_SLACK: f64 = 0.02;
const NN_BUDGET_S: f64 = 600.0;
const CLASSICAL_BUDGET_S: f64 = 120.0;
const MATCH_FLOOR: f64 = 0.95;
const LATENCY_CEIL_MS: f64 = 66.0;
const SESSION_GESTURES: usize = 100;
const SESSION_GAP: usize = 30;
/// Replay rate for the UDP intake check: ten times the sensor's 15 Hz.
const REPLAY_HZ: f64 = 150.0;

#[derive(Default)]
struct Sheet {
    failed: Vec<String>,
}

impl Sheet {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name.into());
        }
    }
}

fn oracle_equivalence(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let haar = haar_error(500, 1);
    let stats = band_stats_error(4000, 2);
    let knn = knn_mismatches(3);
    let svm = svm_error(4);
    let corpus = synth_dataset(
        &SynthSpec {
            participants: 2,
            ..SynthSpec::default()
        },
        CORPUS_SEED,
    );
    let aug = augment_mismatches(&corpus, 0.1);
    let secs = t0.elapsed().as_secs_f64();
    sheet.record(
        "oracle-equivalence",
        haar <= HAAR_TOL && stats <= STATS_TOL && knn == 0 && svm <= SVM_TOL && aug == 0 && secs < ORACLE_BUDGET_S,
        format!(
            "haar {haar:.1e} (<= {HAAR_TOL:.0e}), band stats {stats:.1e} (<= {STATS_TOL:.0e}), knn mismatches {knn}, \
             svm {svm:.1e} (<= {SVM_TOL:.0e}), augmentation mismatches {aug}/{}, {secs:.1}s (< {ORACLE_BUDGET_S}s)",
            corpus.len()
        ),
    );
}

fn gradient_checks(sheet: &mut Sheet) {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for arch in Architecture::ALL {
        let r = grad_check(arch, 17);
        pass &= r.max_rel_error <= GRAD_TOL && r.checked >= 200;
        parts.push(format!("{} {:.1e} ({} checked, {} at kinks)", arch.tag(), r.max_rel_error, r.checked, r.skipped));
    }
    for arch in [Architecture::CnnMhi, Architecture::CnnLstm] {
        let r = grad_check_with(arch, 17, Some(Fault::ConvBackwardOffByOne));
        pass &= r.max_rel_error > MUTATION_FLOOR;
        parts.push(format!("{} corrupted conv {:.1e} (> {MUTATION_FLOOR:.0e})", arch.tag(), r.max_rel_error));
    }
    let secs = t0.elapsed().as_secs_f64();
    pass &= secs < GRAD_BUDGET_S;
    sheet.record(
        "gradient-checks",
        pass,
        format!("{}; tol {GRAD_TOL:.0e}; {secs:.1}s (< {GRAD_BUDGET_S}s)", parts.join(", ")),
    );
}

fn algorithm1(sheet: &mut Sheet, corpus: &[Recording]) {
    let t0 = Instant::now();
    let sample: Vec<Recording> = corpus.iter().step_by(3).cloned().collect();
    let violation = algorithm1_violation(&sample, 0.1);
    let secs = t0.elapsed().as_secs_f64();
    sheet.record(
        "algorithm-1",
        violation.is_none() && secs < ALGO1_BUDGET_S,
        format!(
            "{} recordings: {}; {secs:.2}s (< {ALGO1_BUDGET_S}s)",
            sample.len(),
            violation.unwrap_or_else(|| "labels, lengths, active pressures, 1-5 outputs and edge contact hold".into())
        ),
    );
}

fn protocol(sheet: &mut Sheet) {
    let rt = osc_round_trip_failures(10_000, 11);
    let (panics, accepted) = osc_fuzz(100_000, 12);
    let golden = osc_golden();
    sheet.record(
        "osc-protocol",
        rt == 0 && panics == 0 && golden.is_ok(),
        format!(
            "round-trip failures {rt}/10000, fuzz panics {panics}/100000 ({accepted} accepted), golden {}",
            golden.err().unwrap_or_else(|| "ok".into())
        ),
    );
}

fn model_hash(e: &Experiment) -> String {
    sha256_hex(e.model.to_model_file().unwrap().encode().unwrap().as_bytes())
}

fn experiment(ds: &[Recording], m: Method, augment: bool) -> Experiment {
    let cfg = ExperimentConfig::new(m, augment, TRAIN_SEED);
    let exp = run_experiment(ds, &cfg).unwrap();
    println!(
        "     {:<8} {:<5} accuracy {:.4}  train {:>6.1}s  {}",
        m.tag(),
        if augment { "aug" } else { "noaug" },
        exp.evaluation.accuracy,
        exp.train_seconds,
        serde_json::to_string(&exp.hyper).unwrap()
    );
    exp
}

fn end_to_end(sheet: &mut Sheet, ds: &[Recording]) -> BTreeMap<(Method, bool), Experiment> {
    let mut runs = BTreeMap::new();
    for m in Method::ALL {
        for augment in [false, true] {
            runs.insert((m, augment), experiment(ds, m, augment));
        }
    }
    let acc = |m, a| runs[&(m, a)].evaluation.accuracy;
    let tp_rf = acc(Method::TpRf, true);
    let cl = acc(Method::Cnnlstm, true);
    let mut regressions = Vec::new();
    let mut over_budget = Vec::new();
    for m in Method::ALL {
        if acc(m, true) < acc(m, false) - AUG_SLACK {
            regressions.push(format!("{} {:.4} < {:.4}", m.tag(), acc(m, true), acc(m, false)));
        }
        let budget = if m.is_neural() { NN_BUDGET_S } else { CLASSICAL_BUDGET_S };
        for a in [false, true] {
            let s = runs[&(m, a)].train_seconds;
            if s > budget {
                over_budget.push(format!("{} aug={a} {s:.0}s > {budget}s", m.tag()));
            }
        }
    }
    let slowest = |nn: bool| {
        runs.iter()
            .filter(|((m, _), _)| m.is_neural() == nn)
            .map(|(_, e)| e.train_seconds)
            .fold(0.0, f64::max)
    };
    sheet.record(
        "end-to-end",
        tp_rf >= TP_RF_FLOOR && cl >= CNNLSTM_FLOOR && regressions.is_empty() && over_budget.is_empty(),
        format!(
            "{} recordings; aug tp-rf {tp_rf:.4} (>= {TP_RF_FLOOR}), aug cnnlstm {cl:.4} (>= {CNNLSTM_FLOOR}); \
             aug below noaug - {AUG_SLACK}: {}; slowest NN {:.0}s (<= {NN_BUDGET_S}s), slowest classical {:.0}s (<= {CLASSICAL_BUDGET_S}s){}",
            ds.len(),
            if regressions.is_empty() { "none".into() } else { regressions.join(", ") },
            slowest(true),
            slowest(false),
            if over_budget.is_empty() { String::new() } else { format!("; over budget: {}", over_budget.join(", ")) }
        ),
    );
    runs
}

fn confusion_echo(sheet: &mut Sheet, runs: &BTreeMap<(Method, bool), Experiment>) {
    let mut pooled = ConfusionMatrix::default();
    for m in [Method::StKnn, Method::StRf, Method::StSvm] {
        pooled.merge(&runs[&(m, false)].evaluation.confusion);
    }
    let top: Vec<((usize, usize), u64)> = pooled.confused_pairs().into_iter().take(2).collect();
    let expected = [(6, 7), (2, 3), (4, 5), (8, 9)];
    let hit = top.iter().any(|(p, n)| *n > 0 && expected.contains(p));
    sheet.record(
        "confusion-echo",
        hit,
        format!("top-2 pooled ST pairs without augmentation {top:?}; want one of {expected:?}"),
    );
}

fn online(sheet: &mut Sheet, runs: &BTreeMap<(Method, bool), Experiment>) {
    let exp = &runs[&(Method::Cnnlstm, true)];
    let model = &exp.model;
    let offline = exp.evaluation.accuracy;
    let session = synth_session(&SynthSpec::default(), SESSION_SEED, SESSION_GESTURES, SESSION_GAP);
    let cfg = SegmenterConfig::default();
    let report = stream_evaluate(&session, model, &cfg).unwrap();

    // the same stream over UDP/OSC through the bounded queue
    let queue = FrameQueue::new(QUEUE_CAPACITY);
    let listener = listen_udp(([127, 0, 0, 1], 0), Arc::clone(&queue)).unwrap();
    let addr = listener.local_addr();
    let packets: Vec<Vec<u8>> = session.frames.iter().map(encode_osc_frame).collect();
    let sender = std::thread::spawn(move || {
        let sock = UdpSocket::bind(("127.0.0.1", 0)).unwrap();
        let period = Duration::from_secs_f64(1.0 / REPLAY_HZ);
        let t0 = Instant::now();
        for (i, p) in packets.iter().enumerate() {
            if let Some(wait) = (period * i as u32).checked_sub(t0.elapsed()) {
                std::thread::sleep(wait);
            }
            sock.send_to(p, addr).unwrap();
        }
    });
    let mut rec = Recognizer::new(model, cfg);
    let mut labels = Vec::new();
    let mut received = 0;
    let mut idle = Instant::now();
    while received < session.frames.len() && idle.elapsed() < Duration::from_secs(5) {
        if let Some(f) = queue.pop_timeout(Duration::from_millis(100)) {
            received += 1;
            idle = Instant::now();
            if let Some(p) = rec.feed(f).unwrap() {
                labels.push(p.prediction.label);
            }
        }
    }
    labels.extend(rec.flush().unwrap().map(|p| p.prediction.label));
    sender.join().unwrap();
    let stats = listener.stop();
    let overflows = queue.overflows();

    let mut direct = Recognizer::new(model, SegmenterConfig::default());
    let mut want = Vec::new();
    for f in &session.frames {
        want.extend(direct.feed(*f).unwrap().map(|p| p.prediction.label));
    }
    want.extend(direct.flush().unwrap().map(|p| p.prediction.label));

    let pass = report.match_rate >= MATCH_FLOOR
        && report.online_accuracy <= offline
        && report.mean_latency_ms < LATENCY_CEIL_MS
        && overflows == 0
        && received == session.frames.len()
        && labels == want;
    sheet.record(
        "online",
        pass,
        format!(
            "{} gestures, {} segments, match {:.3} (>= {MATCH_FLOOR}), online accuracy {:.4} vs offline {offline:.4}, \
             mean latency {:.2}ms (< {LATENCY_CEIL_MS}ms, max {:.2}ms); UDP at {REPLAY_HZ} Hz: {received}/{} frames, \
             {} bad packets, {overflows} overflows, predictions {} direct",
            report.expected,
            report.detected,
            report.match_rate,
            report.online_accuracy,
            report.mean_latency_ms,
            report.max_latency_ms,
            session.frames.len(),
            stats.packets_bad,
            if labels == want { "match" } else { "differ from" }
        ),
    );
}

fn corpus_hash(ds: &[Recording]) -> String {
    let mut buf = Vec::new();
    write_dataset_to(ds, &mut buf).unwrap();
    sha256_hex(&buf)
}

fn reproducibility(sheet: &mut Sheet, ds: &[Recording], runs: &BTreeMap<(Method, bool), Experiment>) {
    let again = synth_dataset(&SynthSpec::default(), CORPUS_SEED);
    let mut pass = corpus_hash(&again) == corpus_hash(ds);
    let mut parts = vec![format!("corpus {}", if pass { "identical" } else { "differs" })];
    for (m, a) in [(Method::TpRf, true), (Method::StSvm, false), (Method::Lstm, false)] {
        let first = &runs[&(m, a)];
        let second = experiment(&again, m, a);
        let same = first.evaluation.accuracy.to_bits() == second.evaluation.accuracy.to_bits()
            && model_hash(first) == model_hash(&second);
        pass &= same;
        parts.push(format!(
            "{} aug={a} {} ({})",
            m.tag(),
            if same { "identical" } else { "differs" },
            &model_hash(&second)[..12]
        ));
    }
    sheet.record("reproducibility", pass, parts.join(", "));
}

fn main() {
    let t0 = Instant::now();
    let mut sheet = Sheet::default();
    oracle_equivalence(&mut sheet);
    gradient_checks(&mut sheet);
    protocol(&mut sheet);
    let ds = synth_dataset(&SynthSpec::default(), CORPUS_SEED);
    algorithm1(&mut sheet, &ds);
    let runs = end_to_end(&mut sheet, &ds);
    confusion_echo(&mut sheet, &runs);
    online(&mut sheet, &runs);
    reproducibility(&mut sheet, &ds, &runs);
    println!("acceptance finished in {:.0}s", t0.elapsed().as_secs_f64());
    if !sheet.failed.is_empty() {
        eprintln!("failed: {}", sheet.failed.join(", "));
        std::process::exit(1);
    }
}
