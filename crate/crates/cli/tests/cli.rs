use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;
use tactile_gesture::synth::{synth_session, SynthSpec};
use tungstenite::Message;

fn tactile() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tactile"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = tactile().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn corpus(dir: &Path) -> String {
    let ds = dir.join("ds.jsonl");
    let (code, _, err) = run(&["generate", "--out", ds.to_str().unwrap(), "--participants", "4", "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    ds.to_str().unwrap().to_string()
}

#[test]
fn train_then_eval_reproduces_the_test_score() {
    let dir = tempfile::tempdir().unwrap();
    let ds = corpus(dir.path());
    let model = dir.path().join("m.json");
    let m = model.to_str().unwrap();
    let (code, _, err) = run(&["train", "--data", &ds, "--method", "tp-knn", "--out", m, "--seed", "5"]);
    assert_eq!(code, 0, "{err}");
    let results = read_json(&dir.path().join("m.json.results.json"));
    let eval_out = dir.path().join("eval.json");
    let (code, stdout, err) = run(&["eval", "--model", m, "--data", &ds, "--results", eval_out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("accuracy="));
    let ev = read_json(&eval_out);
    assert_eq!(ev["accuracy"], results["accuracy"]);
    assert_eq!(ev["confusion"], results["confusion"]);
    assert_eq!(ev["test_size"], results["test_size"]);

    let manifest = read_json(&dir.path().join("m.json.manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seeds"]["train"], 5);
    assert_eq!(manifest["outputs"][0]["sha256"], results["model_sha256"]);
    assert_eq!(manifest["inputs"][0]["sha256"], results["dataset_sha256"]);
    assert!(dir.path().join("m.json.eval.manifest.json").exists());
    assert!(dir.path().join("ds.jsonl.manifest.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["train", "--data", "x", "--method", "hmm", "--out", out]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["train", "--data", "/nonexistent.jsonl", "--method", "st-knn", "--out", out]).0, 3);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    assert_eq!(run(&["train", "--data", bad.to_str().unwrap(), "--method", "st-knn", "--out", out]).0, 3);
    assert_eq!(run(&["serve", "--model", "/nonexistent.json"]).0, 3);
    assert_eq!(run(&["--help"]).0, 0);
}

struct Server {
    child: Child,
    udp: String,
    ws: String,
    lines: std::sync::mpsc::Receiver<String>,
}

fn serve(model: &str, extra: &[&str]) -> Server {
    let mut child = tactile()
        .args(["serve", "--model", model, "--udp", "127.0.0.1:0", "--ws", "127.0.0.1:0"])
        .args(extra)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let (tx, lines) = std::sync::mpsc::channel();
    let stdout = child.stdout.take().unwrap();
    std::thread::spawn(move || {
        for l in BufReader::new(stdout).lines().map_while(Result::ok) {
            let _ = tx.send(l);
        }
    });
    let first = lines.recv_timeout(Duration::from_secs(30)).unwrap();
    let udp = first.split("udp=").nth(1).unwrap().split(' ').next().unwrap().to_string();
    let ws = first.split("ws=").nth(1).unwrap().trim().to_string();
    Server { child, udp, ws, lines }
}

fn summary(s: &Server) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    while Instant::now() < deadline {
        if let Ok(l) = s.lines.recv_timeout(Duration::from_secs(1)) {
            if l.starts_with('{') {
                return serde_json::from_str(&l).unwrap();
            }
        }
    }
    panic!("server never reported a summary");
}

fn trained_model(dir: &Path) -> String {
    let ds = corpus(dir);
    let m = dir.join("m.json");
    let (code, _, err) = run(&["train", "--data", &ds, "--method", "tp-rf", "--out", m.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    m.to_str().unwrap().to_string()
}

#[test]
fn replay_into_serve_over_udp() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());
    let log = dir.path().join("serve.log");
    let mut s = serve(&model, &["--log", log.to_str().unwrap(), "--idle-exit", "1.5"]);
    let (mut ws, _) = tungstenite::connect(&s.ws).unwrap();
    let truth = dir.path().join("truth.json");
    let (code, _, err) = run(&["replay", "--to", &s.udp, "--gestures", "10", "--rate", "60", "--truth", truth.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let sum = summary(&s);
    assert!(s.child.wait().unwrap().success());
    assert_eq!(sum["overflows"], 0);
    assert_eq!(sum["bad_packets"], 0);
    assert_eq!(sum["frames"], sum["udp_frames"]);
    let n = sum["predictions"].as_u64().unwrap();
    assert!((8..=12).contains(&n), "{sum}");
    let logged = std::fs::read_to_string(&log).unwrap();
    assert_eq!(logged.lines().count() as u64, n);

    let mut kinds = Vec::new();
    while let Ok(msg) = ws.read() {
        if let Message::Text(t) = msg {
            let v: Value = serde_json::from_str(t.as_str()).unwrap();
            if v["type"] == "prediction" {
                assert_eq!(v["scores"].as_array().unwrap().len(), 10);
                assert!(v["label"].is_string());
                assert!(v["segment_ms"].is_u64() && v["latency_ms"].is_f64());
            } else {
                assert_eq!(v["type"], "state");
                assert!(v["active"].is_boolean());
            }
            kinds.push(v["type"].as_str().unwrap().to_string());
        }
    }
    assert_eq!(kinds.iter().filter(|k| *k == "prediction").count() as u64, n);
    assert!(kinds.iter().any(|k| k == "state"));
}

#[test]
fn websocket_frames_are_recognized() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());
    let mut s = serve(&model, &["--max-predictions", "3"]);
    let (mut ws, _) = tungstenite::connect(&s.ws).unwrap();
    if let tungstenite::stream::MaybeTlsStream::Plain(tcp) = ws.get_ref() {
        tcp.set_read_timeout(Some(Duration::from_secs(60))).unwrap();
    }
    // malformed frames are skipped
    ws.send(Message::text("{\"type\":\"frame\",\"t\":1}")).unwrap();
    let session = synth_session(&SynthSpec::default(), 11, 3, 20);
    for (i, f) in session.frames.iter().enumerate() {
        let msg = serde_json::json!({ "type": "frame", "t": i as u64 * 66, "p": f.pressures.to_vec() });
        // the server exits once it has three predictions
        if ws.send(Message::text(msg.to_string())).is_err() {
            break;
        }
        // the server queue is bounded and drops the oldest frame when full
        std::thread::sleep(Duration::from_millis(5));
    }
    let mut predictions = 0;
    while let Ok(msg) = ws.read() {
        if let Message::Text(t) = msg {
            let v: Value = serde_json::from_str(t.as_str()).unwrap();
            if v["type"] == "prediction" {
                predictions += 1;
                // segment durations follow client timestamps
                assert_eq!(v["segment_ms"].as_u64().unwrap() % 66, 0);
            }
        }
    }
    assert_eq!(predictions, 3);
    let sum = summary(&s);
    assert_eq!(sum["predictions"], 3);
    assert_eq!(sum["overflows"], 0);
    assert!(s.child.wait().unwrap().success());
}
