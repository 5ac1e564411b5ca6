mod manifest;
mod serve;

use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tactile_gesture::dataset::{read_dataset, write_dataset};
use tactile_gesture::eval::{evaluate, split, SplitSpec};
use tactile_gesture::method::{run_experiment, ExperimentConfig, Method, TrainedModel};
use tactile_gesture::model_file::ModelFile;
use tactile_gesture::osc::encode_osc_frame;
use tactile_gesture::synth::{synth_dataset, synth_session, SynthSpec};
use tactile_gesture::{Error, Frame};

use manifest::{beside, file_sha256, Manifest};

#[derive(Parser)]
#[command(name = "tactile", version, about = "Tactile gesture recognition on a 9x9 pressure pad")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labelled corpus as JSON lines.
    Generate(GenerateArgs),
    /// Split, fit and score one method; saves the model and a results file.
    Train(TrainArgs),
    /// Score a saved model on the held-out split it was trained with.
    Eval(EvalArgs),
    /// Live recognition from UDP/OSC frames with a WebSocket feed.
    Serve(serve::ServeArgs),
    /// Send frames to a serving instance over UDP/OSC.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 34)]
    participants: usize,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_tag(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// st-knn, st-rf, st-svm, tp-knn, tp-rf, tp-svm, cnn, lstm, cnnlstm
    #[arg(long, value_parser = parse_method)]
    method: Method,
    #[arg(long)]
    augment: bool,
    /// Leave-one-subject-out hyperparameter search (classical methods).
    #[arg(long)]
    cv: bool,
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to `<out>.results.json`.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Score every recording instead of the held-out split.
    #[arg(long)]
    whole: bool,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Receiver address.
    #[arg(long, default_value = "127.0.0.1:9009")]
    to: SocketAddr,
    /// Stream these recordings back to back instead of a synthetic session.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    gestures: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Idle frames between gestures.
    #[arg(long, default_value_t = 30)]
    gap: usize,
    /// Frames per second; 0 sends as fast as possible.
    #[arg(long, default_value_t = 15.0)]
    rate: f64,
    /// Write the ground-truth gesture boundaries here.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve::run(a),
        Command::Replay(a) => replay(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    if a.participants == 0 || a.repetitions == 0 {
        return Err(CliError::Usage("participants and repetitions must be positive".into()));
    }
    let spec = SynthSpec {
        participants: a.participants,
        repetitions: a.repetitions,
        ..SynthSpec::default()
    };
    let recs = synth_dataset(&spec, a.seed);
    let n = write_dataset(&recs, &a.out)?;
    let mut m = Manifest::new("generate", json!({ "spec": spec }));
    m.seed("corpus", a.seed);
    m.output(&a.out).map_err(io_err(&a.out))?;
    let mpath = a.manifest.unwrap_or_else(|| beside(&a.out, ".manifest.json"));
    m.write(&mpath).map_err(io_err(&mpath))?;
    println!("wrote {n} recordings to {}", a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    if a.cv && a.cv_folds == 0 {
        return Err(CliError::Usage("--cv-folds must be positive".into()));
    }
    let ds = read_dataset(&a.data)?;
    let data_sha = file_sha256(&a.data).map_err(io_err(&a.data))?;
    let mut cfg = ExperimentConfig::new(a.method, a.augment, a.seed);
    cfg.cv = a.cv;
    cfg.cv_folds = a.cv_folds;
    let exp = run_experiment(&ds, &cfg)?;

    let mut mf = exp.model.to_model_file()?;
    mf.metadata.insert("split".into(), serde_json::to_value(&cfg.split).map_err(Error::from)?);
    mf.metadata.insert("augment".into(), json!(a.augment));
    mf.metadata.insert("dataset_sha256".into(), json!(data_sha));
    mf.save(&a.out)?;
    let model_sha = file_sha256(&a.out).map_err(io_err(&a.out))?;

    let ev = &exp.evaluation;
    let cv = exp.cv.as_ref().map(|r| {
        json!({
            "grid": a.method.search_grid(),
            "held_out": r.held_out,
            "mean_scores": r.mean_scores,
            "best_index": r.best_index,
        })
    });
    let results = json!({
        "method": a.method.tag(),
        "augment": a.augment,
        "seed": a.seed,
        "hyperparams": exp.hyper,
        "train_size": exp.train_size,
        "test_size": exp.test_size,
        "accuracy": ev.accuracy,
        "confusion": ev.confusion.counts,
        "confused_pairs": ev.confusion.confused_pairs().iter().take(5).collect::<Vec<_>>(),
        "train_seconds": exp.train_seconds,
        "cv": cv,
        "model_sha256": model_sha,
        "dataset_sha256": data_sha,
    });
    let rpath = a.results.unwrap_or_else(|| beside(&a.out, ".results.json"));
    let text = serde_json::to_string_pretty(&results).map_err(Error::from)?;
    std::fs::write(&rpath, text + "\n").map_err(io_err(&rpath))?;

    let mut m = Manifest::new("train", serde_json::to_value(&cfg).map_err(Error::from)?);
    m.seed("split", cfg.split.seed);
    m.seed("train", cfg.seed);
    m.input(&a.data).map_err(io_err(&a.data))?;
    m.output(&a.out).map_err(io_err(&a.out))?;
    m.output(&rpath).map_err(io_err(&rpath))?;
    let mpath = a.manifest.unwrap_or_else(|| beside(&a.out, ".manifest.json"));
    m.write(&mpath).map_err(io_err(&mpath))?;

    println!(
        "{} augment={} train={} test={} accuracy={:.4} hyper={} ({:.1}s)",
        a.method.tag(),
        a.augment,
        exp.train_size,
        exp.test_size,
        ev.accuracy,
        serde_json::to_string(&exp.hyper).map_err(Error::from)?,
        exp.train_seconds
    );
    println!("model sha256 {model_sha}");
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mf = ModelFile::load(&a.model)?;
    let model = TrainedModel::from_model_file(&mf)?;
    let ds = read_dataset(&a.data)?;
    let mut cfg = json!({ "whole": a.whole });
    let test = if a.whole {
        ds
    } else {
        let spec = match mf.metadata.get("split") {
            Some(v) => serde_json::from_value::<SplitSpec>(v.clone()).map_err(Error::from)?,
            None => {
                return Err(CliError::Data(
                    "model carries no split record; pass --whole to score every recording".into(),
                ))
            }
        };
        cfg["split"] = json!(spec);
        split(&ds, &SplitSpec { augment_train_only: false, ..spec })?.test
    };
    let ev = evaluate(&model, &test)?;
    println!("{} on {} recordings: accuracy={:.4}", model.method.tag(), test.len(), ev.accuracy);
    println!("{}", ev.confusion.render());

    let mut m = Manifest::new("eval", cfg);
    m.input(&a.model).map_err(io_err(&a.model))?;
    m.input(&a.data).map_err(io_err(&a.data))?;
    if let Some(r) = &a.results {
        let results = json!({
            "method": model.method.tag(),
            "test_size": test.len(),
            "accuracy": ev.accuracy,
            "confusion": ev.confusion.counts,
        });
        let text = serde_json::to_string_pretty(&results).map_err(Error::from)?;
        std::fs::write(r, text + "\n").map_err(io_err(r))?;
        m.output(r).map_err(io_err(r))?;
    }
    let mpath = a.manifest.unwrap_or_else(|| beside(&a.model, ".eval.manifest.json"));
    m.write(&mpath).map_err(io_err(&mpath))?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<(), CliError> {
    if !(a.rate >= 0.0 && a.rate.is_finite()) {
        return Err(CliError::Usage("--rate must be a finite non-negative number".into()));
    }
    let mut m = Manifest::new(
        "replay",
        json!({ "to": a.to.to_string(), "gestures": a.gestures, "gap": a.gap, "rate": a.rate }),
    );
    let (frames, truth) = match &a.data {
        Some(path) => {
            let recs = read_dataset(path)?;
            m.input(path).map_err(io_err(path))?;
            let mut frames = Vec::new();
            let mut truth = Vec::new();
            let push_idle = |frames: &mut Vec<Frame>, n: usize| frames.extend((0..n).map(|_| Frame::zeros(0)));
            push_idle(&mut frames, a.gap);
            for r in &recs {
                let start = frames.len();
                frames.extend_from_slice(r.real_frames());
                truth.push(json!({ "start": start, "end": frames.len(), "label": r.label.map(|c| c.id()), "id": r.id }));
                push_idle(&mut frames, a.gap);
            }
            (frames, truth)
        }
        None => {
            m.seed("session", a.seed);
            let s = synth_session(&SynthSpec::default(), a.seed, a.gestures, a.gap);
            let truth = s
                .gestures
                .iter()
                .map(|g| json!({ "start": g.start, "end": g.end, "label": g.label.id() }))
                .collect();
            (s.frames, truth)
        }
    };
    let sock = UdpSocket::bind(("0.0.0.0", 0)).map_err(|e| CliError::Runtime(e.to_string()))?;
    let period = if a.rate > 0.0 { Duration::from_secs_f64(1.0 / a.rate) } else { Duration::ZERO };
    let t0 = Instant::now();
    for (i, f) in frames.iter().enumerate() {
        let due = period * i as u32;
        if let Some(wait) = due.checked_sub(t0.elapsed()) {
            std::thread::sleep(wait);
        }
        sock.send_to(&encode_osc_frame(f), a.to).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    if let Some(path) = &a.truth {
        let text = serde_json::to_string_pretty(&truth).map_err(Error::from)?;
        std::fs::write(path, text + "\n").map_err(io_err(path))?;
        m.output(path).map_err(io_err(path))?;
    }
    if let Some(path) = &a.manifest {
        m.write(path).map_err(io_err(path))?;
    }
    println!(
        "sent {} frames ({} gestures) to {} in {:.1}s",
        frames.len(),
        truth.len(),
        a.to,
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}
