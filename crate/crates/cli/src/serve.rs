use std::fs::File;
use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::Args;
use serde::Deserialize;
use serde_json::json;
use tactile_gesture::eval::{OnlinePrediction, Recognizer, SegmenterConfig};
use tactile_gesture::listener::{listen_udp, FrameQueue, QUEUE_CAPACITY};
use tactile_gesture::method::TrainedModel;
use tactile_gesture::{Frame, GestureClass};
use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::StatusCode;
use tungstenite::Message;

use crate::manifest::{beside, Manifest};
use crate::{io_err, CliError};

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    model: PathBuf,
    /// UDP address for OSC frames; port 0 picks a free one.
    #[arg(long, default_value = "0.0.0.0:9009", value_parser = parse_addr)]
    udp: SocketAddr,
    /// WebSocket address; clients connect to ws://host:port/stream.
    #[arg(long, default_value = "0.0.0.0:8080", value_parser = parse_addr)]
    ws: SocketAddr,
    /// Append every prediction as a JSON line.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Close an open segment after this long without frames.
    #[arg(long, default_value_t = 500)]
    idle_flush_ms: u64,
    /// Exit after this many predictions.
    #[arg(long)]
    max_predictions: Option<usize>,
    /// Exit after this many seconds without frames.
    #[arg(long)]
    idle_exit: Option<f64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

/// Accepts a bare port as shorthand for `0.0.0.0:port`.
fn parse_addr(s: &str) -> Result<SocketAddr, String> {
    if let Ok(port) = s.parse::<u16>() {
        return Ok(SocketAddr::from(([0, 0, 0, 0], port)));
    }
    s.parse().map_err(|e| format!("{s}: {e}"))
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ClientMessage {
    Frame { t: u64, p: Vec<f64> },
}

type Hub = Arc<Mutex<Vec<Sender<String>>>>;

fn broadcast(hub: &Hub, msg: &str) {
    hub.lock()
        .unwrap()
        .retain(|tx| tx.send(msg.to_string()).is_ok());
}

fn client_frame(text: &str) -> Option<Frame> {
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Frame { t, p }) => {
            let p: Vec<f64> = p
                .iter()
                .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
                .collect();
            Frame::from_slice(&p, t).ok()
        }
        Err(_) => None,
    }
}

fn ws_client(stream: TcpStream, queue: Arc<FrameQueue>, hub: Hub) {
    let peer = stream.peer_addr().ok();
    let only_stream = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() == "/stream" {
            Ok(resp)
        } else {
            let mut err = ErrorResponse::new(Some("use /stream".into()));
            *err.status_mut() = StatusCode::NOT_FOUND;
            Err(err)
        }
    };
    let mut ws = match tungstenite::accept_hdr(stream, only_stream) {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("websocket handshake failed: {e}");
            return;
        }
    };
    log::info!("websocket client {peer:?} connected");
    let _ = ws.get_ref().set_read_timeout(Some(Duration::from_millis(20)));
    let (tx, rx): (Sender<String>, Receiver<String>) = mpsc::channel();
    hub.lock().unwrap().push(tx);
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => match client_frame(t.as_str()) {
                Some(f) => queue.push(f),
                None => log::warn!("ignored malformed client message"),
            },
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
        while let Ok(msg) = rx.try_recv() {
            if ws.send(Message::text(msg)).is_err() {
                return;
            }
        }
        if queue.is_closed() {
            // the last prediction may have arrived after the drain above
            while let Ok(msg) = rx.try_recv() {
                let _ = ws.send(Message::text(msg));
            }
            let _ = ws.close(None);
            let _ = ws.flush();
            return;
        }
    }
    log::info!("websocket client {peer:?} left");
}

fn prediction_message(p: &OnlinePrediction) -> serde_json::Value {
    let label = GestureClass::from_id(p.prediction.label)
        .map(|c| c.name().to_string())
        .unwrap_or_default();
    json!({
        "type": "prediction",
        "label": label,
        "scores": p.prediction.scores,
        "segment_ms": p.segment_ms,
        "latency_ms": p.latency_ms,
    })
}

pub fn run(a: ServeArgs) -> Result<(), CliError> {
    let model = TrainedModel::load(&a.model)?;
    let mut manifest = Manifest::new(
        "serve",
        json!({
            "udp": a.udp.to_string(),
            "ws": a.ws.to_string(),
            "idle_flush_ms": a.idle_flush_ms,
            "segmenter": SegmenterConfig::default(),
            "method": model.method.tag(),
        }),
    );
    manifest.input(&a.model).map_err(io_err(&a.model))?;
    let mut log_file = match &a.log {
        Some(p) => Some(File::create(p).map_err(io_err(p))?),
        None => None,
    };

    let queue = FrameQueue::new(QUEUE_CAPACITY);
    let listener = listen_udp(a.udp, Arc::clone(&queue))
        .map_err(|e| CliError::Runtime(format!("udp {}: {e}", a.udp)))?;
    let tcp = TcpListener::bind(a.ws).map_err(|e| CliError::Runtime(format!("ws {}: {e}", a.ws)))?;
    let ws_addr = tcp.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
    let hub: Hub = Arc::default();
    {
        let (queue, hub) = (Arc::clone(&queue), Arc::clone(&hub));
        std::thread::spawn(move || {
            for stream in tcp.incoming().flatten() {
                let (queue, hub) = (Arc::clone(&queue), Arc::clone(&hub));
                std::thread::spawn(move || ws_client(stream, queue, hub));
            }
        });
    }
    println!("listening udp={} ws=ws://{}/stream", listener.local_addr(), ws_addr);
    let _ = std::io::stdout().flush();

    let mut recognizer = Recognizer::new(&model, SegmenterConfig::default());
    let mut predictions = 0usize;
    let mut frames = 0u64;
    let mut last_frame = Instant::now();
    let idle_flush = Duration::from_millis(a.idle_flush_ms);
    let emit = |p: OnlinePrediction, log_file: &mut Option<File>| -> Result<(), CliError> {
        let msg = prediction_message(&p);
        println!(
            "{} {:.3} segment={}ms latency={:.1}ms",
            msg["label"].as_str().unwrap_or("?"),
            p.prediction.scores.get(p.prediction.label).copied().unwrap_or(0.0),
            p.segment_ms,
            p.latency_ms
        );
        if let Some(f) = log_file {
            let wall = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
            let mut line = msg.clone();
            line["wall_ms"] = json!(wall as u64);
            writeln!(f, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        broadcast(&hub, &msg.to_string());
        Ok(())
    };
    loop {
        if a.max_predictions.is_some_and(|n| predictions >= n) {
            break;
        }
        let was_active = recognizer.segmenter.is_active();
        let out = match queue.pop_timeout(Duration::from_millis(50)) {
            Some(f) => {
                frames += 1;
                last_frame = Instant::now();
                recognizer.feed(f)
            }
            None => {
                let idle = last_frame.elapsed();
                if a.idle_exit.is_some_and(|s| idle.as_secs_f64() >= s) {
                    break;
                }
                if was_active && idle >= idle_flush {
                    recognizer.flush()
                } else {
                    Ok(None)
                }
            }
        };
        let active = recognizer.segmenter.is_active();
        if active && !was_active {
            broadcast(&hub, &json!({ "type": "state", "active": true }).to_string());
        }
        match out {
            Ok(Some(p)) => {
                predictions += 1;
                emit(p, &mut log_file)?;
            }
            Ok(None) => {}
            Err(e) => log::warn!("segment dropped: {e}"),
        }
        if was_active && !active {
            broadcast(&hub, &json!({ "type": "state", "active": false }).to_string());
        }
    }
    if let Some(p) = recognizer.flush()? {
        predictions += 1;
        emit(p, &mut log_file)?;
    }
    queue.close();
    let stats = listener.stop();
    drop(log_file);
    println!(
        "{}",
        json!({
            "type": "summary",
            "frames": frames,
            "predictions": predictions,
            "udp_frames": stats.frames_ok,
            "bad_packets": stats.packets_bad,
            "overflows": queue.overflows(),
        })
    );
    if let Some(p) = &a.log {
        manifest.output(p).map_err(io_err(p))?;
    }
    let mpath = a
        .manifest
        .clone()
        .unwrap_or_else(|| beside(&a.log.clone().unwrap_or_else(|| a.model.clone()), ".serve.manifest.json"));
    manifest.write(&mpath).map_err(io_err(&mpath))?;
    Ok(())
}
