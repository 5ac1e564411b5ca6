//! Live frame intake: a UDP listener that parses OSC packets into a bounded
//! frame queue shared with any other producer (the WebSocket bridge).

use std::collections::VecDeque;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::osc::{parse_osc_packet, timetag_to_ms, TIMETAG_IMMEDIATE};
use crate::types::Frame;

pub const DEFAULT_UDP_PORT: u16 = 9009;
pub const QUEUE_CAPACITY: usize = 64;

/// Bounded FIFO; a push into a full queue drops the oldest frame.
#[derive(Debug)]
pub struct FrameQueue {
    inner: Mutex<VecDeque<Frame>>,
    ready: Condvar,
    capacity: usize,
    overflows: AtomicU64,
    closed: AtomicBool,
}

impl FrameQueue {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(FrameQueue {
            inner: Mutex::new(VecDeque::with_capacity(capacity)),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            overflows: AtomicU64::new(0),
            closed: AtomicBool::new(false),
        })
    }

    pub fn push(&self, f: Frame) {
        let mut q = self.inner.lock().unwrap();
        if q.len() == self.capacity {
            q.pop_front();
            self.overflows.fetch_add(1, Ordering::Relaxed);
        }
        q.push_back(f);
        self.ready.notify_one();
    }

    /// Waits up to `timeout` for a frame; `None` on timeout or when the
    /// queue is closed and empty.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<Frame> {
        let q = self.inner.lock().unwrap();
        let (mut q, _) = self
            .ready
            .wait_timeout_while(q, timeout, |q| q.is_empty() && !self.closed.load(Ordering::Relaxed))
            .unwrap();
        q.pop_front()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn overflows(&self) -> u64 {
        self.overflows.load(Ordering::Relaxed)
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::Relaxed);
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ListenerStats {
    pub frames_ok: u64,
    pub packets_bad: u64,
    pub overflows: u64,
    /// Frame rate over the last second of arrivals.
    pub last_rate_hz: f64,
}

#[derive(Debug, Default)]
struct Counters {
    frames_ok: AtomicU64,
    packets_bad: AtomicU64,
    rate_mhz: AtomicU64,
}

/// Handle of a running UDP listener; dropping it stops the thread.
pub struct Listener {
    addr: SocketAddr,
    queue: Arc<FrameQueue>,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl Listener {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn queue(&self) -> &Arc<FrameQueue> {
        &self.queue
    }

    pub fn stats(&self) -> ListenerStats {
        ListenerStats {
            frames_ok: self.counters.frames_ok.load(Ordering::Relaxed),
            packets_bad: self.counters.packets_bad.load(Ordering::Relaxed),
            overflows: self.queue.overflows(),
            last_rate_hz: self.counters.rate_mhz.load(Ordering::Relaxed) as f64 / 1000.0,
        }
    }

    pub fn stop(mut self) -> ListenerStats {
        self.shutdown();
        self.stats()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Listener {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` and forwards every parsed frame to `queue` in arrival
/// order. Frames outside a timed bundle are stamped with milliseconds since
/// the listener started.
pub fn listen_udp(addr: impl Into<SocketAddr>, queue: Arc<FrameQueue>) -> Result<Listener> {
    let socket = UdpSocket::bind(addr.into())?;
    socket.set_read_timeout(Some(Duration::from_millis(50)))?;
    let addr = socket.local_addr()?;
    let counters = Arc::new(Counters::default());
    let stop = Arc::new(AtomicBool::new(false));
    let thread = {
        let (queue, counters, stop) = (queue.clone(), counters.clone(), stop.clone());
        std::thread::Builder::new()
            .name("udp-listener".into())
            .spawn(move || receive_loop(socket, queue, counters, stop))?
    };
    Ok(Listener {
        addr,
        queue,
        counters,
        stop,
        thread: Some(thread),
    })
}

fn receive_loop(socket: UdpSocket, queue: Arc<FrameQueue>, counters: Arc<Counters>, stop: Arc<AtomicBool>) {
    let start = Instant::now();
    let mut buf = vec![0u8; 65_536];
    let mut arrivals: VecDeque<Instant> = VecDeque::new();
    while !stop.load(Ordering::Relaxed) {
        let n = match socket.recv_from(&mut buf) {
            Ok((n, _)) => n,
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                continue
            }
            Err(e) => {
                log::warn!("udp receive failed: {e}");
                continue;
            }
        };
        let packet = match parse_osc_packet(&buf[..n]) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("dropped packet: {e}");
                counters.packets_bad.fetch_add(1, Ordering::Relaxed);
                continue;
            }
        };
        let now = Instant::now();
        for pf in packet.frames {
            let mut frame = pf.frame;
            frame.timestamp_ms = match pf.timetag {
                Some(t) if t != TIMETAG_IMMEDIATE => timetag_to_ms(t),
                _ => start.elapsed().as_millis() as u64,
            };
            queue.push(frame);
            counters.frames_ok.fetch_add(1, Ordering::Relaxed);
            arrivals.push_back(now);
        }
        while arrivals.front().is_some_and(|t| now.duration_since(*t) > Duration::from_secs(1)) {
            arrivals.pop_front();
        }
        counters.rate_mhz.store(arrivals.len() as u64 * 1000, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osc::encode_osc_frame;
    use crate::types::TAXELS;

    #[test]
    fn queue_drops_oldest() {
        let q = FrameQueue::new(3);
        for t in 0..5 {
            q.push(Frame::zeros(t));
        }
        assert_eq!(q.overflows(), 2);
        let got: Vec<u64> = std::iter::from_fn(|| q.pop_timeout(Duration::ZERO))
            .map(|f| f.timestamp_ms)
            .collect();
        assert_eq!(got, vec![2, 3, 4]);
    }

    #[test]
    fn udp_frames_arrive_in_order() {
        let q = FrameQueue::new(QUEUE_CAPACITY);
        let l = listen_udp(([127, 0, 0, 1], 0), q.clone()).unwrap();
        let tx = UdpSocket::bind(("127.0.0.1", 0)).unwrap();
        for i in 0..20 {
            let mut p = [0.0; TAXELS];
            p[i] = 0.5;
            tx.send_to(&encode_osc_frame(&Frame::new(p, 0).unwrap()), l.local_addr()).unwrap();
        }
        tx.send_to(b"garbage", l.local_addr()).unwrap();
        let mut got = Vec::new();
        while got.len() < 20 {
            let f = q.pop_timeout(Duration::from_secs(2)).expect("frame");
            got.push(f.pressures.iter().position(|v| *v > 0.0).unwrap());
        }
        assert_eq!(got, (0..20).collect::<Vec<_>>());
        let deadline = Instant::now() + Duration::from_secs(2);
        while l.stats().packets_bad == 0 && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        let s = l.stop();
        assert_eq!((s.frames_ok, s.packets_bad, s.overflows), (20, 1, 0));
    }
}
