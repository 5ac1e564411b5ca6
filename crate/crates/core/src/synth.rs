//! Seeded synthetic gesture corpora.
//!
//! Each recording is a centroid path per finger, rendered frame by frame as
//! Gaussian footprints, scaled by the virtual participant's gain field and a
//! mild tilt gradient, with additive sensor noise. Generation is pure given
//! `(SynthSpec, corpus_seed)`: recording `i` draws from ChaCha stream `i`,
//! participants from their own streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::nominal_timestamp_ms;
use crate::types::{Frame, GestureClass, Recording, Speed, Tilt, GRID, TAXELS};

/// Lowest and highest cell centre along either axis.
const LO: f64 = 0.5;
const HI: f64 = GRID as f64 - 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub participants: usize,
    /// Recordings per (participant, class, speed, tilt).
    pub repetitions: usize,
    pub noise_sigma: f64,
    /// Values below this after noise are read as zero, like a sensor's
    /// baseline dead band.
    pub noise_floor: f64,
    pub rate_hz: f64,
    pub fast_frames: (usize, usize),
    pub regular_frames: (usize, usize),
    pub slow_frames: (usize, usize),
    pub tap_press_frames: (usize, usize),
    pub double_tap_gap_frames: (usize, usize),
    pub double_tap_jitter: f64,
    pub swipe_length: (f64, f64),
    pub swipe_jitter: f64,
    pub circle_radius: (f64, f64),
    /// Spread of the circle's starting angle around 12 o'clock (radians).
    pub circle_start_sigma: f64,
    /// Circle centres sit within this distance of the pad centre, shifted
    /// by `circle_bias` times the participant's habitual offset.
    pub circle_center_wander: f64,
    pub circle_bias: f64,
    /// Same for tap positions and the cross-track position of swipes.
    pub placement_wander: f64,
    pub two_finger_separation: (f64, f64),
    /// Fraction of pressure lost between the start and end of a stroke.
    pub stroke_decay: f64,
    /// Progress along a stroke is `s^ease_in` for normalized time `s`, so
    /// fingers start slowly and speed up.
    pub ease_in: f64,
    /// The same for the angular progress of circles.
    pub circle_ease_in: f64,
    /// Stationary frames at the start of a stroke while the finger lands.
    pub touch_down_frames: (usize, usize),
    /// Idle frames before and after the motion.
    pub rest_frames: (usize, usize),
    /// Row-to-row pressure gradient across the grid at 60 degrees of tilt.
    pub max_tilt_gradient: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            participants: 34,
            repetitions: 1,
            noise_sigma: 0.02,
            noise_floor: 0.04,
            rate_hz: 15.0,
            fast_frames: (6, 10),
            regular_frames: (10, 18),
            slow_frames: (18, 30),
            tap_press_frames: (2, 4),
            double_tap_gap_frames: (2, 5),
            double_tap_jitter: 0.5,
            swipe_length: (5.0, 7.0),
            swipe_jitter: 0.15,
            circle_radius: (2.0, 3.2),
            circle_start_sigma: 0.3,
            circle_center_wander: 0.75,
            circle_bias: 0.5,
            placement_wander: 1.5,
            two_finger_separation: (2.0, 3.0),
            stroke_decay: 0.35,
            ease_in: 1.8,
            circle_ease_in: 2.0,
            touch_down_frames: (1, 2),
            rest_frames: (1, 3),
            max_tilt_gradient: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn total_recordings(&self) -> usize {
        self.participants * self.repetitions * GestureClass::ALL.len() * Speed::ALL.len() * Tilt::ALL.len()
    }

    pub fn motion_frames(&self, speed: Speed) -> (usize, usize) {
        match speed {
            Speed::Fast => self.fast_frames,
            Speed::Regular => self.regular_frames,
            Speed::Slow => self.slow_frames,
        }
    }

    /// Press length of one tap at the given speed.
    pub fn tap_press(&self, speed: Speed) -> usize {
        let (lo, hi) = self.tap_press_frames;
        match speed {
            Speed::Fast => lo,
            Speed::Regular => (lo + hi) / 2,
            Speed::Slow => hi,
        }
    }
}

/// Per-person variation: finger width, pressure, tempo, placement habit and
/// a fixed per-taxel gain.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualParticipant {
    pub index: usize,
    pub finger_sigma: f64,
    pub amplitude: f64,
    pub speed_bias: f64,
    pub position_bias: (f64, f64),
    pub gain_field: [f64; TAXELS],
}

const PARTICIPANT_STREAM: u64 = 1 << 40;

impl VirtualParticipant {
    pub fn derive(corpus_seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
        rng.set_stream(PARTICIPANT_STREAM + index as u64);
        let mut gain_field = [1.0; TAXELS];
        let finger_sigma = rng.random_range(0.6..=1.2);
        let amplitude = rng.random_range(0.5..=1.0);
        // Log-uniform so that faster and slower people are equally likely.
        let speed_bias = rng.random_range(0.8f64.ln()..=1.25f64.ln()).exp();
        let position_bias = (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
        for g in gain_field.iter_mut() {
            *g = rng.random_range(0.9..=1.1);
        }
        VirtualParticipant {
            index,
            finger_sigma,
            amplitude,
            speed_bias,
            position_bias,
            gain_field,
        }
    }

    pub fn id(&self) -> String {
        format!("p{:02}", self.index + 1)
    }
}

/// Finger positions (SensorCoord units) and pressure envelope per frame.
/// An empty finger list is an idle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GesturePlan {
    pub fingers: Vec<Vec<(f64, f64)>>,
    pub envelope: Vec<f64>,
}

impl GesturePlan {
    pub fn len(&self) -> usize {
        self.fingers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fingers.is_empty()
    }

    fn idle(&mut self, n: usize) {
        for _ in 0..n {
            self.fingers.push(Vec::new());
            self.envelope.push(0.0);
        }
    }

    fn touch(&mut self, fingers: Vec<(f64, f64)>, envelope: f64) {
        self.fingers.push(fingers);
        self.envelope.push(envelope);
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn uniform_usize(rng: &mut impl Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

/// Uniform draw inside `[lo, hi]`, nudged by `bias` and kept in range.
fn place(rng: &mut impl Rng, lo: f64, hi: f64, bias: f64) -> f64 {
    if hi <= lo {
        return 0.5 * (lo + hi);
    }
    (rng.random_range(lo..=hi) + bias).clamp(lo, hi)
}

/// Pad centre plus `bias` and a uniform wander, kept inside `[lo, hi]`.
fn near_middle(rng: &mut impl Rng, wander: f64, bias: f64, lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (LO + HI);
    let w = if wander > 0.0 {
        rng.random_range(-wander..=wander)
    } else {
        0.0
    };
    if hi <= lo {
        return 0.5 * (lo + hi);
    }
    (mid + bias + w).clamp(lo, hi)
}

fn motion_length(spec: &SynthSpec, p: &VirtualParticipant, speed: Speed, rng: &mut impl Rng) -> usize {
    let base = uniform_usize(rng, spec.motion_frames(speed)) as f64;
    ((base / p.speed_bias).round() as usize).clamp(4, 56)
}

/// Direction of travel (unit vector) for the swipe classes.
fn swipe_direction(class: GestureClass) -> Option<(f64, f64)> {
    match class {
        GestureClass::SwipeUp | GestureClass::SwipeUp2f => Some((0.0, 1.0)),
        GestureClass::SwipeDown | GestureClass::SwipeDown2f => Some((0.0, -1.0)),
        GestureClass::SwipeRight => Some((1.0, 0.0)),
        GestureClass::SwipeLeft => Some((-1.0, 0.0)),
        _ => None,
    }
}

/// Draws the finger path of one gesture, including idle margins.
pub fn plan_gesture(
    class: GestureClass,
    participant: &VirtualParticipant,
    speed: Speed,
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> GesturePlan {
    let mut plan = GesturePlan {
        fingers: Vec::new(),
        envelope: Vec::new(),
    };
    let (bx, by) = participant.position_bias;
    plan.idle(uniform_usize(rng, spec.rest_frames));
    let press = |plan: &mut GesturePlan, at: (f64, f64), frames: usize| {
        for t in 0..frames {
            plan.touch(vec![at], 1.0 - 0.15 * t as f64);
        }
    };
    match class {
        GestureClass::Tap | GestureClass::DoubleTap => {
            let wander = spec.placement_wander;
            let at = (
                near_middle(rng, wander, bx, 1.0, 8.0),
                near_middle(rng, wander, by, 1.0, 8.0),
            );
            let frames = spec.tap_press(speed);
            press(&mut plan, at, frames);
            if class == GestureClass::DoubleTap {
                plan.idle(uniform_usize(rng, spec.double_tap_gap_frames));
                let r = spec.double_tap_jitter * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let second = (
                    (at.0 + r * a.cos()).clamp(LO, HI),
                    (at.1 + r * a.sin()).clamp(LO, HI),
                );
                press(&mut plan, second, frames);
            }
        }
        GestureClass::CircleCw | GestureClass::CircleCcw => {
            let radius = uniform(rng, spec.circle_radius);
            let wander = spec.circle_center_wander;
            let (bias_x, bias_y) = (spec.circle_bias * bx, spec.circle_bias * by);
            let cx = near_middle(rng, wander, bias_x, LO + radius, HI - radius);
            let cy = near_middle(rng, wander, bias_y, LO + radius, HI - radius);
            let start = std::f64::consts::FRAC_PI_2
                + Normal::new(0.0, spec.circle_start_sigma.max(0.0))
                    .expect("finite sigma")
                    .sample(rng);
            let sign = if class == GestureClass::CircleCw { -1.0 } else { 1.0 };
            let n = motion_length(spec, participant, speed, rng);
            let dwell = uniform_usize(rng, spec.touch_down_frames);
            for t in 0..n + dwell {
                let s = t.saturating_sub(dwell) as f64 / (n - 1) as f64;
                let a = start + sign * std::f64::consts::TAU * s.powf(spec.circle_ease_in);
                plan.touch(
                    vec![(cx + radius * a.cos(), cy + radius * a.sin())],
                    1.0 - spec.stroke_decay * s,
                );
            }
        }
        _ => {
            let (dx, dy) = swipe_direction(class).expect("remaining classes are swipes");
            let two = matches!(class, GestureClass::SwipeUp2f | GestureClass::SwipeDown2f);
            let length = uniform(rng, spec.swipe_length).min(HI - LO);
            let half_sep = if two {
                0.5 * uniform(rng, spec.two_finger_separation)
            } else {
                0.0
            };
            // Along-track start, measured in the travel direction.
            let along_lo = LO;
            let along_hi = HI - length;
            let (along_bias, across_bias) = if dx != 0.0 { (bx * dx, by) } else { (by * dy, bx) };
            let along0 = place(rng, along_lo, along_hi, along_bias);
            let across = near_middle(
                rng,
                spec.placement_wander,
                across_bias,
                LO + 0.5 + half_sep,
                HI - 0.5 - half_sep,
            );
            let jitter = Normal::new(0.0, spec.swipe_jitter.max(0.0)).expect("finite sigma");
            let n = motion_length(spec, participant, speed, rng);
            let dwell = uniform_usize(rng, spec.touch_down_frames);
            for t in 0..n + dwell {
                let s = t.saturating_sub(dwell) as f64 / (n - 1) as f64;
                let along = along0 + length * s.powf(spec.ease_in);
                let wobble = jitter.sample(rng);
                let mut fingers = Vec::new();
                for off in if two { vec![-half_sep, half_sep] } else { vec![0.0] } {
                    let c = (across + off + wobble).clamp(LO, HI);
                    // `along` runs low-to-high; mirror it for left/down.
                    let a = if dx + dy > 0.0 { along } else { HI + LO - along };
                    fingers.push(if dx != 0.0 { (a, c) } else { (c, a) });
                }
                plan.touch(fingers, 1.0 - spec.stroke_decay * s);
            }
        }
    }
    plan.idle(uniform_usize(rng, spec.rest_frames));
    plan
}

/// Noise-free pressure of one frame.
pub fn render_clean(
    fingers: &[(f64, f64)],
    envelope: f64,
    participant: &VirtualParticipant,
    tilt: Tilt,
    spec: &SynthSpec,
) -> [f64; TAXELS] {
    let mut p = [0.0; TAXELS];
    if fingers.is_empty() {
        return p;
    }
    let two_s2 = 2.0 * participant.finger_sigma * participant.finger_sigma;
    let gradient = spec.max_tilt_gradient * tilt.degrees() as f64 / 60.0;
    for (idx, v) in p.iter_mut().enumerate() {
        let (row, col) = (idx / GRID, idx % GRID);
        let x = col as f64 + 0.5;
        let y = (GRID - 1 - row) as f64 + 0.5;
        let raw: f64 = fingers
            .iter()
            .map(|(fx, fy)| ((x - fx).powi(2) + (y - fy).powi(2)) / two_s2)
            .map(|d| (-d).exp())
            .sum();
        // Tilt loses a little pressure towards the top rows.
        let tilt_factor = 1.0 - gradient * (y - 0.5) / (GRID - 1) as f64;
        *v = (participant.amplitude * envelope * raw * participant.gain_field[idx] * tilt_factor)
            .min(1.0);
    }
    p
}

fn add_noise(p: &mut [f64; TAXELS], spec: &SynthSpec, rng: &mut impl Rng) {
    if spec.noise_sigma <= 0.0 {
        return;
    }
    let noise = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
    for v in p.iter_mut() {
        let n = (*v + noise.sample(rng)).clamp(0.0, 1.0);
        *v = if n < spec.noise_floor { 0.0 } else { n };
    }
}

/// Renders a plan into timestamped frames starting at `t0_ms`.
pub fn render(
    plan: &GesturePlan,
    participant: &VirtualParticipant,
    tilt: Tilt,
    spec: &SynthSpec,
    first_index: usize,
    rng: &mut impl Rng,
) -> Vec<Frame> {
    plan.fingers
        .iter()
        .zip(&plan.envelope)
        .enumerate()
        .map(|(t, (f, e))| {
            let mut p = render_clean(f, *e, participant, tilt, spec);
            add_noise(&mut p, spec, rng);
            Frame {
                pressures: p,
                timestamp_ms: nominal_timestamp_ms(first_index + t, spec.rate_hz),
            }
        })
        .collect()
}

pub fn synth_gesture(
    class: GestureClass,
    participant: &VirtualParticipant,
    speed: Speed,
    tilt: Tilt,
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> Recording {
    let plan = plan_gesture(class, participant, speed, spec, rng);
    let frames = render(&plan, participant, tilt, spec, 0, rng);
    Recording {
        id: String::new(),
        true_len: frames.len(),
        frames,
        label: Some(class),
        participant: participant.id(),
        tilt,
        speed,
        rate_hz: spec.rate_hz,
    }
}

/// Generator for recording `index` of the corpus.
pub fn recording_rng(corpus_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(corpus_seed);
    rng.set_stream(index as u64);
    rng
}

/// The full balanced corpus: every participant performs every class at
/// every speed and tilt `repetitions` times.
pub fn synth_dataset(spec: &SynthSpec, corpus_seed: u64) -> Vec<Recording> {
    let mut out = Vec::with_capacity(spec.total_recordings());
    for p in 0..spec.participants {
        let participant = VirtualParticipant::derive(corpus_seed, p);
        for class in GestureClass::ALL {
            for speed in Speed::ALL {
                for tilt in Tilt::ALL {
                    for _ in 0..spec.repetitions {
                        let index = out.len();
                        let mut rng = recording_rng(corpus_seed, index);
                        let mut rec = synth_gesture(class, &participant, speed, tilt, spec, &mut rng);
                        rec.id = format!("syn-{index:05}");
                        out.push(rec);
                    }
                }
            }
        }
    }
    out
}

/// Ground truth for one gesture inside a continuous stream; frame range is
/// half-open.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGesture {
    pub start: usize,
    pub end: usize,
    pub label: GestureClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSession {
    pub frames: Vec<Frame>,
    pub gestures: Vec<StreamGesture>,
}

const SESSION_STREAM: u64 = 1 << 41;

/// A continuous stream of `count` gestures separated by `gap_frames` idle
/// frames, cycling through participants, classes, speeds and tilts.
pub fn synth_session(spec: &SynthSpec, seed: u64, count: usize, gap_frames: usize) -> SyntheticSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SESSION_STREAM);
    let participants: Vec<VirtualParticipant> = (0..spec.participants.max(1))
        .map(|p| VirtualParticipant::derive(seed, p))
        .collect();
    let mut frames = Vec::new();
    let mut gestures = Vec::new();
    let idle = |frames: &mut Vec<Frame>, n: usize| {
        for _ in 0..n {
            let t = nominal_timestamp_ms(frames.len(), spec.rate_hz);
            frames.push(Frame::zeros(t));
        }
    };
    idle(&mut frames, gap_frames);
    for i in 0..count {
        let class = GestureClass::ALL[i % GestureClass::ALL.len()];
        let participant = &participants[rng.random_range(0..participants.len())];
        let speed = Speed::ALL[rng.random_range(0..Speed::ALL.len())];
        let tilt = Tilt::ALL[rng.random_range(0..Tilt::ALL.len())];
        let plan = plan_gesture(class, participant, speed, spec, &mut rng);
        let start = frames.len();
        frames.extend(render(&plan, participant, tilt, spec, start, &mut rng));
        gestures.push(StreamGesture {
            start,
            end: frames.len(),
            label: class,
        });
        idle(&mut frames, gap_frames);
    }
    SyntheticSession { frames, gestures }
}
