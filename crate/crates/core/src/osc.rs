//! OSC 1.0 wire format for pressure frames.
//!
//! A frame travels as a single message addressed to [`FRAME_ADDRESS`] with
//! 81 big-endian `float32` arguments in storage order. Messages may be
//! wrapped in (possibly nested) `#bundle` packets; a bundle's time tag is
//! carried through to the parsed frames.
//!
//! ```
//! use tactile_gesture::osc::{encode_osc_frame, parse_osc_packet};
//! use tactile_gesture::types::Frame;
//!
//! let mut frame = Frame::zeros(0);
//! frame.pressures[40] = 0.75;
//! let bytes = encode_osc_frame(&frame);
//! assert_eq!(bytes.len(), 424);
//! let parsed = parse_osc_packet(&bytes).unwrap();
//! assert_eq!(parsed.frames[0].frame.pressures[40], 0.75);
//! ```

use std::fmt;

use thiserror::Error;

use crate::types::{Frame, TAXELS};

pub const FRAME_ADDRESS: &str = "/texyz/frame";
const BUNDLE_TAG: &[u8; 8] = b"#bundle\0";
/// OSC time tag meaning "immediately".
pub const TIMETAG_IMMEDIATE: u64 = 1;
const MAX_BUNDLE_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OscErrorKind {
    Empty,
    /// Length (or element size) not a multiple of four.
    Misaligned,
    Truncated,
    UnterminatedString,
    /// Nonzero byte inside string padding.
    BadPadding,
    BadAddress,
    BadTypeTag(String),
    NonFiniteArgument,
    BadBundleElement(i64),
    TrailingBytes,
    BundleTooDeep,
}

impl fmt::Display for OscErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OscErrorKind::Empty => f.write_str("empty packet"),
            OscErrorKind::Misaligned => f.write_str("length not 4-byte aligned"),
            OscErrorKind::Truncated => f.write_str("packet truncated"),
            OscErrorKind::UnterminatedString => f.write_str("unterminated string"),
            OscErrorKind::BadPadding => f.write_str("nonzero string padding"),
            OscErrorKind::BadAddress => f.write_str("address must start with '/'"),
            OscErrorKind::BadTypeTag(t) => write!(f, "unexpected type tag string {t:?}"),
            OscErrorKind::NonFiniteArgument => f.write_str("non-finite float argument"),
            OscErrorKind::BadBundleElement(n) => write!(f, "invalid bundle element size {n}"),
            OscErrorKind::TrailingBytes => f.write_str("trailing bytes after arguments"),
            OscErrorKind::BundleTooDeep => f.write_str("bundles nested too deeply"),
        }
    }
}

/// Parse failure, located by absolute byte offset within the packet.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("OSC parse error at byte {offset}: {kind}")]
pub struct OscError {
    pub offset: usize,
    pub kind: OscErrorKind,
}

impl OscError {
    fn new(offset: usize, kind: OscErrorKind) -> Self {
        OscError { offset, kind }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFrame {
    pub frame: Frame,
    /// Time tag of the innermost enclosing bundle, if any.
    pub timetag: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OscPacketContents {
    pub frames: Vec<ParsedFrame>,
    /// Messages skipped because their address is not [`FRAME_ADDRESS`].
    pub ignored: usize,
}

/// Parses one UDP payload into frames. Negative pressures are clamped to 0.
pub fn parse_osc_packet(bytes: &[u8]) -> Result<OscPacketContents, OscError> {
    let mut out = OscPacketContents::default();
    parse_element(bytes, 0, None, 0, &mut out)?;
    Ok(out)
}

fn parse_element(
    bytes: &[u8],
    base: usize,
    timetag: Option<u64>,
    depth: usize,
    out: &mut OscPacketContents,
) -> Result<(), OscError> {
    if bytes.is_empty() {
        return Err(OscError::new(base, OscErrorKind::Empty));
    }
    if !bytes.len().is_multiple_of(4) {
        return Err(OscError::new(base + bytes.len(), OscErrorKind::Misaligned));
    }
    if bytes.starts_with(BUNDLE_TAG) {
        parse_bundle(bytes, base, depth, out)
    } else {
        parse_message(bytes, base, timetag, out)
    }
}

fn parse_bundle(
    bytes: &[u8],
    base: usize,
    depth: usize,
    out: &mut OscPacketContents,
) -> Result<(), OscError> {
    if depth >= MAX_BUNDLE_DEPTH {
        return Err(OscError::new(base, OscErrorKind::BundleTooDeep));
    }
    if bytes.len() < 16 {
        return Err(OscError::new(base + bytes.len(), OscErrorKind::Truncated));
    }
    let tag = u64::from_be_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let timetag = (tag != TIMETAG_IMMEDIATE).then_some(tag);
    let mut pos = 16;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(OscError::new(base + pos, OscErrorKind::Truncated));
        }
        let size = i32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as i64;
        if size <= 0 || size % 4 != 0 {
            return Err(OscError::new(base + pos, OscErrorKind::BadBundleElement(size)));
        }
        let start = pos + 4;
        let size = size as usize;
        if size > bytes.len() - start {
            return Err(OscError::new(base + pos, OscErrorKind::Truncated));
        }
        parse_element(&bytes[start..start + size], base + start, timetag, depth + 1, out)?;
        pos = start + size;
    }
    Ok(())
}

/// Reads a NUL-terminated, zero-padded OSC string starting at `pos`.
/// Returns the string bytes and the offset just past the padding.
fn read_string(bytes: &[u8], pos: usize, base: usize) -> Result<(&[u8], usize), OscError> {
    let rest = &bytes[pos..];
    let nul = rest
        .iter()
        .position(|b| *b == 0)
        .ok_or_else(|| OscError::new(base + bytes.len(), OscErrorKind::UnterminatedString))?;
    let end = pos + (nul + 4) / 4 * 4;
    if end > bytes.len() {
        return Err(OscError::new(base + bytes.len(), OscErrorKind::Truncated));
    }
    if let Some(i) = bytes[pos + nul..end].iter().position(|b| *b != 0) {
        return Err(OscError::new(base + pos + nul + i, OscErrorKind::BadPadding));
    }
    Ok((&rest[..nul], end))
}

fn parse_message(
    bytes: &[u8],
    base: usize,
    timetag: Option<u64>,
    out: &mut OscPacketContents,
) -> Result<(), OscError> {
    if bytes[0] != b'/' {
        return Err(OscError::new(base, OscErrorKind::BadAddress));
    }
    let (address, pos) = read_string(bytes, 0, base)?;
    if address != FRAME_ADDRESS.as_bytes() {
        out.ignored += 1;
        return Ok(());
    }
    if pos >= bytes.len() {
        return Err(OscError::new(base + pos, OscErrorKind::Truncated));
    }
    let (tags, args_start) = read_string(bytes, pos, base)?;
    let expected_tags = tags.len() == TAXELS + 1
        && tags[0] == b','
        && tags[1..].iter().all(|t| *t == b'f');
    if !expected_tags {
        return Err(OscError::new(
            base + pos,
            OscErrorKind::BadTypeTag(String::from_utf8_lossy(tags).into_owned()),
        ));
    }
    let args = &bytes[args_start..];
    if args.len() < TAXELS * 4 {
        return Err(OscError::new(base + bytes.len(), OscErrorKind::Truncated));
    }
    if args.len() > TAXELS * 4 {
        return Err(OscError::new(
            base + args_start + TAXELS * 4,
            OscErrorKind::TrailingBytes,
        ));
    }
    let mut pressures = [0.0f64; TAXELS];
    for (i, chunk) in args.chunks_exact(4).enumerate() {
        let v = f32::from_be_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(OscError::new(
                base + args_start + 4 * i,
                OscErrorKind::NonFiniteArgument,
            ));
        }
        pressures[i] = f64::from(v.max(0.0));
    }
    out.frames.push(ParsedFrame {
        frame: Frame {
            pressures,
            timestamp_ms: timetag.map(timetag_to_ms).unwrap_or(0),
        },
        timetag,
    });
    Ok(())
}

fn write_string(buf: &mut Vec<u8>, s: &[u8]) {
    buf.extend_from_slice(s);
    let padded = (s.len() + 4) / 4 * 4;
    buf.resize(buf.len() + padded - s.len(), 0);
}

/// Encodes a frame as a bare OSC message.
pub fn encode_osc_frame(frame: &Frame) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 84 + TAXELS * 4);
    write_string(&mut buf, FRAME_ADDRESS.as_bytes());
    let mut tags = Vec::with_capacity(TAXELS + 1);
    tags.push(b',');
    tags.resize(TAXELS + 1, b'f');
    write_string(&mut buf, &tags);
    for p in &frame.pressures {
        buf.extend_from_slice(&(*p as f32).to_be_bytes());
    }
    buf
}

/// Wraps frame messages in one bundle with the given time tag.
pub fn encode_osc_bundle(frames: &[Frame], timetag: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(BUNDLE_TAG);
    buf.extend_from_slice(&timetag.to_be_bytes());
    for f in frames {
        let msg = encode_osc_frame(f);
        buf.extend_from_slice(&(msg.len() as i32).to_be_bytes());
        buf.extend_from_slice(&msg);
    }
    buf
}

/// Milliseconds encoded by an NTP-format time tag.
pub fn timetag_to_ms(tag: u64) -> u64 {
    let secs = tag >> 32;
    let frac = tag & 0xffff_ffff;
    secs * 1000 + ((frac * 1000) >> 32)
}

pub fn ms_to_timetag(ms: u64) -> u64 {
    let secs = ms / 1000;
    let rem = ms % 1000;
    // Round the fraction up so that timetag_to_ms recovers `ms` exactly.
    let frac = (rem << 32).div_ceil(1000);
    (secs << 32) | frac
}
