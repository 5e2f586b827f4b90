//! Radio-link framing and sweep scheduling.
//!
//! Every captured edge leaves the device as one fixed eight-byte
//! little-endian frame:
//!
//! ```text
//! offset  size  field
//!      0     2  session_id (u16)
//!      2     1  transducer_id (u8, 1..=4)
//!      3     1  flags (u8, bit 0 = capture overflow, bits 1-7 reserved 0)
//!      4     4  timestamp_ticks (u32)
//! ```
//!
//! The scheduler walks the four channels in a fixed order, dwelling on each
//! long enough for several firings, and spaces frame notifications a fixed
//! interval apart. The receive side reassembles frames into sweeps purely
//! from the transducer-id sequence: a sweep completes exactly when an id-1
//! frame arrives after an id-4 frame.

use crate::afe::EdgeTimestamps;
use crate::error::{Error, Result};

pub const FRAME_LEN: usize = 8;
pub const FLAG_CAPTURE_OVERFLOW: u8 = 0x01;
const RESERVED_FLAGS: u8 = !FLAG_CAPTURE_OVERFLOW;

// --------------------------------------------------------------------------
// frame
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestampFrame {
    pub session_id: u16,
    pub transducer_id: u8,
    pub flags: u8,
    pub timestamp_ticks: u32,
}

impl TimestampFrame {
    pub fn new(session_id: u16, transducer_id: u8, flags: u8, timestamp_ticks: u32) -> Result<Self> {
        if !(1..=4).contains(&transducer_id) {
            return Err(Error::Protocol(format!(
                "transducer id {transducer_id} outside 1..=4"
            )));
        }
        if flags & RESERVED_FLAGS != 0 {
            return Err(Error::Protocol(format!(
                "reserved flag bits set: {flags:#04x}"
            )));
        }
        Ok(Self { session_id, transducer_id, flags, timestamp_ticks })
    }

    pub fn overflowed(&self) -> bool {
        self.flags & FLAG_CAPTURE_OVERFLOW != 0
    }

    pub fn encode(&self) -> [u8; FRAME_LEN] {
        let mut buf = [0u8; FRAME_LEN];
        buf[0..2].copy_from_slice(&self.session_id.to_le_bytes());
        buf[2] = self.transducer_id;
        buf[3] = self.flags;
        buf[4..8].copy_from_slice(&self.timestamp_ticks.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != FRAME_LEN {
            return Err(Error::Framing { expected: FRAME_LEN, got: bytes.len() });
        }
        Self::new(
            u16::from_le_bytes([bytes[0], bytes[1]]),
            bytes[2],
            bytes[3],
            u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        )
    }

    /// `session transducer flags ticks`, all decimal.
    pub fn to_text_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.session_id, self.transducer_id, self.flags, self.timestamp_ticks
        )
    }

    pub fn from_text_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Protocol(format!(
                "frame line needs 4 fields, got {}",
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Protocol(format!("bad {what} field: {s:?}")))
        };
        let session = parse(fields[0], "session")?;
        let id = parse(fields[1], "transducer")?;
        let flags = parse(fields[2], "flags")?;
        let ticks = parse(fields[3], "ticks")?;
        if session > u16::MAX as u64 || id > u8::MAX as u64 || flags > u8::MAX as u64
            || ticks > u32::MAX as u64
        {
            return Err(Error::Protocol(format!("frame field out of range: {line:?}")));
        }
        Self::new(session as u16, id as u8, flags as u8, ticks as u32)
    }
}

// --------------------------------------------------------------------------
// byte-stream codec
// --------------------------------------------------------------------------

pub fn encode_stream(frames: &[TimestampFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(frames.len() * FRAME_LEN);
    for f in frames {
        out.extend_from_slice(&f.encode());
    }
    out
}

/// Strict decode: the stream must be a whole number of valid frames.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<TimestampFrame>> {
    if bytes.len() % FRAME_LEN != 0 {
        return Err(Error::Framing {
            expected: bytes.len() / FRAME_LEN * FRAME_LEN + FRAME_LEN,
            got: bytes.len(),
        });
    }
    bytes.chunks_exact(FRAME_LEN).map(TimestampFrame::decode).collect()
}

/// Decode a possibly-truncated stream: valid leading frames plus the count
/// of trailing bytes that did not form a whole frame. Malformed frame
/// contents (bad id, reserved flags) still fail.
pub fn decode_stream_lossy(bytes: &[u8]) -> Result<(Vec<TimestampFrame>, usize)> {
    let frames = bytes
        .chunks_exact(FRAME_LEN)
        .map(TimestampFrame::decode)
        .collect::<Result<Vec<_>>>()?;
    Ok((frames, bytes.len() % FRAME_LEN))
}

// --------------------------------------------------------------------------
// sweep schedule
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSchedule {
    /// Seconds between pulse firings on the active channel.
    pub pulse_period_s: f64,
    /// Seconds spent on each channel before advancing.
    pub channel_dwell_s: f64,
    /// Transducer ids in firing order; must be a permutation of 1..=4.
    pub channel_order: [u8; 4],
    /// Spacing of frame notifications within a channel slot, ms.
    pub notification_interval_ms: f64,
}

impl Default for SweepSchedule {
    fn default() -> Self {
        Self {
            pulse_period_s: 2.5,
            channel_dwell_s: 10.0,
            channel_order: [1, 2, 3, 4],
            notification_interval_ms: 25.0,
        }
    }
}

impl SweepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_period_s > 0.0 && self.pulse_period_s.is_finite()) {
            return Err(Error::InvalidParameter("pulse period must be positive".into()));
        }
        if !(self.channel_dwell_s >= self.pulse_period_s) {
            return Err(Error::InvalidParameter(
                "channel dwell must cover at least one pulse period".into(),
            ));
        }
        let mut sorted = self.channel_order;
        sorted.sort_unstable();
        if sorted != [1, 2, 3, 4] {
            return Err(Error::InvalidParameter(format!(
                "channel order {:?} is not a permutation of 1..=4",
                self.channel_order
            )));
        }
        if !(self.notification_interval_ms > 0.0 && self.notification_interval_ms.is_finite()) {
            return Err(Error::InvalidParameter(
                "notification interval must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Firings per channel slot.
    pub fn pulses_per_channel(&self) -> usize {
        (self.channel_dwell_s / self.pulse_period_s).floor() as usize
    }

    pub fn sweep_duration_s(&self) -> f64 {
        4.0 * self.channel_dwell_s
    }
}

// --------------------------------------------------------------------------
// transmit side
// --------------------------------------------------------------------------

/// One channel's capture result for a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelCapture {
    pub edges: EdgeTimestamps,
    pub overflowed: bool,
}

/// A frame with the time it leaves the radio, relative to sweep start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledFrame {
    pub emit_time_s: f64,
    pub frame: TimestampFrame,
}

/// Serialise one sweep's captures into scheduled frames. `channels[i]`
/// belongs to transducer id `i + 1`; the schedule decides slot order.
pub fn run_sweep(
    schedule: &SweepSchedule,
    session_id: u16,
    channels: &[ChannelCapture; 4],
) -> Result<Vec<ScheduledFrame>> {
    schedule.validate()?;
    let mut out = Vec::new();
    for (slot, &id) in schedule.channel_order.iter().enumerate() {
        let capture = &channels[id as usize - 1];
        let flags = if capture.overflowed { FLAG_CAPTURE_OVERFLOW } else { 0 };
        let slot_start = slot as f64 * schedule.channel_dwell_s;
        for (j, &tick) in capture.edges.ticks.iter().enumerate() {
            out.push(ScheduledFrame {
                emit_time_s: slot_start + j as f64 * schedule.notification_interval_ms / 1000.0,
                frame: TimestampFrame::new(session_id, id, flags, tick)?,
            });
        }
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// receive side
// --------------------------------------------------------------------------

/// Frames gathered for one sweep, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepBuffer {
    pub frames: Vec<TimestampFrame>,
    /// False only for a trailing partial sweep flushed at end of stream.
    pub complete: bool,
}

impl SweepBuffer {
    pub fn frames_for(&self, transducer_id: u8) -> impl Iterator<Item = &TimestampFrame> {
        self.frames.iter().filter(move |f| f.transducer_id == transducer_id)
    }
}

/// Groups an arriving frame sequence into sweeps. Completion is keyed off
/// the id sequence alone: the first id-1 frame after an id-4 frame closes
/// the sweep and opens the next one.
#[derive(Debug, Default)]
pub struct SweepAssembler {
    buffer: Vec<TimestampFrame>,
    prev_id: Option<u8>,
}

impl SweepAssembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed one frame; returns the completed sweep if this frame closed one.
    pub fn push(&mut self, frame: TimestampFrame) -> Option<SweepBuffer> {
        let closes = self.prev_id == Some(4) && frame.transducer_id == 1;
        self.prev_id = Some(frame.transducer_id);
        if closes {
            let done = std::mem::take(&mut self.buffer);
            self.buffer.push(frame);
            return Some(SweepBuffer { frames: done, complete: true });
        }
        self.buffer.push(frame);
        None
    }

    /// Flush whatever is buffered as a trailing (possibly partial) sweep.
    pub fn finish(self) -> Option<SweepBuffer> {
        if self.buffer.is_empty() {
            None
        } else {
            Some(SweepBuffer { frames: self.buffer, complete: false })
        }
    }
}

// --------------------------------------------------------------------------
