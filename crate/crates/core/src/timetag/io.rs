//! `TTG1` binary time-tag files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `b"TTG1"`                         |
//! | 4      | 4    | u32 resolution, ticks per ns (= 1000)   |
//! | 8      | 8    | u64 duration in ticks                   |
//! | 16     | 8    | u64 record count                        |
//! | 24     | 9·n  | records: u64 timestamp, u8 channel      |

use std::fs;
use std::path::Path;

use super::{Resolution, TimeTagStream};
use crate::error::{Error, Result};
use crate::pipeline::write_atomically;

pub const TTG1_MAGIC: &[u8; 4] = b"TTG1";
const HEADER_LEN: usize = 24;
const RECORD_LEN: usize = 9;

pub fn encode(s: &TimeTagStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * s.len());
    out.extend_from_slice(TTG1_MAGIC);
    out.extend_from_slice(&s.resolution().ticks_per_ns().to_le_bytes());
    out.extend_from_slice(&s.duration().to_le_bytes());
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    for (t, c) in s.timestamps().iter().zip(s.channels()) {
        out.extend_from_slice(&t.to_le_bytes());
        out.push(*c);
    }
    out
}

/// Parses a complete `TTG1` image. Bad magic, unsupported resolution,
/// truncated or trailing record bytes, and streams violating the ordering or
/// window invariants are all rejected.
pub fn decode(bytes: &[u8]) -> Result<TimeTagStream> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..4] != TTG1_MAGIC {
        return Err(Error::Format("bad magic, expected TTG1".into()));
    }
    let ticks_per_ns = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if Resolution::new(ticks_per_ns)? != Resolution::PICOSECOND {
        return Err(Error::Format(format!(
            "unsupported resolution {ticks_per_ns} ticks/ns (expected 1000)"
        )));
    }
    let duration = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());

    let body = &bytes[HEADER_LEN..];
    let expected = usize::try_from(count)
        .ok()
        .and_then(|n| n.checked_mul(RECORD_LEN))
        .ok_or_else(|| Error::Format(format!("record count {count} too large")))?;
    if body.len() < expected {
        return Err(Error::Format(format!(
            "truncated records: header declares {count} records ({expected} bytes), found {} bytes",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            body.len() - expected
        )));
    }

    let n = count as usize;
    let mut timestamps = Vec::with_capacity(n);
    let mut channels = Vec::with_capacity(n);
    for rec in body.chunks_exact(RECORD_LEN) {
        timestamps.push(u64::from_le_bytes(rec[..8].try_into().unwrap()));
        channels.push(rec[8]);
    }
    TimeTagStream::from_parts(timestamps, channels, duration, Resolution::PICOSECOND)
}

pub fn read_file(path: impl AsRef<Path>) -> Result<TimeTagStream> {
    decode(&fs::read(path)?)
}

pub fn write_file(path: impl AsRef<Path>, s: &TimeTagStream) -> Result<()> {
    write_atomically(path.as_ref(), |w| w.write_all(&encode(s)))
}
