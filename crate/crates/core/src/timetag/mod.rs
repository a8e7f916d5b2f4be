//! Time-tag data model.
//!
//! A [`TimeTagStream`] is the common currency of the crate: sources produce
//! one, detection transforms it, the correlator consumes it. Timestamps are
//! integer picosecond ticks. Tags are stored column-wise (timestamps and
//! channels in separate vectors) so that 10^8-tag streams stay at 9 bytes per
//! tag.

mod io;
pub(crate) mod ops;

pub use io::{decode, encode, read_file, write_file, TTG1_MAGIC};
pub use ops::{apply_dead_time, bin_counts, merge, thin};

use crate::error::{Error, Result};

/// One tick is one picosecond.
pub type Ticks = u64;

pub const TICKS_PER_NS: u64 = 1_000;
pub const TICKS_PER_SECOND: u64 = 1_000_000_000_000;

/// Converts seconds to ticks, rounding to the nearest picosecond.
pub fn seconds_to_ticks(seconds: f64) -> Ticks {
    (seconds * TICKS_PER_SECOND as f64).round() as Ticks
}

pub fn ticks_to_seconds(ticks: Ticks) -> f64 {
    ticks as f64 / TICKS_PER_SECOND as f64
}

pub fn ns_to_ticks(ns: f64) -> Ticks {
    (ns * TICKS_PER_NS as f64).round() as Ticks
}

/// A single detection event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub timestamp: Ticks,
    pub channel: u8,
}

impl TimeTag {
    pub fn new(timestamp: Ticks, channel: u8) -> Self {
        TimeTag { timestamp, channel }
    }
}

/// Declared tick resolution, in ticks per nanosecond.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Resolution(u32);

impl Resolution {
    pub const PICOSECOND: Resolution = Resolution(1_000);

    pub fn new(ticks_per_ns: u32) -> Result<Self> {
        if ticks_per_ns == 0 {
            return Err(Error::Domain("resolution must be non-zero".into()));
        }
        Ok(Resolution(ticks_per_ns))
    }

    pub fn ticks_per_ns(self) -> u32 {
        self.0
    }

    pub fn ticks_per_second(self) -> u64 {
        u64::from(self.0) * 1_000_000_000
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution::PICOSECOND
    }
}

/// Sorted detection timestamps with channel labels over a window
/// `[0, duration)`.
///
/// Invariants, checked on every public constructor: timestamps are
/// non-decreasing, every timestamp is `< duration`, and the timestamp and
/// channel columns have equal length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimeTagStream {
    timestamps: Vec<Ticks>,
    channels: Vec<u8>,
    duration: Ticks,
    resolution: Resolution,
}

impl TimeTagStream {
    pub fn empty(duration: Ticks) -> Self {
        TimeTagStream {
            timestamps: Vec::new(),
            channels: Vec::new(),
            duration,
            resolution: Resolution::PICOSECOND,
        }
    }

    /// Builds a picosecond stream from tags, validating order and window.
    pub fn new(tags: Vec<TimeTag>, duration: Ticks) -> Result<Self> {
        let (timestamps, channels) = tags.into_iter().map(|t| (t.timestamp, t.channel)).unzip();
        Self::from_parts(timestamps, channels, duration, Resolution::PICOSECOND)
    }

    /// Single-channel picosecond stream.
    pub fn from_timestamps(timestamps: Vec<Ticks>, channel: u8, duration: Ticks) -> Result<Self> {
        let channels = vec![channel; timestamps.len()];
        Self::from_parts(timestamps, channels, duration, Resolution::PICOSECOND)
    }

    pub fn from_parts(
        timestamps: Vec<Ticks>,
        channels: Vec<u8>,
        duration: Ticks,
        resolution: Resolution,
    ) -> Result<Self> {
        validate(&timestamps, &channels, duration)?;
        Ok(TimeTagStream {
            timestamps,
            channels,
            duration,
            resolution,
        })
    }

    /// Construction for internal producers that maintain the invariants by
    /// construction.
    pub(crate) fn from_parts_unchecked(
        timestamps: Vec<Ticks>,
        channels: Vec<u8>,
        duration: Ticks,
        resolution: Resolution,
    ) -> Self {
        debug_assert!(validate(&timestamps, &channels, duration).is_ok());
        TimeTagStream {
            timestamps,
            channels,
            duration,
            resolution,
        }
    }

    /// Re-checks all invariants.
    pub fn validate(&self) -> Result<()> {
        validate(&self.timestamps, &self.channels, self.duration)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration(&self) -> Ticks {
        self.duration
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn timestamps(&self) -> &[Ticks] {
        &self.timestamps
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    pub fn get(&self, index: usize) -> Option<TimeTag> {
        Some(TimeTag::new(
            *self.timestamps.get(index)?,
            self.channels[index],
        ))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = TimeTag> + '_ {
        self.timestamps
            .iter()
            .zip(&self.channels)
            .map(|(&timestamp, &channel)| TimeTag { timestamp, channel })
    }

    pub fn to_tags(&self) -> Vec<TimeTag> {
        self.iter().collect()
    }

    /// Returns the same stream with every tag moved to `channel`.
    pub fn relabel(mut self, channel: u8) -> Self {
        self.channels.iter_mut().for_each(|c| *c = channel);
        self
    }

    /// Number of tags with timestamp strictly below `t`.
    pub fn count_before(&self, t: Ticks) -> usize {
        self.timestamps.partition_point(|&x| x < t)
    }

    /// Mean rate in tags per second over the whole window.
    pub fn rate_hz(&self) -> f64 {
        if self.duration == 0 {
            return 0.0;
        }
        self.len() as f64 * self.resolution.ticks_per_second() as f64 / self.duration as f64
    }
}

fn validate(timestamps: &[Ticks], channels: &[u8], duration: Ticks) -> Result<()> {
    if timestamps.len() != channels.len() {
        return Err(Error::InvalidStream(format!(
            "{} timestamps but {} channels",
            timestamps.len(),
            channels.len()
        )));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::InvalidStream(format!(
            "tag {} at {} precedes tag {} at {}",
            i + 1,
            timestamps[i + 1],
            i,
            timestamps[i]
        )));
    }
    if let Some(&last) = timestamps.last() {
        if last >= duration {
            return Err(Error::InvalidStream(format!(
                "timestamp {last} outside observation window of {duration} ticks"
            )));
        }
    }
    Ok(())
}
