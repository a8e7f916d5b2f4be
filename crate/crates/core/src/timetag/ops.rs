use rand::Rng;

use super::{Ticks, TimeTagStream};
use crate::error::{config, domain, Result};
use crate::rng;

/// Merges two streams into one sorted stream. Ties are ordered by
/// `(timestamp, channel)`; fully identical tags keep `a` before `b`.
pub fn merge(a: &TimeTagStream, b: &TimeTagStream) -> Result<TimeTagStream> {
    if a.resolution() != b.resolution() {
        return Err(config(format!(
            "cannot merge streams with resolutions {} and {} ticks/ns",
            a.resolution().ticks_per_ns(),
            b.resolution().ticks_per_ns()
        )));
    }
    if a.duration() != b.duration() {
        return Err(config(format!(
            "cannot merge streams with durations {} and {} ticks",
            a.duration(),
            b.duration()
        )));
    }

    let n = a.len() + b.len();
    let mut timestamps = Vec::with_capacity(n);
    let mut channels = Vec::with_capacity(n);
    let (at, ac) = (a.timestamps(), a.channels());
    let (bt, bc) = (b.timestamps(), b.channels());
    let (mut i, mut j) = (0, 0);
    while i < at.len() && j < bt.len() {
        if (bt[j], bc[j]) < (at[i], ac[i]) {
            timestamps.push(bt[j]);
            channels.push(bc[j]);
            j += 1;
        } else {
            timestamps.push(at[i]);
            channels.push(ac[i]);
            i += 1;
        }
    }
    timestamps.extend_from_slice(&at[i..]);
    channels.extend_from_slice(&ac[i..]);
    timestamps.extend_from_slice(&bt[j..]);
    channels.extend_from_slice(&bc[j..]);

    Ok(TimeTagStream::from_parts_unchecked(
        timestamps,
        channels,
        a.duration(),
        a.resolution(),
    ))
}

/// Keeps each tag independently with probability `p`.
pub fn thin(s: &TimeTagStream, p: f64, seed: u64) -> Result<TimeTagStream> {
    check_probability(p, "thinning probability")?;
    Ok(thin_with(s, p, &mut rng::rng(seed)))
}

pub(crate) fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("{what} {p} outside [0, 1]")));
    }
    Ok(())
}

pub(crate) fn thin_with(s: &TimeTagStream, p: f64, rng: &mut rng::Rng) -> TimeTagStream {
    let mut timestamps = Vec::with_capacity((s.len() as f64 * p * 1.01) as usize + 16);
    let mut channels = Vec::with_capacity(timestamps.capacity());
    for (&t, &c) in s.timestamps().iter().zip(s.channels()) {
        if rng.random_bool(p) {
            timestamps.push(t);
            channels.push(c);
        }
    }
    TimeTagStream::from_parts_unchecked(timestamps, channels, s.duration(), s.resolution())
}

/// Non-paralyzable dead time: a tag survives iff it arrives at least `dead`
/// ticks after the previously surviving tag. The first tag always survives.
pub fn apply_dead_time(s: &TimeTagStream, dead: Ticks) -> TimeTagStream {
    if dead == 0 {
        return s.clone();
    }
    let mut timestamps = Vec::with_capacity(s.len());
    let mut channels = Vec::with_capacity(s.len());
    let mut ready_at: Ticks = 0;
    for (&t, &c) in s.timestamps().iter().zip(s.channels()) {
        if timestamps.is_empty() || t >= ready_at {
            timestamps.push(t);
            channels.push(c);
            ready_at = t.saturating_add(dead);
        }
    }
    TimeTagStream::from_parts_unchecked(timestamps, channels, s.duration(), s.resolution())
}

/// Per-bin tag counts over the `duration / bin_width` complete bins; a final
/// partial bin is dropped.
pub fn bin_counts(s: &TimeTagStream, bin_width: Ticks) -> Result<Vec<u64>> {
    if bin_width == 0 {
        return Err(domain("bin width must be positive"));
    }
    let n_bins = s.duration() / bin_width;
    let n_bins = usize::try_from(n_bins).map_err(|_| domain("too many bins"))?;
    let mut counts = vec![0u64; n_bins];
    let end = n_bins as u64 * bin_width;
    for &t in s.timestamps().iter().take_while(|&&t| t < end) {
        counts[(t / bin_width) as usize] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::timetag::TimeTag;

    fn stream(ts: &[u64], channel: u8, duration: u64) -> TimeTagStream {
        TimeTagStream::from_timestamps(ts.to_vec(), channel, duration).unwrap()
    }

    #[test]
    fn merge_interleaves_with_channel_tie_break() {
        let a = stream(&[1, 5, 9], 0, 10);
        let b = stream(&[3, 5], 1, 10);
        let m = merge(&a, &b).unwrap();
        let expected = [(1, 0), (3, 1), (5, 0), (5, 1), (9, 0)];
        let got: Vec<_> = m.iter().map(|t| (t.timestamp, t.channel)).collect();
        assert_eq!(got, expected);
        // channel order wins over argument order
        let m2 = merge(&b, &a).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let s = stream(&[2, 4, 4, 8], 1, 10);
        assert_eq!(merge(&s, &TimeTagStream::empty(10)).unwrap(), s);
    }

    #[test]
    fn merge_rejects_mismatched_windows() {
        let err = merge(&stream(&[1], 0, 10), &stream(&[1], 0, 11)).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn thin_limits() {
        let s = stream(&(0..1000).collect::<Vec<_>>(), 0, 1000);
        assert_eq!(thin(&s, 1.0, 3).unwrap(), s);
        assert!(thin(&s, 0.0, 3).unwrap().is_empty());
        assert!(thin(&s, 1.5, 3).is_err());
        assert!(thin(&s, -0.1, 3).is_err());
        assert!(thin(&s, f64::NAN, 3).is_err());
    }

    #[test]
    fn thin_is_deterministic() {
        let s = stream(&(0..1000).collect::<Vec<_>>(), 0, 1000);
        assert_eq!(thin(&s, 0.4, 11).unwrap(), thin(&s, 0.4, 11).unwrap());
        assert_ne!(thin(&s, 0.4, 11).unwrap(), thin(&s, 0.4, 12).unwrap());
    }

    #[test]
    fn dead_time_rule() {
        let s = stream(&[0, 1_000, 3_000], 0, 10_000);
        let out = apply_dead_time(&s, 2_000);
        assert_eq!(out.timestamps(), &[0, 3_000]);
        assert_eq!(apply_dead_time(&s, 0), s);
    }

    #[test]
    fn dead_time_is_non_paralyzable() {
        // 1.5 is lost but does not extend the dead period started at 0
        let s = stream(&[0, 1_500, 2_000], 0, 10_000);
        assert_eq!(apply_dead_time(&s, 2_000).timestamps(), &[0, 2_000]);
    }

    #[test]
    fn bin_counts_examples() {
        let s = stream(&[200, 700, 1_100], 0, 2_000);
        assert_eq!(bin_counts(&s, 1_000).unwrap(), vec![2, 1]);
        assert_eq!(
            bin_counts(&TimeTagStream::empty(5_000), 1_000).unwrap(),
            vec![0; 5]
        );
        assert!(bin_counts(&s, 0).is_err());
    }

    #[test]
    fn bin_counts_drops_partial_bin() {
        let s = stream(&[100, 2_500], 0, 2_600);
        assert_eq!(bin_counts(&s, 1_000).unwrap(), vec![1, 0]);
    }

    fn arb_stream(max_len: usize, duration: u64) -> impl Strategy<Value = TimeTagStream> {
        prop::collection::vec((0..duration, 0u8..2), 0..max_len).prop_map(move |mut tags| {
            tags.sort();
            let tags = tags.into_iter().map(|(t, c)| TimeTag::new(t, c)).collect();
            TimeTagStream::new(tags, duration).unwrap()
        })
    }

    fn multiset(s: &TimeTagStream) -> Vec<TimeTag> {
        let mut v = s.to_tags();
        v.sort();
        v
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(
            a in arb_stream(60, 500), b in arb_stream(60, 500), c in arb_stream(60, 500)
        ) {
            let ab = merge(&a, &b).unwrap();
            prop_assert_eq!(&ab, &merge(&b, &a).unwrap());
            prop_assert_eq!(ab.len(), a.len() + b.len());
            prop_assert!(ab.validate().is_ok());
            let left = merge(&ab, &c).unwrap();
            let right = merge(&a, &merge(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(multiset(&left), multiset(&right));
        }

        #[test]
        fn dead_time_is_idempotent(s in arb_stream(200, 5_000), dead in 0u64..400) {
            let once = apply_dead_time(&s, dead);
            prop_assert_eq!(apply_dead_time(&once, dead), once.clone());
            prop_assert!(once.validate().is_ok());
        }

        #[test]
        fn bin_totals_are_conserved(s in arb_stream(200, 5_000), width in 1u64..700) {
            let counts = bin_counts(&s, width).unwrap();
            let end = counts.len() as u64 * width;
            let inside = s.timestamps().iter().filter(|&&t| t < end).count() as u64;
            prop_assert_eq!(counts.iter().sum::<u64>(), inside);
        }
    }
}
