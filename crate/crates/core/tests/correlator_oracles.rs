use g2lab::correlator::Correlator;
use g2lab::selftest::{brute_force_auto, brute_force_cross};
use g2lab::sources::{gen_coherent, CoherentParams};
use g2lab::timetag::{TimeTagStream, TICKS_PER_SECOND};
use g2lab::{auto_correlate, cross_correlate};
use proptest::prelude::*;

fn stream(max_len: usize, duration: u64) -> impl Strategy<Value = TimeTagStream> {
    proptest::collection::vec(0..duration, 0..max_len).prop_map(move |mut ts| {
        ts.sort_unstable();
        TimeTagStream::from_timestamps(ts, 0, duration).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sweeps_equal_pair_enumeration(
        a in stream(400, 50_000),
        b in stream(400, 50_000),
        bw in 1u64..3_000,
        k in 0u64..30,
        chunk in 1usize..100,
    ) {
        let c = Correlator::new(bw, k * bw).unwrap().with_chunk_len(chunk);
        let d = a.duration();
        prop_assert_eq!(c.cross(&a, &b).unwrap().raw_pair_counts, brute_force_cross(a.timestamps(), b.timestamps(), d, bw, k));
        prop_assert_eq!(c.auto(&a).raw_pair_counts, brute_force_auto(a.timestamps(), d, bw, k));
    }

    /// Away from zero lag the auto-correlation counts exactly the ordered
    /// pairs of distinct tags, as the cross-correlation of a stream with
    /// itself does.
    #[test]
    fn auto_off_zero_equals_self_cross(a in stream(300, 40_000), bw in 1u64..2_000, k in 1u64..20) {
        let auto = auto_correlate(&a, bw, k * bw).unwrap();
        let cross = cross_correlate(&a, &a, bw, k * bw).unwrap();
        for lag in 1..=k as i64 {
            prop_assert_eq!(auto.raw_at(lag), cross.raw_at(lag));
            prop_assert_eq!(auto.raw_at(-lag), cross.raw_at(-lag));
        }
        // zero lag: self-cross is Σ n², also what auto counts
        prop_assert_eq!(auto.raw_at(0), cross.raw_at(0));
    }

    #[test]
    fn correlation_is_symmetric_under_swap(a in stream(300, 40_000), b in stream(300, 40_000), bw in 1u64..2_000, k in 0u64..20) {
        let ab = cross_correlate(&a, &b, bw, k * bw).unwrap();
        let ba = cross_correlate(&b, &a, bw, k * bw).unwrap();
        for lag in -(k as i64)..=k as i64 {
            prop_assert_eq!(ab.raw_at(lag), ba.raw_at(-lag));
        }
    }
}

#[test]
fn one_bin_shift_moves_the_zero_lag_peak() {
    let ts: Vec<u64> = (0..1000u64)
        .map(|i| (i * 7919) % 900_000)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let bw = 1_000;
    let a = TimeTagStream::from_timestamps(ts.clone(), 0, 1_000_000).unwrap();
    let b =
        TimeTagStream::from_timestamps(ts.iter().map(|t| t + bw).collect(), 1, 1_000_000).unwrap();
    let cross = cross_correlate(&a, &b, bw, 5 * bw).unwrap();
    let auto = auto_correlate(&a, bw, 5 * bw).unwrap();
    assert_eq!(cross.raw_at(1), auto.raw_at(0));
    assert_eq!(
        cross.raw_pair_counts,
        brute_force_cross(a.timestamps(), b.timestamps(), 1_000_000, bw, 5)
    );
}

#[test]
fn independent_poisson_streams_are_uncorrelated() {
    let p = CoherentParams::new(2e6, 1e-9).unwrap();
    let d = TICKS_PER_SECOND / 2;
    let a = gen_coherent(&p, d, 41).unwrap();
    let b = gen_coherent(&p, d, 42).unwrap();
    let h = cross_correlate(&a, &b, 1_000, 100_000).unwrap();
    for lag in h.lags() {
        let z = (h.g2_at(lag).unwrap() - 1.0) / h.stderr_at(lag).unwrap();
        assert!(z.abs() < 5.0, "k={lag}: z={z}");
    }
}

#[test]
fn poisson_auto_zero_lag_is_one_plus_inverse_mean() {
    let p = CoherentParams::new(5e6, 1e-9).unwrap();
    let s = gen_coherent(&p, TICKS_PER_SECOND / 2, 43).unwrap();
    let h = auto_correlate(&s, 1_000, 10_000).unwrap();
    let n = h.mean_counts_per_bin();
    let z = (h.g2_at(0).unwrap() - (1.0 + 1.0 / n)) / h.stderr_at(0).unwrap();
    assert!(z.abs() < 5.0, "z = {z}");
}
