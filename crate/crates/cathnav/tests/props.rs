//! Property-based invariants for the data layer and the attention masks.

use std::path::PathBuf;

use proptest::prelude::*;

use cathnav::data::{
    dataset_stats, destandardize, slide_windows, standardize, window_count, window_starts,
    DatasetStats, EpisodeMeta, EpisodeRecord, LoadedEpisode, EPISODE_FORMAT_VERSION, STD_FLOOR,
};
use cathnav::nn::causal_mask;
use cathnav::policy::build_cross_mask;

fn episode(scenario: usize, rep: usize, states: Vec<[f64; 3]>) -> LoadedEpisode {
    let len = states.len();
    LoadedEpisode {
        record: EpisodeRecord {
            meta: EpisodeMeta {
                version: EPISODE_FORMAT_VERSION,
                scenario_id: scenario,
                repetition_id: rep,
                seed: 0,
                len,
                resolution: 64,
            },
            dir: PathBuf::from(format!("mem/P{scenario}/{rep}")),
        },
        states,
    }
}

fn stats_of(episodes: &[LoadedEpisode]) -> DatasetStats {
    dataset_stats(episodes.iter().map(|e| e.states.as_slice())).unwrap()
}

fn row_strategy() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0e3..1.0e3f64)
}

fn episodes_strategy() -> impl Strategy<Value = Vec<Vec<[f64; 3]>>> {
    prop::collection::vec(prop::collection::vec(row_strategy(), 2..80), 1..4)
}

fn to_episodes(sets: Vec<Vec<[f64; 3]>>) -> Vec<LoadedEpisode> {
    sets.into_iter()
        .enumerate()
        .map(|(i, rows)| episode(i + 1, 0, rows))
        .collect()
}

proptest! {
    #[test]
    fn standardization_round_trips(sets in episodes_strategy()) {
        let eps = to_episodes(sets);
        let stats = stats_of(&eps);
        for ep in &eps {
            for row in &ep.states {
                let back = destandardize(&standardize(row, &stats), &stats);
                for d in 0..3 {
                    prop_assert!((back[d] - row[d]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_dimension_passes_through(rows in prop::collection::vec(row_strategy(), 2..40), c in -10.0..10.0f64) {
        // A constant column has zero spread and must bypass scaling.
        let mut rows = rows;
        for r in rows.iter_mut() {
            r[1] = c;
        }
        let eps = vec![episode(1, 0, rows)];
        let stats = stats_of(&eps);
        prop_assert!(stats.dims[1].std <= STD_FLOOR);
        for row in &eps[0].states {
            let z = standardize(row, &stats);
            prop_assert_eq!(z[1].to_bits(), row[1].to_bits());
        }
    }

    #[test]
    fn stats_match_two_pass_oracle(sets in episodes_strategy()) {
        let eps = to_episodes(sets);
        let stats = stats_of(&eps);
        let rows: Vec<[f64; 3]> = eps.iter().flat_map(|e| e.states.iter().cloned()).collect();
        let n = rows.len() as f64;
        for d in 0..3 {
            let mean: f64 = rows.iter().map(|r| r[d]).sum::<f64>() / n;
            let var: f64 = rows.iter().map(|r| (r[d] - mean) * (r[d] - mean)).sum::<f64>() / n;
            let min = rows.iter().map(|r| r[d]).fold(f64::INFINITY, f64::min);
            let max = rows.iter().map(|r| r[d]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((stats.dims[d].mean - mean).abs() <= 1e-9);
            prop_assert!((stats.dims[d].std - var.sqrt()).abs() <= 1e-9);
            prop_assert_eq!(stats.dims[d].min, min);
            prop_assert_eq!(stats.dims[d].max, max);
        }
        prop_assert_eq!(stats.n_rows, rows.len());
    }

    #[test]
    fn window_count_matches_enumeration(len in 0usize..400, n in 1usize..60, stride in 1usize..8) {
        let naive = (0..len).step_by(stride).filter(|s| s + n < len).count();
        prop_assert_eq!(window_count(len, n, stride), naive);
        let starts = window_starts(len, n, stride);
        prop_assert_eq!(starts.len(), naive);
        for (i, s) in starts.iter().enumerate() {
            prop_assert_eq!(*s, i * stride);
            prop_assert!(s + n < len);
        }
    }

    #[test]
    fn windows_preserve_raw_targets(rows in prop::collection::vec(row_strategy(), 2..80), n in 1usize..12, stride in 1usize..4) {
        let eps = vec![episode(3, 1, rows)];
        let stats = stats_of(&eps);
        let windows = slide_windows(&eps[0], 0, n, stride, &stats).unwrap();
        prop_assert_eq!(windows.len(), window_count(eps[0].states.len(), n, stride));
        for w in &windows {
            // Target rows skip standardization entirely.
            let raw = eps[0].states[w.start + n];
            for d in 0..3 {
                prop_assert_eq!(w.target[d].to_bits(), raw[d].to_bits());
            }
            for i in 0..n {
                let back = destandardize(
                    &[w.states[[i, 0]], w.states[[i, 1]], w.states[[i, 2]]],
                    &stats,
                );
                for d in 0..3 {
                    prop_assert!((back[d] - eps[0].states[w.start + i][d]).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn cross_mask_opens_one_frame_per_step(n in 1usize..12, p in 1usize..12) {
        let m = build_cross_mask(n, p, -1e9);
        prop_assert_eq!(m.dim(), (n, n * p));
        for t in 0..n {
            let zeros = m.row(t).iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(zeros, (t + 1) * p);
            for (j, &v) in m.row(t).iter().enumerate() {
                let want = if j / p <= t { 0.0 } else { -1e9 };
                prop_assert_eq!(v, want);
            }
        }
    }

    #[test]
    fn causal_mask_is_lower_triangular(n in 1usize..40) {
        let m = causal_mask(n, -1e9);
        for t in 0..n {
            let zeros = m.row(t).iter().filter(|&&v| v == 0.0).count();
            prop_assert_eq!(zeros, t + 1);
        }
    }
}

#[test]
fn cross_mask_reference_budget() {
    // 50 steps of 257 tokens: sum over t of (t+1)*257 = 257 * 50*51/2.
    let m = build_cross_mask(50, 257, -1e9);
    let zeros = m.iter().filter(|&&v| v == 0.0).count();
    assert_eq!(zeros, 327_675);
    assert_eq!(m.len(), 50 * 50 * 257);
}
