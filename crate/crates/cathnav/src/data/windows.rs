//! Fixed-length sliding windows over episodes: N standardized state rows as
//! input, the raw next-step state as the regression target, and the
//! episode's goal image by reference.

use ndarray::Array2;

use super::splits::{EpisodeKey, LoadedEpisode};
use super::stats::{standardize, DatasetStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct WindowSample {
    /// Index into the episode slice the window was built from.
    pub episode_idx: usize,
    pub episode_key: EpisodeKey,
    pub start: usize,
    /// [N, 3], standardized with train statistics.
    pub states: Array2<f64>,
    /// Raw-unit state at start + N.
    pub target: [f64; 3],
}

/// Closed-form sample count for an episode of `len` rows.
pub fn window_count(len: usize, n: usize, stride: usize) -> usize {
    assert!(n >= 1 && stride >= 1);
    if len < n + 1 {
        0
    } else {
        (len - n - 1) / stride + 1
    }
}

/// Start indices: 0, stride, 2*stride, ... while start + n < len.
pub fn window_starts(len: usize, n: usize, stride: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + n < len {
        starts.push(s);
        s += stride;
    }
    starts
}

/// Windows of one episode. The target stays bit-equal to the raw episode row.
pub fn slide_windows(
    ep: &LoadedEpisode,
    episode_idx: usize,
    n: usize,
    stride: usize,
    stats: &DatasetStats,
) -> Result<Vec<WindowSample>> {
    if n < 1 || stride < 1 {
        return Err(Error::InvalidArgument(
            "window length and stride must be >= 1".into(),
        ));
    }
    let len = ep.states.len();
    let mut out = Vec::with_capacity(window_count(len, n, stride));
    for start in window_starts(len, n, stride) {
        let mut states = Array2::zeros((n, 3));
        for (i, row) in ep.states[start..start + n].iter().enumerate() {
            let z = standardize(row, stats);
            states[[i, 0]] = z[0];
            states[[i, 1]] = z[1];
            states[[i, 2]] = z[2];
        }
        out.push(WindowSample {
            episode_idx,
            episode_key: ep.key(),
            start,
            states,
            target: ep.states[start + n],
        });
    }
    Ok(out)
}

/// Windows for a whole split, episodes in the order given by `keys`.
pub fn build_windows(
    episodes: &[LoadedEpisode],
    keys: &[EpisodeKey],
    n: usize,
    stride: usize,
    stats: &DatasetStats,
) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for key in keys {
        let (idx, ep) = episodes
            .iter()
            .enumerate()
            .find(|(_, e)| e.key() == *key)
            .ok_or_else(|| Error::Dataset(format!("split references missing episode {key:?}")))?;
        out.extend(slide_windows(ep, idx, n, stride, stats)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::corpus::{EpisodeMeta, EpisodeRecord, EPISODE_FORMAT_VERSION};
    use std::path::PathBuf;

    fn episode_of(rows: usize) -> LoadedEpisode {
        LoadedEpisode {
            record: EpisodeRecord {
                meta: EpisodeMeta {
                    version: EPISODE_FORMAT_VERSION,
                    scenario_id: 1,
                    repetition_id: 1,
                    seed: 0,
                    len: rows,
                    resolution: 64,
                },
                dir: PathBuf::from("/fake/P1/1"),
            },
            states: (0..rows)
                .map(|t| [t as f64 * 1e-3, (t as f64).sin() * 0.1, -0.5 + t as f64 * 1e-4])
                .collect(),
        }
    }

    fn flat_stats() -> DatasetStats {
        use crate::data::stats::DimStats;
        DatasetStats {
            dims: [DimStats {
                mean: 0.0,
                std: 1.0,
                min: -1.0,
                max: 1.0,
            }; 3],
            n_rows: 1,
        }
    }

    #[test]
    fn boundary_counts() {
        assert_eq!(window_count(51, 50, 1), 1);
        assert_eq!(window_count(60, 50, 1), 10);
        assert_eq!(window_count(49, 50, 1), 0);
        assert_eq!(window_count(50, 50, 1), 0);
        assert_eq!(window_starts(51, 50, 1), vec![0]);
        assert_eq!(window_starts(60, 50, 1).len(), 10);
    }

    #[test]
    fn count_formula_matches_enumeration() {
        for len in 0..=200 {
            for n in [1, 2, 5, 16, 50] {
                for stride in [1, 2, 3, 7] {
                    assert_eq!(
                        window_count(len, n, stride),
                        window_starts(len, n, stride).len(),
                        "len={len} n={n} stride={stride}"
                    );
                }
            }
        }
    }

    #[test]
    fn target_is_bit_equal_raw_row() {
        let ep = episode_of(60);
        let stats = flat_stats();
        let windows = slide_windows(&ep, 0, 50, 1, &stats).unwrap();
        assert_eq!(windows.len(), 10);
        for w in &windows {
            assert_eq!(w.target, ep.states[w.start + 50]);
            assert_eq!(w.states.dim(), (50, 3));
        }
        assert_eq!(windows[0].target, ep.states[50]);
    }

    #[test]
    fn standardization_applied_to_inputs_only() {
        use crate::data::stats::DimStats;
        let ep = episode_of(20);
        let stats = DatasetStats {
            dims: [DimStats {
                mean: 0.5,
                std: 2.0,
                min: -1.0,
                max: 1.0,
            }; 3],
            n_rows: 1,
        };
        let windows = slide_windows(&ep, 0, 10, 1, &stats).unwrap();
        let w = &windows[0];
        for i in 0..10 {
            for d in 0..3 {
                let expect = (ep.states[i][d] - 0.5) / 2.0;
                assert_eq!(w.states[[i, d]], expect);
            }
        }
        // Target untouched.
        assert_eq!(w.target, ep.states[10]);
    }
}
