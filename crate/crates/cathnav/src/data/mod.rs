//! Episode persistence, normalization statistics, split manifests, and
//! sliding-window sample construction.

pub mod corpus;
pub mod splits;
pub mod stats;
pub mod windows;

pub use corpus::{
    episode_dir, load_frame, load_goal, load_rgb, load_states, scan_corpus, write_episode,
    EpisodeMeta, EpisodeRecord, EPISODE_FORMAT_VERSION,
};
pub use splits::{
    make_splits, validate_manifest, EpisodeKey, LoadedEpisode, SplitManifest, SplitMode,
    MANIFEST_FORMAT_VERSION,
};
pub use stats::{
    dataset_stats, destandardize, standardize, stats_fingerprint, DatasetStats, DimStats,
    DIM_NAMES, STD_FLOOR,
};
pub use windows::{build_windows, slide_windows, window_count, window_starts, WindowSample};

use crate::error::Result;

/// Scans a corpus and loads every episode's state rows.
pub fn load_corpus(root: &std::path::Path) -> Result<Vec<LoadedEpisode>> {
    let records = scan_corpus(root)?;
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let states = load_states(&record)?;
        out.push(LoadedEpisode { record, states });
    }
    Ok(out)
}
