//! On-disk episode corpus:
//!   corpus/phantom.json
//!   corpus/P<scenario>/<repetition>/frames/%06d.png
//!   corpus/P<scenario>/<repetition>/states.csv     (t,translation,rotation,knob)
//!   corpus/P<scenario>/<repetition>/goal.png
//!   corpus/P<scenario>/<repetition>/episode.json
//! Floats are serialized with 17 significant digits so reads are bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Episode;

pub const EPISODE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EpisodeMeta {
    pub version: u32,
    pub scenario_id: usize,
    pub repetition_id: usize,
    pub seed: u64,
    pub len: usize,
    pub resolution: usize,
}

/// Index entry for one episode directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub meta: EpisodeMeta,
    pub dir: PathBuf,
}

impl EpisodeRecord {
    pub fn key(&self) -> (usize, usize) {
        (self.meta.scenario_id, self.meta.repetition_id)
    }

    pub fn frame_path(&self, t: usize) -> PathBuf {
        self.dir.join("frames").join(format!("{t:06}.png"))
    }

    pub fn goal_path(&self) -> PathBuf {
        self.dir.join("goal.png")
    }
}

pub fn episode_dir(root: &Path, scenario_id: usize, repetition_id: usize) -> PathBuf {
    root.join(format!("P{scenario_id}")).join(repetition_id.to_string())
}

/// Writes one rolled-out episode under the corpus root.
pub fn write_episode(root: &Path, ep: &Episode, resolution: usize) -> Result<EpisodeRecord> {
    if ep.frames.len() != ep.states.len() || ep.states.len() < 2 {
        return Err(Error::Dataset(format!(
            "episode P{}/{} malformed: {} frames, {} states",
            ep.scenario_id,
            ep.repetition_id,
            ep.frames.len(),
            ep.states.len()
        )));
    }
    let dir = episode_dir(root, ep.scenario_id, ep.repetition_id);
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir)?;

    for (t, frame) in ep.frames.iter().enumerate() {
        frame
            .save(frames_dir.join(format!("{t:06}.png")))
            .map_err(|e| Error::Dataset(format!("frame write failed: {e}")))?;
    }
    // Goal image: the final frame.
    ep.frames
        .last()
        .unwrap()
        .save(dir.join("goal.png"))
        .map_err(|e| Error::Dataset(format!("goal write failed: {e}")))?;

    let mut w = csv::Writer::from_path(dir.join("states.csv"))?;
    w.write_record(["t", "translation", "rotation", "knob"])?;
    for (t, row) in ep.states.iter().enumerate() {
        w.write_record([
            t.to_string(),
            format!("{:.17e}", row[0]),
            format!("{:.17e}", row[1]),
            format!("{:.17e}", row[2]),
        ])?;
    }
    w.flush()?;

    let meta = EpisodeMeta {
        version: EPISODE_FORMAT_VERSION,
        scenario_id: ep.scenario_id,
        repetition_id: ep.repetition_id,
        seed: ep.seed,
        len: ep.states.len(),
        resolution,
    };
    fs::write(dir.join("episode.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(EpisodeRecord { meta, dir })
}

/// Scans the corpus for episode directories. A directory that fails to parse
/// is skipped with a warning on stderr; the scan continues.
pub fn scan_corpus(root: &Path) -> Result<Vec<EpisodeRecord>> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "corpus root {} does not exist",
            root.display()
        )));
    }
    let mut records = Vec::new();
    let mut scenario_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with('P'))
                    .unwrap_or(false)
        })
        .collect();
    scenario_dirs.sort();
    for sdir in scenario_dirs {
        let mut rep_dirs: Vec<PathBuf> = fs::read_dir(&sdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        rep_dirs.sort();
        for dir in rep_dirs {
            match read_record(&dir) {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    eprintln!("warning: skipping corrupt episode {}: {e}", dir.display());
                }
            }
        }
    }
    records.sort_by_key(|r| r.key());
    Ok(records)
}

fn read_record(dir: &Path) -> Result<EpisodeRecord> {
    let meta: EpisodeMeta =
        serde_json::from_str(&fs::read_to_string(dir.join("episode.json"))?)?;
    if meta.version != EPISODE_FORMAT_VERSION {
        return Err(Error::Dataset(format!(
            "unsupported episode format version {}",
            meta.version
        )));
    }
    if meta.len < 2 {
        return Err(Error::Dataset("episode shorter than 2 rows".into()));
    }
    for probe in [
        dir.join("states.csv"),
        dir.join("goal.png"),
        dir.join("frames").join(format!("{:06}.png", meta.len - 1)),
    ] {
        if !probe.is_file() {
            return Err(Error::Dataset(format!("missing {}", probe.display())));
        }
    }
    Ok(EpisodeRecord {
        meta,
        dir: dir.to_path_buf(),
    })
}

/// Reads the state rows of one episode; row count must match the metadata.
pub fn load_states(rec: &EpisodeRecord) -> Result<Vec<[f64; 3]>> {
    let mut r = csv::Reader::from_path(rec.dir.join("states.csv"))?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "translation", "rotation", "knob"] {
        return Err(Error::Dataset(format!(
            "{}: unexpected csv header {:?}",
            rec.dir.display(),
            headers
        )));
    }
    let mut rows = Vec::with_capacity(rec.meta.len);
    for (i, rec_row) in r.records().enumerate() {
        let row = rec_row?;
        let t: usize = row[0]
            .parse()
            .map_err(|e| Error::Dataset(format!("bad t at row {i}: {e}")))?;
        if t != i {
            return Err(Error::Dataset(format!("non-contiguous t at row {i}")));
        }
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = row[k + 1]
                .parse()
                .map_err(|e| Error::Dataset(format!("bad float at row {i}: {e}")))?;
        }
        rows.push(vals);
    }
    if rows.len() != rec.meta.len {
        return Err(Error::Dataset(format!(
            "{}: {} rows, metadata says {}",
            rec.dir.display(),
            rows.len(),
            rec.meta.len
        )));
    }
    Ok(rows)
}

/// Loads a stored frame, requiring 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(Error::Image)?;
    match img {
        DynamicImage::ImageRgb8(rgb) => Ok(rgb),
        other => Err(Error::Dataset(format!(
            "{}: expected 8-bit RGB, found {:?}",
            path.display(),
            other.color()
        ))),
    }
}

pub fn load_frame(rec: &EpisodeRecord, t: usize) -> Result<RgbImage> {
    load_rgb(&rec.frame_path(t))
}

pub fn load_goal(rec: &EpisodeRecord) -> Result<RgbImage> {
    load_rgb(&rec.goal_path())
}
