//! Episode-based and scenario-based split manifests. The reference corpus
//! shape (9 scenarios x 5 repetitions) gets the fixed reference partition;
//! any other shape falls back to seeded ratio splitting. Training statistics
//! are computed from train episodes only.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::corpus::EpisodeRecord;
use super::stats::{dataset_stats, stats_fingerprint, DatasetStats};
use crate::error::{Error, Result};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Reference scenario partition: train P1-P4 and P7, val P5, test P6/P8/P9.
const REF_SCENARIO_TRAIN: [usize; 5] = [1, 2, 3, 4, 7];
const REF_SCENARIO_VAL: [usize; 1] = [5];
const REF_SCENARIO_TEST: [usize; 3] = [6, 8, 9];
/// Reference repetition partition within each scenario.
const REF_REP_TRAIN: [usize; 3] = [1, 2, 3];
const REF_REP_VAL: [usize; 1] = [4];
const REF_REP_TEST: [usize; 1] = [5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Episode,
    Scenario,
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitMode::Episode => write!(f, "episode"),
            SplitMode::Scenario => write!(f, "scenario"),
        }
    }
}

/// (scenario_id, repetition_id)
pub type EpisodeKey = (usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitManifest {
    pub version: u32,
    pub mode: SplitMode,
    pub seed: u64,
    pub train: Vec<EpisodeKey>,
    pub val: Vec<EpisodeKey>,
    pub test: Vec<EpisodeKey>,
    /// Statistics of the train split only.
    pub stats: DatasetStats,
    pub stats_fingerprint: String,
}

/// One episode with its state rows in memory.
pub struct LoadedEpisode {
    pub record: EpisodeRecord,
    pub states: Vec<[f64; 3]>,
}

impl LoadedEpisode {
    pub fn key(&self) -> EpisodeKey {
        self.record.key()
    }
}

pub fn make_splits(
    episodes: &[LoadedEpisode],
    mode: SplitMode,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitManifest> {
    if episodes.len() < 3 {
        return Err(Error::Dataset(format!(
            "need at least 3 episodes to split, have {}",
            episodes.len()
        )));
    }
    if ratios.iter().any(|r| *r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Dataset(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut by_scenario: BTreeMap<usize, Vec<EpisodeKey>> = BTreeMap::new();
    for ep in episodes {
        by_scenario.entry(ep.key().0).or_default().push(ep.key());
    }
    for reps in by_scenario.values_mut() {
        reps.sort();
    }

    let (train, val, test) = match mode {
        SplitMode::Scenario => split_by_scenario(&by_scenario, ratios, seed)?,
        SplitMode::Episode => split_by_repetition(&by_scenario, ratios, seed)?,
    };

    let train_set: std::collections::BTreeSet<EpisodeKey> = train.iter().copied().collect();
    let stats = dataset_stats(
        episodes
            .iter()
            .filter(|e| train_set.contains(&e.key()))
            .map(|e| e.states.as_slice()),
    )?;
    let fingerprint = stats_fingerprint(&stats);
    let manifest = SplitManifest {
        version: MANIFEST_FORMAT_VERSION,
        mode,
        seed,
        train,
        val,
        test,
        stats,
        stats_fingerprint: fingerprint,
    };
    validate_manifest(&manifest)?;
    Ok(manifest)
}

/// Scenario-based: train/val/test scenario sets are pairwise disjoint.
fn split_by_scenario(
    by_scenario: &BTreeMap<usize, Vec<EpisodeKey>>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<EpisodeKey>, Vec<EpisodeKey>, Vec<EpisodeKey>)> {
    let scenarios: Vec<usize> = by_scenario.keys().copied().collect();
    if scenarios.len() < 3 {
        return Err(Error::Dataset(format!(
            "scenario-based split needs at least 3 scenarios, have {}",
            scenarios.len()
        )));
    }
    let is_reference = scenarios == (1..=9).collect::<Vec<_>>();
    let (s_train, s_val, s_test): (Vec<usize>, Vec<usize>, Vec<usize>) = if is_reference {
        (
            REF_SCENARIO_TRAIN.to_vec(),
            REF_SCENARIO_VAL.to_vec(),
            REF_SCENARIO_TEST.to_vec(),
        )
    } else {
        let mut shuffled = scenarios.clone();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        let n = shuffled.len();
        let n_train = ((ratios[0] * n as f64).round() as usize).clamp(1, n - 2);
        let n_val = ((ratios[1] * n as f64).round() as usize).clamp(1, n - n_train - 1);
        (
            shuffled[..n_train].to_vec(),
            shuffled[n_train..n_train + n_val].to_vec(),
            shuffled[n_train + n_val..].to_vec(),
        )
    };
    let collect = |ids: &[usize]| -> Vec<EpisodeKey> {
        let mut keys: Vec<EpisodeKey> = ids
            .iter()
            .flat_map(|s| by_scenario.get(s).cloned().unwrap_or_default())
            .collect();
        keys.sort();
        keys
    };
    Ok((collect(&s_train), collect(&s_val), collect(&s_test)))
}

/// Episode-based: every split draws repetitions from every scenario.
fn split_by_repetition(
    by_scenario: &BTreeMap<usize, Vec<EpisodeKey>>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(Vec<EpisodeKey>, Vec<EpisodeKey>, Vec<EpisodeKey>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    let reference = by_scenario
        .values()
        .all(|reps| reps.iter().map(|k| k.1).collect::<Vec<_>>() == vec![1, 2, 3, 4, 5]);
    for (scenario, reps) in by_scenario {
        if reference {
            for k in reps {
                if REF_REP_TRAIN.contains(&k.1) {
                    train.push(*k);
                } else if REF_REP_VAL.contains(&k.1) {
                    val.push(*k);
                } else {
                    debug_assert!(REF_REP_TEST.contains(&k.1));
                    test.push(*k);
                }
            }
        } else {
            if reps.len() < 3 {
                return Err(Error::Dataset(format!(
                    "episode-based split needs >= 3 repetitions per scenario; \
                     scenario {scenario} has {}",
                    reps.len()
                )));
            }
            let mut shuffled = reps.clone();
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (*scenario as u64) << 17);
            shuffled.shuffle(&mut rng);
            let n = shuffled.len();
            let n_train = ((ratios[0] * n as f64).round() as usize).clamp(1, n - 2);
            let n_val = ((ratios[1] * n as f64).round() as usize).clamp(1, n - n_train - 1);
            train.extend_from_slice(&shuffled[..n_train]);
            val.extend_from_slice(&shuffled[n_train..n_train + n_val]);
            test.extend_from_slice(&shuffled[n_train + n_val..]);
        }
    }
    train.sort();
    val.sort();
    test.sort();
    Ok((train, val, test))
}

/// Checks the mode invariant from the manifest alone.
pub fn validate_manifest(m: &SplitManifest) -> Result<()> {
    let scen = |keys: &[EpisodeKey]| -> std::collections::BTreeSet<usize> {
        keys.iter().map(|k| k.0).collect()
    };
    let (tr, va, te) = (scen(&m.train), scen(&m.val), scen(&m.test));
    match m.mode {
        SplitMode::Scenario => {
            if !tr.is_disjoint(&va) || !tr.is_disjoint(&te) || !va.is_disjoint(&te) {
                return Err(Error::Dataset(
                    "scenario-based splits must not share scenarios".into(),
                ));
            }
        }
        SplitMode::Episode => {
            let all: std::collections::BTreeSet<usize> =
                tr.union(&va).chain(te.iter()).copied().collect();
            for (name, set) in [("train", &tr), ("val", &va), ("test", &te)] {
                if *set != all {
                    return Err(Error::Dataset(format!(
                        "episode-based {name} split misses scenarios: has {set:?}, corpus {all:?}"
                    )));
                }
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for k in m.train.iter().chain(&m.val).chain(&m.test) {
        if !seen.insert(*k) {
            return Err(Error::Dataset(format!("episode {k:?} assigned twice")));
        }
    }
    Ok(())
}

impl SplitManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: SplitManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if m.version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Dataset(format!(
                "{}: unsupported manifest version {}",
                path.display(),
                m.version
            )));
        }
        validate_manifest(&m)?;
        Ok(m)
    }

    pub fn split(&self, name: &str) -> Result<&[EpisodeKey]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::InvalidArgument(format!("unknown split {other}"))),
        }
    }
}
