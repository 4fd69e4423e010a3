//! Batch assembly for supervised training. Frames are pushed through the
//! frozen encoder once per corpus and cached per episode; batches then only
//! copy token slices.

use ndarray::{Array1, Array2, Array3};

use crate::data::{load_frame, load_goal, LoadedEpisode, WindowSample};
use crate::encoder::FrameEncoder;
use crate::error::{Error, Result};

/// Frozen visual features for a set of episodes, index-aligned with the
/// corpus episode vector windows were built from.
pub struct EncodedEpisodes {
    /// Per episode [L, P, d]; empty array for episodes that were skipped.
    pub tokens: Vec<Array3<f64>>,
    /// Per episode goal embedding [d].
    pub goals: Vec<Array1<f64>>,
    pub encoder_fingerprint: String,
    pub p: usize,
    pub d: usize,
}

/// Encode each selected episode's frames, and every episode's goal image.
/// `select` maps an episode index to whether its frame tokens are needed
/// (training touches train and val; false-goal donors only need goals).
pub fn encode_episodes(
    encoder: &dyn FrameEncoder,
    episodes: &[LoadedEpisode],
    select: impl Fn(usize) -> bool,
) -> Result<EncodedEpisodes> {
    let p = encoder.tokens_per_frame();
    let d = encoder.dim();
    let mut tokens = Vec::with_capacity(episodes.len());
    let mut goals = Vec::with_capacity(episodes.len());
    for (idx, ep) in episodes.iter().enumerate() {
        let goal_img = load_goal(&ep.record)?;
        goals.push(encoder.encode_goal(&goal_img)?);
        if !select(idx) {
            tokens.push(Array3::zeros((0, p, d)));
            continue;
        }
        let len = ep.record.meta.len;
        let mut toks = Array3::zeros((len, p, d));
        for t in 0..len {
            let frame = load_frame(&ep.record, t)?;
            let enc = encoder.encode_frame(&frame)?;
            toks.index_axis_mut(ndarray::Axis(0), t).assign(&enc);
        }
        tokens.push(toks);
    }
    Ok(EncodedEpisodes {
        tokens,
        goals,
        encoder_fingerprint: encoder.fingerprint(),
        p,
        d,
    })
}

/// One assembled training or evaluation batch. The LSTM baseline reads only
/// `states` and `targets`. `bypass_goal` carries the no-goal ablation into
/// the model's forward pass.
pub struct AssembledBatch {
    pub batch: usize,
    /// [B*N, 3] standardized.
    pub states: Array2<f64>,
    /// [B*N*P, d] frame-major.
    pub tokens: Option<Array2<f64>>,
    /// [B, d]
    pub goals: Option<Array2<f64>>,
    /// [B, 3] raw units.
    pub targets: Array2<f64>,
    pub bypass_goal: bool,
}

/// Collects window indices into dense batch tensors. The ablation flags
/// realize input-time condition transforms; at most one is active.
pub struct Batcher<'a> {
    pub windows: &'a [WindowSample],
    /// None builds state-only batches.
    pub encoded: Option<&'a EncodedEpisodes>,
    pub n: usize,
    /// Zero every visual token before positional embedding (no-vision).
    pub zero_tokens: bool,
    /// Zero every state row before projection (no-states).
    pub zero_states: bool,
    /// Skip gated goal fusion in the model (no-goal).
    pub bypass_goal: bool,
    /// Per-episode replacement goal embeddings (false-goal).
    pub goals_override: Option<&'a [Array1<f64>]>,
}

impl<'a> Batcher<'a> {
    /// Plain batcher with no condition transform.
    pub fn new(
        windows: &'a [WindowSample],
        encoded: Option<&'a EncodedEpisodes>,
        n: usize,
    ) -> Self {
        Self {
            windows,
            encoded,
            n,
            zero_tokens: false,
            zero_states: false,
            bypass_goal: false,
            goals_override: None,
        }
    }

    pub fn assemble(&self, idxs: &[usize]) -> Result<AssembledBatch> {
        let b = idxs.len();
        let n = self.n;
        let mut states = Array2::zeros((b * n, 3));
        let mut targets = Array2::zeros((b, 3));
        for (bi, &wi) in idxs.iter().enumerate() {
            let w = &self.windows[wi];
            if w.states.nrows() != n {
                return Err(Error::ShapeMismatch(format!(
                    "window has {} rows, batcher expects {n}",
                    w.states.nrows()
                )));
            }
            states
                .slice_mut(ndarray::s![bi * n..(bi + 1) * n, ..])
                .assign(&w.states);
            for j in 0..3 {
                targets[[bi, j]] = w.target[j];
            }
        }
        if self.zero_states {
            states.fill(0.0);
        }
        let (tokens, goals) = if let Some(enc) = self.encoded {
            let (p, d) = (enc.p, enc.d);
            let mut toks = Array2::zeros((b * n * p, d));
            let mut goal_rows = Array2::zeros((b, d));
            for (bi, &wi) in idxs.iter().enumerate() {
                let w = &self.windows[wi];
                if !self.zero_tokens {
                    let ep_tokens = &enc.tokens[w.episode_idx];
                    if ep_tokens.dim().0 < w.start + n {
                        return Err(Error::Dataset(format!(
                            "episode {:?} tokens not encoded for window at {}",
                            w.episode_key, w.start
                        )));
                    }
                    for t in 0..n {
                        let frame = ep_tokens.index_axis(ndarray::Axis(0), w.start + t);
                        toks.slice_mut(ndarray::s![
                            (bi * n + t) * p..(bi * n + t + 1) * p,
                            ..
                        ])
                        .assign(&frame);
                    }
                }
                let goal_src = match self.goals_override {
                    Some(over) => &over[w.episode_idx],
                    None => &enc.goals[w.episode_idx],
                };
                goal_rows.row_mut(bi).assign(goal_src);
            }
            (Some(toks), Some(goal_rows))
        } else {
            (None, None)
        };
        Ok(AssembledBatch {
            batch: b,
            states,
            tokens,
            goals,
            targets,
            bypass_goal: self.bypass_goal,
        })
    }
}
