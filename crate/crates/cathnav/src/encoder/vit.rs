//! Pretrained small ViT backend: patch 14, 224x224 input, 257 tokens of
//! width 384, 12 pre-LN blocks with 6 heads and MLP width 1536, final
//! LayerNorm. Weights load from a tensor container on disk; the forward
//! pass is inference-only.

use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{normalize_frame, FrameEncoder, PRETRAINED_STATS};
use crate::container::read_container;
use crate::error::{Error, Result};
use crate::nn::init::normal;
use crate::nn::{EncoderLayer, LayerNorm, Linear, TensorMap};

pub const VIT_RESOLUTION: usize = 224;
pub const VIT_PATCH: usize = 14;
pub const VIT_TOKENS: usize = 257;
pub const VIT_DIM: usize = 384;
pub const VIT_DEPTH: usize = 12;
pub const VIT_HEADS: usize = 6;
pub const VIT_MLP_DIM: usize = 1536;

const GRID: usize = VIT_RESOLUTION / VIT_PATCH;
const PATCH_DIM: usize = 3 * VIT_PATCH * VIT_PATCH;

pub struct VitEncoder {
    params: TensorMap,
    patch: Linear,
    blocks: Vec<EncoderLayer>,
    ln_f: LayerNorm,
    mask: Array2<f64>,
    fingerprint: String,
}

fn build_structure(rng: &mut ChaCha20Rng) -> (TensorMap, Linear, Vec<EncoderLayer>, LayerNorm) {
    let mut p = TensorMap::new();
    let patch = Linear::new(&mut p, rng, "vit.patch", PATCH_DIM, VIT_DIM);
    p.insert("vit.cls", normal(rng, 1, VIT_DIM, 0.02).into_dyn());
    p.insert("vit.pos", normal(rng, VIT_TOKENS, VIT_DIM, 0.02).into_dyn());
    let blocks = (0..VIT_DEPTH)
        .map(|i| {
            EncoderLayer::new(
                &mut p,
                rng,
                &format!("vit.blk{i}"),
                VIT_DIM,
                VIT_HEADS,
                VIT_MLP_DIM,
                0.0,
            )
        })
        .collect();
    let ln_f = LayerNorm::new(&mut p, "vit.ln_f", VIT_DIM);
    (p, patch, blocks, ln_f)
}

impl VitEncoder {
    /// Random weights with the real architecture, for shape and wiring tests.
    pub fn random_for_tests(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (params, patch, blocks, ln_f) = build_structure(&mut rng);
        Self {
            params,
            patch,
            blocks,
            ln_f,
            mask: Array2::zeros((VIT_TOKENS, VIT_TOKENS)),
            fingerprint: format!("vit-random-seed{seed}"),
        }
    }

    /// Loads weights from a tensor container; every architecture tensor must
    /// be present with its exact shape, and no extras are allowed.
    pub fn load(path: &Path) -> Result<Self> {
        let (loaded, _meta) = read_container(path)?;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (mut params, patch, blocks, ln_f) = build_structure(&mut rng);
        if loaded.len() != params.len() {
            return Err(Error::Encoder(format!(
                "{}: expected {} tensors, found {}",
                path.display(),
                params.len(),
                loaded.len()
            )));
        }
        for (name, dst) in params.iter_mut() {
            let src = loaded.try_get(name).map_err(|_| {
                Error::Encoder(format!("{}: missing tensor {name}", path.display()))
            })?;
            if src.shape() != dst.shape() {
                return Err(Error::Encoder(format!(
                    "{}: tensor {name} has shape {:?}, expected {:?}",
                    path.display(),
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.assign(src);
        }
        let digest = Sha256::digest(std::fs::read(path)?);
        let fingerprint = format!("vit-{}", hex_prefix(&digest, 12));
        Ok(Self {
            params,
            patch,
            blocks,
            ln_f,
            mask: Array2::zeros((VIT_TOKENS, VIT_TOKENS)),
            fingerprint,
        })
    }

    pub fn default_weights_path() -> Option<PathBuf> {
        std::env::var("CATHNAV_VIT_WEIGHTS").ok().map(Into::into)
    }

    /// Frozen parameter count, for total-size reports.
    pub fn n_frozen_params(&self) -> usize {
        self.params.n_params()
    }
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n / 2).map(|b| format!("{b:02x}")).collect()
}

impl FrameEncoder for VitEncoder {
    fn dim(&self) -> usize {
        VIT_DIM
    }

    fn tokens_per_frame(&self) -> usize {
        VIT_TOKENS
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn encode_frame(&self, frame: &RgbImage) -> Result<Array2<f64>> {
        let (w, h) = frame.dimensions();
        if w as usize != VIT_RESOLUTION || h as usize != VIT_RESOLUTION {
            return Err(Error::Encoder(format!(
                "pretrained backend expects {0}x{0} frames, got {w}x{h}",
                VIT_RESOLUTION
            )));
        }
        let norm = normalize_frame(frame, &PRETRAINED_STATS);

        // Channel-major flatten of each 14x14 patch, patches in row-major grid order.
        let mut patches = Array2::zeros((GRID * GRID, PATCH_DIM));
        for gy in 0..GRID {
            for gx in 0..GRID {
                let mut k = 0;
                let row = gy * GRID + gx;
                for c in 0..3 {
                    for py in 0..VIT_PATCH {
                        for px in 0..VIT_PATCH {
                            patches[[row, k]] =
                                norm[[c, gy * VIT_PATCH + py, gx * VIT_PATCH + px]];
                            k += 1;
                        }
                    }
                }
            }
        }

        let embedded = self.patch.forward(&self.params, &patches);
        let mut x = Array2::zeros((VIT_TOKENS, VIT_DIM));
        x.row_mut(0).assign(&self.params.mat("vit.cls").row(0));
        x.slice_mut(s![1.., ..]).assign(&embedded);
        x += &self.params.mat("vit.pos");

        for blk in &self.blocks {
            let (y, _) = blk.forward(&self.params, &x, 1, &self.mask, None);
            x = y;
        }
        let (out, _) = self.ln_f.forward(&self.params, &x);
        Ok(out)
    }
}
