//! Desk-scale encoder: a fixed seeded linear projection of normalized 16x16
//! patches. Token i > 0 depends only on patch i-1; CLS (index 0) is the mean
//! of the patch tokens, which equals the projection of the mean patch.

use image::RgbImage;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{normalize_frame, FrameEncoder, STUB_PATCH, STUB_STATS};
use crate::error::{Error, Result};
use crate::nn::init::xavier_uniform;

pub struct StubEncoder {
    resolution: usize,
    d: usize,
    seed: u64,
    grid: usize,
    /// [3*16*16, d], fixed at construction.
    proj: Array2<f64>,
}

impl StubEncoder {
    pub fn new(resolution: usize, d: usize, seed: u64) -> Result<Self> {
        if resolution % STUB_PATCH != 0 {
            return Err(Error::Encoder(format!(
                "stub needs resolution divisible by {STUB_PATCH}, got {resolution}"
            )));
        }
        let grid = resolution / STUB_PATCH;
        let patch_dim = 3 * STUB_PATCH * STUB_PATCH;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let proj = xavier_uniform(&mut rng, patch_dim, d);
        Ok(Self {
            resolution,
            d,
            seed,
            grid,
            proj,
        })
    }
}

impl FrameEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.d
    }

    fn tokens_per_frame(&self) -> usize {
        self.grid * self.grid + 1
    }

    fn fingerprint(&self) -> String {
        format!("stub-r{}-d{}-seed{}", self.resolution, self.d, self.seed)
    }

    fn encode_frame(&self, frame: &RgbImage) -> Result<Array2<f64>> {
        let (w, h) = frame.dimensions();
        if w as usize != self.resolution || h as usize != self.resolution {
            return Err(Error::Encoder(format!(
                "stub expects {0}x{0} frames, got {w}x{h}",
                self.resolution
            )));
        }
        let norm = normalize_frame(frame, &STUB_STATS);
        let p = self.tokens_per_frame();
        let mut tokens = Array2::zeros((p, self.d));
        let mut patch = Array1::zeros(3 * STUB_PATCH * STUB_PATCH);
        for gy in 0..self.grid {
            for gx in 0..self.grid {
                let mut k = 0;
                for c in 0..3 {
                    for py in 0..STUB_PATCH {
                        for px in 0..STUB_PATCH {
                            patch[k] = norm[[c, gy * STUB_PATCH + py, gx * STUB_PATCH + px]];
                            k += 1;
                        }
                    }
                }
                let tok = patch.dot(&self.proj);
                tokens.row_mut(1 + gy * self.grid + gx).assign(&tok);
            }
        }
        let cls = tokens
            .slice(ndarray::s![1.., ..])
            .mean_axis(ndarray::Axis(0))
            .expect("at least one patch");
        tokens.row_mut(0).assign(&cls);
        Ok(tokens)
    }
}
