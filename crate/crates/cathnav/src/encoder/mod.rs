//! Frozen frame encoders. Both backends map an RGB frame to P tokens of
//! width d with the CLS summary at index 0, expose zero trainable
//! parameters, and never receive gradients.

mod stub;
mod vit;

pub use stub::StubEncoder;
pub use vit::{VitEncoder, VIT_DEPTH, VIT_DIM, VIT_HEADS, VIT_MLP_DIM, VIT_PATCH, VIT_RESOLUTION, VIT_TOKENS};

use image::RgbImage;
use ndarray::{Array1, Array2, Array3};

use crate::config::{EncoderBackend, EncoderConfig};
use crate::error::{Error, Result};

/// Stub patch edge in pixels; the stub token grid is (resolution/16)^2 + CLS.
pub const STUB_PATCH: usize = 16;

/// Channel statistics used for pixel normalization, in [0,1] units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

/// Published statistics of the pretrained backbone's training corpus.
pub const PRETRAINED_STATS: ChannelStats = ChannelStats {
    mean: [0.485, 0.456, 0.406],
    std: [0.229, 0.224, 0.225],
};

/// Symmetric stats for the stub: maps [0,255] onto [-1,1].
pub const STUB_STATS: ChannelStats = ChannelStats {
    mean: [0.5, 0.5, 0.5],
    std: [0.5, 0.5, 0.5],
};

/// Per-channel (x/255 - mean)/std, channel-major output [3, H, W].
pub fn normalize_frame(frame: &RgbImage, stats: &ChannelStats) -> Array3<f64> {
    let (w, h) = frame.dimensions();
    let mut out = Array3::zeros((3, h as usize, w as usize));
    for (x, y, px) in frame.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] =
                (px.0[c] as f64 / 255.0 - stats.mean[c]) / stats.std[c];
        }
    }
    out
}

pub trait FrameEncoder {
    /// Token width d.
    fn dim(&self) -> usize;
    /// Tokens per frame P, CLS included.
    fn tokens_per_frame(&self) -> usize;
    /// Identifies the backend and its fixed weights, for provenance records.
    fn fingerprint(&self) -> String;
    /// One frame to [P, d] tokens, CLS at row 0.
    fn encode_frame(&self, frame: &RgbImage) -> Result<Array2<f64>>;

    /// N frames to [N, P, d].
    fn encode_frames(&self, frames: &[RgbImage]) -> Result<Array3<f64>> {
        let (p, d) = (self.tokens_per_frame(), self.dim());
        let mut out = Array3::zeros((frames.len(), p, d));
        for (i, f) in frames.iter().enumerate() {
            let t = self.encode_frame(f)?;
            out.index_axis_mut(ndarray::Axis(0), i).assign(&t);
        }
        Ok(out)
    }

    /// CLS slot of the encoded image: the d-vector goal embedding.
    fn encode_goal(&self, frame: &RgbImage) -> Result<Array1<f64>> {
        Ok(self.encode_frame(frame)?.row(0).to_owned())
    }
}

/// Builds the configured backend. `resolution` is the corpus frame edge.
pub fn make_encoder(cfg: &EncoderConfig, resolution: usize) -> Result<Box<dyn FrameEncoder>> {
    match cfg.backend {
        EncoderBackend::Stub => Ok(Box::new(StubEncoder::new(
            resolution,
            cfg.stub_dim,
            cfg.stub_seed,
        )?)),
        EncoderBackend::Pretrained => {
            let path = cfg
                .weights_path
                .clone()
                .or_else(|| std::env::var("CATHNAV_VIT_WEIGHTS").ok().map(Into::into))
                .ok_or_else(|| {
                    Error::Encoder(
                        "pretrained backend needs weights: set encoder.weights_path or \
                         CATHNAV_VIT_WEIGHTS"
                            .into(),
                    )
                })?;
            Ok(Box::new(VitEncoder::load(std::path::Path::new(&path))?))
        }
    }
}
