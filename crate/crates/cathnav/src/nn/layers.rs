//! Differentiable building blocks: linear, layer norm, activations, dropout,
//! masked multi-head attention, and the pre-LN transformer encoder layer.
//!
//! Layers hold parameter *names*; values live in a [`TensorMap`] owned by the
//! model. `forward` returns the output plus whatever cache `backward` needs.
//! `backward` accumulates parameter gradients into a second `TensorMap` and
//! returns the input gradient. All math is f64.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::init::xavier_uniform;
use super::tensors::TensorMap;

pub const LN_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh form.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Row-wise softmax. Blocked logits at or below `-1e30` after the max shift
/// underflow to exactly zero probability.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// VJP of row-wise softmax: dz = p .* (dp - sum(dp .* p)).
pub fn softmax_rows_vjp(probs: &Array2<f64>, dprobs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.raw_dim());
    for ((mut orow, prow), dprow) in out
        .rows_mut()
        .into_iter()
        .zip(probs.rows())
        .zip(dprobs.rows())
    {
        let dot: f64 = prow.iter().zip(dprow.iter()).map(|(p, d)| p * d).sum();
        for ((o, p), d) in orow.iter_mut().zip(prow.iter()).zip(dprow.iter()) {
            *o = p * (d - dot);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(
        params: &mut TensorMap,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        din: usize,
        dout: usize,
    ) -> Self {
        let w = format!("{prefix}.w");
        let b = format!("{prefix}.b");
        params.insert(&w, xavier_uniform(rng, din, dout).into_dyn());
        params.insert(&b, Array1::<f64>::zeros(dout).into_dyn());
        Self { w, b, din, dout }
    }

    /// x: [rows, din] -> [rows, dout]
    pub fn forward(&self, p: &TensorMap, x: &Array2<f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.din, "{} input width", self.w);
        let mut y = x.dot(&p.mat(&self.w));
        y += &p.vec(&self.b);
        y
    }

    /// Accumulates dW, db; returns dx.
    pub fn backward(
        &self,
        p: &TensorMap,
        g: &mut TensorMap,
        x: &Array2<f64>,
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        g.add_to_2d(&self.w, &x.t().dot(dy));
        g.add_to_1d(&self.b, &dy.sum_axis(Axis(0)));
        dy.dot(&p.mat(&self.w).t())
    }
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
    pub dim: usize,
}

pub struct LnCache {
    /// Normalized input (pre gamma/beta).
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(params: &mut TensorMap, prefix: &str, dim: usize) -> Self {
        let gamma = format!("{prefix}.g");
        let beta = format!("{prefix}.b");
        params.insert(&gamma, Array1::<f64>::ones(dim).into_dyn());
        params.insert(&beta, Array1::<f64>::zeros(dim).into_dyn());
        Self { gamma, beta, dim }
    }

    pub fn forward(&self, p: &TensorMap, x: &Array2<f64>) -> (Array2<f64>, LnCache) {
        let d = self.dim as f64;
        let mut xhat = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = is;
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
        }
        let gamma = p.vec(&self.gamma);
        let beta = p.vec(&self.beta);
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * gamma[j] + beta[j];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        p: &TensorMap,
        g: &mut TensorMap,
        cache: &LnCache,
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        let d = self.dim as f64;
        let gamma = p.vec(&self.gamma);
        let mut dgamma = Array1::<f64>::zeros(self.dim);
        let mut dbeta = Array1::<f64>::zeros(self.dim);
        let mut dx = Array2::zeros(dy.raw_dim());
        for (i, dyrow) in dy.rows().into_iter().enumerate() {
            let xhat_row = cache.xhat.row(i);
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..self.dim {
                dgamma[j] += dyrow[j] * xhat_row[j];
                dbeta[j] += dyrow[j];
                let dxhat = dyrow[j] * gamma[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat_row[j];
            }
            let is = cache.inv_std[i];
            for j in 0..self.dim {
                let dxhat = dyrow[j] * gamma[j];
                dx[[i, j]] = is * (dxhat - sum_dxhat / d - xhat_row[j] * sum_dxhat_xhat / d);
            }
        }
        g.add_to_1d(&self.gamma, &dgamma);
        g.add_to_1d(&self.beta, &dbeta);
        dx
    }
}

// ---------------------------------------------------------------------------
// Dropout (inverted scaling; None mask in eval mode)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn forward(
        &self,
        x: &Array2<f64>,
        rng: Option<&mut ChaCha20Rng>,
    ) -> (Array2<f64>, Option<Array2<f64>>) {
        match rng {
            Some(rng) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let mask =
                    Array2::from_shape_fn(x.raw_dim(), |_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                (x * &mask, Some(mask))
            }
            _ => (x.clone(), None),
        }
    }

    pub fn backward(&self, dy: &Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
        match mask {
            Some(m) => dy * m,
            None => dy.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Masked multi-head attention
// ---------------------------------------------------------------------------

/// Multi-head attention with an additive mask shared across batch and heads.
/// Queries and keys/values may come from different modalities; per-head width
/// is d / heads and logits are scaled by 1/sqrt(head width).
#[derive(Debug, Clone)]
pub struct Mha {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub d: usize,
}

pub struct MhaCache {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per batch element: probabilities stacked head-major, [heads*nq, nk].
    pub probs: Vec<Array2<f64>>,
    pub ctx: Array2<f64>,
    pub nq: usize,
    pub nk: usize,
}

impl Mha {
    pub fn new(
        params: &mut TensorMap,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        d: usize,
        heads: usize,
    ) -> Self {
        assert_eq!(d % heads, 0, "d must be divisible by heads");
        Self {
            wq: Linear::new(params, rng, &format!("{prefix}.wq"), d, d),
            wk: Linear::new(params, rng, &format!("{prefix}.wk"), d, d),
            wv: Linear::new(params, rng, &format!("{prefix}.wv"), d, d),
            wo: Linear::new(params, rng, &format!("{prefix}.wo"), d, d),
            heads,
            d,
        }
    }

    /// q_in: [batch*nq, d], kv_in: [batch*nk, d], mask: [nq, nk] additive.
    pub fn forward(
        &self,
        p: &TensorMap,
        q_in: &Array2<f64>,
        kv_in: &Array2<f64>,
        batch: usize,
        mask: &Array2<f64>,
    ) -> (Array2<f64>, MhaCache) {
        let nq = q_in.nrows() / batch;
        let nk = kv_in.nrows() / batch;
        debug_assert_eq!(mask.nrows(), nq);
        debug_assert_eq!(mask.ncols(), nk);
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let q = self.wq.forward(p, q_in);
        let k = self.wk.forward(p, kv_in);
        let v = self.wv.forward(p, kv_in);

        let mut ctx = Array2::zeros((batch * nq, self.d));
        let mut probs = Vec::with_capacity(batch);
        for b in 0..batch {
            let qb = q.slice(s![b * nq..(b + 1) * nq, ..]);
            let kb = k.slice(s![b * nk..(b + 1) * nk, ..]);
            let vb = v.slice(s![b * nk..(b + 1) * nk, ..]);
            let mut pb = Array2::zeros((self.heads * nq, nk));
            for h in 0..self.heads {
                let qh = qb.slice(s![.., h * dh..(h + 1) * dh]);
                let kh = kb.slice(s![.., h * dh..(h + 1) * dh]);
                let vh = vb.slice(s![.., h * dh..(h + 1) * dh]);
                let mut logits = qh.dot(&kh.t());
                logits *= scale;
                logits += mask;
                let ph = softmax_rows(&logits);
                let ctx_h = ph.dot(&vh);
                ctx.slice_mut(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh])
                    .assign(&ctx_h);
                pb.slice_mut(s![h * nq..(h + 1) * nq, ..]).assign(&ph);
            }
            probs.push(pb);
        }
        let out = self.wo.forward(p, &ctx);
        (
            out,
            MhaCache {
                q,
                k,
                v,
                probs,
                ctx,
                nq,
                nk,
            },
        )
    }

    /// Returns (d_q_in, d_kv_in).
    pub fn backward(
        &self,
        p: &TensorMap,
        g: &mut TensorMap,
        q_in: &Array2<f64>,
        kv_in: &Array2<f64>,
        cache: &MhaCache,
        dout: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>) {
        let (nq, nk) = (cache.nq, cache.nk);
        let batch = q_in.nrows() / nq;
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dctx = self.wo.backward(p, g, &cache.ctx, dout);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for b in 0..batch {
            let qb = cache.q.slice(s![b * nq..(b + 1) * nq, ..]);
            let kb = cache.k.slice(s![b * nk..(b + 1) * nk, ..]);
            let vb = cache.v.slice(s![b * nk..(b + 1) * nk, ..]);
            let pb = &cache.probs[b];
            for h in 0..self.heads {
                let qh = qb.slice(s![.., h * dh..(h + 1) * dh]);
                let kh = kb.slice(s![.., h * dh..(h + 1) * dh]);
                let vh = vb.slice(s![.., h * dh..(h + 1) * dh]);
                let ph = pb.slice(s![h * nq..(h + 1) * nq, ..]);
                let dctx_h = dctx.slice(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh]);

                let dprobs = dctx_h.dot(&vh.t());
                let dvh = ph.t().dot(&dctx_h);
                let dlogits = softmax_rows_vjp(&ph.to_owned(), &dprobs);
                let dqh = dlogits.dot(&kh) * scale;
                let dkh = dlogits.t().dot(&qh) * scale;

                dq.slice_mut(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh])
                    .assign(&dqh);
                dk.slice_mut(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh])
                    .assign(&dkh);
                dv.slice_mut(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh])
                    .assign(&dvh);
            }
        }
        let dq_in = self.wq.backward(p, g, q_in, &dq);
        let mut dkv_in = self.wk.backward(p, g, kv_in, &dk);
        dkv_in += &self.wv.backward(p, g, kv_in, &dv);
        (dq_in, dkv_in)
    }
}

// ---------------------------------------------------------------------------
// Pre-LN transformer encoder layer
// ---------------------------------------------------------------------------

/// x -> x + Drop(SelfAttn(LN1(x))) -> +Drop(FFN(LN2(.))), GELU inside the FFN.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: Mha,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub drop: Dropout,
}

pub struct EncoderLayerCache {
    pub x: Array2<f64>,
    pub ln1c: LnCache,
    pub a: Array2<f64>,
    pub mha: MhaCache,
    pub drop1: Option<Array2<f64>>,
    pub x1: Array2<f64>,
    pub ln2c: LnCache,
    pub f: Array2<f64>,
    pub ff1_out: Array2<f64>,
    pub gelu_out: Array2<f64>,
    pub drop2: Option<Array2<f64>>,
}

impl EncoderLayer {
    pub fn new(
        params: &mut TensorMap,
        rng: &mut ChaCha20Rng,
        prefix: &str,
        d: usize,
        heads: usize,
        ffn_dim: usize,
        dropout: f64,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(params, &format!("{prefix}.ln1"), d),
            attn: Mha::new(params, rng, &format!("{prefix}.attn"), d, heads),
            ln2: LayerNorm::new(params, &format!("{prefix}.ln2"), d),
            ff1: Linear::new(params, rng, &format!("{prefix}.ff1"), d, ffn_dim),
            ff2: Linear::new(params, rng, &format!("{prefix}.ff2"), ffn_dim, d),
            drop: Dropout { p: dropout },
        }
    }

    pub fn forward(
        &self,
        p: &TensorMap,
        x: &Array2<f64>,
        batch: usize,
        mask: &Array2<f64>,
        mut rng: Option<&mut ChaCha20Rng>,
    ) -> (Array2<f64>, EncoderLayerCache) {
        let (a, ln1c) = self.ln1.forward(p, x);
        let (sa, mha) = self.attn.forward(p, &a, &a, batch, mask);
        let (sa_d, drop1) = self.drop.forward(&sa, rng.as_deref_mut());
        let x1 = x + &sa_d;

        let (f, ln2c) = self.ln2.forward(p, &x1);
        let ff1_out = self.ff1.forward(p, &f);
        let gelu_out = ff1_out.mapv(gelu);
        let ff2_out = self.ff2.forward(p, &gelu_out);
        let (ff_d, drop2) = self.drop.forward(&ff2_out, rng);
        let y = &x1 + &ff_d;

        (
            y,
            EncoderLayerCache {
                x: x.clone(),
                ln1c,
                a,
                mha,
                drop1,
                x1,
                ln2c,
                f,
                ff1_out,
                gelu_out,
                drop2,
            },
        )
    }

    pub fn backward(
        &self,
        p: &TensorMap,
        g: &mut TensorMap,
        cache: &EncoderLayerCache,
        dy: &Array2<f64>,
    ) -> Array2<f64> {
        // FFN branch
        let dff2_out = self.drop.backward(dy, &cache.drop2);
        let dgelu_out = self.ff2.backward(p, g, &cache.gelu_out, &dff2_out);
        let mut dff1_out = dgelu_out;
        dff1_out.zip_mut_with(&cache.ff1_out, |dv, &x| *dv *= gelu_grad(x));
        let df = self.ff1.backward(p, g, &cache.f, &dff1_out);
        let mut dx1 = dy + &self.ln2.backward(p, g, &cache.ln2c, &df);

        // Attention branch
        let dsa = self.drop.backward(&dx1, &cache.drop1);
        let (dq, dkv) = self
            .attn
            .backward(p, g, &cache.a, &cache.a, &cache.mha, &dsa);
        let da = dq + dkv;
        dx1 += &self.ln1.backward(p, g, &cache.ln1c, &da);
        dx1
    }
}

/// Strict causal self-attention mask: position t sees t' <= t.
pub fn causal_mask(n: usize, mask_neg: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(t, tp)| if tp <= t { 0.0 } else { mask_neg })
}
