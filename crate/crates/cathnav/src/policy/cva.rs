//! The goal-conditioned cross-attention policy: standardized states are
//! projected into the token space, both modalities get learnable frame-level
//! positional embeddings, a masked causal cross-attention layer fuses states
//! (queries) with all visual tokens of non-future frames (keys/values), a
//! causal transformer models time, gated goal fusion mixes in the goal
//! embedding, and an MLP head regresses the next action from the final
//! timestep.
//!
//! Batched tensors are kept two-dimensional: state rows as [B*N, 3] and
//! token rows as [B*N*P, d], frame-major within each sample.

use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::PolicyConfig;
use crate::error::{Error, Result};
use crate::nn::init::normal;
use crate::nn::layers::{relu, sigmoid};
use crate::nn::{causal_mask, EncoderLayer, EncoderLayerCache, LayerNorm, Linear, LnCache, Mha, MhaCache, TensorMap};

/// Additive cross-attention mask [N, N*P]: query t sees every token of
/// frames t' <= t; later frames get mask_neg.
pub fn build_cross_mask(n: usize, p: usize, mask_neg: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, n * p), |(t, j)| {
        if j / p <= t {
            0.0
        } else {
            mask_neg
        }
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOpts {
    /// Skip gated goal fusion entirely: Z = temporal output, goal unused.
    pub bypass_goal: bool,
}

pub struct CvaPolicy {
    pub cfg: PolicyConfig,
    pub params: TensorMap,
    proj: Linear,
    cross_ln_q: LayerNorm,
    cross_ln_kv: LayerNorm,
    cross_attn: Mha,
    cross_ln_out: LayerNorm,
    tf: Vec<EncoderLayer>,
    ggf_ln: LayerNorm,
    ggf_gate: Linear,
    head: Vec<Linear>,
    causal: Array2<f64>,
    cross: Array2<f64>,
}

pub struct CvaCache {
    pub batch: usize,
    states: Array2<f64>,
    ln_q: LnCache,
    q_in: Array2<f64>,
    ln_kv: LnCache,
    kv_in: Array2<f64>,
    mha: MhaCache,
    ln_out: LnCache,
    tf_caches: Vec<EncoderLayerCache>,
    h_hat: Array2<f64>,
    ggf: Option<GgfCache>,
    head_inputs: Vec<Array2<f64>>,
    head_pre: Vec<Array2<f64>>,
}

struct GgfCache {
    ln_a: LnCache,
    a: Array2<f64>,
    goals_rows: Array2<f64>,
    concat: Array2<f64>,
    gate: Array2<f64>,
}

impl CvaPolicy {
    pub fn new(cfg: &PolicyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = TensorMap::new();
        let d = cfg.d;

        let proj = Linear::new(&mut params, &mut rng, "proj", 3, d);
        params.insert("pos_s", normal(&mut rng, cfg.n, d, 0.02).into_dyn());
        params.insert("pos_f", normal(&mut rng, cfg.n, d, 0.02).into_dyn());

        let cross_ln_q = LayerNorm::new(&mut params, "cross.ln_q", d);
        let cross_ln_kv = LayerNorm::new(&mut params, "cross.ln_kv", d);
        let cross_attn = Mha::new(&mut params, &mut rng, "cross.attn", d, cfg.cross_heads);
        let cross_ln_out = LayerNorm::new(&mut params, "cross.ln_out", d);

        let tf = (0..cfg.tf_layers)
            .map(|i| {
                EncoderLayer::new(
                    &mut params,
                    &mut rng,
                    &format!("tf{i}"),
                    d,
                    cfg.tf_heads,
                    cfg.ffn_dim,
                    cfg.dropout,
                )
            })
            .collect();

        let ggf_ln = LayerNorm::new(&mut params, "ggf.ln", d);
        let ggf_gate = Linear::new(&mut params, &mut rng, "ggf.gate", 2 * d, d);

        let mut head = Vec::new();
        let mut prev = d;
        for (i, &width) in cfg.head_dims.iter().enumerate() {
            head.push(Linear::new(
                &mut params,
                &mut rng,
                &format!("head{i}"),
                prev,
                width,
            ));
            prev = width;
        }

        Ok(Self {
            causal: causal_mask(cfg.n, cfg.mask_neg),
            cross: build_cross_mask(cfg.n, cfg.p, cfg.mask_neg),
            cfg: cfg.clone(),
            params,
            proj,
            cross_ln_q,
            cross_ln_kv,
            cross_attn,
            cross_ln_out,
            tf,
            ggf_ln,
            ggf_gate,
            head,
        })
    }

    pub fn n_trainable(&self) -> usize {
        self.params.n_params()
    }

    // ------------------------------------------------------------------
    // Batched training path
    // ------------------------------------------------------------------

    /// states: [B*N, 3] standardized; tokens: [B*N*P, d] frame-major;
    /// goals: [B, d]. Dropout is active iff `rng` is given.
    pub fn forward_batch(
        &self,
        states: &Array2<f64>,
        tokens: &Array2<f64>,
        goals: &Array2<f64>,
        batch: usize,
        opts: ForwardOpts,
        mut rng: Option<&mut ChaCha20Rng>,
    ) -> Result<(Array2<f64>, CvaCache)> {
        let (n, p, d) = (self.cfg.n, self.cfg.p, self.cfg.d);
        if states.dim() != (batch * n, 3) {
            return Err(Error::ShapeMismatch(format!(
                "states {:?}, expected ({}, 3); sequence length is fixed at {n}",
                states.dim(),
                batch * n
            )));
        }
        if tokens.dim() != (batch * n * p, d) {
            return Err(Error::ShapeMismatch(format!(
                "tokens {:?}, expected ({}, {d})",
                tokens.dim(),
                batch * n * p
            )));
        }
        if !opts.bypass_goal && goals.dim() != (batch, d) {
            return Err(Error::ShapeMismatch(format!(
                "goals {:?}, expected ({batch}, {d})",
                goals.dim()
            )));
        }

        // State projection and positional embeddings.
        let s_hat = self.proj.forward(&self.params, states);
        let pos_s = self.params.mat("pos_s");
        let pos_f = self.params.mat("pos_f");
        let mut s_tilde = s_hat.clone();
        for (r, mut row) in s_tilde.rows_mut().into_iter().enumerate() {
            row += &pos_s.row(r % n);
        }
        let mut f_tilde = tokens.clone();
        for (r, mut row) in f_tilde.rows_mut().into_iter().enumerate() {
            row += &pos_f.row((r / p) % n);
        }

        // Masked causal cross-attention: H = LN(MHA(LN(q), LN(kv); M)).
        let (q_in, ln_q) = self.cross_ln_q.forward(&self.params, &s_tilde);
        let (kv_in, ln_kv) = self.cross_ln_kv.forward(&self.params, &f_tilde);
        let (attn_out, mha) = self
            .cross_attn
            .forward(&self.params, &q_in, &kv_in, batch, &self.cross);
        let (h, ln_out) = self.cross_ln_out.forward(&self.params, &attn_out);

        // Causal temporal transformer.
        let mut x = h;
        let mut tf_caches = Vec::with_capacity(self.tf.len());
        for layer in &self.tf {
            let (y, c) = layer.forward(&self.params, &x, batch, &self.causal, rng.as_deref_mut());
            tf_caches.push(c);
            x = y;
        }
        let h_hat = x;

        // Gated goal fusion (or bypass for the no-goal condition).
        let (z, ggf) = if opts.bypass_goal {
            (h_hat.clone(), None)
        } else {
            let (a, ln_a) = self.ggf_ln.forward(&self.params, &h_hat);
            let mut goals_rows = Array2::zeros((batch * n, d));
            for r in 0..batch * n {
                goals_rows.row_mut(r).assign(&goals.row(r / n));
            }
            let mut concat = Array2::zeros((batch * n, 2 * d));
            concat.slice_mut(s![.., ..d]).assign(&a);
            concat.slice_mut(s![.., d..]).assign(&goals_rows);
            let gate = self
                .ggf_gate
                .forward(&self.params, &concat)
                .mapv(sigmoid);
            let z = &gate * &a + &(1.0 - &gate) * &goals_rows;
            (
                z,
                Some(GgfCache {
                    ln_a,
                    a,
                    goals_rows,
                    concat,
                    gate,
                }),
            )
        };

        // Action head on the final timestep of each sample.
        let mut z_last = Array2::zeros((batch, d));
        for b in 0..batch {
            z_last.row_mut(b).assign(&z.row(b * n + n - 1));
        }
        let mut head_inputs = Vec::with_capacity(self.head.len());
        let mut head_pre = Vec::with_capacity(self.head.len());
        let mut cur = z_last;
        for (i, lin) in self.head.iter().enumerate() {
            head_inputs.push(cur.clone());
            let pre = lin.forward(&self.params, &cur);
            head_pre.push(pre.clone());
            cur = if i + 1 < self.head.len() {
                pre.mapv(relu)
            } else {
                pre
            };
        }

        let cache = CvaCache {
            batch,
            states: states.clone(),
            ln_q,
            q_in,
            ln_kv,
            kv_in,
            mha,
            ln_out,
            tf_caches,
            h_hat,
            ggf,
            head_inputs,
            head_pre,
        };
        Ok((cur, cache))
    }

    /// Gradients of every trainable parameter for d(loss)/d(output) = dout.
    pub fn backward_batch(&self, cache: &CvaCache, dout: &Array2<f64>) -> TensorMap {
        let (n, p, _d) = (self.cfg.n, self.cfg.p, self.cfg.d);
        let batch = cache.batch;
        let mut g = self.params.zeros_like();

        // Head MLP.
        let mut dcur = dout.clone();
        for i in (0..self.head.len()).rev() {
            if i + 1 < self.head.len() {
                dcur.zip_mut_with(&cache.head_pre[i], |dv, &pre| {
                    if pre <= 0.0 {
                        *dv = 0.0;
                    }
                });
            }
            dcur = self
                .head[i]
                .backward(&self.params, &mut g, &cache.head_inputs[i], &dcur);
        }
        let dz_last = dcur;

        // Scatter into the full sequence: only the last timestep receives
        // head gradient.
        let mut dz = Array2::zeros(cache.h_hat.raw_dim());
        for b in 0..batch {
            dz.row_mut(b * n + n - 1).assign(&dz_last.row(b));
        }

        // Gated goal fusion.
        let mut dh_hat = if let Some(ggf) = &cache.ggf {
            let da_direct = &dz * &ggf.gate;
            let dgate = &dz * &(&ggf.a - &ggf.goals_rows);
            let dpre = &dgate * &(&ggf.gate * &(1.0 - &ggf.gate));
            let dconcat = self
                .ggf_gate
                .backward(&self.params, &mut g, &ggf.concat, &dpre);
            let da = &da_direct + &dconcat.slice(s![.., ..self.cfg.d]);
            self.ggf_ln.backward(&self.params, &mut g, &ggf.ln_a, &da)
        } else {
            dz
        };

        // Transformer stack.
        for (layer, c) in self.tf.iter().zip(cache.tf_caches.iter()).rev() {
            dh_hat = layer.backward(&self.params, &mut g, c, &dh_hat);
        }

        // Cross-attention block.
        let dattn_out = self
            .cross_ln_out
            .backward(&self.params, &mut g, &cache.ln_out, &dh_hat);
        let (dq_in, dkv_in) = self.cross_attn.backward(
            &self.params,
            &mut g,
            &cache.q_in,
            &cache.kv_in,
            &cache.mha,
            &dattn_out,
        );
        let ds_tilde = self
            .cross_ln_q
            .backward(&self.params, &mut g, &cache.ln_q, &dq_in);
        let df_tilde = self
            .cross_ln_kv
            .backward(&self.params, &mut g, &cache.ln_kv, &dkv_in);

        // Positional embeddings: frame-level sums.
        {
            let dpos_s = g.get_mut("pos_s");
            for (r, row) in ds_tilde.rows().into_iter().enumerate() {
                let mut dst = dpos_s.index_axis_mut(Axis(0), r % n);
                dst += &row;
            }
        }
        {
            let dpos_f = g.get_mut("pos_f");
            for (r, row) in df_tilde.rows().into_iter().enumerate() {
                let mut dst = dpos_f.index_axis_mut(Axis(0), (r / p) % n);
                dst += &row;
            }
        }

        // State projection (token inputs are frozen upstream).
        let _dstates = self
            .proj
            .backward(&self.params, &mut g, &cache.states, &ds_tilde);
        g
    }

    // ------------------------------------------------------------------
    // Single-sample stage views (eval mode, no dropout)
    // ------------------------------------------------------------------

    /// [N, 3] -> [N, d]
    pub fn project_states(&self, states: &Array2<f64>) -> Result<Array2<f64>> {
        if states.dim() != (self.cfg.n, 3) {
            return Err(Error::ShapeMismatch(format!(
                "states {:?}, expected ({}, 3)",
                states.dim(),
                self.cfg.n
            )));
        }
        Ok(self.proj.forward(&self.params, states))
    }

    /// ([N,P,d], [N,d]) -> (F with frame positions, S with positions).
    pub fn add_positional(
        &self,
        frames: &Array3<f64>,
        s_hat: &Array2<f64>,
    ) -> Result<(Array3<f64>, Array2<f64>)> {
        let (n, p, d) = (self.cfg.n, self.cfg.p, self.cfg.d);
        if frames.dim() != (n, p, d) {
            return Err(Error::ShapeMismatch(format!(
                "frame tokens {:?}, expected ({n}, {p}, {d}); sequence length is fixed",
                frames.dim()
            )));
        }
        if s_hat.dim() != (n, d) {
            return Err(Error::ShapeMismatch(format!(
                "projected states {:?}, expected ({n}, {d})",
                s_hat.dim()
            )));
        }
        let pos_s = self.params.mat("pos_s");
        let pos_f = self.params.mat("pos_f");
        let mut f = frames.clone();
        for t in 0..n {
            let mut frame = f.index_axis_mut(Axis(0), t);
            for mut tok in frame.rows_mut() {
                tok += &pos_f.row(t);
            }
        }
        let s = s_hat + &pos_s;
        Ok((f, s))
    }

    /// Fused representation H = LN(MHA(LN(S), LN(F); M)), single sample.
    pub fn cross_attend(&self, s_tilde: &Array2<f64>, f_tilde: &Array3<f64>) -> Result<Array2<f64>> {
        let (n, p, d) = (self.cfg.n, self.cfg.p, self.cfg.d);
        if s_tilde.dim() != (n, d) || f_tilde.dim() != (n, p, d) {
            return Err(Error::ShapeMismatch("cross_attend input shapes".into()));
        }
        let flat = f_tilde
            .to_shape((n * p, d))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?
            .to_owned();
        let (q, _) = self.cross_ln_q.forward(&self.params, s_tilde);
        let (kv, _) = self.cross_ln_kv.forward(&self.params, &flat);
        let (attn, _) = self
            .cross_attn
            .forward(&self.params, &q, &kv, 1, &self.cross);
        let (h, _) = self.cross_ln_out.forward(&self.params, &attn);
        Ok(h)
    }

    /// Causal transformer over the fused sequence, dropout off.
    pub fn temporal_encode(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        if h.dim() != (self.cfg.n, self.cfg.d) {
            return Err(Error::ShapeMismatch("temporal_encode input shape".into()));
        }
        let mut x = h.clone();
        for layer in &self.tf {
            let (y, _) = layer.forward(&self.params, &x, 1, &self.causal, None);
            x = y;
        }
        Ok(x)
    }

    /// Z = G .* LN(H) + (1-G) .* g with G = sigmoid([LN(H) || g] W + b).
    pub fn gated_goal_fusion(&self, h_hat: &Array2<f64>, goal: &Array1<f64>) -> Result<Array2<f64>> {
        let (n, d) = (self.cfg.n, self.cfg.d);
        if h_hat.dim() != (n, d) || goal.len() != d {
            return Err(Error::ShapeMismatch("gated_goal_fusion input shapes".into()));
        }
        let (a, _) = self.ggf_ln.forward(&self.params, h_hat);
        let mut concat = Array2::zeros((n, 2 * d));
        concat.slice_mut(s![.., ..d]).assign(&a);
        for mut row in concat.slice_mut(s![.., d..]).rows_mut() {
            row.assign(goal);
        }
        let gate = self.ggf_gate.forward(&self.params, &concat).mapv(sigmoid);
        let mut z = Array2::zeros((n, d));
        for t in 0..n {
            for j in 0..d {
                z[[t, j]] = gate[[t, j]] * a[[t, j]] + (1.0 - gate[[t, j]]) * goal[j];
            }
        }
        Ok(z)
    }

    /// MLP over the final timestep only.
    pub fn action_head(&self, z: &Array2<f64>) -> Result<Array1<f64>> {
        if z.dim() != (self.cfg.n, self.cfg.d) {
            return Err(Error::ShapeMismatch("action_head input shape".into()));
        }
        let mut cur = z.row(self.cfg.n - 1).insert_axis(Axis(0)).to_owned();
        for (i, lin) in self.head.iter().enumerate() {
            let pre = lin.forward(&self.params, &cur);
            cur = if i + 1 < self.head.len() {
                pre.mapv(relu)
            } else {
                pre
            };
        }
        Ok(cur.row(0).to_owned())
    }

    /// Full eval-mode forward for one window.
    pub fn forward(
        &self,
        states: &Array2<f64>,
        frames: &Array3<f64>,
        goal: &Array1<f64>,
    ) -> Result<Array1<f64>> {
        let s_hat = self.project_states(states)?;
        let (f_tilde, s_tilde) = self.add_positional(frames, &s_hat)?;
        let h = self.cross_attend(&s_tilde, &f_tilde)?;
        let h_hat = self.temporal_encode(&h)?;
        let z = self.gated_goal_fusion(&h_hat, goal)?;
        self.action_head(&z)
    }
}

/// (total, trainable) with the frozen encoder contribution included in total.
pub fn count_params(policy: &CvaPolicy, encoder_frozen: usize) -> (usize, usize) {
    let trainable = policy.n_trainable();
    (trainable + encoder_frozen, trainable)
}
