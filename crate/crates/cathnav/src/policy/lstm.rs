//! Kinematics-only recurrent baseline: a stacked LSTM over the standardized
//! state window with a linear head on the last hidden state. Frames and goal
//! are never seen by this model.
//!
//! Gate layout in the 4H weight columns is [input | forget | cell | output].

use ndarray::{s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::LstmConfig;
use crate::error::{Error, Result};
use crate::nn::init::uniform_recurrent;
use crate::nn::layers::sigmoid;
use crate::nn::TensorMap;

struct LstmLayer {
    w_ih: String,
    w_hh: String,
    b_ih: String,
    b_hh: String,
}

pub struct LstmPolicy {
    pub cfg: LstmConfig,
    pub params: TensorMap,
    layers: Vec<LstmLayer>,
    head_w: String,
    head_b: String,
}

/// Per-(layer, timestep) forward state kept for backpropagation through time.
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

pub struct LstmCache {
    batch: usize,
    steps: Vec<Vec<StepCache>>,
    h_last: Array2<f64>,
}

impl LstmPolicy {
    pub fn new(cfg: &LstmConfig, seed: u64) -> Result<Self> {
        if cfg.layers == 0 || cfg.hidden == 0 || cfg.n == 0 {
            return Err(Error::Config("lstm layers, hidden, n must be >= 1".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut params = TensorMap::new();
        let h = cfg.hidden;
        let mut layers = Vec::new();
        let mut input = 3;
        for l in 0..cfg.layers {
            let w_ih = format!("lstm{l}.w_ih");
            let w_hh = format!("lstm{l}.w_hh");
            let b_ih = format!("lstm{l}.b_ih");
            let b_hh = format!("lstm{l}.b_hh");
            params.insert(&w_ih, uniform_recurrent(&mut rng, input, 4 * h, h).into_dyn());
            params.insert(&w_hh, uniform_recurrent(&mut rng, h, 4 * h, h).into_dyn());
            params.insert(&b_ih, uniform_recurrent(&mut rng, 1, 4 * h, h).remove_axis(Axis(0)).into_dyn());
            params.insert(&b_hh, uniform_recurrent(&mut rng, 1, 4 * h, h).remove_axis(Axis(0)).into_dyn());
            layers.push(LstmLayer {
                w_ih,
                w_hh,
                b_ih,
                b_hh,
            });
            input = h;
        }
        let head_w = "head.w".to_string();
        let head_b = "head.b".to_string();
        params.insert(&head_w, uniform_recurrent(&mut rng, h, 3, h).into_dyn());
        params.insert(&head_b, uniform_recurrent(&mut rng, 1, 3, h).remove_axis(Axis(0)).into_dyn());
        Ok(Self {
            cfg: cfg.clone(),
            params,
            layers,
            head_w,
            head_b,
        })
    }

    pub fn n_trainable(&self) -> usize {
        self.params.n_params()
    }

    /// states: [B*N, 3] standardized, frame-major per sample. Returns [B, 3].
    pub fn forward_batch(
        &self,
        states: &Array2<f64>,
        batch: usize,
    ) -> Result<(Array2<f64>, LstmCache)> {
        let n = self.cfg.n;
        let h = self.cfg.hidden;
        if states.dim() != (batch * n, 3) {
            return Err(Error::ShapeMismatch(format!(
                "lstm states {:?}, expected ({}, 3)",
                states.dim(),
                batch * n
            )));
        }
        let mut steps: Vec<Vec<StepCache>> = (0..self.layers.len()).map(|_| Vec::with_capacity(n)).collect();
        let mut hs: Vec<Array2<f64>> = vec![Array2::zeros((batch, h)); self.layers.len()];
        let mut cs: Vec<Array2<f64>> = vec![Array2::zeros((batch, h)); self.layers.len()];

        for t in 0..n {
            let mut x = Array2::zeros((batch, 3));
            for b in 0..batch {
                x.row_mut(b).assign(&states.row(b * n + t));
            }
            for (l, layer) in self.layers.iter().enumerate() {
                let gates = x.dot(&self.params.mat(&layer.w_ih))
                    + hs[l].dot(&self.params.mat(&layer.w_hh))
                    + &self.params.vec(&layer.b_ih)
                    + &self.params.vec(&layer.b_hh);
                let i = gates.slice(s![.., 0..h]).mapv(sigmoid);
                let f = gates.slice(s![.., h..2 * h]).mapv(sigmoid);
                let g = gates.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
                let o = gates.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
                let c = &f * &cs[l] + &i * &g;
                let tanh_c = c.mapv(f64::tanh);
                let h_new = &o * &tanh_c;
                steps[l].push(StepCache {
                    x: x.clone(),
                    h_prev: hs[l].clone(),
                    c_prev: cs[l].clone(),
                    i,
                    f,
                    g,
                    o,
                    tanh_c,
                });
                cs[l] = c;
                hs[l] = h_new.clone();
                x = h_new;
            }
        }
        let h_last = hs.last().unwrap().clone();
        let mut out = h_last.dot(&self.params.mat(&self.head_w));
        out += &self.params.vec(&self.head_b);
        Ok((
            out,
            LstmCache {
                batch,
                steps,
                h_last,
            },
        ))
    }

    pub fn backward_batch(&self, cache: &LstmCache, dout: &Array2<f64>) -> TensorMap {
        let n = self.cfg.n;
        let h = self.cfg.hidden;
        let batch = cache.batch;
        let n_layers = self.layers.len();
        let mut g = self.params.zeros_like();

        g.add_to_2d(&self.head_w, &cache.h_last.t().dot(dout));
        g.add_to_1d(&self.head_b, &dout.sum_axis(Axis(0)));
        let dh_last = dout.dot(&self.params.mat(&self.head_w).t());

        // dh[l], dc[l] carry gradient into timestep t from t+1.
        let mut dh: Vec<Array2<f64>> = vec![Array2::zeros((batch, h)); n_layers];
        let mut dc: Vec<Array2<f64>> = vec![Array2::zeros((batch, h)); n_layers];
        dh[n_layers - 1] = dh_last;

        for t in (0..n).rev() {
            // dx flowing from layer l down into layer l-1 at the same step.
            let mut dx_down: Option<Array2<f64>> = None;
            for l in (0..n_layers).rev() {
                let sc = &cache.steps[l][t];
                let mut dh_t = dh[l].clone();
                if let Some(dx) = dx_down.take() {
                    dh_t += &dx;
                }
                let d_o = &dh_t * &sc.tanh_c;
                let mut dc_t = dc[l].clone();
                dc_t += &(&dh_t * &sc.o * &(1.0 - &sc.tanh_c * &sc.tanh_c));
                let d_i = &dc_t * &sc.g;
                let d_g = &dc_t * &sc.i;
                let d_f = &dc_t * &sc.c_prev;
                dc[l] = &dc_t * &sc.f;

                let layer = &self.layers[l];
                let mut dgates = Array2::zeros((batch, 4 * h));
                dgates
                    .slice_mut(s![.., 0..h])
                    .assign(&(&d_i * &sc.i * &(1.0 - &sc.i)));
                dgates
                    .slice_mut(s![.., h..2 * h])
                    .assign(&(&d_f * &sc.f * &(1.0 - &sc.f)));
                dgates
                    .slice_mut(s![.., 2 * h..3 * h])
                    .assign(&(&d_g * &(1.0 - &sc.g * &sc.g)));
                dgates
                    .slice_mut(s![.., 3 * h..4 * h])
                    .assign(&(&d_o * &sc.o * &(1.0 - &sc.o)));

                g.add_to_2d(&layer.w_ih, &sc.x.t().dot(&dgates));
                g.add_to_2d(&layer.w_hh, &sc.h_prev.t().dot(&dgates));
                let db = dgates.sum_axis(Axis(0));
                g.add_to_1d(&layer.b_ih, &db);
                g.add_to_1d(&layer.b_hh, &db);

                dh[l] = dgates.dot(&self.params.mat(&layer.w_hh).t());
                let dx = dgates.dot(&self.params.mat(&layer.w_ih).t());
                if l > 0 {
                    dx_down = Some(dx);
                }
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny() -> LstmConfig {
        LstmConfig {
            n: 4,
            hidden: 6,
            layers: 2,
        }
    }

    #[test]
    fn param_count_matches_closed_form() {
        let cfg = LstmConfig::default();
        let m = LstmPolicy::new(&cfg, 0).unwrap();
        let h = cfg.hidden;
        let layer1 = 3 * 4 * h + h * 4 * h + 8 * h;
        let layer2 = h * 4 * h + h * 4 * h + 8 * h;
        let head = h * 3 + 3;
        assert_eq!(m.n_trainable(), layer1 + layer2 + head);
    }

    #[test]
    fn forward_shape_and_determinism() {
        let cfg = tiny();
        let m = LstmPolicy::new(&cfg, 3).unwrap();
        let x = Array2::from_shape_fn((2 * 4, 3), |(r, j)| 0.1 * r as f64 - 0.2 * j as f64);
        let (a, _) = m.forward_batch(&x, 2).unwrap();
        let (b, _) = m.forward_batch(&x, 2).unwrap();
        assert_eq!(a.dim(), (2, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_window_length() {
        let cfg = tiny();
        let m = LstmPolicy::new(&cfg, 3).unwrap();
        let x = Array2::zeros((7, 3));
        assert!(m.forward_batch(&x, 2).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let cfg = tiny();
        let m = LstmPolicy::new(&cfg, 5).unwrap();
        let x1 = Array2::from_shape_fn((4, 3), |(r, j)| 0.3 * r as f64 + 0.1 * j as f64);
        let mut x2 = Array2::zeros((8, 3));
        x2.slice_mut(s![0..4, ..]).assign(&x1);
        x2.slice_mut(s![4..8, ..]).assign(&(&x1 * -2.0));
        let (single, _) = m.forward_batch(&x1, 1).unwrap();
        let (both, _) = m.forward_batch(&x2, 2).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(single[[0, j]], both[[0, j]], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = LstmConfig {
            n: 3,
            hidden: 4,
            layers: 2,
        };
        let mut m = LstmPolicy::new(&cfg, 7).unwrap();
        let x = Array2::from_shape_fn((2 * 3, 3), |(r, j)| 0.2 * r as f64 - 0.3 * j as f64);
        let target = Array2::from_shape_fn((2, 3), |(b, j)| 0.5 * b as f64 - 0.1 * j as f64);

        let loss = |m: &LstmPolicy| -> f64 {
            let (out, _) = m.forward_batch(&x, 2).unwrap();
            (&out - &target).mapv(|v| v * v).sum() / (2.0 * 3.0)
        };
        let (out, cache) = m.forward_batch(&x, 2).unwrap();
        let dout = (&out - &target) * (2.0 / 6.0);
        let grads = m.backward_batch(&cache, &dout);

        let eps = 1e-6;
        let names: Vec<String> = m.params.names().cloned().collect();
        for name in names {
            let flat_len = m.params.get(&name).len();
            for idx in [0, flat_len / 2, flat_len - 1] {
                let orig = m.params.get(&name).as_slice().unwrap()[idx];
                m.params.get_mut(&name).as_slice_mut().unwrap()[idx] = orig + eps;
                let up = loss(&m);
                m.params.get_mut(&name).as_slice_mut().unwrap()[idx] = orig - eps;
                let down = loss(&m);
                m.params.get_mut(&name).as_slice_mut().unwrap()[idx] = orig;
                let num = (up - down) / (2.0 * eps);
                let ana = grads.get(&name).as_slice().unwrap()[idx];
                assert_abs_diff_eq!(num, ana, epsilon = 1e-5);
            }
        }
    }
}
