//! End-to-end acceptance checks. Each test exercises one observable contract
//! of the pipeline and prints a single PASS/FAIL verdict line; the heavier
//! learning checks share one desk-scale pipeline built on first use.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cathnav::config::{EncoderBackend, EncoderConfig, LstmConfig, PolicyConfig, RunConfig, TrainConfig};
use cathnav::data::{
    build_windows, load_corpus, make_splits, standardize, destandardize, window_count,
    window_starts, EpisodeMeta, EpisodeRecord, LoadedEpisode, SplitMode, WindowSample,
    EPISODE_FORMAT_VERSION,
};
use cathnav::encoder::make_encoder;
use cathnav::eval::{compute_metrics, evaluate, false_goal_table, write_results_csv, AblationCondition, MetricsReport};
use cathnav::nn::{Adam, AdamConfig};
use cathnav::policy::{count_params, CvaPolicy, ForwardOpts, LstmPolicy};
use cathnav::sim::{build_phantom, generate_episode, Renderer};
use cathnav::train::{encode_episodes, train, Batcher, EncodedEpisodes};

fn verdict(name: &str, ok: bool, detail: &str) {
    let flag = if ok { "PASS" } else { "FAIL" };
    println!("acceptance {name}: {flag} ({detail})");
    assert!(ok, "{name} failed: {detail}");
}

// -------------------------------------------------------------------------
// 1. Tiny-config forward pass against an independent scalar oracle.
// -------------------------------------------------------------------------

type Mat = Vec<Vec<f64>>;

fn take_mat(p: &cathnav::nn::TensorMap, name: &str) -> Mat {
    p.mat(name).rows().into_iter().map(|r| r.to_vec()).collect()
}

fn take_vec(p: &cathnav::nn::TensorMap, name: &str) -> Vec<f64> {
    p.vec(name).to_vec()
}

fn s_matmul(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let mut out = vec![vec![0.0; b.len()]; x.len()];
    for (i, row) in x.iter().enumerate() {
        for o in 0..b.len() {
            let mut acc = b[o];
            for (k, v) in row.iter().enumerate() {
                acc += v * w[k][o];
            }
            out[i][o] = acc;
        }
    }
    out
}

fn s_layernorm(x: &Mat, g: &[f64], b: &[f64]) -> Mat {
    let d = g.len() as f64;
    x.iter()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) * inv * g[j] + b[j])
                .collect()
        })
        .collect()
}

fn s_softmax(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

fn s_gelu(x: f64) -> f64 {
    let c = 0.797_884_560_802_865_4;
    let a = 0.044_715;
    0.5 * x * (1.0 + (c * (x + a * x * x * x)).tanh())
}

/// Multi-head attention with an additive mask, scalar arithmetic throughout.
#[allow(clippy::too_many_arguments)]
fn s_mha(
    p: &cathnav::nn::TensorMap,
    prefix: &str,
    q_in: &Mat,
    kv_in: &Mat,
    heads: usize,
    d: usize,
    mask: impl Fn(usize, usize) -> f64,
) -> Mat {
    let q = s_matmul(q_in, &take_mat(p, &format!("{prefix}.wq.w")), &take_vec(p, &format!("{prefix}.wq.b")));
    let k = s_matmul(kv_in, &take_mat(p, &format!("{prefix}.wk.w")), &take_vec(p, &format!("{prefix}.wk.b")));
    let v = s_matmul(kv_in, &take_mat(p, &format!("{prefix}.wv.w")), &take_vec(p, &format!("{prefix}.wv.b")));
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let lo = h * dh;
        for t in 0..q.len() {
            let mut scores: Vec<f64> = (0..k.len())
                .map(|j| {
                    let dot: f64 = (0..dh).map(|c| q[t][lo + c] * k[j][lo + c]).sum();
                    dot * scale + mask(t, j)
                })
                .collect();
            s_softmax(&mut scores);
            for (j, pr) in scores.iter().enumerate() {
                for c in 0..dh {
                    ctx[t][lo + c] += pr * v[j][lo + c];
                }
            }
        }
    }
    s_matmul(&ctx, &take_mat(p, &format!("{prefix}.wo.w")), &take_vec(p, &format!("{prefix}.wo.b")))
}

fn oracle_forward(
    policy: &CvaPolicy,
    states: &Array2<f64>,
    frames: &Array3<f64>,
    goal: &Array1<f64>,
) -> Vec<f64> {
    let cfg = &policy.cfg;
    let (n, p_tok, d) = (cfg.n, cfg.p, cfg.d);
    let pm = &policy.params;
    let mask_neg = cfg.mask_neg;

    // State projection plus temporal positions.
    let s_rows: Mat = (0..n).map(|t| (0..3).map(|j| states[[t, j]]).collect()).collect();
    let mut s_tilde = s_matmul(&s_rows, &take_mat(pm, "proj.w"), &take_vec(pm, "proj.b"));
    let pos_s = take_mat(pm, "pos_s");
    for t in 0..n {
        for j in 0..d {
            s_tilde[t][j] += pos_s[t][j];
        }
    }

    // Flattened frame tokens, frame-major, each frame sharing one position.
    let pos_f = take_mat(pm, "pos_f");
    let mut f_tilde: Mat = Vec::with_capacity(n * p_tok);
    for t in 0..n {
        for q in 0..p_tok {
            f_tilde.push((0..d).map(|j| frames[[t, q, j]] + pos_f[t][j]).collect());
        }
    }

    // Cross attention block: normalized inputs, masked fusion, no residual.
    let qn = s_layernorm(&s_tilde, &take_vec(pm, "cross.ln_q.g"), &take_vec(pm, "cross.ln_q.b"));
    let kn = s_layernorm(&f_tilde, &take_vec(pm, "cross.ln_kv.g"), &take_vec(pm, "cross.ln_kv.b"));
    let fused = s_mha(pm, "cross.attn", &qn, &kn, cfg.cross_heads, d, |t, j| {
        if j / p_tok <= t {
            0.0
        } else {
            mask_neg
        }
    });
    let mut x = s_layernorm(&fused, &take_vec(pm, "cross.ln_out.g"), &take_vec(pm, "cross.ln_out.b"));

    // Causal temporal encoder, pre-norm residual layers.
    for l in 0..cfg.tf_layers {
        let pre = format!("tf{l}");
        let a = s_layernorm(&x, &take_vec(pm, &format!("{pre}.ln1.g")), &take_vec(pm, &format!("{pre}.ln1.b")));
        let sa = s_mha(pm, &format!("{pre}.attn"), &a, &a, cfg.tf_heads, d, |t, j| {
            if j <= t {
                0.0
            } else {
                mask_neg
            }
        });
        let x1: Mat = (0..n)
            .map(|t| (0..d).map(|j| x[t][j] + sa[t][j]).collect())
            .collect();
        let f = s_layernorm(&x1, &take_vec(pm, &format!("{pre}.ln2.g")), &take_vec(pm, &format!("{pre}.ln2.b")));
        let mut h1 = s_matmul(&f, &take_mat(pm, &format!("{pre}.ff1.w")), &take_vec(pm, &format!("{pre}.ff1.b")));
        for row in h1.iter_mut() {
            for v in row.iter_mut() {
                *v = s_gelu(*v);
            }
        }
        let h2 = s_matmul(&h1, &take_mat(pm, &format!("{pre}.ff2.w")), &take_vec(pm, &format!("{pre}.ff2.b")));
        x = (0..n)
            .map(|t| (0..d).map(|j| x1[t][j] + h2[t][j]).collect())
            .collect();
    }

    // Gated goal fusion: convex mix of normalized features and the goal.
    let a = s_layernorm(&x, &take_vec(pm, "ggf.ln.g"), &take_vec(pm, "ggf.ln.b"));
    let g: Vec<f64> = goal.to_vec();
    let concat: Mat = (0..n)
        .map(|t| a[t].iter().cloned().chain(g.iter().cloned()).collect())
        .collect();
    let gate = s_matmul(&concat, &take_mat(pm, "ggf.gate.w"), &take_vec(pm, "ggf.gate.b"));
    let z_last: Mat = vec![(0..d)
        .map(|j| {
            let s = 1.0 / (1.0 + (-gate[n - 1][j]).exp());
            s * a[n - 1][j] + (1.0 - s) * g[j]
        })
        .collect()];

    // Action head, ReLU between layers only.
    let mut cur = z_last;
    for (i, _) in cfg.head_dims.iter().enumerate() {
        cur = s_matmul(&cur, &take_mat(pm, &format!("head{i}.w")), &take_vec(pm, &format!("head{i}.b")));
        if i + 1 < cfg.head_dims.len() {
            for v in cur[0].iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    cur.remove(0)
}

fn tiny_policy_cfg() -> PolicyConfig {
    PolicyConfig {
        n: 3,
        p: 2,
        d: 4,
        cross_heads: 1,
        tf_layers: 1,
        tf_heads: 1,
        ffn_dim: 8,
        head_dims: vec![8, 3],
        dropout: 0.0,
        mask_neg: -1e9,
    }
}

#[test]
fn a1_scalar_oracle_equivalence() {
    let started = Instant::now();
    let policy = CvaPolicy::new(&tiny_policy_cfg(), 31).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let states = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
    let frames = Array3::from_shape_fn((3, 2, 4), |_| rng.gen_range(-1.0..1.0));
    let goal = Array1::from_shape_fn(4, |_| rng.gen_range(-1.0..1.0));

    let got = policy.forward(&states, &frames, &goal).unwrap();
    let want = oracle_forward(&policy, &states, &frames, &goal);
    let diff = (0..3)
        .map(|j| (got[j] - want[j]).abs())
        .fold(0.0f64, f64::max);
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "1 scalar-oracle equivalence",
        diff <= 1e-5 && elapsed < 1.0,
        &format!("max diff {diff:.2e}, {elapsed:.3}s"),
    );
}

// -------------------------------------------------------------------------
// 2. Causality: perturbing step k leaves representations before k intact.
// -------------------------------------------------------------------------

#[test]
fn a2_causality_under_perturbation() {
    let started = Instant::now();
    let cfg = PolicyConfig {
        n: 8,
        p: 5,
        d: 16,
        cross_heads: 4,
        tf_layers: 2,
        tf_heads: 4,
        ffn_dim: 32,
        head_dims: vec![16, 3],
        dropout: 0.0,
        mask_neg: -1e9,
    };
    let policy = CvaPolicy::new(&cfg, 5).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(123);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let states = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
        let frames = Array3::from_shape_fn((8, 5, 16), |_| rng.gen_range(-1.0..1.0));
        let s_hat = policy.project_states(&states).unwrap();
        let (f_tilde, s_tilde) = policy.add_positional(&frames, &s_hat).unwrap();
        let h = policy.cross_attend(&s_tilde, &f_tilde).unwrap();
        let h_hat = policy.temporal_encode(&h).unwrap();

        let k = rng.gen_range(1..8usize);
        let mut states2 = states.clone();
        let mut frames2 = frames.clone();
        if rng.gen_bool(0.5) {
            states2[[k, rng.gen_range(0..3)]] += rng.gen_range(0.5..2.0);
        } else {
            frames2[[k, rng.gen_range(0..5), rng.gen_range(0..16)]] += rng.gen_range(0.5..2.0);
        }
        let s_hat2 = policy.project_states(&states2).unwrap();
        let (f_tilde2, s_tilde2) = policy.add_positional(&frames2, &s_hat2).unwrap();
        let h2 = policy.cross_attend(&s_tilde2, &f_tilde2).unwrap();
        let h_hat2 = policy.temporal_encode(&h2).unwrap();

        for t in 0..k {
            for j in 0..16 {
                worst = worst.max((h[[t, j]] - h2[[t, j]]).abs());
                worst = worst.max((h_hat[[t, j]] - h_hat2[[t, j]]).abs());
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "2 causality suite",
        worst <= 1e-6 && elapsed < 60.0,
        &format!("100 perturbations, max pre-k drift {worst:.2e}, {elapsed:.1}s"),
    );
}

// -------------------------------------------------------------------------
// 3. Encoder stays frozen and gradients touch only policy parameters.
// -------------------------------------------------------------------------

#[test]
fn a3_frozen_encoder_and_gradient_isolation() {
    let enc_cfg = EncoderConfig {
        backend: EncoderBackend::Stub,
        stub_dim: 16,
        stub_seed: 7,
        weights_path: None,
    };
    let encoder = make_encoder(&enc_cfg, 32).unwrap();
    let mut frame = image::RgbImage::new(32, 32);
    for (x, y, px) in frame.enumerate_pixels_mut() {
        px.0 = [(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) % 256) as u8];
    }
    let before = encoder.encode_frame(&frame).unwrap();
    let fp_before = encoder.fingerprint();

    let cfg = PolicyConfig {
        n: 4,
        p: encoder.tokens_per_frame(),
        d: 16,
        cross_heads: 4,
        tf_layers: 1,
        tf_heads: 4,
        ffn_dim: 32,
        head_dims: vec![16, 3],
        dropout: 0.0,
        mask_neg: -1e9,
    };
    let mut policy = CvaPolicy::new(&cfg, 3).unwrap();
    let initial = policy.params.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let b = 4usize;
    let states = Array2::from_shape_fn((b * 4, 3), |_| rng.gen_range(-1.0..1.0));
    let tokens = Array2::from_shape_fn((b * 4 * cfg.p, 16), |_| rng.gen_range(-1.0..1.0));
    let goals = Array2::from_shape_fn((b, 16), |_| rng.gen_range(-1.0..1.0));
    let targets = Array2::from_shape_fn((b, 3), |_| rng.gen_range(-1.0..1.0));

    let mut opt = Adam::new(&policy.params, AdamConfig::default());
    let mut grad_names_ok = true;
    for _ in 0..10 {
        let (pred, cache) = policy
            .forward_batch(&states, &tokens, &goals, b, ForwardOpts::default(), None)
            .unwrap();
        let dout = cathnav::train::mse_grad(&pred, &targets);
        let grads = policy.backward_batch(&cache, &dout);
        grad_names_ok &= grads.names().all(|n| initial.contains(n));
        opt.step(&mut policy.params, &grads, 1e-3);
    }

    let after = encoder.encode_frame(&frame).unwrap();
    let bits_equal = before
        .iter()
        .zip(after.iter())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let fp_equal = fp_before == encoder.fingerprint();
    let mut moved = 0.0;
    for (name, w) in policy.params.iter() {
        let w0 = initial.get(name);
        moved += (w - w0).mapv(|v| v * v).sum();
    }
    verdict(
        "3 frozen-encoder and gradient isolation",
        bits_equal && fp_equal && grad_names_ok && moved > 0.0,
        &format!(
            "encoder bit-identical after 10 steps: {bits_equal}, grads confined to policy: {grad_names_ok}, policy moved {moved:.2e}"
        ),
    );
}

// -------------------------------------------------------------------------
// 4. Trainable parameter count at the reference configuration.
// -------------------------------------------------------------------------

#[test]
fn a4_parameter_audit() {
    let policy = CvaPolicy::new(&PolicyConfig::default(), 0).unwrap();
    let (total, trainable) = count_params(&policy, 0);
    let rel = (trainable as f64 - 6.82e6).abs() / 6.82e6;
    let policy_prefixes = ["proj", "pos_s", "pos_f", "cross", "tf", "ggf", "head"];
    let names_ok = policy
        .params
        .names()
        .all(|n| policy_prefixes.iter().any(|p| n.starts_with(p)));
    verdict(
        "4 parameter audit",
        rel <= 0.03 && total == trainable && names_ok,
        &format!("trainable {trainable} ({rel:.4} from 6.82e6), encoder contributes {}", total - trainable),
    );
}

// -------------------------------------------------------------------------
// 5. Metric arithmetic invariants.
// -------------------------------------------------------------------------

#[test]
fn a5_metric_arithmetic() {
    let mut rng = ChaCha20Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = rng.gen_range(2..200);
        let preds = Array2::from_shape_fn((m, 3), |_| rng.gen_range(-2.0..2.0));
        let targets = Array2::from_shape_fn((m, 3), |_| rng.gen_range(-2.0..2.0));
        let dims = compute_metrics(&preds, &targets).unwrap();
        for d in &dims {
            worst = worst.max((d.rmse * d.rmse - d.mse).abs());
        }
    }
    let table_check = (0.0116f64.sqrt() - 0.1078).abs();
    verdict(
        "5 metric arithmetic",
        worst <= 1e-9 && table_check <= 5e-4,
        &format!("max |rmse^2-mse| {worst:.2e}, sqrt(0.0116) within {table_check:.2e} of 0.1078"),
    );
}

// -------------------------------------------------------------------------
// 6. Data protocol: reference split shapes, round-trip, window counts.
// -------------------------------------------------------------------------

fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[test]
fn a6_data_protocol() {
    // Default corpus dynamics; frames rendered small since only the state
    // rows feed the split and window checks.
    let mut sim = RunConfig::default().sim;
    sim.resolution = 64;
    let map = build_phantom(5, sim.n_targets, sim.world_size).unwrap();
    let renderer = Renderer::new(&map, sim.resolution).unwrap();
    let mut episodes = Vec::new();
    for target in 1..=sim.n_targets {
        for rep in 0..sim.repetitions {
            let ep = generate_episode(&map, &renderer, target, rep, mix_seed(5, target as u64, rep as u64), &sim)
                .expect("default-dynamics expert rollout");
            let len = ep.states.len();
            episodes.push(LoadedEpisode {
                record: EpisodeRecord {
                    meta: EpisodeMeta {
                        version: EPISODE_FORMAT_VERSION,
                        scenario_id: target,
                        repetition_id: rep,
                        seed: ep.seed,
                        len,
                        resolution: sim.resolution,
                    },
                    dir: PathBuf::from(format!("mem/P{target}/{rep}")),
                },
                states: ep.states,
            });
        }
    }
    let scenario = make_splits(&episodes, SplitMode::Scenario, [0.6, 0.2, 0.2], 5).unwrap();
    let episode = make_splits(&episodes, SplitMode::Episode, [0.6, 0.2, 0.2], 5).unwrap();
    let shapes_ok = scenario.train.len() == 25
        && scenario.val.len() == 5
        && scenario.test.len() == 15
        && episode.train.len() == 27
        && episode.val.len() == 9
        && episode.test.len() == 9;

    let mut roundtrip = 0.0f64;
    for ep in &episodes {
        for row in &ep.states {
            let back = destandardize(&standardize(row, &episode.stats), &episode.stats);
            for j in 0..3 {
                roundtrip = roundtrip.max((back[j] - row[j]).abs());
            }
        }
    }

    let mut windows_ok = true;
    for len in 0..=200usize {
        for n in [1, 2, 5, 16, 50] {
            for stride in [1, 2, 3] {
                // Enumeration oracle: starts s with s+n an in-range target row.
                let naive = (0..len).step_by(stride).filter(|s| s + n < len).count();
                windows_ok &= window_count(len, n, stride) == naive;
                windows_ok &= window_starts(len, n, stride).len() == naive;
            }
        }
    }
    verdict(
        "6 data protocol",
        shapes_ok && roundtrip <= 1e-9 && windows_ok,
        &format!(
            "splits 25/5/15 and 27/9/9: {shapes_ok}, round-trip {roundtrip:.2e}, window counts vs enumeration: {windows_ok}"
        ),
    );
}

// -------------------------------------------------------------------------
// Shared desk-scale pipeline for the learning and ablation checks.
// -------------------------------------------------------------------------

struct DeskArtifacts {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    elapsed_s: f64,
    total_windows: usize,
    cva_episode: MetricsReport,
    lstm_episode: MetricsReport,
    ablation: Vec<MetricsReport>,
    seed: u64,
}

static DESK: OnceLock<DeskArtifacts> = OnceLock::new();

fn desk() -> &'static DeskArtifacts {
    DESK.get_or_init(build_desk)
}

fn build_desk() -> DeskArtifacts {
    let started = Instant::now();
    let mut cfg = RunConfig::desk();
    cfg.seed = 5;
    cfg.trainer.seed = 5;
    cfg.eval.seed = 5;

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let map = build_phantom(cfg.seed, cfg.sim.n_targets, cfg.sim.world_size).unwrap();
    let renderer = Renderer::new(&map, cfg.sim.resolution).unwrap();
    for target in 1..=cfg.sim.n_targets {
        for rep in 0..cfg.sim.repetitions {
            let ep = generate_episode(
                &map,
                &renderer,
                target,
                rep,
                mix_seed(cfg.seed, target as u64, rep as u64),
                &cfg.sim,
            )
            .expect("desk corpus rollout");
            cathnav::data::write_episode(&corpus, &ep, cfg.sim.resolution).unwrap();
        }
    }
    let episodes = load_corpus(&corpus).unwrap();
    let total_windows: usize = episodes
        .iter()
        .map(|e| window_count(e.states.len(), cfg.policy.n, cfg.data.stride))
        .sum();

    let encoder = make_encoder(&cfg.encoder, cfg.sim.resolution).unwrap();
    let encoded = encode_episodes(encoder.as_ref(), &episodes, |_| true).unwrap();

    let run_split = |mode: SplitMode| {
        let manifest = make_splits(&episodes, mode, cfg.data.ratios, cfg.seed).unwrap();
        let tr = build_windows(&episodes, &manifest.train, cfg.data.window, cfg.data.stride, &manifest.stats).unwrap();
        let va = build_windows(&episodes, &manifest.val, cfg.data.window, cfg.data.stride, &manifest.stats).unwrap();
        let te = build_windows(&episodes, &manifest.test, cfg.data.window, cfg.data.stride, &manifest.stats).unwrap();
        (manifest, tr, va, te)
    };

    // Episode split: policy and kinematics-only baseline.
    let (_, tr, va, te) = run_split(SplitMode::Episode);
    let mut cva = CvaPolicy::new(&cfg.policy, cfg.seed).unwrap();
    let out = train(
        &mut cva,
        &Batcher::new(&tr, Some(&encoded), cfg.policy.n),
        "train",
        &Batcher::new(&va, Some(&encoded), cfg.policy.n),
        "val",
        &cfg.trainer,
        "desk",
        &encoded.encoder_fingerprint,
        serde_json::json!({}),
        None,
    )
    .unwrap();
    cathnav::train::apply_params(&mut cva.params, &out.best_params).unwrap();
    let (cva_episode, _) = evaluate(
        &cva,
        "cva",
        "episode",
        "zero_shot",
        &te,
        Some(&encoded),
        AblationCondition::Baseline,
        None,
        cfg.trainer.batch_size,
    )
    .unwrap();

    let mut lstm = LstmPolicy::new(&cfg.lstm, cfg.seed).unwrap();
    let out = train(
        &mut lstm,
        &Batcher::new(&tr, None, cfg.lstm.n),
        "train",
        &Batcher::new(&va, None, cfg.lstm.n),
        "val",
        &cfg.trainer,
        "desk",
        "none",
        serde_json::json!({}),
        None,
    )
    .unwrap();
    cathnav::train::apply_params(&mut lstm.params, &out.best_params).unwrap();
    let (lstm_episode, _) = evaluate(
        &lstm,
        "lstm",
        "episode",
        "zero_shot",
        &te,
        None,
        AblationCondition::Baseline,
        None,
        cfg.trainer.batch_size,
    )
    .unwrap();

    // Scenario split: ablation grid on a freshly trained policy.
    let (_, tr, va, te) = run_split(SplitMode::Scenario);
    let mut cva_s = CvaPolicy::new(&cfg.policy, cfg.seed).unwrap();
    let out = train(
        &mut cva_s,
        &Batcher::new(&tr, Some(&encoded), cfg.policy.n),
        "train",
        &Batcher::new(&va, Some(&encoded), cfg.policy.n),
        "val",
        &cfg.trainer,
        "desk",
        &encoded.encoder_fingerprint,
        serde_json::json!({}),
        None,
    )
    .unwrap();
    cathnav::train::apply_params(&mut cva_s.params, &out.best_params).unwrap();
    let false_goals = false_goal_table(&episodes, &encoded, cfg.eval.seed).unwrap();
    let mut ablation = Vec::new();
    for cond in AblationCondition::all() {
        let (report, _) = evaluate(
            &cva_s,
            "cva",
            "scenario",
            "zero_shot",
            &te,
            Some(&encoded),
            cond,
            Some(&false_goals),
            cfg.trainer.batch_size,
        )
        .unwrap();
        ablation.push(report);
    }

    DeskArtifacts {
        dir,
        elapsed_s: started.elapsed().as_secs_f64(),
        total_windows,
        cva_episode,
        lstm_episode,
        ablation,
        seed: cfg.seed,
    }
}

fn mean_r2(r: &MetricsReport) -> f64 {
    assert!(r.dims.iter().all(|d| d.r2_defined), "undefined r2 in {}", r.condition);
    r.dims.iter().map(|d| d.r2).sum::<f64>() / 3.0
}

// -------------------------------------------------------------------------
// 7. Desk-scale learning and baseline parity.
// -------------------------------------------------------------------------

#[test]
fn a7_desk_scale_learning() {
    let desk = desk();
    let cva = &desk.cva_episode;
    let lstm = &desk.lstm_episode;
    let t_r2 = cva.dims[0].r2;
    let k_r2 = cva.dims[2].r2;
    let dt = (lstm.dims[0].r2 - t_r2).abs();
    let dk = (lstm.dims[2].r2 - k_r2).abs();
    let windows_ok = (1600..=2900).contains(&desk.total_windows);
    let ok = t_r2 >= 0.7 && k_r2 >= 0.7 && dt <= 0.15 && dk <= 0.15 && desk.elapsed_s < 1800.0 && windows_ok;
    verdict(
        "7 desk-scale learning",
        ok,
        &format!(
            "translation r2 {t_r2:.3}, knob r2 {k_r2:.3}, baseline deltas {dt:.3}/{dk:.3} (rotation delta {:.3}), {} windows, pipeline {:.0}s",
            (lstm.dims[1].r2 - cva.dims[1].r2).abs(),
            desk.total_windows,
            desk.elapsed_s
        ),
    );
}

// -------------------------------------------------------------------------
// 8. Ablation directionality on the scenario split.
// -------------------------------------------------------------------------

#[test]
fn a8_ablation_directionality() {
    let desk = desk();
    let by_cond = |tag: &str| {
        desk.ablation
            .iter()
            .find(|r| r.condition == tag)
            .unwrap_or_else(|| panic!("missing condition {tag}"))
    };
    let base = mean_r2(by_cond("baseline"));
    let no_vision = mean_r2(by_cond("no_vision"));
    let no_states = mean_r2(by_cond("no_states"));
    let false_goal = mean_r2(by_cond("false_goal"));
    let no_goal = mean_r2(by_cond("no_goal"));

    let vision_drop = base - no_vision;
    let states_drop = base - no_states;
    let goal_direction = false_goal < no_goal;
    if !goal_direction {
        println!(
            "acceptance 8 note: false_goal ({false_goal:.3}) did not fall below no_goal ({no_goal:.3}); flagged at seed {}",
            desk.seed
        );
    }
    verdict(
        "8 ablation directionality",
        vision_drop >= 0.2 && states_drop >= 0.2,
        &format!(
            "baseline mean r2 {base:.3}, no_vision drop {vision_drop:.3}, no_states drop {states_drop:.3}, false_goal {false_goal:.3} vs no_goal {no_goal:.3}"
        ),
    );
}

// -------------------------------------------------------------------------
// 9. Byte-identical reruns at fixed seed and config.
// -------------------------------------------------------------------------

fn synth_dataset(n: usize, p: usize, d: usize) -> (Vec<WindowSample>, Vec<WindowSample>, EncodedEpisodes) {
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let lens = [14usize, 15, 13];
    let mut tokens = Vec::new();
    let mut goals = Vec::new();
    let mut windows = Vec::new();
    for (idx, len) in lens.iter().enumerate() {
        tokens.push(Array3::from_shape_fn((*len, p, d), |_| rng.gen_range(-1.0..1.0)));
        goals.push(Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0)));
        for start in 0..(*len - n) {
            windows.push(WindowSample {
                episode_idx: idx,
                episode_key: (idx, 0),
                start,
                states: Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0)),
                target: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
            });
        }
    }
    let val = windows.split_off(windows.len() - 8);
    let encoded = EncodedEpisodes {
        tokens,
        goals,
        encoder_fingerprint: "synthetic".into(),
        p,
        d,
    };
    (windows, val, encoded)
}

#[test]
fn a9_byte_identical_reruns() {
    let (n, p, d) = (4usize, 3usize, 8usize);
    let cfg = PolicyConfig {
        n,
        p,
        d,
        cross_heads: 2,
        tf_layers: 1,
        tf_heads: 2,
        ffn_dim: 16,
        head_dims: vec![8, 3],
        dropout: 0.1,
        mask_neg: -1e9,
    };
    let tcfg = TrainConfig {
        batch_size: 8,
        max_epochs: 3,
        lr: 1e-3,
        t_max: None,
        early_stop_patience: 5,
        min_delta: 1e-5,
        grad_clip: None,
        seed: 7,
    };
    let (tr, va, encoded) = synth_dataset(n, p, d);

    let run = |out: &std::path::Path| {
        let mut model = CvaPolicy::new(&cfg, 1).unwrap();
        let outcome = train(
            &mut model,
            &Batcher::new(&tr, Some(&encoded), n),
            "train",
            &Batcher::new(&va, Some(&encoded), n),
            "val",
            &tcfg,
            "stats-fp",
            &encoded.encoder_fingerprint,
            serde_json::json!({"check": "rerun"}),
            Some(out),
        )
        .unwrap();
        cathnav::train::apply_params(&mut model.params, &outcome.best_params).unwrap();
        let (report, _) = evaluate(
            &model,
            "cva",
            "synthetic",
            "zero_shot",
            &va,
            Some(&encoded),
            AblationCondition::Baseline,
            None,
            8,
        )
        .unwrap();
        write_results_csv(&out.join("results.csv"), std::slice::from_ref(&report)).unwrap();
    };

    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("run1"), dir.path().join("run2"));
    run(&d1);
    run(&d2);

    let mut all_ok = true;
    let mut detail = String::new();
    for name in ["train_log.jsonl", "best.cnav", "last.cnav", "results.csv"] {
        let b1 = std::fs::read(d1.join(name)).unwrap();
        let b2 = std::fs::read(d2.join(name)).unwrap();
        let same = b1 == b2;
        all_ok &= same;
        detail.push_str(&format!("{name} identical: {same}; "));
    }
    verdict("9 deterministic reruns", all_ok, detail.trim_end_matches("; "));
}

// -------------------------------------------------------------------------
// The LSTM baseline accepts only the unmodified input condition.
// -------------------------------------------------------------------------

#[test]
fn lstm_rejects_ablation_conditions() {
    let cfg = LstmConfig {
        n: 4,
        hidden: 8,
        layers: 1,
    };
    let model = LstmPolicy::new(&cfg, 2).unwrap();
    let (tr, _, _) = synth_dataset(4, 3, 8);
    let err = evaluate(
        &model,
        "lstm",
        "synthetic",
        "zero_shot",
        &tr,
        None,
        AblationCondition::NoVision,
        None,
        8,
    );
    assert!(err.is_err());
}
