//! Command line driver for the catheter navigation pipeline. Each command
//! consumes the artifacts of the previous one, all under one run directory
//! keyed by the configuration hash:
//!
//!   simulate -> corpus/            phantom and expert demonstration episodes
//!   dataset  -> dataset/           split manifests and train statistics
//!   train    -> train_<m>_<s>/     checkpoints and the epoch log
//!   eval     -> eval_<m>_<s>_<c>/  metrics, predictions, plots
//!   ablate   -> ablate_<s>/        condition grid results
//!   plot                           re-renders plots from saved predictions

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use cathnav::config::{EncoderBackend, RunConfig};
use cathnav::data::{
    build_windows, load_corpus, load_states, make_splits, scan_corpus, validate_manifest,
    write_episode, EpisodeKey, LoadedEpisode, SplitManifest, SplitMode, WindowSample, DIM_NAMES,
};
use cathnav::encoder::{make_encoder, FrameEncoder};
use cathnav::error::{Error, Result};
use cathnav::eval::{
    emit_plots, emit_violin, evaluate, false_goal_table, write_results_csv, AblationCondition,
    MetricsReport,
};
use cathnav::policy::{CvaPolicy, LstmPolicy};
use cathnav::sim::{build_phantom, generate_episode, Renderer};
use cathnav::train::checkpoint::require_stats_match;
use cathnav::train::{
    apply_params, encode_episodes, load_checkpoint, train, Batcher, EncodedEpisodes,
    SupervisedModel,
};

#[derive(Parser)]
#[command(
    name = "cathnav",
    version,
    about = "Goal-conditioned behavior cloning for catheter navigation",
    after_help = config_reference()
)]
struct Cli {
    /// TOML configuration file; omitted fields take their defaults.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "desk")]
    config: Option<PathBuf>,

    /// Start from the reduced desk-scale preset instead of the full defaults.
    #[arg(long, global = true)]
    desk: bool,

    /// Override the global seed (also applied to the trainer and eval seeds).
    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Override the output root directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Override the encoder backend.
    #[arg(long, global = true, value_enum, value_name = "BACKEND")]
    encoder: Option<EncoderArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the vessel phantom and the expert demonstration corpus.
    Simulate,
    /// Build both split manifests and training statistics from the corpus.
    Dataset,
    /// Train a policy on a dataset split.
    Train {
        #[arg(long, value_enum, default_value_t = ModelArg::Cva)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Scenario)]
        split: SplitArg,
    },
    /// Evaluate a trained policy on the test split: metrics and plots.
    Eval {
        #[arg(long, value_enum, default_value_t = ModelArg::Cva)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Scenario)]
        split: SplitArg,
        /// baseline, false_goal, no_goal, no_vision, or no_states.
        #[arg(long, default_value = "baseline", value_name = "TAG")]
        condition: String,
    },
    /// Run the full ablation grid against the trained policy.
    Ablate {
        #[arg(long, value_enum, default_value_t = SplitArg::Scenario)]
        split: SplitArg,
    },
    /// Re-render plots from a saved evaluation.
    Plot {
        #[arg(long, value_enum, default_value_t = ModelArg::Cva)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = SplitArg::Scenario)]
        split: SplitArg,
        #[arg(long, default_value = "baseline", value_name = "TAG")]
        condition: String,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Cva,
    Lstm,
}

impl ModelArg {
    fn tag(self) -> &'static str {
        match self {
            ModelArg::Cva => "cva",
            ModelArg::Lstm => "lstm",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Episode,
    Scenario,
}

impl SplitArg {
    fn mode(self) -> SplitMode {
        match self {
            SplitArg::Episode => SplitMode::Episode,
            SplitArg::Scenario => SplitMode::Scenario,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum EncoderArg {
    Pretrained,
    Stub,
}

fn config_reference() -> String {
    format!(
        "Configuration fields and their defaults (TOML, pass a file with --config):\n\n{}",
        RunConfig::default().to_toml()
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, run_dir) = effective_config(&cli)?;
    std::fs::create_dir_all(&run_dir)?;
    std::fs::write(run_dir.join("config.toml"), cfg.to_toml())?;

    match &cli.command {
        Command::Simulate => cmd_simulate(&cfg, &run_dir),
        Command::Dataset => cmd_dataset(&cfg, &run_dir),
        Command::Train { model, split } => cmd_train(&cfg, &run_dir, *model, *split),
        Command::Eval {
            model,
            split,
            condition,
        } => cmd_eval(&cfg, &run_dir, *model, *split, condition),
        Command::Ablate { split } => cmd_ablate(&cfg, &run_dir, *split),
        Command::Plot {
            model,
            split,
            condition,
        } => cmd_plot(&cfg, &run_dir, *model, *split, condition),
    }
}

/// Applies file config and flag overrides, validates, and resolves the run
/// directory `out_root/<run_id>`.
fn effective_config(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            RunConfig::from_toml(&text)?
        }
        None if cli.desk => RunConfig::desk(),
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.trainer.seed = s;
        cfg.eval.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.out_root = out.display().to_string();
    }
    if let Some(enc) = cli.encoder {
        cfg.encoder.backend = match enc {
            EncoderArg::Pretrained => EncoderBackend::Pretrained,
            EncoderArg::Stub => EncoderBackend::Stub,
        };
    }
    if cfg.out_root.is_empty() {
        cfg.out_root = "runs".into();
    }
    cfg.validate()?;
    let run_dir = Path::new(&cfg.out_root).join(cfg.run_id());
    Ok((cfg, run_dir))
}

/// Splitmix finalizer; distinct per-episode seeds from one base.
fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ b.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cmd_simulate(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let corpus = run_dir.join("corpus");
    std::fs::create_dir_all(&corpus)?;
    let map = build_phantom(cfg.seed, cfg.sim.n_targets, cfg.sim.world_size)?;
    map.save(&corpus.join("phantom.json"))?;
    let renderer = Renderer::new(&map, cfg.sim.resolution)?;

    let mut written = 0usize;
    let mut failures = 0usize;
    // Target ids are 1-based leaf labels.
    for target in 1..=cfg.sim.n_targets {
        for rep in 0..cfg.sim.repetitions {
            let seed = mix_seed(cfg.seed, target as u64, rep as u64);
            match generate_episode(&map, &renderer, target, rep, seed, &cfg.sim) {
                Ok(ep) => {
                    write_episode(&corpus, &ep, cfg.sim.resolution)?;
                    written += 1;
                }
                Err(e) => {
                    eprintln!("warning: scenario {target} repetition {rep} dropped: {e}");
                    failures += 1;
                }
            }
        }
    }
    if written == 0 {
        return Err(Error::Simulation("no episode succeeded".into()));
    }
    println!(
        "wrote {written} episodes ({failures} expert failures) to {}",
        corpus.display()
    );
    Ok(())
}

fn cmd_dataset(cfg: &RunConfig, run_dir: &Path) -> Result<()> {
    let corpus = run_dir.join("corpus");
    let records = scan_corpus(&corpus)?;
    let mut episodes = Vec::new();
    for record in records {
        match load_states(&record) {
            Ok(states) => episodes.push(LoadedEpisode { record, states }),
            Err(e) => eprintln!(
                "warning: skipping corrupt episode {:?}: {e}",
                record.key()
            ),
        }
    }
    let dataset_dir = run_dir.join("dataset");
    std::fs::create_dir_all(&dataset_dir)?;
    for mode in [SplitMode::Scenario, SplitMode::Episode] {
        let manifest = make_splits(&episodes, mode, cfg.data.ratios, cfg.seed)?;
        let path = dataset_dir.join(format!("manifest_{mode}.json"));
        manifest.save(&path)?;
        println!(
            "{mode} split: {} train / {} val / {} test episodes -> {}",
            manifest.train.len(),
            manifest.val.len(),
            manifest.test.len(),
            path.display()
        );
    }
    Ok(())
}

struct SplitData {
    episodes: Vec<LoadedEpisode>,
    manifest: SplitManifest,
}

fn load_split(run_dir: &Path, mode: SplitMode) -> Result<SplitData> {
    let episodes = load_corpus(&run_dir.join("corpus"))?;
    let path = run_dir.join("dataset").join(format!("manifest_{mode}.json"));
    if !path.exists() {
        return Err(Error::Dataset(format!(
            "missing split manifest {}; run the dataset command first",
            path.display()
        )));
    }
    let manifest = SplitManifest::load(&path)?;
    validate_manifest(&manifest)?;
    Ok(SplitData { episodes, manifest })
}

fn split_windows(cfg: &RunConfig, data: &SplitData, keys: &[EpisodeKey]) -> Result<Vec<WindowSample>> {
    build_windows(
        &data.episodes,
        keys,
        cfg.data.window,
        cfg.data.stride,
        &data.manifest.stats,
    )
}

/// Encodes goals for every episode and frame tokens for the keyed ones.
fn encode_selected(
    encoder: &dyn FrameEncoder,
    episodes: &[LoadedEpisode],
    keys: &BTreeSet<EpisodeKey>,
) -> Result<EncodedEpisodes> {
    encode_episodes(encoder, episodes, |idx| keys.contains(&episodes[idx].key()))
}

fn split_states(data: &SplitData, keys: &[EpisodeKey]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for ep in &data.episodes {
        if keys.contains(&ep.key()) {
            out.extend_from_slice(&ep.states);
        }
    }
    out
}

/// Config echo stored in checkpoint metadata. Drops out_root so the echo
/// matches run identity, which also excludes the output location.
fn config_echo(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut id_cfg = cfg.clone();
    id_cfg.out_root = String::new();
    Ok(serde_json::to_value(&id_cfg)?)
}

fn train_dir(run_dir: &Path, model: ModelArg, split: SplitArg) -> PathBuf {
    run_dir.join(format!("train_{}_{}", model.tag(), split.mode()))
}

fn eval_dir(run_dir: &Path, model: ModelArg, split: SplitArg, condition: &str) -> PathBuf {
    run_dir.join(format!("eval_{}_{}_{condition}", model.tag(), split.mode()))
}

fn cmd_train(cfg: &RunConfig, run_dir: &Path, model: ModelArg, split: SplitArg) -> Result<()> {
    let data = load_split(run_dir, split.mode())?;
    let train_windows = split_windows(cfg, &data, &data.manifest.train)?;
    let val_windows = split_windows(cfg, &data, &data.manifest.val)?;
    let out_dir = train_dir(run_dir, model, split);
    let echo = config_echo(cfg)?;
    let n = cfg.policy.n;

    let outcome = match model {
        ModelArg::Cva => {
            let encoder = make_encoder(&cfg.encoder, cfg.sim.resolution)?;
            let keys: BTreeSet<EpisodeKey> = data
                .manifest
                .train
                .iter()
                .chain(data.manifest.val.iter())
                .copied()
                .collect();
            let encoded = encode_selected(encoder.as_ref(), &data.episodes, &keys)?;
            let tb = Batcher::new(&train_windows, Some(&encoded), n);
            let vb = Batcher::new(&val_windows, Some(&encoded), n);
            let mut policy = CvaPolicy::new(&cfg.policy, cfg.seed)?;
            train(
                &mut policy,
                &tb,
                "train",
                &vb,
                "val",
                &cfg.trainer,
                &data.manifest.stats_fingerprint,
                &encoded.encoder_fingerprint,
                echo,
                Some(&out_dir),
            )?
        }
        ModelArg::Lstm => {
            let tb = Batcher::new(&train_windows, None, n);
            let vb = Batcher::new(&val_windows, None, n);
            let mut policy = LstmPolicy::new(&cfg.lstm, cfg.seed)?;
            train(
                &mut policy,
                &tb,
                "train",
                &vb,
                "val",
                &cfg.trainer,
                &data.manifest.stats_fingerprint,
                "none",
                echo,
                Some(&out_dir),
            )?
        }
    };
    println!(
        "trained {} on the {} split: best epoch {} val mse {:.6e}{}",
        model.tag(),
        split.mode(),
        outcome.best_epoch,
        outcome.best_val,
        if outcome.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    println!("checkpoints and log in {}", out_dir.display());
    Ok(())
}

/// Loads best.cnav for the model/split pair and checks its provenance
/// against the manifest statistics.
fn load_trained(
    run_dir: &Path,
    model: ModelArg,
    split: SplitArg,
    data: &SplitData,
) -> Result<(cathnav::nn::TensorMap, cathnav::train::CheckpointMeta)> {
    let path = train_dir(run_dir, model, split).join("best.cnav");
    if !path.exists() {
        return Err(Error::Dataset(format!(
            "missing checkpoint {}; run the train command first",
            path.display()
        )));
    }
    let (params, meta) = load_checkpoint(&path)?;
    if meta.kind != model.tag() {
        return Err(Error::InvalidArgument(format!(
            "checkpoint {} holds a {} model, expected {}",
            path.display(),
            meta.kind,
            model.tag()
        )));
    }
    require_stats_match(&meta, &data.manifest.stats_fingerprint)?;
    Ok((params, meta))
}

fn require_encoder_match(meta_fp: &str, encoder: &dyn FrameEncoder) -> Result<()> {
    let actual = encoder.fingerprint();
    if meta_fp != actual {
        return Err(Error::FingerprintMismatch {
            expected: meta_fp.to_string(),
            actual,
        });
    }
    Ok(())
}

fn cmd_eval(
    cfg: &RunConfig,
    run_dir: &Path,
    model: ModelArg,
    split: SplitArg,
    condition: &str,
) -> Result<()> {
    let cond = AblationCondition::parse(condition)?;
    let data = load_split(run_dir, split.mode())?;
    let (params, meta) = load_trained(run_dir, model, split, &data)?;
    let test_windows = split_windows(cfg, &data, &data.manifest.test)?;
    let out = eval_dir(run_dir, model, split, cond.tag());
    std::fs::create_dir_all(&out)?;
    let split_name = split.mode().to_string();

    let (report, preds) = match model {
        ModelArg::Cva => {
            let encoder = make_encoder(&cfg.encoder, cfg.sim.resolution)?;
            require_encoder_match(&meta.encoder_fingerprint, encoder.as_ref())?;
            let keys: BTreeSet<EpisodeKey> = data.manifest.test.iter().copied().collect();
            let encoded = encode_selected(encoder.as_ref(), &data.episodes, &keys)?;
            let false_goals = if cond == AblationCondition::FalseGoal {
                Some(false_goal_table(&data.episodes, &encoded, cfg.eval.seed)?)
            } else {
                None
            };
            let mut policy = CvaPolicy::new(&cfg.policy, cfg.seed)?;
            apply_params(policy.params_mut(), &params)?;
            evaluate(
                &policy,
                model.tag(),
                &split_name,
                "zero_shot",
                &test_windows,
                Some(&encoded),
                cond,
                false_goals.as_deref(),
                cfg.trainer.batch_size,
            )?
        }
        ModelArg::Lstm => {
            let mut policy = LstmPolicy::new(&cfg.lstm, cfg.seed)?;
            apply_params(policy.params_mut(), &params)?;
            evaluate(
                &policy,
                model.tag(),
                &split_name,
                "zero_shot",
                &test_windows,
                None,
                cond,
                None,
                cfg.trainer.batch_size,
            )?
        }
    };

    let targets = cathnav::eval::targets_of(&test_windows);
    write_results_csv(&out.join("results.csv"), std::slice::from_ref(&report))?;
    write_predictions_csv(&out.join("predictions.csv"), &preds, &targets)?;
    let plots = out.join("plots");
    emit_plots(&preds, &targets, cfg.eval.hist_bins, &plots)?;
    emit_violin("test", &split_states(&data, &data.manifest.test), &plots)?;
    print_report(&report);
    println!("results, predictions, and plots in {}", out.display());
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, run_dir: &Path, split: SplitArg) -> Result<()> {
    let data = load_split(run_dir, split.mode())?;
    let (params, meta) = load_trained(run_dir, ModelArg::Cva, split, &data)?;
    let test_windows = split_windows(cfg, &data, &data.manifest.test)?;
    let out_dir = run_dir.join(format!("ablate_{}", split.mode()));
    std::fs::create_dir_all(&out_dir)?;
    let split_name = split.mode().to_string();

    let encoder = make_encoder(&cfg.encoder, cfg.sim.resolution)?;
    require_encoder_match(&meta.encoder_fingerprint, encoder.as_ref())?;
    let keys: BTreeSet<EpisodeKey> = if cfg.eval.retrain {
        data.manifest
            .train
            .iter()
            .chain(data.manifest.val.iter())
            .chain(data.manifest.test.iter())
            .copied()
            .collect()
    } else {
        data.manifest.test.iter().copied().collect()
    };
    let encoded = encode_selected(encoder.as_ref(), &data.episodes, &keys)?;
    let false_goals = false_goal_table(&data.episodes, &encoded, cfg.eval.seed)?;

    let mut policy = CvaPolicy::new(&cfg.policy, cfg.seed)?;
    apply_params(policy.params_mut(), &params)?;

    let mut reports: Vec<MetricsReport> = Vec::new();
    for cond in AblationCondition::all() {
        let (report, _) = evaluate(
            &policy,
            "cva",
            &split_name,
            "zero_shot",
            &test_windows,
            Some(&encoded),
            cond,
            Some(&false_goals),
            cfg.trainer.batch_size,
        )?;
        print_report(&report);
        reports.push(report);
    }

    if cfg.eval.retrain {
        let train_windows = split_windows(cfg, &data, &data.manifest.train)?;
        let val_windows = split_windows(cfg, &data, &data.manifest.val)?;
        let echo = config_echo(cfg)?;
        for cond in AblationCondition::all() {
            if cond == AblationCondition::Baseline {
                continue;
            }
            let tb = cond.configure(
                Batcher::new(&train_windows, Some(&encoded), cfg.policy.n),
                Some(&false_goals),
            )?;
            let vb = cond.configure(
                Batcher::new(&val_windows, Some(&encoded), cfg.policy.n),
                Some(&false_goals),
            )?;
            let mut fresh = CvaPolicy::new(&cfg.policy, cfg.seed)?;
            let sub = out_dir.join(format!("retrain_{}", cond.tag()));
            let outcome = train(
                &mut fresh,
                &tb,
                "train",
                &vb,
                "val",
                &cfg.trainer,
                &data.manifest.stats_fingerprint,
                &encoded.encoder_fingerprint,
                echo.clone(),
                Some(&sub),
            )?;
            apply_params(fresh.params_mut(), &outcome.best_params)?;
            let (report, _) = evaluate(
                &fresh,
                "cva",
                &split_name,
                "retrain",
                &test_windows,
                Some(&encoded),
                cond,
                Some(&false_goals),
                cfg.trainer.batch_size,
            )?;
            print_report(&report);
            reports.push(report);
        }
    }

    write_results_csv(&out_dir.join("results.csv"), &reports)?;
    print_degradation(&reports);
    println!("ablation grid in {}", out_dir.join("results.csv").display());
    Ok(())
}

fn cmd_plot(
    cfg: &RunConfig,
    run_dir: &Path,
    model: ModelArg,
    split: SplitArg,
    condition: &str,
) -> Result<()> {
    let cond = AblationCondition::parse(condition)?;
    let out = eval_dir(run_dir, model, split, cond.tag());
    let pred_path = out.join("predictions.csv");
    if !pred_path.exists() {
        return Err(Error::Dataset(format!(
            "missing {}; run the eval command first",
            pred_path.display()
        )));
    }
    let (preds, targets) = read_predictions_csv(&pred_path)?;
    let plots = out.join("plots");
    emit_plots(&preds, &targets, cfg.eval.hist_bins, &plots)?;
    let data = load_split(run_dir, split.mode())?;
    emit_violin("test", &split_states(&data, &data.manifest.test), &plots)?;
    println!("wrote plots to {}", plots.display());
    Ok(())
}

fn write_predictions_csv(path: &Path, preds: &Array2<f64>, targets: &Array2<f64>) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    let header: Vec<String> = DIM_NAMES
        .iter()
        .map(|d| format!("pred_{d}"))
        .chain(DIM_NAMES.iter().map(|d| format!("target_{d}")))
        .collect();
    writeln!(f, "{}", header.join(","))?;
    for i in 0..preds.nrows() {
        let row: Vec<String> = (0..3)
            .map(|j| format!("{:.17e}", preds[[i, j]]))
            .chain((0..3).map(|j| format!("{:.17e}", targets[[i, j]])))
            .collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

fn read_predictions_csv(path: &Path) -> Result<(Array2<f64>, Array2<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<[f64; 6]> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Dataset(format!("bad float in {}: {e}", path.display())))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 6 {
            return Err(Error::Dataset(format!(
                "{} line {} has {} columns, expected 6",
                path.display(),
                i + 1,
                vals.len()
            )));
        }
        rows.push([vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]]);
    }
    let mut preds = Array2::zeros((rows.len(), 3));
    let mut targets = Array2::zeros((rows.len(), 3));
    for (i, r) in rows.iter().enumerate() {
        for j in 0..3 {
            preds[[i, j]] = r[j];
            targets[[i, j]] = r[j + 3];
        }
    }
    Ok((preds, targets))
}

fn print_report(r: &MetricsReport) {
    println!(
        "model={} split={} condition={} mode={} samples={}",
        r.model, r.split, r.condition, r.mode, r.n_samples
    );
    for (j, name) in DIM_NAMES.iter().enumerate() {
        let d = &r.dims[j];
        let r2 = if d.r2_defined {
            format!("{:.4}", d.r2)
        } else {
            "undefined".into()
        };
        println!(
            "  {name:<12} mse={:.6} rmse={:.6} mae={:.6} r2={r2}",
            d.mse, d.rmse, d.mae
        );
    }
}

fn mean_r2(r: &MetricsReport) -> Option<f64> {
    if r.dims.iter().any(|d| !d.r2_defined) {
        return None;
    }
    Some(r.dims.iter().map(|d| d.r2).sum::<f64>() / 3.0)
}

fn print_degradation(reports: &[MetricsReport]) {
    let baseline = reports
        .iter()
        .find(|r| r.condition == "baseline" && r.mode == "zero_shot");
    let Some(base) = baseline.and_then(mean_r2) else {
        return;
    };
    println!("mean r2 vs baseline ({base:.4}):");
    for r in reports {
        if r.condition == "baseline" && r.mode == "zero_shot" {
            continue;
        }
        match mean_r2(r) {
            Some(m) => println!(
                "  {:<12} {:<9} {m:.4} ({:+.4})",
                r.condition,
                r.mode,
                m - base
            ),
            None => println!("  {:<12} {:<9} undefined", r.condition, r.mode),
        }
    }
}
