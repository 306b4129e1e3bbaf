//! The experiment grid: {loss} × {augmentation on/off} × {shots} × {seeds},
//! with optional hyper-grid search selected on validation accuracy, full-test
//! evaluation, per-run artifacts, and mean ± std aggregation.
//!
//! Every run is a pure function of the spec, so a rerun reproduces the
//! aggregate CSV byte for byte. Workers only parallelize independent runs;
//! results are consumed in canonical sorted order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dipa_core::data::{self, ClassMap, GeneratorConfig, SplitDataset, TimeSeriesSample};
use dipa_core::dipa::{DipaConfig, LossKind};
use dipa_core::metrics::ConfusionMatrix;
use dipa_core::model::{forward, ModelConfig, Parameters};
use dipa_core::rng::Rng;
use dipa_core::trainer::{self, argmax, TrainConfig, TrainTrace};

use crate::checkpoint;
use crate::dataset_io;
use crate::error::{Error, Result};
use crate::report;

const STREAM_SPLIT: u64 = 0x5000;
const STREAM_INIT: u64 = 0x6000;
const STREAM_HEAD: u64 = 0x7000;
const STREAM_EPISODE: u64 = 0x8000;

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Regime {
    Scratch,
    PretrainFinetune,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Scratch => write!(f, "scratch"),
            Regime::PretrainFinetune => write!(f, "pretrain-finetune"),
        }
    }
}

impl FromStr for Regime {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scratch" => Ok(Regime::Scratch),
            "pretrain-finetune" => Ok(Regime::PretrainFinetune),
            other => Err(format!(
                "unknown regime `{other}` (expected \"scratch\" or \"pretrain-finetune\")"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossName {
    Ce,
    Fl,
}

impl LossName {
    pub fn kind(self) -> LossKind {
        match self {
            LossName::Ce => LossKind::CrossEntropy,
            LossName::Fl => LossKind::Focal,
        }
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossName::Ce => write!(f, "ce"),
            LossName::Fl => write!(f, "fl"),
        }
    }
}

impl FromStr for LossName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ce" => Ok(LossName::Ce),
            "fl" => Ok(LossName::Fl),
            other => Err(format!("unknown loss `{other}` (expected \"ce\" or \"fl\")")),
        }
    }
}

/// A benchmark task: train on at most `k` samples per class, or on the full
/// train split (`All`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shot {
    K(usize),
    All,
}

impl Shot {
    /// Sort key placing numeric shots in order and `all` last.
    pub fn ord_key(&self) -> (u8, usize) {
        match self {
            Shot::K(k) => (0, *k),
            Shot::All => (1, 0),
        }
    }
}

impl fmt::Display for Shot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shot::K(k) => write!(f, "{k}"),
            Shot::All => write!(f, "all"),
        }
    }
}

impl FromStr for Shot {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all" {
            return Ok(Shot::All);
        }
        s.parse::<usize>()
            .map(Shot::K)
            .map_err(|_| format!("unknown shot `{s}`"))
    }
}

/// Where the benchmark data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Generator(GeneratorConfig),
    Paths {
        train: PathBuf,
        validation: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub num_blocks: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainSpec {
    pub generator: GeneratorConfig,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub regime: Regime,
    pub shots: Vec<Shot>,
    pub losses: Vec<LossName>,
    pub dipa_axis: Vec<bool>,
    pub seeds: Vec<u64>,
    pub data: DataSource,
    pub model: ModelDims,
    pub learning_rates: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_subsample: usize,
    pub focal_gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub taus: Vec<f64>,
    pub pretrain: Option<PretrainSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct RunKey {
    pub regime: Regime,
    pub loss: LossName,
    pub dipa: bool,
    pub shot_key: (u8, usize),
    pub seed: u64,
}

impl RunKey {
    pub fn shot(&self) -> Shot {
        match self.shot_key {
            (0, k) => Shot::K(k),
            _ => Shot::All,
        }
    }

    /// Directory-friendly name, e.g. `scratch-ce-dipa-k5-s42`.
    pub fn slug(&self) -> String {
        format!(
            "{}-{}{}-k{}-s{}",
            self.regime,
            self.loss,
            if self.dipa { "-dipa" } else { "" },
            self.shot(),
            self.seed
        )
    }
}

/// One successful run's test metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: RunKey,
    pub accuracy: f64,
    pub kappa: f64,
    pub macro_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub key: RunKey,
    pub error: String,
}

/// Aggregated cell: mean ± std over the seeds that succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub regime: Regime,
    pub loss: LossName,
    pub dipa: bool,
    pub shot_key: (u8, usize),
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    /// Metrics on which this cell is the best of its (regime, shot) group.
    pub best: Vec<&'static str>,
}

impl CellAggregate {
    pub fn shot(&self) -> Shot {
        match self.shot_key {
            (0, k) => Shot::K(k),
            _ => Shot::All,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<RunRecord>,
    pub failures: Vec<Failure>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultTable {
    /// Group rows by cell, aggregate over seeds, and flag the best cell per
    /// (regime, shot) and metric.
    pub fn aggregate(&self) -> Vec<CellAggregate> {
        let mut groups: BTreeMap<(Regime, LossName, bool, (u8, usize)), Vec<&RunRecord>> =
            BTreeMap::new();
        for row in &self.rows {
            groups
                .entry((row.key.regime, row.key.loss, row.key.dipa, row.key.shot_key))
                .or_default()
                .push(row);
        }
        let mut cells: Vec<CellAggregate> = groups
            .into_iter()
            .map(|((regime, loss, dipa, shot_key), rows)| {
                let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
                let kappa: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
                let f1: Vec<f64> = rows.iter().map(|r| r.macro_f1).collect();
                let (accuracy_mean, accuracy_std) = mean_std(&acc);
                let (kappa_mean, kappa_std) = mean_std(&kappa);
                let (macro_f1_mean, macro_f1_std) = mean_std(&f1);
                CellAggregate {
                    regime,
                    loss,
                    dipa,
                    shot_key,
                    runs: rows.len(),
                    accuracy_mean,
                    accuracy_std,
                    kappa_mean,
                    kappa_std,
                    macro_f1_mean,
                    macro_f1_std,
                    best: Vec::new(),
                }
            })
            .collect();

        // Flag the best mean per (regime, shot) for each metric.
        let mut group_max: BTreeMap<(Regime, (u8, usize)), [f64; 3]> = BTreeMap::new();
        for cell in &cells {
            let entry = group_max
                .entry((cell.regime, cell.shot_key))
                .or_insert([f64::NEG_INFINITY; 3]);
            entry[0] = entry[0].max(cell.accuracy_mean);
            entry[1] = entry[1].max(cell.kappa_mean);
            entry[2] = entry[2].max(cell.macro_f1_mean);
        }
        for cell in &mut cells {
            let maxima = group_max[&(cell.regime, cell.shot_key)];
            for (metric, value, max) in [
                ("accuracy", cell.accuracy_mean, maxima[0]),
                ("kappa", cell.kappa_mean, maxima[1]),
                ("macro_f1", cell.macro_f1_mean, maxima[2]),
            ] {
                if (value - max).abs() <= 1e-12 {
                    cell.best.push(metric);
                }
            }
        }
        cells
    }
}

/// Evaluate a trained head over the full test split, mapping local
/// predictions back to the global class space so zero-shot classes keep
/// their rows in the confusion matrix.
pub fn evaluate_on_test(
    params: &Parameters,
    test: &[TimeSeriesSample],
    map: &ClassMap,
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(num_classes)?;
    for chunk in test.chunks(EVAL_CHUNK) {
        let (logits, _) = forward(chunk, params)?;
        for (z, sample) in logits.iter().zip(chunk) {
            let predicted = map.global(argmax(z));
            cm.record(sample.label(), predicted)?;
        }
    }
    Ok(cm)
}

struct HyperCombo {
    learning_rate: f64,
    focal_gamma: f64,
    alpha: f64,
    tau: f64,
}

impl HyperCombo {
    fn describe(&self, loss: LossName, dipa: bool) -> String {
        let mut s = format!("learning_rate={}", self.learning_rate);
        if loss == LossName::Fl {
            s.push_str(&format!(" focal_gamma={}", self.focal_gamma));
        }
        if dipa {
            s.push_str(&format!(" alpha={} tau={}", self.alpha, self.tau));
        }
        s
    }
}

fn hyper_grid(spec: &ExperimentSpec, loss: LossName, dipa: bool) -> Vec<HyperCombo> {
    let gammas: &[f64] = if loss == LossName::Fl {
        &spec.focal_gammas
    } else {
        &spec.focal_gammas[..1]
    };
    let alphas: &[f64] = if dipa { &spec.alphas } else { &spec.alphas[..1] };
    let taus: &[f64] = if dipa { &spec.taus } else { &spec.taus[..1] };
    let mut out = Vec::new();
    for &learning_rate in &spec.learning_rates {
        for &focal_gamma in gammas {
            for &alpha in alphas {
                for &tau in taus {
                    out.push(HyperCombo {
                        learning_rate,
                        focal_gamma,
                        alpha,
                        tau,
                    });
                }
            }
        }
    }
    out
}

/// Everything a run task needs, shared read-only across workers.
struct GridContext {
    spec: ExperimentSpec,
    model_cfg: ModelConfig,
    train_local: Vec<TimeSeriesSample>,
    val_local: Vec<TimeSeriesSample>,
    test: Vec<TimeSeriesSample>,
    class_map: ClassMap,
    num_classes_global: usize,
    pretrained: BTreeMap<u64, Parameters>,
    out_dir: PathBuf,
}

struct TaskOutput {
    record: RunRecord,
}

fn episode_stream(shot: Shot) -> u64 {
    match shot {
        Shot::K(k) => STREAM_EPISODE + 1 + k as u64,
        Shot::All => STREAM_EPISODE,
    }
}

fn build_episode(ctx: &GridContext, shot: Shot, seed: u64) -> Result<Vec<TimeSeriesSample>> {
    match shot {
        Shot::All => Ok(ctx.train_local.clone()),
        Shot::K(k) => {
            let mut rng = Rng::with_stream(seed, episode_stream(shot));
            Ok(data::sample_few_shot(&ctx.train_local, k, &mut rng)?)
        }
    }
}

fn run_task(ctx: &GridContext, key: &RunKey) -> Result<TaskOutput> {
    let episode = build_episode(ctx, key.shot(), key.seed)?;
    let combos = hyper_grid(&ctx.spec, key.loss, key.dipa);

    let mut hyper_log = String::new();
    let mut best: Option<(f64, Parameters, TrainTrace, usize)> = None;
    for (combo_idx, combo) in combos.iter().enumerate() {
        let cfg = TrainConfig {
            loss_kind: key.loss.kind(),
            focal_gamma: combo.focal_gamma,
            dipa: DipaConfig {
                alpha: combo.alpha,
                tau: combo.tau,
                enabled: key.dipa,
            },
            learning_rate: combo.learning_rate,
            batch_size: ctx.spec.batch_size,
            max_epochs: ctx.spec.max_epochs,
            patience: ctx.spec.patience,
            seed: key.seed,
            validation_subsample: ctx.spec.validation_subsample,
        };

        let mut params = match key.regime {
            Regime::Scratch => {
                Parameters::init(&ctx.model_cfg, &mut Rng::with_stream(key.seed, STREAM_INIT))?
            }
            Regime::PretrainFinetune => {
                let mut p = ctx
                    .pretrained
                    .get(&key.seed)
                    .expect("pretrained parameters exist per seed")
                    .clone();
                p.reset_head(
                    ctx.class_map.len(),
                    &mut Rng::with_stream(key.seed, STREAM_HEAD),
                )?;
                p
            }
        };

        let trace = trainer::train(&mut params, &episode, &ctx.val_local, &cfg)?;
        if trace.diverged() {
            hyper_log.push_str(&format!(
                "candidate {} -> diverged: {}\n",
                combo.describe(key.loss, key.dipa),
                trace.diagnostic.as_deref().unwrap_or("unknown")
            ));
            continue;
        }
        hyper_log.push_str(&format!(
            "candidate {} -> val_accuracy={}\n",
            combo.describe(key.loss, key.dipa),
            trace.best_val_accuracy
        ));
        let better = match &best {
            Some((acc, _, _, _)) => trace.best_val_accuracy > *acc,
            None => true,
        };
        if better {
            best = Some((trace.best_val_accuracy, params, trace, combo_idx));
        }
    }

    let (_, params, trace, combo_idx) = best.ok_or_else(|| {
        dipa_core::Error::InvalidArgument("every hyper candidate diverged".into())
    })?;
    hyper_log.push_str(&format!(
        "selected {}\n",
        combos[combo_idx].describe(key.loss, key.dipa)
    ));

    let cm = evaluate_on_test(&params, &ctx.test, &ctx.class_map, ctx.num_classes_global)?;
    let record = RunRecord {
        key: key.clone(),
        accuracy: cm.accuracy()?,
        kappa: cm.cohen_kappa()?,
        macro_f1: cm.macro_f1()?,
        best_epoch: trace.best_epoch,
        epochs_run: trace.epochs_run(),
    };

    // Per-run artifacts: training trace, confusion matrix, checkpoint of the
    // selected model, and the hyper-selection log.
    let run_dir = ctx.out_dir.join("runs").join(key.slug());
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_trace(&run_dir.join("trace.csv"), &trace)?;
    write_confusion(&run_dir.join("confusion.txt"), &cm)?;
    checkpoint::save(&params, &run_dir.join("model.ckpt"))?;
    fs::write(run_dir.join("hyper.txt"), &hyper_log)
        .map_err(|e| Error::io(run_dir.join("hyper.txt"), e))?;

    Ok(TaskOutput { record })
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    use std::fmt::Write;
    let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
    for e in &trace.epochs {
        writeln!(
            out,
            "{},{},{},{}",
            e.epoch, e.train_loss, e.val_loss, e.val_accuracy
        )
        .unwrap();
    }
    writeln!(out, "# best_epoch {}", trace.best_epoch).unwrap();
    writeln!(out, "# best_val_accuracy_epoch {}", trace.best_val_accuracy_epoch).unwrap();
    writeln!(out, "# stop {}", trace.stop_reason).unwrap();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_confusion(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    use std::fmt::Write;
    let mut out = format!("classes {}\n", cm.classes());
    for r in 0..cm.classes() {
        for c in 0..cm.classes() {
            if c > 0 {
                out.push(' ');
            }
            write!(out, "{}", cm.count(r, c)).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load or generate the benchmark splits for a spec.
pub fn prepare_data(spec: &ExperimentSpec) -> Result<SplitDataset> {
    match &spec.data {
        DataSource::Generator(cfg) => {
            let dataset = data::generate(cfg)?;
            let mut rng = Rng::with_stream(cfg.seed, STREAM_SPLIT);
            Ok(data::split(
                dataset,
                (0.6, 0.2, 0.2),
                cfg.test_only_classes,
                &mut rng,
            )?)
        }
        DataSource::Paths {
            train,
            validation,
            test,
        } => dataset_io::load_split_dataset(train, validation, test),
    }
}

fn pretrain_per_seed(
    spec: &ExperimentSpec,
    dims: &ModelDims,
    channels: usize,
) -> Result<BTreeMap<u64, Parameters>> {
    let mut out = BTreeMap::new();
    let Some(pre) = &spec.pretrain else {
        return Ok(out);
    };
    if pre.generator.channels != channels {
        return Err(Error::config(format!(
            "pretrain generator has {} channels, target data has {channels}",
            pre.generator.channels
        )));
    }
    let source = data::generate(&pre.generator)?;
    let mut rng = Rng::with_stream(pre.generator.seed, STREAM_SPLIT);
    let source_split = data::split(
        source,
        (0.6, 0.2, 0.2),
        pre.generator.test_only_classes,
        &mut rng,
    )?;
    let map = ClassMap::from_samples(&source_split.train);
    let src_train = map.relabel(&source_split.train);
    let src_val = map.relabel(&source_split.validation);

    let model_cfg = ModelConfig {
        channels,
        embed_dim: dims.embed_dim,
        num_heads: dims.num_heads,
        ffn_hidden: dims.ffn_hidden,
        num_blocks: dims.num_blocks,
        max_len: dims.max_len,
        num_classes: map.len(),
    };
    for &seed in &spec.seeds {
        let cfg = TrainConfig {
            loss_kind: LossKind::CrossEntropy,
            focal_gamma: 0.0,
            dipa: DipaConfig::disabled(),
            learning_rate: pre.learning_rate,
            batch_size: spec.batch_size,
            max_epochs: pre.max_epochs,
            patience: pre.patience,
            seed,
            validation_subsample: spec.validation_subsample,
        };
        let mut params =
            Parameters::init(&model_cfg, &mut Rng::with_stream(seed, STREAM_INIT))?;
        let trace = trainer::train(&mut params, &src_train, &src_val, &cfg)?;
        if trace.diverged() {
            return Err(Error::config(format!(
                "pretraining diverged for seed {seed}: {}",
                trace.diagnostic.unwrap_or_default()
            )));
        }
        log::info!(
            "pretrained seed {seed}: best val loss {:.4} at epoch {}",
            trace.best_val_loss,
            trace.best_epoch
        );
        out.insert(seed, params);
    }
    Ok(out)
}

/// Execute the whole grid and write `raw.csv`, `aggregate.csv`, per-run
/// artifacts, and `failures.csv` (when any run failed) under `out_dir`.
pub fn run_grid(spec: &ExperimentSpec, out_dir: &Path, workers: usize) -> Result<ResultTable> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let split = prepare_data(spec)?;
    let class_map = ClassMap::from_samples(&split.train);
    if class_map.len() < 2 {
        return Err(Error::config(
            "train split holds fewer than 2 classes; nothing to learn",
        ));
    }
    let train_local = class_map.relabel(&split.train);
    let val_local = class_map.relabel(&split.validation);
    if val_local.is_empty() {
        return Err(Error::config("validation split is empty after relabeling"));
    }

    let model_cfg = ModelConfig {
        channels: split.channels,
        embed_dim: spec.model.embed_dim,
        num_heads: spec.model.num_heads,
        ffn_hidden: spec.model.ffn_hidden,
        num_blocks: spec.model.num_blocks,
        max_len: spec.model.max_len,
        num_classes: class_map.len(),
    };
    model_cfg.validate()?;

    let pretrained = pretrain_per_seed(spec, &spec.model, split.channels)?;
    log::info!(
        "data ready: train {} / val {} / test {} samples, {} trainable of {} classes",
        train_local.len(),
        val_local.len(),
        split.test.len(),
        class_map.len(),
        split.num_classes
    );

    let ctx = GridContext {
        spec: spec.clone(),
        model_cfg,
        train_local,
        val_local,
        test: split.test,
        class_map,
        num_classes_global: split.num_classes,
        pretrained,
        out_dir: out_dir.to_path_buf(),
    };

    // Canonical task order: loss, augmentation, shot, seed.
    let mut keys: Vec<RunKey> = Vec::new();
    let mut losses = spec.losses.clone();
    losses.sort();
    losses.dedup();
    let mut dipa_axis = spec.dipa_axis.clone();
    dipa_axis.sort();
    dipa_axis.dedup();
    let mut shot_keys: Vec<(u8, usize)> = spec.shots.iter().map(Shot::ord_key).collect();
    shot_keys.sort();
    shot_keys.dedup();
    let mut seeds = spec.seeds.clone();
    seeds.sort();
    seeds.dedup();
    for &loss in &losses {
        for &dipa in &dipa_axis {
            for &shot_key in &shot_keys {
                for &seed in &seeds {
                    keys.push(RunKey {
                        regime: spec.regime,
                        loss,
                        dipa,
                        shot_key,
                        seed,
                    });
                }
            }
        }
    }

    let slots: Vec<Mutex<Option<std::result::Result<TaskOutput, String>>>> =
        keys.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let total = keys.len();
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let outcome = run_task(&ctx, &keys[i]).map_err(|e| e.to_string());
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &outcome {
                    Ok(out) => log::info!(
                        "[{finished}/{total}] {}: accuracy {:.4}, kappa {:.4}",
                        keys[i].slug(),
                        out.record.accuracy,
                        out.record.kappa
                    ),
                    Err(e) => log::warn!("[{finished}/{total}] {} failed: {e}", keys[i].slug()),
                }
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut table = ResultTable::default();
    for (key, slot) in keys.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("task completed") {
            Ok(out) => table.rows.push(out.record),
            Err(error) => table.failures.push(Failure {
                key: key.clone(),
                error,
            }),
        }
    }

    report::write_outputs(&table, out_dir)?;
    Ok(table)
}
