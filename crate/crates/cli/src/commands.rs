use std::cell::RefCell;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use firenet::arch::REFERENCE_INPUT;
use firenet::data::image::to_tensor;
use firenet::data::{
    load_luminance, load_manifest, make_synthetic_dataset, Dataset, Label, Normalization, Split,
    INPUT_CHANNELS,
};
use firenet::eval::{
    self, bench_inference, efficiency, evaluate, format_metric, save_overlay, write_records,
};
use firenet::hpo::{run_hpo, HpoConfig, DEFAULT_BUDGET};
use firenet::train::{
    configure_experiment, format_key_values, load_checkpoint, train_with, Experiment,
    ExperimentSetup, Hyperparams, TrainConfig, DEFAULT_BATCH, DEFAULT_EPOCHS,
};
use firenet::{seed, Shape, Tensor};

use crate::args::{
    BenchArgs, CamArgs, EvalArgs, HpoArgs, PredictArgs, SynthArgs, TrainArgs, TrainingFlags,
};
use crate::settings::Settings;
use crate::Failure;

pub const CHECKPOINT_FILE: &str = "best.fnw";
pub const EPOCH_LOG: &str = "epochs.log";
pub const HISTORY_FILE: &str = "history.csv";
pub const BEST_HP_FILE: &str = "best_hyperparams.conf";
const DEFAULT_SEED: u64 = 7;
const DEFAULT_SYNTH_N: usize = 50;
const DEFAULT_REPETITIONS: usize = 5;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::io(format!("{}: {e}", path.display()))
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::io(format!("{}: no such file", path.display())))
    }
}

pub fn synth(a: SynthArgs, s: &mut Settings) -> Result<(), Failure> {
    let out = s.required_path("out", a.out)?;
    let n = s.or("n", a.n, DEFAULT_SYNTH_N)?;
    let seed = s.or("seed", a.seed, DEFAULT_SEED)?;
    println!("{}", s.echo("synth"));
    let manifest = make_synthetic_dataset(n, seed, &out)?;
    println!("{}", manifest.display());
    Ok(())
}

struct Training {
    manifest: PathBuf,
    setup: ExperimentSetup,
    epochs: usize,
    batch_size: usize,
    size: usize,
    seed: u64,
    out: PathBuf,
}

fn resolve_training(f: TrainingFlags, s: &mut Settings) -> Result<Training, Failure> {
    let manifest = s.required_path("manifest", f.manifest)?;
    let experiment: Experiment = s
        .or(
            "experiment",
            f.experiment,
            Experiment::Exp4.tag().to_string(),
        )?
        .parse()?;
    let weights = s.path("weights", f.weights)?;
    let epochs = s.or("epochs", f.epochs, DEFAULT_EPOCHS)?;
    let batch_size = s.or("batch-size", f.batch_size, DEFAULT_BATCH)?;
    let size = s.or("size", f.size, REFERENCE_INPUT.h)?;
    let seed = s.or("seed", f.seed, DEFAULT_SEED)?;
    let out = s.required_path("out", f.out)?;
    let setup = configure_experiment(experiment, Shape::new(1, 3, size, size), weights.as_deref())?;
    setup.variant.validate()?;
    require_file(&manifest)?;
    if let Some(w) = &setup.transfer {
        require_file(w)?;
    }
    Ok(Training {
        manifest,
        setup,
        epochs,
        batch_size,
        size,
        seed,
        out,
    })
}

fn load_training_data(t: &Training) -> Result<Dataset, Failure> {
    let entries = load_manifest(&t.manifest)?;
    let used: Vec<_> = entries
        .into_iter()
        .filter(|e| matches!(e.split, Split::Train | Split::Validation))
        .collect();
    Ok(Dataset::load(used, t.size, None)?)
}

fn train_config(t: &Training, hp: Hyperparams, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(t.setup.experiment, hp, seed);
    cfg.epochs = t.epochs;
    cfg.batch_size = t.batch_size;
    cfg
}

pub fn train(a: TrainArgs, s: &mut Settings) -> Result<(), Failure> {
    let t = resolve_training(a.common, s)?;
    let d = Hyperparams::default();
    let hp = Hyperparams::new(
        s.or("lr", a.lr, d.learning_rate)?,
        s.or("momentum", a.momentum, d.momentum)?,
        s.or("l2", a.l2, d.l2)?,
    )?;
    println!("{}", s.echo("train"));
    create_out(&t.out)?;
    let data = load_training_data(&t)?;
    let mut g = t.setup.build(t.seed)?;
    let mut cfg = train_config(&t, hp, t.seed);
    cfg.checkpoint = Some(t.out.join(CHECKPOINT_FILE));

    let log_path = t.out.join(EPOCH_LOG);
    let log = RefCell::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    let log_error = RefCell::new(None);
    let report = train_with(&mut g, &data, &cfg, |e| {
        let line = format!(
            "epoch={} lr={} train_loss={:.6} train_accuracy={:.4} val_accuracy={:.4} seconds={:.1}",
            e.epoch, e.learning_rate, e.train_loss, e.train_accuracy, e.val_accuracy, e.seconds
        );
        println!("{line}");
        if let Err(err) = writeln!(log.borrow_mut(), "{line}") {
            log_error.borrow_mut().get_or_insert(err);
        }
    })?;
    if let Some(err) = log_error.into_inner() {
        return Err(io_err(&log_path, err));
    }
    println!(
        "best_epoch={} val_accuracy={:.4} checkpoint={}",
        report.best_epoch,
        report.best_val_accuracy,
        t.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

pub fn hpo(a: HpoArgs, s: &mut Settings) -> Result<(), Failure> {
    let t = resolve_training(a.common, s)?;
    let budget = s.or("budget", a.budget, DEFAULT_BUDGET)?;
    println!(
        "{}{}",
        s.echo("hpo"),
        if a.resume { " --resume" } else { "" }
    );
    create_out(&t.out)?;
    let data = load_training_data(&t)?;
    let mut cfg = HpoConfig::new(t.seed);
    cfg.budget = budget;
    cfg.history = Some(t.out.join(HISTORY_FILE));
    cfg.resume = a.resume;

    let result = run_hpo(&cfg, |trial, hp| {
        let trial_seed = seed::derive(t.seed, &[trial as u64]);
        let outcome = t.setup.build(trial_seed).and_then(|mut g| {
            firenet::train::train(&mut g, &data, &train_config(&t, *hp, trial_seed))
        });
        match &outcome {
            Ok(r) => println!(
                "trial={trial} lr={} momentum={} l2={} val_accuracy={:.4}",
                hp.learning_rate, hp.momentum, hp.l2, r.best_val_accuracy
            ),
            Err(e) => eprintln!("trial={trial} failed: {e}"),
        }
        outcome.map(|r| r.best_val_accuracy as f64)
    })?;

    let b = &result.best;
    let est = result
        .estimated
        .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "best trial={} lr={} momentum={} l2={} val_accuracy={:.4} est_accuracy={est}",
        b.trial,
        b.hyperparams.learning_rate,
        b.hyperparams.momentum,
        b.hyperparams.l2,
        b.objective.unwrap_or(f64::NAN)
    );
    let best_path = t.out.join(BEST_HP_FILE);
    let pairs = [
        ("lr", b.hyperparams.learning_rate.to_string()),
        ("momentum", b.hyperparams.momentum.to_string()),
        ("l2", b.hyperparams.l2.to_string()),
    ]
    .map(|(k, v)| (k.to_string(), v));
    fs::write(&best_path, format_key_values(&pairs)).map_err(|e| io_err(&best_path, e))?;
    Ok(())
}

pub fn eval(a: EvalArgs, s: &mut Settings) -> Result<(), Failure> {
    let checkpoint = s.required_path("checkpoint", a.checkpoint)?;
    let manifest = s.required_path("manifest", a.manifest)?;
    let split: Split = s
        .or("split", a.split, Split::Test1.token().to_string())?
        .parse()
        .map_err(Failure::usage)?;
    let out = s.required_path("out", a.out)?;
    println!("{}", s.echo("eval"));
    let ck = load_checkpoint(&checkpoint)?;
    let entries: Vec<_> = load_manifest(&manifest)?
        .into_iter()
        .filter(|e| e.split == split)
        .collect();
    if entries.is_empty() {
        return Err(firenet::Error::Empty(format!(
            "split `{split}` has no rows in {}",
            manifest.display()
        ))
        .into());
    }
    create_out(&out)?;
    let data = Dataset::load(entries, ck.graph.input_shape().h, Some(ck.norm))?;
    let report = evaluate(&ck.graph, &data, split, DEFAULT_BATCH)?;
    let m = &report.metrics;
    println!("split={split} n={}", m.counts.total());
    println!(
        "tp={} fp={} tn={} fn={}",
        m.counts.tp, m.counts.fp, m.counts.tn, m.counts.fn_
    );
    for (k, v) in [
        ("accuracy", m.accuracy),
        ("sensitivity", m.sensitivity),
        ("specificity", m.specificity),
        ("precision", m.precision),
        ("f1", m.f1),
    ] {
        println!("{k}={}", format_metric(v));
    }
    let csv = out.join(format!("predictions_{split}.csv"));
    write_records(&csv, &report.records)?;
    println!("records={}", csv.display());
    Ok(())
}

fn image_input(
    path: &Path,
    size: usize,
    norm: &Normalization,
) -> Result<(firenet::data::Gray, Tensor), Failure> {
    let g = load_luminance(path, size)?;
    let t = to_tensor(&[&g], INPUT_CHANNELS, norm)?;
    Ok((g, t))
}

fn predicted_class(probs: &Tensor) -> usize {
    let p = probs.data();
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

pub fn predict(a: PredictArgs, s: &mut Settings) -> Result<(), Failure> {
    let checkpoint = s.required_path("checkpoint", a.checkpoint)?;
    let ck = load_checkpoint(&checkpoint)?;
    let size = ck.graph.input_shape().h;
    println!("path,predicted,p_covid");
    for path in &a.images {
        let (_, x) = image_input(path, size, &ck.norm)?;
        let probs = ck.graph.infer(&x)?;
        let label = Label::from_index(predicted_class(&probs)).expect("two classes");
        println!(
            "{},{},{:.6}",
            path.display(),
            label,
            probs.data()[Label::Covid.index()]
        );
    }
    Ok(())
}

pub fn cam(a: CamArgs, s: &mut Settings) -> Result<(), Failure> {
    let checkpoint = s.required_path("checkpoint", a.checkpoint)?;
    let out = s.required_path("out", a.out)?;
    let class = s.opt("class", a.class)?;
    let ck = load_checkpoint(&checkpoint)?;
    if let Some(c) = class {
        if Label::from_index(c).is_none() {
            return Err(Failure::usage(format!("--class must be 0 or 1, got {c}")));
        }
    }
    create_out(&out)?;
    let size = ck.graph.input_shape().h;
    for path in &a.images {
        let (base, x) = image_input(path, size, &ck.norm)?;
        let c = match class {
            Some(c) => c,
            None => predicted_class(&ck.graph.infer(&x)?),
        };
        let heat = eval::cam(&ck.graph, &x, c)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into());
        let label = Label::from_index(c).expect("checked");
        let dest = out.join(format!("{id}_cam_{label}.png"));
        save_overlay(&base, &heat, &dest)?;
        println!("{}", dest.display());
    }
    Ok(())
}

pub fn bench(a: BenchArgs, s: &mut Settings) -> Result<(), Failure> {
    let checkpoint = s.required_path("checkpoint", a.checkpoint)?;
    let repetitions = s.or("repetitions", a.repetitions, DEFAULT_REPETITIONS)?;
    let image = s.path("image", a.image)?;
    let sensitivity = s.opt("sensitivity", a.sensitivity)?;
    println!("{}", s.echo("bench"));
    let ck = load_checkpoint(&checkpoint)?;
    let input = ck.graph.input_shape();
    let x = match &image {
        Some(p) => image_input(p, input.h, &ck.norm)?.1,
        None => Tensor::zeros(input),
    };
    let r = bench_inference(&ck.graph, &x, repetitions)?;
    let millions = r.params as f64 / 1e6;
    println!("repetitions={}", r.samples.len());
    println!("threads={}", r.threads);
    println!("mean_seconds={:.4}", r.mean);
    println!("min_seconds={:.4}", r.min);
    println!("max_seconds={:.4}", r.max);
    println!("params={}", r.params);
    println!("params_millions={millions:.2}");
    let eff = match sensitivity {
        Some(sens) => format!("{:.2}", efficiency(sens, millions)?),
        None => "n/a".to_string(),
    };
    println!("efficiency={eff}");
    Ok(())
}
