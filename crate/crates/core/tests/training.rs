use std::path::Path;

use firenet::arch::{ArchVariant, Mode, NetworkGraph, Op};
use firenet::data::{load_manifest, make_synthetic_dataset, Dataset, Split};
use firenet::train::{
    load_checkpoint, recalibrate_batch_norm, train, train_with, Experiment, Hyperparams,
    TrainConfig,
};
use firenet::{Error, Shape};

const SIZE: usize = 32;

fn dataset(dir: &Path, n: usize) -> Dataset {
    let m = make_synthetic_dataset(n, 3, dir).unwrap();
    Dataset::load(load_manifest(&m).unwrap(), SIZE, None).unwrap()
}

fn config(lr: f32, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(Experiment::Exp4, Hyperparams::new(lr, 0.9, 1e-4).unwrap(), 5);
    cfg.epochs = epochs;
    cfg.batch_size = 8;
    cfg
}

fn proposed() -> NetworkGraph {
    ArchVariant::proposed(Shape::new(1, 3, SIZE, SIZE))
        .build(5)
        .unwrap()
}

fn trainable(g: &NetworkGraph) -> Vec<Vec<u32>> {
    g.nodes()
        .iter()
        .flat_map(|n| n.params())
        .filter(|(role, _, _)| role.trainable())
        .map(|(_, _, v)| v.iter().map(|x| x.to_bits()).collect())
        .collect()
}

#[test]
fn zero_learning_rate_leaves_weights_and_validation_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10);
    let mut g = proposed();
    let before = trainable(&g);
    let report = train(&mut g, &data, &config(0.0, 3)).unwrap();
    assert_eq!(trainable(&g), before);
    let v = report.val_accuracies();
    assert!(v.iter().all(|&a| a == v[0]), "{v:?}");
    assert_eq!(report.best_epoch, 1);
}

#[test]
fn zero_learning_rate_without_batch_norm() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10);
    let mut g = ArchVariant::squeezenet(false, Shape::new(1, 3, SIZE, SIZE))
        .build(5)
        .unwrap();
    let mut cfg = config(0.0, 3);
    cfg.experiment = Experiment::Exp1;
    cfg.recalibrate_bn = false;
    let before = trainable(&g);
    let report = train(&mut g, &data, &cfg).unwrap();
    assert_eq!(trainable(&g), before);
    let v = report.val_accuracies();
    assert!(v.iter().all(|&a| a == v[0]), "{v:?}");
}

#[test]
fn same_seed_same_losses() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10);
    let run = || {
        let mut g = proposed();
        train(&mut g, &data, &config(0.01, 2)).unwrap().train_losses()
    };
    let a = run();
    let b = run();
    assert_eq!(
        a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn checkpoint_holds_best_epoch_and_restores() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(&dir.path().join("data"), 10);
    let mut g = proposed();
    let mut cfg = config(0.01, 3);
    let path = dir.path().join("best.fnw");
    cfg.checkpoint = Some(path.clone());
    let mut seen = Vec::new();
    let report = train_with(&mut g, &data, &cfg, |s| seen.push(s.epoch)).unwrap();
    assert_eq!(seen, vec![1, 2, 3]);
    let max = report
        .val_accuracies()
        .into_iter()
        .fold(f32::MIN, f32::max);
    assert_eq!(report.best_val_accuracy, max);
    // ties resolve to the earliest epoch reaching the maximum
    let first = report.val_accuracies().iter().position(|&a| a == max).unwrap();
    assert_eq!(report.best_epoch, first + 1);

    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck.meta("epoch"), Some(report.best_epoch.to_string().as_str()));
    assert_eq!(ck.norm, data.norm);
    let x = data.batch(&data.indices(Split::Validation)).unwrap().images;
    assert_eq!(ck.graph.infer(&x).unwrap(), g.infer(&x).unwrap());
}

#[test]
fn missing_splits_are_empty_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = dataset(dir.path(), 10);
    data.entries
        .iter_mut()
        .filter(|e| e.split == Split::Validation)
        .for_each(|e| e.split = Split::Test1);
    let err = train(&mut proposed(), &data, &config(0.01, 1)).unwrap_err();
    assert!(matches!(err, Error::Empty(_)), "{err}");
}

#[test]
fn recalibration_matches_population_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10);
    let train_idx = data.indices(Split::Train);
    let mut g = proposed();
    // nudge the running statistics away from anything a batch would produce
    for n in g.nodes_mut() {
        if let Op::BatchNorm(p) = &mut n.op {
            p.running_mean.iter_mut().for_each(|m| *m = 100.0);
        }
    }
    let mut whole = g.clone();
    recalibrate_batch_norm(&mut g, &data, &train_idx, 4).unwrap();

    // oracle for the first layer: its input does not depend on other BN layers
    let x = data.batch(&train_idx).unwrap().images;
    let pre = whole.infer_keep(&x, &["fire2.squeeze"]).unwrap().remove(0);
    let s = pre.shape();
    let plane = s.h * s.w;
    let idx = g.node_index("fire2.bn").unwrap();
    let Op::BatchNorm(p) = &g.nodes()[idx].op else {
        panic!("fire2.bn is not batch norm")
    };
    for c in 0..s.c {
        let mut sum = 0.0f64;
        for n in 0..s.n {
            let base = (n * s.c + c) * plane;
            sum += pre.data()[base..base + plane]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
        let mean = sum / (s.n * plane) as f64;
        assert!(
            (p.running_mean[c] as f64 - mean).abs() < 1e-4 * (1.0 + mean.abs()),
            "channel {c}: {} vs {mean}",
            p.running_mean[c]
        );
        assert_eq!(p.momentum_stat, 0.9);
    }

    // one batch covering everything replaces the statistics outright
    recalibrate_batch_norm(&mut whole, &data, &train_idx, train_idx.len()).unwrap();
    let mut fresh = whole.clone();
    for n in fresh.nodes_mut() {
        if let Op::BatchNorm(p) = &mut n.op {
            p.momentum_stat = 0.0;
        }
    }
    fresh.forward(&x, Mode::Train).unwrap();
    for n in fresh.nodes_mut() {
        if let Op::BatchNorm(p) = &mut n.op {
            p.momentum_stat = 0.9;
        }
    }
    assert_eq!(fresh, whole);
}
