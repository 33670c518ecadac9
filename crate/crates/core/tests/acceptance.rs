//! End-to-end acceptance checks, one pass/fail line per criterion.
//!
//! Runs single-threaded. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p firenet --test acceptance -- 3 4 9`.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use firenet::arch::{ArchVariant, NetworkGraph, Op, REFERENCE_INPUT};
use firenet::data::image::to_tensor;
use firenet::data::synth::render;
use firenet::data::{
    epoch_plan, load_manifest, make_synthetic_dataset, AugmentationSpec, Dataset, Label,
    Normalization, Split,
};
use firenet::eval::{
    self, bench_inference, efficiency, evaluate, f1_score, normalize_values, save_overlay,
    weighted_sum,
};
use firenet::hpo::{
    expected_improvement, gp_fit, run_hpo, HpoConfig, KernelConfig, KernelParams,
};
use firenet::train::{lr_schedule, train, train_with, Experiment, Hyperparams, TrainConfig};
use firenet::{Shape, Tensor};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c1_gradients() -> Result<String, String> {
    let mut worst = (0.0f64, "");
    for layer in common::LAYERS {
        for i in 0..5 {
            let e = common::grad_check(layer, i);
            if !(e < worst.0) {
                worst = (e, layer);
            }
        }
    }
    ensure(
        worst.0 < common::GRAD_TOL,
        format!("9 layers x 5 instances, worst rel err {:.2e} ({})", worst.0, worst.1),
    )
}

fn c2_conv_oracle() -> Result<String, String> {
    let worst = (0..50).map(common::conv_forward_error).fold(0.0, f64::max);
    ensure(worst < 1e-5, format!("50 shapes, max abs diff {worst:.2e}"))
}

fn proposed(input: Shape, seed: u64) -> NetworkGraph {
    ArchVariant::proposed(input).build(seed).expect("proposed graph")
}

fn c3_shapes() -> Result<String, String> {
    let g = proposed(REFERENCE_INPUT, 1);
    let expected = [
        ("fire3", (128, 56, 56)),
        ("fire9", (512, 14, 14)),
        ("up", (64, 56, 56)),
        ("fuse.act", (128, 56, 56)),
        ("gap", (320, 1, 1)),
    ];
    let mut report = Vec::new();
    let mut ok = true;
    for (name, want) in expected {
        let s = g.node(name).ok_or(format!("missing node {name}"))?.shape;
        ok &= (s.c, s.h, s.w) == want;
        report.push(format!("{name} {}@{}x{}", s.c, s.h, s.w));
    }
    ensure(ok, report.join(", "))
}

/// Per-layer sum written out independently of the graph builder.
fn closed_form_params() -> usize {
    let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
    let fire = |cin: usize, s: usize, e: usize| conv(cin, s, 1) + 2 * s + conv(s, e, 1) + conv(s, e, 3);
    let trunk = conv(3, 96, 7)
        + fire(96, 16, 64)
        + fire(128, 16, 64)
        + fire(128, 32, 128)
        + fire(256, 32, 128)
        + fire(256, 48, 192)
        + fire(384, 48, 192)
        + fire(384, 64, 256)
        + fire(512, 64, 256);
    let up = 512 * 64 * 4 * 4 + 64;
    let fuse = conv(64 + 128, 128, 1);
    let dense = (128 + 64 + 128) * 2 + 2;
    trunk + up + fuse + dense
}

fn c4_params() -> Result<String, String> {
    let n = proposed(REFERENCE_INPUT, 1).count_params();
    let closed = closed_form_params();
    let rel = (n as f64 - 1.26e6).abs() / 1.26e6;
    ensure(
        n == closed && rel <= 0.10,
        format!("count {n}, closed form {closed}, {:+.1}% from 1.26M", 100.0 * (n as f64 / 1.26e6 - 1.0)),
    )
}

fn c5_metrics() -> Result<String, String> {
    let f1 = f1_score(0.8173, 0.85).ok_or("f1 undefined")?;
    let e1 = efficiency(85.0, 1.26).map_err(|e| e.to_string())?;
    let e2 = efficiency(67.0, 23.9).map_err(|e| e.to_string())?;
    ensure(
        (f1 - 0.8333).abs() <= 5e-5 && (e1 - 67.46).abs() <= 0.01 && (e2 - 2.80).abs() <= 0.01,
        format!("f1 {f1:.5}, efficiency {e1:.3} and {e2:.3}"),
    )
}

fn c6_augmentation() -> Result<String, String> {
    let spec = AugmentationSpec::new(1);
    let a = epoch_plan(382, 1, &spec).len();
    let b = epoch_plan(442, 1, &spec).len();
    ensure(a == 1528 && b == 1768, format!("382 -> {a}, 442 -> {b}"))
}

fn c7_schedule() -> Result<String, String> {
    let expected = ["0.1", "0.08", "0.064", "0.0512"];
    let mut bad = Vec::new();
    for e in 1..=20 {
        let want: f32 = expected[(e - 1) / 5].parse().unwrap();
        let got = lr_schedule(e, 0.1, 0.8, 5);
        if got != want {
            bad.push(format!("epoch {e}: {got} != {want}"));
        }
    }
    ensure(bad.is_empty(), if bad.is_empty() { "20 epochs exact".into() } else { bad.join("; ") })
}

fn c8_end_to_end() -> Result<String, String> {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = make_synthetic_dataset(50, 7, dir.path()).map_err(|e| e.to_string())?;
    let entries = load_manifest(&manifest).map_err(|e| e.to_string())?;
    let data = Dataset::load(entries, 224, None).map_err(|e| e.to_string())?;
    let mut g = proposed(REFERENCE_INPUT, 7);
    let cfg = TrainConfig::new(Experiment::Exp4, Hyperparams::default(), 7);
    let report = train_with(&mut g, &data, &cfg, |s| {
        eprintln!(
            "  epoch {:>2} loss {:.4} train {:.3} val {:.3} ({:.0}s)",
            s.epoch, s.train_loss, s.train_accuracy, s.val_accuracy, s.seconds
        )
    })
    .map_err(|e| e.to_string())?;
    let test = evaluate(&g, &data, Split::Test1, 32).map_err(|e| e.to_string())?;
    let test_acc = test.metrics.accuracy.unwrap_or(0.0);
    let elapsed = started.elapsed();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    ensure(
        report.best_val_accuracy >= 0.95 && test_acc >= 0.95 && elapsed < Duration::from_secs(30 * 60),
        format!(
            "val {:.3} (epoch {}), test {:.3}, {:.1} min on 1 thread ({cores} cores available)",
            report.best_val_accuracy,
            report.best_epoch,
            test_acc,
            elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn mock(hp: &Hyperparams) -> f64 {
    1.0 - ((hp.learning_rate as f64).log10() + 2.5).powi(2)
}

fn c9_hpo() -> Result<String, String> {
    let (lo, hi) = (10f64.powf(-2.7), 10f64.powf(-2.3));
    let mut hits = 0;
    for seed in 1..=10 {
        let r = run_hpo(&HpoConfig::new(seed), |_, hp| Ok(mock(hp))).map_err(|e| e.to_string())?;
        let lr = r.best.hyperparams.learning_rate as f64;
        if (lo..=hi).contains(&lr) {
            hits += 1;
        }
    }

    // expected improvement against a seeded Monte-Carlo estimate
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut ei_err = 0.0f64;
    for (mean, std, best) in [(0.5, 0.2, 0.6), (0.1, 1.0, -0.3), (2.0, 0.5, 2.5)] {
        let draws = 2_000_000;
        let sum: f64 = (0..draws)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (mean + std * z - best).max(0.0)
            })
            .sum();
        ei_err = ei_err.max((sum / draws as f64 - expected_improvement(mean, std, best)).abs());
    }

    // two-point posterior by hand: K = [[a, b], [b, a]]
    let (l, s2, noise) = (0.25f64, 0.8f64, 1e-3f64);
    let (x1, x2, xs, y1, y2) = (0.1f64, 0.5f64, 0.3f64, -0.2f64, 0.6f64);
    let params = KernelParams {
        length_scales: vec![l],
        signal_var: s2,
        noise_var: noise,
    };
    let gp = gp_fit(&[vec![x1], vec![x2]], &[y1, y2], &KernelConfig::Fixed(params))
        .map_err(|e| e.to_string())?;
    let k = |p: f64, q: f64| s2 * (-(p - q) * (p - q) / (2.0 * l * l)).exp();
    let (a, b) = (s2 + noise, k(x1, x2));
    let det = a * a - b * b;
    let ybar = 0.5 * (y1 + y2);
    let (r1, r2) = (y1 - ybar, y2 - ybar);
    let (k1, k2) = (k(xs, x1), k(xs, x2));
    let mean = ybar + (k1 * (a * r1 - b * r2) + k2 * (a * r2 - b * r1)) / det;
    let var = s2 - (a * (k1 * k1 + k2 * k2) - 2.0 * b * k1 * k2) / det;
    let (pm, ps) = gp.posterior(&[xs]);
    let gp_err = (pm - mean).abs().max((ps * ps - var).abs());

    ensure(
        hits >= 9 && ei_err < 1e-3 && gp_err < 1e-9,
        format!("{hits}/10 seeds in range, EI vs Monte-Carlo {ei_err:.1e}, GP vs hand algebra {gp_err:.1e}"),
    )
}

fn synthetic_input(label: Label, index: usize) -> (firenet::data::Gray, Tensor) {
    let base = render(label, 7, index).resize(224, 224);
    let x = to_tensor(&[&base], 3, &Normalization { mean: 0.3, std: 0.2 }).expect("tensor");
    (base, x)
}

fn c10_cam() -> Result<String, String> {
    let g = proposed(REFERENCE_INPUT, 3);
    let (base, x) = synthetic_input(Label::Covid, 0);
    let Some(Op::Dense(head)) = g.node("dense").map(|n| &n.op) else {
        return Err("no dense head".into());
    };
    let features = g
        .infer_keep(&x, &["features"])
        .map_err(|e| e.to_string())?
        .remove(0);
    let s = features.shape();
    let plane = s.h * s.w;

    let mut oracle_err = 0.0f64;
    for class in 0..2 {
        let heat = eval::cam(&g, &x, class).map_err(|e| e.to_string())?;
        let w = head.row(class);
        for p in 0..plane {
            let direct: f64 = (0..s.c)
                .map(|k| w[k] as f64 * features.data()[k * plane + p] as f64)
                .sum();
            oracle_err = oracle_err.max((heat.raw.pixels[p] as f64 - direct).abs());
        }
    }

    // linearity in the class weights
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w1: Vec<f32> = (0..s.c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let w2: Vec<f32> = (0..s.c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (alpha, beta) = (0.75f32, -1.5f32);
    let mixed: Vec<f32> = w1.iter().zip(&w2).map(|(a, b)| alpha * a + beta * b).collect();
    let m1 = weighted_sum(&features, &w1).map_err(|e| e.to_string())?;
    let m2 = weighted_sum(&features, &w2).map_err(|e| e.to_string())?;
    let mm = weighted_sum(&features, &mixed).map_err(|e| e.to_string())?;
    let lin_err = (0..plane)
        .map(|p| (mm.pixels[p] - (alpha * m1.pixels[p] + beta * m2.pixels[p])).abs() as f64)
        .fold(0.0, f64::max);

    // min-max normalization ignores positive affine maps
    let raw: Vec<f64> = m1.pixels.iter().map(|&v| v as f64).collect();
    let moved: Vec<f64> = raw.iter().map(|v| 3.7 * v - 12.0).collect();
    let inv_err = normalize_values(&raw)
        .iter()
        .zip(normalize_values(&moved))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("overlay.png");
    save_overlay(&base, &eval::cam(&g, &x, 1).map_err(|e| e.to_string())?, &path)
        .map_err(|e| e.to_string())?;
    let dims = png_dims(&path)?;

    ensure(
        oracle_err < 1e-5 && lin_err < 1e-4 && inv_err < 1e-9 && dims == (224, 224),
        format!(
            "oracle {oracle_err:.1e}, linearity {lin_err:.1e}, affine invariance {inv_err:.1e}, overlay {}x{}",
            dims.0, dims.1
        ),
    )
}

fn png_dims(path: &Path) -> Result<(u32, u32), String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    Ok((img.width(), img.height()))
}

fn c11_timing() -> Result<String, String> {
    let g = proposed(REFERENCE_INPUT, 1);
    let (_, x) = synthetic_input(Label::NotCovid, 2);
    let r = bench_inference(&g, &x, 5).map_err(|e| e.to_string())?;
    ensure(
        r.mean <= 8.0 && r.threads == 1,
        format!("mean {:.3}s (min {:.3}, max {:.3}) over 5 runs, {} thread", r.mean, r.min, r.max, r.threads),
    )
}

fn c12_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = make_synthetic_dataset(10, 11, dir.path()).map_err(|e| e.to_string())?;
    let data = Dataset::load(load_manifest(&manifest).map_err(|e| e.to_string())?, 64, None)
        .map_err(|e| e.to_string())?;
    let run = || -> Result<Vec<u32>, String> {
        let mut g = proposed(Shape::new(1, 3, 64, 64), 11);
        let mut cfg = TrainConfig::new(Experiment::Exp4, Hyperparams::default(), 11);
        cfg.epochs = 3;
        cfg.batch_size = 8;
        let r = train(&mut g, &data, &cfg).map_err(|e| e.to_string())?;
        Ok(r.train_losses().iter().map(|v| v.to_bits()).collect())
    };
    let (a, b) = (run()?, run()?);
    let losses: Vec<String> = a.iter().map(|&v| format!("{:.6}", f32::from_bits(v))).collect();
    ensure(a == b, format!("3 epochs, losses [{}] bitwise equal: {}", losses.join(", "), a == b))
}

fn main() -> ExitCode {
    firenet::sys::retain_freed_memory();
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()
        .expect("single-threaded pool");

    let criteria: [(&str, Check); 12] = [
        ("gradient suite", c1_gradients),
        ("convolution oracle", c2_conv_oracle),
        ("architecture shapes", c3_shapes),
        ("parameter count", c4_params),
        ("metrics", c5_metrics),
        ("augmentation arithmetic", c6_augmentation),
        ("learning-rate schedule", c7_schedule),
        ("end-to-end synthetic training", c8_end_to_end),
        ("hyperparameter search", c9_hpo),
        ("class activation maps", c10_cam),
        ("inference timing", c11_timing),
        ("determinism", c12_determinism),
    ];
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {n:>2} {name}: {detail} [{secs:.1}s]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
