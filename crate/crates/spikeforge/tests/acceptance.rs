//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikeforge::cli::{execute, Cli};
use spikeforge::core::diagnostics::{energy_estimate, reference_activations, residual_report};
use spikeforge::core::{
    build_snn, forward_ann, fuse_batchnorm, simulate_with, step_if, step_if_burst, AnnModel, Layer, LiPool, Linear,
    MaxRatePool, NeuronState, PoolingMode, SimOptions, SimTrace, StageKind, StageRecord, StageTrace, Tensor,
};
use spikeforge::pipeline::{convert_model, evaluate, thread_pool, Converted, Evaluation};
use spikeforge::{load_bundle, load_calibration, load_dataset, Dataset};

struct Fixture {
    name: &'static str,
    model: AnnModel,
    calib: Dataset,
    eval: Dataset,
}

fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fixture(name: &'static str) -> Fixture {
    let dir = fixture_dir(name);
    let model = load_bundle(&dir).unwrap();
    let calib = load_calibration(&dir, Some(model.input_shape())).unwrap();
    let eval = load_dataset(&dir, "eval.json", Some(model.input_shape())).unwrap();
    Fixture { name, model, calib, eval }
}

struct Ctx {
    pool: rayon::ThreadPool,
    mlp: Fixture,
    cnn: Fixture,
}

impl Ctx {
    fn fixtures(&self) -> [&Fixture; 2] {
        [&self.mlp, &self.cnn]
    }

    fn convert(&self, f: &Fixture, p: f64) -> Converted {
        convert_model(&f.model, &f.calib, p, &self.pool).unwrap()
    }

    fn eval(
        &self,
        f: &Fixture,
        c: &Converted,
        gamma: u32,
        horizon: usize,
        pooling: PoolingMode,
        n: usize,
    ) -> Evaluation {
        let cfg = spikeforge::core::SnnConfig {
            gamma_cap: gamma,
            pooling,
            v_threshold: 1.0,
            input_scale: c.stats.lambda_input,
            horizon,
        };
        let net = build_snn(&c.normalized, cfg).unwrap();
        let idx: Vec<usize> = (0..n.min(f.eval.len())).collect();
        evaluate(c, &net, &f.eval, &idx, &self.pool).unwrap()
    }
}

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn(&Ctx) -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn constant_current(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut bad = Vec::new();
    for _ in 0..200 {
        // Dyadic a keeps every partial sum exact.
        let a = f64::from(rng.gen_range(1u32..=8 * 1024)) / 1024.0;
        let t = rng.gen_range(1usize..=2048);
        let gamma = a.ceil() as u32 + rng.gen_range(0..3);
        let mut s = NeuronState::new(1);
        for _ in 0..t {
            step_if_burst(&mut s, &[a], gamma, 1.0);
        }
        let expected = (a * t as f64).floor() as u32;
        if s.spikes()[0] != expected {
            bad.push((a, t, gamma, s.spikes()[0], expected));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(bad.is_empty() && secs < 1.0, format!("200 cases, {} mismatches {:?}, {secs:.3} s", bad.len(), bad.first()))
}

fn gamma_one(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=128);
        let mut burst = NeuronState::new(1);
        let mut plain = NeuronState::new(1);
        for _ in 0..len {
            let c = rng.gen_range(-2.0..3.0);
            if step_if_burst(&mut burst, &[c], 1, 1.0) != step_if(&mut plain, &[c], 1.0) {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("1000 sequences, {mismatches} differing steps"))
}

fn conservation(ctx: &Ctx) -> Outcome {
    let horizon = 64;
    let mut worst: f64 = 0.0;
    let mut sims = 0;
    for f in ctx.fixtures() {
        let c = ctx.convert(f, 99.9);
        for pooling in PoolingMode::ALL {
            for gamma in [1, 5] {
                let cfg = spikeforge::core::SnnConfig {
                    gamma_cap: gamma,
                    pooling,
                    v_threshold: 1.0,
                    input_scale: c.stats.lambda_input,
                    horizon,
                };
                let net = build_snn(&c.normalized, cfg).unwrap();
                let errs: Vec<f64> = ctx.pool.install(|| {
                    use rayon::prelude::*;
                    f.eval
                        .samples
                        .par_iter()
                        .map(|x| {
                            let trace = simulate_with(&net, x, horizon, SimOptions::default()).unwrap();
                            let r = reference_activations(&c.normalized, x, c.stats.lambda_input).unwrap();
                            residual_report(&trace, &r)
                                .unwrap()
                                .iter()
                                .map(|l| l.conservation_error)
                                .fold(0.0, f64::max)
                        })
                        .collect()
                });
                sims += errs.len();
                worst = errs.into_iter().fold(worst, f64::max);
            }
        }
    }
    let tol = 1e-6 * horizon as f64;
    check(worst <= tol, format!("{sims} simulations, max |spikes*V_th + V(T) - sum I| = {worst:.3e} (tol {tol:.1e})"))
}

fn lip_equality(_: &Ctx) -> Outcome {
    let start = Instant::now();
    let mut cases = 0u64;
    let mut failures = 0u64;
    for n in 1..=4usize {
        for t_len in 1..=6usize {
            let bits = n * t_len;
            for code in 0u32..(1u32 << bits) {
                let mut pool = LiPool::new(n);
                let mut cum = [0u64; 4];
                let mut emitted = 0u64;
                let mut counts = [0u32; 4];
                for t in 0..t_len {
                    for i in 0..n {
                        counts[i] = (code >> (i * t_len + t)) & 1;
                        cum[i] += u64::from(counts[i]);
                    }
                    emitted += u64::from(pool.step(&counts[..n]));
                    if emitted != cum[..n].iter().copied().max().unwrap() {
                        failures += 1;
                    }
                }
                cases += 1;
            }
        }
    }
    let exhaustive = start.elapsed().as_secs_f64();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100_000 {
        let n = rng.gen_range(1..=9);
        let t_len = rng.gen_range(1..=32);
        let mut pool = LiPool::new(n);
        let mut cum = vec![0u64; n];
        let mut emitted = 0u64;
        let mut counts = vec![0u32; n];
        for _ in 0..t_len {
            for i in 0..n {
                counts[i] = rng.gen_range(0..=5);
                cum[i] += u64::from(counts[i]);
            }
            emitted += u64::from(pool.step(&counts));
            if emitted != *cum.iter().max().unwrap() {
                failures += 1;
            }
        }
    }
    check(
        failures == 0 && exhaustive < 60.0,
        format!(
            "{cases} exhaustive binary cases in {exhaustive:.1} s + 100000 random count trains, {failures} mismatches"
        ),
    )
}

fn max_rate_bounds(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = 100_000;
    let mut upper = 0;
    let mut lower = Vec::new();
    for _ in 0..cases {
        let n = rng.gen_range(2..=9);
        let t_len = rng.gen_range(1..=32);
        let trains: Vec<Vec<u32>> =
            (0..n).map(|_| (0..t_len).map(|_| u32::from(rng.gen_bool(0.5))).collect()).collect();
        let mut pool = MaxRatePool::new(n);
        let mut out = 0u64;
        for t in 0..t_len {
            let col: Vec<u32> = trains.iter().map(|tr| tr[t]).collect();
            out += u64::from(pool.step(&col));
        }
        let sums: Vec<u64> = trains.iter().map(|tr| tr.iter().map(|&x| u64::from(x)).sum()).collect();
        if out > sums.iter().sum() {
            upper += 1;
        }
        if out < *sums.iter().max().unwrap() {
            lower.push(trains);
        }
    }
    for v in lower.iter().take(5) {
        println!("    lower-bound violation: {v:?}");
    }
    let rate = lower.len() as f64 / cases as f64;
    check(
        upper == 0 && rate <= 1e-3,
        format!(
            "{cases} binary trains, upper-bound violations {upper}, lower-bound violations {} ({:.4}%)",
            lower.len(),
            rate * 100.0
        ),
    )
}

fn pooling_ordering(ctx: &Ctx) -> Outcome {
    let c = ctx.convert(&ctx.cnn, 99.9);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut lip_ratio_64 = 0.0;
    for t in [16, 32, 64] {
        let lip = ctx.eval(&ctx.cnn, &c, 1, t, PoolingMode::Lip, usize::MAX).diagnostics;
        let mr = ctx.eval(&ctx.cnn, &c, 1, t, PoolingMode::MaxRate, usize::MAX).diagnostics;
        let (l, m) = (lip.pool_error_mean.unwrap(), mr.pool_error_mean.unwrap());
        ok &= l <= m;
        if t == 64 {
            lip_ratio_64 = lip.correct_ratio.unwrap();
        }
        parts.push(format!("T={t}: lip {l:.2e} <= max-rate {m:.2e}"));
    }
    ok &= lip_ratio_64 >= 0.99;
    check(ok, format!("tiny_cnn, {}; lip correct_ratio(2/T) at T=64 = {lip_ratio_64:.4}", parts.join(", ")))
}

fn rate_convergence(ctx: &Ctx) -> Outcome {
    const SAMPLES: usize = 128;
    let mut ok = true;
    let mut parts = Vec::new();
    for f in ctx.fixtures() {
        let c = ctx.convert(f, 100.0);
        let short = ctx.eval(f, &c, 1, 32, PoolingMode::Lip, SAMPLES).diagnostics;
        let long = ctx.eval(f, &c, 1, 1024, PoolingMode::Lip, SAMPLES).diagnostics;
        ok &= long.mean_rate_error < short.mean_rate_error;
        for l in &long.layers {
            let bound = 2.0 / 1024.0 + l.residual_abs_mean / 1024.0;
            ok &= l.rate_error_mean < bound;
            parts.push(format!("{} layer {}: {:.2e} < {bound:.2e}", f.name, l.layer, l.rate_error_mean));
        }
        parts.push(format!("{} mean T=32 {:.2e} > T=1024 {:.2e}", f.name, short.mean_rate_error, long.mean_rate_error));
    }
    check(ok, parts.join("; "))
}

fn burst_benefit(ctx: &Ctx) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for f in ctx.fixtures() {
        let c = ctx.convert(f, 99.0);
        let g1 = ctx.eval(f, &c, 1, 32, PoolingMode::Lip, usize::MAX);
        let g5 = ctx.eval(f, &c, 5, 32, PoolingMode::Lip, usize::MAX);
        let g5_64 = ctx.eval(f, &c, 5, 64, PoolingMode::Lip, usize::MAX);
        let (a1, a5) = (g1.snn_accuracy().unwrap(), g5.snn_accuracy().unwrap());
        let gap = (g5_64.ann_accuracy().unwrap() - g5_64.snn_accuracy().unwrap()) * 100.0;
        let layers_above_one = g5.diagnostics.layers.iter().filter(|l| l.rate_max > 1.0).count();
        ok &= a5 >= a1 && gap <= 1.0 && layers_above_one > 0;
        parts.push(format!(
            "{}: T=32 acc G=5 {a5:.4} >= G=1 {a1:.4}, gap at G=5 T=64 {gap:.2} pp, layers with rate > 1: {layers_above_one}",
            f.name
        ));
    }
    check(ok, parts.join("; "))
}

fn random_input(rng: &mut ChaCha8Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn last(model: &AnnModel, x: &Tensor) -> Tensor {
    forward_ann(model, x).unwrap().pop().unwrap()
}

fn bn_fusion(ctx: &Ctx) -> Outcome {
    let model = &ctx.cnn.model;
    let fused = fuse_batchnorm(model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f32 = 0.0;
    for _ in 0..1000 {
        let x = random_input(&mut rng, model.input_shape(), -1.0, 1.0);
        worst = worst.max(last(model, &x).max_abs_diff(&last(&fused, &x)).unwrap());
    }
    check(worst < 1e-5, format!("tiny_cnn, 1000 inputs, max |diff| = {worst:.2e}"))
}

fn normalization(ctx: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for f in ctx.fixtures() {
        let c = ctx.convert(f, 100.0);
        let lambda_l = f64::from(c.stats.lambda(c.fused.layers().len() - 1).unwrap());
        let lambda_0 = f64::from(c.stats.lambda_input);
        for _ in 0..1000 {
            let x = random_input(&mut rng, f.model.input_shape(), 0.0, 1.0);
            let scaled = x.map(|v| (f64::from(v) / lambda_0) as f32).unwrap();
            let y = last(&c.fused, &x);
            let y_hat = last(&c.normalized, &scaled);
            for (a, b) in y.data().iter().zip(y_hat.data()) {
                worst = worst.max((f64::from(*a) - f64::from(*b) * lambda_l).abs());
            }
        }
    }
    check(worst < 1e-5, format!("both fixtures, 1000 inputs each, max |y - lambda_L * y_hat| = {worst:.2e}"))
}

fn energy(_: &Ctx) -> Outcome {
    // 10 -> 10 layer: 100 synapses. Rate 0.1 over T = 10 is one spike per
    // input neuron, so 100 accumulates.
    let layer = Linear { weight: Tensor::filled(&[10, 10], 0.1).unwrap(), bias: Tensor::zeros(&[10]).unwrap() };
    let model = AnnModel::new(vec![10], vec![Layer::Linear(layer)]).unwrap();
    let trace = SimTrace {
        horizon: 10,
        gamma_cap: 1,
        v_threshold: 1.0,
        stages: vec![StageTrace {
            kind: StageKind::Linear,
            shape: vec![10],
            record: StageRecord::Weighted { synaptic_ops: 100, dense_macs: 0 },
        }],
        output: vec![0.0; 10],
    };
    let e = energy_estimate(&model, &trace);
    let expected = 100.0 * 0.9 / (100.0 * 4.6);
    check(
        (e.ratio - expected).abs() < 1e-6 && (e.ratio - 0.196).abs() < 5e-4,
        format!("E_ann {} E_snn {} ratio {:.6} (hand value {expected:.6})", e.ann, e.snn, e.ratio),
    )
}

fn determinism(_: &Ctx) -> Outcome {
    let dir = fixture_dir("tiny_cnn");
    let eval = dir.join("eval.json");
    let mut files = Vec::new();
    for _ in 0..2 {
        let out = tempfile::tempdir().unwrap();
        let args = [
            "spikeforge",
            "run",
            "--model",
            dir.to_str().unwrap(),
            "--calib",
            dir.to_str().unwrap(),
            "--eval",
            eval.to_str().unwrap(),
            "--p",
            "99.9",
            "--gamma",
            "5",
            "--T",
            "64",
            "--pooling",
            "lip",
            "--seed",
            "3",
            "--out",
            out.path().to_str().unwrap(),
        ];
        execute(&Cli::try_parse_from(args).unwrap()).unwrap();
        files.push(std::fs::read(out.path().join("results.csv")).unwrap());
    }
    check(files[0] == files[1], format!("results.csv {} bytes, identical: {}", files[0].len(), files[0] == files[1]))
}

fn main() {
    let ctx = Ctx { pool: thread_pool(None).unwrap(), mlp: fixture("tiny_mlp"), cnn: fixture("tiny_cnn") };
    let criteria: [Criterion; 12] = [
        ("constant-current closed form", constant_current),
        ("gamma=1 equals plain IF", gamma_one),
        ("charge conservation on fixtures", conservation),
        ("LIPooling equals running max", lip_equality),
        ("max-rate pooling bounds", max_rate_bounds),
        ("pooling error: LIPooling <= max-rate", pooling_ordering),
        ("rate approximation converges", rate_convergence),
        ("burst spikes help at low T", burst_benefit),
        ("batchnorm fusion", bn_fusion),
        ("normalization preserves function", normalization),
        ("energy formula", energy),
        ("determinism of run", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f(&ctx);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2} s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
