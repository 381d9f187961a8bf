mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikeforge_core::diagnostics::{
    energy_estimate, firing_stats, pooling_error, rate_error, reference_activations, residual_report, sin_count,
    Diagnostics, EnergyCosts, EnergyEstimate,
};
use spikeforge_core::{
    build_snn, collect_activation_stats, decode, normalize_weights, simulate, simulate_with, step_if_burst, AnnModel,
    Conv2d, Error, Layer, Linear, NeuronState, Pool2d, PoolingMode, SimOptions, SimTrace, SnnConfig, SnnNetwork,
    StageKind, StageRecord, StageTrace, Tensor,
};
use support::{cnn, identity_net, mlp, tensor};

fn config(gamma: u32, pooling: PoolingMode, input_scale: f32) -> SnnConfig {
    SnnConfig { gamma_cap: gamma, pooling, v_threshold: 1.0, input_scale, horizon: 64 }
}

fn spikes(trace: &SimTrace, stage: usize) -> &[u32] {
    match &trace.stages[stage].record {
        StageRecord::Spiking { spikes, .. } => spikes,
        other => panic!("stage {stage} is {other:?}"),
    }
}

fn scalar(v: f32) -> Tensor {
    Tensor::new(vec![1], vec![v]).unwrap()
}

struct Converted {
    normalized: AnnModel,
    net: SnnNetwork,
    scale: f32,
}

fn convert(model: &AnnModel, calib: &[Tensor], p: f64, gamma: u32, pooling: PoolingMode) -> Converted {
    let stats = collect_activation_stats(model, calib, p).unwrap();
    let normalized = normalize_weights(model, &stats).unwrap();
    let net = build_snn(&normalized, config(gamma, pooling, stats.lambda_input)).unwrap();
    Converted { normalized, net, scale: stats.lambda_input }
}

#[test]
fn identity_neuron_half_rate() {
    let net = build_snn(&identity_net(), config(1, PoolingMode::Lip, 1.0)).unwrap();
    let trace = simulate(&net, &scalar(0.5), 8).unwrap();
    assert_eq!(spikes(&trace, 1), [4]);
    assert_eq!(decode(&trace).rates[1].as_deref(), Some(&[0.5][..]));
    let StageRecord::Spiking { raster: Some(r), .. } = &trace.stages[1].record else { panic!() };
    assert_eq!(r, &[0, 1, 0, 1, 0, 1, 0, 1]);
}

#[test]
fn invalid_horizon_and_shape() {
    let net = build_snn(&identity_net(), config(1, PoolingMode::Lip, 1.0)).unwrap();
    assert!(matches!(simulate(&net, &scalar(0.5), 0), Err(Error::InvalidConfig(_))));
    let wrong = Tensor::new(vec![2], vec![0.5, 0.5]).unwrap();
    assert!(matches!(simulate(&net, &wrong, 4), Err(Error::InputShape { .. })));
}

#[test]
fn simulation_is_deterministic_and_conserves_charge() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = cnn(&mut rng, false);
    let calib: Vec<Tensor> = (0..8).map(|_| tensor(&mut rng, &[2, 6, 6], 0.0, 1.0)).collect();
    for pooling in PoolingMode::ALL {
        for gamma in [1, 3] {
            let c = convert(&model, &calib, 99.0, gamma, pooling);
            for x in &calib {
                let a = simulate(&c.net, x, 48).unwrap();
                assert_eq!(a, simulate(&c.net, x, 48).unwrap());
                let reference = reference_activations(&c.normalized, x, c.scale).unwrap();
                for r in residual_report(&a, &reference).unwrap() {
                    assert!(r.conservation_error <= 1e-6 * 48.0, "{}", r.conservation_error);
                }
                for s in &a.stages {
                    if let StageRecord::Spiking { raster: Some(raster), spikes, .. } = &s.record {
                        assert!(raster.iter().all(|&c| c <= gamma));
                        let n = spikes.len();
                        for i in 0..n {
                            let total: u32 = (0..48).map(|t| raster[t * n + i]).sum();
                            assert_eq!(total, spikes[i]);
                        }
                    }
                }
                let quiet = simulate_with(&c.net, x, 48, SimOptions::default()).unwrap();
                assert_eq!(quiet.output, a.output);
            }
        }
    }
}

#[test]
fn rates_converge_with_horizon() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = mlp(&mut rng, &[6, 12, 8, 3]);
    let calib: Vec<Tensor> = (0..16).map(|_| tensor(&mut rng, &[6], 0.0, 1.0)).collect();
    let c = convert(&model, &calib, 100.0, 1, PoolingMode::Lip);
    let mean_err = |t: usize| {
        let mut total = 0.0;
        for x in &calib {
            let trace = simulate_with(&c.net, x, t, SimOptions::default()).unwrap();
            let reference = reference_activations(&c.normalized, x, c.scale).unwrap();
            total += rate_error(&trace, &reference).unwrap().iter().map(|e| e.mean_abs).sum::<f64>();
        }
        total
    };
    assert!(mean_err(1024) < mean_err(32));
}

#[test]
fn residual_examples() {
    // 1.25 is exact in f32; 1.3 is not, and its rounding would leave a
    // residual just under threshold at T = 8.
    for (gamma, residual, saturated) in [(1, 2.0, 1), (2, 0.0, 0)] {
        let net = build_snn(&identity_net(), config(gamma, PoolingMode::Lip, 1.0)).unwrap();
        let x = scalar(1.25);
        let trace = simulate(&net, &x, 8).unwrap();
        let reference = reference_activations(&identity_net(), &x, 1.0).unwrap();
        let r = &residual_report(&trace, &reference).unwrap()[0];
        assert!((r.mean - residual).abs() < 1e-6, "gamma {gamma}: {}", r.mean);
        assert_eq!(r.saturated, saturated);
    }
}

fn single_stage_trace(current: &[f64]) -> SimTrace {
    let mut state = NeuronState::new(1);
    let raster: Vec<u32> = current.iter().flat_map(|&c| step_if_burst(&mut state, &[c], 1, 1.0)).collect();
    SimTrace {
        horizon: current.len(),
        gamma_cap: 1,
        v_threshold: 1.0,
        stages: vec![StageTrace {
            kind: StageKind::Spiking,
            shape: vec![1],
            record: StageRecord::Spiking {
                spikes: state.spikes().to_vec(),
                step_totals: raster.iter().map(|&c| u64::from(c)).collect(),
                membrane: state.potentials().to_vec(),
                current_sum: vec![current.iter().sum()],
                raster: Some(raster),
            },
        }],
        output: Vec::new(),
    }
}

#[test]
fn spikes_of_inactivated_neuron() {
    let current = [0.7, 0.4, -1.1, 0.0, 0.0];
    let trace = single_stage_trace(&current);
    // Net drive is zero, so the ANN activation is relu(0) = 0.
    let reference = [scalar(0.0)];
    let sin = sin_count(&trace, &reference).unwrap();
    assert_eq!(sin[0].spikes, 1);
    assert_eq!(sin[0].inactive, 1);
    let rates = firing_stats(&trace);
    assert!((rates[0].mean - 0.2).abs() < 1e-12);
}

fn pool_net() -> AnnModel {
    let unit = Conv2d {
        weight: Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap(),
        bias: Tensor::new(vec![1], vec![0.0]).unwrap(),
        stride: 1,
        padding: 0,
    };
    let readout =
        Linear { weight: Tensor::new(vec![1, 1], vec![1.0]).unwrap(), bias: Tensor::new(vec![1], vec![0.0]).unwrap() };
    AnnModel::new(
        vec![1, 2, 2],
        vec![
            Layer::Conv2d(unit),
            Layer::Relu,
            Layer::MaxPool2d(Pool2d { kernel: 2, stride: 2 }),
            Layer::Flatten,
            Layer::Linear(readout),
        ],
    )
    .unwrap()
}

#[test]
fn max_rate_pooling_error_example() {
    // s1 = [0, 1], s2 = [1, 0]: max-rate emits on both steps, the true
    // pooled rate is 0.5.
    let model = pool_net();
    let net = build_snn(&model, config(1, PoolingMode::MaxRate, 1.0)).unwrap();
    let x = Tensor::new(vec![1, 2, 2], vec![0.5, 0.5, 0.0, 0.0]).unwrap();
    let mut trace = simulate(&net, &x, 2).unwrap();
    let StageRecord::Pool { input_sum, output_sum, .. } = &mut trace.stages[2].record else { panic!() };
    *input_sum = vec![1.0, 1.0, 0.0, 0.0];
    *output_sum = vec![2.0];
    let reference = reference_activations(&model, &x, 1.0).unwrap();
    let e = &pooling_error(&net, &trace, &reference, None).unwrap()[0];
    assert!((e.mean_abs - 0.5).abs() < 1e-12);
    assert_eq!(e.tolerance, 1.0);
    assert_eq!(e.correct_ratio(), Some(1.0));
    let strict = &pooling_error(&net, &trace, &reference, Some(0.25)).unwrap()[0];
    assert_eq!(strict.correct_ratio(), Some(0.0));
}

#[test]
fn lip_pooling_is_exact_on_simulated_spikes() {
    let model = pool_net();
    let net = build_snn(&model, config(1, PoolingMode::Lip, 1.0)).unwrap();
    let x = Tensor::new(vec![1, 2, 2], vec![0.3, 0.7, 0.45, 0.0]).unwrap();
    let trace = simulate(&net, &x, 64).unwrap();
    let reference = reference_activations(&model, &x, 1.0).unwrap();
    let e = &pooling_error(&net, &trace, &reference, None).unwrap()[0];
    assert_eq!(e.max_abs, 0.0);
}

#[test]
fn average_mode_without_maxpool_has_no_pool_stats() {
    let net = build_snn(&identity_net(), config(1, PoolingMode::Average, 1.0)).unwrap();
    let trace = simulate(&net, &scalar(0.5), 8).unwrap();
    let reference = reference_activations(&identity_net(), &scalar(0.5), 1.0).unwrap();
    assert!(pooling_error(&net, &trace, &reference, None).unwrap().is_empty());
    let mut d = Diagnostics::new();
    d.add_sample(&identity_net(), &net, &trace, &reference).unwrap();
    assert_eq!(d.report().pool_error_mean, None);
}

#[test]
fn energy_example_and_batch_invariance() {
    // 100 synapses, rate 0.1, T = 10: 100 accumulates against 100 MACs.
    let e = EnergyEstimate::from_counts(100, 100, 0, EnergyCosts::default());
    assert!((e.ratio - 90.0 / 460.0).abs() < 1e-12);

    let net = build_snn(&identity_net(), config(1, PoolingMode::Lip, 1.0)).unwrap();
    let x = scalar(0.1);
    let trace = simulate(&net, &x, 10).unwrap();
    let direct = energy_estimate(&identity_net(), &trace);
    assert!((direct.ann - 2.0 * 4.6).abs() < 1e-12);
    assert!((direct.snn - (0.9 + 10.0 * 4.6)).abs() < 1e-12);

    let reference = reference_activations(&identity_net(), &x, 1.0).unwrap();
    let mut one = Diagnostics::new();
    one.add_sample(&identity_net(), &net, &trace, &reference).unwrap();
    let mut two = one.clone();
    two.merge(one.clone()).unwrap();
    assert!((one.report().energy.ratio - two.report().energy.ratio).abs() < 1e-15);
    assert_eq!(two.samples(), 2);
}
