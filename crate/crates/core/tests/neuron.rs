use proptest::prelude::*;
use spikeforge_core::{step_if, step_if_burst, NeuronState};

fn run_burst(current: &[f64], gamma: u32, steps: usize) -> (Vec<u32>, NeuronState) {
    let mut s = NeuronState::new(1);
    let train = (0..steps).map(|t| step_if_burst(&mut s, &[current[t % current.len()]], gamma, 1.0)[0]).collect();
    (train, s)
}

proptest! {
    #[test]
    fn constant_current_closed_form(k in 0u32..=320, t in 1usize..=256, extra in 0u32..3) {
        // k/64 is exact in binary, so every partial sum is exact.
        let a = f64::from(k) / 64.0;
        let gamma = (a.ceil() as u32).max(1) + extra;
        let (_, s) = run_burst(&[a], gamma, t);
        prop_assert_eq!(u64::from(s.spikes()[0]), (a * t as f64).floor() as u64);
    }

    #[test]
    fn gamma_one_is_plain_if(current in prop::collection::vec(-2.0f64..3.0, 1..64)) {
        let mut burst = NeuronState::new(1);
        let mut plain = NeuronState::new(1);
        for &c in &current {
            prop_assert_eq!(step_if_burst(&mut burst, &[c], 1, 1.0), step_if(&mut plain, &[c], 1.0));
        }
        prop_assert_eq!(burst.potentials(), plain.potentials());
    }

    #[test]
    fn charge_is_conserved(
        current in prop::collection::vec(-1.5f64..4.0, 1..128),
        gamma in 1u32..6,
        v_th in 0.25f64..2.0,
    ) {
        let mut s = NeuronState::new(1);
        let mut total = 0.0;
        for &c in &current {
            let out = step_if_burst(&mut s, &[c], gamma, v_th);
            prop_assert!(out[0] <= gamma);
            total += c;
        }
        let lhs = f64::from(s.spikes()[0]) * v_th + s.potentials()[0];
        prop_assert!((lhs - total).abs() <= 1e-9 * current.len() as f64, "{lhs} vs {total}");
    }

    #[test]
    fn below_threshold_never_fires(current in prop::collection::vec(-3.0f64..0.0, 1..64), gamma in 1u32..5) {
        let mut s = NeuronState::new(1);
        for &c in &current {
            prop_assert_eq!(step_if_burst(&mut s, &[c], gamma, 1.0)[0], 0);
        }
    }
}

#[test]
fn example_trains() {
    let (train, s) = run_burst(&[0.5], 1, 10);
    assert_eq!(train, [0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    assert_eq!(s.spikes()[0], 5);

    let (_, s) = run_burst(&[1.3], 1, 10);
    assert_eq!(s.spikes()[0], 10);
    assert!((s.potentials()[0] - 3.0).abs() < 1e-9);

    let (train, s) = run_burst(&[1.3], 2, 10);
    assert_eq!(train, [1, 1, 1, 2, 1, 1, 2, 1, 1, 2]);
    assert_eq!(s.spikes()[0], 13);
    assert!(s.potentials()[0].abs() < 1e-9);
}
