//! Spiking replacements for max pooling over a single window.
//!
//! [`MaxRatePool`] forwards the current spikes of whichever input has the
//! highest cumulative count so far. Because the winner can change over time,
//! its cumulative output can exceed the true maximum. [`LiPool`] emits the
//! increment of the running maximum of cumulative input counts, so its
//! cumulative output always equals the largest cumulative input.
//! [`LateralInhibitionPool`] is the explicit hidden-neuron circuit with
//! mutual inhibition, kept as a cross-check for binary inputs.

use alloc::vec;
use alloc::vec::Vec;

/// Mean of the window counts, forwarded as a fractional current.
pub fn pool_average(counts: &[u32], window: usize) -> f64 {
    debug_assert!(window >= 1);
    counts.iter().map(|&c| f64::from(c)).sum::<f64>() / window as f64
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_first<I: IntoIterator<Item = u64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_val = None;
    for (i, v) in values.into_iter().enumerate() {
        if best_val.map_or(true, |b| v > b) {
            best = i;
            best_val = Some(v);
        }
    }
    best
}

/// Max-rate pooling over one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxRatePool {
    cum: Vec<u64>,
}

impl MaxRatePool {
    /// Window over `n` inputs.
    pub fn new(n: usize) -> Self {
        Self { cum: vec![0; n] }
    }

    /// Adds this step's counts, selects the input with the highest cumulative
    /// count (current step included, lowest index on ties) and forwards that
    /// input's count for this step.
    pub fn step(&mut self, counts: &[u32]) -> u32 {
        debug_assert_eq!(counts.len(), self.cum.len());
        for (c, &s) in self.cum.iter_mut().zip(counts) {
            *c += u64::from(s);
        }
        counts[argmax_first(self.cum.iter().copied())]
    }

    /// Cumulative input counts.
    pub fn cumulative(&self) -> &[u64] {
        &self.cum
    }
}

/// Lateral-inhibition pooling over one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiPool {
    cum: Vec<u64>,
    running_max: u64,
}

impl LiPool {
    /// Window over `n` inputs.
    pub fn new(n: usize) -> Self {
        Self { cum: vec![0; n], running_max: 0 }
    }

    /// Emits `max_i cum_i(t) - max_i cum_i(t-1)`.
    pub fn step(&mut self, counts: &[u32]) -> u32 {
        debug_assert_eq!(counts.len(), self.cum.len());
        for (c, &s) in self.cum.iter_mut().zip(counts) {
            *c += u64::from(s);
        }
        let max = self.cum.iter().copied().max().unwrap_or(0);
        let out = max - self.running_max;
        self.running_max = max;
        out as u32
    }

    /// Cumulative input counts.
    pub fn cumulative(&self) -> &[u64] {
        &self.cum
    }

    /// Cumulative output, equal to the largest cumulative input.
    pub fn emitted(&self) -> u64 {
        self.running_max
    }
}

/// Hidden-layer lateral inhibition circuit for binary spike inputs.
///
/// Hidden neuron `i` integrates `w_exc * s_i(t) + w_inh * sum_{j != i} h_j(t-1)`
/// with `w_exc = 1`, `w_inh = -1`, threshold 1 and soft reset; the output is
/// the number of hidden spikes at each step. Inhibition arrives one step late,
/// so the running output total can lead the running maximum of the inputs by
/// up to `n - 1` spikes but never trails it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LateralInhibitionPool {
    v: Vec<i64>,
    prev: Vec<u32>,
}

impl LateralInhibitionPool {
    /// Circuit with `n` hidden neurons.
    pub fn new(n: usize) -> Self {
        Self { v: vec![0; n], prev: vec![0; n] }
    }

    /// Advances one step and returns the summed hidden spikes.
    pub fn step(&mut self, spikes: &[u32]) -> u32 {
        debug_assert_eq!(spikes.len(), self.v.len());
        let total_prev: i64 = self.prev.iter().map(|&h| i64::from(h)).sum();
        let mut out = 0;
        for ((v, h), &s) in self.v.iter_mut().zip(self.prev.iter_mut()).zip(spikes) {
            let inhibition = total_prev - i64::from(*h);
            *v += i64::from(s) - inhibition;
            *h = u32::from(*v >= 1);
            *v -= i64::from(*h);
            out += *h;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<F: FnMut(&[u32]) -> u32>(trains: &[&[u32]], mut step: F) -> Vec<u32> {
        let t_len = trains[0].len();
        (0..t_len)
            .map(|t| {
                let counts: Vec<u32> = trains.iter().map(|tr| tr[t]).collect();
                step(&counts)
            })
            .collect()
    }

    #[test]
    fn average_pool_values() {
        assert_eq!(pool_average(&[1, 0, 0, 1], 4), 0.5);
        assert_eq!(pool_average(&[0, 0, 0, 0], 4), 0.0);
        assert_eq!(pool_average(&[1, 1, 1, 1], 4), 1.0);
    }

    // Step 1: cum (0,1) -> neuron 2 selected, emits 1. Step 2: cum (1,1),
    // tie -> neuron 1, emits its 1. Total 2 although each input fired once.
    #[test]
    fn max_rate_over_counts_alternating_winner() {
        let mut p = MaxRatePool::new(2);
        let out = run(&[&[0, 1], &[1, 0]], |c| p.step(c));
        assert_eq!(out, vec![1, 1]);
    }

    #[test]
    fn max_rate_single_input_is_identity() {
        let mut p = MaxRatePool::new(1);
        let train = [0, 2, 1, 0, 3];
        assert_eq!(run(&[&train], |c| p.step(c)), train.to_vec());
    }

    #[test]
    fn max_rate_stable_winner() {
        let mut p = MaxRatePool::new(2);
        assert_eq!(run(&[&[1, 0, 1], &[0, 1, 1]], |c| p.step(c)), vec![1, 0, 1]);
    }

    #[test]
    fn lip_corrects_over_count() {
        let mut p = LiPool::new(2);
        assert_eq!(run(&[&[0, 1], &[1, 0]], |c| p.step(c)), vec![1, 0]);
        assert_eq!(p.emitted(), 1);
    }

    #[test]
    fn lip_follows_max() {
        let mut p = LiPool::new(2);
        assert_eq!(run(&[&[1, 0, 1], &[0, 1, 1]], |c| p.step(c)), vec![1, 0, 1]);
        let mut p = LiPool::new(3);
        assert_eq!(run(&[&[0; 4], &[0; 4], &[0; 4]], |c| p.step(c)), vec![0; 4]);
    }

    #[test]
    fn lip_burst_counts() {
        let mut p = LiPool::new(2);
        assert_eq!(run(&[&[3, 0, 0], &[0, 2, 2]], |c| p.step(c)), vec![3, 0, 1]);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax_first([2, 5, 5, 1]), 1);
        assert_eq!(argmax_first([0, 0]), 0);
    }

    #[test]
    fn literal_circuit_single_input_is_identity() {
        let mut p = LateralInhibitionPool::new(1);
        let train = [1, 0, 1, 1, 0];
        assert_eq!(run(&[&train], |c| p.step(c)), train.to_vec());
    }

    #[test]
    fn literal_circuit_leads_cumulative_max() {
        // Both inputs fire at t=1; inhibition only lands at t=2.
        let mut p = LateralInhibitionPool::new(2);
        let out = run(&[&[1, 0, 0], &[1, 0, 0]], |c| p.step(c));
        assert_eq!(out, vec![2, 0, 0]);
    }
}
