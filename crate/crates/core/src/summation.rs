//! Compensated and thread-count-independent reductions.
//!
//! Every global sum in the crate goes through [`deterministic_sum`]: the input
//! is split into fixed-size chunks (independent of the rayon pool size), each
//! chunk is reduced with Neumaier summation, and the chunk partials are then
//! combined sequentially, again compensated. The result is bitwise identical
//! for any number of worker threads.

use rayon::prelude::*;

/// Chunk length used by the parallel reductions.
pub const CHUNK: usize = 4096;

/// Kahan–Babuška–Neumaier accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sequential sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Sum of `f(i)` for `i in 0..n`, reproducible across thread counts.
pub fn deterministic_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let n_chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(n);
            compensated_sum((start..end).map(&f))
        })
        .collect();
    compensated_sum(partials)
}

/// Maximum of `f(i)` over `0..n`; NaN-propagating, 0 for empty input.
pub fn deterministic_max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let fold = |m: f64, v: f64| {
        if m.is_nan() || v.is_nan() {
            f64::NAN
        } else {
            m.max(v)
        }
    };
    (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(&f)
                .fold(0.0, fold)
        })
        .reduce(|| 0.0, fold)
}

/// Sum of a slice, reproducible across thread counts.
pub fn sum_slice(values: &[f64]) -> f64 {
    deterministic_sum(values.len(), |i| values[i])
}

/// Largest absolute value of a slice.
pub fn max_abs(values: &[f64]) -> f64 {
    deterministic_max(values.len(), |i| values[i].abs())
}
