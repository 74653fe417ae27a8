//! Thin 2D FFT layer over rustfft with per-thread plan caching.
//!
//! Conventions: `forward2` is the analysis transform and includes the `1/N²`
//! factor, so coefficients are the Fourier coefficients of the trigonometric
//! interpolant; `inverse2` is plain synthesis. Both operate in place on a
//! row-major `n×n` complex buffer.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

type PlanCache = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

thread_local! {
    static PLANS: RefCell<PlanCache> = RefCell::new(HashMap::new());
    static SCRATCH: RefCell<Vec<Complex64>> = const { RefCell::new(Vec::new()) };
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(len, dir)
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for row in 0..n {
        for col in (row + 1)..n {
            data.swap(row * n + col, col * n + row);
        }
    }
}

fn pass_both_axes(data: &mut [Complex64], n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n * n);
    let fft = plan(n, inverse);
    SCRATCH.with(|s| {
        let mut scratch = s.borrow_mut();
        let need = fft.get_inplace_scratch_len();
        if scratch.len() < need {
            scratch.resize(need, Complex64::default());
        }
        fft.process_with_scratch(data, &mut scratch); // all rows in one call
        transpose(data, n);
        fft.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    });
}

/// Forward (analysis) transform, normalised by `1/n²`.
pub fn forward2(data: &mut [Complex64], n: usize) {
    pass_both_axes(data, n, false);
    let scale = 1.0 / (n * n) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Inverse (synthesis) transform, unnormalised.
pub fn inverse2(data: &mut [Complex64], n: usize) {
    pass_both_axes(data, n, true);
}
