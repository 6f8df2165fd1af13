use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use num_complex::Complex64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) struct Plan {
    fft: Arc<dyn Fft<f64>>,
}

impl Plan {
    pub(crate) fn process(&self, buf: &mut [Complex64]) {
        if buf.len() > 1 {
            self.fft.process(buf);
        }
    }
}

/// Unnormalized transform of length `n`; the caller applies `1/n` on inverse.
pub(crate) fn plan(n: usize, inverse: bool) -> Plan {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        };
        Plan { fft }
    })
}
