//! Shared inputs for the kernel benchmarks.

use std::sync::Arc;

use nls_core::{Field, GridSpec};

/// `N = 3, m = 2` box with `n` points on the confined axes and `3n/2` on the free one.
pub fn grid3(n: usize) -> Arc<GridSpec> {
    let n = n | 1;
    Arc::new(GridSpec::new(3, 2, &[6.0, 6.0, 10.0], &[n, n, (3 * n / 2) | 1]).expect("valid grid"))
}

/// Smooth sign-changing bump, odd in `x₁`.
pub fn odd_bump(spec: &Arc<GridSpec>) -> Field {
    Field::from_fn(spec, |z| z[0] * (-z.iter().map(|x| x * x).sum::<f64>() / 2.0).exp())
}
