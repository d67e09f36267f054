//! Product trapezoidal rule on (S¹)ⁿ.
//!
//! With N nodes per circle the rule integrates e^{i d·θ} exactly unless some
//! dᵢ ≡ 0 mod N, so band-limited integrands of per-axis degree < N are
//! averaged exactly. That is the whole justification for Haar averaging by
//! grid sums in this crate: scrambles are built band-limited.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Averages a matrix-valued function over the torus grid
/// `θ ∈ {2πj/N}ⁿ`, weight N⁻ⁿ per node.
pub fn torus_average<F>(dims: usize, nodes: usize, mut f: F) -> DMatrix<Complex64>
where
    F: FnMut(&[f64]) -> DMatrix<Complex64>,
{
    assert!(nodes >= 1);
    let step = std::f64::consts::TAU / nodes as f64;
    let mut idx = vec![0usize; dims];
    let mut theta = vec![0.0; dims];
    let mut acc: Option<DMatrix<Complex64>> = None;
    let total = nodes.pow(dims as u32);
    for _ in 0..total {
        for (t, &i) in theta.iter_mut().zip(idx.iter()) {
            *t = step * i as f64;
        }
        let value = f(&theta);
        acc = Some(match acc {
            None => value,
            Some(a) => a + value,
        });
        // Odometer increment.
        for pos in 0..dims {
            idx[pos] += 1;
            if idx[pos] < nodes {
                break;
            }
            idx[pos] = 0;
        }
    }
    acc.expect("at least one node") / Complex64::new(total as f64, 0.0)
}
