//! Finite-difference derivatives on non-uniform grids.

/// Weights `c` with `f'(x0) ≈ Σ c_j f(x_j)` for the interpolating polynomial
/// through `xs` (Fornberg's recursion, first derivative only).
pub fn derivative_weights(xs: &[f64], x0: f64) -> Vec<f64> {
    let n = xs.len();
    // c[j][k]: weight of node j for the k-th derivative, k ∈ {0, 1}
    let mut c = vec![[0.0_f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                c[i][1] = c1 * (c[i - 1][0] - c5 * c[i - 1][1]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            c[j][1] = (c4 * c[j][1] - c[j][0]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Derivative at node `i` from a stencil of `width` nodes, centred where possible.
pub fn derivative(x: &[f64], y: &[f64], i: usize, width: usize) -> f64 {
    let n = x.len();
    let width = width.min(n);
    let half = width / 2;
    let start = i.saturating_sub(half).min(n - width);
    let xs = &x[start..start + width];
    let w = derivative_weights(xs, x[i]);
    w.iter().zip(&y[start..start + width]).map(|(c, v)| c * v).sum()
}
