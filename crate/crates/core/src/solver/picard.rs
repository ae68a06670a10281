//! Fixed-point iteration of the integral operator near `r = 0`.
//!
//! On a uniform grid of `[0, ρ]` the operator is
//!
//! ```text
//!   w(r)^{p−1−α}  = (δ/(n−1)) r^{−δ} ∫₀ʳ τ^δ f₁(τ) g₁(v) dτ
//!   v'(r)^{p−1}   = r^{1−n} ∫₀ʳ τ^{n−1} f₂(τ) g₂(v) h(w) dτ
//!   u = u0 + ∫ w,   v = v0 + ∫ v'
//! ```
//!
//! Every integrand is a power of `τ` times a smooth factor; the power is
//! integrated exactly and the smooth factor linearly, which keeps the
//! quadrature second order right up to the origin.

use crate::problem::ProblemSpec;

use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub dv: Vec<f64>,
    /// `w / r^θ`, with its limit at `r = 0`.
    pub w_scaled: Vec<f64>,
    /// `v' / r^γ` for the leading power `γ` of `v'` at the origin.
    pub dv_scaled: Vec<f64>,
}

impl Segment {
    /// The constant pair `(u0, v0)` on a uniform grid of `[0, rho]`.
    pub fn constant(u0: f64, v0: f64, rho: f64, nodes: usize) -> Self {
        let r: Vec<f64> = (0..nodes).map(|i| rho * i as f64 / (nodes - 1) as f64).collect();
        let len = r.len();
        Self {
            r,
            u: vec![u0; len],
            v: vec![v0; len],
            w: vec![0.0; len],
            dv: vec![0.0; len],
            w_scaled: vec![0.0; len],
            dv_scaled: vec![0.0; len],
        }
    }

    /// Measured on the scaled derivatives, which stay O(1) where `w` and
    /// `v'` themselves underflow.
    fn relative_change(&self, other: &Segment) -> f64 {
        let cols = [
            (&self.u, &other.u),
            (&self.v, &other.v),
            (&self.w_scaled, &other.w_scaled),
            (&self.dv_scaled, &other.dv_scaled),
        ];
        cols.iter()
            .map(|(a, b)| {
                let scale = b.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
                let diff = a.iter().zip(b.iter()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
                diff / scale
            })
            .fold(0.0, f64::max)
    }

    fn is_finite(&self) -> bool {
        [&self.u, &self.v, &self.w, &self.dv]
            .iter()
            .all(|c| c.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub nodes: usize,
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub max_retries: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            nodes: 401,
            rel_tol: 1e-13,
            max_iterations: 100,
            max_retries: 20,
        }
    }
}

/// Weights `(wa, wb)` with `∫ₐᵇ τ^γ F dτ ≈ wa·F(a) + wb·F(b)` for linear `F`.
pub(crate) fn product_trapezoid_weights(a: f64, b: f64, gamma: f64) -> (f64, f64) {
    let h = b - a;
    if a == 0.0 {
        let m0 = b.powf(gamma + 1.0) / (gamma + 1.0);
        let m1 = b.powf(gamma + 2.0) / (gamma + 2.0);
        let wb = m1 / h;
        return (m0 - wb, wb);
    }
    // Moments relative to a, written with expm1/ln1p to survive h ≪ a.
    let l = (h / a).ln_1p();
    let e = |c: f64| (c * l).exp_m1() / c;
    let m0 = a.powf(gamma + 1.0) * e(gamma + 1.0);
    let d = a.powf(gamma + 2.0) * (e(gamma + 2.0) - e(gamma + 1.0));
    let wb = d / h;
    (m0 - wb, wb)
}

/// Cumulative `∫₀^{rᵢ} τ^γ F(τ) dτ` on the grid.
fn cumulative(r: &[f64], gamma: f64, f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.len());
    out.push(0.0);
    for i in 0..r.len() - 1 {
        let (wa, wb) = product_trapezoid_weights(r[i], r[i + 1], gamma);
        out.push(out[i] + wa * f[i] + wb * f[i + 1]);
    }
    out
}

/// `∫₀^{rᵢ} τ^γ F(τ) dτ / rᵢ^c` for `c ≤ γ + 1`, accumulated in normalized
/// form so that neither the integral nor `rᵢ^c` underflows. The entry at
/// `r = 0` is the limit.
fn normalized_cumulative(r: &[f64], gamma: f64, c: f64, f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(r.len());
    out.push(if gamma + 1.0 == c { f[0] / (gamma + 1.0) } else { 0.0 });
    for i in 0..r.len() - 1 {
        let (a, b) = (r[i], r[i + 1]);
        let (wa, wb) = normalized_weights(a, b, gamma, c);
        let carry = if a == 0.0 { 0.0 } else { out[i] * (a / b).powf(c) };
        out.push(carry + wa * f[i] + wb * f[i + 1]);
    }
    out
}

/// `product_trapezoid_weights(a, b, γ)` divided by `b^c`.
fn normalized_weights(a: f64, b: f64, gamma: f64, c: f64) -> (f64, f64) {
    let h = b - a;
    if a == 0.0 {
        let s = b.powf(gamma + 1.0 - c);
        let wb = s / (gamma + 2.0);
        return (s / (gamma + 1.0) - wb, wb);
    }
    let l = (h / a).ln_1p();
    let e = |k: f64| (k * l).exp_m1() / k;
    let ratio = (a / b).powf(c);
    let m0 = ratio * a.powf(gamma + 1.0 - c) * e(gamma + 1.0);
    let d = ratio * a.powf(gamma + 2.0 - c) * (e(gamma + 2.0) - e(gamma + 1.0));
    let wb = d / h;
    (m0 - wb, wb)
}

/// One application of the operator to `seg`, with both components updated
/// from the previous iterate.
pub fn apply_operator(spec: &ProblemSpec, u0: f64, v0: f64, seg: &Segment) -> Result<Segment, SolverError> {
    let theta = spec.theta()?;
    let delta = spec.delta()?;
    let p = spec.p();
    let n = spec.n() as f64;
    let r = &seg.r;
    let len = r.len();

    // u-component
    let f1g1: Vec<f64> = (0..len).map(|i| spec.f1().eval(r[i]) * spec.g1().eval(seg.v[i])).collect();
    let c1 = delta / (n - 1.0);
    let k1: Vec<f64> = normalized_cumulative(r, delta, delta + 1.0, &f1g1).iter().map(|a| c1 * a).collect();
    let w_scaled: Vec<f64> = k1.iter().map(|k| k.powf(theta)).collect();
    let w: Vec<f64> = (0..len).map(|i| r[i].powf(theta) * w_scaled[i]).collect();
    let u_int = cumulative(r, theta, &w_scaled);
    let u: Vec<f64> = u_int.iter().map(|x| u0 + x).collect();

    // v-component, term by term in h(w) = Σ cⱼ τ^{θeⱼ} (w/τ^θ)^{eⱼ}
    let sigma = theta * spec.h().lowest().exponent;
    let f2g2: Vec<f64> = (0..len).map(|i| spec.f2().eval(r[i]) * spec.g2().eval(seg.v[i])).collect();
    let mut k2 = vec![0.0; len];
    for term in spec.h().terms() {
        let phi: Vec<f64> = (0..len)
            .map(|i| term.coeff * f2g2[i] * pow0(seg.w_scaled[i], term.exponent))
            .collect();
        let kj = normalized_cumulative(r, n - 1.0 + theta * term.exponent, n + sigma, &phi);
        for (acc, x) in k2.iter_mut().zip(kj) {
            *acc += x;
        }
    }
    let inv = 1.0 / (p - 1.0);
    let dv_scaled: Vec<f64> = k2.iter().map(|k| k.powf(inv)).collect();
    let gamma_v = (1.0 + sigma) * inv;
    let dv: Vec<f64> = (0..len).map(|i| r[i].powf(gamma_v) * dv_scaled[i]).collect();
    let v_int = cumulative(r, gamma_v, &dv_scaled);
    let v: Vec<f64> = v_int.iter().map(|x| v0 + x).collect();

    Ok(Segment {
        r: r.clone(),
        u,
        v,
        w,
        dv,
        w_scaled,
        dv_scaled,
    })
}

/// `x^e` with `0^0 = 1`.
fn pow0(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Iterates the operator from the constant pair until successive iterates
/// agree to `opts.rel_tol`, halving `rho` whenever the iteration stalls.
pub fn picard_bootstrap(
    spec: &ProblemSpec,
    u0: f64,
    v0: f64,
    rho: f64,
    opts: BootstrapOptions,
) -> Result<Segment, SolverError> {
    if !(u0 > 0.0 && v0 > 0.0) {
        return Err(SolverError::NonPositiveInitial { u0, v0 });
    }
    spec.theta()?;
    let mut radius = rho;
    for _ in 0..=opts.max_retries {
        let mut seg = Segment::constant(u0, v0, radius, opts.nodes);
        for _ in 0..opts.max_iterations {
            let next = apply_operator(spec, u0, v0, &seg)?;
            if !next.is_finite() {
                break;
            }
            let change = next.relative_change(&seg);
            seg = next;
            if change < opts.rel_tol {
                return Ok(seg);
            }
        }
        radius *= 0.5;
    }
    Err(SolverError::NoContraction {
        retries: opts.max_retries,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_linear_factors_exactly() {
        for &(a, b, g) in &[(0.0, 0.3, 2.0), (0.2, 0.25, 2.0), (1.0, 1.001, 0.5), (3.0, 4.0, 1.7)] {
            let (wa, wb) = product_trapezoid_weights(a, b, g);
            // F = 1 and F = τ
            let m0 = (f64::powf(b, g + 1.0) - f64::powf(a, g + 1.0)) / (g + 1.0);
            let m1 = (f64::powf(b, g + 2.0) - f64::powf(a, g + 2.0)) / (g + 2.0);
            assert!(((wa + wb) - m0).abs() <= 1e-12 * m0, "{a} {b} {g}");
            assert!(((wa * a + wb * b) - m1).abs() <= 1e-12 * m1);
        }
    }

    fn spec_a() -> ProblemSpec {
        ProblemSpec::from_strs(2.0, 0.0, 3, ["1", "1", "t", "1", "t"]).unwrap()
    }

    #[test]
    fn first_iterate_from_constant_pair() {
        let spec = spec_a();
        let seg = Segment::constant(1.0, 1.0, 0.1, 101);
        let next = apply_operator(&spec, 1.0, 1.0, &seg).unwrap();
        for i in 0..seg.r.len() {
            let r = seg.r[i];
            assert!((next.u[i] - (1.0 + r * r / 6.0)).abs() < 1e-15);
            assert!((next.w[i] - r / 3.0).abs() < 1e-15);
            assert_eq!(next.v[i], 1.0);
            assert_eq!(next.dv[i], 0.0);
        }
    }

    #[test]
    fn converged_segment_matches_series() {
        let spec = spec_a();
        let seg = picard_bootstrap(&spec, 1.0, 1.0, 0.1, BootstrapOptions::default()).unwrap();
        let r = *seg.r.last().unwrap();
        assert_eq!(r, 0.1);
        let u = *seg.u.last().unwrap();
        let v = *seg.v.last().unwrap();
        assert!((u - (1.0 + r * r / 6.0)).abs() < 1e-6);
        assert!((v - (1.0 + r.powi(3) / 36.0)).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_data() {
        let spec = spec_a();
        assert!(matches!(
            picard_bootstrap(&spec, 0.0, 1.0, 0.1, BootstrapOptions::default()),
            Err(SolverError::NonPositiveInitial { .. })
        ));
    }
}
