//! Standard normal quantile.
//!
//! Rational approximation 26.2.23 from Abramowitz & Stegun, absolute error
//! below 4.5e-4 over the open unit interval. That accuracy is plenty for the
//! capacity margins this solver works with; the Monte Carlo feasibility check
//! in `oracle` cross-validates the whole chain.

const C0: f64 = 2.515517;
const C1: f64 = 0.802853;
const C2: f64 = 0.010328;
const D1: f64 = 1.432788;
const D2: f64 = 0.189269;
const D3: f64 = 0.001308;

/// z such that P(Z <= z) = q for a standard normal Z.
///
/// Returns -inf / +inf at q = 0 / q = 1. Callers are expected to keep q in
/// [0, 1]; anything else yields NaN.
pub fn standard_normal_quantile(q: f64) -> f64 {
    if !(0.0..=1.0).contains(&q) {
        return f64::NAN;
    }
    if q == 0.0 {
        return f64::NEG_INFINITY;
    }
    if q == 1.0 {
        return f64::INFINITY;
    }
    if q < 0.5 {
        -upper_tail(q)
    } else {
        upper_tail(1.0 - q)
    }
}

// z with P(Z > z) = p, for p in (0, 0.5].
fn upper_tail(p: f64) -> f64 {
    let t = (-2.0 * p.ln()).sqrt();
    t - (C0 + t * (C1 + t * C2)) / (1.0 + t * (D1 + t * (D2 + t * D3)))
}
