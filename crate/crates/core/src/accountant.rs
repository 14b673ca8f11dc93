//! Rényi-DP accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! One DP-SGD step with sampling rate `q` and noise multiplier `σ` has, at
//! order `α`, Rényi divergence `ln(A_α) / (α − 1)` where
//!
//! ```text
//! A_α = E_{z ~ N(0, σ²)} [ ((1 − q) + q·exp((2z − 1) / (2σ²)))^α ]
//! ```
//!
//! For integer `α` this expands binomially into
//! `Σ_k C(α, k) (1 − q)^{α−k} q^k exp((k² − k) / (2σ²))`, summed here in log
//! space. Fractional orders use the two-sided series in which each term pairs a
//! generalized binomial coefficient with a Gaussian tail mass (`erfc`),
//! truncated once both tails fall below `e^-30`. With `q = 1` the mechanism is
//! the plain Gaussian one and the divergence is `α / (2σ²)` exactly.
//!
//! RDP composes additively over steps. The `(ε, δ)` conversion is
//! `ε = min_α [T·rdp(α) + ln(1/δ) / (α − 1)]`.
//!
//! Everything here is `f64`; the binomial sums overflow or lose all precision
//! in linear space at small `q`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// δ used throughout unless a run overrides it.
pub const DEFAULT_DELTA: f64 = 1e-5;

/// ε of binary randomized response, `ln 3 ≈ 1.1`; the usual "good privacy" anchor.
pub const RANDOMIZED_RESPONSE_EPSILON: f64 = 1.098_612_288_668_109_8;

/// Smallest and largest noise multipliers [`calibrate_sigma`] will consider.
pub const SIGMA_SEARCH_RANGE: (f64, f64) = (0.3, 1e4);

/// Relative tolerance of [`calibrate_sigma`] on the achieved ε.
pub const CALIBRATION_TOLERANCE: f64 = 1e-3;

/// The order grid: 1.25, 1.5, 1.75, then 2 to 64 in steps of 0.5, then every
/// integer from 65 to 256.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75];
    orders.extend((4..=128).map(|i| i as f64 * 0.5));
    orders.extend((65..=256).map(|i| i as f64));
    orders
}

/// Per-order RDP of one mechanism invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    pub orders: Vec<f64>,
    pub values: Vec<f64>,
    pub q: f64,
    pub sigma: f64,
}

impl RdpCurve {
    /// The curve after `steps` compositions.
    pub fn compose(&self, steps: u64) -> RdpCurve {
        RdpCurve {
            values: self.values.iter().map(|v| v * steps as f64).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub best_order: f64,
    pub delta: f64,
    pub steps: u64,
    pub sigma: f64,
    pub q: f64,
}

impl EpsilonReport {
    /// Human-readable aligned block.
    pub fn to_text(&self) -> String {
        format!(
            "epsilon     {:.6}\nbest_order  {}\ndelta       {:e}\nsteps       {}\nsigma       {:.6}\nq           {}\n",
            self.epsilon, self.best_order, self.delta, self.steps, self.sigma, self.q
        )
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^a − e^b)` for `a ≥ b`.
fn log_sub(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// `ln(erfc(x))`, switching to the asymptotic expansion where `erfc` underflows.
fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        return erfc(x).ln();
    }
    let x2 = x * x;
    let series = 1.0 - 1.0 / (2.0 * x2) + 3.0 / (4.0 * x2 * x2) - 15.0 / (8.0 * x2 * x2 * x2)
        + 105.0 / (16.0 * x2 * x2 * x2 * x2);
    -x2 - x.ln() - 0.5 * std::f64::consts::PI.ln() + series.ln()
}

fn log_a_integer(q: f64, sigma: f64, alpha: u64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let mut acc = f64::NEG_INFINITY;
    let mut log_binom = 0.0;
    for k in 0..=alpha {
        if k > 0 {
            log_binom += ((alpha - k + 1) as f64).ln() - (k as f64).ln();
        }
        let kf = k as f64;
        let term =
            log_binom + kf * lq + (alpha - k) as f64 * l1q + (kf * kf - kf) / (2.0 * sigma * sigma);
        acc = log_add(acc, term);
    }
    acc
}

fn log_a_fractional(q: f64, sigma: f64, alpha: f64) -> f64 {
    let (lq, l1q) = (q.ln(), (-q).ln_1p());
    let s2 = sigma * sigma;
    let z0 = s2 * (1.0 / q - 1.0).ln() + 0.5;
    let mut pos0 = f64::NEG_INFINITY;
    let mut neg0 = f64::NEG_INFINITY;
    let mut pos1 = f64::NEG_INFINITY;
    let mut neg1 = f64::NEG_INFINITY;
    // Generalized binomial coefficient tracked as ln|C(α, i)| and its sign.
    let mut log_coef = 0.0;
    let mut sign = 1.0;
    let mut i = 0u64;
    loop {
        let fi = i as f64;
        let j = alpha - fi;
        let log_t0 = log_coef + fi * lq + j * l1q;
        let log_t1 = log_coef + j * lq + fi * l1q;
        let log_e0 = 0.5f64.ln() + log_erfc((fi - z0) / (std::f64::consts::SQRT_2 * sigma));
        let log_e1 = 0.5f64.ln() + log_erfc((z0 - j) / (std::f64::consts::SQRT_2 * sigma));
        let log_s0 = log_t0 + (fi * fi - fi) / (2.0 * s2) + log_e0;
        let log_s1 = log_t1 + (j * j - j) / (2.0 * s2) + log_e1;
        if sign > 0.0 {
            pos0 = log_add(pos0, log_s0);
            pos1 = log_add(pos1, log_s1);
        } else {
            neg0 = log_add(neg0, log_s0);
            neg1 = log_add(neg1, log_s1);
        }
        if log_s0.max(log_s1) < -30.0 && fi > alpha {
            break;
        }
        if i > 100_000 {
            break;
        }
        let step = alpha - fi;
        if step == 0.0 {
            break;
        }
        log_coef += step.abs().ln() - (fi + 1.0).ln();
        if step < 0.0 {
            sign = -sign;
        }
        i += 1;
    }
    log_add(log_sub(pos0, neg0), log_sub(pos1, neg1))
}

fn rdp_single(q: f64, sigma: f64, alpha: f64) -> f64 {
    if q == 1.0 {
        return alpha / (2.0 * sigma * sigma);
    }
    let log_a = if alpha.fract() == 0.0 {
        log_a_integer(q, sigma, alpha as u64)
    } else {
        log_a_fractional(q, sigma, alpha)
    };
    (log_a / (alpha - 1.0)).max(0.0)
}

/// RDP of one subsampled-Gaussian step at each of `orders`.
pub fn rdp_step(q: f64, sigma: f64, orders: &[f64]) -> Result<RdpCurve> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!(
            "noise multiplier must be positive and finite, got {sigma}"
        )));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::arg(format!("sampling rate must be in (0, 1], got {q}")));
    }
    if let Some(&bad) = orders.iter().find(|&&a| !(a > 1.0) || !a.is_finite()) {
        return Err(Error::arg(format!("RDP orders must be finite and > 1, got {bad}")));
    }
    Ok(RdpCurve {
        orders: orders.to_vec(),
        values: orders.iter().map(|&a| rdp_single(q, sigma, a)).collect(),
        q,
        sigma,
    })
}

/// Converts a one-step curve composed `steps` times into `(ε, δ)`.
pub fn to_epsilon(curve: &RdpCurve, steps: u64, delta: f64) -> Result<EpsilonReport> {
    if curve.orders.is_empty() || curve.orders.len() != curve.values.len() {
        return Err(Error::arg("RDP curve is empty or ragged"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::arg(format!("delta must be in (0, 1), got {delta}")));
    }
    let log_inv_delta = -delta.ln();
    let (epsilon, best_order) = curve
        .orders
        .iter()
        .zip(&curve.values)
        .map(|(&a, &v)| (steps as f64 * v + log_inv_delta / (a - 1.0), a))
        .fold((f64::INFINITY, curve.orders[0]), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        });
    Ok(EpsilonReport {
        epsilon,
        best_order,
        delta,
        steps,
        sigma: curve.sigma,
        q: curve.q,
    })
}

/// ε after `steps` subsampled-Gaussian steps, over the default order grid.
pub fn epsilon(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<EpsilonReport> {
    to_epsilon(&rdp_step(q, sigma, &default_orders())?, steps, delta)
}

/// Finds a noise multiplier whose ε is at most `target` and within
/// [`CALIBRATION_TOLERANCE`] of it, by geometric bisection over
/// [`SIGMA_SEARCH_RANGE`].
pub fn calibrate_sigma(target: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::arg(format!(
            "target epsilon must be positive and finite, got {target}"
        )));
    }
    if steps == 0 {
        return Err(Error::arg("steps must be positive"));
    }
    let fail = |message: String| Error::Calibration {
        message,
        target,
        q,
        steps,
        delta,
    };
    let orders = default_orders();
    let eps_at = |sigma: f64| -> Result<f64> {
        Ok(to_epsilon(&rdp_step(q, sigma, &orders)?, steps, delta)?.epsilon)
    };
    let within = |eps: f64| eps <= target && (target - eps) / target <= CALIBRATION_TOLERANCE;

    let (mut lo, mut hi) = SIGMA_SEARCH_RANGE;
    let eps_hi = eps_at(hi)?;
    if eps_hi > target {
        return Err(fail(format!(
            "unreachable: sigma = {hi} still gives epsilon {eps_hi:.6}"
        )));
    }
    let eps_lo = eps_at(lo)?;
    if eps_lo <= target {
        if within(eps_lo) {
            return Ok(lo);
        }
        return Err(fail(format!(
            "target too loose: sigma = {lo} already gives epsilon {eps_lo:.6}"
        )));
    }
    let mut eps_best = eps_hi;
    for _ in 0..200 {
        if within(eps_best) {
            return Ok(hi);
        }
        let mid = (lo * hi).sqrt();
        let eps_mid = eps_at(mid)?;
        if eps_mid > target {
            lo = mid;
        } else {
            hi = mid;
            eps_best = eps_mid;
        }
    }
    if within(eps_best) {
        return Ok(hi);
    }
    Err(fail(format!(
        "bisection stalled at sigma in [{lo}, {hi}] with epsilon {eps_best:.6}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_batch_is_plain_gaussian() {
        let orders = [1.25, 1.5, 2.0, 2.5, 7.0, 64.0, 200.0];
        for sigma in [0.5, 1.0, 3.7] {
            let c = rdp_step(1.0, sigma, &orders).unwrap();
            for (&a, &v) in orders.iter().zip(&c.values) {
                let exact = a / (2.0 * sigma * sigma);
                assert!((v - exact).abs() <= 1e-12 * exact);
            }
        }
    }

    #[test]
    fn integer_binomial_matches_closed_form_at_order_two() {
        // A_2 = (1 − q)² + 2q(1 − q) + q² e^{1/σ²}
        for (q, sigma) in [(0.01f64, 1.0f64), (0.3, 0.7), (0.001, 4.0)] {
            // which is 1 + q²(e^{1/σ²} − 1).
            let ln_a2 = (q * q * (1.0 / (sigma * sigma)).exp_m1()).ln_1p();
            let v = rdp_step(q, sigma, &[2.0]).unwrap().values[0];
            assert!((v - ln_a2).abs() <= 1e-10 * ln_a2, "{v} vs {ln_a2}");
        }
    }

    #[test]
    fn fractional_orders_interpolate_integers() {
        let c = rdp_step(0.02, 1.1, &[2.0, 2.5, 3.0, 3.5, 4.0]).unwrap();
        assert!(c.values.windows(2).all(|w| w[0] < w[1]), "{:?}", c.values);
    }

    #[test]
    fn direct_substitution() {
        let curve = RdpCurve {
            orders: vec![2.0],
            values: vec![1.0],
            q: 1.0,
            sigma: 1.0,
        };
        let r = to_epsilon(&curve, 1, 1e-5).unwrap();
        assert!((r.epsilon - (1.0 + 1e5f64.ln())).abs() < 1e-12);
        assert!((r.epsilon - 12.5129).abs() < 1e-4);
        assert_eq!(r.best_order, 2.0);
    }

    #[test]
    fn errors() {
        assert!(rdp_step(0.1, 0.0, &[2.0]).is_err());
        assert!(rdp_step(0.1, -1.0, &[2.0]).is_err());
        assert!(rdp_step(0.0, 1.0, &[2.0]).is_err());
        assert!(rdp_step(1.5, 1.0, &[2.0]).is_err());
        assert!(rdp_step(0.5, 1.0, &[1.0]).is_err());
        let empty = RdpCurve {
            orders: vec![],
            values: vec![],
            q: 0.1,
            sigma: 1.0,
        };
        assert!(to_epsilon(&empty, 1, 1e-5).is_err());
        let c = rdp_step(0.1, 1.0, &[2.0]).unwrap();
        assert!(to_epsilon(&c, 1, 0.0).is_err());
        assert!(to_epsilon(&c, 1, 1.0).is_err());
    }

    #[test]
    fn unreachable_target_reports_diagnostics() {
        // A single full-batch step can never get below ~1e-3 with σ ≤ 1e4.
        let err = calibrate_sigma(1e-9, 1e-5, 1.0, 1_000_000).unwrap_err();
        match err {
            Error::Calibration { target, steps, .. } => {
                assert_eq!(target, 1e-9);
                assert_eq!(steps, 1_000_000);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(calibrate_sigma(f64::INFINITY, 1e-5, 0.01, 100).is_err());
        assert!(calibrate_sigma(-1.0, 1e-5, 0.01, 100).is_err());
    }

    #[test]
    fn log_erfc_is_continuous_at_switch() {
        let below = erfc(24.999).ln();
        let above = log_erfc(25.0);
        assert!((below - above).abs() < 0.06);
        assert!((log_erfc(25.0) - log_erfc(25.0 - 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn randomized_response_anchor() {
        assert!((RANDOMIZED_RESPONSE_EPSILON - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn order_grid_shape() {
        let o = default_orders();
        assert_eq!(&o[..6], &[1.25, 1.5, 1.75, 2.0, 2.5, 3.0]);
        assert!(o.contains(&64.0) && o.contains(&63.5) && o.contains(&65.0));
        assert_eq!(*o.last().unwrap(), 256.0);
        assert!(o.windows(2).all(|w| w[0] < w[1]));
    }
}
