//! Semi-analytic reference price for a caplet on the last rate.
//!
//! Rate `N` has a deterministic drift under the terminal measure, so with a
//! constant volatility and a pure-jump NIG driver
//! `L(T_N, T_N) = L(0, T_N) exp(-kappa(lambda) T_N + lambda H_{T_N})` with
//! `H_{T_N} ~ NIG(alpha, beta, delta_bar T_N, mu T_N)`. The caplet is then a
//! one-dimensional integral against the NIG density.

use crate::error::{Error, Result};
use crate::levy_driver::{nig_cumulant, NigParams};
use crate::quadrature::integrate_panels;
use crate::special::bessel_k1_scaled;
use crate::term_structure::MarketSetup;

/// Density of NIG(alpha, beta, delta, mu) at `x`.
pub fn nig_density(x: f64, alpha: f64, beta: f64, delta: f64, mu: f64) -> f64 {
    let gamma = (alpha * alpha - beta * beta).sqrt();
    let y = x - mu;
    let r = (delta * delta + y * y).sqrt();
    let arg = alpha * r;
    // exp(delta gamma + beta y) K_1(alpha r), folded so the exponentials do not overflow
    let log_scale = delta * gamma + beta * y - arg;
    alpha * delta / std::f64::consts::PI * log_scale.exp() * bessel_k1_scaled(arg) / r
}

/// `delta_N B(0, T*) E[(L(T_N, T_N) - K)^+]` by quadrature over the NIG law of `H_{T_N}`.
pub fn last_rate_caplet(setup: &MarketSetup, strike: f64) -> Result<f64> {
    let n = setup.n_rates();
    let driver = &setup.driver;
    if !driver.drift.is_identically_zero() || !driver.gauss.is_identically_zero() {
        return Err(Error::InvalidParameter("reference price needs a pure-jump driver".into()));
    }
    let lambda = setup.vols.level(n, 0);
    if (0..n).any(|k| setup.vols.level(n, k) != lambda) {
        return Err(Error::InvalidParameter("reference price needs a constant last-rate volatility".into()));
    }
    let p: NigParams = driver.jumps;
    let t = setup.tenor.date(n);
    let l0 = setup.initial_libor()?[n - 1];
    let kappa = nig_cumulant(lambda, &p)?;
    let (delta, mu) = (p.delta_bar * t, p.mu * t);
    let rate = |h: f64| l0 * (lambda * h - kappa * t).exp();
    let integrand = |h: f64| (rate(h) - strike).max(0.0) * nig_density(h, p.alpha, p.beta, delta, mu);

    // From the exercise boundary (or far in the left tail) to where the
    // integrand has died out on the right.
    let sd = (p.variance() * t).sqrt();
    let center = p.mean() * t;
    let far_left = center - 80.0 * sd;
    let lower = if strike > 0.0 { (((strike / l0).ln() + kappa * t) / lambda).max(far_left) } else { far_left };
    let mut breaks = vec![lower];
    let mut x = lower;
    let mut width = 0.25 * sd;
    loop {
        x += width;
        breaks.push(x);
        if x > center + 5.0 * sd && integrand(x) < 1e-30 {
            break;
        }
        if x > center {
            width *= 1.5;
        }
    }
    let r = integrate_panels(integrand, &breaks, 1e-14, 20_000)?;
    Ok(setup.tenor.accrual(n) * setup.curve.terminal_bond() * r.value)
}
