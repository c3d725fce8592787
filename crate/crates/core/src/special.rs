//! Special functions: modified Bessel function of the second kind of order one
//! and the standard normal distribution function.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Modified Bessel function `K_1(x)` for `x > 0`.
///
/// Ascending series on `(0, 2]`; above that the integral representation
/// `K_1(x) = e^{-x} * int_0^inf exp(-x (cosh t - 1)) cosh t dt`, evaluated with
/// the trapezoidal rule, which converges geometrically for this integrand.
pub fn bessel_k1(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x <= 2.0 {
        k1_series(x)
    } else {
        (-x).exp() * k1_scaled_trapezoid(x)
    }
}

/// `e^x K_1(x)`, finite for all `x > 0`.
pub fn bessel_k1_scaled(x: f64) -> f64 {
    if x.is_nan() || x <= 0.0 {
        return f64::NAN;
    }
    if x <= 2.0 {
        x.exp() * k1_series(x)
    } else {
        k1_scaled_trapezoid(x)
    }
}

fn k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let half_x = 0.5 * x;
    // I_1 and the digamma sum share the (x^2/4)^k / (k! (k+1)!) terms.
    let mut term = 1.0;
    let mut psi_k1 = -EULER_GAMMA; // psi(k + 1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // psi(k + 2)
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..60 {
        i1_sum += term;
        psi_sum += (psi_k1 + psi_k2) * term;
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + 2.0));
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
        if term < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = half_x * i1_sum;
    1.0 / x + (half_x).ln() * i1 - 0.5 * half_x * psi_sum
}

fn k1_scaled_trapezoid(x: f64) -> f64 {
    let h = (0.15 / x.sqrt()).min(0.05);
    // Stop once exp(-x (cosh t - 1)) cosh t < 1e-18.
    let mut sum = 0.5;
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let c = t.cosh();
        let f = (-x * (c - 1.0)).exp() * c;
        sum += f;
        if f < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    h * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from scipy.special.k1.
    const K1_TABLE: &[(f64, f64)] = &[
        (1e-6, 999999.9999927843),
        (0.01, 99.97389411829623),
        (0.1, 9.853844780870606),
        (0.5, 1.6564411200033007),
        (1.0, 0.6019072301972346),
        (1.999, 0.1400498420771096),
        (2.0, 0.13986588181652246),
        (2.001, 0.13968218830176754),
        (2.5, 0.07389081634774705),
        (5.0, 0.004044613445452163),
        (10.0, 1.8648773453825585e-05),
        (50.0, 3.4441022267175555e-23),
        (200.0, 1.228742373472986e-88),
        (600.0, 1.356957918112806e-262),
    ];

    #[test]
    fn k1_matches_reference_table() {
        for &(x, want) in K1_TABLE {
            let got = bessel_k1(x);
            let rel = ((got - want) / want).abs();
            assert!(rel < 1e-13, "K1({x}) = {got}, want {want}, rel {rel:e}");
        }
    }

    #[test]
    fn scaled_k1_stays_finite_past_underflow() {
        for &(x, want) in K1_TABLE {
            let got = bessel_k1_scaled(x) * (-x).exp();
            assert!(((got - want) / want).abs() < 1e-13, "x = {x}");
        }
        let big = bessel_k1_scaled(5000.0);
        let asymptotic = (std::f64::consts::FRAC_PI_2 / 5000.0).sqrt() * (1.0 + 3.0 / 40000.0);
        assert!(((big - asymptotic) / asymptotic).abs() < 1e-8);
    }

    #[test]
    fn k1_rejects_nonpositive() {
        assert!(bessel_k1(0.0).is_nan());
        assert!(bessel_k1(-1.0).is_nan());
    }

    #[test]
    fn norm_cdf_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((norm_cdf(-1.0) + norm_cdf(1.0) - 1.0).abs() < 1e-15);
    }
}
