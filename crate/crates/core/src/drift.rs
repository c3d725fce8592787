//! Terminal-measure drift of the log-LIBOR rates.
//!
//! For rate `i` on an accrual interval with characteristics `(b, c, F)`:
//!
//! ```text
//! b(s, T_i) = -lambda_i b - lambda_i^2 c / 2 - c lambda_i sum_{l>i} u_l lambda_l
//!             - int ((e^{lambda_i x} - 1) prod_{l>i} beta_l(x) - lambda_i x) F(dx)
//! ```
//!
//! with `u_l = delta_l L_l / (1 + delta_l L_l)` and
//! `beta_l(x) = u_l (e^{lambda_l x} - 1) + 1`.
//!
//! Expanding the product over subsets `S` of `{i+1..N}` turns the drift into a
//! multilinear polynomial in the weights:
//! `b = -sum_S w_S D_S`, `w_S = prod_{l in S} u_l`, where `D_{{}} = K(lambda_i)`
//! and otherwise `D_S = sum_{R subset of S + {i}} (-1)^{|S|+1-|R|} K(Lambda_R)`,
//! `Lambda_R = sum_{r in R} lambda_r`, `K` the total cumulant of the driver.
//! Alternating sums of `1` and `Lambda_R` vanish on sets of two or more
//! elements, and the quadratic part collapses to the Gaussian cross term, so
//! the coefficients are exact. They only depend on the interval, so they are
//! tabulated once and each evaluation costs `2^{N-i}` multiply-adds.

use crate::error::{Error, Result};
use crate::levy_driver::LevyLocalTriplet;
use crate::quadrature::{integrate_panels, Integral};
use crate::term_structure::MarketSetup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    LogLibor,
    TaylorApprox,
}

/// Log-rates `z_l`, `l = 1..=N`, read as left limits at the evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub z: Vec<f64>,
    pub kind: StateKind,
}

impl StateVector {
    pub fn log_libor(z: Vec<f64>) -> Self {
        Self { z, kind: StateKind::LogLibor }
    }

    pub fn taylor(z: Vec<f64>) -> Self {
        Self { z, kind: StateKind::TaylorApprox }
    }

    pub fn from_rates(rates: &[f64]) -> Self {
        Self::log_libor(rates.iter().map(|l| l.ln()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftMethod {
    #[default]
    CumulantExpansion,
    Quadrature,
}

/// `delta L / (1 + delta L)` with `L = e^z`, written as a logistic so that
/// both tails saturate cleanly.
#[inline]
pub fn link_weight(delta: f64, z: f64) -> f64 {
    1.0 / (1.0 + (-z - delta.ln()).exp())
}

/// `u (e^{lambda x} - 1) + 1`.
#[inline]
pub fn beta_factor(u: f64, lambda: f64, x: f64) -> f64 {
    u * (lambda * x).exp_m1() + 1.0
}

/// Absolute tolerance of the quadrature evaluator.
pub const QUADRATURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct IntervalLaw {
    drift: f64,
    gauss: f64,
    /// `lambda_l` on this interval, `l = 1..=N` at index `l - 1`.
    lambdas: Vec<f64>,
    /// Coefficient tables per rate (index `i - 1`); empty once the rate has fixed.
    tables: Vec<Vec<f64>>,
}

/// Precomputed drift coefficients for one market setup.
#[derive(Debug, Clone)]
pub struct DriftEngine {
    n: usize,
    dates: Vec<f64>,
    accruals: Vec<f64>,
    driver: LevyLocalTriplet,
    intervals: Vec<IntervalLaw>,
}

impl DriftEngine {
    pub fn new(setup: &MarketSetup) -> Result<Self> {
        let n = setup.n_rates();
        let tenor = &setup.tenor;
        let mut intervals = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let mid = 0.5 * (tenor.date(k) + tenor.date(k + 1));
            let drift = setup.driver.drift.at(mid);
            let gauss = setup.driver.gauss.at(mid);
            let lambdas: Vec<f64> = (1..=n).map(|l| setup.vols.level(l, k)).collect();
            let mut tables = Vec::with_capacity(n);
            for i in 1..=n {
                if lambdas[i - 1] == 0.0 {
                    tables.push(Vec::new());
                    continue;
                }
                let cum = |u: f64| setup.driver.cumulant_with(drift, gauss, u);
                tables.push(coefficient_table(&lambdas[i - 1..], cum)?);
            }
            intervals.push(IntervalLaw { drift, gauss, lambdas, tables });
        }
        Ok(Self {
            n,
            dates: tenor.dates().to_vec(),
            accruals: (1..=n).map(|l| tenor.accrual(l)).collect(),
            driver: setup.driver.clone(),
            intervals,
        })
    }

    pub fn n_rates(&self) -> usize {
        self.n
    }

    /// `delta_l` for `l = 1..=N` at index `l - 1`.
    pub fn accruals(&self) -> &[f64] {
        &self.accruals
    }

    /// Interval `k` with `T_k < s <= T_{k+1}` (and `0` for `s = 0`), matching
    /// the closed-at-fixing convention of the volatilities.
    pub fn interval_at(&self, s: f64) -> usize {
        self.dates[1..=self.n].partition_point(|&t| t < s)
    }

    /// Fills `u` with the link weights of the state.
    pub fn link_weights(&self, z: &[f64], u: &mut [f64]) {
        for ((w, &d), &zl) in u.iter_mut().zip(&self.accruals).zip(z) {
            *w = link_weight(d, zl);
        }
    }

    /// Drift of rate `i` on interval `k`, given the link weights of every rate.
    #[inline]
    pub fn drift_on_interval(&self, k: usize, i: usize, u: &[f64]) -> f64 {
        let table = &self.intervals[k].tables[i - 1];
        if table.is_empty() {
            return 0.0;
        }
        -multilinear(table, &u[i..self.n])
    }

    pub fn terminal_drift(&self, s: f64, i: usize, state: &StateVector, method: DriftMethod) -> Result<f64> {
        match method {
            DriftMethod::CumulantExpansion => self.drift_cumulant_expansion(s, i, state),
            DriftMethod::Quadrature => self.drift_quadrature(s, i, state).map(|(b, _)| b),
        }
    }

    fn check_args(&self, i: usize, state: &StateVector) -> Result<()> {
        if i == 0 || i > self.n {
            return Err(Error::RateIndex { index: i, n: self.n });
        }
        if state.z.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "state has {} entries, expected {}",
                state.z.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn drift_cumulant_expansion(&self, s: f64, i: usize, state: &StateVector) -> Result<f64> {
        self.check_args(i, state)?;
        let mut u = vec![0.0; self.n];
        self.link_weights(&state.z, &mut u);
        Ok(self.drift_on_interval(self.interval_at(s), i, &u))
    }

    /// Drift with the jump integral computed by adaptive quadrature against
    /// the NIG Lévy density. Returns the drift and the quadrature error
    /// estimate (including the truncated tail).
    pub fn drift_quadrature(&self, s: f64, i: usize, state: &StateVector) -> Result<(f64, f64)> {
        self.check_args(i, state)?;
        let mut u = vec![0.0; self.n];
        self.link_weights(&state.z, &mut u);
        self.quadrature_on_interval(self.interval_at(s), i, &u)
    }

    /// Quadrature counterpart of [`Self::drift_on_interval`], with the error estimate.
    pub fn quadrature_on_interval(&self, k: usize, i: usize, u: &[f64]) -> Result<(f64, f64)> {
        let law = &self.intervals[k];
        let lambda_i = law.lambdas[i - 1];
        if lambda_i == 0.0 {
            return Ok((0.0, 0.0));
        }
        let others: Vec<(f64, f64)> = (i..self.n).map(|j| (u[j], law.lambdas[j])).collect();
        let jumps = self.driver.jumps;
        let j = jump_integral(lambda_i, &others, &jumps, QUADRATURE_TOL)?;
        let linear = law.drift + jumps.mean();
        let cross: f64 = others.iter().map(|(w, l)| w * l).sum();
        let b = -lambda_i * linear - 0.5 * lambda_i * lambda_i * law.gauss - law.gauss * lambda_i * cross - j.value;
        Ok((b, j.error))
    }

    /// Drift of rate `i` on interval `k` by either evaluator.
    pub fn drift_with(&self, k: usize, i: usize, u: &[f64], method: DriftMethod) -> Result<f64> {
        match method {
            DriftMethod::CumulantExpansion => Ok(self.drift_on_interval(k, i, u)),
            DriftMethod::Quadrature => self.quadrature_on_interval(k, i, u).map(|(b, _)| b),
        }
    }

    /// `b(s, T_i; state0)` on every step of `grid`, evaluated on the step's
    /// interval.
    pub fn deterministic_drift_table(
        &self,
        i: usize,
        state0: &StateVector,
        grid: &crate::simulator::SimulationGrid,
    ) -> Result<Vec<f64>> {
        self.deterministic_drift_table_with(i, state0, grid, DriftMethod::CumulantExpansion)
    }

    pub fn deterministic_drift_table_with(
        &self,
        i: usize,
        state0: &StateVector,
        grid: &crate::simulator::SimulationGrid,
        method: DriftMethod,
    ) -> Result<Vec<f64>> {
        self.check_args(i, state0)?;
        let mut u = vec![0.0; self.n];
        self.link_weights(&state0.z, &mut u);
        let mut per_interval = vec![None; self.n + 1];
        grid.step_intervals()
            .iter()
            .map(|&k| {
                if per_interval[k].is_none() {
                    per_interval[k] = Some(self.drift_with(k, i, &u, method)?);
                }
                Ok(per_interval[k].expect("filled"))
            })
            .collect()
    }
}

/// `D_S` for every subset `S` of the rates after `i`; bit `j` of the index
/// stands for rate `i + 1 + j`. `lambdas[0]` is `lambda_i`.
fn coefficient_table<F>(lambdas: &[f64], cumulant: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = lambdas.len() - 1;
    // K(Lambda_R) for every R of {i} + later rates; bit n stands for i.
    let members = |mask: usize, j: usize| mask >> j & 1 == 1;
    let size = 1usize << (n + 1);
    let mut kvals = Vec::with_capacity(size);
    for mask in 0..size {
        let mut lam = if members(mask, n) { lambdas[0] } else { 0.0 };
        for j in 0..n {
            if members(mask, j) {
                lam += lambdas[j + 1];
            }
        }
        kvals.push(if mask == 0 { 0.0 } else { cumulant(lam)? });
    }
    let mut table = Vec::with_capacity(1 << n);
    table.push(kvals[1 << n]);
    for s in 1..(1usize << n) {
        let full = s | 1 << n;
        let size_full = full.count_ones();
        let mut acc = 0.0;
        // Walk every submask of `full`.
        let mut r = full;
        loop {
            let sign = if (size_full - r.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += sign * kvals[r];
            if r == 0 {
                break;
            }
            r = (r - 1) & full;
        }
        table.push(acc);
    }
    Ok(table)
}

/// `sum_S table[S] prod_{j in S} u[j]`.
#[inline]
fn multilinear(table: &[f64], u: &[f64]) -> f64 {
    match u.len() {
        0 => table[0],
        1 => table[0] + u[0] * table[1],
        n => {
            let half = 1 << (n - 1);
            let (lo, hi) = table.split_at(half);
            multilinear(lo, &u[..n - 1]) + u[n - 1] * multilinear(hi, &u[..n - 1])
        }
    }
}

/// `e^y - 1 - y` without cancellation near zero.
fn expm1_minus_id(y: f64) -> f64 {
    if y.abs() < 1e-2 {
        let y2 = y * y;
        y2 * (0.5 + y * (1.0 / 6.0 + y * (1.0 / 24.0 + y * (1.0 / 120.0 + y * (1.0 / 720.0 + y / 5040.0)))))
    } else {
        y.exp_m1() - y
    }
}

/// Compensated jump integrand `(e^{lambda_i x} - 1) prod beta_l(x) - lambda_i x`.
fn compensated_integrand(x: f64, lambda_i: f64, others: &[(f64, f64)]) -> f64 {
    let y = lambda_i * x;
    // prod beta_l - 1, accumulated without forming the product first
    let mut excess = 0.0;
    for &(u, lam) in others {
        let a = u * (lam * x).exp_m1();
        excess += a * (1.0 + excess);
    }
    expm1_minus_id(y) + y.exp_m1() * excess
}

/// `ln |e^y - 1|`.
fn ln_abs_expm1(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().abs().ln()
    }
}

/// `ln beta_l(x)` for `u` in `[0, 1)`.
fn ln_beta(u: f64, lambda: f64, x: f64) -> f64 {
    let y = lambda * x;
    if u > 0.0 && y > 30.0 {
        u.ln() + y + ((1.0 - u) / u * (-y).exp()).ln_1p()
    } else {
        (u * y.exp_m1()).ln_1p()
    }
}

/// `compensated_integrand(x) * F(x)`. Far from the origin the exponential
/// growth of the product and the decay of the density are combined in log
/// space, where each alone would overflow or underflow.
fn weighted_integrand(x: f64, lambda_i: f64, others: &[(f64, f64)], jumps: &crate::levy_driver::NigParams) -> f64 {
    if x.abs() < 20.0 {
        return compensated_integrand(x, lambda_i, others) * jumps.levy_density(x);
    }
    let ax = x.abs();
    let ln_density = (jumps.delta_bar * jumps.alpha / std::f64::consts::PI).ln()
        + crate::special::bessel_k1_scaled(jumps.alpha * ax).ln()
        - ax.ln()
        + jumps.beta * x
        - jumps.alpha * ax;
    let y = lambda_i * x;
    let ln_prod: f64 = others.iter().map(|&(u, lam)| ln_beta(u, lam, x)).sum();
    let exponential = y.signum() * (ln_abs_expm1(y) + ln_prod + ln_density).exp();
    exponential - y * ln_density.exp()
}

/// `int compensated_integrand F(dx)` for the NIG Lévy measure.
///
/// Both half-lines are folded onto `(0, X]`. `X` doubles until the tail bound
/// `sup |integrand| * F(X) / r` drops below a tenth of the tolerance, with
/// `r = alpha - |beta| - (|lambda_i| + sum |lambda_l|)` the exponential decay
/// rate left over after the exponential moments.
pub(crate) fn jump_integral(
    lambda_i: f64,
    others: &[(f64, f64)],
    jumps: &crate::levy_driver::NigParams,
    tol: f64,
) -> Result<Integral> {
    let max_exp = lambda_i.abs() + others.iter().map(|(_, l)| l.abs()).sum::<f64>();
    let rate = jumps.symmetric_domain() - max_exp;
    if !(rate > 0.0) {
        return Err(Error::CumulantDomain { u: max_exp, alpha: jumps.alpha });
    }
    // Bound on |integrand(x)| F(x) + |integrand(-x)| F(-x), in a form that
    // cannot overflow: the exponentials combine to exp(-rate x).
    let envelope = |x: f64| {
        let k1 = crate::special::bessel_k1_scaled(jumps.alpha * x);
        let scale = jumps.delta_bar * jumps.alpha / std::f64::consts::PI * k1 / x;
        2.0 * scale * (2.0 * (-rate * x).exp() + max_exp * x * (-(jumps.alpha - jumps.beta.abs()) * x).exp())
    };
    let mut breaks = vec![0.0, 0.5, 1.0];
    let mut x = 1.0;
    let mut tail = envelope(x) / rate;
    while tail > 0.1 * tol {
        x *= 2.0;
        breaks.push(x);
        tail = envelope(x) / rate;
        if x > 1e6 {
            return Err(Error::Quadrature { value: f64::NAN, error: tail });
        }
    }
    let folded = |x: f64| weighted_integrand(x, lambda_i, others, jumps) + weighted_integrand(-x, lambda_i, others, jumps);
    let r = integrate_panels(folded, &breaks, 0.9 * tol, 4000)?;
    Ok(Integral { value: r.value, error: r.error + tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_driver::{nig_cumulant, NigParams};
    use crate::setup_file::{eur_feb2002_setup, parse_setup};
    use crate::simulator::build_grid;
    use proptest::prelude::*;

    fn z0() -> Vec<f64> {
        eur_feb2002_setup().initial_libor().unwrap().iter().map(|l| l.ln()).collect()
    }

    fn kappa(u: f64) -> f64 {
        nig_cumulant(u, &NigParams::symmetric_example()).unwrap()
    }

    /// Four rates with skew, location, a drift and a Gaussian part that
    /// changes across accrual intervals.
    fn general_setup() -> MarketSetup {
        parse_setup(
            r#"
            tenor_dates = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
            bond_prices = [0.98, 0.955, 0.93, 0.90, 0.875]
            vols = [0.25, [0.1, 0.3], 0.2, [0.15, 0.05, 0.1, 0.2]]
            nig = { alpha = 2.0, beta = -0.4, delta_bar = 1.1, mu = 0.05 }
            em = { M = 1.2, epsilon = 0.01 }
            drift = [0.01, -0.02, 0.0, 0.03, 0.0]
            gauss = [0.02, 0.0, 0.05, 0.01, 0.0]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn link_weight_examples() {
        let u = link_weight(0.5, 0.03861f64.ln());
        assert!((u - 0.5 * 0.03861 / (1.0 + 0.5 * 0.03861)).abs() < 1e-15);
        assert!((u - 0.018939).abs() < 5e-7);
        assert_eq!(link_weight(0.5, f64::NEG_INFINITY), 0.0);
        assert_eq!(link_weight(0.5, f64::INFINITY), 1.0);
        assert!(link_weight(0.5, 800.0) == 1.0 && link_weight(0.5, -800.0) >= 0.0);
    }

    #[test]
    fn beta_factor_examples() {
        assert_eq!(beta_factor(0.3, 0.12, 0.0), 1.0);
        assert_eq!(beta_factor(0.0, 0.12, 7.0), 1.0);
        let b = beta_factor(0.018939, 0.12, 1.0);
        assert!((b - (1.0 + 0.018939 * (0.12f64.exp() - 1.0))).abs() < 1e-15);
        assert!((b - 1.002414).abs() < 1e-6);
    }

    #[test]
    fn last_rate_drift_is_minus_kappa() {
        let setup = eur_feb2002_setup();
        let eng = DriftEngine::new(&setup).unwrap();
        let state = StateVector::log_libor(z0());
        let want = -kappa(0.12);
        // delta_bar alpha (v/2 + v^2/8 + v^3/16 + 5 v^4/128), v = u^2 / alpha^2
        let v: f64 = 0.0144 / 2.25;
        let series = 2.25 * (v / 2.0 + v * v / 8.0 + v.powi(3) / 16.0 + 5.0 * v.powi(4) / 128.0);
        assert!((want + series).abs() < 1e-11);
        assert!((want + 0.00721156).abs() < 1e-8);
        for method in [DriftMethod::CumulantExpansion, DriftMethod::Quadrature] {
            let b = eng.terminal_drift(1.3, 9, &state, method).unwrap();
            assert!((b - want).abs() < 1e-13, "{method:?}: {b}");
        }
    }

    #[test]
    fn zero_weights_collapse_to_single_cumulant() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        let state = StateVector::log_libor(vec![f64::NEG_INFINITY; 9]);
        let lambdas = [0.20, 0.19, 0.18, 0.17, 0.16, 0.15, 0.14, 0.13, 0.12];
        for i in 1..=9 {
            let b = eng.drift_cumulant_expansion(0.2, i, &state).unwrap();
            assert!((b + kappa(lambdas[i - 1])).abs() < 1e-15);
        }
        // u_N = 0 leaves kappa(lambda_{N-1}).
        let mut z = z0();
        z[8] = f64::NEG_INFINITY;
        let b = eng.drift_cumulant_expansion(0.2, 8, &StateVector::log_libor(z)).unwrap();
        assert!((b + kappa(0.13)).abs() < 1e-15);
    }

    #[test]
    fn zero_later_vols_collapse_with_gaussian_part() {
        let setup = parse_setup(
            r#"
            tenor_dates = [0.0, 0.5, 1.0, 1.5]
            bond_prices = [0.98, 0.96, 0.94]
            vols = [0.2, 0.0]
            nig = { alpha = 1.5, beta = 0.0, delta_bar = 1.5, mu = 0.0 }
            em = { M = 1.5, epsilon = 0.01 }
            gauss = 0.04
            "#,
        )
        .unwrap();
        let eng = DriftEngine::new(&setup).unwrap();
        let state = StateVector::from_rates(&setup.initial_libor().unwrap());
        let want = -0.5 * 0.04 * 0.04 - kappa(0.2);
        for method in [DriftMethod::CumulantExpansion, DriftMethod::Quadrature] {
            let b = eng.terminal_drift(0.25, 1, &state, method).unwrap();
            assert!((b - want).abs() < 1e-12, "{method:?}");
        }
    }

    #[test]
    fn drift_vanishes_after_fixing() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        let state = StateVector::log_libor(z0());
        for method in [DriftMethod::CumulantExpansion, DriftMethod::Quadrature] {
            assert_eq!(eng.terminal_drift(0.75, 1, &state, method).unwrap(), 0.0);
            assert_eq!(eng.terminal_drift(4.6, 9, &state, method).unwrap(), 0.0);
            assert_ne!(eng.terminal_drift(0.5, 1, &state, method).unwrap(), 0.0);
        }
    }

    #[test]
    fn bad_arguments_are_errors() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        let state = StateVector::log_libor(z0());
        assert!(matches!(eng.drift_cumulant_expansion(0.1, 0, &state), Err(Error::RateIndex { .. })));
        assert!(matches!(eng.drift_quadrature(0.1, 10, &state), Err(Error::RateIndex { .. })));
        assert!(eng.drift_cumulant_expansion(0.1, 1, &StateVector::log_libor(vec![0.0; 3])).is_err());
    }

    #[test]
    fn quadrature_reproduces_cumulant() {
        let p = NigParams::symmetric_example();
        let j = jump_integral(0.12, &[], &p, QUADRATURE_TOL).unwrap();
        assert!((j.value - kappa(0.12)).abs() < 1e-12);
        assert!(j.error < 1e-12);
        // The odd part -lambda x cancels between the half-lines.
        let k = jump_integral(-0.12, &[], &p, QUADRATURE_TOL).unwrap();
        assert!((j.value - k.value).abs() < 1e-14);
        assert_eq!(compensated_integrand(0.0, 0.12, &[(0.3, 0.1)]), 0.0);
        assert!(compensated_integrand(1e-9, 0.12, &[(0.3, 0.1)]).abs() < 1e-19);
    }

    #[test]
    fn evaluators_agree_with_small_weight() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        let mut z = z0();
        z[8] = (0.02f64 / 0.98 / 0.5).ln();
        let state = StateVector::log_libor(z.clone());
        let mut u = vec![0.0; 9];
        eng.link_weights(&z, &mut u);
        assert!((u[8] - 0.02).abs() < 1e-15);
        let a = eng.drift_cumulant_expansion(0.1, 8, &state).unwrap();
        let (b, _) = eng.drift_quadrature(0.1, 8, &state).unwrap();
        assert!(((a - b) / b).abs() < 1e-8);
    }

    #[test]
    fn evaluators_agree_for_general_driver() {
        let setup = general_setup();
        let eng = DriftEngine::new(&setup).unwrap();
        let state = StateVector::from_rates(&setup.initial_libor().unwrap());
        for s in [0.1, 0.5, 0.7, 1.2, 1.5] {
            for i in 1..=4 {
                let a = eng.drift_cumulant_expansion(s, i, &state).unwrap();
                let (b, err) = eng.drift_quadrature(s, i, &state).unwrap();
                assert!((a - b).abs() <= 1e-10 + 1e-8 * b.abs(), "s={s} i={i}: {a} vs {b} (err {err})");
            }
        }
    }

    #[test]
    fn drift_decreases_as_later_rates_rise() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        let base = z0();
        for i in 1..=8 {
            let mut prev = f64::INFINITY;
            for shift in [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
                let z: Vec<f64> = base.iter().map(|v| v + shift).collect();
                let b = eng.drift_cumulant_expansion(0.1, i, &StateVector::log_libor(z.clone())).unwrap();
                let (q, _) = eng.drift_quadrature(0.1, i, &StateVector::log_libor(z)).unwrap();
                assert!(b <= prev + 1e-12 && q <= prev + 1e-12, "i={i} shift={shift}");
                prev = b.max(q);
            }
        }
    }

    #[test]
    fn taylor_state_at_zero_matches_initial_state() {
        let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
        for i in 1..=9 {
            let x = eng.drift_cumulant_expansion(0.0, i, &StateVector::log_libor(z0())).unwrap();
            let tx = eng.drift_cumulant_expansion(0.0, i, &StateVector::taylor(z0())).unwrap();
            assert_eq!(x, tx);
        }
    }

    #[test]
    fn deterministic_table_matches_pointwise_drift() {
        let setup = eur_feb2002_setup();
        let eng = DriftEngine::new(&setup).unwrap();
        let grid = build_grid(&setup.tenor, 4).unwrap();
        let state = StateVector::log_libor(z0());
        let last = eng.deterministic_drift_table(9, &state, &grid).unwrap();
        assert_eq!(last.len(), 36);
        assert!(last.iter().all(|&b| b == last[0]));
        assert!((last[0] + kappa(0.12)).abs() < 1e-15);
        for i in 1..=9 {
            let table = eng.deterministic_drift_table(i, &state, &grid).unwrap();
            for (k, w) in grid.times().windows(2).enumerate() {
                let want = eng.drift_cumulant_expansion(w[1], i, &state).unwrap();
                assert_eq!(table[k], want, "i={i} step {k}");
                if w[0] >= setup.tenor.date(i) {
                    assert_eq!(table[k], 0.0);
                }
            }
        }
        let quad = eng.deterministic_drift_table_with(3, &state, &grid, DriftMethod::Quadrature).unwrap();
        let cum = eng.deterministic_drift_table(3, &state, &grid).unwrap();
        for (a, b) in quad.iter().zip(&cum) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn multilinear_matches_direct_sum() {
        let table = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let u = [0.1, 0.2, 0.3];
        let mut want = 0.0;
        for s in 0..8usize {
            let w: f64 = (0..3).filter(|j| s >> j & 1 == 1).map(|j| u[j]).product();
            want += table[s] * w;
        }
        assert!((multilinear(&table, &u) - want).abs() < 1e-15);
    }

    #[test]
    fn expm1_minus_id_is_accurate_near_zero() {
        for y in [1e-12f64, -3e-5, 4e-3, -9e-3, 1e-2, 0.5, -2.0] {
            let series: f64 = (2..30).map(|k| y.powi(k) / (1..=k).map(f64::from).product::<f64>()).sum();
            assert!(((expm1_minus_id(y) - series) / series).abs() < 1e-13, "y={y}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn evaluators_agree_on_random_states(
            factors in prop::collection::vec(0.5f64..1.5, 9),
            s in 0.0f64..4.5,
        ) {
            let eng = DriftEngine::new(&eur_feb2002_setup()).unwrap();
            let z: Vec<f64> = z0().iter().zip(&factors).map(|(z, f)| z + f.ln()).collect();
            let state = StateVector::log_libor(z);
            for i in 1..=9 {
                let a = eng.drift_cumulant_expansion(s, i, &state).unwrap();
                let (b, _) = eng.drift_quadrature(s, i, &state).unwrap();
                if b == 0.0 {
                    prop_assert_eq!(a, 0.0);
                } else {
                    prop_assert!(((a - b) / b).abs() <= 1e-6);
                }
            }
        }
    }
}
