//! The driving time-inhomogeneous Lévy process `H` under the terminal measure.
//!
//! `H` has local characteristics `(b_s, c_s, F)`: a piecewise-constant drift
//! and Gaussian coefficient on the accrual grid, plus the jump part of a
//! normal inverse Gaussian (NIG) law. Increments are sampled exactly by
//! inverse-Gaussian subordination, so no jump truncation is involved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulator::SimulationGrid;
use crate::term_structure::VolatilityStructure;

/// Parameters of an NIG Lévy process, per unit of time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta_bar: f64,
    pub mu: f64,
}

impl NigParams {
    pub fn new(alpha: f64, beta: f64, delta_bar: f64, mu: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("NIG alpha must be > 0, got {alpha}")));
        }
        if !(beta.abs() < alpha) {
            return Err(Error::InvalidParameter(format!(
                "NIG requires |beta| < alpha, got beta = {beta}, alpha = {alpha}"
            )));
        }
        if !(delta_bar > 0.0 && delta_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "NIG delta_bar must be > 0, got {delta_bar}"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("NIG mu must be finite, got {mu}")));
        }
        Ok(Self { alpha, beta, delta_bar, mu })
    }

    /// The symmetric instance `alpha = delta_bar = 1.5`, `beta = mu = 0`.
    pub fn symmetric_example() -> Self {
        Self { alpha: 1.5, beta: 0.0, delta_bar: 1.5, mu: 0.0 }
    }

    pub fn gamma(&self) -> f64 {
        (self.alpha * self.alpha - self.beta * self.beta).sqrt()
    }

    /// Largest `|u|` for which the cumulant is finite for both signs of `u`.
    pub fn symmetric_domain(&self) -> f64 {
        self.alpha - self.beta.abs()
    }

    pub fn in_domain(&self, u: f64) -> bool {
        (u + self.beta).abs() <= self.alpha
    }

    /// Mean per unit time, `mu + delta_bar * beta / gamma`.
    pub fn mean(&self) -> f64 {
        self.mu + self.delta_bar * self.beta / self.gamma()
    }

    /// Variance per unit time, `delta_bar * alpha^2 / gamma^3`.
    pub fn variance(&self) -> f64 {
        let g = self.gamma();
        self.delta_bar * self.alpha * self.alpha / (g * g * g)
    }

    /// `kappa(u) = mu u + delta_bar (gamma - sqrt(alpha^2 - (beta + u)^2))`
    /// without the domain check; NaN outside the domain.
    pub fn cumulant_unchecked(&self, u: f64) -> f64 {
        let b = self.beta + u;
        let inner = (self.alpha - b) * (self.alpha + b);
        // Factored form keeps the boundary exactly at zero.
        let root = if inner == 0.0 { 0.0 } else { inner.sqrt() };
        self.mu * u + self.delta_bar * (self.gamma() - root)
    }

    /// Jump part of the cumulant, `int (e^{ux} - 1 - ux) F(dx)`.
    pub fn jump_cumulant(&self, u: f64) -> Result<f64> {
        Ok(nig_cumulant(u, self)? - self.mean() * u)
    }

    /// NIG Lévy density `(delta_bar alpha / pi) e^{beta x} K_1(alpha |x|) / |x|`.
    pub fn levy_density(&self, x: f64) -> f64 {
        let ax = x.abs();
        if ax == 0.0 {
            return f64::INFINITY;
        }
        let k1 = crate::special::bessel_k1_scaled(self.alpha * ax);
        self.delta_bar * self.alpha / std::f64::consts::PI * (self.beta * x - self.alpha * ax).exp() * k1 / ax
    }
}

/// Cumulant generating function of NIG per unit time.
pub fn nig_cumulant(u: f64, p: &NigParams) -> Result<f64> {
    if !p.in_domain(u) {
        return Err(Error::CumulantDomain { u, alpha: p.alpha });
    }
    Ok(p.cumulant_unchecked(u))
}

/// Function of time, constant on `[breaks[k], breaks[k+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn constant(value: f64) -> Self {
        Self { breaks: vec![0.0, f64::INFINITY], values: vec![value] }
    }

    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "piecewise-constant function needs one more break than values ({} breaks, {} values)",
                breaks.len(),
                values.len()
            )));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("breaks must be strictly increasing".into()));
        }
        Ok(Self { breaks, values })
    }

    /// Right-continuous evaluation; the last value extends past the final break.
    pub fn at(&self, s: f64) -> f64 {
        let k = self.breaks[1..].partition_point(|&b| b <= s);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Local characteristics `(b_s, c_s, F)` of the driver.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyLocalTriplet {
    pub drift: PiecewiseConstant,
    pub gauss: PiecewiseConstant,
    pub jumps: NigParams,
}

impl LevyLocalTriplet {
    pub fn new(drift: PiecewiseConstant, gauss: PiecewiseConstant, jumps: NigParams) -> Result<Self> {
        if gauss.values().iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter("Gaussian coefficient c_s must be >= 0".into()));
        }
        if drift.values().iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("drift b_s must be finite".into()));
        }
        Ok(Self { drift, gauss, jumps })
    }

    /// Pure-jump NIG driver with `b = c = 0`.
    pub fn pure_nig(jumps: NigParams) -> Self {
        Self {
            drift: PiecewiseConstant::constant(0.0),
            gauss: PiecewiseConstant::constant(0.0),
            jumps,
        }
    }

    /// Total cumulant at time `s`: `b_s u + c_s u^2 / 2 + kappa_NIG(u)`.
    pub fn cumulant(&self, s: f64, u: f64) -> Result<f64> {
        self.cumulant_with(self.drift.at(s), self.gauss.at(s), u)
    }

    pub(crate) fn cumulant_with(&self, b: f64, c: f64, u: f64) -> Result<f64> {
        Ok(b * u + 0.5 * c * u * u + nig_cumulant(u, &self.jumps)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmValidationConfig {
    pub m: f64,
    pub epsilon: f64,
}

impl EmValidationConfig {
    pub fn new(m: f64, epsilon: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!("EM bound M must be > 0, got {m}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("EM slack epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self { m, epsilon })
    }
}

/// Outcome of the exponential-moment check on the volatility structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmReport {
    /// `sup_s sum_i |lambda(s, T_i)|`.
    pub vol_sum: f64,
    pub bound: f64,
    /// Largest `|u|` inside the closed cumulant domain.
    pub domain_limit: f64,
    pub sum_within_bound: bool,
    pub bound_in_domain: bool,
    /// `(1 + epsilon) M` inside the domain. Informational only.
    pub slack_in_domain: bool,
    pub passed: bool,
}

impl EmReport {
    pub fn failure(&self) -> Option<String> {
        if !self.sum_within_bound {
            Some(format!(
                "sum of volatilities {:.6} exceeds the moment bound M = {:.6}",
                self.vol_sum, self.bound
            ))
        } else if !self.bound_in_domain {
            Some(format!(
                "moment bound M = {:.6} lies outside the cumulant domain |u| <= {:.6}",
                self.bound, self.domain_limit
            ))
        } else {
            None
        }
    }
}

/// Checks `sup_s sum_i |lambda(s, T_i)| <= M` and that `M` lies in the closed
/// cumulant domain of the jump law.
pub fn validate_em(vols: &VolatilityStructure, cfg: &EmValidationConfig, p: &NigParams) -> EmReport {
    let vol_sum = vols.max_abs_sum();
    let domain_limit = p.symmetric_domain();
    let sum_within_bound = vol_sum <= cfg.m;
    let bound_in_domain = cfg.m <= domain_limit;
    EmReport {
        vol_sum,
        bound: cfg.m,
        domain_limit,
        sum_within_bound,
        bound_in_domain,
        slack_in_domain: (1.0 + cfg.epsilon) * cfg.m <= domain_limit,
        passed: sum_within_bound && bound_in_domain,
    }
}

/// Inverse Gaussian variate by the Michael–Schucany–Haas transformation.
///
/// The two candidate roots multiply to `mean^2`; the small root is obtained
/// by division so that it keeps full precision when `shape << mean * v^2`.
pub fn sample_ig<R: Rng + ?Sized>(mean: f64, shape: f64, rng: &mut R) -> f64 {
    debug_assert!(mean > 0.0 && shape > 0.0);
    let v: f64 = rng.sample(StandardNormal);
    let y = mean * v * v;
    let large = mean + mean / (2.0 * shape) * (y + (4.0 * shape * y + y * y).sqrt());
    let small = mean * mean / large;
    let u: f64 = rng.random();
    if u <= mean / (mean + small) {
        small
    } else {
        large
    }
}

/// Exact NIG(alpha, beta, delta_bar dt, mu dt) increment over a step of length `dt`.
pub fn sample_nig_increment<R: Rng + ?Sized>(dt: f64, p: &NigParams, rng: &mut R) -> f64 {
    let scale = p.delta_bar * dt;
    let z = sample_ig(scale / p.gamma(), scale * scale, rng);
    let n: f64 = rng.sample(StandardNormal);
    p.mu * dt + p.beta * z + z.sqrt() * n
}

/// Per-path random substream `j` of the master `seed`.
pub fn substream(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Driver increments on a simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverIncrements {
    pub times: Vec<f64>,
    /// `H_{t_{k+1}} - H_{t_k}`, one per grid step.
    pub dh: Vec<f64>,
    /// Brownian increments `W_{t_{k+1}} - W_{t_k}`, present when `c` is not identically zero.
    pub dw: Option<Vec<f64>>,
}

impl DriverIncrements {
    pub fn steps(&self) -> usize {
        self.dh.len()
    }

    /// Sums consecutive groups of `factor` steps, giving the increments of the
    /// same path on a grid with `factor` times fewer steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.dh.len().is_multiple_of(factor) {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.dh.len()
            )));
        }
        let sum = |v: &[f64]| v.chunks(factor).map(|c| c.iter().sum()).collect::<Vec<f64>>();
        Ok(Self {
            times: self.times.iter().step_by(factor).copied().collect(),
            dh: sum(&self.dh),
            dw: self.dw.as_deref().map(sum),
        })
    }
}

/// Per-step sampling parameters for one grid and triplet.
#[derive(Debug, Clone)]
pub struct DriverSampler {
    times: Vec<f64>,
    steps: Vec<StepLaw>,
    beta: f64,
    with_gauss: bool,
}

#[derive(Debug, Clone, Copy)]
struct StepLaw {
    dt: f64,
    ig_mean: f64,
    ig_shape: f64,
    /// `(mu + b_s) dt`.
    shift: f64,
    gauss_coef: f64,
}

impl DriverSampler {
    pub fn new(grid: &SimulationGrid, triplet: &LevyLocalTriplet) -> Self {
        let p = triplet.jumps;
        let steps = grid
            .times()
            .windows(2)
            .map(|w| {
                let dt = w[1] - w[0];
                let mid = 0.5 * (w[0] + w[1]);
                let scale = p.delta_bar * dt;
                StepLaw {
                    dt,
                    ig_mean: scale / p.gamma(),
                    ig_shape: scale * scale,
                    shift: (p.mu + triplet.drift.at(mid)) * dt,
                    gauss_coef: triplet.gauss.at(mid).sqrt(),
                }
            })
            .collect();
        Self {
            times: grid.times().to_vec(),
            steps,
            beta: p.beta,
            with_gauss: !triplet.gauss.is_identically_zero(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps.len()
    }

    /// Zero increments with the layout [`DriverSampler::sample_into`] expects.
    pub fn blank(&self) -> DriverIncrements {
        DriverIncrements {
            times: self.times.clone(),
            dh: vec![0.0; self.steps.len()],
            dw: self.with_gauss.then(|| vec![0.0; self.steps.len()]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DriverIncrements {
        let mut out = self.blank();
        self.sample_into(&mut out, rng);
        out
    }

    /// Refills `out` in place; `out` must come from [`DriverSampler::sample`]
    /// on the same sampler.
    pub fn sample_into<R: Rng + ?Sized>(&self, out: &mut DriverIncrements, rng: &mut R) {
        debug_assert_eq!(out.dh.len(), self.steps.len());
        for (k, law) in self.steps.iter().enumerate() {
            let z = sample_ig(law.ig_mean, law.ig_shape, rng);
            let n: f64 = rng.sample(StandardNormal);
            let mut dh = law.shift + self.beta * z + z.sqrt() * n;
            if let Some(dw) = out.dw.as_mut() {
                let w = law.dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                dw[k] = w;
                dh += law.gauss_coef * w;
            }
            out.dh[k] = dh;
        }
    }
}

/// Samples one set of driver increments on `grid`.
pub fn simulate_driver_increments<R: Rng + ?Sized>(
    grid: &SimulationGrid,
    triplet: &LevyLocalTriplet,
    rng: &mut R,
) -> DriverIncrements {
    DriverSampler::new(grid, triplet).sample(rng)
}
