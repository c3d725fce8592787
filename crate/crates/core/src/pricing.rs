//! Caplet and swaption prices from terminal-measure paths, Black-76 and
//! implied volatilities, and the three-scheme comparison.
//!
//! Payoffs are written under the terminal measure: the density of the
//! forward measure telescopes into `B(0, T*) prod_l (1 + delta_l L(T_i, T_l))`.

use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::simulator::{Fixings, PathSet, Scheme, SchemeSet, Simulator};
use crate::special::norm_cdf;
use crate::term_structure::MarketSetup;

/// Caplet on `L(T_i, T_i)`, paid at `T_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapletSpec {
    pub strike: f64,
    pub index: usize,
}

/// How the fixed leg's coupon at `T_k` is quoted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouponConvention {
    /// `delta_{k-1} K`: `K` is an annualised swap rate.
    #[default]
    PerPeriodAccrual,
    /// `K` paid as is on every date.
    Flat,
}

/// Payer swaption: option at `T_i` to enter the swap over `[T_i, T_m]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwaptionSpec {
    pub strike: f64,
    pub start: usize,
    pub end: usize,
    pub convention: CouponConvention,
}

impl SwaptionSpec {
    pub fn coupon(&self, k: usize, setup: &MarketSetup) -> f64 {
        match self.convention {
            CouponConvention::PerPeriodAccrual => setup.tenor.accrual(k - 1) * self.strike,
            CouponConvention::Flat => self.strike,
        }
    }

    /// Strike making the swap worth zero today.
    pub fn forward_swap_rate(start: usize, end: usize, convention: CouponConvention, setup: &MarketSetup) -> f64 {
        let c = &setup.curve;
        let annuity: f64 = (start + 1..=end)
            .map(|k| {
                let w = match convention {
                    CouponConvention::PerPeriodAccrual => setup.tenor.accrual(k - 1),
                    CouponConvention::Flat => 1.0,
                };
                w * c.bond(k)
            })
            .sum();
        (c.bond(start) - c.bond(end)) / annuity
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instrument {
    Caplet(CapletSpec),
    Swaption(SwaptionSpec),
}

impl Instrument {
    pub fn strike(&self) -> f64 {
        match self {
            Instrument::Caplet(c) => c.strike,
            Instrument::Swaption(s) => s.strike,
        }
    }

    pub fn maturity_index(&self) -> usize {
        match self {
            Instrument::Caplet(c) => c.index,
            Instrument::Swaption(s) => s.start,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Instrument::Caplet(_) => "caplet".into(),
            Instrument::Swaption(s) => format!("swaption_T{}", s.end),
        }
    }

    pub fn validate(&self, setup: &MarketSetup) -> Result<()> {
        let n = setup.n_rates();
        match *self {
            Instrument::Caplet(c) => {
                if c.index == 0 || c.index > n {
                    return Err(Error::RateIndex { index: c.index, n });
                }
                if !(c.strike >= 0.0) {
                    return Err(Error::InvalidParameter(format!("caplet strike must be >= 0, got {}", c.strike)));
                }
            }
            Instrument::Swaption(s) => {
                if s.start == 0 || !(s.start < s.end && s.end <= n) {
                    return Err(Error::InvalidParameter(format!(
                        "swaption needs 1 <= start < end <= {n}, got {}..{}",
                        s.start, s.end
                    )));
                }
                if !s.strike.is_finite() {
                    return Err(Error::InvalidParameter("swaption strike must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn payoff<P: Fixings>(&self, path: &P, setup: &MarketSetup) -> f64 {
        match self {
            Instrument::Caplet(c) => caplet_payoff(path, c, setup),
            Instrument::Swaption(s) => swaption_payoff(path, s, setup),
        }
    }

    /// Black-76 inputs `(F, T, delta, DF)` for caplets.
    pub fn black_inputs(&self, setup: &MarketSetup, initial_libor: &[f64]) -> Option<(f64, f64, f64, f64)> {
        match *self {
            Instrument::Caplet(c) => Some((
                initial_libor[c.index - 1],
                setup.tenor.date(c.index),
                setup.tenor.accrual(c.index),
                setup.curve.bond(c.index + 1),
            )),
            Instrument::Swaption(_) => None,
        }
    }
}

/// `prod_{l=from}^{N} (1 + delta_l L(T_i, T_l))`, multiplied from `l = N` down.
fn forward_weight<P: Fixings>(path: &P, i: usize, from: usize, setup: &MarketSetup) -> f64 {
    (from..=setup.n_rates())
        .rev()
        .fold(1.0, |w, l| w * (1.0 + setup.tenor.accrual(l) * path.fixing(i, l)))
}

/// `delta_i B(0,T*) prod_{l>i} (1 + delta_l L(T_i,T_l)) (L(T_i,T_i) - K)^+`.
pub fn caplet_payoff<P: Fixings>(path: &P, spec: &CapletSpec, setup: &MarketSetup) -> f64 {
    let i = spec.index;
    let exercise = path.fixing(i, i) - spec.strike;
    if !(exercise > 0.0) {
        return 0.0;
    }
    let weight = forward_weight(path, i, i + 1, setup);
    setup.curve.terminal_bond() * (weight * (setup.tenor.accrual(i) * exercise))
}

/// `B(0,T*) (-sum_{k=i}^{m} c_k prod_{l=k}^{N} (1 + delta_l L(T_i,T_l)))^+`
/// with `c_i = -1`, coupons in between and `c_m = 1 + coupon`.
///
/// Telescoping the products turns the bracket into the floating-minus-fixed
/// sum `sum_{k=i}^{m-1} prod_{l>k} (1 + delta_l L) (delta_k L(T_i,T_k) - c_{k+1})`,
/// which is evaluated instead: it has no cancellation between terms of size one,
/// and for `m = i + 1` it is the caplet payoff term for term.
pub fn swaption_payoff<P: Fixings>(path: &P, spec: &SwaptionSpec, setup: &MarketSetup) -> f64 {
    let (i, m) = (spec.start, spec.end);
    let mut weight = forward_weight(path, i, m, setup);
    let mut value = 0.0;
    for k in (i..m).rev() {
        let delta = setup.tenor.accrual(k);
        let l = path.fixing(i, k);
        let spread = match spec.convention {
            CouponConvention::PerPeriodAccrual => delta * (l - spec.strike),
            CouponConvention::Flat => delta * l - spec.strike,
        };
        value += weight * spread;
        weight *= 1.0 + delta * l;
    }
    if value > 0.0 {
        setup.curve.terminal_bond() * value
    } else {
        0.0
    }
}

/// Running sums for a sample mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Standard error of the mean; infinite with fewer than two samples.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub scheme: Scheme,
    pub seed: u64,
    pub invalid_path_count: u64,
}

impl McEstimate {
    fn from_moments(m: &Moments, n_paths: u64, scheme: Scheme, seed: u64) -> Self {
        Self {
            value: m.mean(),
            std_error: m.std_error(),
            n_paths,
            scheme,
            seed,
            invalid_path_count: n_paths - m.n,
        }
    }
}

/// Monte Carlo prices of several instruments under one scheme, on common paths.
pub fn price_mc_many(
    sim: &Simulator,
    scheme: Scheme,
    instruments: &[Instrument],
    n_paths: u64,
    seed: u64,
    threads: usize,
) -> Result<Vec<McEstimate>> {
    for inst in instruments {
        inst.validate(sim.setup())?;
    }
    let setup = sim.setup();
    let acc = sim.accumulate(
        SchemeSet::only(scheme),
        n_paths,
        seed,
        threads,
        || vec![Moments::default(); instruments.len()],
        |acc, set| {
            let path = set.get(scheme).expect("scheme requested");
            if !path.is_finite() {
                return;
            }
            for (m, inst) in acc.iter_mut().zip(instruments) {
                m.push(inst.payoff(&path, setup));
            }
        },
        |total, block| total.iter_mut().zip(&block).for_each(|(t, b)| t.merge(b)),
    )?;
    Ok(acc.iter().map(|m| McEstimate::from_moments(m, n_paths, scheme, seed)).collect())
}

pub fn price_mc(
    sim: &Simulator,
    scheme: Scheme,
    instrument: Instrument,
    n_paths: u64,
    seed: u64,
    threads: usize,
) -> Result<McEstimate> {
    Ok(price_mc_many(sim, scheme, &[instrument], n_paths, seed, threads)?[0])
}

/// Black-76 caplet: `DF delta (F N(d1) - K N(d2))`.
pub fn black76_caplet(forward: f64, strike: f64, sigma: f64, expiry: f64, delta: f64, df: f64) -> f64 {
    let sd = sigma * expiry.sqrt();
    if !(sd > 0.0) || strike <= 0.0 {
        return df * delta * (forward - strike).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    df * delta * (forward * norm_cdf(d1) - strike * norm_cdf(d2))
}

pub const IV_LOWER: f64 = 1e-4;
pub const IV_UPPER: f64 = 5.0;

/// Black-76 volatility reproducing `price`, by bisection on `[1e-4, 5]`.
pub fn implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, delta: f64, df: f64) -> Result<f64> {
    let intrinsic = df * delta * (forward - strike).max(0.0);
    let cap = df * delta * forward;
    if !(price > intrinsic) {
        return Err(Error::ImpliedVol(format!("price {price:e} is not above intrinsic value {intrinsic:e}")));
    }
    if !(price < cap) {
        return Err(Error::ImpliedVol(format!("price {price:e} is not below the discounted forward {cap:e}")));
    }
    let f = |s: f64| black76_caplet(forward, strike, s, expiry, delta, df) - price;
    let (mut lo, mut hi) = (IV_LOWER, IV_UPPER);
    if f(lo) > 0.0 {
        return Err(Error::ImpliedVol(format!("price {price:e} implies a volatility below {IV_LOWER}")));
    }
    if f(hi) < 0.0 {
        return Err(Error::ImpliedVol(format!("price {price:e} implies a volatility above {IV_UPPER}")));
    }
    // Run to the floating-point resolution of sigma; the price then
    // matches far inside 1e-10.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const DEFAULT_STRIKE_MULTIPLIERS: [f64; 7] = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3];

/// Caplets on every rate, strikes at `multipliers * L(0, T_i)`.
pub fn caplet_grid(setup: &MarketSetup, multipliers: &[f64]) -> Result<Vec<Instrument>> {
    let libor = setup.initial_libor()?;
    Ok((1..=setup.n_rates())
        .flat_map(|i| {
            let f = libor[i - 1];
            multipliers.iter().map(move |&m| Instrument::Caplet(CapletSpec { strike: m * f, index: i }))
        })
        .collect())
}

/// Swaptions on the given `(start, end)` pairs, strikes at multiples of the
/// forward swap rate.
pub fn swaption_grid(
    setup: &MarketSetup,
    pairs: &[(usize, usize)],
    multipliers: &[f64],
    convention: CouponConvention,
) -> Vec<Instrument> {
    pairs
        .iter()
        .flat_map(|&(start, end)| {
            let s0 = SwaptionSpec::forward_swap_rate(start, end, convention, setup);
            multipliers.iter().map(move |&m| {
                Instrument::Swaption(SwaptionSpec { strike: m * s0, start, end, convention })
            })
        })
        .collect()
}

/// Index pairs for options expiring at each of `expiries` on swaps lasting
/// each of `lengths` (all in years), matched against the tenor dates.
pub fn swaption_pairs(setup: &MarketSetup, expiries: &[f64], lengths: &[f64]) -> Result<Vec<(usize, usize)>> {
    let find = |t: f64| {
        setup
            .tenor
            .dates()
            .iter()
            .position(|&d| (d - t).abs() < 1e-9)
            .ok_or_else(|| Error::InvalidParameter(format!("no tenor date at {t}")))
    };
    let mut out = Vec::new();
    for &e in expiries {
        let i = find(e)?;
        for &len in lengths {
            let m = find(e + len)?;
            if m > setup.n_rates() {
                return Err(Error::InvalidParameter(format!("swap to {} ends after T_N", e + len)));
            }
            out.push((i, m));
        }
    }
    Ok(out)
}

/// One (instrument, scheme) cell of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub instrument: Instrument,
    pub estimate: McEstimate,
    pub implied_vol: Option<f64>,
    pub iv_error: Option<String>,
    pub iv_diff_vs_full: Option<f64>,
    pub price_diff_vs_full: f64,
    /// Standard error of the pathwise difference to the full scheme.
    pub diff_std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub n_paths: u64,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "instrument,maturity_index,strike,scheme,price,std_error,implied_vol,iv_diff_vs_full,price_diff_vs_full,n_paths,seed";

impl ComparisonTable {
    pub fn row(&self, instrument: &Instrument, scheme: Scheme) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.instrument == *instrument && r.estimate.scheme == scheme)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl fmt::Display for ComparisonRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.estimate;
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.instrument.label(),
            self.instrument.maturity_index(),
            self.instrument.strike(),
            e.scheme,
            e.value,
            e.std_error,
            opt(self.implied_vol),
            opt(self.iv_diff_vs_full),
            self.price_diff_vs_full,
            e.n_paths,
            e.seed
        )
    }
}

#[derive(Debug, Clone, Default)]
struct CellAcc {
    by_scheme: [Moments; 3],
    // Pathwise (scheme - full), for frozen and taylor.
    diff: [Moments; 3],
}

fn slot(s: Scheme) -> usize {
    match s {
        Scheme::FullSde => 0,
        Scheme::FrozenDrift => 1,
        Scheme::StrongTaylor => 2,
    }
}

/// Prices every instrument under all three schemes on common driver samples.
pub fn compare_schemes(
    sim: &Simulator,
    instruments: &[Instrument],
    n_paths: u64,
    seed: u64,
    threads: usize,
) -> Result<ComparisonTable> {
    let setup = sim.setup();
    for inst in instruments {
        inst.validate(setup)?;
    }
    let per_path = |acc: &mut Vec<CellAcc>, set: &PathSet<'_>| {
        let valid = Scheme::ALL.map(|s| set.get(s).map(|p| p.is_finite()).unwrap_or(false));
        for (cell, inst) in acc.iter_mut().zip(instruments) {
            let mut pay = [0.0; 3];
            for s in Scheme::ALL {
                let k = slot(s);
                if valid[k] {
                    pay[k] = inst.payoff(&set.get(s).expect("all schemes run"), setup);
                    cell.by_scheme[k].push(pay[k]);
                }
            }
            for k in 1..3 {
                if valid[0] && valid[k] {
                    cell.diff[k].push(pay[k] - pay[0]);
                }
            }
        }
    };
    let acc = sim.accumulate(
        SchemeSet::all(),
        n_paths,
        seed,
        threads,
        || vec![CellAcc::default(); instruments.len()],
        per_path,
        |total, block| {
            for (t, b) in total.iter_mut().zip(&block) {
                for k in 0..3 {
                    t.by_scheme[k].merge(&b.by_scheme[k]);
                    t.diff[k].merge(&b.diff[k]);
                }
            }
        },
    )?;

    let mut rows = Vec::with_capacity(3 * instruments.len());
    for (cell, inst) in acc.iter().zip(instruments) {
        let black = inst.black_inputs(setup, sim.initial_libor());
        let ivs = Scheme::ALL.map(|s| {
            let e = McEstimate::from_moments(&cell.by_scheme[slot(s)], n_paths, s, seed);
            let iv = black.map(|(fwd, t, d, df)| implied_vol(e.value, fwd, inst.strike(), t, d, df));
            (e, iv)
        });
        let full_iv = ivs[0].1.as_ref().and_then(|r| r.as_ref().ok()).copied();
        for s in Scheme::ALL {
            let (estimate, iv) = &ivs[slot(s)];
            let implied_vol = iv.as_ref().and_then(|r| r.as_ref().ok()).copied();
            let iv_error = iv.as_ref().and_then(|r| r.as_ref().err()).map(|e| e.to_string());
            let diff = if s == Scheme::FullSde { Moments::default() } else { cell.diff[slot(s)] };
            rows.push(ComparisonRow {
                instrument: *inst,
                estimate: *estimate,
                implied_vol,
                iv_error,
                iv_diff_vs_full: implied_vol.zip(full_iv).map(|(a, b)| a - b),
                price_diff_vs_full: estimate.value - ivs[0].0.value,
                diff_std_error: if s == Scheme::FullSde { 0.0 } else { diff.std_error() },
            });
        }
    }
    Ok(ComparisonTable { rows, n_paths, seed })
}
