//! The full comparison experiment on the February 2002 Euro setup, split
//! into eight checks. Each check returns an outcome with a one-line detail;
//! `run_all` runs them in order and keeps the two comparison tables so the
//! caller can write them out.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand::Rng;

use crate::drift::{DriftMethod, StateVector};
use crate::error::{Error, Result};
use crate::levy_driver::{nig_cumulant, substream, NigParams};
use crate::pricing::{
    black76_caplet, caplet_grid, compare_schemes, implied_vol, price_mc, price_mc_many, swaption_grid,
    swaption_pairs, CapletSpec, ComparisonTable, CouponConvention, Instrument, Moments, SwaptionSpec,
    DEFAULT_STRIKE_MULTIPLIERS,
};
use crate::reference::last_rate_caplet;
use crate::simulator::{build_grid, Fixings, Scheme, SchemeSet, Simulator};
use crate::term_structure::{validate_setup, MarketSetup};

/// Sizes and seeds for every check.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub threads: usize,
    pub substeps: usize,
    pub martingale_paths: u64,
    pub oracle_paths: u64,
    pub identity_paths: u64,
    pub drift_states: usize,
    pub surface_paths: u64,
    pub swaption_paths: u64,
    pub check_paths: u64,
    pub strike_multipliers: Vec<f64>,
    pub swaption_expiries: Vec<f64>,
    pub swaption_lengths: Vec<f64>,
    pub convention: CouponConvention,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20020219,
            threads: 0,
            substeps: 4,
            martingale_paths: 100_000,
            oracle_paths: 100_000,
            identity_paths: 10_000,
            drift_states: 100,
            surface_paths: 1_000_000,
            swaption_paths: 1_000_000,
            check_paths: 100_000,
            strike_multipliers: DEFAULT_STRIKE_MULTIPLIERS.to_vec(),
            swaption_expiries: vec![1.0, 2.0],
            swaption_lengths: vec![1.0, 1.5, 2.0, 2.5],
            convention: CouponConvention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} ({:.1} s) {}",
            self.id,
            self.title,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// Outcomes of a full run, with the tables behind checks 5 to 7.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub outcomes: Vec<CriterionOutcome>,
    pub caplets: ComparisonTable,
    pub swaptions: ComparisonTable,
}

impl ExperimentReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.passed).count()
    }
}

fn timed<F>(id: u8, title: &'static str, f: F) -> Result<CriterionOutcome>
where
    F: FnOnce() -> Result<(bool, String)>,
{
    let start = Instant::now();
    let (passed, detail) = f()?;
    Ok(CriterionOutcome { id, title, passed, detail, seconds: start.elapsed().as_secs_f64() })
}

fn simulator(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<Simulator> {
    Simulator::with_substeps(setup, cfg.substeps)
}

/// Mean of `L(T_N, T_N)` under the full scheme against `L(0, T_N)`.
pub fn martingale(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<CriterionOutcome> {
    timed(1, "martingale", || {
        let sim = simulator(setup, cfg)?;
        let n = sim.n_rates();
        let (m, invalid) = sim.accumulate(
            SchemeSet::only(Scheme::FullSde),
            cfg.martingale_paths,
            cfg.seed,
            cfg.threads,
            || (Moments::default(), 0u64),
            |(m, bad), set| {
                let p = set.full.expect("full scheme requested");
                if p.is_finite() {
                    m.push(p.fixing(n, n));
                } else {
                    *bad += 1;
                }
            },
            |(m, bad), (b, c)| {
                m.merge(&b);
                *bad += c;
            },
        )?;
        let l0 = sim.initial_libor()[n - 1];
        let z = (m.mean() - l0) / m.std_error();
        Ok((
            z.abs() <= 3.0 && invalid == 0,
            format!(
                "mean L(T{n},T{n}) {:.7} vs L(0,T{n}) {l0:.7}, {z:+.2} SE, {} paths, {invalid} invalid",
                m.mean(),
                cfg.martingale_paths
            ),
        ))
    })
}

/// At-the-money caplet on the last rate against the one-dimensional oracle.
pub fn last_rate_oracle(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<CriterionOutcome> {
    timed(2, "last-rate caplet oracle", || {
        let sim = simulator(setup, cfg)?;
        let n = sim.n_rates();
        let strike = sim.initial_libor()[n - 1];
        let oracle = last_rate_caplet(setup, strike)?;
        let caplet = Instrument::Caplet(CapletSpec { strike, index: n });
        let e = price_mc(&sim, Scheme::FullSde, caplet, cfg.oracle_paths, cfg.seed, cfg.threads)?;
        let z = (e.value - oracle) / e.std_error;
        Ok((
            z.abs() <= 3.0 && e.invalid_path_count == 0,
            format!("MC {:.8} vs quadrature {oracle:.8}, {z:+.2} SE, {} paths", e.value, e.n_paths),
        ))
    })
}

/// The last rate's path and prices do not depend on the scheme, bit for bit.
pub fn scheme_coincidence(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<CriterionOutcome> {
    timed(3, "last-rate scheme coincidence", || {
        let sim = simulator(setup, cfg)?;
        let n = sim.n_rates();
        let points = sim.grid().times().len();
        let mismatches = sim.accumulate(
            SchemeSet::all(),
            cfg.identity_paths,
            cfg.seed,
            cfg.threads,
            || 0u64,
            |bad, set| {
                let full = set.full.expect("all schemes");
                for other in [set.frozen, set.taylor] {
                    let other = other.expect("all schemes");
                    let same = (0..points).all(|t| full.log_rate(n, t).to_bits() == other.log_rate(n, t).to_bits());
                    *bad += u64::from(!same);
                }
            },
            |a, b| *a += b,
        )?;
        let libor = sim.initial_libor()[n - 1];
        let caplets: Vec<Instrument> = cfg
            .strike_multipliers
            .iter()
            .map(|&m| Instrument::Caplet(CapletSpec { strike: m * libor, index: n }))
            .collect();
        let prices: Vec<Vec<u64>> = Scheme::ALL
            .iter()
            .map(|&s| {
                price_mc_many(&sim, s, &caplets, cfg.identity_paths, cfg.seed, cfg.threads)
                    .map(|es| es.iter().map(|e| e.value.to_bits()).collect())
            })
            .collect::<Result<_>>()?;
        let prices_equal = prices.windows(2).all(|w| w[0] == w[1]);
        Ok((
            mismatches == 0 && prices_equal,
            format!(
                "{mismatches} differing rate-{n} paths over {} paths x 2 schemes; {} caplet prices {}",
                cfg.identity_paths,
                caplets.len(),
                if prices_equal { "identical" } else { "differ" }
            ),
        ))
    })
}

/// Cumulant expansion against quadrature on random states and times.
pub fn drift_equivalence(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<CriterionOutcome> {
    timed(4, "drift evaluator equivalence", || {
        let sim = simulator(setup, cfg)?;
        let engine = sim.drift_engine();
        let n = sim.n_rates();
        let l0 = sim.initial_libor();
        let mut rng = substream(cfg.seed, u64::MAX);
        let mut worst: f64 = 0.0;
        for _ in 0..cfg.drift_states {
            // Rates from a fifth to five times today's levels.
            let z: Vec<f64> = l0.iter().map(|l| l.ln() + rng.random_range(-1.6..1.6)).collect();
            let state = StateVector::log_libor(z);
            for i in 1..=n {
                let s = rng.random_range(0.0..setup.tenor.date(i));
                let a = engine.terminal_drift(s, i, &state, DriftMethod::CumulantExpansion)?;
                let b = engine.terminal_drift(s, i, &state, DriftMethod::Quadrature)?;
                let rel = if a == b { 0.0 } else { (a - b).abs() / b.abs().max(a.abs()) };
                worst = worst.max(rel);
            }
        }
        Ok((
            worst <= 1e-6,
            format!("max relative difference {worst:.2e} over {} states x {n} rates", cfg.drift_states),
        ))
    })
}

/// Largest `|IV(scheme) - IV(full)|` over the caplets of `table`, with the
/// number of cells where either volatility could not be implied.
pub fn max_iv_error(table: &ComparisonTable, scheme: Scheme) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for r in table.rows.iter().filter(|r| r.estimate.scheme == scheme) {
        match r.iv_diff_vs_full {
            Some(d) => worst = worst.max(d.abs()),
            None => missing += 1,
        }
    }
    (worst, missing)
}

fn invalid_paths(table: &ComparisonTable) -> u64 {
    table.rows.iter().map(|r| r.estimate.invalid_path_count).max().unwrap_or(0)
}

/// Caplets on every maturity and strike under all three schemes.
pub fn caplet_surface(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<ComparisonTable> {
    let sim = simulator(setup, cfg)?;
    let grid = caplet_grid(setup, &cfg.strike_multipliers)?;
    compare_schemes(&sim, &grid, cfg.surface_paths, cfg.seed, cfg.threads)
}

pub fn taylor_accuracy(table: &ComparisonTable, seconds: f64) -> CriterionOutcome {
    let (worst, missing) = max_iv_error(table, Scheme::StrongTaylor);
    let invalid = invalid_paths(table);
    CriterionOutcome {
        id: 5,
        title: "Taylor accuracy",
        passed: worst < 0.01 && missing == 0 && invalid == 0,
        detail: format!(
            "max |IV full - IV taylor| {worst:.2e} over {} caplets ({missing} without IV), {} paths",
            table.rows.len() / 3,
            table.n_paths
        ),
        seconds,
    }
}

/// Today's forward for the instrument's underlying: `L(0, T_i)` for a
/// caplet, the forward swap rate for a swaption.
pub fn forward_level(instrument: &Instrument, setup: &MarketSetup) -> Result<f64> {
    Ok(match instrument {
        Instrument::Caplet(c) => setup.initial_libor()?[c.index - 1],
        Instrument::Swaption(s) => SwaptionSpec::forward_swap_rate(s.start, s.end, s.convention, setup),
    })
}

/// Mean frozen-drift IV error per maturity over in- and out-of-the-money
/// strikes.
fn frozen_profile(table: &ComparisonTable, setup: &MarketSetup) -> Result<Vec<(usize, f64, f64)>> {
    let mut by_maturity: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in table.rows.iter().filter(|r| r.estimate.scheme == Scheme::FrozenDrift) {
        let Instrument::Caplet(c) = r.instrument else { continue };
        let Some(d) = r.iv_diff_vs_full else { continue };
        let forward = forward_level(&r.instrument, setup)?;
        if by_maturity.last().map(|m| m.0) != Some(c.index) {
            by_maturity.push((c.index, Vec::new(), Vec::new()));
        }
        let cell = by_maturity.last_mut().expect("pushed");
        if c.strike < forward {
            cell.1.push(d.abs());
        } else if c.strike > forward {
            cell.2.push(d.abs());
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(by_maturity.iter().map(|(i, itm, otm)| (*i, mean(itm), mean(otm))).collect())
}

/// The frozen scheme is worse than Taylor, worst in the money and at the
/// longer maturities.
pub fn frozen_deficiency(table: &ComparisonTable, setup: &MarketSetup, seconds: f64) -> Result<CriterionOutcome> {
    let (frozen, _) = max_iv_error(table, Scheme::FrozenDrift);
    let (taylor, _) = max_iv_error(table, Scheme::StrongTaylor);
    // The last rate has no drift approximation to get wrong, so it is left
    // out of the strike and maturity comparisons.
    let n = setup.n_rates();
    let live: Vec<_> = frozen_profile(table, setup)?.into_iter().filter(|p| p.0 < n).collect();
    let itm_worse = live.iter().filter(|p| p.1 > p.2).count();
    let half = live.len() / 2;
    let mean = |ps: &[(usize, f64, f64)]| {
        ps.iter().map(|p| 0.5 * (p.1 + p.2)).sum::<f64>() / ps.len().max(1) as f64
    };
    let (early, late) = (mean(&live[..half]), mean(&live[live.len() - half..]));
    let passed = frozen > taylor && !live.is_empty() && itm_worse == live.len() && late >= early;
    Ok(CriterionOutcome {
        id: 6,
        title: "frozen-drift deficiency",
        passed,
        detail: format!(
            "max IV error frozen {frozen:.2e} vs taylor {taylor:.2e}; ITM above OTM at {itm_worse}/{} maturities; \
             mean error {early:.2e} on the early vs {late:.2e} on the late maturities; frozen max {} 0.01",
            live.len(),
            if frozen > 0.01 { "exceeds" } else { "stays below" }
        ),
        seconds,
    })
}

/// The swaption grid under all three schemes.
pub fn swaption_surface(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<ComparisonTable> {
    let sim = simulator(setup, cfg)?;
    let pairs = swaption_pairs(setup, &cfg.swaption_expiries, &cfg.swaption_lengths)?;
    let grid = swaption_grid(setup, &pairs, &cfg.strike_multipliers, cfg.convention);
    compare_schemes(&sim, &grid, cfg.swaption_paths, cfg.seed, cfg.threads)
}

/// Frozen-drift price errors `(end index, |diff|, SE)` over swap lengths
/// for one expiry, at the deepest in-the-money strike.
fn frozen_by_length(table: &ComparisonTable, start: usize, setup: &MarketSetup) -> Result<Vec<(usize, f64, f64)>> {
    let mut out: Vec<(usize, f64, f64, f64)> = Vec::new();
    for r in table.rows.iter().filter(|r| r.estimate.scheme == Scheme::FrozenDrift) {
        let Instrument::Swaption(s) = r.instrument else { continue };
        if s.start != start {
            continue;
        }
        let moneyness = s.strike / forward_level(&r.instrument, setup)?;
        let cell = (s.end, r.price_diff_vs_full.abs(), r.diff_std_error, moneyness);
        match out.iter_mut().find(|c| c.0 == s.end) {
            Some(c) if moneyness < c.3 => *c = cell,
            Some(_) => {}
            None => out.push(cell),
        }
    }
    out.sort_by_key(|c| c.0);
    Ok(out.into_iter().map(|(m, d, se, _)| (m, d, se)).collect())
}

pub fn swaption_check(table: &ComparisonTable, setup: &MarketSetup, seconds: f64) -> Result<CriterionOutcome> {
    let mut itm_cells = 0;
    let mut bad_cells = 0;
    let mut starts = Vec::new();
    for r in table.rows.iter().filter(|r| r.estimate.scheme == Scheme::StrongTaylor) {
        let Instrument::Swaption(s) = r.instrument else { continue };
        if !starts.contains(&s.start) {
            starts.push(s.start);
        }
        if s.strike >= forward_level(&r.instrument, setup)? {
            continue;
        }
        let (Some(full), Some(frozen)) =
            (table.row(&r.instrument, Scheme::FullSde), table.row(&r.instrument, Scheme::FrozenDrift))
        else {
            continue;
        };
        itm_cells += 1;
        let se = full.estimate.std_error.hypot(r.estimate.std_error);
        if r.price_diff_vs_full.abs() > (3.0 * se).max(frozen.price_diff_vs_full.abs()) {
            bad_cells += 1;
        }
    }
    let mut trends = Vec::new();
    let mut monotone = true;
    for &start in &starts {
        let errs = frozen_by_length(table, start, setup)?;
        let mut inversions = 0;
        for w in errs.windows(2) {
            if w[1].1 < w[0].1 {
                inversions += 1;
                if w[0].1 - w[1].1 > w[0].2.hypot(w[1].2) {
                    monotone = false;
                }
            }
        }
        let grows = errs.len() < 2 || errs[errs.len() - 1].1 > errs[0].1;
        monotone &= inversions <= 1 && grows;
        let list: Vec<String> = errs.iter().map(|e| format!("{:.2e}", e.1)).collect();
        trends.push(format!("T{start}: {}", list.join(" ")));
    }
    let invalid = invalid_paths(table);
    Ok(CriterionOutcome {
        id: 7,
        title: "swaption grid",
        passed: itm_cells > 0 && bad_cells == 0 && monotone && invalid == 0,
        detail: format!(
            "taylor within bound at {}/{itm_cells} ITM cells; deep-ITM frozen error by swap length {}; {} paths",
            itm_cells - bad_cells,
            trends.join(", "),
            table.n_paths
        ),
        seconds,
    })
}

/// Black-76 prices inverted back to their volatilities. Cells whose time
/// value is lost in the rounding of the intrinsic value are skipped: no
/// volatility can be recovered from them.
pub fn black_round_trip() -> f64 {
    let (f, delta, df) = (0.05, 0.5, 0.8);
    let mut worst: f64 = 0.0;
    for &sigma in &[0.05, 0.15, 0.3, 0.6] {
        for &m in &[0.7, 0.9, 1.0, 1.1, 1.3] {
            for &t in &[0.5, 2.0, 4.5] {
                let price = black76_caplet(f, m * f, sigma, t, delta, df);
                let intrinsic = df * delta * (f - m * f).max(0.0);
                if price - intrinsic <= 1e-12 * price {
                    continue;
                }
                match implied_vol(price, f, m * f, t, delta, df) {
                    Ok(back) => worst = worst.max((back - sigma).abs()),
                    Err(_) => return f64::NAN,
                }
            }
        }
    }
    worst
}

/// The unit-level checks bundled as one criterion.
pub fn unit_checks(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<CriterionOutcome> {
    timed(8, "unit and property checks", || {
        let sim = simulator(setup, cfg)?;
        let n = sim.n_rates();
        let libor = sim.initial_libor().to_vec();
        let mut notes = Vec::new();
        let mut all = true;
        let mut record = |ok: bool, note: String| {
            all &= ok;
            notes.push(format!("{}{note}", if ok { "" } else { "FAILED " }));
        };

        let black = black_round_trip();
        record(black <= 1e-8, format!("Black round trip {black:.1e}"));

        let swap_mismatch = sim.accumulate(
            SchemeSet::only(Scheme::FullSde),
            cfg.identity_paths,
            cfg.seed,
            cfg.threads,
            || 0u64,
            |bad, set| {
                let p = set.full.expect("full requested");
                for i in 1..n {
                    let strike = libor[i - 1];
                    let cap = Instrument::Caplet(CapletSpec { strike, index: i }).payoff(&p, setup);
                    let convention = CouponConvention::PerPeriodAccrual;
                    let swp = Instrument::Swaption(SwaptionSpec { strike, start: i, end: i + 1, convention });
                    *bad += u64::from(cap.to_bits() != swp.payoff(&p, setup).to_bits());
                }
            },
            |a, b| *a += b,
        )?;
        record(swap_mismatch == 0, format!("one-period swaption = caplet ({swap_mismatch} mismatches)"));

        let mut stage_mismatch = 0u64;
        let mut ws_taylor = sim.workspace();
        let mut ws_frozen = sim.workspace();
        for j in 0..cfg.identity_paths.min(2000) {
            let taylor = sim.run_path(SchemeSet::only(Scheme::StrongTaylor), cfg.seed, j, &mut ws_taylor);
            let frozen = sim.run_path(SchemeSet::only(Scheme::FrozenDrift), cfg.seed, j, &mut ws_frozen);
            let (a, b) = (taylor.taylor_stage_one.expect("taylor ran"), frozen.frozen.expect("frozen ran"));
            let points = sim.grid().times().len();
            let same = (1..=n).all(|i| (0..points).all(|t| a.log_rate(i, t).to_bits() == b.log_rate(i, t).to_bits()));
            stage_mismatch += u64::from(!same);
        }
        record(stage_mismatch == 0, format!("Taylor stage one = frozen path ({stage_mismatch} mismatches)"));

        let kappa = nig_cumulant(1.44, &NigParams::symmetric_example())?;
        record((kappa - 1.62).abs() <= 1e-12, format!("kappa(1.44) = {kappa}"));

        let report = validate_setup(setup);
        let sum = setup.vols.max_abs_sum();
        let lr1 = report.check("LR1.vol_sum").map(|c| c.passed).unwrap_or(false);
        record(lr1 && sum < setup.driver.jumps.symmetric_domain(), format!("vol sum {sum:.4}"));

        let zero: Vec<Instrument> =
            (1..=n).map(|i| Instrument::Caplet(CapletSpec { strike: 0.0, index: i })).collect();
        let est = price_mc_many(&sim, Scheme::FullSde, &zero, cfg.check_paths, cfg.seed, cfg.threads)?;
        let worst_z = est
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let i = k + 1;
                let forward = setup.tenor.accrual(i) * setup.curve.bond(i + 1) * libor[k];
                ((e.value - forward) / e.std_error).abs()
            })
            .fold(0.0, f64::max);
        record(worst_z <= 3.0, format!("zero-strike caplets within {worst_z:.2} SE"));

        let (bias, noise) = refinement_bias(setup, cfg)?;
        record(bias < noise, format!("grid refinement bias {bias:.2e} vs MC noise {noise:.2e}"));

        Ok((all, notes.join("; ")))
    })
}

/// Halving the time step on common driver paths: the largest change in an
/// at-the-money caplet price, and the smallest standard error of those
/// prices.
pub fn refinement_bias(setup: &MarketSetup, cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let coarse = simulator(setup, cfg)?;
    let fine = Simulator::new(setup, build_grid(&setup.tenor, 2 * cfg.substeps)?)?;
    let n = coarse.n_rates();
    let caplets: Vec<Instrument> = coarse
        .initial_libor()
        .iter()
        .enumerate()
        .map(|(k, &l)| Instrument::Caplet(CapletSpec { strike: l, index: k + 1 }))
        .collect();
    let mut price = vec![Moments::default(); n];
    let mut diff = vec![Moments::default(); n];
    for j in 0..cfg.check_paths {
        let inc = fine.sample_increments(&mut substream(cfg.seed, j));
        let f = fine.simulate_with_increments(Scheme::FullSde, &inc)?;
        let c = coarse.simulate_with_increments(Scheme::FullSde, &inc.coarsen(2)?)?;
        if !(f.valid && c.valid) {
            return Err(Error::InvalidParameter(format!("path {j} overflowed")));
        }
        for (k, inst) in caplets.iter().enumerate() {
            let (pf, pc) = (inst.payoff(&f, setup), inst.payoff(&c, setup));
            price[k].push(pf);
            diff[k].push(pc - pf);
        }
    }
    let bias = diff.iter().map(|d| d.mean().abs()).fold(0.0, f64::max);
    let noise = price.iter().map(|p| p.std_error()).fold(f64::INFINITY, f64::min);
    Ok((bias, noise))
}

/// Runs checks 1 to 8 in order, handing each outcome to `report` as it
/// completes.
pub fn run_all<F>(setup: &MarketSetup, cfg: &ExperimentConfig, mut report: F) -> Result<ExperimentReport>
where
    F: FnMut(&CriterionOutcome),
{
    let mut outcomes = Vec::with_capacity(8);
    let mut keep = |o: CriterionOutcome| {
        report(&o);
        outcomes.push(o);
    };
    keep(martingale(setup, cfg)?);
    keep(last_rate_oracle(setup, cfg)?);
    keep(scheme_coincidence(setup, cfg)?);
    keep(drift_equivalence(setup, cfg)?);
    let start = Instant::now();
    let caplets = caplet_surface(setup, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    keep(taylor_accuracy(&caplets, seconds));
    keep(frozen_deficiency(&caplets, setup, 0.0)?);
    let start = Instant::now();
    let swaptions = swaption_surface(setup, cfg)?;
    keep(swaption_check(&swaptions, setup, start.elapsed().as_secs_f64())?);
    keep(unit_checks(setup, cfg)?);
    Ok(ExperimentReport { outcomes, caplets, swaptions })
}

/// Implied-volatility differences to the full scheme as a gnuplot `splot`
/// grid: one block per maturity, `T strike_multiplier diff` per line.
pub fn write_iv_surface<W: Write>(
    table: &ComparisonTable,
    setup: &MarketSetup,
    scheme: Scheme,
    mut w: W,
) -> Result<()> {
    writeln!(w, "# {} minus full implied volatility", scheme.label())?;
    writeln!(w, "# maturity strike/forward iv_diff")?;
    let mut last = None;
    for r in table.rows.iter().filter(|r| r.estimate.scheme == scheme) {
        let Instrument::Caplet(c) = r.instrument else { continue };
        if last.is_some() && last != Some(c.index) {
            writeln!(w)?;
        }
        last = Some(c.index);
        let m = c.strike / forward_level(&r.instrument, setup)?;
        match r.iv_diff_vs_full {
            Some(d) => writeln!(w, "{} {m:.6} {d}", setup.tenor.date(c.index))?,
            None => writeln!(w, "{} {m:.6} NaN", setup.tenor.date(c.index))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setup_file::eur_feb2002_setup;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            martingale_paths: 4000,
            oracle_paths: 4000,
            identity_paths: 500,
            drift_states: 5,
            surface_paths: 3000,
            swaption_paths: 3000,
            check_paths: 2000,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn black_round_trip_is_tight() {
        let worst = black_round_trip();
        assert!(worst <= 1e-8, "{worst}");
    }

    #[test]
    fn exact_checks_pass_at_small_size() {
        let setup = eur_feb2002_setup();
        let cfg = small();
        for o in [scheme_coincidence(&setup, &cfg).unwrap(), drift_equivalence(&setup, &cfg).unwrap()] {
            assert!(o.passed, "{o}");
        }
    }

    #[test]
    fn outcome_line_names_id_and_status() {
        let o = CriterionOutcome { id: 3, title: "x", passed: false, detail: "d".into(), seconds: 1.25 };
        assert_eq!(o.to_string(), "criterion 3 x: FAIL (1.2 s) d");
    }

    #[test]
    fn forward_levels() {
        let setup = eur_feb2002_setup();
        let l0 = setup.initial_libor().unwrap();
        let cap = Instrument::Caplet(CapletSpec { strike: 0.01, index: 4 });
        assert_eq!(forward_level(&cap, &setup).unwrap(), l0[3]);
        // One-period swap rate is the LIBOR forward.
        let convention = CouponConvention::PerPeriodAccrual;
        let swp = Instrument::Swaption(SwaptionSpec { strike: 0.01, start: 4, end: 5, convention });
        assert!((forward_level(&swp, &setup).unwrap() - l0[3]).abs() < 1e-15);
    }

    #[test]
    fn surface_tables_feed_the_checks() {
        let setup = eur_feb2002_setup();
        let cfg = small();
        let caplets = caplet_surface(&setup, &cfg).unwrap();
        assert_eq!(caplets.rows.len(), 3 * 9 * cfg.strike_multipliers.len());
        let (taylor, missing) = max_iv_error(&caplets, Scheme::StrongTaylor);
        assert_eq!(missing, 0);
        assert!(taylor < 1e-4);
        assert_eq!(max_iv_error(&caplets, Scheme::FullSde), (0.0, 0));
        assert!(taylor_accuracy(&caplets, 0.0).passed);
        let frozen = frozen_deficiency(&caplets, &setup, 0.0).unwrap();
        assert!(frozen.detail.contains("/8 maturities"), "{frozen}");

        let swaptions = swaption_surface(&setup, &cfg).unwrap();
        assert_eq!(swaptions.rows.len(), 3 * 8 * cfg.strike_multipliers.len());
        let by_len = frozen_by_length(&swaptions, 2, &setup).unwrap();
        assert_eq!(by_len.iter().map(|c| c.0).collect::<Vec<_>>(), vec![4, 5, 6, 7]);
        let c7 = swaption_check(&swaptions, &setup, 0.0).unwrap();
        assert!(c7.detail.contains("/24 ITM cells"), "{c7}");

        let mut out = Vec::new();
        write_iv_surface(&caplets, &setup, Scheme::FrozenDrift, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.is_empty()).count(), 8);
        assert!(text.lines().any(|l| l.starts_with("4.5 0.700000 ")));
    }

    #[test]
    fn refinement_bias_is_small_against_noise() {
        let (bias, noise) = refinement_bias(&eur_feb2002_setup(), &small()).unwrap();
        assert!(bias < noise, "{bias} vs {noise}");
    }
}
