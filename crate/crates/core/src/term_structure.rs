//! Tenor structure, initial discount curve, volatility structure and the
//! model conditions on them.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_driver::{validate_em, EmReport, EmValidationConfig, LevyLocalTriplet};

/// Tenor dates `0 = T_0 < T_1 < ... < T_{N+1} = T*` in year fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct TenorStructure {
    dates: Vec<f64>,
}

impl TenorStructure {
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 3 {
            return Err(Error::MarketData(format!(
                "tenor needs at least T_0, T_1, T_2 (got {} dates)",
                dates.len()
            )));
        }
        if dates[0] != 0.0 {
            return Err(Error::MarketData(format!("tenor must start at T_0 = 0, got {}", dates[0])));
        }
        if let Some(w) = dates.windows(2).find(|w| !(w[0] < w[1]) || !w[1].is_finite()) {
            return Err(Error::MarketData(format!(
                "tenor dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { dates })
    }

    /// Equidistant tenor `0, delta, ..., (n + 1) delta`.
    pub fn equidistant(n_rates: usize, delta: f64) -> Result<Self> {
        Self::new((0..=n_rates + 1).map(|k| k as f64 * delta).collect())
    }

    /// Number of LIBOR rates `N`.
    pub fn n_rates(&self) -> usize {
        self.dates.len() - 2
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// `T_i` for `i in 0..=N+1`.
    pub fn date(&self, i: usize) -> f64 {
        self.dates[i]
    }

    /// `delta_i = T_{i+1} - T_i` for `i in 0..=N`.
    pub fn accrual(&self, i: usize) -> f64 {
        self.dates[i + 1] - self.dates[i]
    }

    pub fn terminal(&self) -> f64 {
        *self.dates.last().expect("non-empty")
    }

    /// Accrual interval `k` with `T_k <= s < T_{k+1}`; `N` for `s >= T_N`.
    pub fn interval_of(&self, s: f64) -> usize {
        let n = self.n_rates();
        self.dates[1..=n].partition_point(|&t| t <= s)
    }
}

/// Discount factors `B(0, T_i)` for `i = 1..=N+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve {
    bonds: Vec<f64>,
}

impl DiscountCurve {
    pub fn new(bonds: Vec<f64>) -> Result<Self> {
        if bonds.iter().any(|b| !b.is_finite()) {
            return Err(Error::MarketData("bond prices must be finite".into()));
        }
        Ok(Self { bonds })
    }

    pub fn bonds(&self) -> &[f64] {
        &self.bonds
    }

    /// `B(0, T_i)`, with `B(0, T_0) = 1`.
    pub fn bond(&self, i: usize) -> f64 {
        if i == 0 {
            1.0
        } else {
            self.bonds[i - 1]
        }
    }

    pub fn terminal_bond(&self) -> f64 {
        *self.bonds.last().expect("non-empty")
    }

    pub fn with_bonds_scaled(&self, factor: f64) -> Self {
        Self { bonds: self.bonds.iter().map(|b| b * factor).collect() }
    }
}

/// `L(0, T_i) = (B(0, T_i) / B(0, T_{i+1}) - 1) / delta_i` for `i = 1..=N`.
pub fn initial_libor(curve: &DiscountCurve, tenor: &TenorStructure) -> Result<Vec<f64>> {
    let n = tenor.n_rates();
    if curve.bonds.len() != n + 1 {
        return Err(Error::MarketData(format!(
            "expected {} bond prices for T_1..T_{}, got {}",
            n + 1,
            n + 1,
            curve.bonds.len()
        )));
    }
    (1..=n)
        .map(|i| {
            let ratio = curve.bond(i) / curve.bond(i + 1);
            if !(ratio > 1.0) || curve.bond(i + 1) <= 0.0 {
                return Err(Error::MarketData(format!(
                    "B(0,T_{i}) / B(0,T_{}) = {ratio} is not > 1",
                    i + 1
                )));
            }
            Ok((ratio - 1.0) / tenor.accrual(i))
        })
        .collect()
}

/// Volatilities `lambda(., T_i)`, constant on each accrual interval
/// `[T_k, T_{k+1})`, `k < i`, and zero from `T_i` on.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityStructure {
    dates: Vec<f64>,
    // levels[i - 1][k] for k in 0..i
    levels: Vec<Vec<f64>>,
}

impl VolatilityStructure {
    /// One constant level per rate.
    pub fn constant(tenor: &TenorStructure, per_rate: &[f64]) -> Result<Self> {
        let levels = per_rate.iter().enumerate().map(|(r, &v)| vec![v; r + 1]).collect();
        Self::piecewise(tenor, levels)
    }

    /// `levels[i - 1]` holds the `i` interval levels of rate `i`.
    pub fn piecewise(tenor: &TenorStructure, levels: Vec<Vec<f64>>) -> Result<Self> {
        let n = tenor.n_rates();
        if levels.len() != n {
            return Err(Error::MarketData(format!("expected {n} volatility entries, got {}", levels.len())));
        }
        for (r, row) in levels.iter().enumerate() {
            if row.len() != r + 1 {
                return Err(Error::MarketData(format!(
                    "rate {} needs {} interval volatilities, got {}",
                    r + 1,
                    r + 1,
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::MarketData(format!("rate {} has a non-finite volatility", r + 1)));
            }
        }
        Ok(Self { dates: tenor.dates()[..=n].to_vec(), levels })
    }

    pub fn n_rates(&self) -> usize {
        self.levels.len()
    }

    /// Level of rate `i` on accrual interval `k`; zero for `k >= i`.
    #[inline]
    pub fn level(&self, i: usize, k: usize) -> f64 {
        self.levels[i - 1].get(k).copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dates: self.dates.clone(),
            levels: self.levels.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect(),
        }
    }

    /// `sup_s sum_i |lambda(s, T_i)|`.
    pub fn max_abs_sum(&self) -> f64 {
        (0..self.n_rates())
            .map(|k| (1..=self.n_rates()).map(|i| self.level(i, k).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `lambda(s, T_i)`: the interval level on `[0, T_i]`, exactly zero for `s > T_i`.
pub fn vol_at(s: f64, i: usize, vols: &VolatilityStructure) -> Result<f64> {
    let n = vols.n_rates();
    if i == 0 || i > n {
        return Err(Error::RateIndex { index: i, n });
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidParameter(format!("time must be >= 0, got {s}")));
    }
    let t_i = vols.dates[i];
    if s > t_i {
        return Ok(0.0);
    }
    // Closed at T_i: the last interval's level applies at the fixing date itself.
    let k = vols.dates[1..i].partition_point(|&t| t <= s);
    Ok(vols.level(i, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSetup {
    pub tenor: TenorStructure,
    pub curve: DiscountCurve,
    pub vols: VolatilityStructure,
    pub driver: LevyLocalTriplet,
    pub em: EmValidationConfig,
}

impl MarketSetup {
    /// Checks shapes only; the model conditions are reported by [`validate_setup`].
    pub fn new(
        tenor: TenorStructure,
        curve: DiscountCurve,
        vols: VolatilityStructure,
        driver: LevyLocalTriplet,
        em: EmValidationConfig,
    ) -> Result<Self> {
        let n = tenor.n_rates();
        if curve.bonds().len() != n + 1 {
            return Err(Error::MarketData(format!(
                "expected {} bond prices (T_1..T_{}), got {}",
                n + 1,
                n + 1,
                curve.bonds().len()
            )));
        }
        if vols.n_rates() != n || vols.dates != tenor.dates()[..=n] {
            return Err(Error::MarketData("volatility structure does not match the tenor".into()));
        }
        Ok(Self { tenor, curve, vols, driver, em })
    }

    pub fn n_rates(&self) -> usize {
        self.tenor.n_rates()
    }

    pub fn initial_libor(&self) -> Result<Vec<f64>> {
        initial_libor(&self.curve, &self.tenor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub condition: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub em: EmReport,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, condition: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.condition == condition)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "condition,status,detail")?;
        for c in &self.checks {
            writeln!(f, "{},{},{}", c.condition, if c.passed { "pass" } else { "FAIL" }, c.detail)?;
        }
        write!(f, "overall,{},", if self.passed() { "pass" } else { "FAIL" })
    }
}

pub const CHECK_BONDS_POSITIVE: &str = "LR2.positive";
pub const CHECK_BONDS_DECREASING: &str = "LR2.decreasing";
pub const CHECK_INITIAL_LIBOR: &str = "initial_libor.positive";
pub const CHECK_VOL_SUM: &str = "LR1.vol_sum";
pub const CHECK_EM_DOMAIN: &str = "EM.domain";

/// Collects every model condition into a report; never fails.
pub fn validate_setup(setup: &MarketSetup) -> ValidationReport {
    let bonds = setup.curve.bonds();
    let mut checks = Vec::new();

    let nonpositive: Vec<String> = bonds
        .iter()
        .enumerate()
        .filter(|(_, &b)| b <= 0.0)
        .map(|(k, b)| format!("B(0,T_{})={b}", k + 1))
        .collect();
    checks.push(Check {
        condition: CHECK_BONDS_POSITIVE.into(),
        passed: nonpositive.is_empty(),
        detail: if nonpositive.is_empty() { "all bond prices > 0".into() } else { nonpositive.join(" ") },
    });

    let mut all = vec![1.0];
    all.extend_from_slice(bonds);
    let increases: Vec<String> = all
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !(w[1] < w[0]))
        .map(|(k, w)| format!("B(0,T_{})={} >= B(0,T_{})={}", k + 1, w[1], k, w[0]))
        .collect();
    checks.push(Check {
        condition: CHECK_BONDS_DECREASING.into(),
        passed: increases.is_empty(),
        detail: if increases.is_empty() { "strictly decreasing".into() } else { increases.join(" ") },
    });

    let libor = setup.initial_libor();
    checks.push(Check {
        condition: CHECK_INITIAL_LIBOR.into(),
        passed: libor.is_ok(),
        detail: match &libor {
            Ok(l) => format!(
                "min L(0,T_i) = {:.8}",
                l.iter().copied().fold(f64::INFINITY, f64::min)
            ),
            Err(e) => e.to_string(),
        },
    });

    let em = validate_em(&setup.vols, &setup.em, &setup.driver.jumps);
    checks.push(Check {
        condition: CHECK_VOL_SUM.into(),
        passed: em.sum_within_bound,
        detail: format!("sum |lambda| = {:.6} vs M = {:.6}", em.vol_sum, em.bound),
    });
    checks.push(Check {
        condition: CHECK_EM_DOMAIN.into(),
        passed: em.bound_in_domain,
        detail: format!(
            "M = {:.6} vs cumulant domain {:.6}; (1+eps)M inside: {}",
            em.bound, em.domain_limit, em.slack_in_domain
        ),
    });

    ValidationReport { checks, em }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setup_file::eur_feb2002_setup;
    use proptest::prelude::*;

    const TABLE: [f64; 10] = [
        0.9833630, 0.9647388, 0.9435826, 0.9228903, 0.9006922, 0.8790279, 0.8568412, 0.8352144, 0.8133497, 0.7920573,
    ];

    #[test]
    fn initial_libor_from_table() {
        let tenor = TenorStructure::equidistant(9, 0.5).unwrap();
        let l = initial_libor(&DiscountCurve::new(TABLE.to_vec()).unwrap(), &tenor).unwrap();
        assert_eq!(l.len(), 9);
        assert!((l[0] - 2.0 * (0.9833630 / 0.9647388 - 1.0)).abs() < 1e-15);
        assert!((l[0] - 0.03861).abs() < 5e-6);
        assert!((l[8] - 0.05375).abs() < 5e-5);
    }

    #[test]
    fn flat_curve_is_rejected() {
        let tenor = TenorStructure::equidistant(2, 0.5).unwrap();
        let err = initial_libor(&DiscountCurve::new(vec![1.0; 3]).unwrap(), &tenor).unwrap_err();
        assert!(matches!(err, Error::MarketData(_)));
    }

    #[test]
    fn tenor_rejects_bad_dates() {
        assert!(TenorStructure::new(vec![0.0, 0.5]).is_err());
        assert!(TenorStructure::new(vec![0.1, 0.5, 1.0]).is_err());
        assert!(TenorStructure::new(vec![0.0, 0.5, 0.5]).is_err());
        let t = TenorStructure::new(vec![0.0, 0.25, 1.0, 1.5]).unwrap();
        assert_eq!(t.n_rates(), 2);
        assert_eq!(t.accrual(1), 0.75);
        assert_eq!(t.terminal(), 1.5);
    }

    #[test]
    fn eur_feb2002_setup_validates() {
        let report = validate_setup(&eur_feb2002_setup());
        assert!(report.passed(), "{report}");
        assert!((report.em.vol_sum - 1.44).abs() < 1e-12);
        assert!(report.em.vol_sum < 1.5);
    }

    #[test]
    fn swapped_bonds_fail_lr2() {
        let mut setup = eur_feb2002_setup();
        let mut bonds = TABLE.to_vec();
        bonds.swap(3, 4);
        setup.curve = DiscountCurve::new(bonds).unwrap();
        let report = validate_setup(&setup);
        assert!(!report.passed());
        assert!(!report.check(CHECK_BONDS_DECREASING).unwrap().passed);
        assert!(report.check(CHECK_BONDS_POSITIVE).unwrap().passed);
        assert!(!report.check(CHECK_INITIAL_LIBOR).unwrap().passed);
        assert!(report.check(CHECK_VOL_SUM).unwrap().passed);
    }

    #[test]
    fn doubled_vols_fail_lr1() {
        let mut setup = eur_feb2002_setup();
        setup.vols = setup.vols.scaled(2.0);
        let report = validate_setup(&setup);
        assert!(!report.passed());
        let failed: Vec<&str> = report.failures().map(|c| c.condition.as_str()).collect();
        assert_eq!(failed, vec![CHECK_VOL_SUM]);
        assert!((report.em.vol_sum - 2.88).abs() < 1e-12);
        assert!(report.to_string().contains("LR1.vol_sum,FAIL"));
    }

    #[test]
    fn vol_at_examples() {
        let vols = eur_feb2002_setup().vols;
        assert_eq!(vol_at(0.25, 1, &vols).unwrap(), 0.20);
        assert_eq!(vol_at(0.5, 1, &vols).unwrap(), 0.20);
        assert_eq!(vol_at(1.0, 1, &vols).unwrap(), 0.0);
        assert_eq!(vol_at(3.0, 9, &vols).unwrap(), 0.12);
        assert!(matches!(vol_at(1.0, 0, &vols), Err(Error::RateIndex { .. })));
        assert!(matches!(vol_at(1.0, 10, &vols), Err(Error::RateIndex { .. })));
    }

    #[test]
    fn piecewise_vols_switch_at_tenor_dates() {
        let tenor = TenorStructure::equidistant(2, 0.5).unwrap();
        let vols = VolatilityStructure::piecewise(&tenor, vec![vec![0.3], vec![0.1, 0.2]]).unwrap();
        assert_eq!(vol_at(0.5, 2, &vols).unwrap(), 0.2);
        assert_eq!(vol_at(0.49, 2, &vols).unwrap(), 0.1);
        assert_eq!(vol_at(1.0, 2, &vols).unwrap(), 0.2);
        assert_eq!(vols.max_abs_sum(), 0.4);
        assert!(VolatilityStructure::piecewise(&tenor, vec![vec![0.3], vec![0.1]]).is_err());
    }

    fn bonds_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..0.2, 2..12).prop_map(|rates| {
            let mut b = 1.0;
            rates.iter().map(|r| { b /= 1.0 + 0.5 * r; b }).collect()
        })
    }

    proptest! {
        #[test]
        fn bond_ratios_round_trip(bonds in bonds_strategy()) {
            let tenor = TenorStructure::equidistant(bonds.len() - 1, 0.5).unwrap();
            let curve = DiscountCurve::new(bonds.clone()).unwrap();
            let l = initial_libor(&curve, &tenor).unwrap();
            for i in 1..bonds.len() {
                let ratio = 1.0 + 0.5 * l[i - 1];
                let want = bonds[i - 1] / bonds[i];
                prop_assert!(((ratio - want) / want).abs() < 1e-12);
            }
        }

        #[test]
        fn initial_libor_ignores_common_scale(bonds in bonds_strategy(), scale in 0.1f64..10.0) {
            let tenor = TenorStructure::equidistant(bonds.len() - 1, 0.5).unwrap();
            let curve = DiscountCurve::new(bonds).unwrap();
            let a = initial_libor(&curve, &tenor).unwrap();
            let b = initial_libor(&curve.with_bonds_scaled(scale), &tenor).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(((x - y) / x).abs() < 1e-9);
            }
        }

        #[test]
        fn vols_vanish_after_fixing(s in 0.0f64..5.0, i in 1usize..=9) {
            let vols = eur_feb2002_setup().vols;
            let v = vol_at(s, i, &vols).unwrap();
            let t_i = 0.5 * i as f64;
            prop_assert_eq!(if s > t_i { v } else { 0.0 }, 0.0);
            if s <= t_i {
                prop_assert!(v > 0.0);
            }
        }
    }
}
