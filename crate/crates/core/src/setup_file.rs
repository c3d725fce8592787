//! Market setup files (TOML).
//!
//! ```toml
//! tenor_dates = [0.0, 0.5, 1.0]            # T_0 .. T_{N+1}
//! bond_prices = [0.98, 0.96]               # B(0,T_1) .. B(0,T_{N+1})
//! vols = [0.2]                             # per rate: constant or [per-interval levels]
//! nig = { alpha = 1.5, beta = 0.0, delta_bar = 1.5, mu = 0.0 }
//! em = { M = 1.5, epsilon = 0.01 }
//! # optional, per accrual interval or constant:
//! # drift = 0.0
//! # gauss = 0.0
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::levy_driver::{EmValidationConfig, LevyLocalTriplet, NigParams, PiecewiseConstant};
use crate::term_structure::{DiscountCurve, MarketSetup, TenorStructure, VolatilityStructure};

/// Name under which the bundled February 2002 EUR setup is available.
pub const BUNDLED_SETUP: &str = "eur_feb2002";

const EUR_FEB2002: &str = include_str!("../data/eur_feb2002.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum VolEntry {
    Constant(f64),
    PerInterval(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Profile {
    Constant(f64),
    PerInterval(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NigSection {
    alpha: f64,
    beta: f64,
    delta_bar: f64,
    mu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmSection {
    #[serde(rename = "M")]
    m: f64,
    epsilon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetupDocument {
    tenor_dates: Vec<f64>,
    bond_prices: Vec<f64>,
    vols: Vec<VolEntry>,
    nig: NigSection,
    em: EmSection,
    drift: Option<Profile>,
    gauss: Option<Profile>,
}

fn profile(p: Option<Profile>, tenor: &TenorStructure) -> Result<PiecewiseConstant> {
    match p {
        None => Ok(PiecewiseConstant::constant(0.0)),
        Some(Profile::Constant(v)) => Ok(PiecewiseConstant::constant(v)),
        Some(Profile::PerInterval(v)) => {
            let intervals = tenor.dates().len() - 1;
            if v.len() != intervals {
                return Err(Error::SetupFile(format!(
                    "per-interval profile needs {intervals} values, got {}",
                    v.len()
                )));
            }
            PiecewiseConstant::new(tenor.dates().to_vec(), v)
        }
    }
}

/// Parses a setup document.
pub fn parse_setup(text: &str) -> Result<MarketSetup> {
    let doc: SetupDocument = toml::from_str(text).map_err(|e| Error::SetupFile(e.to_string()))?;
    let tenor = TenorStructure::new(doc.tenor_dates)?;
    let curve = DiscountCurve::new(doc.bond_prices)?;
    let levels = doc
        .vols
        .into_iter()
        .enumerate()
        .map(|(r, v)| match v {
            VolEntry::Constant(c) => vec![c; r + 1],
            VolEntry::PerInterval(levels) => levels,
        })
        .collect();
    let vols = VolatilityStructure::piecewise(&tenor, levels)?;
    let nig = NigParams::new(doc.nig.alpha, doc.nig.beta, doc.nig.delta_bar, doc.nig.mu)?;
    let driver = LevyLocalTriplet::new(profile(doc.drift, &tenor)?, profile(doc.gauss, &tenor)?, nig)?;
    let em = EmValidationConfig::new(doc.em.m, doc.em.epsilon)?;
    MarketSetup::new(tenor, curve, vols, driver, em)
}

/// Loads a setup file, or the bundled setup when `path` is its name.
pub fn load_setup(path: &Path) -> Result<MarketSetup> {
    if path.as_os_str() == BUNDLED_SETUP {
        return parse_setup(EUR_FEB2002);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::SetupFile(format!("{}: {e}", path.display())))?;
    parse_setup(&text)
}

/// The February 19, 2002 EUR setup: semi-annual tenor to 5Y, volatilities
/// 0.20 down to 0.12, NIG with `alpha = delta_bar = 1.5`.
pub fn eur_feb2002_setup() -> MarketSetup {
    parse_setup(EUR_FEB2002).expect("bundled setup parses")
}
