//! Monte Carlo engine for LIBOR market models driven by a time-inhomogeneous
//! Lévy process (normal inverse Gaussian jumps).
//!
//! Rates are simulated under the terminal measure with three schemes that
//! share the same driver increments: the full SDE with its random drift, the
//! frozen-drift approximation, and the first-order strong Taylor
//! approximation, which evaluates the drift along the frozen-drift paths.

pub mod cli;
pub mod drift;
pub mod error;
pub mod experiment;
pub mod levy_driver;
pub mod pricing;
pub mod quadrature;
pub mod reference;
pub mod setup_file;
pub mod simulator;
pub mod special;
pub mod term_structure;

pub use drift::{DriftEngine, DriftMethod, StateVector};
pub use error::{Error, Result};
pub use levy_driver::{LevyLocalTriplet, NigParams};
pub use pricing::{CapletSpec, Instrument, McEstimate, SwaptionSpec};
pub use simulator::{build_grid, PathBundle, Scheme, SimulationGrid, Simulator};
pub use term_structure::MarketSetup;
