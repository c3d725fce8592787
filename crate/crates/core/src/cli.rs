//! Command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::drift::DriftMethod;
use crate::error::{Error, Result};
use crate::experiment::{run_all, write_iv_surface, ExperimentConfig};
use crate::pricing::{
    caplet_grid, compare_schemes, price_mc_many, swaption_grid, swaption_pairs, CapletSpec, ComparisonTable,
    CouponConvention, Instrument, McEstimate, SwaptionSpec, DEFAULT_STRIKE_MULTIPLIERS,
};
use crate::setup_file::{load_setup, BUNDLED_SETUP};
use crate::simulator::{build_grid, Scheme, Simulator, DEFAULT_SUBSTEPS};
use crate::term_structure::{validate_setup, MarketSetup};

#[derive(Debug, Parser)]
#[command(name = "levy-libor", version, about = "Monte Carlo pricing in a Levy-driven LIBOR market model")]
pub struct Cli {
    /// Market setup file, or the name of the bundled setup.
    #[arg(long, global = true, default_value = BUNDLED_SETUP)]
    pub setup: PathBuf,

    /// Worker threads (0 lets rayon decide). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the setup against the model's admissibility conditions.
    Validate,
    /// Caplet prices under one scheme.
    PriceCaplets {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        caplets: CapletArgs,
        #[arg(long, value_enum, default_value_t = SchemeArg::Full)]
        scheme: SchemeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Payer swaption prices under one scheme.
    PriceSwaptions {
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        swaptions: SwaptionArgs,
        /// Strike multiples of the forward swap rate.
        #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = DEFAULT_STRIKE_MULTIPLIERS)]
        multipliers: Vec<f64>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Full)]
        scheme: SchemeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All three schemes on common driver paths, with implied volatilities
    /// and differences to the full scheme.
    Compare {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_enum, default_value_t = Product::Caplets)]
        product: Product,
        #[command(flatten)]
        caplets: CapletArgs,
        #[command(flatten)]
        swaptions: SwaptionArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the caplet implied-volatility differences as gnuplot data.
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Runs the full caplet and swaption experiment on the bundled setup and
    /// reports acceptance checks 1 to 8.
    ReproducePaper {
        /// Paths for the caplet and swaption comparisons.
        #[arg(long, default_value_t = 1_000_000)]
        paths: u64,
        #[arg(long, default_value_t = ExperimentConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
        substeps: usize,
        /// Directory for the comparison CSVs and the gnuplot surfaces.
        #[arg(long, default_value = "experiment-output")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 100_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Euler steps per accrual period.
    #[arg(long, default_value_t = DEFAULT_SUBSTEPS)]
    pub substeps: usize,
    #[arg(long, value_enum, default_value_t = DriftArg::Cumulant)]
    pub drift_method: DriftArg,
}

#[derive(Debug, Args)]
pub struct CapletArgs {
    /// Absolute strikes; without them strikes are multiples of the forward.
    #[arg(long = "strike", num_args = 1.., value_delimiter = ',')]
    pub strikes: Vec<f64>,
    /// Strike multiples of the forward rate.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = DEFAULT_STRIKE_MULTIPLIERS)]
    pub multipliers: Vec<f64>,
    /// Rate indices to price (default: all).
    #[arg(long = "rate", num_args = 1.., value_delimiter = ',')]
    pub rates: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SwaptionArgs {
    /// Option expiries in years.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [1.0, 2.0])]
    pub expiries: Vec<f64>,
    /// Underlying swap lengths in years.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_values_t = [1.0, 1.5, 2.0, 2.5])]
    pub lengths: Vec<f64>,
    #[arg(long, value_enum, default_value_t = ConventionArg::PerPeriod)]
    pub convention: ConventionArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Full,
    Frozen,
    Taylor,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Full => Scheme::FullSde,
            SchemeArg::Frozen => Scheme::FrozenDrift,
            SchemeArg::Taylor => Scheme::StrongTaylor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DriftArg {
    Cumulant,
    Quadrature,
}

impl From<DriftArg> for DriftMethod {
    fn from(d: DriftArg) -> Self {
        match d {
            DriftArg::Cumulant => DriftMethod::CumulantExpansion,
            DriftArg::Quadrature => DriftMethod::Quadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    /// Fixed coupon `delta K` on each date.
    PerPeriod,
    /// Fixed coupon `K` on each date.
    Flat,
}

impl From<ConventionArg> for CouponConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::PerPeriod => CouponConvention::PerPeriodAccrual,
            ConventionArg::Flat => CouponConvention::Flat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Product {
    Caplets,
    Swaptions,
}

pub const ESTIMATE_HEADER: &str = "instrument,maturity_index,end_index,strike,scheme,price,std_error,n_paths,seed,invalid_paths";

fn simulator(setup: &MarketSetup, sim: &SimArgs) -> Result<Simulator> {
    if sim.paths == 0 {
        return Err(Error::InvalidParameter("--paths must be >= 1".into()));
    }
    Simulator::with_method(setup, build_grid(&setup.tenor, sim.substeps)?, sim.drift_method.into())
}

fn caplets(setup: &MarketSetup, args: &CapletArgs) -> Result<Vec<Instrument>> {
    let n = setup.n_rates();
    let rates: Vec<usize> = if args.rates.is_empty() { (1..=n).collect() } else { args.rates.clone() };
    if let Some(&bad) = rates.iter().find(|&&i| i == 0 || i > n) {
        return Err(Error::RateIndex { index: bad, n });
    }
    if args.strikes.is_empty() {
        let grid = caplet_grid(setup, &args.multipliers)?;
        return Ok(grid.into_iter().filter(|c| rates.contains(&c.maturity_index())).collect());
    }
    Ok(rates
        .iter()
        .flat_map(|&index| args.strikes.iter().map(move |&strike| Instrument::Caplet(CapletSpec { strike, index })))
        .collect())
}

fn swaptions(setup: &MarketSetup, args: &SwaptionArgs, multipliers: &[f64]) -> Result<Vec<Instrument>> {
    let pairs = swaption_pairs(setup, &args.expiries, &args.lengths)?;
    Ok(swaption_grid(setup, &pairs, multipliers, args.convention.into()))
}

fn end_index(inst: &Instrument) -> usize {
    match inst {
        Instrument::Caplet(CapletSpec { index, .. }) => index + 1,
        Instrument::Swaption(SwaptionSpec { end, .. }) => *end,
    }
}

pub fn write_estimates<W: Write>(instruments: &[Instrument], estimates: &[McEstimate], mut w: W) -> io::Result<()> {
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for (inst, e) in instruments.iter().zip(estimates) {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            inst.label(),
            inst.maturity_index(),
            end_index(inst),
            inst.strike(),
            e.scheme,
            e.value,
            e.std_error,
            e.n_paths,
            e.seed,
            e.invalid_path_count
        )?;
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_table(table: &ComparisonTable, path: Option<&Path>) -> Result<()> {
    let mut w = output(path)?;
    table.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Frozen and Taylor surfaces as two gnuplot data sets (`index 0` and `index 1`).
fn write_surfaces(table: &ComparisonTable, setup: &MarketSetup, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# splot '{}' index 0 with lines, '' index 1 with lines", path.display())?;
    write_iv_surface(table, setup, Scheme::FrozenDrift, &mut w)?;
    writeln!(w, "\n")?;
    write_iv_surface(table, setup, Scheme::StrongTaylor, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs the parsed command. Printed output goes to stdout; the returned
/// error is the diagnostic for a nonzero exit.
pub fn run(cli: Cli) -> Result<()> {
    let setup = load_setup(&cli.setup)?;
    let threads = cli.threads;
    match cli.command {
        Command::Validate => {
            let report = validate_setup(&setup);
            if !report.passed() {
                return Err(Error::Validation(report));
            }
            print!("{report}");
            println!("setup is valid");
        }
        Command::PriceCaplets { sim, caplets: args, scheme, out } => {
            let simulator = simulator(&setup, &sim)?;
            let instruments = caplets(&setup, &args)?;
            let est = price_mc_many(&simulator, scheme.into(), &instruments, sim.paths, sim.seed, threads)?;
            let mut w = output(out.as_deref())?;
            write_estimates(&instruments, &est, &mut w)?;
            w.flush()?;
        }
        Command::PriceSwaptions { sim, swaptions: args, multipliers, scheme, out } => {
            let simulator = simulator(&setup, &sim)?;
            let instruments = swaptions(&setup, &args, &multipliers)?;
            let est = price_mc_many(&simulator, scheme.into(), &instruments, sim.paths, sim.seed, threads)?;
            let mut w = output(out.as_deref())?;
            write_estimates(&instruments, &est, &mut w)?;
            w.flush()?;
        }
        Command::Compare { sim, product, caplets: c, swaptions: s, out, surface } => {
            let simulator = simulator(&setup, &sim)?;
            let instruments = match product {
                Product::Caplets => caplets(&setup, &c)?,
                Product::Swaptions => swaptions(&setup, &s, &c.multipliers)?,
            };
            let table = compare_schemes(&simulator, &instruments, sim.paths, sim.seed, threads)?;
            write_table(&table, out.as_deref())?;
            if let Some(path) = surface {
                write_surfaces(&table, &setup, &path)?;
            }
        }
        Command::ReproducePaper { paths, seed, substeps, out_dir } => {
            if paths == 0 {
                return Err(Error::InvalidParameter("--paths must be >= 1".into()));
            }
            if cli.setup.as_os_str() != BUNDLED_SETUP {
                return Err(Error::InvalidParameter("reproduce-paper runs on the bundled setup only".into()));
            }
            let cfg = ExperimentConfig {
                seed,
                threads,
                substeps,
                surface_paths: paths,
                swaption_paths: paths,
                ..ExperimentConfig::default()
            };
            std::fs::create_dir_all(&out_dir)?;
            let report = run_all(&setup, &cfg, |o| println!("{o}"))?;
            write_table(&report.caplets, Some(&out_dir.join("caplets.csv")))?;
            write_table(&report.swaptions, Some(&out_dir.join("swaptions.csv")))?;
            write_surfaces(&report.caplets, &setup, &out_dir.join("caplet_iv_surface.dat"))?;
            println!("{}/{} criteria passed; tables in {}", report.passed(), report.outcomes.len(), out_dir.display());
        }
    }
    Ok(())
}
