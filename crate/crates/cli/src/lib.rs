//! Command-line front end: binds body/field JSON files, seeds and sample
//! counts to the estimator library and writes reproducible CSV/JSON outputs.
//!
//! Reproducibility contract: a command run twice with the same argument
//! vector produces byte-identical stdout and output files. The RNG
//! substream layout is derived from `--seed` and `--streams` alone, so
//! `--workers` (thread count) changes wall time and nothing else.

pub mod commands;
pub mod suite;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use chordmc::estimators::EstimatorConfig;
use chordmc::sampling::SamplePlan;

/// Everything ran and every check (if any) passed.
pub const EXIT_OK: i32 = 0;
/// The run completed but at least one identity check failed.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Usage or configuration error (bad flags, unreadable files, degenerate
/// sampling setups).
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "chordmc",
    version,
    about = "Monte Carlo chord, radius and distance distributions for CSG solids",
    after_help = "Exit codes: 0 success, 1 identity check failed, 2 usage or configuration error.\n\
                  Identical argument vectors produce byte-identical outputs; --workers never affects results."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: RunOptions,
}

/// Knobs shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct RunOptions {
    /// RNG seed (default is the fixed documented constant 0x5EED_C0DE)
    #[arg(long, global = true, default_value_t = chordmc::DEFAULT_SEED)]
    pub seed: u64,

    /// RNG substream count; part of the sampling plan, so changing it
    /// changes results (unlike --workers)
    #[arg(long, global = true, default_value_t = chordmc::DEFAULT_STREAMS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub streams: u64,

    /// Accepted samples per estimator (hitting lines, interior rays, or
    /// point pairs, depending on the command)
    #[arg(long, global = true, default_value_t = 1_000_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,

    /// Histogram bin count
    #[arg(long, global = true, default_value_t = chordmc::DEFAULT_BINS as u64, value_parser = clap::value_parser!(u64).range(8..))]
    pub bins: u64,

    /// Histogram support override LO:HI (default: each estimator's natural
    /// support, [0, body diameter] for lengths); out-of-range samples are
    /// tallied as overflow
    #[arg(long, global = true, value_parser = parse_range_spec, value_name = "LO:HI")]
    pub range: Option<(f64, f64)>,

    /// Directory the full set of output files is written into (created if
    /// missing); the primary artifact always goes to stdout as well
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads (0 = all cores); affects wall time only, never results
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,

    /// Statistical tolerance for identity checks, in standard errors
    #[arg(long, global = true, default_value_t = 4.0)]
    pub sigma: f64,
}

impl RunOptions {
    /// Estimator configuration implied by the flags.
    pub fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            samples: self.samples,
            n_bins: self.bins as usize,
            range: self.range,
            plan: self.plan(),
        }
    }

    pub fn plan(&self) -> SamplePlan {
        SamplePlan::new(self.seed, self.streams as usize)
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(format!("--sigma must be a positive number, got {}", self.sigma));
        }
        Ok(())
    }
}

fn parse_range_spec(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|e| format!("bad lower edge {lo:?}: {e}"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|e| format!("bad upper edge {hi:?}: {e}"))?;
    if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi <= lo {
        return Err(format!("range must satisfy 0 <= LO < HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print a body's closed-form metrics (volume, surface, Cauchy mean chord)
    Describe {
        /// Body JSON file: {"solid": <csg>, "metrics": {...}?}
        #[arg(long)]
        body: PathBuf,
    },

    /// Sample invariant lines and write the signed chord-length histograms
    SampleChords {
        #[arg(long)]
        body: PathBuf,
    },

    /// Sample interior rays and write the signed radius histograms
    SampleRadii {
        #[arg(long)]
        body: PathBuf,
    },

    /// Sample interior point pairs and write the distance histogram and
    /// autocorrelation table
    SampleDistances {
        #[arg(long)]
        body: PathBuf,
    },

    /// Reconstruct the signed chord-length density from the curvature of
    /// the autocorrelation
    SignedCld {
        #[arg(long)]
        body: PathBuf,
        /// Smoothing window (odd, >= 5) for the local cubic curvature fit
        #[arg(long, default_value_t = 9)]
        window: usize,
    },

    /// Evaluate the chord-method functional by several routes and cross-check them
    Dirac {
        #[arg(long)]
        body: PathBuf,
        /// Test function: exp:ALPHA, pow:P, ind:CUT, or volume (4 pi x^2)
        #[arg(long, default_value = "exp:1.0")]
        phi: String,
        /// Comma-separated routes among gamma, radii, chords, pairs
        #[arg(long, default_value = "gamma,radii,chords")]
        methods: String,
        /// Chord-route normalization length: "cauchy" (4V/S) or
        /// "empirical" (pi <l^4> / 3V from the sampled signed events)
        #[arg(long, default_value = "cauchy")]
        norm: String,
    },

    /// Optical (density-weighted) chord distribution and functional checks
    /// for a piecewise-constant density field
    Optical {
        /// Field JSON file: {"hull": <solid>, "regions": [{"solid": .., "rho": ..}]}
        #[arg(long)]
        field: PathBuf,
        /// Test function for the functional cross-check
        #[arg(long, default_value = "exp:1.0")]
        phi: String,
    },

    /// Exponential-flight random walks; mean in-body path versus the Cauchy chord
    Walk {
        #[arg(long)]
        body: PathBuf,
        /// Scattering mean free path; repeat the flag for a sweep
        /// (default sweep: 0.25 0.5 1 2 4)
        #[arg(long = "mfp", value_name = "LAMBDA")]
        mfp: Vec<f64>,
        /// Also run this many exact single-kink pairing checks
        #[arg(long, default_value_t = 0)]
        kinks: u64,
    },

    /// Run the full identity suite against one body and emit a JSON report
    Identities {
        #[arg(long)]
        body: PathBuf,
    },
}

/// Parses `std::env::args` and runs; returns the process exit code.
pub fn run_from_env() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land on stdout with success; real usage
            // errors land on stderr with the config exit code.
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run(cli)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Err(msg) = cli.opts.validate() {
        eprintln!("error: {msg}");
        return EXIT_CONFIG;
    }
    if cli.opts.workers > 0 {
        // Thread count never enters the sampling plan, so this is purely a
        // wall-time knob; if a pool already exists (repeated in-process
        // runs) the existing one is kept.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.opts.workers)
            .build_global();
    }
    match commands::dispatch(&cli.command, &cli.opts) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
