use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use orbitcz::suite::{run_suite, Suite, SuiteConfig};
use orbitcz::ReportFormat;

#[derive(Parser, Debug)]
#[command(name = "orbitcz", version, about = "Invariant multiscale operators and CZ verification on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Group closure, orbit metric axioms and bi-invariance
    Group,
    /// Approximations to the identity and almost orthogonality
    Aoi,
    /// Calderón reproducing formula
    Reproduce,
    /// Whitney cubes, CZ decomposition and weak (1,1)
    Cz,
    /// Singular integral diagnostics: kernel constants, T1, WBP, decay
    T1,
    /// Paraproduct and the T1 reduction
    Paraproduct,
    /// Hölder, Besov, BMO and molecule norms
    Norms,
    /// Every suite on one shared grid
    All,
}

impl Command {
    fn suite(self) -> Suite {
        match self {
            Command::Group => Suite::Group,
            Command::Aoi => Suite::Aoi,
            Command::Reproduce => Suite::Reproduce,
            Command::Cz => Suite::Cz,
            Command::T1 => Suite::T1,
            Command::Paraproduct => Suite::Paraproduct,
            Command::Norms => Suite::Norms,
            Command::All => Suite::All,
        }
    }
}

#[derive(clap::Args, Debug)]
struct Opts {
    /// Root-system preset (A1, A1xA1, B2, I2(m), trivial) or a JSON root file
    #[arg(long, global = true, env = "ORBITCZ_GROUP")]
    group: Option<String>,
    /// Ambient dimension; 2 switches the defaults to the planar reference
    #[arg(long, global = true, env = "ORBITCZ_DIM")]
    dim: Option<usize>,
    /// Points per axis (odd)
    #[arg(long, global = true, env = "ORBITCZ_N")]
    n: Option<usize>,
    /// Box half-width
    #[arg(long = "box", global = true, env = "ORBITCZ_BOX")]
    box_half_width: Option<f64>,
    #[arg(long, global = true, env = "ORBITCZ_KMIN", allow_negative_numbers = true)]
    kmin: Option<i32>,
    #[arg(long, global = true, env = "ORBITCZ_KMAX", allow_negative_numbers = true)]
    kmax: Option<i32>,
    /// Calderón orders, comma separated
    #[arg(long = "M", global = true, env = "ORBITCZ_M", value_delimiter = ',')]
    ms: Option<Vec<usize>>,
    /// Neumann-series tolerance
    #[arg(long, global = true, env = "ORBITCZ_TOL")]
    tol: Option<f64>,
    #[arg(long, global = true, env = "ORBITCZ_SEED")]
    seed: Option<u64>,
    /// JSON report path
    #[arg(long, global = true, env = "ORBITCZ_OUT")]
    out: Option<PathBuf>,
    /// CSV report path
    #[arg(long, global = true, env = "ORBITCZ_CSV")]
    csv: Option<PathBuf>,
    /// Run suites on the rayon pool
    #[arg(long, global = true, env = "ORBITCZ_PARALLEL")]
    parallel: bool,
}

impl Opts {
    fn config(&self) -> SuiteConfig {
        let mut c = if self.dim == Some(2) { SuiteConfig::reference_2d() } else { SuiteConfig::reference_1d() };
        if let Some(g) = &self.group {
            c.group = g.clone();
        }
        if let Some(d) = self.dim {
            c.dim = d;
        }
        if let Some(n) = self.n {
            c.n = n;
        }
        if let Some(b) = self.box_half_width {
            c.box_half_width = b;
        }
        if let Some(k) = self.kmin {
            c.k_min = k;
        }
        if let Some(k) = self.kmax {
            c.k_max = k;
        }
        if let Some(ms) = &self.ms {
            c.ms = ms.clone();
        }
        if let Some(t) = self.tol {
            c.tol = t;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c.out = self.out.clone();
        c.csv = self.csv.clone();
        c.parallel = self.parallel;
        c
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = cli.opts.config();
    let (out, csv) = (cfg.out.clone(), cfg.csv.clone());
    let report = match run_suite(cli.command.suite(), cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            return ExitCode::from(2);
        }
    };
    // a closed pipe (`| head`) is not an error
    let _ = std::io::stdout().lock().write_all(report.summary().as_bytes());
    for (path, format) in [(out, ReportFormat::Json), (csv, ReportFormat::Csv)] {
        if let Some(p) = path {
            if let Err(e) = report.emit(format, &p) {
                eprintln!("error: writing {}: {e}", p.display());
                return ExitCode::from(2);
            }
        }
    }
    let failed = report.failures().count();
    if failed == 0 {
        let _ = writeln!(std::io::stdout(), "all {} checks passed", report.metrics.iter().filter(|m| m.pass.is_some()).count());
        ExitCode::SUCCESS
    } else {
        let _ = writeln!(std::io::stdout(), "{failed} checks failed");
        ExitCode::from(1)
    }
}
