use clap::{Args, Parser, Subcommand};
use splitcert::certify::{self, CertifyConfig};
use splitcert::cocycle::{Cocycle, SigmaTable, TauGrid};
use splitcert::ensembles::{generate, EnsembleKind, EnsembleParams};
use splitcert::splitting;
use splitcert::NormSpec;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "splitcert", version, about = "Fast/slow splittings of matrix cocycles and their certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated cocycle window as JSON.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the splitting over a k range and report per-index results.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Splitting JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Singular value curves CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fit the hypotheses, measure the splitting and compare with the bounds.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        /// Rate grid lo:hi:steps.
        #[arg(long)]
        tau_grid: Option<String>,
        /// Certificate JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export log singular value curves as CSV.
    Curves {
        #[command(flatten)]
        run: RunArgs,
        /// CSV output (stdout when absent).
        #[arg(long, alias = "out")]
        csv: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    /// diag, diag-rot, rank-deficient, uniform-invertible, perturbed-hyperbolic, conjugated-hyperbolic.
    #[arg(long, default_value = "diag")]
    kind: String,
    /// Ambient dimension.
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Number of operators.
    #[arg(long, default_value_t = 100)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated non-increasing log-rates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rates: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.3)]
    angle: f64,
    #[arg(long, default_value_t = 1e-3)]
    noise: f64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    offset: i64,
    /// hilbert or lp:<p> (p may be inf).
    #[arg(long, default_value = "hilbert")]
    norm: String,
    /// Index of the ground-truth fast space.
    #[arg(long, default_value_t = 1)]
    d: usize,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Cocycle JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Index of the splitting.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Half-open range a:b of base indices.
    #[arg(long, allow_hyphen_values = true)]
    k_range: Option<String>,
    /// Longest product used per index.
    #[arg(long, default_value_t = 20)]
    n_cap: usize,
    /// Overrides the norm stored in the input file.
    #[arg(long)]
    norm: Option<String>,
}

/// Malformed input or invalid flags; reported with exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    // flag errors share exit code 1 with malformed input; 2 is reserved for partial failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Generate { gen, out } => {
            let g = generate(&params(&gen)?)?;
            emit(out.as_ref(), &g.cocycle.to_json())?;
            if out.is_some() {
                println!("generated {} operators of size {}", g.cocycle.len(), g.cocycle.dim());
            }
            Ok(0)
        }
        Command::Analyze { run, out, csv } => {
            let c = load(&run)?;
            let (k_start, k_end) = k_range(&run, &c)?;
            let s = splitting::build_splitting(&c, run.d, k_start, k_end, run.n_cap, None)?;
            if let Some(path) = &out {
                write(path, &s.to_json())?;
            }
            if let Some(path) = &csv {
                write(path, &SigmaTable::build(&c, run.d)?.to_csv())?;
            }
            println!(
                "indices {}..{}: {} built, {} failed, max equivariance defect {:e}",
                k_start,
                k_end,
                s.entries.len() - s.failures(),
                s.failures(),
                s.max_defect()
            );
            for e in s.entries.iter().filter(|e| e.error.is_some()) {
                println!("k = {}: {}", e.k, e.error.as_deref().unwrap_or_default());
            }
            Ok(if s.failures() > 0 { 2 } else { 0 })
        }
        Command::Certify { run, tau_grid, out } => {
            let c = load(&run)?;
            let (k_start, k_end) = k_range(&run, &c)?;
            let tau_grid = tau_grid.as_deref().map(TauGrid::parse).transpose()?.unwrap_or_default();
            let cfg = CertifyConfig { d: run.d, k_start, k_end, n_cap: run.n_cap, tau_grid };
            let cert = certify::certificate(&c, &cfg)?;
            if let Some(path) = &out {
                write(path, &cert.to_json())?;
            }
            print!("{}", cert.summary());
            Ok(if cert.has_proved_failure() { 2 } else { 0 })
        }
        Command::Curves { run, csv } => {
            let c = load(&run)?;
            emit(csv.as_ref(), &SigmaTable::build(&c, run.d)?.to_csv())?;
            Ok(0)
        }
    }
}

fn params(g: &GenArgs) -> Result<EnsembleParams, Failure> {
    let mut p = EnsembleParams::new(EnsembleKind::parse(&g.kind)?, g.n, g.length, g.seed);
    p.log_rates = g.rates.clone();
    p.angle = g.angle;
    p.noise = g.noise;
    p.offset = g.offset;
    p.d = g.d;
    p.norm = NormSpec::parse(&g.norm, g.n)?;
    Ok(p)
}

fn load(run: &RunArgs) -> Result<Cocycle, Failure> {
    let text = std::fs::read_to_string(&run.input).map_err(|e| Failure(format!("{}: {e}", run.input.display())))?;
    let c = Cocycle::from_json(&text).map_err(|e| Failure(format!("{}: {e}", run.input.display())))?;
    match &run.norm {
        None => Ok(c),
        Some(flag) => Ok(Cocycle::new(c.offset(), c.ops().to_vec(), NormSpec::parse(flag, c.dim())?)?),
    }
}

/// Explicit `a:b`, or the interior that leaves `n_cap` indices on both sides.
fn k_range(run: &RunArgs, c: &Cocycle) -> Result<(i64, i64), Failure> {
    match &run.k_range {
        Some(s) => {
            let (a, b) = s.split_once(':').ok_or_else(|| Failure(format!("k range {s:?} is not a:b")))?;
            let parse = |x: &str| x.trim().parse::<i64>().map_err(|_| Failure(format!("k range {s:?} is not a:b")));
            Ok((parse(a)?, parse(b)?))
        }
        None => {
            let cfg = CertifyConfig::interior(c, run.d, run.n_cap)?;
            Ok((cfg.k_start, cfg.k_end))
        }
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write(p, text),
        None => {
            use std::io::Write;
            // a closed pipe (for example `| head`) is not an error
            match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}
