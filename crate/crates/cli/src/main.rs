use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qfi3d::sweep::{write_sweep, OutputFormat};
use qfi3d::verify::{run_suite, Suite, SuiteReport};
use qfi3d::{run_point, CenteringConvention, Error, PupilModel, QfiEvaluator, QuadratureSpec, SeparationVector, SweepConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "qfi3d", version, about = "QFI and Cramer-Rao bounds for the 3D separation of two incoherent sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one separation.
    Point(PointArgs),
    /// Evaluate a grid of separations and write CSV or JSON lines.
    Sweep(SweepArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    lx: f64,
    #[arg(long, allow_negative_numbers = true)]
    ly: f64,
    #[arg(long, allow_negative_numbers = true)]
    lz: f64,
    /// Squared brightness asymmetry in [0, 1).
    #[arg(long)]
    dp2: f64,
    #[arg(long, default_value = "centroid")]
    convention: CenteringConvention,
    /// Sampled pupil grid file; the clear circular aperture when absent.
    #[arg(long)]
    pupil: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated dp2 values.
    #[arg(long)]
    dp2: Option<String>,
    /// Comma-separated l_z values.
    #[arg(long, allow_hyphen_values = true)]
    lz: Option<String>,
    /// Transverse grid `min:step:max`, shared by l_x and l_y.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    convention: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `jsonl`.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    pupil: Option<PathBuf>,
    /// Keep complete records already in the output file and continue after them.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// constants, collapse, oracle, gradients, symmetry or all.
    #[arg(long)]
    suite: String,
    /// Write a JSON summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::InvalidInput(_) | Error::Config(_) | Error::PupilFormat(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn point(args: PointArgs) -> Result<(), Error> {
    let pupil = match &args.pupil {
        Some(path) => PupilModel::load(path)?,
        None => PupilModel::CircularClear,
    };
    let ev = QfiEvaluator::new(pupil, QuadratureSpec::default())?;
    let l = SeparationVector::new(args.lx, args.ly, args.lz);
    let r = run_point(&ev, &l, args.dp2, args.convention)?;
    if args.json {
        println!("{}", r.to_json_line());
        return Ok(());
    }
    let [xx, xy, xz, yy, yz, zz] = r.h;
    println!("convention {}", args.convention);
    println!("delta      {:.12}", r.delta);
    println!("phi        {:.12}", r.phi);
    println!("H          [{xx:>18.10e} {xy:>18.10e} {xz:>18.10e}]");
    println!("           [{xy:>18.10e} {yy:>18.10e} {yz:>18.10e}]");
    println!("           [{xz:>18.10e} {yz:>18.10e} {zz:>18.10e}]");
    println!("qcrb       {:.10e} {:.10e} {:.10e}", r.qcrb[0], r.qcrb[1], r.qcrb[2]);
    println!("status     {}", r.status);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(path) => SweepConfig::load(path)?,
        None => SweepConfig::default(),
    };
    let overrides = [
        ("dp2", args.dp2.as_deref()),
        ("lz", args.lz.as_deref()),
        ("grid", args.grid.as_deref()),
        ("convention", args.convention.as_deref()),
        ("format", args.format.as_deref()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    if let Some(pupil) = args.pupil {
        cfg.pupil = Some(pupil);
    }
    cfg.validate()?;
    let out = cfg.output.clone().ok_or_else(|| Error::Config("no output path (use --out or `out =`)".into()))?;
    let summary = write_sweep(&cfg, &out, args.resume)?;
    let kind = match cfg.format {
        OutputFormat::Csv => "csv",
        OutputFormat::JsonLines => "jsonl",
    };
    eprintln!(
        "wrote {} records ({kind}) to {} [resumed at {}; ok {}, singular {}, small-separation-limit {}]",
        summary.total,
        out.display(),
        summary.resumed_from,
        summary.ok,
        summary.singular,
        summary.small_separation
    );
    Ok(())
}

fn summary_json(reports: &[SuiteReport]) -> serde_json::Value {
    let suites: Vec<_> = reports
        .iter()
        .map(|r| {
            let checks: Vec<_> = r
                .checks
                .iter()
                .map(|c| {
                    serde_json::json!({
                        "name": c.name,
                        "deviation": c.deviation,
                        "tolerance": c.tolerance,
                        "passed": c.passed(),
                    })
                })
                .collect();
            serde_json::json!({
                "suite": r.suite.as_str(),
                "passed": r.passed(),
                "failed": r.failures(),
                "checks": checks,
            })
        })
        .collect();
    serde_json::json!({
        "passed": reports.iter().all(SuiteReport::passed),
        "suites": suites,
    })
}

fn verify(args: VerifyArgs) -> Result<bool, Error> {
    let suites = if args.suite == "all" { Suite::ALL.to_vec() } else { vec![args.suite.parse()?] };
    let mut reports = Vec::with_capacity(suites.len());
    for suite in suites {
        let report = run_suite(suite)?;
        println!("{report}");
        reports.push(report);
    }
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&summary_json(&reports)).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
    }
    Ok(reports.iter().all(SuiteReport::passed))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Point(args) => point(args),
        Command::Sweep(args) => sweep(args),
        Command::Verify(args) => match verify(args) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_NUMERICAL),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
