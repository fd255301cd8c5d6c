use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use painleve::catalogue::{by_name, names};
use painleve::report::{run, ReportDocument, RunError, RunOptions, Suite, Verdict};
use painleve::specfile::{spec_from_json, spec_to_json};
use painleve::stackel::PainleveSpec;

#[derive(Parser)]
#[command(name = "painleve", version, about = "Verify separability properties of Painlevé metrics built from Stäckel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Spec file (JSON)
    spec: Option<PathBuf>,
    /// Use a built-in catalogue entry instead of a spec file
    #[arg(long, value_name = "NAME", conflicts_with = "spec")]
    example: Option<String>,
    /// Write the JSON report to this path ("-" for stdout)
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplies every default tolerance
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Stäckel-definition and metric-assembly checks
    Validate(Common),
    /// Robertson conditions
    Robertson(Common),
    /// Off-block Ricci components, generic against closed form
    Ricci(Common),
    /// Killing tensors, Poisson brackets, Killing–Eisenhart and Levi-Civita residuals
    Killing(Common),
    /// Symmetry-operator commutators
    Commute(Common),
    /// Block separation of the Helmholtz and Hamilton–Jacobi equations
    Separate(Common),
    /// R factor, conformal transformation law and conformal-factor residuals
    Conformal {
        #[command(flatten)]
        common: Common,
        /// Also solve the Yamabe-type grid problem
        #[arg(long)]
        yamabe: bool,
        /// CSV export of the grid solution (implies --yamabe)
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Geodesic flow and drift of the first integrals
    Geodesic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// CSV export of the trajectory
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Run every suite and emit one report
    Report(Common),
    /// List catalogue entries, or print one as a spec file
    Catalogue { name: Option<String> },
}

fn load(common: &Common) -> Result<PainleveSpec, RunError> {
    match (&common.example, &common.spec) {
        (Some(name), _) => by_name(name).map(|e| e.spec).map_err(|e| RunError::Input(e.to_string())),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?;
            spec_from_json(&text).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))
        }
        (None, None) => Err(RunError::Input("give a spec path or --example NAME".into())),
    }
}

fn print_human(doc: &ReportDocument) {
    println!("{} (seed {}, {} samples, tolerance scale {})", doc.spec_name, doc.seed, doc.samples, doc.tol_scale);
    for c in &doc.checks {
        let v = match c.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        };
        println!("  {v}  {:<28} {:>12.3e} / {:<9.1e} {}", c.name, c.max_residual, c.tolerance, c.notes);
    }
}

fn execute(cli: Cli) -> Result<ExitCode, RunError> {
    let (common, suites, mut opts) = match cli.command {
        Command::Catalogue { name } => {
            match name {
                Some(n) => println!("{}", spec_to_json(&by_name(&n).map_err(|e| RunError::Input(e.to_string()))?.spec)),
                None => names().iter().for_each(|n| println!("{n}")),
            }
            return Ok(ExitCode::SUCCESS);
        }
        Command::Validate(c) => (c, vec![Suite::Validate], RunOptions::default()),
        Command::Robertson(c) => (c, vec![Suite::Robertson], RunOptions::default()),
        Command::Ricci(c) => (c, vec![Suite::Ricci], RunOptions::default()),
        Command::Killing(c) => (c, vec![Suite::Killing], RunOptions::default()),
        Command::Commute(c) => (c, vec![Suite::Commute], RunOptions::default()),
        Command::Separate(c) => (c, vec![Suite::Separate], RunOptions::default()),
        Command::Report(c) => (c, Suite::ALL.to_vec(), RunOptions::default()),
        Command::Conformal { common, yamabe, csv } => (
            common,
            vec![Suite::Conformal],
            RunOptions {
                yamabe: yamabe || csv.is_some(),
                csv,
                ..RunOptions::default()
            },
        ),
        Command::Geodesic { common, t_end, dt, csv } => (
            common,
            vec![Suite::Geodesic],
            RunOptions {
                t_end,
                dt,
                csv,
                ..RunOptions::default()
            },
        ),
    };
    if !common.tol_scale.is_finite() || common.tol_scale <= 0.0 {
        return Err(RunError::Input(format!("--tol-scale must be positive, got {}", common.tol_scale)));
    }
    if common.samples == 0 {
        return Err(RunError::Input("--samples must be at least 1".into()));
    }
    opts.samples = common.samples;
    opts.seed = common.seed;
    opts.tol_scale = common.tol_scale;
    let spec = load(&common)?;
    let doc = run(&spec, &suites, &opts)?;
    if suites == [Suite::Conformal] {
        if let Some(path) = &opts.csv {
            let sol = painleve::report::yamabe_solution(&spec)?;
            sol.write_csv(std::fs::File::create(path).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))?)
                .map_err(|e| RunError::Input(e.to_string()))?;
        }
    }
    match common.json.as_deref() {
        Some(p) if p.as_os_str() == "-" => println!("{}", doc.to_json()),
        Some(p) => {
            std::fs::write(p, doc.to_json() + "\n").map_err(|e| RunError::Input(format!("{}: {e}", p.display())))?;
            print_human(&doc);
        }
        None => print_human(&doc),
    }
    Ok(if doc.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                RunError::Input(_) => 2,
                RunError::Numerical(_) => 3,
            })
        }
    }
}
