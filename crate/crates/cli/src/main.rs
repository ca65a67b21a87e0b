use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isovf_core::scenario::{self, RunOptions, Scenario};
use isovf_core::Error;

#[derive(Parser)]
#[command(name = "isovf", version, about = "Batch verification of isomorphic invariant vector fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a builtin scenario by name.
    Run {
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the scenario's output_dir, then `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// List groups, field and map kinds, check kinds and builtin scenarios.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Print the identity a check verifies.
    Explain { check: String },
}

fn load(arg: &str) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    if path.exists() {
        return scenario::load_scenario(path);
    }
    match scenario::builtin(arg) {
        Some(s) => s,
        None => Err(Error::Parse(format!(
            "`{arg}` is neither a file nor a builtin scenario ({})",
            scenario::builtin_names().join(", ")
        ))),
    }
}

fn run(arg: &str, seed: Option<u64>, out: Option<PathBuf>, tol_scale: f64) -> ExitCode {
    if !(tol_scale > 0.0 && tol_scale.is_finite()) {
        eprintln!("error: --tol-scale must be positive");
        return ExitCode::from(2);
    }
    let s = match load(arg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let output = match scenario::run_scenario(&s, &RunOptions { seed, tol_scale }) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let dir = out
        .or_else(|| s.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("out").join(&s.name));
    if let Err(e) = scenario::write_outputs(&output, &dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    let r = &output.report;
    for c in &r.checks {
        let worst = c.residuals.values().copied().fold(0.0, f64::max);
        let status = if c.pass { "PASS" } else { "FAIL" };
        match &c.error {
            Some(e) => println!("{status} {:<24} {:<20} error: {e}", c.name, c.kind),
            None => println!("{status} {:<24} {:<20} max residual {worst:.3e}  ({:.2}s)", c.name, c.kind, c.wall_time),
        }
        for n in c.notes.iter().filter(|_| !c.pass) {
            println!("     {n}");
        }
    }
    let passed = r.checks.iter().filter(|c| c.pass).count();
    println!("{}: {passed}/{} checks passed, report in {}", r.scenario, r.checks.len(), dir.join("report.json").display());
    if r.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            tol_scale,
        } => run(&scenario, seed, out, tol_scale),
        Command::List { json } => {
            let c = scenario::list_builtins();
            if json {
                println!("{}", serde_json::to_string_pretty(&c).expect("catalog serializes"));
            } else {
                println!("groups: {}", c.groups.join(" "));
                println!("representations: {}", c.representations.join(" "));
                println!("field kinds: {}", c.field_kinds.join(" "));
                println!("map kinds: {}", c.map_kinds.join(" "));
                println!("check kinds: {}", c.check_kinds.join(" "));
                println!("scenarios: {}", c.scenarios.join(" "));
            }
            ExitCode::SUCCESS
        }
        Command::Explain { check } => match scenario::explain(&check) {
            Some(text) => {
                println!("{check}: {text}");
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown check `{check}`; see `isovf list`");
                ExitCode::from(2)
            }
        },
    }
}
