use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use oscibath::runner::{run, RunMode};
use oscibath::scenario::{self, Scenario};

/// Scenario-driven laboratory for oscillator networks coupled to
/// finite-energy harmonic-continuum thermostats.
#[derive(Parser)]
#[command(name = "oscibath", version, about)]
struct Args {
    /// Scenario TOML file, or a bundled preset as `preset:<name>`
    scenario: Option<String>,

    /// What to run: direct | gle | both | analyze-only
    #[arg(long, default_value = "direct")]
    mode: String,

    /// Output directory override (default: scenario [output].dir, else
    /// $OSCIBATH_OUT/<name> or ./out/<name>)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print more; repeat for the file list
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,

    /// List bundled presets and exit
    #[arg(long)]
    list_presets: bool,
}

fn load(arg: &str) -> oscibath::Result<Scenario> {
    if let Some(name) = arg.strip_prefix("preset:") {
        scenario::from_preset(name)
    } else {
        scenario::parse_scenario(Path::new(arg))
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_presets {
        for name in scenario::PRESET_NAMES {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(scenario_arg) = args.scenario.as_deref() else {
        eprintln!("error: a scenario file (or preset:<name>) is required");
        return ExitCode::from(2);
    };

    let mode: RunMode = match args.mode.parse() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let scenario = match load(scenario_arg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    if args.verbose > 0 {
        eprintln!(
            "scenario '{}': {} oscillators, {} thermostats, {} bath modes, dt = {}, horizon = {}",
            scenario.name,
            scenario.system.net().n(),
            scenario.system.n_thermostats(),
            scenario.system.grid().count(),
            scenario.integrator.dt,
            scenario.integrator.horizon,
        );
    }

    match run(&scenario, mode, args.out.as_deref()) {
        Ok(outcome) => {
            println!("{}", outcome.dir.display());
            if args.verbose > 1 {
                for f in &outcome.files {
                    println!("  {f}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2))
        }
    }
}
