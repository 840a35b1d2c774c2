//! `vibronic-sync`: command-line front end for the vibronic engine.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 regression-table failure under `table2 --strict`.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vibronic::error::Error;
use vibronic::scenario::{
    self, calibrate_sync, preset, run, sweep, table2, write_sweep_csv, OutputSpec, PairSpec,
    ScenarioConfig, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "vibronic-sync",
    about = "Lindblad dynamics and mode-displacement synchronisation analysis \
             for an exciton-vibration dimer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand that builds a scenario.
#[derive(Args, Clone)]
struct ScenarioArgs {
    /// TOML scenario file (overridden field-by-field by the flags below)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in scenario: pe545, delocalised, detuned, swapped-rates
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory (created if missing)
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Override the run horizon in ps
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Override the Pearson sync window in ps
    #[arg(long, global = true)]
    window: Option<f64>,
    /// Override the per-mode Fock truncation
    #[arg(long, global = true)]
    m_levels: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write every requested artefact
    Simulate(ScenarioArgs),
    /// Propagate and write only the synchronisation series
    Sync(ScenarioArgs),
    /// Propagate and write FT snapshot spectra
    Spectrum {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Snapshot start times in ps (repeatable)
        #[arg(long = "at", required = true)]
        at: Vec<f64>,
    },
    /// Propagate and write the trajectory with eigenbasis coherence columns
    Coherences(ScenarioArgs),
    /// Liouvillian eigenmode analysis at reduced truncation
    Eigenmodes {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Fock truncation for the superoperator
        #[arg(long)]
        m_eig: Option<usize>,
    },
    /// Seven-pair coherence regression table
    Table2 {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Exit with code 3 if any reference cell fails
        #[arg(long)]
        strict: bool,
    },
    /// Run one scenario per axis value and summarise each point
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Dimer parameter to vary (e.g. omega, v, g, gamma_deph)
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Phase-calibration curve C(phi) for the Pearson sync measure
    CalibrateSync {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of phase intervals over [0, pi]
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// List the built-in presets
    Presets,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::UnknownPreset(_)
        | Error::IndexOutOfRange { .. }
        | Error::Io(_) => 1,
        Error::BasisMismatch { .. }
        | Error::DimensionOverflow { .. }
        | Error::Solver(_)
        | Error::StepSizeUnderflow { .. }
        | Error::InvariantViolation(_)
        | Error::MemoryBudget { .. }
        | Error::WindowTooShort { .. } => 2,
    }
}

fn load_config(args: &ScenarioArgs) -> Result<ScenarioConfig, Error> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            ScenarioConfig::from_toml(&text)?
        }
        (None, Some(name)) => preset(name)?,
        (Some(path), Some(name)) => {
            // preset supplies the base, the file overrides it wholesale
            let _ = preset(name)?;
            return Err(Error::Config(format!(
                "pass either --config {} or --preset {name}, not both",
                path.display()
            )));
        }
        (None, None) => preset("pe545")?,
    };
    if let Some(t) = args.t_end {
        config.propagation.t_end = t;
        let n = config.outputs.spectra_at.len();
        config.outputs.spectra_at.retain(|&s| s < t);
        if config.outputs.spectra_at.len() < n {
            eprintln!("warning: dropped spectrum snapshots at or beyond --t-end {t}");
        }
    }
    if let Some(w) = args.window {
        config.sync_window = Some(w);
    }
    if let Some(m) = args.m_levels {
        config.params.m_levels = m;
    }
    config.validate()?;
    Ok(config)
}

fn init_threads(args: &ScenarioArgs) -> Result<(), Error> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn report_manifest(manifest: &scenario::Manifest) {
    for f in &manifest.files {
        println!("wrote {:>10} bytes  {}", f.bytes, f.name);
    }
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(t) = manifest.timings_s.get("total") {
        println!("done in {t:.2} s");
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Simulate(args) => {
            init_threads(&args)?;
            let config = load_config(&args)?;
            report_manifest(&run(&config, &args.out)?);
        }
        Command::Sync(args) => {
            init_threads(&args)?;
            let mut config = load_config(&args)?;
            config.outputs = OutputSpec {
                trajectory: false,
                sync: true,
                spectra_at: Vec::new(),
                coherences: false,
                eigenmodes: false,
                table2: false,
            };
            report_manifest(&run(&config, &args.out)?);
        }
        Command::Spectrum { scenario: args, at } => {
            init_threads(&args)?;
            let mut config = load_config(&args)?;
            config.outputs = OutputSpec {
                trajectory: false,
                sync: false,
                spectra_at: at,
                coherences: false,
                eigenmodes: false,
                table2: false,
            };
            config.validate()?;
            report_manifest(&run(&config, &args.out)?);
        }
        Command::Coherences(args) => {
            init_threads(&args)?;
            let mut config = load_config(&args)?;
            config.outputs = OutputSpec {
                trajectory: true,
                sync: false,
                spectra_at: Vec::new(),
                coherences: true,
                eigenmodes: false,
                table2: false,
            };
            let manifest = run(&config, &args.out)?;
            println!(
                "tracked pairs: {}",
                manifest
                    .pairs
                    .iter()
                    .map(|(j, k)| format!("({j},{k})"))
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            report_manifest(&manifest);
        }
        Command::Eigenmodes { scenario: args, m_eig } => {
            init_threads(&args)?;
            let mut config = load_config(&args)?;
            if let Some(m) = m_eig {
                config.m_eig = m;
            }
            config.outputs = OutputSpec {
                trajectory: false,
                sync: false,
                spectra_at: Vec::new(),
                coherences: false,
                eigenmodes: true,
                table2: false,
            };
            report_manifest(&run(&config, &args.out)?);
        }
        Command::Table2 { scenario: args, strict } => {
            let config = load_config(&args)?;
            let (text, all_pass) = table2(&config)?;
            print!("{text}");
            if strict && !all_pass {
                return Ok(3);
            }
        }
        Command::Sweep { scenario: args, axis, values } => {
            init_threads(&args)?;
            let mut config = load_config(&args)?;
            // summaries only: skip the per-point artefact files
            config.pairs = PairSpec::Explicit(Vec::new());
            let points = sweep(&config, &axis, &values)?;
            std::fs::create_dir_all(&args.out)?;
            let path = args.out.join("sweep.csv");
            let mut buf = Vec::new();
            write_sweep_csv(&points, &mut buf)?;
            std::fs::write(&path, &buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
            println!("wrote {}", path.display());
        }
        Command::CalibrateSync { scenario: args, points } => {
            let config = load_config(&args)?;
            let curve = calibrate_sync(&config, points)?;
            std::fs::create_dir_all(&args.out)?;
            let path = args.out.join("calibration.csv");
            let mut buf = String::from("phase_rad,sync\n");
            for (phi, c) in &curve {
                buf.push_str(&format!("{phi:.6},{c:.9}\n"));
            }
            std::fs::write(&path, &buf)?;
            println!("wrote {}", path.display());
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                let p = preset(name)?.params;
                println!(
                    "{name:<14} delta_e={:<7} v={:<8} omega={:<6} g={:<6} \
                     gamma_th={:<3} gamma_deph={}",
                    p.delta_e, p.v, p.omega1, p.g1, p.gamma_th, p.gamma_deph
                );
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
