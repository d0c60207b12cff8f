use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use sedsim::harness::{exit_code, run_experiment, validate_config, validate_value, ConfigError, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "sedsim", version, about = "Seeded desk-scale radiation and molecule experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Thermal and zero-point mean energy per mode over a frequency grid.
    Planck(Common),
    /// Mode normalization and zero-point amplitude sampling.
    Mode(Common),
    /// Photocell linearization and detector response.
    Detector(Common),
    /// Coincidence fringe scan and visibility.
    Interference(Common),
    /// Eckart frames for distorted molecules.
    Eckart(Common),
    /// Coherent Raman redshift along a sightline.
    Ilcrs(IlcrsArgs),
    /// Stable curvature root and quantized torus radii.
    Soliton(Common),
    /// Runs whatever experiment the config names.
    Run(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every trial derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per Monte-Carlo estimate (or molecules for eckart).
    #[arg(long, allow_negative_numbers = true)]
    trials: Option<i64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the canonical config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug, Clone)]
struct IlcrsArgs {
    #[command(flatten)]
    common: Common,
    /// Relative shift per unit column density, m².
    #[arg(long)]
    kappa: Option<f64>,
    /// Density of the calibration medium, molecules/m³.
    #[arg(long)]
    calibrate_density: Option<f64>,
    /// Shift rate the calibration density must produce, per metre.
    #[arg(long)]
    calibrate_rate: Option<f64>,
    /// Fractional change of the shift per decade of frequency.
    #[arg(long)]
    dispersion: Option<f64>,
    /// Fixed redshift instead of the integrated one.
    #[arg(long)]
    z: Option<f64>,
}

fn load(path: &Option<PathBuf>, experiment: Option<&str>) -> Result<Value, HarnessError> {
    let mut value = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            // Structural errors are reported here with their position.
            validate_config(&text).map(|_| ()).or_else(|e| match e {
                ConfigError::Parse { .. } => Err(e),
                _ => Ok(()),
            })?;
            serde_json::from_str(&text).expect("parsed above")
        }
        None => Value::Object(Map::new()),
    };
    if let Some(name) = experiment {
        let map = value.as_object_mut().ok_or_else(|| {
            HarnessError::Config(ConfigError::Invalid(vec![sedsim::harness::ConfigIssue {
                field: "(root)".into(),
                message: "must be a JSON object".into(),
            }]))
        })?;
        match map.get("experiment") {
            Some(Value::String(named)) if named != name => {
                return Err(HarnessError::Config(ConfigError::UnknownExperiment(format!(
                    "{named} (config) does not match subcommand {name}"
                ))))
            }
            _ => {
                map.insert("experiment".into(), Value::from(name));
            }
        }
    }
    Ok(value)
}

fn set(value: &mut Value, key: &str, v: Option<Value>) {
    if let (Some(v), Some(map)) = (v, value.as_object_mut()) {
        map.insert(key.into(), v);
    }
}

fn set_param(value: &mut Value, key: &str, v: Option<f64>) {
    let Some(v) = v else { return };
    if let Some(map) = value.as_object_mut() {
        let params = map.entry("params").or_insert_with(|| Value::Object(Map::new()));
        if let Some(params) = params.as_object_mut() {
            params.insert(key.into(), Value::from(v));
        }
    }
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    let (name, common, ilcrs) = match cli.command {
        Command::Planck(c) => (Some("planck"), c, None),
        Command::Mode(c) => (Some("mode"), c, None),
        Command::Detector(c) => (Some("detector"), c, None),
        Command::Interference(c) => (Some("interference"), c, None),
        Command::Eckart(c) => (Some("eckart"), c, None),
        Command::Ilcrs(a) => (Some("ilcrs"), a.common.clone(), Some(a)),
        Command::Soliton(c) => (Some("soliton"), c, None),
        Command::Run(c) => (None, c, None),
    };
    let mut value = load(&common.config, name)?;
    set(&mut value, "master_seed", common.seed.map(Value::from));
    set(&mut value, "trials", common.trials.map(Value::from));
    set(&mut value, "threads", common.threads.map(Value::from));
    set(
        &mut value,
        "output",
        common.out.as_ref().map(|p| Value::from(p.to_string_lossy().into_owned())),
    );
    if let Some(a) = ilcrs {
        set_param(&mut value, "kappa", a.kappa);
        set_param(&mut value, "calibrate_density", a.calibrate_density);
        set_param(&mut value, "calibrate_rate", a.calibrate_rate);
        set_param(&mut value, "dispersion", a.dispersion);
        set_param(&mut value, "z", a.z);
    }
    let config = validate_value(value)?;
    if common.print_config {
        print!("{}", config.to_canonical_json());
        return Ok(());
    }
    let manifest = run_experiment(&config)?;
    println!(
        "{}: wrote {} files to {}",
        config.experiment,
        manifest.outputs.len() + 1,
        config.output.display()
    );
    for (key, value) in &manifest.metrics {
        println!("  {key} = {value}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit_code::USAGE as u8 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
