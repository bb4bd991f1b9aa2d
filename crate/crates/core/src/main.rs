use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use frontalize::estimation::{
    fit_depth_model_kind, read_calibration_csv, synthetic_calibration, write_calibration_csv, DepthModelKind,
};
use frontalize::sim::{descent_fraction, run, sweep, velocity_field, write_field_csv, write_sweep_csv, ScenarioConfig};
use frontalize::{Error, Result};

#[derive(Parser)]
#[command(name = "frontalize", version, about = "Face frontalization UAV simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop flight and write its logs.
    Run(Common),
    /// Mean frontalization score over a static bearing x range grid.
    Sweep(Common),
    /// Commanded velocity at each pose of a static grid.
    Field(Common),
    /// Fit a depth model from calibration samples.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// `height_px,distance_m` CSV; synthesized from the scenario when omitted.
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Overrides the configured model kind.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply to anything not given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Inverse,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_file(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn prepare_out(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out)?;
        Ok(&self.out)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let log = run(&cfg)?;
            let out = common.prepare_out()?;
            match common.format {
                Format::Csv => log.write_csv_dir(out)?,
                Format::Json => log.write_json_file(&out.join("run.json"))?,
            }
            let last = log.samples.last();
            println!(
                "run: {} steps, {} events, final mode {}, final range {}",
                log.samples.len(),
                log.events.len(),
                last.map_or("n/a", |s| s.mode.as_str()),
                last.and_then(|s| s.range).map_or("n/a".into(), |r| format!("{r:.3} m")),
            );
        }
        Command::Sweep(common) => {
            let cfg = common.load()?;
            let cells = sweep(&cfg, &cfg.sweep)?;
            let out = common.prepare_out()?;
            match common.format {
                Format::Csv => write_sweep_csv(File::create(out.join("sweep.csv"))?, &cells)?,
                Format::Json => write_json(&out.join("sweep.json"), &cells)?,
            }
            println!("sweep: {} cells", cells.len());
        }
        Command::Field(common) => {
            let cfg = common.load()?;
            let cells = velocity_field(&cfg, &cfg.field)?;
            let out = common.prepare_out()?;
            match common.format {
                Format::Csv => write_field_csv(File::create(out.join("field.csv"))?, &cells)?,
                Format::Json => write_json(&out.join("field.json"), &cells)?,
            }
            println!(
                "field: {} cells, descent fraction {}",
                cells.len(),
                descent_fraction(&cells).map_or("n/a".into(), |f| format!("{f:.3}"))
            );
        }
        Command::Calibrate { common, samples, kind } => {
            let cfg = common.load()?;
            let kind = match kind {
                Some(KindArg::Linear) => DepthModelKind::Linear,
                Some(KindArg::Inverse) => DepthModelKind::Inverse,
                None => cfg.depth.kind,
            };
            let data = match samples.as_ref().or(cfg.depth.calibration_file.as_ref()) {
                Some(path) => read_calibration_csv(File::open(path).map_err(|e| {
                    Error::Config(vec![format!("samples: {}: {e}", path.display())])
                })?)?,
                None => synthetic_calibration(&cfg.camera, &cfg.person.head()?, &cfg.depth.synthetic),
            };
            let model = fit_depth_model_kind(&data, kind)?;
            let out = common.prepare_out()?;
            match common.format {
                Format::Csv => {
                    model.write_csv(File::create(out.join("depth_model.csv"))?)?;
                    write_calibration_csv(File::create(out.join("calibration.csv"))?, &data)?;
                }
                Format::Json => write_json(&out.join("depth_model.json"), &model)?,
            }
            println!(
                "calibrate: {} model, slope {}, intercept {}, R2 {:.6}",
                model.kind.as_str(),
                model.slope,
                model.intercept,
                model.r_squared
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
