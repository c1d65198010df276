use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neural_casimir::bench::config::ExperimentConfig;
use neural_casimir::bench::experiment::{
    lyapunov_surface, run_paper_experiment, simulate_controller, sweep_margins, table_bytes, write_file, Controller,
    ExperimentError, ModelBundle, TableFormat,
};
use neural_casimir::sim::verify_bound;
use neural_casimir::train::TrainReport;

/// Neural energy-Casimir controller synthesis.
#[derive(Parser, Debug)]
#[command(name = "necc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Override the network seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory of the configuration.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Table format for histories, surfaces and sweeps.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a controller; writes report.json, the loss history and model.json.
    Train { config: PathBuf },
    /// Simulate the damped closed loop of a trained model.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Check ‖z̄ − z*‖ against ε/(a − ε) for a trained model.
    VerifyBound { report: PathBuf, model: PathBuf },
    /// Retrain for several margins and check the bound for each.
    SweepA {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Option<Vec<f64>>,
    },
    /// Export V over the first two plant coordinates at ξ = ξ*.
    ExportSurface {
        model: PathBuf,
        /// Grid size as WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<(usize, usize)>,
    },
    /// Parse and check a configuration.
    Validate { config: PathBuf },
    /// Full pipeline: train, bound, simulation, surface and sweep.
    Run { config: PathBuf },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    Ok((w, h))
}

/// Either an error or a finished run whose checks failed.
enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, g: &Global) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.networks.seed = s;
    }
    if let Some(d) = &g.out_dir {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn out_dir(g: &Global, fallback: &Path) -> PathBuf {
    g.out_dir.clone().unwrap_or_else(|| fallback.to_path_buf())
}

fn load_model(path: &Path) -> Result<(ModelBundle, Controller), ExperimentError> {
    let bundle = ModelBundle::load(path)?;
    let c = Controller::from_bundle(&bundle)?;
    Ok((bundle, c))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

fn run(cli: &Cli) -> Result<Outcome, ExperimentError> {
    let g = &cli.global;
    let format = TableFormat::from(g.format);
    let ext = format.extension();
    match &cli.command {
        Command::Validate { config } => {
            let cfg = load_config(config, g)?;
            Controller::build(&cfg, cfg.margin)?;
            println!("{}: ok", config.display());
            Ok(Outcome::Pass)
        }
        Command::Train { config } => {
            let cfg = load_config(config, g)?;
            let mut c = Controller::build(&cfg, cfg.margin)?;
            let report = c.train()?;
            let dir = &cfg.output_dir;
            write_file(&dir.join("report.json"), json(&report).as_bytes())?;
            write_file(&dir.join(format!("history.{ext}")), &table_bytes(&report.history, format)?)?;
            write_file(&dir.join("model.json"), c.bundle(&cfg).to_json().as_bytes())?;
            println!(
                "epochs {}  loss {:e}  epsilon {:e}  bound {}",
                report.epochs_run,
                report.final_loss,
                report.epsilon,
                report.bound.map_or("undefined".to_string(), |b| format!("{b:e}"))
            );
            Ok(Outcome::Pass)
        }
        Command::VerifyBound { report, model } => {
            let text = std::fs::read_to_string(report)
                .map_err(|e| ExperimentError::Io { path: report.display().to_string(), message: e.to_string() })?;
            let report: TrainReport = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Model(format!("{}: {e}", report.display())))?;
            let (_, c) = load_model(model)?;
            if c.z_star() != report.z_star {
                return Err(ExperimentError::Model("report and model disagree on z*".into()));
            }
            let m = c.find_minimum()?;
            let b = verify_bound(&report, &m.z)?;
            println!("{}", json(&b));
            Ok(if b.pass { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Simulate { config, model } => {
            let cfg = load_config(config, g)?;
            let (_, c) = load_model(model)?;
            let dir = cfg.output_dir.join("trajectories");
            let z_bar = c.find_minimum()?.z;
            let outcomes = simulate_controller(&c, &cfg, &z_bar, |i, tr| {
                let path = dir.join(format!("trajectory_{i:02}.csv"));
                let mut buf = Vec::new();
                tr.write_csv(&mut buf)
                    .map_err(|e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() })?;
                write_file(&path, &buf)
            })?;
            let passed = outcomes.iter().filter(|o| o.pass()).count();
            for (i, o) in outcomes.iter().enumerate() {
                println!(
                    "trajectory {i:02}: tail distance {:.3e}  max V increase {:.3e}  {}",
                    o.stabilization.max_tail_distance,
                    o.decrease.max_increase,
                    if o.pass() { "pass" } else { "FAIL" }
                );
            }
            println!("{passed}/{} trajectories stabilized", outcomes.len());
            Ok(if passed == outcomes.len() { Outcome::Pass } else { Outcome::Fail })
        }
        Command::SweepA { config, values } => {
            let cfg = load_config(config, g)?;
            let values = values.clone().unwrap_or_else(|| cfg.sweep.clone());
            let rows = sweep_margins(&cfg, &values)?;
            write_file(&cfg.output_dir.join(format!("sweep.{ext}")), &table_bytes(&rows, format)?)?;
            for r in &rows {
                println!(
                    "a = {:<5} epsilon {:.3e}  error {}  bound {}  {}",
                    r.a,
                    r.epsilon,
                    r.error.map_or("-".into(), |e| format!("{e:.3e}")),
                    r.bound.map_or("-".into(), |b| format!("{b:.3e}")),
                    if r.pass { "pass" } else { "FAIL" }
                );
            }
            Ok(if rows.iter().all(|r| r.pass) { Outcome::Pass } else { Outcome::Fail })
        }
        Command::ExportSurface { model, grid } => {
            let (bundle, c) = load_model(model)?;
            let (w, h) = grid.unwrap_or((bundle.config.surface.width, bundle.config.surface.height));
            let surface = lyapunov_surface(&c, w, h)?;
            let dir = out_dir(g, &bundle.config.output_dir);
            let path = dir.join(format!("surface.{ext}"));
            write_file(&path, &table_bytes(&surface, format)?)?;
            println!("{} points written to {}", surface.len(), path.display());
            Ok(Outcome::Pass)
        }
        Command::Run { config } => {
            let cfg = load_config(config, g)?;
            let (summary, _) = run_paper_experiment(&cfg, &cfg.output_dir, format)?;
            println!("epsilon {:e}  final loss {:e}", summary.epsilon, summary.final_loss);
            if let Some(b) = &summary.bound {
                println!("‖z̄ − z*‖ = {:e}  bound {:e}", b.distance, b.bound);
            }
            for f in &summary.failures {
                println!("FAIL {f}");
            }
            Ok(if summary.pass() { Outcome::Pass } else { Outcome::Fail })
        }
    }
}
