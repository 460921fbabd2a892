use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slip_core::bagsim::{BagState, MaterialKind};
use slip_core::harness::{
    format_table, grasp_height_histogram, run_experiment, strategy_comparison, write_histogram_csv,
    write_outputs, write_strategy_csv, ConfigError, ExperimentConfig, StaticIntervals,
};
use slip_core::percept::pgm::export_observation;
use slip_core::percept::{opening_metrics, render_observation};
use slip_core::policy::PolicyConfig;
use slip_core::slip::Strategy;

#[derive(Parser)]
#[command(
    name = "slipsim",
    version,
    about = "Bag manipulation simulator and experiment runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); its overrides apply to every subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (replaces the config's base_seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write results.csv, summary.json, table.txt.
    Run {
        #[command(flatten)]
        common: Common,
        /// Built-in experiment: table1 or ablation.
        #[arg(long, conflicts_with = "config")]
        experiment: Option<String>,
        /// Trials per (policy, material) cell.
        #[arg(long)]
        trials: Option<u32>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Layer-count distribution per grasp height; writes histogram.csv.
    Histogram {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = MaterialKind::BAGS.map(|m| m.name().to_string()))]
        materials: Vec<String>,
        /// Grasp heights in mm.
        #[arg(long, value_delimiter = ',', default_values_t = (1..=10).map(f64::from).collect::<Vec<_>>())]
        heights: Vec<f64>,
        /// Zero point of --heights: the table, each material's flat surface
        /// height, or the midpoint between its layers.
        #[arg(long, value_enum, default_value_t = Origin::Table)]
        origin: Origin,
        /// Grasps per height.
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
    },
    /// Height strategies under classifier error; writes strategies.csv.
    Strategies {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2])]
        errors: Vec<f64>,
        /// Runs per strategy and error level.
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        #[arg(long, default_value_t = 15)]
        iter_max: u32,
        #[arg(long, default_value_t = 0.8)]
        gamma: f64,
    },
    /// Print the effective policy constants as JSON.
    Presets {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render one observation of a fresh bag as PGM images.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "thin_plastic")]
        material: String,
        /// Start from a flattened bag.
        #[arg(long)]
        flat: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Origin {
    Table,
    Surface,
    Interval,
}

fn policy_config(path: Option<&Path>) -> Result<PolicyConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?.policy_config()?),
        None => Ok(PolicyConfig::default()),
    }
}

fn base_seed(common: &Common) -> Result<u64> {
    if let Some(s) = common.seed {
        return Ok(s);
    }
    match &common.config {
        Some(p) => Ok(ExperimentConfig::load(p)?.base_seed),
        None => Ok(0),
    }
}

fn parse_material(name: &str) -> Result<MaterialKind> {
    name.parse::<MaterialKind>()
        .map_err(|e| ConfigError::InvalidValue {
            path: "material".into(),
            msg: e.to_string(),
        })
        .map_err(Into::into)
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(default))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            experiment,
            trials,
            threads,
        } => {
            let mut cfg = match (&common.config, &experiment) {
                (Some(p), _) => ExperimentConfig::load(p)?,
                (None, Some(name)) => {
                    ExperimentConfig::builtin(name).ok_or_else(|| ConfigError::InvalidValue {
                        path: "experiment".into(),
                        msg: format!("no built-in experiment `{name}` (try table1 or ablation)"),
                    })?
                }
                (None, None) => bail!(ConfigError::Invalid("pass --config or --experiment".into())),
            };
            if let Some(s) = common.seed {
                cfg.base_seed = s;
            }
            if let Some(t) = trials {
                cfg.n_trials = t;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            cfg.validate()?;
            let dir = out_dir(&common, &cfg.experiment);
            let output = run_experiment(&cfg)?;
            write_outputs(&dir, &output).with_context(|| format!("writing {}", dir.display()))?;
            print!("{}", format_table(&output.summary));
            eprintln!("wrote {}", dir.display());
        }
        Command::Histogram {
            common,
            materials,
            heights,
            origin,
            trials,
        } => {
            let cfg = policy_config(common.config.as_deref())?;
            let seed = base_seed(&common)?;
            if heights.windows(2).any(|w| w[1] < w[0]) {
                bail!(ConfigError::InvalidValue {
                    path: "heights".into(),
                    msg: "must be sorted ascending".into(),
                });
            }
            let mut rows = Vec::new();
            for name in &materials {
                let m = parse_material(name)?;
                let params = cfg.materials.get(m);
                let base = match origin {
                    Origin::Table => 0.0,
                    Origin::Surface => params.surface_height(),
                    Origin::Interval => params.layer_midpoint(),
                };
                let hs: Vec<f64> = heights.iter().map(|h| h + base).collect();
                rows.extend(grasp_height_histogram(m, &hs, trials, &cfg, seed));
            }
            let dir = out_dir(&common, "histogram");
            fs::create_dir_all(&dir)?;
            let path = dir.join("histogram.csv");
            write_histogram_csv(fs::File::create(&path)?, &rows)?;
            println!(
                "{:<14} {:>6} {:>7} {:>7} {:>7} {:>7}",
                "material", "h_mm", "rel_mm", "p0", "p1", "p2"
            );
            for r in &rows {
                println!(
                    "{:<14} {:>6.2} {:>7.2} {:>7.3} {:>7.3} {:>7.3}",
                    r.material.name(),
                    r.h,
                    r.h_above_surface,
                    r.p_zero,
                    r.p_one,
                    r.p_two
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Strategies {
            common,
            errors,
            trials,
            iter_max,
            gamma,
        } => {
            let cfg = policy_config(common.config.as_deref())?;
            let seed = base_seed(&common)?;
            let strategies = [
                Strategy::FixedStep,
                Strategy::DecayingStep { gamma },
                Strategy::Bisection,
            ];
            let rows = strategy_comparison(
                &strategies,
                &errors,
                trials,
                iter_max,
                StaticIntervals::default(),
                &cfg,
                seed,
            );
            let dir = out_dir(&common, "strategies");
            fs::create_dir_all(&dir)?;
            let path = dir.join("strategies.csv");
            write_strategy_csv(fs::File::create(&path)?, &rows)?;
            println!(
                "{:<20} {:>6} {:>8} {:>10}",
                "strategy", "error", "success", "mean_iter"
            );
            for r in &rows {
                println!(
                    "{:<20} {:>6.2} {:>8.3} {:>10.2}",
                    r.strategy, r.error, r.success_rate, r.mean_iterations
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Presets { config } => {
            let cfg = policy_config(config.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::Render {
            common,
            material,
            flat,
        } => {
            let cfg = policy_config(common.config.as_deref())?;
            let kind = parse_material(&material)?;
            let seed = base_seed(&common)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = cfg.materials.get(kind);
            let s = if flat {
                BagState::new_flat(m, &cfg.sim, &mut rng)
            } else {
                BagState::new(m, &cfg.sim, &mut rng)
            };
            let o = render_observation(
                &s,
                &cfg.sim.workspace.raster(),
                cfg.noise.get(kind),
                &mut rng,
            );
            let dir = out_dir(&common, "render");
            export_observation(&o, &dir).with_context(|| format!("writing {}", dir.display()))?;
            match opening_metrics(&o, s.a_max) {
                Ok(mm) => println!(
                    "S {:.3}  A_CH {:.3}  E_CH {:.3}  angle {}",
                    mm.s,
                    mm.a_ch,
                    mm.e_ch,
                    mm.opening_angle
                        .map_or("-".into(), |a| format!("{:.1} deg", a.to_degrees()))
                ),
                Err(e) => println!("{e}"),
            }
            eprintln!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
