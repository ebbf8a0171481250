use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bolusrl::advisor::{calibrate_grid_search, BaselineAdvisor};
use bolusrl::config::{require_file, EvalPolicy, ExperimentConfig};
use bolusrl::pipeline::{evaluate_policy, generate_exploration_dataset, run_experiment, write_report, GreedyQ};
use bolusrl::qlearn::{read_transitions_csv, train, write_transitions_csv, QModel};
use bolusrl::{Error, Result};

/// Pre-meal insulin bolus policies learned with Q-learning on a simulated
/// type 1 diabetes patient, compared against a calibrated bolus advisor.
#[derive(Parser, Debug)]
#[command(name = "bolusrl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid-search the advisor's CIR, CF and BG target; writes calibration.csv.
    Calibrate(Common),
    /// Simulate with uniformly random doses; writes exploration_trajectory.csv and transitions.csv.
    Explore(Common),
    /// Fit the Q-model on `train.dataset`; writes model.txt and training_curve.csv.
    Train(Common),
    /// Simulate one policy (`evaluate.policy`); writes <policy>/bins.csv and <policy>/profile.csv.
    Evaluate(Common),
    /// Calibrate, explore, train and evaluate both policies.
    RunExperiment(Common),
    /// Check a config file and report every offending key.
    ValidateConfig(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config (`section.key = value` lines).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Patient preset id; overrides `patient.id`.
    #[arg(long, value_name = "ID")]
    patient: Option<u32>,
    /// Simulated days of this subcommand's stage (calibration.eval_days,
    /// explore.days or evaluate.days; run-experiment sets explore.days).
    #[arg(long, value_name = "N")]
    days: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn overrides(&self, days_key: Option<&str>) -> Vec<(String, String)> {
        let mut o = Vec::new();
        if let Some(s) = self.seed {
            o.push(("seed".to_string(), s.to_string()));
        }
        if let Some(p) = &self.out {
            o.push(("output.dir".to_string(), p.display().to_string()));
        }
        if let Some(p) = self.patient {
            o.push(("patient.id".to_string(), p.to_string()));
        }
        if let (Some(d), Some(key)) = (self.days, days_key) {
            o.push((key.to_string(), d.to_string()));
        }
        o
    }

    fn load(&self, days_key: Option<&str>) -> Result<ExperimentConfig> {
        let overrides = self.overrides(days_key);
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &overrides),
            None => ExperimentConfig::from_text("", &overrides),
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, days_key) = match &cli.command {
        Command::Calibrate(c) => (c, Some("calibration.eval_days")),
        Command::Explore(c) => (c, Some("explore.days")),
        Command::Train(c) => (c, None),
        Command::Evaluate(c) => (c, Some("evaluate.days")),
        Command::RunExperiment(c) => (c, Some("explore.days")),
        Command::ValidateConfig(c) => (c, None),
    };
    let level = if common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let config = match common.load(days_key) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let result = match &cli.command {
        Command::Calibrate(_) => calibrate(&config),
        Command::Explore(_) => explore(&config),
        Command::Train(_) => train_model(&config),
        Command::Evaluate(_) => evaluate(&config),
        Command::RunExperiment(_) => experiment(&config),
        Command::ValidateConfig(_) => {
            println!("config OK: patient {}, seed {}, output {}", config.patient.id, config.seed, config.output_dir.display());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_config_error(&e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::File { path: parent.to_path_buf(), source: e })?;
    }
    let f = std::fs::File::create(path).map_err(|e| Error::File { path: path.to_path_buf(), source: e })?;
    Ok(std::io::BufWriter::new(f))
}

fn calibrate(config: &ExperimentConfig) -> Result<()> {
    let seeds = config.stage_seeds();
    let c = calibrate_grid_search(&config.patient, &config.scenario, &config.calibration, seeds.calibrate, &config.sim, &config.reward)
        .map_err(|e| e.in_stage("calibrate"))?;
    c.write_csv(create(&config.output_dir.join("calibration.csv"))?)?;
    let b = c.best.params;
    println!("CIR={} CF={} BG_target={} mean_reward={:.4}", b.cir, b.cf, b.bg_target, c.best.mean_reward);
    Ok(())
}

fn explore(config: &ExperimentConfig) -> Result<()> {
    let out = &config.output_dir;
    let (traj, ts) = generate_exploration_dataset(
        &config.patient,
        &config.scenario,
        config.explore_days,
        config.stage_seeds().explore,
        &config.sim,
        &config.reward,
    )
    .map_err(|e| e.in_stage("explore"))?;
    traj.write_csv(create(&out.join("exploration_trajectory.csv"))?)?;
    write_transitions_csv(&ts, create(&out.join("transitions.csv"))?)?;
    println!("{} transitions written to {}", ts.len(), out.join("transitions.csv").display());
    Ok(())
}

fn train_model(config: &ExperimentConfig) -> Result<()> {
    let path = require_file("train.dataset", config.dataset.as_deref())?;
    let file = std::fs::File::open(&path).map_err(|e| Error::File { path: path.clone(), source: e })?;
    let ts = read_transitions_csv(file).map_err(|e| e.in_stage("train"))?;
    let outcome = train(&ts, &config.train).map_err(|e| e.in_stage("train"))?;
    let out = &config.output_dir;
    outcome.model.save(&out.join("model.txt"))?;
    outcome.write_curve_csv(create(&out.join("training_curve.csv"))?)?;
    println!("model written to {}", out.join("model.txt").display());
    Ok(())
}

fn evaluate(config: &ExperimentConfig) -> Result<()> {
    let seeds = config.stage_seeds();
    let (report, dir) = match config.eval_policy {
        EvalPolicy::Baseline => {
            let params = match config.advisor {
                Some(p) => p,
                None => {
                    calibrate_grid_search(&config.patient, &config.scenario, &config.calibration, seeds.calibrate, &config.sim, &config.reward)
                        .map_err(|e| e.in_stage("calibrate"))?
                        .best
                        .params
                }
            };
            let (r, _) = evaluate_policy(
                &config.patient,
                &config.scenario,
                &mut BaselineAdvisor(params),
                config.eval_days,
                seeds.evaluate,
                &config.sim,
                &config.reward,
            )
            .map_err(|e| e.in_stage("evaluate"))?;
            (r, "baseline")
        }
        EvalPolicy::Learned => {
            let path = require_file("evaluate.model", config.eval_model.as_deref())?;
            let model = QModel::load(&path)?;
            let mut greedy = GreedyQ::new(model, config.train.action_grid_size)?;
            let (r, _) = evaluate_policy(&config.patient, &config.scenario, &mut greedy, config.eval_days, seeds.evaluate, &config.sim, &config.reward)
                .map_err(|e| e.in_stage("evaluate"))?;
            (r, "learned")
        }
    };
    write_report(&report, &config.output_dir.join(dir))?;
    println!(
        "{}: hypo_fraction={:.4} mean_reward={:.4}",
        report.policy, report.hypo_fraction, report.mean_reward
    );
    Ok(())
}

fn experiment(config: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(config)?;
    println!(
        "baseline hypo={:.4} reward={:.4} | learned hypo={:.4} reward={:.4}",
        outcome.baseline.hypo_fraction, outcome.baseline.mean_reward, outcome.learned.hypo_fraction, outcome.learned.mean_reward
    );
    println!("outputs in {}", config.output_dir.display());
    Ok(())
}
