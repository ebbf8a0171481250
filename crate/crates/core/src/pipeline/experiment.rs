use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{evaluate_policy, generate_exploration_dataset, EvalReport, GreedyQ};
use crate::advisor::{calibrate_grid_search, BaselineAdvisor, Calibration};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::qlearn::{train, write_transitions_csv, TrainOutcome};

/// Files written by [`run_experiment`], relative to the output directory.
pub const OUTPUT_FILES: [&str; 11] = [
    "calibration.csv",
    "exploration_trajectory.csv",
    "transitions.csv",
    "model.txt",
    "training_curve.csv",
    "baseline/bins.csv",
    "baseline/profile.csv",
    "learned/bins.csv",
    "learned/profile.csv",
    "comparison.csv",
    "summary.txt",
];

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub calibration: Calibration,
    pub dataset_size: usize,
    pub training: TrainOutcome,
    pub baseline: EvalReport,
    pub learned: EvalReport,
}

impl ExperimentOutcome {
    /// The learned policy should not do worse than the advisor on the
    /// objective it was trained for.
    pub fn learned_beats_baseline(&self) -> bool {
        self.learned.mean_reward >= self.baseline.mean_reward
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::from(e).with_path(parent))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::from(e).with_path(path))?))
}

/// Writes `bins.csv` and `profile.csv` of a report into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    report.write_bins_csv(create(&dir.join("bins.csv"))?)?;
    report.write_profile_csv(create(&dir.join("profile.csv"))?)?;
    Ok(())
}

fn write_comparison_csv(baseline: &EvalReport, learned: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["metric", "baseline", "learned"])?;
    for (b, l) in baseline.bins.iter().zip(&learned.bins) {
        w.write_record([format!("bin_{}_{}", b.lo, b.hi), b.fraction.to_string(), l.fraction.to_string()])?;
    }
    w.write_record(["hypo_fraction".into(), baseline.hypo_fraction.to_string(), learned.hypo_fraction.to_string()])?;
    w.write_record(["mean_reward".into(), baseline.mean_reward.to_string(), learned.mean_reward.to_string()])?;
    for ((id, b), (_, l)) in baseline.mean_dose_by_meal.iter().zip(&learned.mean_dose_by_meal) {
        w.write_record([format!("mean_dose_meal_{id}"), b.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Calibrate the advisor, explore, train, then evaluate both policies.
/// Every artifact goes under `config.output_dir`; files are overwritten, so
/// reruns with the same config reproduce the same tree.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::from(e).with_path(out))?;
    let seeds = config.stage_seeds();
    let patient = &config.patient;
    let scenario = &config.scenario;

    log::info!("calibrating the advisor over {} candidates", config.calibration.candidates().len());
    let calibration = (|| {
        let c = calibrate_grid_search(patient, scenario, &config.calibration, seeds.calibrate, &config.sim, &config.reward)?;
        c.write_csv(create(&out.join("calibration.csv"))?)?;
        Ok(c)
    })()
    .map_err(|e: Error| e.in_stage("calibrate"))?;
    let best = calibration.best.params;
    log::info!(
        "best advisor CIR={} CF={} target={} (mean reward {:.3})",
        best.cir,
        best.cf,
        best.bg_target,
        calibration.best.mean_reward
    );

    log::info!("exploring for {} days", config.explore_days);
    let transitions = (|| {
        let (traj, transitions) =
            generate_exploration_dataset(patient, scenario, config.explore_days, seeds.explore, &config.sim, &config.reward)?;
        traj.write_csv(create(&out.join("exploration_trajectory.csv"))?)?;
        write_transitions_csv(&transitions, create(&out.join("transitions.csv"))?)?;
        Ok(transitions)
    })()
    .map_err(|e: Error| e.in_stage("explore"))?;

    log::info!("training on {} transitions for {} updates", transitions.len(), config.train.total_updates);
    let training = (|| {
        let outcome = train(&transitions, &config.train)?;
        outcome.model.save(&out.join("model.txt"))?;
        outcome.write_curve_csv(create(&out.join("training_curve.csv"))?)?;
        Ok(outcome)
    })()
    .map_err(|e: Error| e.in_stage("train"))?;

    log::info!("evaluating both policies for {} days", config.eval_days);
    let (baseline, learned) = (|| {
        let (baseline, _) = evaluate_policy(
            patient,
            scenario,
            &mut BaselineAdvisor(best),
            config.eval_days,
            seeds.evaluate,
            &config.sim,
            &config.reward,
        )?;
        write_report(&baseline, &out.join("baseline"))?;
        let mut greedy = GreedyQ::new(training.model.clone(), config.train.action_grid_size)?;
        let (learned, _) =
            evaluate_policy(patient, scenario, &mut greedy, config.eval_days, seeds.evaluate, &config.sim, &config.reward)?;
        write_report(&learned, &out.join("learned"))?;
        write_comparison_csv(&baseline, &learned, &out.join("comparison.csv"))?;
        Ok((baseline, learned))
    })()
    .map_err(|e: Error| e.in_stage("evaluate"))?;

    let outcome = ExperimentOutcome {
        calibration,
        dataset_size: transitions.len(),
        training,
        baseline,
        learned,
    };
    write_summary(config, &outcome, &out.join("summary.txt")).map_err(|e| e.in_stage("evaluate"))?;
    if !outcome.learned_beats_baseline() {
        log::warn!(
            "learned policy's mean reward {:.3} is below the baseline's {:.3}",
            outcome.learned.mean_reward,
            outcome.baseline.mean_reward
        );
    }
    Ok(outcome)
}

fn write_summary(config: &ExperimentConfig, outcome: &ExperimentOutcome, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let best = outcome.calibration.best;
    writeln!(w, "patient: adult #{}", config.patient.id)?;
    writeln!(w, "meal scenario: {}", config.scenario.to_inline())?;
    writeln!(w, "seed: {}", config.seed)?;
    writeln!(
        w,
        "baseline advisor: CIR={} CF={} BG_target={} (calibration mean reward {:.4})",
        best.params.cir, best.params.cf, best.params.bg_target, best.mean_reward
    )?;
    writeln!(w, "exploration: {} days, {} transitions", config.explore_days, outcome.dataset_size)?;
    writeln!(w, "training: {} updates", config.train.total_updates)?;
    writeln!(w)?;
    write!(w, "{}", EvalReport::comparison_table(&outcome.baseline, &outcome.learned))?;
    writeln!(w)?;
    writeln!(
        w,
        "learned mean reward >= baseline mean reward: {}",
        if outcome.learned_beats_baseline() { "yes" } else { "NO" }
    )?;
    w.flush()?;
    Ok(())
}
