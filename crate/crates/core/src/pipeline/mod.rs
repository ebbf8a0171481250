//! Experiment stages: exploration data, pre-meal summarization, policy
//! evaluation and the baseline-vs-learned comparison.

mod experiment;
mod policy;
mod report;

pub use experiment::{run_experiment, write_report, ExperimentOutcome, OUTPUT_FILES};
pub use policy::{GreedyQ, UniformExplorer};
pub use report::{evaluate_policy, percentile, BinFraction, EvalReport, ProfileSlot, BG_BINS};

use crate::error::{Error, Result};
use crate::glucosim::{run_scenario, MealScenario, SimOptions, Trajectory, VirtualPatient, STEPS_PER_DAY};
use crate::qlearn::Transition;
use crate::riskmodel::{risk_reward, RewardParams};

/// Which readings a transition's reward is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardAggregate {
    /// Reward of the next pre-meal reading.
    #[default]
    NextReading,
    /// Mean reward over every 3-minute reading after the meal up to and
    /// including the next pre-meal reading.
    Interval,
}

impl std::str::FromStr for RewardAggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next" => Ok(Self::NextReading),
            "interval" => Ok(Self::Interval),
            other => Err(Error::InvalidInput(format!("unknown reward aggregate `{other}` (expected next|interval)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardOptions {
    pub params: RewardParams,
    pub aggregate: RewardAggregate,
}

/// Collapses a 3-minute stream into one transition per meal occurrence.
/// Each day's last meal links to the first meal of the following day.
pub fn summarize_to_meals(
    trajectory: &Trajectory,
    scenario: &MealScenario,
    reward: &RewardOptions,
) -> Result<Vec<Transition>> {
    let records = &trajectory.records;
    if records.is_empty() || records.len() % STEPS_PER_DAY != 0 {
        return Err(Error::Alignment(format!(
            "stream length {} is not a whole number of days",
            records.len()
        )));
    }
    let meals = scenario.events();
    for (k, r) in records.iter().enumerate() {
        let expected = scenario.meal_at_step(k % STEPS_PER_DAY).map_or(0.0, |m| m.grams);
        if r.cho != expected {
            return Err(Error::Alignment(format!(
                "step {k} carries {} g of CHO where the scenario has {expected} g",
                r.cho
            )));
        }
    }
    let days = trajectory.days();
    let mut out = Vec::with_capacity(days * meals.len());
    for day in 0..days {
        for (m, meal) in meals.iter().enumerate() {
            let k = day * STEPS_PER_DAY + meal.step_of_day();
            let (next_day, next_meal) = if m + 1 < meals.len() { (day, &meals[m + 1]) } else { (day + 1, &meals[0]) };
            let k_next = next_day * STEPS_PER_DAY + next_meal.step_of_day();
            let next_bg = trajectory
                .bg_at(k_next)
                .ok_or_else(|| Error::Alignment(format!("no reading at step {k_next} for the meal after step {k}")))?;
            let r = match reward.aggregate {
                RewardAggregate::NextReading => risk_reward(next_bg, &reward.params)?,
                RewardAggregate::Interval => {
                    let mut sum = 0.0;
                    for j in k + 1..=k_next {
                        let bg = trajectory.bg_at(j).ok_or_else(|| Error::Alignment(format!("no reading at step {j}")))?;
                        sum += risk_reward(bg, &reward.params)?;
                    }
                    sum / (k_next - k) as f64
                }
            };
            let rec = &records[k];
            out.push(Transition {
                t_index: k,
                meal_id: meal.meal_id,
                bg: rec.bg,
                cho: rec.cho,
                ins: rec.ins,
                reward: r,
                next_meal_id: next_meal.meal_id,
                next_bg,
            });
        }
    }
    Ok(out)
}

/// Simulates `days` of the scenario with doses drawn uniformly from the
/// exploration range at every meal, and summarizes the stream.
pub fn generate_exploration_dataset(
    patient: &VirtualPatient,
    scenario: &MealScenario,
    days: usize,
    seed: u64,
    sim: &SimOptions,
    reward: &RewardOptions,
) -> Result<(Trajectory, Vec<Transition>)> {
    let mut explorer = UniformExplorer::new(seed);
    let trajectory = run_scenario(patient, scenario, &mut explorer, days, seed, sim)?;
    let transitions = summarize_to_meals(&trajectory, scenario, reward)?;
    Ok((trajectory, transitions))
}
