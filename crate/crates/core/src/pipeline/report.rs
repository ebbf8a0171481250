use std::fmt::Write as _;

use super::{summarize_to_meals, RewardOptions};
use crate::error::Result;
use crate::glucosim::{run_scenario, MealScenario, Policy, SimOptions, Trajectory, VirtualPatient, STEPS_PER_DAY, STEP_MINUTES};

/// BG distribution bins, mg/dL. The last bin is closed on the right.
pub const BG_BINS: [(f64, f64); 5] = [(40.0, 70.0), (70.0, 112.5), (112.5, 180.0), (180.0, 350.0), (350.0, 600.0)];

const HYPO_LEVEL: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinFraction {
    pub lo: f64,
    pub hi: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSlot {
    pub minute_of_day: u32,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub patient_id: u32,
    pub policy: String,
    pub days: usize,
    /// Fractions of all 3-minute readings per [`BG_BINS`] entry, after
    /// clamping readings into [40, 600].
    pub bins: Vec<BinFraction>,
    pub mean_reward: f64,
    pub hypo_fraction: f64,
    pub daily_profile: Vec<ProfileSlot>,
    /// Mean dose per meal id, in meal-id order.
    pub mean_dose_by_meal: Vec<(u32, f64)>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn bin_index(bg: f64) -> usize {
    let bg = bg.clamp(BG_BINS[0].0, BG_BINS[BG_BINS.len() - 1].1);
    BG_BINS.iter().position(|&(_, hi)| bg < hi).unwrap_or(BG_BINS.len() - 1)
}

impl EvalReport {
    pub fn from_trajectory(
        trajectory: &Trajectory,
        scenario: &MealScenario,
        policy: &str,
        reward: &RewardOptions,
    ) -> Result<Self> {
        let transitions = summarize_to_meals(trajectory, scenario, reward)?;
        let n = trajectory.records.len() as f64;
        let mut counts = [0usize; BG_BINS.len()];
        for r in &trajectory.records {
            counts[bin_index(r.bg)] += 1;
        }
        let bins: Vec<BinFraction> = BG_BINS
            .iter()
            .zip(counts)
            .map(|(&(lo, hi), c)| BinFraction { lo, hi, fraction: c as f64 / n })
            .collect();
        let hypo_fraction = bins.iter().filter(|b| b.hi <= HYPO_LEVEL).map(|b| b.fraction).sum();

        let days = trajectory.days();
        let mut daily_profile = Vec::with_capacity(STEPS_PER_DAY);
        let mut column = Vec::with_capacity(days);
        for slot in 0..STEPS_PER_DAY {
            column.clear();
            column.extend((0..days).map(|d| trajectory.records[d * STEPS_PER_DAY + slot].bg));
            let mean = column.iter().sum::<f64>() / days as f64;
            column.sort_by(f64::total_cmp);
            daily_profile.push(ProfileSlot {
                minute_of_day: slot as u32 * STEP_MINUTES,
                mean,
                p10: percentile(&column, 0.1),
                p90: percentile(&column, 0.9),
            });
        }

        let mean_reward = transitions.iter().map(|t| t.reward).sum::<f64>() / transitions.len() as f64;
        let mean_dose_by_meal = scenario
            .meal_ids()
            .into_iter()
            .map(|id| {
                let doses: Vec<f64> = transitions.iter().filter(|t| t.meal_id == id).map(|t| t.ins).collect();
                (id, doses.iter().sum::<f64>() / doses.len() as f64)
            })
            .collect();

        Ok(Self {
            patient_id: trajectory.patient_id,
            policy: policy.to_string(),
            days,
            bins,
            mean_reward,
            hypo_fraction,
            daily_profile,
            mean_dose_by_meal,
        })
    }

    pub fn mean_dose(&self, meal_id: u32) -> Option<f64> {
        self.mean_dose_by_meal.iter().find(|(id, _)| *id == meal_id).map(|(_, d)| *d)
    }

    /// `bin_lo,bin_hi,fraction`.
    pub fn write_bins_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "fraction"])?;
        for b in &self.bins {
            w.serialize((b.lo, b.hi, b.fraction))?;
        }
        w.flush()?;
        Ok(())
    }

    /// `minute_of_day,mean_BG,p10_BG,p90_BG`, one row per 3-minute slot.
    pub fn write_profile_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["minute_of_day", "mean_BG", "p10_BG", "p90_BG"])?;
        for s in &self.daily_profile {
            w.serialize((s.minute_of_day, s.mean, s.p10, s.p90))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text comparison of two reports, one column per policy, bins in
    /// rows.
    pub fn comparison_table(baseline: &EvalReport, learned: &EvalReport) -> String {
        let fmt_frac = |f: f64| {
            let s = format!("{f:.2}");
            s.strip_prefix('0').map(str::to_string).unwrap_or(s)
        };
        let mut s = String::new();
        let _ = writeln!(s, "{:<28}{:^20}", "BG distribution", format!("Adult #{}", baseline.patient_id));
        let _ = writeln!(s, "{:<28}{:>10}{:>10}", "", "baseline", "learned");
        for (b, l) in baseline.bins.iter().zip(&learned.bins) {
            let close = if b.hi >= BG_BINS[BG_BINS.len() - 1].1 { ']' } else { ')' };
            let label = format!("[{} mg/dL, {} mg/dL{close}", b.lo, b.hi);
            let _ = writeln!(s, "{label:<28}{:>10}{:>10}", fmt_frac(b.fraction), fmt_frac(l.fraction));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<28}{:>10.3}{:>10.3}", "hypo fraction (<70)", baseline.hypo_fraction, learned.hypo_fraction);
        let _ = writeln!(s, "{:<28}{:>10.3}{:>10.3}", "mean reward per meal", baseline.mean_reward, learned.mean_reward);
        for ((id, b), (_, l)) in baseline.mean_dose_by_meal.iter().zip(&learned.mean_dose_by_meal) {
            let _ = writeln!(s, "{:<28}{:>10.3}{:>10.3}", format!("mean dose, meal {id} (U)"), b, l);
        }
        let _ = writeln!(s, "{:<28}{:>10}{:>10}", "evaluation days", baseline.days, learned.days);
        s
    }
}

/// Simulates `days` under `policy` and summarizes the outcome.
pub fn evaluate_policy(
    patient: &VirtualPatient,
    scenario: &MealScenario,
    policy: &mut dyn Policy,
    days: usize,
    seed: u64,
    sim: &SimOptions,
    reward: &RewardOptions,
) -> Result<(EvalReport, Trajectory)> {
    let label = policy.label();
    let trajectory = run_scenario(patient, scenario, policy, days, seed, sim)?;
    let report = EvalReport::from_trajectory(&trajectory, scenario, &label, reward)?;
    Ok((report, trajectory))
}
