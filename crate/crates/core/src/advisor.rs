//! The standard pre-meal bolus advisor, its grid-search calibration, and the
//! dose range used for random exploration.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glucosim::{run_scenario, MealEvent, MealScenario, Policy, SimOptions, VirtualPatient};
use crate::pipeline::{summarize_to_meals, RewardOptions};
use crate::riskmodel::IDEAL_BG;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvisorParams {
    /// Carbohydrate-to-insulin ratio, g/U.
    pub cir: f64,
    /// Correction factor, mg/dL per U.
    pub cf: f64,
    /// BG target, mg/dL.
    pub bg_target: f64,
}

impl AdvisorParams {
    pub fn new(cir: f64, cf: f64, bg_target: f64) -> Result<Self> {
        let p = Self { cir, cf, bg_target };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cir > 0.0 && self.cir.is_finite()) {
            return Err(Error::InvalidInput(format!("CIR must be > 0, got {}", self.cir)));
        }
        if !(self.cf > 0.0 && self.cf.is_finite()) {
            return Err(Error::InvalidInput(format!("CF must be > 0, got {}", self.cf)));
        }
        if !(self.bg_target > 40.0 && self.bg_target < 300.0) {
            return Err(Error::InvalidInput(format!("BG target must lie in (40, 300), got {}", self.bg_target)));
        }
        Ok(())
    }
}

/// `CHO/CIR + max(BG - target, 0)/CF`.
pub fn bolus_dose(cho: f64, bg: f64, params: &AdvisorParams) -> Result<f64> {
    if !(cho >= 0.0 && cho.is_finite()) {
        return Err(Error::InvalidInput(format!("carbohydrate amount must be >= 0, got {cho}")));
    }
    if !bg.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite BG reading {bg}")));
    }
    Ok(cho / params.cir + (bg - params.bg_target).max(0.0) / params.cf)
}

pub const CIR_BOUNDS: (f64, f64) = (3.0, 30.0);
pub const CF_BOUNDS: (f64, f64) = (0.4, 2.8);
pub const TARGET_BOUNDS: (f64, f64) = (100.0, 150.0);

/// Exploration dose range: the advisor evaluated with the most conservative
/// and the most aggressive coefficients of the calibration bounds, both aimed
/// at the ideal level.
pub fn exploration_bounds(cho: f64, bg: f64) -> Result<(f64, f64)> {
    let lo = bolus_dose(cho, bg, &AdvisorParams { cir: CIR_BOUNDS.1, cf: CF_BOUNDS.1, bg_target: IDEAL_BG })?;
    let hi = bolus_dose(cho, bg, &AdvisorParams { cir: CIR_BOUNDS.0, cf: CF_BOUNDS.0, bg_target: IDEAL_BG })?;
    Ok((lo, hi))
}

/// Policy following the advisor with fixed coefficients; CHO comes from the
/// scenario's meal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineAdvisor(pub AdvisorParams);

impl Policy for BaselineAdvisor {
    fn dose(&mut self, meal: &MealEvent, bg: f64) -> f64 {
        bolus_dose(meal.grams, bg, &self.0).unwrap_or(f64::NAN)
    }

    fn label(&self) -> String {
        format!("advisor(CIR={}, CF={}, target={})", self.0.cir, self.0.cf, self.0.bg_target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationGrid {
    pub cir_values: Vec<f64>,
    pub cf_values: Vec<f64>,
    pub target_values: Vec<f64>,
    pub eval_days: usize,
}

/// `n` evenly spaced points covering `[lo, hi]` (just `lo` when `n == 1`).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

impl CalibrationGrid {
    /// Uniform grid over the standard coefficient bounds.
    pub fn uniform(cir_points: usize, cf_points: usize, target_points: usize, eval_days: usize) -> Self {
        Self {
            cir_values: linspace(CIR_BOUNDS.0, CIR_BOUNDS.1, cir_points),
            cf_values: linspace(CF_BOUNDS.0, CF_BOUNDS.1, cf_points),
            target_values: linspace(TARGET_BOUNDS.0, TARGET_BOUNDS.1, target_points),
            eval_days,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let within = |name: &str, values: &[f64], (lo, hi): (f64, f64)| -> Result<()> {
            if values.is_empty() {
                return Err(Error::InvalidInput(format!("{name} grid is empty")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("{name} grid must be strictly ascending")));
            }
            if values.iter().any(|&v| !(v >= lo && v <= hi)) {
                return Err(Error::InvalidInput(format!("{name} grid leaves the bounds [{lo}, {hi}]")));
            }
            Ok(())
        };
        within("CIR", &self.cir_values, CIR_BOUNDS)?;
        within("CF", &self.cf_values, CF_BOUNDS)?;
        within("BG target", &self.target_values, TARGET_BOUNDS)?;
        if self.eval_days == 0 {
            return Err(Error::InvalidInput("calibration eval_days must be at least 1".into()));
        }
        Ok(())
    }

    pub fn candidates(&self) -> Vec<AdvisorParams> {
        let mut out = Vec::with_capacity(self.cir_values.len() * self.cf_values.len() * self.target_values.len());
        for &cir in &self.cir_values {
            for &cf in &self.cf_values {
                for &bg_target in &self.target_values {
                    out.push(AdvisorParams { cir, cf, bg_target });
                }
            }
        }
        out
    }
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        Self::uniform(10, 10, 6, 14)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub params: AdvisorParams,
    /// Mean per-meal reward; `-inf` when the simulation failed.
    pub mean_reward: f64,
    pub total_insulin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub best: CandidateScore,
    /// Every candidate, best first.
    pub ranking: Vec<CandidateScore>,
}

impl Calibration {
    /// CSV with header `CIR,CF,BG_target,mean_reward`, best first.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["CIR", "CF", "BG_target", "mean_reward"])?;
        for c in &self.ranking {
            w.serialize((c.params.cir, c.params.cf, c.params.bg_target, c.mean_reward))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores one advisor candidate by its mean per-meal reward over the
/// evaluation window.
pub fn score_candidate(
    patient: &VirtualPatient,
    scenario: &MealScenario,
    params: AdvisorParams,
    eval_days: usize,
    seed: u64,
    sim: &SimOptions,
    reward: &RewardOptions,
) -> CandidateScore {
    let attempt = || -> Result<(f64, f64)> {
        let traj = run_scenario(patient, scenario, &mut BaselineAdvisor(params), eval_days, seed, sim)?;
        let transitions = summarize_to_meals(&traj, scenario, reward)?;
        let mean = transitions.iter().map(|t| t.reward).sum::<f64>() / transitions.len() as f64;
        let insulin = traj.records.iter().map(|r| r.ins).sum::<f64>();
        Ok((mean, insulin))
    };
    match attempt() {
        Ok((mean_reward, total_insulin)) if mean_reward.is_finite() => CandidateScore {
            params,
            mean_reward,
            total_insulin,
        },
        _ => CandidateScore {
            params,
            mean_reward: f64::NEG_INFINITY,
            total_insulin: f64::INFINITY,
        },
    }
}

/// Exhaustive search over the grid; ties on reward go to the candidate that
/// delivers the least insulin.
pub fn calibrate_grid_search(
    patient: &VirtualPatient,
    scenario: &MealScenario,
    grid: &CalibrationGrid,
    seed: u64,
    sim: &SimOptions,
    reward: &RewardOptions,
) -> Result<Calibration> {
    grid.validate()?;
    let mut ranking: Vec<CandidateScore> = grid
        .candidates()
        .into_par_iter()
        .map(|params| score_candidate(patient, scenario, params, grid.eval_days, seed, sim, reward))
        .collect();
    // Stable sort keeps grid order among exact ties.
    ranking.sort_by(|a, b| {
        b.mean_reward
            .total_cmp(&a.mean_reward)
            .then(a.total_insulin.total_cmp(&b.total_insulin))
    });
    Ok(Calibration { best: ranking[0], ranking })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dose_examples() {
        let p = AdvisorParams::new(10.0, 2.0, 112.5).unwrap();
        assert_eq!(bolus_dose(50.0, 112.5, &p).unwrap(), 5.0);
        let p = AdvisorParams::new(7.0, 1.0, 120.0).unwrap();
        assert_eq!(bolus_dose(0.0, 100.0, &p).unwrap(), 0.0);
        let p = AdvisorParams::new(12.0, 2.0, 130.0).unwrap();
        assert_eq!(bolus_dose(60.0, 250.0, &p).unwrap(), 65.0);
    }

    #[test]
    fn dose_errors() {
        let p = AdvisorParams::new(10.0, 2.0, 112.5).unwrap();
        assert!(bolus_dose(-1.0, 100.0, &p).is_err());
        assert!(bolus_dose(10.0, f64::NAN, &p).is_err());
        assert!(AdvisorParams::new(0.0, 1.0, 120.0).is_err());
        assert!(AdvisorParams::new(10.0, -1.0, 120.0).is_err());
        assert!(AdvisorParams::new(10.0, 1.0, 30.0).is_err());
    }

    #[test]
    fn exploration_bound_examples() {
        assert_eq!(exploration_bounds(60.0, 112.5).unwrap(), (2.0, 20.0));
        assert_eq!(exploration_bounds(0.0, 112.5).unwrap(), (0.0, 0.0));
        // Oracle: the two advisor evaluations written out by hand.
        let (lo, hi) = exploration_bounds(50.0, 212.5).unwrap();
        assert!((lo - (50.0 / 30.0 + 100.0 / 2.8)).abs() < 1e-12);
        assert!((hi - (50.0 / 3.0 + 100.0 / 0.4)).abs() < 1e-12);
        assert!((lo - 37.38).abs() < 5e-3 && (hi - 266.67).abs() < 5e-3);
    }

    #[test]
    fn grid_shape() {
        let g = CalibrationGrid::default();
        assert_eq!(g.candidates().len(), 600);
        assert_eq!(g.cir_values.first(), Some(&3.0));
        assert_eq!(g.cir_values.last(), Some(&30.0));
        assert_eq!(g.target_values, vec![100.0, 110.0, 120.0, 130.0, 140.0, 150.0]);
        g.validate().unwrap();
        let mut bad = g.clone();
        bad.cf_values.push(3.0);
        assert!(bad.validate().is_err());
        bad = g.clone();
        bad.target_values.clear();
        assert!(bad.validate().is_err());
    }
}
