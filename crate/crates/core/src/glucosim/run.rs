use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::ode::{integrate_step_spread, SimState, BG_MAX, BG_MIN};
use super::patient::VirtualPatient;
use super::scenario::{MealEvent, MealScenario, MINUTES_PER_DAY, STEPS_PER_DAY, STEP_MINUTES};
use crate::error::{Error, Result};

/// Maps a pre-meal state to a bolus dose in insulin units.
pub trait Policy {
    fn dose(&mut self, meal: &MealEvent, bg: f64) -> f64;

    fn label(&self) -> String {
        "custom".to_string()
    }
}

impl<F> Policy for F
where
    F: FnMut(&MealEvent, f64) -> f64,
{
    fn dose(&mut self, meal: &MealEvent, bg: f64) -> f64 {
        self(meal, bg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// RK4 sub-steps per 3-minute record interval.
    pub substeps: usize,
    /// Coefficient of variation of multiplicative Gaussian meter noise on BG
    /// readings; 0 disables noise.
    pub meter_noise_cv: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            substeps: 1,
            meter_noise_cv: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Minutes since the start of the run.
    pub t: f64,
    /// BG reading at `t`, before any injection, mg/dL.
    pub bg: f64,
    /// Carbohydrate eaten during this step, grams.
    pub cho: f64,
    /// Bolus injected during this step, units.
    pub ins: f64,
}

/// The 3-minute stream of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub patient_id: u32,
    pub seed: u64,
    /// `days * 480` records, `records[k].t == 3k`.
    pub records: Vec<StepRecord>,
    /// Basal-only continuation past the horizon up to and including the
    /// first meal of the following day, which no bolus can influence. Gives
    /// the final meal of the run a successor reading.
    pub lead_in: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn days(&self) -> usize {
        self.records.len() / STEPS_PER_DAY
    }

    /// Reading at global step `k`, continuing into the lead-in.
    pub fn bg_at(&self, k: usize) -> Option<f64> {
        self.records
            .get(k)
            .or_else(|| self.lead_in.get(k.checked_sub(self.records.len())?))
            .map(|r| r.bg)
    }

    /// Writes the stream as CSV with header `t_min,BG,CHO,INS`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_min", "BG", "CHO", "INS"])?;
        for r in &self.records {
            w.serialize((r.t, r.bg, r.cho, r.ins))?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Meter {
    cv: f64,
    rng: ChaCha8Rng,
}

impl Meter {
    fn read(&mut self, g: f64) -> f64 {
        if self.cv == 0.0 {
            return g;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        (g * (1.0 + self.cv * z)).clamp(BG_MIN, BG_MAX)
    }
}

fn advance(
    state: &SimState,
    patient: &VirtualPatient,
    bolus: f64,
    cho: f64,
    substeps: usize,
) -> Result<SimState> {
    let window = STEP_MINUTES as f64;
    let dt = window / substeps as f64;
    let mut s = *state;
    for _ in 0..substeps {
        s = integrate_step_spread(&s, patient, bolus / substeps as f64, cho / substeps as f64, dt, dt)?;
    }
    // Keep the clock an exact multiple of the record interval.
    s.t = state.t + window;
    Ok(s)
}

/// Simulates `days` days of the scenario from the fasting equilibrium,
/// querying `policy` with the pre-meal reading at every meal step.
pub fn run_scenario(
    patient: &VirtualPatient,
    scenario: &MealScenario,
    policy: &mut dyn Policy,
    days: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<Trajectory> {
    if days == 0 {
        return Err(Error::InvalidInput("days must be at least 1".into()));
    }
    if options.substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    if !(options.meter_noise_cv >= 0.0 && options.meter_noise_cv.is_finite()) {
        return Err(Error::InvalidInput(format!("meter noise cv must be >= 0, got {}", options.meter_noise_cv)));
    }
    let mut meter = Meter {
        cv: options.meter_noise_cv,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut meals_by_step: Vec<Option<&MealEvent>> = vec![None; STEPS_PER_DAY];
    for e in scenario.events() {
        meals_by_step[e.step_of_day()] = Some(e);
    }

    let mut state = SimState::equilibrium(patient);
    let mut records = Vec::with_capacity(days * STEPS_PER_DAY);
    for k in 0..days * STEPS_PER_DAY {
        let bg = meter.read(state.g);
        let (cho, ins) = match meals_by_step[k % STEPS_PER_DAY] {
            Some(meal) => {
                let dose = policy.dose(meal, bg);
                if !(dose.is_finite() && dose >= 0.0) {
                    return Err(Error::PolicyOutput {
                        meal_id: meal.meal_id,
                        bg,
                        dose,
                    });
                }
                (meal.grams, dose)
            }
            None => (0.0, 0.0),
        };
        records.push(StepRecord {
            t: (k as u64 * STEP_MINUTES as u64) as f64,
            bg,
            cho,
            ins,
        });
        state = advance(&state, patient, ins, cho, options.substeps)?;
    }

    let first_meal_step = scenario.events()[0].step_of_day();
    let mut lead_in = Vec::with_capacity(first_meal_step + 1);
    for j in 0..=first_meal_step {
        let k = days * STEPS_PER_DAY + j;
        lead_in.push(StepRecord {
            t: (k as u64 * STEP_MINUTES as u64) as f64,
            bg: meter.read(state.g),
            cho: 0.0,
            ins: 0.0,
        });
        if j < first_meal_step {
            state = advance(&state, patient, 0.0, 0.0, options.substeps)?;
        }
    }
    debug_assert_eq!(MINUTES_PER_DAY as usize, STEPS_PER_DAY * STEP_MINUTES as usize);

    Ok(Trajectory {
        patient_id: patient.id,
        seed,
        records,
        lead_in,
    })
}

/// Glucose trace of a run with scripted inputs, for convergence checks:
/// `inputs(k)` gives `(bolus units, CHO grams)` for record step `k`.
pub fn simulate_open_loop(
    patient: &VirtualPatient,
    steps: usize,
    substeps: usize,
    mut inputs: impl FnMut(usize) -> (f64, f64),
) -> Result<Vec<SimState>> {
    if substeps == 0 {
        return Err(Error::InvalidInput("substeps must be at least 1".into()));
    }
    let mut state = SimState::equilibrium(patient);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state);
    for k in 0..steps {
        let (bolus, cho) = inputs(k);
        state = advance(&state, patient, bolus, cho, substeps)?;
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glucosim::patient::preset;

    fn zero(_: &MealEvent, _: f64) -> f64 {
        0.0
    }

    #[test]
    fn single_meal_day() {
        let p = preset(1).unwrap();
        let s = MealScenario::new(&[(480, 40.0)]).unwrap();
        let traj = run_scenario(&p, &s, &mut zero, 1, 7, &SimOptions::default()).unwrap();
        assert_eq!(traj.len(), 480);
        assert_eq!(traj.records.iter().filter(|r| r.cho > 0.0).count(), 1);
        for (k, r) in traj.records.iter().enumerate() {
            assert_eq!(r.t, 3.0 * k as f64);
        }
        assert_eq!(traj.lead_in.len(), 161);
        assert_eq!(traj.lead_in[0].t, 1440.0);
        assert_eq!(traj.lead_in.last().unwrap().t, 1440.0 + 480.0);
    }

    #[test]
    fn bad_policy_output_aborts() {
        let p = preset(1).unwrap();
        let s = MealScenario::default();
        let mut neg = |_: &MealEvent, _: f64| -1.0;
        let err = run_scenario(&p, &s, &mut neg, 1, 0, &SimOptions::default()).unwrap_err();
        assert!(matches!(err, Error::PolicyOutput { meal_id: 0, .. }));
        let mut nan = |_: &MealEvent, _: f64| f64::NAN;
        assert!(run_scenario(&p, &s, &mut nan, 1, 0, &SimOptions::default()).is_err());
        assert!(run_scenario(&p, &s, &mut zero, 0, 0, &SimOptions::default()).is_err());
    }

    #[test]
    fn policy_sees_pre_meal_reading() {
        let p = preset(2).unwrap();
        let s = MealScenario::default();
        let mut seen = Vec::new();
        let mut spy = |m: &MealEvent, bg: f64| {
            seen.push((m.meal_id, bg));
            1.0
        };
        let traj = run_scenario(&p, &s, &mut spy, 2, 0, &SimOptions::default()).unwrap();
        assert_eq!(seen.len(), 8);
        for (n, (meal_id, bg)) in seen.iter().enumerate() {
            let meal = &s.events()[*meal_id as usize];
            let k = (n / 4) * STEPS_PER_DAY + meal.step_of_day();
            assert_eq!(traj.records[k].bg, *bg);
            assert_eq!(traj.records[k].ins, 1.0);
            assert_eq!(traj.records[k].cho, meal.grams);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let p = preset(1).unwrap();
        let s = MealScenario::default();
        let opts = SimOptions {
            meter_noise_cv: 0.05,
            ..SimOptions::default()
        };
        let a = run_scenario(&p, &s, &mut zero, 1, 11, &opts).unwrap();
        let b = run_scenario(&p, &s, &mut zero, 1, 11, &opts).unwrap();
        let c = run_scenario(&p, &s, &mut zero, 1, 12, &opts).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.records, c.records);
        let clean = run_scenario(&p, &s, &mut zero, 1, 11, &SimOptions::default()).unwrap();
        assert_ne!(a.records, clean.records);
    }

    #[test]
    fn csv_export_header_and_rows() {
        let p = preset(1).unwrap();
        let traj = run_scenario(&p, &MealScenario::default(), &mut zero, 1, 0, &SimOptions::default()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t_min,BG,CHO,INS"));
        assert_eq!(lines.count(), 480);
    }
}
