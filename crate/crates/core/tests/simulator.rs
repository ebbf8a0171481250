use bolusrl::glucosim::{
    default_presets, integrate_step, preset, run_scenario, simulate_open_loop, MealEvent, MealScenario, SimOptions,
    SimState, STEPS_PER_DAY,
};
use proptest::prelude::*;

fn sup_diff(a: &[SimState], b: &[SimState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.g - y.g).abs()).fold(0.0, f64::max)
}

/// Scripted day: the default scenario's meals with fixed boluses.
fn scripted(k: usize) -> (f64, f64) {
    let s = MealScenario::default();
    match s.meal_at_step(k % STEPS_PER_DAY) {
        Some(m) => (m.grams / 12.0, m.grams),
        None => (0.0, 0.0),
    }
}

#[test]
fn fasting_equilibrium_holds_for_two_days() {
    for p in default_presets() {
        let trace = simulate_open_loop(&p, 2 * STEPS_PER_DAY, 1, |_| (0.0, 0.0)).unwrap();
        let drift = trace.iter().map(|s| (s.g - p.gb).abs()).fold(0.0, f64::max);
        assert!(drift < 1.0, "adult {} drifted {drift} mg/dL", p.id);
    }
}

#[test]
fn step_halving_changes_little() {
    for p in default_presets() {
        let coarse = simulate_open_loop(&p, STEPS_PER_DAY, 1, scripted).unwrap();
        let fine = simulate_open_loop(&p, STEPS_PER_DAY, 2, scripted).unwrap();
        let d = sup_diff(&coarse, &fine);
        assert!(d < 0.5, "adult {}: {d}", p.id);
    }
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let p = preset(1).unwrap();
    let reference = simulate_open_loop(&p, STEPS_PER_DAY, 64, scripted).unwrap();
    let e1 = sup_diff(&simulate_open_loop(&p, STEPS_PER_DAY, 1, scripted).unwrap(), &reference);
    let e2 = sup_diff(&simulate_open_loop(&p, STEPS_PER_DAY, 2, scripted).unwrap(), &reference);
    assert!(e1 > 0.0);
    assert!(e1 / e2 >= 8.0, "error ratio {}", e1 / e2);
}

#[test]
fn uncovered_meal_peak_in_band() {
    for p in default_presets() {
        let meal = |k: usize| if k == 0 { (0.0, 50.0) } else { (0.0, 0.0) };
        let reference = simulate_open_loop(&p, 160, 16, meal).unwrap();
        let peak = reference.iter().map(|s| s.g).fold(0.0, f64::max);
        assert!(peak > p.gb + 30.0 && peak < 300.0, "adult {} peaks at {peak}", p.id);
        let coarse = simulate_open_loop(&p, 160, 1, meal).unwrap();
        let coarse_peak = coarse.iter().map(|s| s.g).fold(0.0, f64::max);
        assert!((coarse_peak - peak).abs() < 0.5);
    }
}

#[test]
fn larger_bolus_lowers_glucose_everywhere() {
    let p = preset(2).unwrap();
    let run = |units: f64| simulate_open_loop(&p, 240, 1, |k| if k == 0 { (units, 50.0) } else { (0.0, 0.0) }).unwrap();
    let small = run(2.0);
    let large = run(4.0);
    for (a, b) in small.iter().zip(&large).skip(1) {
        assert!(b.g <= a.g + 1e-12);
    }
    assert!(large.last().unwrap().g < small.last().unwrap().g);
}

#[test]
fn runs_are_deterministic() {
    let p = preset(3).unwrap();
    let s = MealScenario::default();
    let opts = SimOptions { meter_noise_cv: 0.05, ..SimOptions::default() };
    let mut dose = |m: &MealEvent, bg: f64| m.grams / 10.0 + (bg - 120.0).max(0.0) / 40.0;
    let a = run_scenario(&p, &s, &mut dose, 5, 42, &opts).unwrap();
    let b = run_scenario(&p, &s, &mut dose, 5, 42, &opts).unwrap();
    assert_eq!(a, b);
    let c = run_scenario(&p, &s, &mut dose, 5, 43, &opts).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn negative_dose_is_a_policy_error() {
    let p = preset(1).unwrap();
    let s = MealScenario::default();
    let mut bad = |_: &MealEvent, _: f64| -1.0;
    assert!(run_scenario(&p, &s, &mut bad, 1, 0, &SimOptions::default()).is_err());
    let mut nan = |_: &MealEvent, _: f64| f64::NAN;
    assert!(run_scenario(&p, &s, &mut nan, 1, 0, &SimOptions::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn masses_stay_nonnegative(units in 0.0..40.0f64, grams in 0.0..150.0f64, id in 1u32..=3) {
        let p = preset(id).unwrap();
        let mut s = SimState::equilibrium(&p);
        for k in 0..200 {
            let (u, g) = if k == 0 { (units, grams) } else { (0.0, 0.0) };
            s = integrate_step(&s, &p, u, g, 3.0).unwrap();
            prop_assert!(s.q1 >= 0.0 && s.q2 >= 0.0 && s.s1 >= 0.0 && s.s2 >= 0.0 && s.i >= 0.0);
            prop_assert!((10.0..=600.0).contains(&s.g));
        }
    }
}
