use approx::assert_abs_diff_eq;
use bolusrl::qlearn::{
    greedy_action, td_update, train, FeatureGrid, LrSchedule, QModel, TrainConfig, Transition,
};
use proptest::prelude::*;

fn default_grid() -> FeatureGrid {
    FeatureGrid::new(8, 0.2, (40.0, 600.0), (0.0, 30.0)).unwrap()
}

fn transition(meal_id: u32, bg: f64, ins: f64, reward: f64, next_meal_id: u32, next_bg: f64) -> Transition {
    Transition {
        t_index: 0,
        meal_id,
        bg,
        cho: 50.0,
        ins,
        reward,
        next_meal_id,
        next_bg,
    }
}

#[test]
fn neighbor_centers_see_exactly_the_overlap() {
    let grid = default_grid();
    for axis in [grid.bg_axis(), grid.ins_axis()] {
        let c = axis.centers();
        for b in 0..c.len() {
            let at = axis.eval(c[b]);
            assert_abs_diff_eq!(at[b], 1.0, epsilon = 1e-12);
            if b + 1 < c.len() {
                assert_abs_diff_eq!(at[b + 1], 0.2, epsilon = 1e-9);
                assert_abs_diff_eq!(axis.eval(c[b + 1])[b], 0.2, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn midpoint_value_is_fourth_root_of_overlap() {
    let grid = default_grid();
    let c = grid.ins_axis().centers();
    let mid = 0.5 * (c[2] + c[3]);
    let phi = grid.ins_axis().eval(mid);
    assert_abs_diff_eq!(phi[2], 0.2f64.powf(0.25), epsilon = 1e-12);
    assert_abs_diff_eq!(phi[3], 0.2f64.powf(0.25), epsilon = 1e-12);
}

#[test]
fn feature_vector_is_outer_product() {
    let grid = default_grid();
    let (bg, ins) = (173.0, 11.3);
    let f = grid.features(bg, ins);
    let (pb, pi) = (grid.bg_axis().eval(bg), grid.ins_axis().eval(ins));
    assert_eq!(f.len(), 64);
    for b in 0..8 {
        for k in 0..8 {
            assert_eq!(f[b * 8 + k], pb[b] * pi[k]);
        }
    }
}

#[test]
fn td_step_moves_along_the_features() {
    let grid = default_grid();
    let mut model = QModel::zeros(grid.clone(), &[1, 2]).unwrap();
    for (j, a) in model.alpha_mut(1).unwrap().iter_mut().enumerate() {
        *a = (j as f64 * 0.37).sin();
    }
    for (j, a) in model.alpha_mut(2).unwrap().iter_mut().enumerate() {
        *a = (j as f64 * 0.11).cos();
    }
    let frozen = model.clone();
    let t = transition(1, 150.0, 7.0, -3.0, 2, 210.0);
    let config = TrainConfig {
        grid: grid.clone(),
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let (next, stats) = td_update(&model, &frozen, &[t], &config).unwrap();
    assert_eq!(stats.applied, 1);

    let q = model.q_value(1, 150.0, 7.0).unwrap();
    let doses: Vec<f64> = (0..config.action_grid_size).map(|k| 30.0 * k as f64 / (config.action_grid_size - 1) as f64).collect();
    let max_next = doses.iter().map(|&d| frozen.q_value(2, 210.0, d).unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let delta = -3.0 + 0.9 * max_next - q;
    let phi = grid.features(150.0, 7.0);
    for ((after, before), f) in next.alpha(1).unwrap().iter().zip(model.alpha(1).unwrap()).zip(&phi) {
        assert_abs_diff_eq!(*after, before + 0.05 * delta * f, epsilon = 1e-12);
    }
    assert_eq!(next.alpha(2).unwrap(), model.alpha(2).unwrap());
}

#[test]
fn targets_come_from_the_frozen_copy() {
    let grid = default_grid();
    let model = QModel::zeros(grid.clone(), &[1, 2]).unwrap();
    let mut frozen = model.clone();
    frozen.alpha_mut(2).unwrap().iter_mut().for_each(|a| *a = 1.0);
    let t = transition(1, 112.5, 5.0, 0.0, 2, 112.5);
    let config = TrainConfig {
        grid,
        learning_rate: 0.1,
        ..TrainConfig::default()
    };
    let (from_live, _) = td_update(&model, &model, &[t], &config).unwrap();
    let (from_frozen, _) = td_update(&model, &frozen, &[t], &config).unwrap();
    assert_eq!(from_live, model);
    assert!(from_frozen.q_value(1, 112.5, 5.0).unwrap() > 0.0);
}

#[test]
fn single_basis_td_step_closed_form() {
    let grid = FeatureGrid::new(1, 0.2, (40.0, 600.0), (0.0, 30.0)).unwrap();
    let mut model = QModel::zeros(grid.clone(), &[1]).unwrap();
    model.alpha_mut(1).unwrap()[0] = 2.0;
    let t = transition(1, 40.0, 0.0, -1.0, 1, 40.0);
    let config = TrainConfig {
        grid,
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    // phi = 1 at the lone center, so alpha' = 2 + 0.5 * (-1 + 0.9 * 2 - 2).
    let (next, _) = td_update(&model, &model, &[t], &config).unwrap();
    assert_abs_diff_eq!(next.alpha(1).unwrap()[0], 2.0 + 0.5 * (-1.0 + 1.8 - 2.0), epsilon = 1e-12);
}

/// Three meals as states, doses 0 and 30 U as the two actions; with a tiny
/// overlap and readings at the grid corner the features are one-hot.
#[test]
fn matches_tabular_value_iteration() {
    let grid = FeatureGrid::new(2, 1e-12, (40.0, 600.0), (0.0, 30.0)).unwrap();
    // (state, action) -> (reward, next state)
    let mdp = [[(-1.0, 1), (0.0, 2)], [(-2.0, 0), (-0.5, 2)], [(1.0, 0), (-3.0, 1)]];
    let gamma = 0.9;
    let mut q = [[0.0f64; 2]; 3];
    for _ in 0..2000 {
        let mut next = q;
        for s in 0..3 {
            for a in 0..2 {
                let (r, s2) = mdp[s][a];
                next[s][a] = r + gamma * q[s2][0].max(q[s2][1]);
            }
        }
        q = next;
    }
    let mut data = Vec::new();
    for (s, row) in mdp.iter().enumerate() {
        for (a, &(r, s2)) in row.iter().enumerate() {
            data.push(transition(s as u32 + 1, 40.0, 30.0 * a as f64, r, s2 as u32 + 1, 40.0));
        }
    }
    let config = TrainConfig {
        grid,
        gamma,
        learning_rate: 0.05,
        schedule: LrSchedule::Constant,
        replay_capacity: 600,
        batch_size: 6,
        freeze_period: 20,
        total_updates: 30_000,
        action_grid_size: 2,
        init_q: 0.0,
        seed: 9,
    };
    let model = train(&data, &config).unwrap().model;
    let mut sup = 0.0f64;
    for s in 0..3 {
        for a in 0..2 {
            let got = model.q_value(s as u32 + 1, 40.0, 30.0 * a as f64).unwrap();
            sup = sup.max((got - q[s][a]).abs());
        }
    }
    assert!(sup < 1e-2, "sup-norm gap {sup}");
}

#[test]
fn model_text_round_trip() {
    let mut model = QModel::zeros(default_grid(), &[3, 7]).unwrap();
    for (j, a) in model.alpha_mut(7).unwrap().iter_mut().enumerate() {
        *a = 1.0 / (j as f64 + 0.3) - 0.1;
    }
    let back = QModel::from_text(&model.to_text().unwrap()).unwrap();
    assert_eq!(back, model);
}

#[test]
fn finite_difference_gradient_is_the_feature_vector() {
    let grid = default_grid();
    let mut model = QModel::zeros(grid.clone(), &[1]).unwrap();
    for (j, a) in model.alpha_mut(1).unwrap().iter_mut().enumerate() {
        *a = (j as f64 * 0.91).sin();
    }
    let (bg, ins) = (231.0, 17.2);
    let phi = grid.features(bg, ins);
    let h = 1e-4;
    for j in 0..phi.len() {
        let mut up = model.clone();
        up.alpha_mut(1).unwrap()[j] += h;
        let mut down = model.clone();
        down.alpha_mut(1).unwrap()[j] -= h;
        let fd = (up.q_value(1, bg, ins).unwrap() - down.q_value(1, bg, ins).unwrap()) / (2.0 * h);
        assert!((fd - phi[j]).abs() < 1e-6, "coefficient {j}: {fd} vs {}", phi[j]);
    }
}

#[test]
fn concave_bump_peaks_at_nearest_grid_dose() {
    let grid = default_grid();
    let mut model = QModel::zeros(grid.clone(), &[1]).unwrap();
    let centers = grid.ins_axis().centers().to_vec();
    let d_star = 13.0;
    // Coefficients follow -(c - d*)^2 in the insulin direction.
    for (j, a) in model.alpha_mut(1).unwrap().iter_mut().enumerate() {
        *a = -(centers[j % 8] - d_star).powi(2) / 100.0;
    }
    let doses: Vec<f64> = (0..121).map(|k| 30.0 * k as f64 / 120.0).collect();
    let brute = doses
        .iter()
        .map(|&d| (d, model.q_value(1, 150.0, d).unwrap()))
        .fold((0.0, f64::NEG_INFINITY), |best, x| if x.1 > best.1 { x } else { best });
    let got = greedy_action(&model, 1, 150.0, 121).unwrap();
    assert_eq!(got, brute.0);
    assert!((got - d_star).abs() < 2.0, "{got}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q_is_linear_in_coefficients(
        seed in 0u64..1000, bg in 40.0..600.0f64, ins in 0.0..30.0f64, c in -3.0..3.0f64,
    ) {
        let grid = default_grid();
        let mut a = QModel::zeros(grid.clone(), &[1]).unwrap();
        let mut b = a.clone();
        let mut sum = a.clone();
        for (j, ((x, y), z)) in a.alpha_mut(1).unwrap().iter_mut()
            .zip(b.alpha_mut(1).unwrap().iter_mut())
            .zip(sum.alpha_mut(1).unwrap().iter_mut())
            .enumerate()
        {
            *x = ((seed + j as u64) as f64 * 0.7).sin();
            *y = ((seed * 3 + j as u64) as f64 * 0.3).cos();
            *z = *x + c * *y;
        }
        let lhs = sum.q_value(1, bg, ins).unwrap();
        let rhs = a.q_value(1, bg, ins).unwrap() + c * b.q_value(1, bg, ins).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn greedy_dose_ignores_positive_scaling(seed in 0u64..1000, bg in 40.0..600.0f64, c in 0.01..100.0f64) {
        let grid = default_grid();
        let mut a = QModel::zeros(grid, &[1]).unwrap();
        for (j, x) in a.alpha_mut(1).unwrap().iter_mut().enumerate() {
            *x = ((seed * 7 + j as u64) as f64 * 1.3).sin();
        }
        let mut scaled = a.clone();
        scaled.alpha_mut(1).unwrap().iter_mut().for_each(|x| *x *= c);
        let d = greedy_action(&a, 1, bg, 121).unwrap();
        prop_assert!((0.0..=30.0).contains(&d));
        prop_assert_eq!(d, greedy_action(&scaled, 1, bg, 121).unwrap());
    }

    #[test]
    fn features_are_bounded(bg in -100.0..1000.0f64, ins in -10.0..100.0f64) {
        for f in default_grid().features(bg, ins) {
            prop_assert!(f > 0.0 && f <= 1.0);
        }
    }
}
