use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advisor::exploration_bounds;
use crate::error::Result;
use crate::glucosim::{MealEvent, Policy};
use crate::qlearn::{ActionGrid, QModel};

/// Greedy policy of a learned Q-model on a fixed action grid.
#[derive(Debug, Clone)]
pub struct GreedyQ {
    model: QModel,
    actions: ActionGrid,
}

impl GreedyQ {
    pub fn new(model: QModel, action_grid_size: usize) -> Result<Self> {
        let actions = ActionGrid::new(model.grid(), action_grid_size)?;
        Ok(Self { model, actions })
    }

    pub fn model(&self) -> &QModel {
        &self.model
    }

    pub fn recommend(&self, meal_id: u32, bg: f64) -> Result<f64> {
        self.model.greedy_dose(meal_id, bg, &self.actions)
    }
}

impl Policy for GreedyQ {
    fn dose(&mut self, meal: &MealEvent, bg: f64) -> f64 {
        // An unknown meal surfaces as a policy-output error in the simulator.
        self.recommend(meal.meal_id, bg).unwrap_or(f64::NAN)
    }

    fn label(&self) -> String {
        "learned".to_string()
    }
}

/// Draws each dose uniformly from the exploration range of the meal.
#[derive(Debug, Clone)]
pub struct UniformExplorer {
    rng: ChaCha8Rng,
}

impl UniformExplorer {
    pub fn new(seed: u64) -> Self {
        Self {
            // Separate stream from the simulator's meter noise, which uses
            // the same seed.
            rng: {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1);
                rng
            },
        }
    }
}

impl Policy for UniformExplorer {
    fn dose(&mut self, meal: &MealEvent, bg: f64) -> f64 {
        match exploration_bounds(meal.grams, bg) {
            Ok((lo, hi)) if hi > lo => self.rng.random_range(lo..=hi),
            Ok((lo, _)) => lo,
            Err(_) => f64::NAN,
        }
    }

    fn label(&self) -> String {
        "explorer".to_string()
    }
}
