use std::path::Path;

use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: u32 = 1440;
/// Record cadence of the simulator stream, minutes.
pub const STEP_MINUTES: u32 = 3;
pub const STEPS_PER_DAY: usize = (MINUTES_PER_DAY / STEP_MINUTES) as usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MealEvent {
    /// Minutes since midnight.
    pub time_of_day: u32,
    /// Carbohydrate, grams.
    pub grams: f64,
    /// 0-based index of the meal within the day.
    pub meal_id: u32,
}

impl MealEvent {
    /// Index of the 3-minute step within the day at which the meal is eaten.
    pub fn step_of_day(&self) -> usize {
        (self.time_of_day / STEP_MINUTES) as usize
    }
}

/// Deterministic daily meal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct MealScenario {
    events: Vec<MealEvent>,
}

impl MealScenario {
    /// Builds a scenario from `(minutes since midnight, grams)` pairs; meal
    /// ids are assigned in time order.
    pub fn new(meals: &[(u32, f64)]) -> Result<Self> {
        if meals.is_empty() {
            return Err(Error::InvalidInput("meal scenario must contain at least one meal".into()));
        }
        let mut events = Vec::with_capacity(meals.len());
        for (k, &(time_of_day, grams)) in meals.iter().enumerate() {
            if time_of_day >= MINUTES_PER_DAY {
                return Err(Error::InvalidInput(format!("meal time {time_of_day} is not within one day")));
            }
            if time_of_day % STEP_MINUTES != 0 {
                return Err(Error::InvalidInput(format!(
                    "meal time {time_of_day} is not on the {STEP_MINUTES}-minute grid"
                )));
            }
            if !(grams.is_finite() && grams >= 0.0) {
                return Err(Error::InvalidInput(format!("meal {k} has invalid carbohydrate amount {grams}")));
            }
            if let Some(prev) = events.last().map(|e: &MealEvent| e.time_of_day) {
                if time_of_day <= prev {
                    return Err(Error::InvalidInput("meal times must be strictly increasing".into()));
                }
            }
            events.push(MealEvent {
                time_of_day,
                grams,
                meal_id: k as u32,
            });
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[MealEvent] {
        &self.events
    }

    pub fn meals_per_day(&self) -> usize {
        self.events.len()
    }

    pub fn meal_ids(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.meal_id).collect()
    }

    pub fn get(&self, meal_id: u32) -> Option<&MealEvent> {
        self.events.get(meal_id as usize)
    }

    pub fn meal_at_step(&self, step_of_day: usize) -> Option<&MealEvent> {
        self.events.iter().find(|e| e.step_of_day() == step_of_day)
    }

    /// Parses the compact `time:grams, time:grams, ...` form.
    pub fn parse_inline(text: &str) -> Result<Self> {
        let mut meals = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (t, g) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidInput(format!("expected `minutes:grams`, got `{item}`")))?;
            let t = t.trim().parse::<u32>().map_err(|_| Error::InvalidInput(format!("bad meal time `{t}`")))?;
            let g = g.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad meal grams `{g}`")))?;
            meals.push((t, g));
        }
        Self::new(&meals)
    }

    pub fn to_inline(&self) -> String {
        self.events
            .iter()
            .map(|e| format!("{}:{}", e.time_of_day, e.grams))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Reads a CSV file with header `time_of_day,grams`.
    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| map_csv(e, path))?;
        let mut meals = Vec::new();
        for row in reader.deserialize::<(u32, f64)>() {
            meals.push(row.map_err(|e| map_csv(e, path))?);
        }
        Self::new(&meals)
    }
}

fn map_csv(e: csv::Error, path: &Path) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    match line {
        Some(line) => Error::Parse {
            path: Some(path.to_path_buf()),
            line,
            message: e.to_string(),
        },
        None => Error::Csv(e).with_path(path),
    }
}

impl Default for MealScenario {
    /// Breakfast 50 g at 06:00, lunch 60 g at 12:00, snack 15 g at 15:00,
    /// dinner 80 g at 20:00.
    fn default() -> Self {
        Self::new(&[(360, 50.0), (720, 60.0), (900, 15.0), (1200, 80.0)]).expect("valid default scenario")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_plan() {
        let s = MealScenario::default();
        let got: Vec<_> = s.events().iter().map(|e| (e.time_of_day, e.grams, e.meal_id)).collect();
        assert_eq!(got, vec![(360, 50.0, 0), (720, 60.0, 1), (900, 15.0, 2), (1200, 80.0, 3)]);
        assert_eq!(s.events()[3].step_of_day(), 400);
    }

    #[test]
    fn rejects_bad_plans() {
        assert!(MealScenario::new(&[]).is_err());
        assert!(MealScenario::new(&[(600, 10.0), (300, 10.0)]).is_err());
        assert!(MealScenario::new(&[(600, 10.0), (600, 10.0)]).is_err());
        assert!(MealScenario::new(&[(1440, 10.0)]).is_err());
        assert!(MealScenario::new(&[(361, 10.0)]).is_err());
        assert!(MealScenario::new(&[(360, -1.0)]).is_err());
    }

    #[test]
    fn inline_round_trip() {
        let s = MealScenario::default();
        assert_eq!(MealScenario::parse_inline(&s.to_inline()).unwrap(), s);
        assert!(MealScenario::parse_inline("360-50").is_err());
    }
}
