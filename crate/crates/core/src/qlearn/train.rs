use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::FeatureGrid;
use super::model::{ActionGrid, QModel};
use crate::error::{Error, Result};

/// One pre-meal observation and what followed it.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Transition {
    /// Index of the meal step in the source stream.
    pub t_index: usize,
    pub meal_id: u32,
    /// Pre-meal BG, mg/dL.
    pub bg: f64,
    /// Carbohydrate eaten, grams.
    pub cho: f64,
    /// Bolus taken, units.
    pub ins: f64,
    pub reward: f64,
    pub next_meal_id: u32,
    pub next_bg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// `eta_k = eta_0 / sqrt(k)` for update `k = 1, 2, ...`.
    InvSqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub grid: FeatureGrid,
    pub gamma: f64,
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Updates between refreshes of the frozen target coefficients.
    pub freeze_period: usize,
    pub total_updates: usize,
    pub action_grid_size: usize,
    /// Approximate initial Q level: every coefficient starts at
    /// `init_q / grid mass`.
    pub init_q: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            grid: FeatureGrid::default(),
            gamma: 0.9,
            learning_rate: 0.01,
            schedule: LrSchedule::InvSqrt,
            replay_capacity: 50_000,
            batch_size: 64,
            freeze_period: 500,
            total_updates: 200_000,
            action_grid_size: 121,
            init_q: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        for (name, v) in [
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("freeze_period", self.freeze_period),
            ("total_updates", self.total_updates),
        ] {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        if self.action_grid_size < 2 {
            return Err(Error::InvalidInput("action_grid_size must be at least 2".into()));
        }
        if !self.init_q.is_finite() {
            return Err(Error::InvalidInput("init_q must be finite".into()));
        }
        Ok(())
    }

    fn step_size(&self, update: usize) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::InvSqrt => self.learning_rate / (update as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TdStats {
    pub applied: usize,
    pub skipped: usize,
    pub mean_abs_td_error: f64,
}

/// Fraction of a batch that may carry non-finite targets before the update
/// is treated as a training failure.
const MAX_SKIPPED_FRACTION: f64 = 0.01;

struct Prepared<'a> {
    meal_index: usize,
    features: &'a [f64],
    target: f64,
}

/// Applies one batch of semi-gradient TD steps, all errors computed against
/// the coefficients as they were on entry.
fn apply_batch(model: &mut QModel, items: &[Prepared<'_>], eta: f64) -> Result<TdStats> {
    let mut deltas = Vec::with_capacity(items.len());
    let mut skipped = 0;
    for item in items {
        if !item.target.is_finite() {
            skipped += 1;
            deltas.push(None);
            continue;
        }
        let q = super::model::dot(model.alpha_at(item.meal_index), item.features);
        deltas.push(Some(item.target - q));
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} transitions with non-finite targets");
        if skipped as f64 > MAX_SKIPPED_FRACTION * items.len() as f64 {
            return Err(Error::Training(format!(
                "{skipped} of {} transitions in a batch had non-finite targets",
                items.len()
            )));
        }
    }
    let mut abs_sum = 0.0;
    for (item, delta) in items.iter().zip(&deltas) {
        let Some(delta) = *delta else { continue };
        abs_sum += delta.abs();
        let step = eta * delta;
        for (a, f) in model.alpha_at_mut(item.meal_index).iter_mut().zip(item.features) {
            *a += step * f;
        }
    }
    let applied = items.len() - skipped;
    Ok(TdStats {
        applied,
        skipped,
        mean_abs_td_error: if applied > 0 { abs_sum / applied as f64 } else { 0.0 },
    })
}

fn bellman_target(t: &Transition, frozen: &QModel, actions: &ActionGrid, gamma: f64) -> Result<f64> {
    Ok(t.reward + gamma * frozen.max_q(t.next_meal_id, t.next_bg, actions)?)
}

/// One TD step on `batch` with targets bootstrapped from `frozen`:
/// `alpha[meal] += eta * (y - Q(s, a)) * phi(BG, INS)` where
/// `y = reward + gamma * max_a' Q_frozen(s', a')`. Uses
/// `config.learning_rate` as the step size.
pub fn td_update(model: &QModel, frozen: &QModel, batch: &[Transition], config: &TrainConfig) -> Result<(QModel, TdStats)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("TD batch is empty".into()));
    }
    if frozen.grid() != model.grid() {
        return Err(Error::InvalidInput("frozen model uses a different feature grid".into()));
    }
    let actions = ActionGrid::new(model.grid(), config.action_grid_size)?;
    let features: Vec<Vec<f64>> = batch.iter().map(|t| model.grid().features(t.bg, t.ins)).collect();
    let mut items = Vec::with_capacity(batch.len());
    for (t, f) in batch.iter().zip(&features) {
        items.push(Prepared {
            meal_index: model.index_of(t.meal_id)?,
            features: f,
            target: bellman_target(t, frozen, &actions, config.gamma)?,
        });
    }
    let mut next = model.clone();
    let stats = apply_batch(&mut next, &items, config.learning_rate)?;
    Ok((next, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Number of updates completed.
    pub update: usize,
    pub mean_abs_td_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: QModel,
    /// Mean |TD error| per block of 1000 updates.
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    /// CSV with header `update,mean_abs_td_error`.
    pub fn write_curve_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["update", "mean_abs_td_error"])?;
        for p in &self.curve {
            w.serialize((p.update, p.mean_abs_td_error))?;
        }
        w.flush()?;
        Ok(())
    }
}

const CURVE_BLOCK: usize = 1000;
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Fitted Q-iteration with replay memory and frozen targets.
pub fn train(dataset: &[Transition], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.len() < config.batch_size {
        return Err(Error::InvalidInput(format!(
            "dataset has {} transitions, fewer than the batch size {}",
            dataset.len(),
            config.batch_size
        )));
    }
    for t in dataset {
        if !(t.bg.is_finite() && t.next_bg.is_finite() && t.ins.is_finite() && t.ins >= 0.0 && t.reward.is_finite()) {
            return Err(Error::InvalidInput(format!("malformed transition at t_index {}", t.t_index)));
        }
    }
    let grid = &config.grid;
    let mut meal_ids: Vec<u32> = dataset.iter().flat_map(|t| [t.meal_id, t.next_meal_id]).collect();
    meal_ids.sort_unstable();
    meal_ids.dedup();

    let mut model = QModel::filled(grid.clone(), &meal_ids, config.init_q / grid.feature_mass())?;
    let actions = ActionGrid::new(grid, config.action_grid_size)?;

    let meal_index: Vec<usize> = dataset.iter().map(|t| model.index_of(t.meal_id)).collect::<Result<_>>()?;
    let next_index: Vec<usize> = dataset.iter().map(|t| model.index_of(t.next_meal_id)).collect::<Result<_>>()?;
    let features: Vec<Vec<f64>> = dataset.iter().map(|t| grid.features(t.bg, t.ins)).collect();
    let next_bg_phi: Vec<Vec<f64>> = dataset.iter().map(|t| grid.bg_axis().eval(t.next_bg)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let replay: Vec<usize> = (0..config.replay_capacity).map(|_| rng.random_range(0..dataset.len())).collect();

    let mut frozen = model.clone();
    // Targets only change when the frozen coefficients do.
    let mut target_cache: Vec<Option<f64>> = vec![None; dataset.len()];
    let mut curve = Vec::with_capacity(config.total_updates / CURVE_BLOCK + 1);
    let mut block_err = 0.0;
    let mut block_n = 0usize;
    let mut batch_idx = Vec::with_capacity(config.batch_size);

    for update in 1..=config.total_updates {
        if update > 1 && (update - 1) % config.freeze_period == 0 {
            frozen = model.clone();
            target_cache.iter_mut().for_each(|c| *c = None);
        }
        batch_idx.clear();
        batch_idx.extend((0..config.batch_size).map(|_| replay[rng.random_range(0..replay.len())]));
        let mut items = Vec::with_capacity(batch_idx.len());
        for &j in &batch_idx {
            let target = *target_cache[j].get_or_insert_with(|| {
                let t = &dataset[j];
                t.reward + config.gamma * actions.argmax(frozen.alpha_at(next_index[j]), &next_bg_phi[j]).1
            });
            items.push(Prepared {
                meal_index: meal_index[j],
                features: &features[j],
                target,
            });
        }
        let stats = apply_batch(&mut model, &items, config.step_size(update))?;
        block_err += stats.mean_abs_td_error;
        block_n += 1;
        if update % CURVE_BLOCK == 0 || update == config.total_updates {
            curve.push(CurvePoint {
                update,
                mean_abs_td_error: block_err / block_n as f64,
            });
            block_err = 0.0;
            block_n = 0;
        }
        let mean_abs = model.mean_abs_alpha();
        if !(mean_abs <= DIVERGENCE_LIMIT) {
            return Err(Error::Divergence { update, mean_abs });
        }
    }
    Ok(TrainOutcome { model, curve })
}

/// Reads transitions from CSV with header
/// `t_index,ID_meal,BG,CHO,INS,reward,next_ID_meal,next_BG`.
pub fn read_transitions_csv<R: std::io::Read>(input: R) -> Result<Vec<Transition>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != TRANSITION_HEADER {
        return Err(Error::parse(1, format!("unexpected transitions header `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<(usize, u32, f64, f64, f64, f64, u32, f64)>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        out.push(Transition {
            t_index: row.0,
            meal_id: row.1,
            bg: row.2,
            cho: row.3,
            ins: row.4,
            reward: row.5,
            next_meal_id: row.6,
            next_bg: row.7,
        });
    }
    Ok(out)
}

pub const TRANSITION_HEADER: [&str; 8] = ["t_index", "ID_meal", "BG", "CHO", "INS", "reward", "next_ID_meal", "next_BG"];

pub fn write_transitions_csv<W: std::io::Write>(transitions: &[Transition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRANSITION_HEADER)?;
    for t in transitions {
        w.serialize((t.t_index, t.meal_id, t.bg, t.cho, t.ins, t.reward, t.next_meal_id, t.next_bg))?;
    }
    w.flush()?;
    Ok(())
}
