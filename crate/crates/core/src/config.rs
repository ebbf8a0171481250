//! Experiment configuration: flat `section.key = value` text.
//!
//! Every key has a default except `seed`, which must be given explicitly.
//! Relative paths are resolved against the working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::advisor::{AdvisorParams, CalibrationGrid};
use crate::error::{Error, KeyIssue, Result};
use crate::glucosim::{load_presets, default_presets, MealScenario, SimOptions, VirtualPatient};
use crate::kvtext;
use crate::pipeline::{RewardAggregate, RewardOptions};
use crate::qlearn::{FeatureGrid, LrSchedule, TrainConfig};
use crate::riskmodel::RewardParams;

/// Policy evaluated by the `evaluate` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalPolicy {
    Baseline,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub patient: VirtualPatient,
    pub scenario: MealScenario,
    pub calibration: CalibrationGrid,
    pub train: TrainConfig,
    pub explore_days: usize,
    pub eval_days: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub reward: RewardOptions,
    pub sim: SimOptions,
    /// Transitions CSV consumed by the `train` subcommand.
    pub dataset: Option<PathBuf>,
    pub eval_policy: EvalPolicy,
    /// Model file consumed by `evaluate` with the learned policy.
    pub eval_model: Option<PathBuf>,
    /// Fixed advisor coefficients for `evaluate` with the baseline policy;
    /// when absent the advisor is calibrated first.
    pub advisor: Option<AdvisorParams>,
}

/// Seeds of the individual stages, derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub calibrate: u64,
    pub explore: u64,
    pub train: u64,
    pub evaluate: u64,
}

impl ExperimentConfig {
    pub fn stage_seeds(&self) -> StageSeeds {
        StageSeeds {
            calibrate: self.seed,
            explore: self.seed.wrapping_add(1),
            train: self.seed.wrapping_add(2),
            evaluate: self.seed.wrapping_add(3),
        }
    }

    /// Parses config text, applies `overrides` (`key`, `value`) on top and
    /// validates the result. All problems are reported together.
    pub fn from_text(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let sections = kvtext::parse(text)?;
        let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for section in sections {
            if !section.name.is_empty() {
                return Err(Error::parse(section.line, "sections are not used in experiment configs; write `section.key = value`"));
            }
            for e in section.entries {
                values.insert(e.key, (e.line, e.value));
            }
        }
        for (k, v) in overrides {
            values.insert(k.clone(), (0, v.clone()));
        }
        Reader::new(values).finish()
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_path(path))?;
        Self::from_text(&text, overrides).map_err(|e| e.with_path(path))
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "output.dir",
    "patient.id",
    "patient.presets",
    "scenario.meals",
    "scenario.file",
    "calibration.cir_points",
    "calibration.cf_points",
    "calibration.target_points",
    "calibration.eval_days",
    "explore.days",
    "evaluate.days",
    "evaluate.policy",
    "evaluate.model",
    "advisor.CIR",
    "advisor.CF",
    "advisor.BG_target",
    "train.dataset",
    "train.gamma",
    "train.learning_rate",
    "train.lr_schedule",
    "train.replay_capacity",
    "train.batch_size",
    "train.freeze_period",
    "train.total_updates",
    "train.action_grid_size",
    "train.basis",
    "train.overlap",
    "train.bg_min",
    "train.bg_max",
    "train.ins_max",
    "train.init_q",
    "reward.scale",
    "reward.aggregate",
    "sim.meter_noise_cv",
];

struct Reader {
    values: BTreeMap<String, (usize, String)>,
    issues: Vec<KeyIssue>,
}

impl Reader {
    fn new(values: BTreeMap<String, (usize, String)>) -> Self {
        let mut issues = Vec::new();
        for (key, (line, _)) in &values {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                issues.push(KeyIssue::new(key, at(*line, "unknown key")));
            }
        }
        Self { values, issues }
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn issue(&mut self, key: &str, message: impl Into<String>) {
        let line = self.raw(key).map_or(0, |(l, _)| *l);
        self.issues.push(KeyIssue::new(key, at(line, &message.into())));
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Option<T> {
        let (_, v) = self.raw(key)?.clone();
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.issue(key, format!("cannot parse `{v}`"));
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T {
        self.opt(key).unwrap_or(default)
    }

    fn positive(&mut self, key: &str, default: usize) -> usize {
        let v = self.get(key, default);
        if v == 0 {
            self.issue(key, "must be positive");
        }
        v.max(1)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let (_, v) = self.raw(key)?.clone();
        if v.is_empty() {
            self.issue(key, "empty path");
            return None;
        }
        Some(PathBuf::from(v))
    }

    fn existing_file(&mut self, key: &str) -> Option<PathBuf> {
        let p = self.path(key)?;
        if !p.is_file() {
            self.issue(key, format!("file `{}` does not exist", p.display()));
            return None;
        }
        Some(p)
    }

    fn finish(mut self) -> Result<ExperimentConfig> {
        let seed = match self.raw("seed") {
            None => {
                self.issues.push(KeyIssue::new("seed", "missing; seeds must be explicit"));
                0
            }
            Some(_) => self.get("seed", 0u64),
        };
        let output_dir = self.path("output.dir").unwrap_or_else(|| PathBuf::from("out"));

        let patient_id: u32 = self.get("patient.id", 1);
        let presets = match self.existing_file("patient.presets") {
            Some(p) => match load_presets(&p) {
                Ok(ps) => ps,
                Err(e) => {
                    self.issue("patient.presets", e.to_string());
                    Vec::new()
                }
            },
            None => default_presets(),
        };
        let patient = presets.iter().find(|p| p.id == patient_id).cloned();
        if patient.is_none() && !self.issues.iter().any(|i| i.key == "patient.presets") {
            self.issue("patient.id", format!("no patient with id {patient_id} in the presets"));
        }

        let scenario = match (self.raw("scenario.meals").is_some(), self.raw("scenario.file").is_some()) {
            (true, true) => {
                self.issue("scenario.file", "give either scenario.meals or scenario.file, not both");
                None
            }
            (false, true) => self.existing_file("scenario.file").and_then(|p| match MealScenario::load_csv(&p) {
                Ok(s) => Some(s),
                Err(e) => {
                    self.issue("scenario.file", e.to_string());
                    None
                }
            }),
            (true, false) => {
                let text = self.raw("scenario.meals").map(|(_, v)| v.clone()).unwrap_or_default();
                match MealScenario::parse_inline(&text) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        self.issue("scenario.meals", e.to_string());
                        None
                    }
                }
            }
            (false, false) => Some(MealScenario::default()),
        };

        let calibration = CalibrationGrid::uniform(
            self.positive("calibration.cir_points", 10),
            self.positive("calibration.cf_points", 10),
            self.positive("calibration.target_points", 6),
            self.positive("calibration.eval_days", 14),
        );
        let explore_days = self.positive("explore.days", 365);
        let eval_days = self.positive("evaluate.days", 45);

        let eval_policy = match self.raw("evaluate.policy").map(|(_, v)| v.clone()).as_deref() {
            None | Some("baseline") => EvalPolicy::Baseline,
            Some("learned") => EvalPolicy::Learned,
            Some(other) => {
                self.issue("evaluate.policy", format!("expected baseline|learned, got `{other}`"));
                EvalPolicy::Baseline
            }
        };
        let eval_model = self.path("evaluate.model");
        let dataset = self.path("train.dataset");

        let advisor = match (self.opt::<f64>("advisor.CIR"), self.opt::<f64>("advisor.CF"), self.opt::<f64>("advisor.BG_target")) {
            (None, None, None) => None,
            (Some(cir), Some(cf), Some(target)) => match AdvisorParams::new(cir, cf, target) {
                Ok(p) => Some(p),
                Err(e) => {
                    self.issue("advisor.CIR", e.to_string());
                    None
                }
            },
            _ => {
                for key in ["advisor.CIR", "advisor.CF", "advisor.BG_target"] {
                    if self.raw(key).is_none() {
                        self.issue(key, "missing; advisor coefficients must be given together");
                    }
                }
                None
            }
        };

        let basis = self.positive("train.basis", 8);
        let overlap = self.get("train.overlap", 0.2);
        let bg_range = (self.get("train.bg_min", 40.0), self.get("train.bg_max", 600.0));
        let ins_max = self.get("train.ins_max", 30.0);
        let grid = match FeatureGrid::new(basis, overlap, bg_range, (0.0, ins_max)) {
            Ok(g) => g,
            Err(e) => {
                self.issue("train.basis", e.to_string());
                FeatureGrid::default()
            }
        };
        let schedule = match self.raw("train.lr_schedule").map(|(_, v)| v.clone()).as_deref() {
            None | Some("inv_sqrt") => LrSchedule::InvSqrt,
            Some("constant") => LrSchedule::Constant,
            Some(other) => {
                self.issue("train.lr_schedule", format!("expected inv_sqrt|constant, got `{other}`"));
                LrSchedule::InvSqrt
            }
        };
        let train = TrainConfig {
            grid,
            gamma: self.get("train.gamma", 0.9),
            learning_rate: self.get("train.learning_rate", 0.01),
            schedule,
            replay_capacity: self.positive("train.replay_capacity", 50_000),
            batch_size: self.positive("train.batch_size", 64),
            freeze_period: self.positive("train.freeze_period", 500),
            total_updates: self.positive("train.total_updates", 200_000),
            action_grid_size: self.get("train.action_grid_size", 121),
            init_q: self.get("train.init_q", 0.0),
            seed: seed.wrapping_add(2),
        };
        if !(train.gamma > 0.0 && train.gamma < 1.0) {
            self.issue("train.gamma", format!("must lie in (0, 1), got {}", train.gamma));
        } else if !(train.learning_rate > 0.0 && train.learning_rate.is_finite()) {
            self.issue("train.learning_rate", format!("must be > 0, got {}", train.learning_rate));
        } else if train.action_grid_size < 2 {
            self.issue("train.action_grid_size", "must be at least 2");
        } else if !train.init_q.is_finite() {
            self.issue("train.init_q", "must be finite");
        } else if let Err(e) = train.validate() {
            self.issue("train", e.to_string());
        }

        let scale = self.get("reward.scale", 1.0);
        let params = match RewardParams::with_scale(scale) {
            Ok(p) => p,
            Err(e) => {
                self.issue("reward.scale", e.to_string());
                RewardParams::default()
            }
        };
        let aggregate = match self.raw("reward.aggregate").map(|(_, v)| v.clone()) {
            None => RewardAggregate::NextReading,
            Some(v) => v.parse().unwrap_or_else(|e: Error| {
                self.issue("reward.aggregate", e.to_string());
                RewardAggregate::NextReading
            }),
        };
        let meter_noise_cv = self.get("sim.meter_noise_cv", 0.0);
        if !(meter_noise_cv >= 0.0 && meter_noise_cv < 1.0) {
            self.issue("sim.meter_noise_cv", "must lie in [0, 1)");
        }

        if !self.issues.is_empty() {
            return Err(Error::Config(self.issues));
        }
        Ok(ExperimentConfig {
            patient: patient.expect("checked above"),
            scenario: scenario.expect("checked above"),
            calibration,
            train,
            explore_days,
            eval_days,
            seed,
            output_dir,
            reward: RewardOptions { params, aggregate },
            sim: SimOptions {
                substeps: 1,
                meter_noise_cv,
            },
            dataset,
            eval_policy,
            eval_model,
            advisor,
        })
    }
}

fn at(line: usize, message: &str) -> String {
    if line == 0 {
        message.to_string()
    } else {
        format!("{message} (line {line})")
    }
}

/// Checks that a path-valued key used by a subcommand is set and exists.
pub fn require_file(key: &str, path: Option<&Path>) -> Result<PathBuf> {
    match path {
        None => Err(Error::Config(vec![KeyIssue::new(key, "missing; required by this subcommand")])),
        Some(p) if !p.is_file() => Err(Error::Config(vec![KeyIssue::new(key, format!("file `{}` does not exist", p.display()))])),
        Some(p) => Ok(p.to_path_buf()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_text("seed = 7\n", &[]).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.patient.id, 1);
        assert_eq!(c.scenario, MealScenario::default());
        assert_eq!(c.calibration, CalibrationGrid::default());
        assert_eq!(c.explore_days, 365);
        assert_eq!(c.eval_days, 45);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.train.grid, FeatureGrid::default());
        assert_eq!(c.reward, RewardOptions::default());
        assert_eq!(c.stage_seeds().evaluate, 10);
    }

    #[test]
    fn overrides_win() {
        let c = ExperimentConfig::from_text(
            "seed = 7\npatient.id = 2\n",
            &[("seed".into(), "11".into()), ("patient.id".into(), "3".into())],
        )
        .unwrap();
        assert_eq!((c.seed, c.patient.id), (11, 3));
    }

    #[test]
    fn every_bad_key_is_listed() {
        let text = "seed = x\ntrain.gamma = 1.5\nbogus.key = 1\nreward.aggregate = sum\npatient.id = 9\nexplore.days = 0\n";
        let Err(Error::Config(issues)) = ExperimentConfig::from_text(text, &[]) else { panic!() };
        let keys: Vec<&str> = issues.iter().map(|i| i.key.as_str()).collect();
        for k in ["seed", "train.gamma", "bogus.key", "reward.aggregate", "patient.id", "explore.days"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn seed_is_required() {
        let Err(Error::Config(issues)) = ExperimentConfig::from_text("patient.id = 1\n", &[]) else { panic!() };
        assert_eq!(issues[0].key, "seed");
    }

    #[test]
    fn missing_files_are_config_errors() {
        let Err(Error::Config(issues)) = ExperimentConfig::from_text("seed = 1\nscenario.file = /no/such/file.csv\n", &[]) else { panic!() };
        assert_eq!(issues[0].key, "scenario.file");
        let err = require_file("train.dataset", None).unwrap_err();
        assert!(err.to_string().contains("train.dataset"));
    }

    #[test]
    fn advisor_keys_go_together() {
        let c = ExperimentConfig::from_text("seed = 1\nadvisor.CIR = 10\nadvisor.CF = 2\nadvisor.BG_target = 120\n", &[]).unwrap();
        assert_eq!(c.advisor, Some(AdvisorParams { cir: 10.0, cf: 2.0, bg_target: 120.0 }));
        let Err(Error::Config(issues)) = ExperimentConfig::from_text("seed = 1\nadvisor.CIR = 10\n", &[]) else { panic!() };
        assert_eq!(issues.len(), 2);
    }

    #[test]
    fn inline_scenario() {
        let c = ExperimentConfig::from_text("seed = 1\nscenario.meals = 420:30, 1080:70\n", &[]).unwrap();
        assert_eq!(c.scenario.meals_per_day(), 2);
    }
}
