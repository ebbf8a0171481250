use std::path::Path;

use crate::error::{Error, KeyIssue, Result};
use crate::kvtext;

/// Physiological parameters of one simulated adult plus the reference bolus
/// coefficients a clinician would start from.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPatient {
    pub id: u32,
    /// Fasting basal glucose, mg/dL.
    pub gb: f64,
    /// Basal plasma insulin, mU/L.
    pub ib: f64,
    /// Glucose effectiveness, 1/min.
    pub p1: f64,
    /// Remote insulin action decay, 1/min.
    pub p2: f64,
    /// Remote insulin action gain, L/(mU·min²).
    pub p3: f64,
    /// Subcutaneous absorption time constant, min.
    pub tau_i: f64,
    /// Insulin distribution volume, L.
    pub v_i: f64,
    /// Plasma insulin clearance, 1/min.
    pub n: f64,
    /// Gut absorption time constant, min.
    pub tau_m: f64,
    /// Carbohydrate bioavailability in (0, 1].
    pub f_bio: f64,
    /// Glucose distribution volume, dL.
    pub v_g: f64,
    /// Reference carbohydrate-to-insulin ratio, g/U.
    pub ref_cir: f64,
    /// Reference correction factor, mg/dL per U.
    pub ref_cf: f64,
    /// Constant basal insulin, U/h.
    pub basal_rate: f64,
}

/// Relative tolerance for basal delivery matching insulin clearance at `ib`.
const BASAL_BALANCE_RTOL: f64 = 1e-9;

/// Built-in presets for the three default adults.
pub const DEFAULT_PRESETS: &str = include_str!("../../presets/patients.cfg");

impl VirtualPatient {
    /// Basal insulin delivery in mU/min.
    pub fn basal_mu_per_min(&self) -> f64 {
        self.basal_rate * 1000.0 / 60.0
    }

    /// Basal rate (U/h) whose delivery exactly offsets clearance at `ib`.
    pub fn balanced_basal_rate(n: f64, v_i: f64, ib: f64) -> f64 {
        n * v_i * ib * 60.0 / 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    fn issues(&self) -> Vec<KeyIssue> {
        let mut issues = Vec::new();
        let positive = [
            ("Ib", self.ib),
            ("p1", self.p1),
            ("p2", self.p2),
            ("p3", self.p3),
            ("tau_I", self.tau_i),
            ("V_I", self.v_i),
            ("n", self.n),
            ("tau_m", self.tau_m),
            ("V_g", self.v_g),
            ("ref_CIR", self.ref_cir),
            ("ref_CF", self.ref_cf),
            ("basal_rate", self.basal_rate),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                issues.push(KeyIssue::new(key, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.gb > 40.0 && self.gb < 180.0) {
            issues.push(KeyIssue::new("Gb", format!("must lie in (40, 180), got {}", self.gb)));
        }
        if !(self.f_bio > 0.0 && self.f_bio <= 1.0) {
            issues.push(KeyIssue::new("f_bio", format!("must lie in (0, 1], got {}", self.f_bio)));
        }
        if issues.is_empty() {
            let balanced = Self::balanced_basal_rate(self.n, self.v_i, self.ib);
            if (self.basal_rate - balanced).abs() > BASAL_BALANCE_RTOL * balanced {
                issues.push(KeyIssue::new(
                    "basal_rate",
                    format!("must equal n*V_I*Ib*60/1000 = {balanced} U/h so that basal delivery offsets clearance at Ib"),
                ));
            }
        }
        issues
    }

    fn from_section(section: &kvtext::Section) -> Result<Self> {
        let mut issues = Vec::new();
        let mut num = |key: &str| -> f64 {
            match section.get(key) {
                None => {
                    issues.push(KeyIssue::new(format!("{}.{key}", section.name), "missing"));
                    f64::NAN
                }
                Some(entry) => entry.value.parse::<f64>().unwrap_or_else(|_| {
                    issues.push(KeyIssue::new(
                        format!("{}.{key}", section.name),
                        format!("line {}: not a number: `{}`", entry.line, entry.value),
                    ));
                    f64::NAN
                }),
            }
        };
        let id = num("id");
        let patient = VirtualPatient {
            id: id as u32,
            gb: num("Gb"),
            ib: num("Ib"),
            p1: num("p1"),
            p2: num("p2"),
            p3: num("p3"),
            tau_i: num("tau_I"),
            v_i: num("V_I"),
            n: num("n"),
            tau_m: num("tau_m"),
            f_bio: num("f_bio"),
            v_g: num("V_g"),
            ref_cir: num("ref_CIR"),
            ref_cf: num("ref_CF"),
            basal_rate: num("basal_rate"),
        };
        if id.is_finite() && (id < 0.0 || id.fract() != 0.0) {
            issues.push(KeyIssue::new(format!("{}.id", section.name), "must be a nonnegative integer"));
        }
        for key in section.entries.iter().map(|e| e.key.as_str()) {
            if !PRESET_KEYS.contains(&key) {
                issues.push(KeyIssue::new(format!("{}.{key}", section.name), "unknown key"));
            }
        }
        if issues.is_empty() {
            issues.extend(patient.issues().into_iter().map(|i| KeyIssue {
                key: format!("{}.{}", section.name, i.key),
                message: i.message,
            }));
        }
        if issues.is_empty() {
            Ok(patient)
        } else {
            Err(Error::Config(issues))
        }
    }

    /// Renders this patient as one preset section.
    pub fn to_preset_section(&self, name: &str) -> String {
        format!(
            "[{name}]\nid = {}\nGb = {}\nIb = {}\np1 = {}\np2 = {}\np3 = {}\ntau_I = {}\nV_I = {}\nn = {}\ntau_m = {}\nf_bio = {}\nV_g = {}\nref_CIR = {}\nref_CF = {}\nbasal_rate = {}\n",
            self.id,
            self.gb,
            self.ib,
            self.p1,
            self.p2,
            self.p3,
            self.tau_i,
            self.v_i,
            self.n,
            self.tau_m,
            self.f_bio,
            self.v_g,
            self.ref_cir,
            self.ref_cf,
            self.basal_rate
        )
    }
}

const PRESET_KEYS: [&str; 15] = [
    "id", "Gb", "Ib", "p1", "p2", "p3", "tau_I", "V_I", "n", "tau_m", "f_bio", "V_g", "ref_CIR",
    "ref_CF", "basal_rate",
];

/// Parses a presets file: one `[section]` per adult.
pub fn parse_presets(text: &str) -> Result<Vec<VirtualPatient>> {
    let sections = kvtext::parse(text)?;
    let mut patients = Vec::with_capacity(sections.len());
    let mut issues = Vec::new();
    for section in &sections {
        if section.name.is_empty() {
            let line = section.entries.first().map_or(1, |e| e.line);
            return Err(Error::parse(line, "patient keys must follow a [section] header"));
        }
        match VirtualPatient::from_section(section) {
            Ok(p) => {
                if patients.iter().any(|q: &VirtualPatient| q.id == p.id) {
                    issues.push(KeyIssue::new(format!("{}.id", section.name), format!("duplicate patient id {}", p.id)));
                }
                patients.push(p)
            }
            Err(Error::Config(mut more)) => issues.append(&mut more),
            Err(e) => return Err(e),
        }
    }
    if !issues.is_empty() {
        return Err(Error::Config(issues));
    }
    if patients.is_empty() {
        return Err(Error::parse(1, "no patient sections"));
    }
    Ok(patients)
}

pub fn load_presets(path: &Path) -> Result<Vec<VirtualPatient>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_path(path))?;
    parse_presets(&text).map_err(|e| e.with_path(path))
}

pub fn default_presets() -> Vec<VirtualPatient> {
    parse_presets(DEFAULT_PRESETS).expect("built-in presets are valid")
}

/// Looks up one of the built-in adults (ids 1, 2, 3).
pub fn preset(id: u32) -> Option<VirtualPatient> {
    default_presets().into_iter().find(|p| p.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_presets_parse() {
        let patients = default_presets();
        assert_eq!(patients.iter().map(|p| p.id).collect::<Vec<_>>(), vec![1, 2, 3]);
        for p in &patients {
            p.validate().unwrap();
        }
    }

    #[test]
    fn preset_round_trip() {
        let p = preset(2).unwrap();
        let parsed = parse_presets(&p.to_preset_section("adult2")).unwrap();
        assert_eq!(parsed, vec![p]);
    }

    #[test]
    fn reports_each_bad_key() {
        let mut text = preset(1).unwrap().to_preset_section("a");
        text = text.replace("f_bio = ", "f_bio = 1.5 #").replace("p2 = ", "p2 = x #");
        let text = text.replace(" #", "\n# ");
        let err = parse_presets(&text).unwrap_err();
        let Error::Config(issues) = err else { panic!("{err}") };
        assert!(issues.iter().any(|i| i.key == "a.p2"), "{issues:?}");
    }

    #[test]
    fn unbalanced_basal_rejected() {
        let mut p = preset(1).unwrap();
        p.basal_rate *= 1.01;
        let Err(Error::Config(issues)) = p.validate() else { panic!() };
        assert_eq!(issues[0].key, "basal_rate");
    }

    #[test]
    fn out_of_range_fields_rejected() {
        let mut p = preset(1).unwrap();
        p.f_bio = 0.0;
        p.gb = 200.0;
        p.tau_m = -1.0;
        let Err(Error::Config(issues)) = p.validate() else { panic!() };
        let keys: Vec<_> = issues.iter().map(|i| i.key.as_str()).collect();
        assert!(keys.contains(&"f_bio") && keys.contains(&"Gb") && keys.contains(&"tau_m"), "{keys:?}");
    }
}
