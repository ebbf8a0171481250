use std::fmt::Write as _;
use std::path::Path;

use super::features::FeatureGrid;
use crate::error::{Error, Result};

/// Linear Q-function: one `B x B` coefficient matrix per meal id, applied to
/// the tensor RBF features of (BG, insulin).
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    grid: FeatureGrid,
    meal_ids: Vec<u32>,
    alpha: Vec<Vec<f64>>,
}

impl QModel {
    pub fn filled(grid: FeatureGrid, meal_ids: &[u32], value: f64) -> Result<Self> {
        let mut ids = meal_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(Error::InvalidInput("a Q-model needs at least one meal id".into()));
        }
        let alpha = vec![vec![value; grid.len()]; ids.len()];
        Ok(Self { grid, meal_ids: ids, alpha })
    }

    pub fn zeros(grid: FeatureGrid, meal_ids: &[u32]) -> Result<Self> {
        Self::filled(grid, meal_ids, 0.0)
    }

    pub fn grid(&self) -> &FeatureGrid {
        &self.grid
    }

    pub fn meal_ids(&self) -> &[u32] {
        &self.meal_ids
    }

    pub(crate) fn index_of(&self, meal_id: u32) -> Result<usize> {
        self.meal_ids.binary_search(&meal_id).map_err(|_| Error::UnknownMeal(meal_id))
    }

    /// Row-major coefficient matrix of one meal.
    pub fn alpha(&self, meal_id: u32) -> Result<&[f64]> {
        Ok(&self.alpha[self.index_of(meal_id)?])
    }

    pub fn alpha_mut(&mut self, meal_id: u32) -> Result<&mut [f64]> {
        let k = self.index_of(meal_id)?;
        Ok(&mut self.alpha[k])
    }

    pub(crate) fn alpha_at(&self, index: usize) -> &[f64] {
        &self.alpha[index]
    }

    pub(crate) fn alpha_at_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.alpha[index]
    }

    pub fn mean_abs_alpha(&self) -> f64 {
        let n = self.alpha.len() * self.grid.len();
        self.alpha.iter().flatten().map(|a| a.abs()).sum::<f64>() / n as f64
    }

    pub fn q_value(&self, meal_id: u32, bg: f64, ins: f64) -> Result<f64> {
        let alpha = self.alpha(meal_id)?;
        Ok(dot(alpha, &self.grid.features(bg, ins)))
    }

    /// Writes the model in its text format: a `key = value` header followed
    /// by `meal_id,b,b_prime,alpha` rows.
    pub fn to_text(&self) -> Result<String> {
        if self.meal_ids.is_empty() {
            return Err(Error::InvalidInput("refusing to save a model without meal ids".into()));
        }
        if let Some(bad) = self.alpha.iter().flatten().find(|a| !a.is_finite()) {
            return Err(Error::InvalidInput(format!("refusing to save non-finite coefficient {bad}")));
        }
        let (bg_lo, bg_hi) = self.grid.bg_range();
        let (ins_lo, ins_hi) = self.grid.ins_range();
        let ids = self.meal_ids.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str("# bolusrl q-model v1\n");
        let _ = writeln!(s, "B = {}", self.grid.basis());
        let _ = writeln!(s, "p = {:?}", self.grid.overlap());
        let _ = writeln!(s, "bg_range = {bg_lo:?},{bg_hi:?}");
        let _ = writeln!(s, "ins_range = {ins_lo:?},{ins_hi:?}");
        let _ = writeln!(s, "meal_ids = {ids}");
        s.push_str("meal_id,b,b_prime,alpha\n");
        let basis = self.grid.basis();
        for (id, alpha) in self.meal_ids.iter().zip(&self.alpha) {
            for (k, a) in alpha.iter().enumerate() {
                let _ = writeln!(s, "{id},{},{},{a:?}", k / basis, k % basis);
            }
        }
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut header: Vec<(usize, &str, &str)> = Vec::new();
        let mut last_line = 0;
        loop {
            let Some((line, raw)) = lines.next() else {
                return Err(Error::parse(last_line + 1, "missing `meal_id,b,b_prime,alpha` row header"));
            };
            last_line = line;
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            if raw == "meal_id,b,b_prime,alpha" {
                break;
            }
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected `key = value`, got `{raw}`")))?;
            header.push((line, k.trim(), v.trim()));
        }
        let field = |key: &str| -> Result<(usize, &str)> {
            header
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, *v))
                .ok_or_else(|| Error::parse(last_line, format!("header is missing `{key}`")))
        };
        let num = |line: usize, s: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::parse(line, format!("not a number: `{s}`")))
        };
        let pair = |key: &str| -> Result<(f64, f64)> {
            let (line, v) = field(key)?;
            let (a, b) = v.split_once(',').ok_or_else(|| Error::parse(line, format!("`{key}` needs two values")))?;
            Ok((num(line, a)?, num(line, b)?))
        };
        let (line, b) = field("B")?;
        let basis: usize = b.parse().map_err(|_| Error::parse(line, format!("bad basis count `{b}`")))?;
        let (line, p) = field("p")?;
        let overlap = num(line, p)?;
        let grid = FeatureGrid::new(basis, overlap, pair("bg_range")?, pair("ins_range")?)
            .map_err(|e| Error::parse(line, e.to_string()))?;
        let (line, ids) = field("meal_ids")?;
        let meal_ids = ids
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>().map_err(|_| Error::parse(line, format!("bad meal id `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        if meal_ids.is_empty() {
            return Err(Error::parse(line, "model has no meal ids"));
        }
        let mut model = QModel::filled(grid, &meal_ids, f64::NAN)?;
        if model.meal_ids.len() != meal_ids.len() {
            return Err(Error::parse(line, "duplicate meal ids"));
        }
        let mut seen = 0usize;
        for (line, raw) in lines {
            last_line = line;
            if raw.is_empty() {
                continue;
            }
            let cols: Vec<&str> = raw.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::parse(line, format!("expected 4 columns, got {}", cols.len())));
            }
            let parse_idx = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::parse(line, format!("bad index `{s}`")));
            let meal: u32 = cols[0].trim().parse().map_err(|_| Error::parse(line, format!("bad meal id `{}`", cols[0])))?;
            let (b, bp) = (parse_idx(cols[1])?, parse_idx(cols[2])?);
            let value = num(line, cols[3])?;
            if !value.is_finite() {
                return Err(Error::parse(line, "non-finite coefficient"));
            }
            if b >= basis || bp >= basis {
                return Err(Error::parse(line, format!("basis index out of range (B = {basis})")));
            }
            let k = model.index_of(meal).map_err(|_| Error::parse(line, format!("meal id {meal} not in header")))?;
            let slot = &mut model.alpha[k][b * basis + bp];
            if !slot.is_nan() {
                return Err(Error::parse(line, "duplicate coefficient row"));
            }
            *slot = value;
            seen += 1;
        }
        let expected = model.meal_ids.len() * model.grid.len();
        if seen != expected {
            return Err(Error::parse(
                last_line + 1,
                format!("truncated model: {seen} of {expected} coefficient rows"),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        std::fs::write(path, text).map_err(|e| Error::from(e).with_path(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_path(path))?;
        Self::from_text(&text).map_err(|e| e.with_path(path))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform dose grid over the insulin range with its precomputed insulin
/// basis values, for exact max/argmax at a declared resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    doses: Vec<f64>,
    /// `doses.len() x B`, row-major.
    ins_phi: Vec<f64>,
    basis: usize,
}

impl ActionGrid {
    pub fn new(grid: &FeatureGrid, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidInput(format!("action grid needs at least 2 points, got {points}")));
        }
        let (lo, hi) = grid.ins_range();
        let doses: Vec<f64> = (0..points)
            .map(|k| if k + 1 == points { hi } else { lo + (hi - lo) * k as f64 / (points - 1) as f64 })
            .collect();
        let mut ins_phi = Vec::with_capacity(points * grid.basis());
        for &d in &doses {
            ins_phi.extend(grid.ins_axis().eval(d));
        }
        Ok(Self {
            doses,
            ins_phi,
            basis: grid.basis(),
        })
    }

    pub fn doses(&self) -> &[f64] {
        &self.doses
    }

    /// `v[b'] = sum_b alpha[b][b'] * phi_b(bg)`: the BG-contracted coefficients.
    fn contract(alpha: &[f64], bg_phi: &[f64], basis: usize) -> Vec<f64> {
        let mut v = vec![0.0; basis];
        for (b, &w) in bg_phi.iter().enumerate() {
            for (vk, a) in v.iter_mut().zip(&alpha[b * basis..(b + 1) * basis]) {
                *vk += w * a;
            }
        }
        v
    }

    /// Best `(dose, q)` on the grid; ties go to the lowest dose.
    pub(crate) fn argmax(&self, alpha: &[f64], bg_phi: &[f64]) -> (f64, f64) {
        let v = Self::contract(alpha, bg_phi, self.basis);
        let mut best = (self.doses[0], f64::NEG_INFINITY);
        for (k, &dose) in self.doses.iter().enumerate() {
            let q = dot(&v, &self.ins_phi[k * self.basis..(k + 1) * self.basis]);
            if q > best.1 {
                best = (dose, q);
            }
        }
        best
    }
}

impl QModel {
    /// Maximum of Q over the action grid at `(meal_id, bg)`.
    pub fn max_q(&self, meal_id: u32, bg: f64, actions: &ActionGrid) -> Result<f64> {
        let alpha = self.alpha(meal_id)?;
        Ok(actions.argmax(alpha, &self.grid.bg_axis().eval(bg)).1)
    }

    /// Greedy dose on a precomputed action grid.
    pub fn greedy_dose(&self, meal_id: u32, bg: f64, actions: &ActionGrid) -> Result<f64> {
        let alpha = self.alpha(meal_id)?;
        Ok(actions.argmax(alpha, &self.grid.bg_axis().eval(bg)).0)
    }
}

/// Dose on a uniform `action_grid_size`-point grid over the insulin range
/// that maximizes Q; the lowest such dose on ties.
pub fn greedy_action(model: &QModel, meal_id: u32, bg: f64, action_grid_size: usize) -> Result<f64> {
    let actions = ActionGrid::new(model.grid(), action_grid_size)?;
    model.greedy_dose(meal_id, bg, &actions)
}

pub fn q_value(model: &QModel, meal_id: u32, bg: f64, ins: f64) -> Result<f64> {
    model.q_value(meal_id, bg, ins)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> FeatureGrid {
        FeatureGrid::default()
    }

    #[test]
    fn zero_model_is_zero() {
        let m = QModel::zeros(grid(), &[0, 1]).unwrap();
        assert_eq!(m.q_value(1, 133.0, 7.0).unwrap(), 0.0);
        assert_eq!(greedy_action(&m, 0, 200.0, 121).unwrap(), 0.0);
    }

    #[test]
    fn one_hot_coefficient() {
        let mut m = QModel::zeros(grid(), &[0]).unwrap();
        m.alpha_mut(0).unwrap()[2 * 8 + 4] = 1.0;
        let bg = m.grid().bg_axis().centers().to_vec();
        let ins = m.grid().ins_axis().centers().to_vec();
        assert!((m.q_value(0, bg[2], ins[4]).unwrap() - 1.0).abs() < 1e-15);
        assert!((m.q_value(0, bg[3], ins[4]).unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn unknown_meal() {
        let m = QModel::zeros(grid(), &[0]).unwrap();
        assert!(matches!(m.q_value(3, 100.0, 1.0), Err(Error::UnknownMeal(3))));
        assert!(greedy_action(&m, 3, 100.0, 11).is_err());
        assert!(greedy_action(&m, 0, 100.0, 1).is_err());
    }

    #[test]
    fn increasing_q_picks_max_dose() {
        let mut m = QModel::zeros(grid(), &[0]).unwrap();
        // Only the top insulin basis is weighted, so Q rises all the way to
        // the range end.
        for b in 0..8 {
            m.alpha_mut(0).unwrap()[b * 8 + 7] = 1.0;
        }
        let doses: Vec<f64> = (0..121).map(|k| 30.0 * k as f64 / 120.0).collect();
        let qs: Vec<f64> = doses.iter().map(|&d| m.q_value(0, 150.0, d).unwrap()).collect();
        assert!(qs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(greedy_action(&m, 0, 150.0, 121).unwrap(), 30.0);
    }

    #[test]
    fn concave_bump_matches_brute_force() {
        let mut m = QModel::zeros(grid(), &[0]).unwrap();
        let d_star = 11.3;
        let ins_c = m.grid().ins_axis().centers().to_vec();
        for b in 0..8 {
            for bp in 0..8 {
                m.alpha_mut(0).unwrap()[b * 8 + bp] = -(ins_c[bp] - d_star).powi(2);
            }
        }
        let got = greedy_action(&m, 0, 100.0, 121).unwrap();
        let doses: Vec<f64> = (0..121).map(|k| 30.0 * k as f64 / 120.0).collect();
        let brute = doses
            .iter()
            .copied()
            .fold((0.0, f64::NEG_INFINITY), |best, d| {
                let q = m.q_value(0, 100.0, d).unwrap();
                if q > best.1 { (d, q) } else { best }
            })
            .0;
        assert_eq!(got, brute);
        assert!((got - d_star).abs() < 2.0, "{got}");
    }

    #[test]
    fn text_round_trip() {
        let mut m = QModel::zeros(grid(), &[0, 2, 5]).unwrap();
        for (k, a) in m.alpha_mut(2).unwrap().iter_mut().enumerate() {
            *a = (k as f64).sin() * 1e3 / 7.0;
        }
        m.alpha_mut(5).unwrap()[63] = -1e-300;
        let back = QModel::from_text(&m.to_text().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn truncated_text_rejected() {
        let m = QModel::zeros(grid(), &[0, 1]).unwrap();
        let text = m.to_text().unwrap();
        let cut: String = text.lines().take(50).map(|l| format!("{l}\n")).collect();
        let err = QModel::from_text(&cut).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 51, .. }), "{err}");
        let err = QModel::from_text("B = 8\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        let bad = text.replacen("0,0,0,0.0", "0,0,0,zero", 1);
        let err = QModel::from_text(&bad).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 8, .. }), "{err}");
    }

    #[test]
    fn empty_meal_set_rejected() {
        assert!(QModel::zeros(grid(), &[]).is_err());
        let m = QModel {
            grid: grid(),
            meal_ids: vec![],
            alpha: vec![],
        };
        assert!(m.to_text().is_err());
    }
}
