//! Blood-glucose reward: the negated, squared logarithmic risk transform.
//!
//! `f(bg) = c1 * ((ln bg)^c2 - c3)` vanishes at 112.5 mg/dL and takes values
//! of roughly equal magnitude at 20 and 600 mg/dL, so the reward
//! `-scale * 10 * f(bg)^2` peaks at zero in the ideal range and reaches about
//! -100 at either clinical extreme.

use crate::error::{Error, Result};

/// Glucose level at which the reward is maximal (zero).
pub const IDEAL_BG: f64 = 112.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub scale: f64,
    pub bg_floor: f64,
    pub bg_cap: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            c1: 1.509,
            c2: 1.084,
            c3: 5.381,
            scale: 1.0,
            bg_floor: 10.0,
            bg_cap: 600.0,
        }
    }
}

impl RewardParams {
    pub fn with_scale(scale: f64) -> Result<Self> {
        let params = Self {
            scale,
            ..Self::default()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "reward scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.bg_floor > 0.0 && self.bg_floor < self.bg_cap) {
            return Err(Error::InvalidInput(format!(
                "reward clamp [{}, {}] is not a positive interval",
                self.bg_floor, self.bg_cap
            )));
        }
        Ok(())
    }

    /// Symmetrized risk transform; zero at the ideal level.
    pub fn risk_transform(&self, bg: f64) -> f64 {
        let bg = bg.clamp(self.bg_floor, self.bg_cap);
        self.c1 * (bg.ln().powf(self.c2) - self.c3)
    }
}

/// Reward for one BG reading. Readings outside `[bg_floor, bg_cap]` are
/// clamped first.
pub fn risk_reward(bg: f64, params: &RewardParams) -> Result<f64> {
    if !bg.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite BG reading {bg}")));
    }
    let f = params.risk_transform(bg);
    Ok(-params.scale * 10.0 * f * f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reward(bg: f64) -> f64 {
        risk_reward(bg, &RewardParams::default()).unwrap()
    }

    #[test]
    fn zero_at_ideal_level() {
        assert!(reward(IDEAL_BG).abs() < 1e-6);
    }

    #[test]
    fn reference_levels_near_minus_100() {
        assert!((reward(20.0) + 100.0).abs() < 0.5, "{}", reward(20.0));
        assert!((reward(600.0) + 100.0).abs() < 0.5, "{}", reward(600.0));
    }

    #[test]
    fn clamps_outside_range() {
        assert_eq!(reward(5.0), reward(10.0));
        assert_eq!(reward(700.0), reward(600.0));
    }

    #[test]
    fn unimodal_on_integer_grid() {
        let mut prev = reward(10.0);
        for bg in 11..=112 {
            let r = reward(bg as f64);
            assert!(r > prev, "not increasing at {bg}");
            prev = r;
        }
        let mut prev = reward(113.0);
        assert!(prev < 0.0);
        for bg in 114..=600 {
            let r = reward(bg as f64);
            assert!(r < prev, "not decreasing at {bg}");
            prev = r;
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(risk_reward(f64::NAN, &RewardParams::default()).is_err());
        assert!(risk_reward(f64::INFINITY, &RewardParams::default()).is_err());
    }

    #[test]
    fn scale_is_multiplicative() {
        let doubled = RewardParams::with_scale(2.0).unwrap();
        let r = risk_reward(200.0, &doubled).unwrap();
        assert!((r - 2.0 * reward(200.0)).abs() < 1e-12);
        assert!(RewardParams::with_scale(0.0).is_err());
    }
}
