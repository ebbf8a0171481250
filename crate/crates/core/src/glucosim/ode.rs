//! Minimal-model glucose dynamics with two-compartment gut and
//! subcutaneous-insulin absorption, integrated with classical RK4.

use super::patient::VirtualPatient;
use crate::error::{Error, Result};

pub const BG_MIN: f64 = 10.0;
pub const BG_MAX: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Plasma glucose, mg/dL.
    pub g: f64,
    /// Remote insulin action, 1/min.
    pub x: f64,
    /// Plasma insulin, mU/L.
    pub i: f64,
    /// Gut carbohydrate compartments, mg.
    pub q1: f64,
    pub q2: f64,
    /// Subcutaneous insulin depots, mU.
    pub s1: f64,
    pub s2: f64,
    /// Simulation clock, min.
    pub t: f64,
}

/// Time derivatives of the dynamic fields of [`SimState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Derivatives {
    pub g: f64,
    pub x: f64,
    pub i: f64,
    pub q1: f64,
    pub q2: f64,
    pub s1: f64,
    pub s2: f64,
}

impl Derivatives {
    pub fn max_abs(&self) -> f64 {
        [self.g, self.x, self.i, self.q1, self.q2, self.s1, self.s2]
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl SimState {
    /// Fasting fixed point: glucose and insulin at basal, empty gut, depots
    /// carrying the steady basal flux.
    pub fn equilibrium(patient: &VirtualPatient) -> Self {
        let depot = patient.basal_mu_per_min() * patient.tau_i;
        SimState {
            g: patient.gb,
            x: 0.0,
            i: patient.ib,
            q1: 0.0,
            q2: 0.0,
            s1: depot,
            s2: depot,
            t: 0.0,
        }
    }

    fn fields(&self) -> [f64; 8] {
        [self.g, self.x, self.i, self.q1, self.q2, self.s1, self.s2, self.t]
    }

    fn check_finite(&self) -> Result<()> {
        const NAMES: [&str; 8] = ["G", "X", "I", "Q1", "Q2", "S1", "S2", "t"];
        match self.fields().iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::InvalidState(format!(
                "{} is not finite ({})",
                NAMES[k],
                self.fields()[k]
            ))),
            None => Ok(()),
        }
    }

    fn offset(&self, d: &Derivatives, h: f64) -> SimState {
        SimState {
            g: self.g + h * d.g,
            x: self.x + h * d.x,
            i: self.i + h * d.i,
            q1: self.q1 + h * d.q1,
            q2: self.q2 + h * d.q2,
            s1: self.s1 + h * d.s1,
            s2: self.s2 + h * d.s2,
            t: self.t + h,
        }
    }

    fn clamp(&mut self) {
        self.g = self.g.clamp(BG_MIN, BG_MAX);
        for v in [&mut self.q1, &mut self.q2, &mut self.s1, &mut self.s2, &mut self.i] {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Right-hand side of the ODE system.
///
/// `bolus_rate` (mU/min) adds to the patient's basal delivery;
/// `cho_rate` (mg/min) feeds the first gut compartment.
pub fn ode_derivatives(
    state: &SimState,
    patient: &VirtualPatient,
    bolus_rate: f64,
    cho_rate: f64,
) -> Result<Derivatives> {
    state.check_finite()?;
    if !bolus_rate.is_finite() || !cho_rate.is_finite() {
        return Err(Error::InvalidState(format!(
            "non-finite input rates (bolus {bolus_rate}, CHO {cho_rate})"
        )));
    }
    Ok(rhs(state, patient, bolus_rate, cho_rate))
}

#[inline]
fn rhs(s: &SimState, p: &VirtualPatient, bolus_rate: f64, cho_rate: f64) -> Derivatives {
    let u = bolus_rate + p.basal_mu_per_min();
    let absorbed_insulin = s.s2 / p.tau_i;
    Derivatives {
        s1: u - s.s1 / p.tau_i,
        s2: (s.s1 - s.s2) / p.tau_i,
        // Basal delivery balances clearance exactly at Ib.
        i: -p.n * s.i + absorbed_insulin / p.v_i,
        x: -p.p2 * s.x + p.p3 * (s.i - p.ib),
        q1: cho_rate - s.q1 / p.tau_m,
        q2: (s.q1 - s.q2) / p.tau_m,
        g: -p.p1 * (s.g - p.gb) - s.x * s.g + p.f_bio * s.q2 / (p.tau_m * p.v_g),
    }
}

/// Advances `state` by `dt` minutes with one RK4 step. `bolus_units` and
/// `cho_grams` are delivered as uniform rates over `window` minutes
/// (normally equal to `dt`; larger when a record interval is sub-stepped).
pub fn integrate_step_spread(
    state: &SimState,
    patient: &VirtualPatient,
    bolus_units: f64,
    cho_grams: f64,
    dt: f64,
    window: f64,
) -> Result<SimState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    let bolus_rate = bolus_units * 1000.0 / window;
    let cho_rate = cho_grams * 1000.0 / window;
    let k1 = ode_derivatives(state, patient, bolus_rate, cho_rate)?;
    let k2 = rhs(&state.offset(&k1, dt / 2.0), patient, bolus_rate, cho_rate);
    let k3 = rhs(&state.offset(&k2, dt / 2.0), patient, bolus_rate, cho_rate);
    let k4 = rhs(&state.offset(&k3, dt), patient, bolus_rate, cho_rate);
    let h = dt / 6.0;
    let mut next = SimState {
        g: state.g + h * (k1.g + 2.0 * k2.g + 2.0 * k3.g + k4.g),
        x: state.x + h * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        i: state.i + h * (k1.i + 2.0 * k2.i + 2.0 * k3.i + k4.i),
        q1: state.q1 + h * (k1.q1 + 2.0 * k2.q1 + 2.0 * k3.q1 + k4.q1),
        q2: state.q2 + h * (k1.q2 + 2.0 * k2.q2 + 2.0 * k3.q2 + k4.q2),
        s1: state.s1 + h * (k1.s1 + 2.0 * k2.s1 + 2.0 * k3.s1 + k4.s1),
        s2: state.s2 + h * (k1.s2 + 2.0 * k2.s2 + 2.0 * k3.s2 + k4.s2),
        t: state.t + dt,
    };
    next.check_finite()?;
    next.clamp();
    Ok(next)
}

/// One RK4 step of length `dt` with impulses spread over the step.
pub fn integrate_step(
    state: &SimState,
    patient: &VirtualPatient,
    bolus_units: f64,
    cho_grams: f64,
    dt: f64,
) -> Result<SimState> {
    integrate_step_spread(state, patient, bolus_units, cho_grams, dt, dt)
}
