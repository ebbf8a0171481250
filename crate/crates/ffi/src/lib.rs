//! C ABI over the `bolusrl` core.
//!
//! Every function returns a [`BolusStatus`]; results go through out-pointers.
//! On failure the message of the last error on the calling thread is
//! available from [`bolus_last_error`]. Patients and models are opaque
//! handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, UnwindSafe};
use std::path::PathBuf;

use bolusrl::advisor::{bolus_dose, exploration_bounds, AdvisorParams, BaselineAdvisor};
use bolusrl::glucosim::{load_presets, preset, MealScenario, Policy, SimOptions, VirtualPatient};
use bolusrl::pipeline::{evaluate_policy, GreedyQ, RewardOptions, BG_BINS};
use bolusrl::qlearn::{greedy_action, QModel};
use bolusrl::riskmodel::{risk_reward, RewardParams};
use bolusrl::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BolusStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidInput = 2,
    NotFound = 3,
    Io = 4,
    Parse = 5,
    Simulation = 6,
    Panic = 7,
}

/// Number of BG bins in [`BolusEvalSummary::bins`].
pub const BOLUS_BIN_COUNT: usize = 5;

/// Summary of one simulated evaluation on the default meal scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BolusEvalSummary {
    /// Fractions of 3-minute readings in [40,70), [70,112.5), [112.5,180),
    /// [180,350) and [350,600].
    pub bins: [f64; BOLUS_BIN_COUNT],
    pub hypo_fraction: f64,
    pub mean_reward: f64,
    pub days: u32,
}

/// Opaque simulated patient.
pub struct BolusPatient(VirtualPatient);

/// Opaque learned Q-model.
pub struct BolusModel(QModel);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> BolusStatus {
    match err {
        Error::InvalidInput(_) | Error::UnknownMeal(_) | Error::Config(_) => BolusStatus::InvalidInput,
        Error::Parse { .. } | Error::Csv(_) => BolusStatus::Parse,
        Error::Io(_) | Error::File { .. } => BolusStatus::Io,
        Error::Stage { source, .. } => status_of(source),
        _ => BolusStatus::Simulation,
    }
}

fn fail(status: BolusStatus, msg: &str) -> BolusStatus {
    set_last_error(msg);
    status
}

fn guard<F: FnOnce() -> Result<(), BolusStatus> + UnwindSafe>(f: F) -> BolusStatus {
    match catch_unwind(f) {
        Ok(Ok(())) => {
            set_last_error("");
            BolusStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(BolusStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: bolusrl::Result<T>) -> Result<T, BolusStatus> {
    r.map_err(|e| fail(status_of(&e), &e.to_string()))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, BolusStatus> {
    p.as_mut().ok_or_else(|| fail(BolusStatus::NullArgument, &format!("`{name}` is null")))
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, BolusStatus> {
    if p.is_null() {
        return Err(fail(BolusStatus::NullArgument, &format!("`{name}` is null")));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(BolusStatus::InvalidInput, &format!("`{name}` is not UTF-8"))),
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length, so a
/// caller can size the buffer with a first call passing `len = 0`.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bolus_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            std::ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Advisor dose: `cho / cir + max(bg - bg_target, 0) / cf`.
///
/// # Safety
/// `dose` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_advisor_dose(cho: f64, bg: f64, cir: f64, cf: f64, bg_target: f64, dose: *mut f64) -> BolusStatus {
    guard(|| {
        let dose = out(dose, "dose")?;
        let params = check(AdvisorParams::new(cir, cf, bg_target))?;
        *dose = check(bolus_dose(cho, bg, &params))?;
        Ok(())
    })
}

/// Dose range used for exploration at a meal.
///
/// # Safety
/// `lo` and `hi` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_exploration_bounds(cho: f64, bg: f64, lo: *mut f64, hi: *mut f64) -> BolusStatus {
    guard(|| {
        let lo = out(lo, "lo")?;
        let hi = out(hi, "hi")?;
        (*lo, *hi) = check(exploration_bounds(cho, bg))?;
        Ok(())
    })
}

/// Risk-based reward of a BG reading, zero at 112.5 mg/dL.
///
/// # Safety
/// `reward` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_risk_reward(bg: f64, scale: f64, reward: *mut f64) -> BolusStatus {
    guard(|| {
        let reward = out(reward, "reward")?;
        let params: RewardParams = check(RewardParams::with_scale(scale))?;
        *reward = check(risk_reward(bg, &params))?;
        Ok(())
    })
}

/// Creates a handle for one of the built-in adults (ids 1, 2, 3).
///
/// # Safety
/// `patient` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_patient_preset(id: u32, patient: *mut *mut BolusPatient) -> BolusStatus {
    guard(|| {
        let slot = out(patient, "patient")?;
        let p = preset(id).ok_or_else(|| fail(BolusStatus::NotFound, &format!("no built-in patient with id {id}")))?;
        *slot = Box::into_raw(Box::new(BolusPatient(p)));
        Ok(())
    })
}

/// Loads patient `id` from a presets file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `patient` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_patient_load(path: *const c_char, id: u32, patient: *mut *mut BolusPatient) -> BolusStatus {
    guard(|| {
        let slot = out(patient, "patient")?;
        let path = path_arg(path, "path")?;
        let all = check(load_presets(&path))?;
        let p = all
            .into_iter()
            .find(|p| p.id == id)
            .ok_or_else(|| fail(BolusStatus::NotFound, &format!("no patient with id {id} in {}", path.display())))?;
        *slot = Box::into_raw(Box::new(BolusPatient(p)));
        Ok(())
    })
}

/// Releases a patient handle. Null is ignored.
///
/// # Safety
/// `patient` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bolus_patient_free(patient: *mut BolusPatient) {
    if !patient.is_null() {
        drop(Box::from_raw(patient));
    }
}

/// Loads a Q-model text file.
///
/// # Safety
/// `path` must be null or a NUL-terminated string; `model` must be null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_model_load(path: *const c_char, model: *mut *mut BolusModel) -> BolusStatus {
    guard(|| {
        let slot = out(model, "model")?;
        let path = path_arg(path, "path")?;
        let m = check(QModel::load(&path))?;
        *slot = Box::into_raw(Box::new(BolusModel(m)));
        Ok(())
    })
}

/// Writes a Q-model in the same text format [`bolus_model_load`] reads.
///
/// # Safety
/// `model` must be null or a live handle; `path` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn bolus_model_save(model: *const BolusModel, path: *const c_char) -> BolusStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`model` is null"))?;
        let path = path_arg(path, "path")?;
        check(m.0.save(&path))
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bolus_model_free(model: *mut BolusModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Q(meal_id, bg, ins) of a model.
///
/// # Safety
/// `model` must be null or a live handle; `q` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_model_q_value(model: *const BolusModel, meal_id: u32, bg: f64, ins: f64, q: *mut f64) -> BolusStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`model` is null"))?;
        let q = out(q, "q")?;
        *q = check(m.0.q_value(meal_id, bg, ins))?;
        Ok(())
    })
}

/// Greedy dose over `grid_points` evenly spaced doses of the model's range.
///
/// # Safety
/// `model` must be null or a live handle; `dose` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_model_greedy_dose(
    model: *const BolusModel,
    meal_id: u32,
    bg: f64,
    grid_points: usize,
    dose: *mut f64,
) -> BolusStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`model` is null"))?;
        let dose = out(dose, "dose")?;
        *dose = check(greedy_action(&m.0, meal_id, bg, grid_points))?;
        Ok(())
    })
}

fn summarize(
    patient: &VirtualPatient,
    policy: &mut dyn Policy,
    days: u32,
    seed: u64,
    summary: &mut BolusEvalSummary,
) -> Result<(), BolusStatus> {
    let (report, _) = check(evaluate_policy(
        patient,
        &MealScenario::default(),
        policy,
        days as usize,
        seed,
        &SimOptions::default(),
        &RewardOptions::default(),
    ))?;
    debug_assert_eq!(report.bins.len(), BG_BINS.len());
    for (dst, b) in summary.bins.iter_mut().zip(&report.bins) {
        *dst = b.fraction;
    }
    summary.hypo_fraction = report.hypo_fraction;
    summary.mean_reward = report.mean_reward;
    summary.days = days;
    Ok(())
}

/// Simulates `days` of the default meal scenario under the advisor.
///
/// # Safety
/// `patient` must be null or a live handle; `summary` null or valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_evaluate_advisor(
    patient: *const BolusPatient,
    cir: f64,
    cf: f64,
    bg_target: f64,
    days: u32,
    seed: u64,
    summary: *mut BolusEvalSummary,
) -> BolusStatus {
    guard(|| {
        let p = patient.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`patient` is null"))?;
        let summary = out(summary, "summary")?;
        let params = check(AdvisorParams::new(cir, cf, bg_target))?;
        summarize(&p.0, &mut BaselineAdvisor(params), days, seed, summary)
    })
}

/// Simulates `days` of the default meal scenario under a model's greedy
/// policy over `grid_points` doses.
///
/// # Safety
/// `patient` and `model` must be null or live handles; `summary` null or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn bolus_evaluate_model(
    patient: *const BolusPatient,
    model: *const BolusModel,
    grid_points: usize,
    days: u32,
    seed: u64,
    summary: *mut BolusEvalSummary,
) -> BolusStatus {
    guard(|| {
        let p = patient.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`patient` is null"))?;
        let m = model.as_ref().ok_or_else(|| fail(BolusStatus::NullArgument, "`model` is null"))?;
        let summary = out(summary, "summary")?;
        let mut greedy = check(GreedyQ::new(m.0.clone(), grid_points))?;
        summarize(&p.0, &mut greedy, days, seed, summary)
    })
}
