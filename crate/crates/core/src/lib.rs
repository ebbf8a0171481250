//! Learning pre-meal insulin bolus policies on a surrogate type-1 diabetes
//! simulator and comparing them with the standard bolus advisor.

pub mod advisor;
pub mod config;
pub mod error;
pub mod glucosim;
mod kvtext;
pub mod pipeline;
pub mod qlearn;
pub mod riskmodel;

pub use error::{Error, KeyIssue, Result};
