//! Parameter identification against a measured voltage trace.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{Error, Result};
use crate::model::{step, terminal_voltage, ModelParams, ModelState, OcpCurves, MAH_TO_AS};
use crate::observer::{ThetaBox, ThetaVector};
use crate::profiles::CurrentProfile;

/// A fittable model parameter, named by its parameter-file key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitParam {
    #[serde(rename = "D_p")]
    DP,
    #[serde(rename = "D_n")]
    DN,
    #[serde(rename = "Q_all")]
    QAll,
    #[serde(rename = "R_ohm")]
    ROhm,
    #[serde(rename = "P_act")]
    PAct,
    #[serde(rename = "P_con_a")]
    PConA,
    #[serde(rename = "P_con_b")]
    PConB,
    #[serde(rename = "tau_e")]
    TauE,
    #[serde(rename = "tau_sp")]
    TauSp,
    #[serde(rename = "x_sp0")]
    XSp0,
    #[serde(rename = "x_sn0")]
    XSn0,
    #[serde(rename = "n")]
    Peukert,
}

impl FitParam {
    pub const ALL: [FitParam; 12] = [
        Self::DP,
        Self::DN,
        Self::QAll,
        Self::ROhm,
        Self::PAct,
        Self::PConA,
        Self::PConB,
        Self::TauE,
        Self::TauSp,
        Self::XSp0,
        Self::XSn0,
        Self::Peukert,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            Self::DP => "D_p",
            Self::DN => "D_n",
            Self::QAll => "Q_all",
            Self::ROhm => "R_ohm",
            Self::PAct => "P_act",
            Self::PConA => "P_con_a",
            Self::PConB => "P_con_b",
            Self::TauE => "tau_e",
            Self::TauSp => "tau_sp",
            Self::XSp0 => "x_sp0",
            Self::XSn0 => "x_sn0",
            Self::Peukert => "n",
        }
    }

    /// Value in parameter-file units (capacity in mAh).
    pub fn get(&self, p: &ModelParams) -> f64 {
        match self {
            Self::DP => p.d_p,
            Self::DN => p.d_n,
            Self::QAll => p.q_all / MAH_TO_AS,
            Self::ROhm => p.r_ohm,
            Self::PAct => p.p_act,
            Self::PConA => p.p_con_a,
            Self::PConB => p.p_con_b,
            Self::TauE => p.tau_e,
            Self::TauSp => p.tau_sp,
            Self::XSp0 => p.x_sp0,
            Self::XSn0 => p.x_sn0,
            Self::Peukert => p.peukert_n,
        }
    }

    pub fn set(&self, p: &mut ModelParams, v: f64) {
        match self {
            Self::DP => p.d_p = v,
            Self::DN => p.d_n = v,
            Self::QAll => p.q_all = v * MAH_TO_AS,
            Self::ROhm => p.r_ohm = v,
            Self::PAct => p.p_act = v,
            Self::PConA => p.p_con_a = v,
            Self::PConB => p.p_con_b = v,
            Self::TauE => p.tau_e = v,
            Self::TauSp => p.tau_sp = v,
            Self::XSp0 => p.x_sp0 = v,
            Self::XSn0 => p.x_sn0 = v,
            Self::Peukert => p.peukert_n = v,
        }
    }

    /// Search interval around `guess`: the adaptation box for the five
    /// adapted parameters, ±50 % otherwise (`n` kept ≥ 1).
    pub fn bounds(&self, guess: &ModelParams) -> (f64, f64) {
        let b = ThetaBox::around(&ThetaVector::from_params(guess));
        let v = self.get(guess);
        match self {
            Self::DP => (b.lower.d_p, b.upper.d_p),
            Self::DN => (b.lower.d_n, b.upper.d_n),
            Self::QAll => (b.lower.q_all / MAH_TO_AS, b.upper.q_all / MAH_TO_AS),
            Self::XSp0 => (b.lower.x_sp0, b.upper.x_sp0),
            Self::XSn0 => (b.lower.x_sn0, b.upper.x_sn0),
            Self::Peukert => (1.0, v * 1.5),
            _ => (v * 0.5, v * 1.5),
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FitParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let keys: Vec<_> = Self::ALL.iter().map(|p| p.key()).collect();
                Error::config(format!("unknown fit parameter {s:?}; expected one of {}", keys.join(", ")))
            })
    }
}

/// Result of an identification run. Values are in parameter-file units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub params: Vec<FitParam>,
    pub initial: Vec<f64>,
    pub fitted: Vec<f64>,
    /// V
    pub residual_rms: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn apply(&self, base: &ModelParams) -> ModelParams {
        let mut p = *base;
        for (k, v) in self.params.iter().zip(&self.fitted) {
            k.set(&mut p, *v);
        }
        p
    }
}

/// Simulated terminal voltage at every profile sample.
pub fn simulate_voltage(
    params: &ModelParams,
    curves: &OcpCurves,
    profile: &CurrentProfile,
    initial_soc: f64,
) -> Result<Vec<f64>> {
    let mut x = ModelState::at_soc(params, initial_soc);
    let mut out = Vec::with_capacity(profile.len());
    for k in 0..profile.len() {
        let i = profile.current[k];
        out.push(terminal_voltage(&x, params, curves, i)?.u_terminal);
        if k + 1 < profile.len() {
            x = step(&x, params, i, profile.t[k + 1] - profile.t[k])?;
        }
    }
    Ok(out)
}

/// Fits `subset` of `guess` so the simulated voltage matches the profile's
/// voltage column.
pub fn identify_params(
    profile: &CurrentProfile,
    curves: &OcpCurves,
    guess: &ModelParams,
    subset: &[FitParam],
    initial_soc: f64,
    opts: &LmOptions,
) -> Result<FitReport> {
    let measured = profile
        .voltage
        .as_ref()
        .ok_or_else(|| Error::config("identification needs a profile with a voltage column"))?;
    if subset.is_empty() {
        return Err(Error::config("identification needs at least one parameter"));
    }
    for (i, p) in subset.iter().enumerate() {
        if subset[..i].contains(p) {
            return Err(Error::config(format!("parameter {p} listed twice")));
        }
    }
    guess.validate()?;
    let x0: Vec<f64> = subset.iter().map(|p| p.get(guess)).collect();
    let (lower, upper): (Vec<f64>, Vec<f64>) = subset.iter().map(|p| p.bounds(guess)).unzip();
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let mut p = *guess;
        for (k, v) in subset.iter().zip(x) {
            k.set(&mut p, *v);
        }
        p.validate()?;
        let sim = simulate_voltage(&p, curves, profile, initial_soc)?;
        Ok(sim.iter().zip(measured).map(|(s, m)| s - m).collect())
    };
    let out = levenberg_marquardt(residual, &x0, &lower, &upper, opts)?;
    Ok(FitReport {
        params: subset.to_vec(),
        initial: x0,
        fitted: out.x,
        residual_rms: out.residual_rms,
        iterations: out.iterations,
        evaluations: out.evaluations,
        converged: out.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::constant_current;

    #[test]
    fn keys_round_trip() {
        for p in FitParam::ALL {
            assert_eq!(p.key().parse::<FitParam>().unwrap(), p);
            let mut m = ModelParams::reference();
            let v = p.get(&m);
            p.set(&mut m, v);
            assert_eq!(m, ModelParams::reference());
        }
        assert!("nope".parse::<FitParam>().is_err());
    }

    #[test]
    fn needs_voltage() {
        let p = ModelParams::reference();
        let prof = constant_current(1.0, p.q_all, 10.0, 1.0).unwrap();
        let err = identify_params(&prof, &OcpCurves::default(), &p, &[FitParam::ROhm], 1.0, &LmOptions::default());
        assert!(err.is_err());
    }
}
