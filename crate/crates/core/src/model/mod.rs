//! Improved extended single-particle plant.
//!
//! Current sign convention: `I > 0` discharges the cell.

mod ocp;
mod params;

pub use ocp::{MonotoneCubic, OcpCurves};
pub use params::{ModelParams, ParamFile, MAH_TO_AS};

use crate::error::{Error, Result, Stoichiometry};

/// Lower clamp on the C-rate used in the Peukert correction.
pub const RATE_FLOOR: f64 = 0.05;

/// Usable output window, V. Voltages outside it set the warning flag.
pub const SANITY_BAND: (f64, f64) = (1.5, 5.0);

/// Dynamic state of the plant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModelState {
    /// Normalized charge throughput (integral of I / Q_eff).
    pub s: f64,
    pub dx_sp: f64,
    pub dx_sn: f64,
    /// mol·m⁻³
    pub dc1: f64,
    /// mol·m⁻³
    pub dc2: f64,
}

impl ModelState {
    pub fn at_soc(params: &ModelParams, soc: f64) -> Self {
        Self {
            s: params.soc0 - soc,
            ..Self::default()
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.s, self.dx_sp, self.dx_sn, self.dc1, self.dc2]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            s: v[0],
            dx_sp: v[1],
            dx_sn: v[2],
            dc1: v[3],
            dc2: v[4],
        }
    }

    pub fn x_sp_avg(&self, p: &ModelParams) -> f64 {
        p.x_sp0 + p.d_p * self.s
    }

    pub fn x_sn_avg(&self, p: &ModelParams) -> f64 {
        p.x_sn0 - p.d_n * self.s
    }

    pub fn x_sp_surf(&self, p: &ModelParams) -> f64 {
        self.x_sp_avg(p) + self.dx_sp
    }

    pub fn x_sn_surf(&self, p: &ModelParams) -> f64 {
        self.x_sn_avg(p) + self.dx_sn
    }

    /// Checks every derived stoichiometry is strictly inside (0, 1).
    pub fn check_stoichiometry(&self, p: &ModelParams) -> Result<()> {
        let checks = [
            (Stoichiometry::PositiveAverage, self.x_sp_avg(p)),
            (Stoichiometry::NegativeAverage, self.x_sn_avg(p)),
            (Stoichiometry::PositiveSurface, self.x_sp_surf(p)),
            (Stoichiometry::NegativeSurface, self.x_sn_surf(p)),
        ];
        for (field, value) in checks {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::Saturation { field, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageBreakdown {
    pub e_ocv: f64,
    pub eta_con: f64,
    pub eta_act: f64,
    pub eta_ohm: f64,
    pub u_terminal: f64,
    /// Set when `u_terminal` falls outside [`SANITY_BAND`].
    pub out_of_band: bool,
}

/// Peukert-corrected capacity (A·s) at the given C-rate.
pub fn effective_capacity(params: &ModelParams, c_rate_now: f64) -> Result<f64> {
    if !(c_rate_now > 0.0) {
        return Err(Error::domain(
            "effective_capacity",
            format!("C-rate must be positive, got {c_rate_now}"),
        ));
    }
    let rate = c_rate_now.max(RATE_FLOOR);
    Ok(params.q_all * (1.0 / rate).powf(params.peukert_n - 1.0))
}

/// Effective capacity for an applied current; rest periods use the rate floor.
pub fn capacity_for_current(params: &ModelParams, current: f64) -> f64 {
    let rate = params.c_rate(current).max(RATE_FLOOR);
    params.q_all * (1.0 / rate).powf(params.peukert_n - 1.0)
}

/// Negative-electrode solid time constant for the C-rate band.
pub fn select_tau_sn(params: &ModelParams, c_rate_now: f64) -> f64 {
    params.tau_sn[tau_sn_band(c_rate_now)]
}

/// Index of the C-rate band: `< 1.5C`, `[1.5C, 2.5C)`, `>= 2.5C`.
pub fn tau_sn_band(c_rate_now: f64) -> usize {
    if c_rate_now < 1.5 {
        0
    } else if c_rate_now < 2.5 {
        1
    } else {
        2
    }
}

/// One forward-Euler step of length `dt` under constant `current`.
pub fn step(state: &ModelState, params: &ModelParams, current: f64, dt: f64) -> Result<ModelState> {
    let next = propagate(state, params, current, dt)?;
    next.check_stoichiometry(params)?;
    Ok(next)
}

/// [`step`] without the stoichiometry check.
pub fn propagate(state: &ModelState, params: &ModelParams, current: f64, dt: f64) -> Result<ModelState> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step must be positive, got {dt}")));
    }
    let rate = params.c_rate(current);
    let tau_sn = select_tau_sn(params, rate);
    let tau_min = params.tau_sp.min(params.tau_e).min(tau_sn);
    if dt >= tau_min {
        return Err(Error::config(format!(
            "time step {dt} s is not below the active time constant {tau_min} s"
        )));
    }
    let q_eff = capacity_for_current(params, current);
    let solid_gain = 12.0 / 7.0 * current / q_eff;

    let next = ModelState {
        s: state.s + dt * current / q_eff,
        dx_sp: state.dx_sp + dt / params.tau_sp * (solid_gain * params.d_p - state.dx_sp),
        dx_sn: state.dx_sn + dt / tau_sn * (solid_gain * params.d_n - state.dx_sn),
        dc1: state.dc1 + dt / params.tau_e * (params.p_con_a * current - state.dc1),
        dc2: state.dc2 + dt / params.tau_e * (params.p_con_b * current - state.dc2),
    };
    Ok(next)
}

pub fn eta_ohm(params: &ModelParams, current: f64) -> f64 {
    params.r_ohm * current
}

pub fn eta_con(params: &ModelParams, state: &ModelState) -> Result<f64> {
    let num = params.c0 + state.dc1;
    let den = params.c0 - state.dc2;
    if !(num > 0.0) {
        return Err(Error::domain(
            "eta_con",
            format!("c0 + dc1 = {num} must be positive (dc1 = {})", state.dc1),
        ));
    }
    if !(den > 0.0) {
        return Err(Error::domain(
            "eta_con",
            format!("c0 - dc2 = {den} must be positive (dc2 = {})", state.dc2),
        ));
    }
    Ok(params.thermal_voltage2() * (1.0 - params.t_plus) * (num / den).ln())
}

/// Butler-Volmer reaction over-potential with `q_eff` standing in for the capacity.
pub fn eta_act(params: &ModelParams, state: &ModelState, current: f64, q_eff: f64) -> Result<f64> {
    let y = state.x_sp_surf(params);
    let x = state.x_sn_surf(params);
    for (name, v) in [("x_sp_surf", y), ("x_sn_surf", x)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain("eta_act", format!("{name} = {v} outside (0, 1)")));
        }
    }
    let scale = params.p_act * current / (6.0 * q_eff * params.c0.sqrt());
    let m_p = params.d_p * ((1.0 - y) * y).sqrt() * scale;
    let m_n = params.d_n * ((1.0 - x) * x).sqrt() * scale;
    Ok(params.thermal_voltage2() * (m_n.asinh() + m_p.asinh()))
}

pub fn terminal_voltage(
    state: &ModelState,
    params: &ModelParams,
    curves: &OcpCurves,
    current: f64,
) -> Result<VoltageBreakdown> {
    let e_ocv = curves.u_p(state.x_sp_surf(params))? - curves.u_n(state.x_sn_surf(params))?;
    let q_eff = capacity_for_current(params, current);
    let eta_con = eta_con(params, state)?;
    let eta_act = eta_act(params, state, current, q_eff)?;
    let eta_ohm = eta_ohm(params, current);
    let u_terminal = e_ocv - eta_con - eta_act - eta_ohm;
    Ok(VoltageBreakdown {
        e_ocv,
        eta_con,
        eta_act,
        eta_ohm,
        u_terminal,
        out_of_band: !(SANITY_BAND.0..=SANITY_BAND.1).contains(&u_terminal),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocReading {
    pub soc: f64,
    /// The unclamped value fell outside [0, 1].
    pub out_of_range: bool,
}

/// Coulomb-counted SOC: `soc0 - s`, clamped to [0, 1].
pub fn soc_of_state(state: &ModelState, params: &ModelParams) -> SocReading {
    let raw = params.soc0 - state.s;
    SocReading {
        soc: raw.clamp(0.0, 1.0),
        out_of_range: !(0.0..=1.0).contains(&raw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p() -> ModelParams {
        ModelParams::reference()
    }

    #[test]
    fn effective_capacity_cases() {
        let p = p();
        assert_relative_eq!(effective_capacity(&p, 1.0).unwrap(), p.q_all, max_relative = 1e-15);
        let mut flat = p;
        flat.peukert_n = 1.0;
        for rate in [0.3, 1.0, 2.0, 3.0] {
            assert_eq!(effective_capacity(&flat, rate).unwrap(), flat.q_all);
        }
        // mpmath: 2894.1 * 2^-0.021 = 2852.278336036233 mAh
        let q2 = effective_capacity(&p, 2.0).unwrap() / MAH_TO_AS;
        assert_relative_eq!(q2, 2852.278336036233, max_relative = 1e-12);
        assert!(effective_capacity(&p, 0.0).is_err());
        assert!(effective_capacity(&p, -1.0).is_err());
        assert_eq!(
            effective_capacity(&p, 1e-6).unwrap(),
            effective_capacity(&p, RATE_FLOOR).unwrap()
        );
    }

    #[test]
    fn tau_sn_bands() {
        let p = p();
        assert_eq!(select_tau_sn(&p, 1.0), 1.1);
        assert_eq!(select_tau_sn(&p, 2.0), 10.0);
        assert_eq!(select_tau_sn(&p, 3.0), 0.05);
        assert_eq!(select_tau_sn(&p, 1.5), 10.0);
        assert_eq!(select_tau_sn(&p, 2.5), 0.05);
        assert_eq!(select_tau_sn(&p, 0.0), 1.1);
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let p = p();
        let z = ModelState::default();
        for dt in [0.01, 0.5, 1.0] {
            assert_eq!(step(&z, &p, 0.0, dt).unwrap(), z);
        }
    }

    #[test]
    fn solid_deviation_relaxes() {
        let p = p();
        let st = ModelState {
            dx_sp: 0.01,
            ..Default::default()
        };
        let next = step(&st, &p, 0.0, 1.0).unwrap();
        assert_relative_eq!(next.dx_sp, 0.004594594594594595, max_relative = 1e-14);
    }

    #[test]
    fn one_c_throughput_per_second() {
        let p = p();
        let next = step(&ModelState::default(), &p, 2.8941, 1.0).unwrap();
        // 1 s at 1C with Q_eff = Q_all: 1/3600
        assert_relative_eq!(next.s, 2.777777777777778e-4, max_relative = 1e-12);
    }

    #[test]
    fn step_rejects_unstable_dt() {
        let p = p();
        let err = step(&ModelState::default(), &p, 3.0 * p.one_c_current(), 1.0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(step(&ModelState::default(), &p, 3.0 * p.one_c_current(), 0.01).is_ok());
    }

    #[test]
    fn step_reports_saturation() {
        let p = p();
        let st = ModelState::at_soc(&p, p.soc_floor() + 1e-6);
        let err = step(&st, &p, 2.0 * p.one_c_current(), 1.0).unwrap_err();
        assert!(matches!(
            err,
            Error::Saturation {
                field: Stoichiometry::PositiveAverage,
                ..
            }
        ));
    }

    #[test]
    fn ohmic_drop() {
        let p = p();
        assert_eq!(eta_ohm(&p, 0.0), 0.0);
        assert_relative_eq!(eta_ohm(&p, 2.8941), 0.1302345, max_relative = 1e-12);
        assert_relative_eq!(eta_ohm(&p, -2.8941), -0.1302345, max_relative = 1e-12);
    }

    #[test]
    fn concentration_overpotential() {
        let p = p();
        assert_eq!(eta_con(&p, &ModelState::default()).unwrap(), 0.0);
        let st = ModelState {
            dc1: 150.0,
            dc2: 60.0,
            ..Default::default()
        };
        // mpmath oracle
        assert_relative_eq!(eta_con(&p, &st).unwrap(), 0.006599698307162057, max_relative = 1e-9);
        let sym = ModelState {
            dc1: 3.0,
            dc2: -3.0,
            ..Default::default()
        };
        assert!(eta_con(&p, &sym).unwrap().abs() < 1e-15);
        let bad = ModelState {
            dc2: 1000.0,
            ..Default::default()
        };
        assert!(matches!(eta_con(&p, &bad), Err(Error::Domain { .. })));
    }

    #[test]
    fn reaction_overpotential() {
        let p = p();
        let st = ModelState::default();
        assert_eq!(eta_act(&p, &st, 0.0, p.q_all).unwrap(), 0.0);
        let fwd = eta_act(&p, &st, 2.0, p.q_all).unwrap();
        let back = eta_act(&p, &st, -2.0, p.q_all).unwrap();
        assert!(fwd > 0.0);
        assert_relative_eq!(fwd, -back, max_relative = 1e-14);
        // surfaces at (0.68, 0.745), 1C, mpmath oracle
        assert_relative_eq!(
            eta_act(&p, &st, 2.8941, p.q_all).unwrap(),
            0.004246880236439821,
            max_relative = 1e-9
        );
    }

    #[test]
    fn equilibrium_voltage_is_ocv() {
        let p = p();
        let c = OcpCurves::default();
        let v = terminal_voltage(&ModelState::default(), &p, &c, 0.0).unwrap();
        assert_eq!(v.u_terminal, v.e_ocv);
        assert!((v.e_ocv - 4.2).abs() < 5e-3);
        assert!(!v.out_of_band);
    }

    #[test]
    fn discharge_lowers_voltage() {
        let p = p();
        let c = OcpCurves::default();
        let i = p.one_c_current();
        let next = step(&ModelState::default(), &p, i, 1.0).unwrap();
        let v = terminal_voltage(&next, &p, &c, i).unwrap();
        assert!(v.u_terminal < v.e_ocv);
        assert!(v.eta_con > 0.0 && v.eta_act > 0.0 && v.eta_ohm > 0.0);
        assert_eq!(
            v.u_terminal,
            v.e_ocv - v.eta_con - v.eta_act - v.eta_ohm
        );
    }

    #[test]
    fn soc_map() {
        let p = p();
        assert_eq!(soc_of_state(&ModelState::default(), &p).soc, p.soc0);
        let st = ModelState {
            s: p.soc0,
            ..Default::default()
        };
        assert_eq!(soc_of_state(&st, &p).soc, 0.0);
        let over = ModelState {
            s: -0.1,
            ..Default::default()
        };
        let r = soc_of_state(&over, &p);
        assert!(r.out_of_range);
        assert_eq!(r.soc, 1.0);
    }

    #[test]
    fn one_hour_at_one_c_removes_full_soc() {
        // Stoichiometry window wide enough for a full hour.
        let mut p = p();
        p.peukert_n = 1.0;
        p.x_sp0 = 0.2;
        p.d_p = 0.7;
        p.x_sn0 = 0.8;
        p.d_n = 0.7;
        let mut st = ModelState::default();
        for _ in 0..3600 {
            st = step(&st, &p, p.one_c_current(), 1.0).unwrap();
        }
        assert!((st.s - 1.0).abs() < 1e-9, "s = {}", st.s);
        assert_eq!(soc_of_state(&st, &p).soc, 0.0);
    }

    fn simulate_constant(p: &ModelParams, c: &OcpCurves, i: f64, dt: f64, t_end: f64) -> Vec<(f64, f64)> {
        let mut st = ModelState::default();
        let mut out = Vec::new();
        let n = (t_end / dt).round() as usize;
        for k in 0..n {
            st = step(&st, p, i, dt).unwrap();
            if (k + 1) % ((10.0 / dt).round() as usize) == 0 {
                let u = terminal_voltage(&st, p, c, i).unwrap().u_terminal;
                out.push(((k + 1) as f64 * dt, u));
            }
        }
        out
    }

    #[test]
    fn one_c_discharge_trace_converges_in_dt() {
        let p = p();
        let c = OcpCurves::default();
        let i = p.one_c_current();
        // 1500 s keeps the positive electrode below its saturation point.
        let coarse = simulate_constant(&p, &c, i, 1.0, 1500.0);
        let fine = simulate_constant(&p, &c, i, 0.1, 1500.0);
        assert_eq!(coarse.len(), fine.len());
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a.1 - b.1).abs() < 5e-3, "t={} {} vs {}", a.0, a.1, b.1);
            assert!(a.1 >= 2.5);
        }
        // downward trend over each minute
        for w in coarse.windows(6).step_by(6) {
            assert!(w[5].1 < w[0].1);
        }
    }

    proptest! {
        #[test]
        fn rest_contracts_deviations(
            dx_sp in -0.01f64..0.01, dx_sn in -0.01f64..0.01,
            dc1 in -300.0f64..300.0, dc2 in -300.0f64..300.0, s in 0.0f64..0.3,
        ) {
            let p = p();
            let st = ModelState { s, dx_sp, dx_sn, dc1, dc2 };
            let next = step(&st, &p, 0.0, 1.0).unwrap();
            prop_assert_eq!(next.s, s);
            prop_assert!(next.dx_sp.abs() <= dx_sp.abs());
            prop_assert!(next.dx_sn.abs() <= dx_sn.abs());
            prop_assert!(next.dc1.abs() < dc1.abs() || dc1 == 0.0);
            prop_assert!(next.dc2.abs() < dc2.abs() || dc2 == 0.0);
        }

        #[test]
        fn throughput_is_additive(i in -5.0f64..5.0, dt in 0.01f64..0.5) {
            let p = p();
            let st = ModelState { s: 0.1, ..Default::default() };
            let one = step(&st, &p, i, 2.0 * dt).unwrap();
            let two = step(&step(&st, &p, i, dt).unwrap(), &p, i, dt).unwrap();
            prop_assert!((one.s - two.s).abs() <= 1e-15);
        }

        #[test]
        fn overpotentials_non_negative_on_discharge(i in 0.01f64..5.5) {
            let p = p();
            let c = OcpCurves::default();
            let st = step(&ModelState::default(), &p, i, 1.0).unwrap();
            let v = terminal_voltage(&st, &p, &c, i).unwrap();
            prop_assert!(v.eta_con >= 0.0 && v.eta_act >= 0.0 && v.eta_ohm >= 0.0);
        }
    }
}
