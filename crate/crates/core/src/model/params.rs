use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per hour; converts between mAh and A·s.
pub const MAH_TO_AS: f64 = 3.6;

/// Physical and empirical constants of the single-particle model.
///
/// `q_all` is held in A·s. The on-disk form ([`ParamFile`]) uses mAh and
/// the symbol names of the identified parameter table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d_p: f64,
    pub d_n: f64,
    /// Total capacity, A·s.
    pub q_all: f64,
    /// Ohmic resistance, Ω.
    pub r_ohm: f64,
    /// Reaction-polarization coefficient, s·(mol·m⁻³)^½.
    pub p_act: f64,
    /// Electrolyte gain, positive side, mol·m⁻³·A⁻¹.
    pub p_con_a: f64,
    /// Electrolyte gain, negative side, mol·m⁻³·A⁻¹.
    pub p_con_b: f64,
    pub tau_e: f64,
    pub tau_sp: f64,
    /// Negative solid time constants for the three current-rate bands.
    pub tau_sn: [f64; 3],
    pub x_sp0: f64,
    pub x_sn0: f64,
    pub peukert_n: f64,
    /// Temperature, K.
    pub temperature: f64,
    pub t_plus: f64,
    /// Electrolyte concentration, mol·m⁻³.
    pub c0: f64,
    pub r_gas: f64,
    pub faraday: f64,
    /// SOC at `(x_sp0, x_sn0)`.
    pub soc0: f64,
}

impl ModelParams {
    /// NCR18650PF parameter set.
    pub fn reference() -> Self {
        Self {
            d_p: 0.7284,
            d_n: 0.6533,
            q_all: 2894.1 * MAH_TO_AS,
            r_ohm: 0.045,
            p_act: 90424.0,
            p_con_a: 150.0,
            p_con_b: 60.0,
            tau_e: 80.0,
            tau_sp: 1.85,
            tau_sn: [1.1, 10.0, 0.05],
            x_sp0: 0.68,
            x_sn0: 0.745,
            peukert_n: 1.021,
            temperature: 298.15,
            t_plus: 0.363,
            c0: 1000.0,
            r_gas: 8.314,
            faraday: 96485.3,
            soc0: 1.0,
        }
    }

    /// Capacity in mAh.
    pub fn q_all_mah(&self) -> f64 {
        self.q_all / MAH_TO_AS
    }

    /// Current that discharges `q_all` in one hour, A.
    pub fn one_c_current(&self) -> f64 {
        self.q_all / 3600.0
    }

    /// |I| expressed as a C-rate of the nominal capacity.
    pub fn c_rate(&self, current: f64) -> f64 {
        current.abs() / self.one_c_current()
    }

    /// 2RT/F, V.
    pub fn thermal_voltage2(&self) -> f64 {
        2.0 * self.r_gas * self.temperature / self.faraday
    }

    /// Lowest stoichiometry-admissible SOC given `d_p`, `d_n` and the
    /// initial stoichiometries: the SOC at which either electrode average
    /// reaches its bound.
    pub fn soc_floor(&self) -> f64 {
        let s_max_p = (1.0 - self.x_sp0) / self.d_p;
        let s_max_n = self.x_sn0 / self.d_n;
        self.soc0 - s_max_p.min(s_max_n)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("Q_all", self.q_all),
            ("tau_e", self.tau_e),
            ("tau_sp", self.tau_sp),
            ("tau_sn_1", self.tau_sn[0]),
            ("tau_sn_2", self.tau_sn[1]),
            ("tau_sn_3", self.tau_sn[2]),
            ("c0", self.c0),
            ("T", self.temperature),
            ("F", self.faraday),
            ("R", self.r_gas),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("D_p", self.d_p), ("D_n", self.d_n)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("x_sp0", self.x_sp0),
            ("x_sn0", self.x_sn0),
            ("t_plus", self.t_plus),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.peukert_n >= 1.0) {
            return Err(Error::config(format!(
                "Peukert exponent n must be >= 1, got {}",
                self.peukert_n
            )));
        }
        if self.r_ohm < 0.0 || self.p_act < 0.0 {
            return Err(Error::config("R_ohm and P_act must be non-negative"));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::reference()
    }
}

fn default_soc0() -> f64 {
    1.0
}

/// File representation of [`ModelParams`], keyed by table symbol.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub D_n: f64,
    pub D_p: f64,
    pub F: f64,
    pub P_act: f64,
    pub P_con_a: f64,
    pub P_con_b: f64,
    /// mAh
    pub Q_all: f64,
    pub R: f64,
    pub R_ohm: f64,
    pub T: f64,
    pub t_plus: f64,
    pub c0: f64,
    pub tau_e: f64,
    pub tau_sn_1: f64,
    pub tau_sn_2: f64,
    pub tau_sn_3: f64,
    pub tau_sp: f64,
    pub x_sn0: f64,
    pub x_sp0: f64,
    pub n: f64,
    #[serde(default = "default_soc0")]
    pub soc0: f64,
}

impl From<&ModelParams> for ParamFile {
    fn from(p: &ModelParams) -> Self {
        Self {
            D_n: p.d_n,
            D_p: p.d_p,
            F: p.faraday,
            P_act: p.p_act,
            P_con_a: p.p_con_a,
            P_con_b: p.p_con_b,
            Q_all: p.q_all_mah(),
            R: p.r_gas,
            R_ohm: p.r_ohm,
            T: p.temperature,
            t_plus: p.t_plus,
            c0: p.c0,
            tau_e: p.tau_e,
            tau_sn_1: p.tau_sn[0],
            tau_sn_2: p.tau_sn[1],
            tau_sn_3: p.tau_sn[2],
            tau_sp: p.tau_sp,
            x_sn0: p.x_sn0,
            x_sp0: p.x_sp0,
            n: p.peukert_n,
            soc0: p.soc0,
        }
    }
}

impl From<&ParamFile> for ModelParams {
    fn from(f: &ParamFile) -> Self {
        Self {
            d_p: f.D_p,
            d_n: f.D_n,
            q_all: f.Q_all * MAH_TO_AS,
            r_ohm: f.R_ohm,
            p_act: f.P_act,
            p_con_a: f.P_con_a,
            p_con_b: f.P_con_b,
            tau_e: f.tau_e,
            tau_sp: f.tau_sp,
            tau_sn: [f.tau_sn_1, f.tau_sn_2, f.tau_sn_3],
            x_sp0: f.x_sp0,
            x_sn0: f.x_sn0,
            peukert_n: f.n,
            temperature: f.T,
            t_plus: f.t_plus,
            c0: f.c0,
            r_gas: f.R,
            faraday: f.F,
            soc0: f.soc0,
        }
    }
}

impl ModelParams {
    pub fn to_toml(&self) -> String {
        toml::to_string(&ParamFile::from(self)).expect("parameter file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ParamFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let params = ModelParams::from(&file);
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        ModelParams::reference().validate().unwrap();
        assert!((ModelParams::reference().one_c_current() - 2.8941).abs() < 1e-12);
    }

    #[test]
    fn toml_round_trip() {
        let p = ModelParams::reference();
        let back = ModelParams::from_toml(&p.to_toml()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn file_uses_table_symbols() {
        let text = ModelParams::reference().to_toml();
        for key in ["D_n", "P_con_a", "Q_all", "R_ohm", "tau_sn_3", "x_sp0", "t_plus"] {
            assert!(text.contains(&format!("{key} = ")), "missing {key}");
        }
        assert!(text.contains("Q_all = 2894.1"));
    }

    #[test]
    fn rejects_bad_values() {
        let mut p = ModelParams::reference();
        p.peukert_n = 0.9;
        assert!(p.validate().is_err());
        let mut p = ModelParams::reference();
        p.x_sp0 = 1.0;
        assert!(p.validate().is_err());
        assert!(ModelParams::from_toml("D_n = 1").is_err());
    }

    #[test]
    fn soc_floor_of_reference() {
        let floor = ModelParams::reference().soc_floor();
        assert!((floor - (1.0 - 0.32 / 0.7284)).abs() < 1e-12);
    }
}
