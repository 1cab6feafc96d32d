use nalgebra::{Matrix5, Vector5};

use crate::error::{Error, Result};
use crate::model::{capacity_for_current, select_tau_sn, tau_sn_band, ModelParams, ModelState};

/// Linear state propagation `x_k = A x_{k-1} + B i_{k-1}` of the plant
/// for a fixed solid time-constant band and a fixed effective capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    /// Diagonal of `A`.
    pub a: Vector5<f64>,
    pub b: Vector5<f64>,
    pub dt: f64,
    /// `tau_sn` band index in use.
    pub band: usize,
}

impl StateSpace {
    pub fn a_matrix(&self) -> Matrix5<f64> {
        Matrix5::from_diagonal(&self.a)
    }

    pub fn propagate(&self, x: &Vector5<f64>, current: f64) -> Vector5<f64> {
        self.a.component_mul(x) + self.b * current
    }

    /// `A^{-1} v` for the diagonal `A`.
    pub fn a_inv_mul(&self, v: &Vector5<f64>) -> Vector5<f64> {
        v.component_div(&self.a)
    }
}

/// Builds `A`, `B` with the time-step consistent input column.
pub fn build_state_space(params: &ModelParams, dt: f64, c_rate_now: f64) -> Result<StateSpace> {
    let q_eff = capacity_for_current(params, c_rate_now * params.one_c_current());
    build_with_capacity(params, dt, c_rate_now, q_eff)
}

pub(crate) fn build_with_capacity(
    params: &ModelParams,
    dt: f64,
    c_rate_now: f64,
    q_eff: f64,
) -> Result<StateSpace> {
    let tau_sn = select_tau_sn(params, c_rate_now);
    let tau_min = params.tau_sp.min(params.tau_e).min(tau_sn);
    if !(dt > 0.0) || dt >= tau_min {
        return Err(Error::config(format!(
            "time step {dt} s must lie in (0, {tau_min}) s for a stable Euler recursion"
        )));
    }
    let a = Vector5::new(
        1.0,
        1.0 - dt / params.tau_sp,
        1.0 - dt / tau_sn,
        1.0 - dt / params.tau_e,
        1.0 - dt / params.tau_e,
    );
    let b = Vector5::new(
        dt / q_eff,
        12.0 * params.d_p * dt / (7.0 * q_eff * params.tau_sp),
        12.0 * params.d_n * dt / (7.0 * q_eff * tau_sn),
        dt * params.p_con_a / params.tau_e,
        dt * params.p_con_b / params.tau_e,
    );
    Ok(StateSpace {
        a,
        b,
        dt,
        band: tau_sn_band(c_rate_now),
    })
}

/// State space for an applied current.
pub fn state_space_for_current(params: &ModelParams, dt: f64, current: f64) -> Result<StateSpace> {
    build_with_capacity(
        params,
        dt,
        params.c_rate(current),
        capacity_for_current(params, current),
    )
}

pub fn to_vector(x: &ModelState) -> Vector5<f64> {
    Vector5::from(x.as_array())
}

pub fn from_vector(v: &Vector5<f64>) -> ModelState {
    ModelState::from_array([v[0], v[1], v[2], v[3], v[4]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::step;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_a_matrix() {
        let p = ModelParams::reference();
        let ss = build_state_space(&p, 1.0, 1.0).unwrap();
        let expected = [1.0, 1.0 - 1.0 / 1.85, 1.0 - 1.0 / 1.1, 1.0 - 1.0 / 80.0, 1.0 - 1.0 / 80.0];
        for (a, e) in ss.a.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert_eq!(ss.a[0], 1.0);
        assert!(ss.a.iter().all(|&a| a > 0.0 && a <= 1.0));
    }

    #[test]
    fn continuous_limit() {
        let p = ModelParams::reference();
        let ss = build_state_space(&p, 1e-9, 1.0).unwrap();
        assert!((ss.a - Vector5::repeat(1.0)).amax() < 1e-8);
        assert!(ss.b.amax() < 1e-8);
    }

    #[test]
    fn rejects_large_dt() {
        let p = ModelParams::reference();
        assert!(build_state_space(&p, 1.2, 1.0).is_err());
        assert!(build_state_space(&p, 1.0, 3.0).is_err());
        assert!(build_state_space(&p, 0.0, 1.0).is_err());
    }

    #[test]
    fn matches_scalar_recursion() {
        let p = ModelParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = ModelState {
                s: rng.random_range(0.0..0.3),
                dx_sp: rng.random_range(-1e-3..1e-3),
                dx_sn: rng.random_range(-1e-3..1e-3),
                dc1: rng.random_range(-400.0..400.0),
                dc2: rng.random_range(-200.0..200.0),
            };
            let i = rng.random_range(-5.5..5.5);
            let scalar = step(&x, &p, i, 1.0).unwrap();
            let ss = state_space_for_current(&p, 1.0, i).unwrap();
            let matrix = from_vector(&ss.propagate(&to_vector(&x), i));
            for (a, b) in scalar.as_array().iter().zip(matrix.as_array()) {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst <= 1e-12, "max abs diff {worst}");
    }
}
