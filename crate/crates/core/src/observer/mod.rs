//! Dual sliding-mode observer: a state SMO, a parameter SMO, and the gate
//! that decides when the parameter SMO may run.
//!
//! The switching signal uses the sign of the voltage residual. Each state
//! (and parameter) component is oriented by the fixed sign of its voltage
//! sensitivity, so that a positive residual moves every component towards
//! the value that raises the predicted voltage. Gains are magnitudes.

pub mod lyapunov;
pub mod state_space;

pub use lyapunov::{
    bound_from_norms, dead_zone_bound, lyapunov_prepare, prepare_for_matrix,
    solve_discrete_lyapunov, spectral_radius, LyapunovCache, EPSILON_INT,
};
pub use state_space::{build_state_space, from_vector, state_space_for_current, to_vector, StateSpace};

use nalgebra::Vector5;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{propagate, terminal_voltage, ModelParams, ModelState, OcpCurves, MAH_TO_AS};

/// Voltage-sensitivity sign of each state: `[s, dx_sp, dx_sn, dc1, dc2]`.
pub const STATE_ORIENTATION: [f64; 5] = [-1.0, -1.0, 1.0, -1.0, -1.0];

/// Voltage-sensitivity sign of `[D_p, D_n, Q_all, x_sp0, x_sn0]` while
/// discharging. The capacity entry follows the sign of the current.
pub const THETA_ORIENTATION: [f64; 5] = [-1.0, -1.0, 1.0, -1.0, 1.0];

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Estimator flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Parameter SMO runs every step.
    PlainDual,
    /// Parameter SMO runs while |e_y| lies inside a fixed interval.
    FixedDz,
    /// Parameter SMO runs while |e_y| is below the Lyapunov bound.
    AdaptiveDz,
    /// No parameter adaptation.
    StateOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::StateOnly,
        Variant::PlainDual,
        Variant::FixedDz,
        Variant::AdaptiveDz,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::PlainDual => "Dual SMO",
            Variant::FixedDz => "Fixed dead-zone dual SMO",
            Variant::AdaptiveDz => "Adaptive dead-zone dual SMO",
            Variant::StateOnly => "SMO",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Variant::PlainDual => "plain-dual",
            Variant::FixedDz => "fixed-dz",
            Variant::AdaptiveDz => "adaptive-dz",
            Variant::StateOnly => "state-only",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-dual" | "plain" | "dual" => Ok(Variant::PlainDual),
            "fixed-dz" | "fixed" => Ok(Variant::FixedDz),
            "adaptive-dz" | "adaptive" => Ok(Variant::AdaptiveDz),
            "state-only" | "smo" => Ok(Variant::StateOnly),
            other => Err(Error::config(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Sliding and injection gains of both observers.
///
/// Parameter gains act on `[D_p, D_n, Q_all (mAh), x_sp0, x_sn0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    pub k: [f64; 5],
    pub l: [f64; 5],
    pub k_theta: [f64; 5],
    pub l_theta: [f64; 5],
}

impl ObserverGains {
    /// Gain vectors used for the published simulations.
    pub fn reference() -> Self {
        Self {
            k: [0.005, 2.5e-6, 2.5e-6, 0.25, 0.25],
            l: [0.002, 1e-6, 1e-6, 0.2, 0.2],
            k_theta: [0.0025e-3, 0.0025e-3, 2.5e-3, 0.0025e-3, 0.0025e-3],
            l_theta: [0.0005, 0.0005, 0.5, 0.0005, 0.0005],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::config("sliding gain K must be strictly positive"));
        }
        let finite = self
            .l
            .iter()
            .chain(&self.k_theta)
            .chain(&self.l_theta)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("gains must be finite"));
        }
        Ok(())
    }

    pub fn k_vec(&self) -> Vector5<f64> {
        Vector5::from(self.k)
    }

    pub fn l_vec(&self) -> Vector5<f64> {
        Vector5::from(self.l)
    }
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self::reference()
    }
}

/// Verdict of the discrete sliding-mode existence interval for one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainVerdict {
    Pass,
    /// `K <= Δw`.
    FailLower,
    /// `K > |(A + I) x̃| − Δw`.
    FailUpper,
}

/// Componentwise check of `|(A + I) x̃| − Δw >= K > Δw`.
pub fn check_gain_window(
    k: &Vector5<f64>,
    a_diag: &Vector5<f64>,
    x_err_bound: &Vector5<f64>,
    dw: f64,
) -> [GainVerdict; 5] {
    let mut out = [GainVerdict::Pass; 5];
    for i in 0..5 {
        let upper = ((a_diag[i] + 1.0) * x_err_bound[i]).abs() - dw;
        out[i] = if !(k[i] > dw) {
            GainVerdict::FailLower
        } else if k[i] > upper {
            GainVerdict::FailUpper
        } else {
            GainVerdict::Pass
        };
    }
    out
}

/// The five adapted parameters. `q_all` is in A·s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub d_p: f64,
    pub d_n: f64,
    pub q_all: f64,
    pub x_sp0: f64,
    pub x_sn0: f64,
}

impl ThetaVector {
    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            d_p: p.d_p,
            d_n: p.d_n,
            q_all: p.q_all,
            x_sp0: p.x_sp0,
            x_sn0: p.x_sn0,
        }
    }

    pub fn apply(&self, base: &ModelParams) -> ModelParams {
        ModelParams {
            d_p: self.d_p,
            d_n: self.d_n,
            q_all: self.q_all,
            x_sp0: self.x_sp0,
            x_sn0: self.x_sn0,
            ..*base
        }
    }

    /// Vector in adaptation units (capacity in mAh).
    pub fn to_gain_units(&self) -> Vector5<f64> {
        Vector5::new(self.d_p, self.d_n, self.q_all / MAH_TO_AS, self.x_sp0, self.x_sn0)
    }

    pub fn from_gain_units(v: &Vector5<f64>) -> Self {
        Self {
            d_p: v[0],
            d_n: v[1],
            q_all: v[2] * MAH_TO_AS,
            x_sp0: v[3],
            x_sn0: v[4],
        }
    }
}

/// Box constraint on the adapted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub lower: ThetaVector,
    pub upper: ThetaVector,
}

impl ThetaBox {
    /// ±20 % around `nominal`; capacity in [50 %, 110 %]; stoichiometric
    /// quantities additionally kept inside (0, 1).
    pub fn around(nominal: &ThetaVector) -> Self {
        let cap = |v: f64| v.min(1.0 - 1e-6);
        Self {
            lower: ThetaVector {
                d_p: nominal.d_p * 0.8,
                d_n: nominal.d_n * 0.8,
                q_all: nominal.q_all * 0.5,
                x_sp0: nominal.x_sp0 * 0.8,
                x_sn0: nominal.x_sn0 * 0.8,
            },
            upper: ThetaVector {
                d_p: cap(nominal.d_p * 1.2),
                d_n: cap(nominal.d_n * 1.2),
                q_all: nominal.q_all * 1.1,
                x_sp0: cap(nominal.x_sp0 * 1.2),
                x_sn0: cap(nominal.x_sn0 * 1.2),
            },
        }
    }

    /// Clamps `theta` into the box; returns whether any component moved.
    pub fn project(&self, theta: &mut ThetaVector) -> bool {
        let mut hit = false;
        let mut clamp = |v: &mut f64, lo: f64, hi: f64| {
            let c = v.clamp(lo, hi);
            if c != *v {
                hit = true;
                *v = c;
            }
        };
        clamp(&mut theta.d_p, self.lower.d_p, self.upper.d_p);
        clamp(&mut theta.d_n, self.lower.d_n, self.upper.d_n);
        clamp(&mut theta.q_all, self.lower.q_all, self.upper.q_all);
        clamp(&mut theta.x_sp0, self.lower.x_sp0, self.upper.x_sp0);
        clamp(&mut theta.x_sn0, self.lower.x_sn0, self.upper.x_sn0);
        hit
    }

    pub fn contains(&self, t: &ThetaVector) -> bool {
        let mut probe = *t;
        !self.project(&mut probe)
    }
}

/// Joint state/parameter estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub x_hat: ModelState,
    pub theta_hat: ThetaVector,
    /// Gate radius used on the last step, V.
    pub bound: f64,
    pub gate_open: bool,
    /// Last voltage residual `y − ŷ`, V.
    pub e_y: f64,
    /// Last predicted voltage, V.
    pub y_hat: f64,
}

impl EstimatorState {
    pub fn new(x_hat: ModelState, theta_hat: ThetaVector) -> Self {
        Self {
            x_hat,
            theta_hat,
            bound: 0.0,
            gate_open: false,
            e_y: 0.0,
            y_hat: f64::NAN,
        }
    }
}

/// Estimator settings besides the gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub variant: Variant,
    pub gains: ObserverGains,
    /// Open interval of |e_y| (V) in which the fixed dead zone adapts.
    pub fixed_interval: (f64, f64),
    /// Integrator pole shift for the Lyapunov solve.
    pub epsilon_int: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            variant: Variant::AdaptiveDz,
            gains: ObserverGains::reference(),
            fixed_interval: (0.0, 0.001),
            epsilon_int: EPSILON_INT,
        }
    }
}

/// Output of the state SMO for one step.
#[derive(Debug, Clone, Copy)]
pub struct StateUpdate {
    /// Estimate for the next sample, with `e_y` and `y_hat` of this one.
    pub next: EstimatorState,
    /// State space used for the prediction.
    pub ss: StateSpace,
    /// Estimate the residual was evaluated at.
    pub x_prev: Vector5<f64>,
    /// `x̂ + A⁻¹(K∘σ + L∘d e_y)`: the corrected estimate at the current sample.
    pub x_corrected: ModelState,
}

/// State SMO: `x̂_{k+1} = A x̂ + B i + K∘σ + L∘d e_y`, with `σ = d sgn(e_y)`.
///
/// Evaluated as a correction at the current sample followed by the plant
/// recursion, `x̂_{k+1} = f(x̂ + A⁻¹ c)`, which is the same update because `A`
/// is diagonal and `f(x) = A x + B i`.
pub fn state_smo_step(
    est: &EstimatorState,
    base: &ModelParams,
    curves: &OcpCurves,
    gains: &ObserverGains,
    current: f64,
    y_meas: f64,
    dt: f64,
) -> Result<StateUpdate> {
    let params = est.theta_hat.apply(base);
    let y_hat = terminal_voltage(&est.x_hat, &params, curves, current)?.u_terminal;
    let e_y = y_meas - y_hat;
    let ss = state_space_for_current(&params, dt, current)?;
    let x_prev = to_vector(&est.x_hat);
    let sigma = sgn(e_y);
    let mut x_corr = x_prev;
    for i in 0..5 {
        x_corr[i] += STATE_ORIENTATION[i] * (gains.k[i] * sigma + gains.l[i] * e_y) / ss.a[i];
    }
    let x_corrected = from_vector(&x_corr);
    let x_next = propagate(&x_corrected, &params, current, dt)?;
    Ok(StateUpdate {
        next: EstimatorState {
            x_hat: x_next,
            e_y,
            y_hat,
            ..*est
        },
        ss,
        x_prev,
        x_corrected,
    })
}

/// Parameter SMO. Evaluates the predictor at the corrected state `x_corrected`
/// (same sample, same current as `y_meas`) and moves θ̂ by
/// `d∘(K^θ sgn e + L^θ e)`, then projects into `bounds`.
/// Returns the updated θ̂ and whether projection clipped any component.
#[allow(clippy::too_many_arguments)]
pub fn param_smo_step(
    theta: &ThetaVector,
    x_corrected: &ModelState,
    base: &ModelParams,
    curves: &OcpCurves,
    gains: &ObserverGains,
    bounds: &ThetaBox,
    current: f64,
    y_meas: f64,
) -> Result<(ThetaVector, bool)> {
    let params = theta.apply(base);
    let y_hat = terminal_voltage(x_corrected, &params, curves, current)?.u_terminal;
    let e = y_meas - y_hat;
    let sigma = sgn(e);
    let mut v = theta.to_gain_units();
    for i in 0..5 {
        let dir = if i == 2 {
            sgn(current)
        } else {
            THETA_ORIENTATION[i]
        };
        v[i] += dir * (gains.k_theta[i] * sigma + gains.l_theta[i] * e);
    }
    let mut next = ThetaVector::from_gain_units(&v);
    let clipped = bounds.project(&mut next);
    Ok((next, clipped))
}

/// Per-step inputs to [`joint_step`].
#[derive(Debug, Clone, Copy)]
pub struct StepInputs {
    pub current: f64,
    pub y_meas: f64,
    pub dt: f64,
}

/// Lyapunov caches keyed by the `tau_sn` band (the only thing `A` depends on
/// for a fixed time step).
#[derive(Debug, Clone, Default)]
pub struct CacheBank {
    slots: [Option<(f64, LyapunovCache)>; 3],
}

impl CacheBank {
    pub fn get(&mut self, ss: &StateSpace, l: &Vector5<f64>, epsilon_int: f64) -> Result<&LyapunovCache> {
        let slot = &mut self.slots[ss.band];
        let fresh = matches!(slot, Some((dt, c)) if *dt == ss.dt && c.a_s[(1, 1)] == ss.a[1] && c.a_s[(2, 2)] == ss.a[2]);
        if !fresh {
            *slot = Some((ss.dt, lyapunov_prepare(ss, l, epsilon_int)?));
        }
        Ok(&slot.as_ref().expect("slot filled").1)
    }
}

/// One joint step: state SMO always, parameter SMO when the variant's gate
/// allows it. Returns the new state and whether θ̂ projection clipped.
#[allow(clippy::too_many_arguments)]
pub fn joint_step(
    est: &EstimatorState,
    config: &EstimatorConfig,
    base: &ModelParams,
    curves: &OcpCurves,
    bounds: &ThetaBox,
    caches: &mut CacheBank,
    inputs: StepInputs,
) -> Result<(EstimatorState, bool)> {
    let gains = &config.gains;
    let upd = state_smo_step(est, base, curves, gains, inputs.current, inputs.y_meas, inputs.dt)?;
    let mut next = upd.next;
    let abs_e = next.e_y.abs();
    let (gate, bound) = match config.variant {
        Variant::StateOnly => (false, 0.0),
        Variant::PlainDual => (true, f64::INFINITY),
        Variant::FixedDz => {
            let (lo, hi) = config.fixed_interval;
            (abs_e > lo && abs_e < hi, hi)
        }
        Variant::AdaptiveDz => {
            let l = gains.l_vec();
            let cache = caches.get(&upd.ss, &l, config.epsilon_int)?;
            let bound = dead_zone_bound(&upd.x_prev, &upd.ss, &gains.k_vec(), cache, inputs.current)?;
            (abs_e < bound, bound)
        }
    };
    next.gate_open = gate;
    next.bound = bound;
    if gate {
        let (theta, clipped) = param_smo_step(
            &next.theta_hat,
            &upd.x_corrected,
            base,
            curves,
            gains,
            bounds,
            inputs.current,
            inputs.y_meas,
        )?;
        next.theta_hat = theta;
        return Ok((next, clipped));
    }
    Ok((next, false))
}

/// Stateful wrapper that owns the configuration and Lyapunov caches.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    pub config: EstimatorConfig,
    pub base: ModelParams,
    pub bounds: ThetaBox,
    curves: &'a OcpCurves,
    caches: CacheBank,
    pub state: EstimatorState,
    pub projections: usize,
    steps: usize,
}

impl<'a> Estimator<'a> {
    /// `base` supplies the nominal parameters; θ̂ starts at its values.
    pub fn new(
        config: EstimatorConfig,
        base: ModelParams,
        curves: &'a OcpCurves,
        initial: ModelState,
    ) -> Result<Self> {
        config.gains.validate()?;
        let theta = ThetaVector::from_params(&base);
        Ok(Self {
            config,
            base,
            bounds: ThetaBox::around(&theta),
            curves,
            caches: CacheBank::default(),
            state: EstimatorState::new(initial, theta),
            projections: 0,
            steps: 0,
        })
    }

    pub fn with_bounds(mut self, bounds: ThetaBox) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn step(&mut self, current: f64, y_meas: f64, dt: f64) -> Result<&EstimatorState> {
        let (next, clipped) = joint_step(
            &self.state,
            &self.config,
            &self.base,
            self.curves,
            &self.bounds,
            &mut self.caches,
            StepInputs {
                current,
                y_meas,
                dt,
            },
        )
        .map_err(|e| e.at_step(self.steps))?;
        self.projections += clipped as usize;
        self.state = next;
        self.steps += 1;
        Ok(&self.state)
    }

    pub fn soc(&self) -> f64 {
        crate::model::soc_of_state(&self.state.x_hat, &self.state.theta_hat.apply(&self.base)).soc
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}
