//! Plant + profile + estimator compositions and their metrics.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    capacity_for_current, soc_of_state, step, terminal_voltage, ModelParams, ModelState, OcpCurves,
    ParamFile,
};
use crate::observer::{Estimator, EstimatorConfig, ObserverGains, ThetaVector, Variant, EPSILON_INT};
use crate::profiles::{CurrentProfile, NoiseSource, NoiseSpec, ProfileSpec};

/// SOC error below which an estimate counts as converged.
pub const CONVERGENCE_THRESHOLD: f64 = 0.01;

/// Linear cycle-aging drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingSpec {
    pub cycles: f64,
    #[serde(default = "AgingSpec::default_fade")]
    pub capacity_fade_per_100: f64,
    #[serde(default = "AgingSpec::default_growth")]
    pub resistance_growth_per_100: f64,
    /// Absolute decrease of `x_sn0`.
    #[serde(default = "AgingSpec::default_shift")]
    pub stoich_shift_per_100: f64,
}

impl AgingSpec {
    fn default_fade() -> f64 {
        0.02
    }
    fn default_growth() -> f64 {
        0.05
    }
    fn default_shift() -> f64 {
        0.002
    }

    pub fn cycles(cycles: f64) -> Self {
        Self {
            cycles,
            capacity_fade_per_100: Self::default_fade(),
            resistance_growth_per_100: Self::default_growth(),
            stoich_shift_per_100: Self::default_shift(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.cycles,
            self.capacity_fade_per_100,
            self.resistance_growth_per_100,
            self.stoich_shift_per_100,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("aging knobs must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Applies the aging drift to `base`.
pub fn age_params(base: &ModelParams, spec: &AgingSpec) -> Result<ModelParams> {
    spec.validate()?;
    let hundreds = spec.cycles / 100.0;
    let aged = ModelParams {
        q_all: base.q_all * (1.0 - spec.capacity_fade_per_100 * hundreds),
        r_ohm: base.r_ohm * (1.0 + spec.resistance_growth_per_100 * hundreds),
        x_sn0: base.x_sn0 - spec.stoich_shift_per_100 * hundreds,
        ..*base
    };
    aged.validate()
        .map_err(|e| Error::config(format!("aged parameters after {} cycles are invalid: {e}", spec.cycles)))?;
    Ok(aged)
}

fn default_dt() -> f64 {
    1.0
}
fn default_initial_soc() -> f64 {
    1.0
}
fn default_fixed_interval() -> (f64, f64) {
    (0.0, 0.001)
}
fn default_epsilon() -> f64 {
    EPSILON_INT
}

/// One experiment: plant, excitation, estimator, noise and drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Row label for summaries (e.g. "1C", "dynamic", "100 cycles").
    #[serde(default)]
    pub condition: String,
    pub profile: ProfileSpec,
    pub variant: Variant,
    #[serde(default)]
    pub gains: ObserverGains,
    /// Plant SOC minus initial estimate.
    #[serde(default)]
    pub init_soc_error: f64,
    /// Plant SOC at t = 0.
    #[serde(default = "default_initial_soc")]
    pub initial_soc: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub aging: Option<AgingSpec>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// s; ignored for CSV profiles.
    pub duration: f64,
    #[serde(default = "default_fixed_interval")]
    pub fixed_interval: (f64, f64),
    #[serde(default = "default_epsilon")]
    pub epsilon_int: f64,
    /// Nominal parameters; defaults to the reference cell.
    #[serde(default)]
    pub nominal: Option<ParamFile>,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, profile: ProfileSpec, variant: Variant, duration: f64) -> Self {
        Self {
            name: name.into(),
            condition: profile.short_name(),
            profile,
            variant,
            gains: ObserverGains::reference(),
            init_soc_error: 0.0,
            initial_soc: 1.0,
            noise: NoiseSpec::none(),
            aging: None,
            dt: 1.0,
            duration,
            fixed_interval: default_fixed_interval(),
            epsilon_int: EPSILON_INT,
            nominal: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-0.5..=0.5).contains(&self.init_soc_error) {
            return Err(Error::config(format!(
                "init_soc_error {} outside [-0.5, 0.5]",
                self.init_soc_error
            )));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(Error::config("initial_soc must lie in [0, 1]"));
        }
        let est = self.initial_soc - self.init_soc_error;
        if !(0.0..=1.0).contains(&est) {
            return Err(Error::config(format!("initial SOC estimate {est} outside [0, 1]")));
        }
        if !(self.dt > 0.0) || !(self.duration >= 0.0) {
            return Err(Error::config("dt must be positive and duration non-negative"));
        }
        let (lo, hi) = self.fixed_interval;
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::config("fixed dead-zone interval must satisfy 0 <= lo < hi"));
        }
        if !(self.epsilon_int > 0.0 && self.epsilon_int < 1.0) {
            return Err(Error::config("epsilon_int must lie in (0, 1)"));
        }
        self.gains.validate()?;
        self.noise.validate()?;
        if let Some(a) = &self.aging {
            a.validate()?;
        }
        self.nominal_params()?.validate()
    }

    pub fn nominal_params(&self) -> Result<ModelParams> {
        let p = match &self.nominal {
            Some(f) => ModelParams::from(f),
            None => ModelParams::reference(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn truth_params(&self) -> Result<ModelParams> {
        let nominal = self.nominal_params()?;
        match &self.aging {
            Some(a) => age_params(&nominal, a),
            None => Ok(nominal),
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            variant: self.variant,
            gains: self.gains,
            fixed_interval: self.fixed_interval,
            epsilon_int: self.epsilon_int,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Plant trajectory and the measurements the estimator sees.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub t: Vec<f64>,
    /// Applied (noiseless) current.
    pub current_true: Vec<f64>,
    /// Current seen by the estimator.
    pub current_meas: Vec<f64>,
    pub y_meas: Vec<f64>,
    pub soc_true: Vec<f64>,
    /// Why the plant stopped before the end of the profile.
    pub terminated: Option<String>,
}

impl Measurements {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Runs the plant over `profile`, sampling the terminal voltage at every grid
/// point before applying that sample's current for the next interval.
///
/// A voltage column in `profile` replaces the simulated voltage.
pub fn simulate_plant(
    truth: &ModelParams,
    curves: &OcpCurves,
    profile: &CurrentProfile,
    initial_soc: f64,
    noise: &NoiseSpec,
) -> Result<Measurements> {
    noise.validate()?;
    let mut src = NoiseSource::new(noise.seed, noise.shape);
    let mut x = ModelState::at_soc(truth, initial_soc);
    let n = profile.len();
    let mut out = Measurements {
        t: Vec::with_capacity(n),
        current_true: Vec::with_capacity(n),
        current_meas: Vec::with_capacity(n),
        y_meas: Vec::with_capacity(n),
        soc_true: Vec::with_capacity(n),
        terminated: None,
    };
    for k in 0..n {
        let i = profile.current[k];
        let y = match &profile.voltage {
            Some(v) => v[k],
            None => match terminal_voltage(&x, truth, curves, i) {
                Ok(v) => v.u_terminal,
                Err(e) => {
                    out.terminated = Some(format!("plant at t = {}: {e}", profile.t[k]));
                    break;
                }
            },
        };
        out.t.push(profile.t[k]);
        out.current_true.push(i);
        out.current_meas.push(i + src.draw(noise.sigma_i));
        out.y_meas.push(y + src.draw(noise.sigma_v));
        out.soc_true.push(soc_of_state(&x, truth).soc);
        if k + 1 < n {
            match step(&x, truth, i, profile.t[k + 1] - profile.t[k]) {
                Ok(next) => x = next,
                Err(e) => {
                    out.terminated = Some(format!("plant at t = {}: {e}", profile.t[k + 1]));
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// SOC obtained by coulomb counting `current` against the rate-corrected capacity.
pub fn coulomb_count(truth: &ModelParams, t: &[f64], current: &[f64], initial_soc: f64) -> Vec<f64> {
    let mut soc = initial_soc;
    let mut out = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        out.push(soc);
        if k + 1 < t.len() {
            soc -= (t[k + 1] - t[k]) * current[k] / capacity_for_current(truth, current[k]);
        }
    }
    out
}

/// One row of the per-step log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRecord {
    pub t_s: f64,
    pub current_a: f64,
    pub y_meas_v: f64,
    pub y_hat_v: f64,
    pub e_y_v: f64,
    pub bound_v: f64,
    pub gate_open: bool,
    pub soc_true: f64,
    pub soc_est: f64,
    pub theta_d_p: f64,
    pub theta_d_n: f64,
    pub theta_q_all_mah: f64,
    pub theta_x_sp0: f64,
    pub theta_x_sn0: f64,
}

pub const LOG_COLUMNS: [&str; 14] = [
    "t_s",
    "current_a",
    "y_meas_v",
    "y_hat_v",
    "e_y_v",
    "bound_v",
    "gate_open",
    "soc_true",
    "soc_est",
    "theta_D_p",
    "theta_D_n",
    "theta_Q_all_mah",
    "theta_x_sp0",
    "theta_x_sn0",
];

pub fn write_log(log: &[LogRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(LOG_COLUMNS)?;
    for r in log {
        w.write_record([
            r.t_s.to_string(),
            r.current_a.to_string(),
            r.y_meas_v.to_string(),
            r.y_hat_v.to_string(),
            r.e_y_v.to_string(),
            r.bound_v.to_string(),
            (r.gate_open as u8).to_string(),
            r.soc_true.to_string(),
            r.soc_est.to_string(),
            r.theta_d_p.to_string(),
            r.theta_d_n.to_string(),
            r.theta_q_all_mah.to_string(),
            r.theta_x_sp0.to_string(),
            r.theta_x_sn0.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_log_file(log: &[LogRecord], path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_log(log, file)
}

/// Metrics of one scenario run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub name: String,
    pub condition: String,
    pub variant: Variant,
    /// %
    pub soc_rmse: f64,
    /// %
    pub max_abs_err: f64,
    /// `None` when the run never settled below the threshold.
    pub convergence_time_s: Option<f64>,
    /// RMSE (%) over the samples from the convergence time on.
    pub settled_rmse: Option<f64>,
    /// Estimator loop only, excluding plant simulation and I/O.
    pub wall_clock_ms: f64,
    pub gate_duty: f64,
    pub steps: usize,
    pub projections: usize,
    pub theta_final: ThetaVector,
    /// Set when the plant or the estimator stopped the run early.
    pub terminated: Option<String>,
    #[serde(skip)]
    pub log: Vec<LogRecord>,
}

impl RunResult {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Root-mean-square difference in percent.
pub fn soc_rmse(truth: &[f64], est: &[f64]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch(truth.len(), est.len()));
    }
    if truth.is_empty() {
        return Err(Error::config("RMSE needs at least one sample"));
    }
    let ms = truth.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / truth.len() as f64;
    Ok(ms.sqrt() * 100.0)
}

/// Index of the first sample after which `|err| < threshold` holds to the end.
pub fn convergence_index(err: &[f64], threshold: f64) -> Option<usize> {
    match err.iter().rposition(|e| !(e.abs() < threshold)) {
        None => Some(0),
        Some(k) if k + 1 < err.len() => Some(k + 1),
        Some(_) => None,
    }
}

/// Earliest time (s) after which `|err| < threshold` for all later samples.
pub fn convergence_time(err: &[f64], dt: f64, threshold: f64) -> Option<f64> {
    convergence_index(err, threshold).map(|k| k as f64 * dt)
}

/// Runs the estimator over pre-computed measurements.
pub fn run_estimator(
    cfg: &ScenarioConfig,
    nominal: &ModelParams,
    curves: &OcpCurves,
    meas: &Measurements,
) -> Result<RunResult> {
    let initial_est = cfg.initial_soc - cfg.init_soc_error;
    let mut est = Estimator::new(cfg.estimator_config(), *nominal, curves, ModelState::at_soc(nominal, initial_est))?;
    let n = meas.len();
    let mut log = Vec::with_capacity(n);
    let mut terminated = meas.terminated.clone();
    let started = Instant::now();
    for k in 0..n {
        let dt = if k + 1 < n {
            meas.t[k + 1] - meas.t[k]
        } else if k > 0 {
            meas.t[k] - meas.t[k - 1]
        } else {
            cfg.dt
        };
        let soc_est = est.soc();
        let state = match est.step(meas.current_meas[k], meas.y_meas[k], dt) {
            Ok(s) => *s,
            Err(e) => {
                terminated = Some(format!("estimator at t = {}: {e}", meas.t[k]));
                break;
            }
        };
        let th = state.theta_hat;
        log.push(LogRecord {
            t_s: meas.t[k],
            current_a: meas.current_meas[k],
            y_meas_v: meas.y_meas[k],
            y_hat_v: state.y_hat,
            e_y_v: state.e_y,
            bound_v: state.bound,
            gate_open: state.gate_open,
            soc_true: meas.soc_true[k],
            soc_est,
            theta_d_p: th.d_p,
            theta_d_n: th.d_n,
            theta_q_all_mah: th.q_all / crate::model::MAH_TO_AS,
            theta_x_sp0: th.x_sp0,
            theta_x_sn0: th.x_sn0,
        });
    }
    let wall_clock_ms = started.elapsed().as_secs_f64() * 1e3;
    summarize(cfg, log, wall_clock_ms, est.projections, est.state.theta_hat, terminated)
}

fn summarize(
    cfg: &ScenarioConfig,
    log: Vec<LogRecord>,
    wall_clock_ms: f64,
    projections: usize,
    theta_final: ThetaVector,
    terminated: Option<String>,
) -> Result<RunResult> {
    if log.is_empty() {
        return Err(Error::config(format!(
            "scenario {:?} produced no samples{}",
            cfg.name,
            terminated.map(|t| format!(" ({t})")).unwrap_or_default()
        )));
    }
    let truth: Vec<f64> = log.iter().map(|r| r.soc_true).collect();
    let est: Vec<f64> = log.iter().map(|r| r.soc_est).collect();
    let err: Vec<f64> = truth.iter().zip(&est).map(|(a, b)| a - b).collect();
    let conv = convergence_index(&err, CONVERGENCE_THRESHOLD);
    let settled_rmse = conv.map(|k| soc_rmse(&truth[k..], &est[k..])).transpose()?;
    let t0 = log[0].t_s;
    Ok(RunResult {
        name: cfg.name.clone(),
        condition: cfg.condition.clone(),
        variant: cfg.variant,
        soc_rmse: soc_rmse(&truth, &est)?,
        max_abs_err: err.iter().fold(0.0_f64, |m, e| m.max(e.abs())) * 100.0,
        convergence_time_s: conv.map(|k| log[k].t_s - t0),
        settled_rmse,
        wall_clock_ms,
        gate_duty: log.iter().filter(|r| r.gate_open).count() as f64 / log.len() as f64,
        steps: log.len(),
        projections,
        theta_final,
        terminated,
        log,
    })
}

/// Builds the profile and measurements for `cfg`.
pub fn prepare(cfg: &ScenarioConfig, curves: &OcpCurves) -> Result<(ModelParams, Measurements)> {
    cfg.validate()?;
    let nominal = cfg.nominal_params()?;
    let truth = cfg.truth_params()?;
    let profile = cfg.profile.build(&truth, cfg.duration, cfg.dt)?;
    let meas = simulate_plant(&truth, curves, &profile, cfg.initial_soc, &cfg.noise)?;
    if meas.is_empty() {
        return Err(Error::config(format!(
            "plant produced no samples: {}",
            meas.terminated.unwrap_or_default()
        )));
    }
    Ok((nominal, meas))
}

/// Simulates the plant and runs the estimator.
pub fn run_scenario(cfg: &ScenarioConfig, curves: &OcpCurves) -> Result<RunResult> {
    let (nominal, meas) = prepare(cfg, curves)?;
    run_estimator(cfg, &nominal, curves, &meas)
}

/// Runs `cfg` and writes `<stem>.csv` (per-step log) and `<stem>.json` (summary) into `dir`.
pub fn run_and_persist(cfg: &ScenarioConfig, curves: &OcpCurves, dir: &Path, stem: &str) -> Result<(RunResult, PathBuf)> {
    let result = run_scenario(cfg, curves)?;
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    write_log_file(&result.log, &csv_path)?;
    std::fs::write(dir.join(format!("{stem}.json")), result.summary_json())?;
    Ok((result, csv_path))
}
