//! Current excitation profiles and sensor noise.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Tolerance on the spacing of a uniform grid, s.
pub const UNIFORM_TOL: f64 = 1e-9;

/// A sampled current trace, optionally with a measured voltage column.
///
/// `current[k]` is held constant on `[t[k], t[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentProfile {
    pub t: Vec<f64>,
    pub current: Vec<f64>,
    pub voltage: Option<Vec<f64>>,
    pub dt_nominal: f64,
    pub label: String,
    /// Whether every spacing equals `dt_nominal` within [`UNIFORM_TOL`].
    pub uniform: bool,
}

impl CurrentProfile {
    pub fn new(t: Vec<f64>, current: Vec<f64>, voltage: Option<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        if t.len() != current.len() {
            return Err(Error::LengthMismatch(t.len(), current.len()));
        }
        if let Some(v) = &voltage {
            if v.len() != t.len() {
                return Err(Error::LengthMismatch(t.len(), v.len()));
            }
        }
        if t.is_empty() {
            return Err(Error::config("profile has no samples"));
        }
        if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::config(format!("time must increase strictly (sample {})", k + 1)));
        }
        let dt_nominal = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
        let uniform = t.windows(2).all(|w| (w[1] - w[0] - dt_nominal).abs() <= UNIFORM_TOL);
        Ok(Self {
            t,
            current,
            voltage,
            dt_nominal,
            label: label.into(),
            uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    /// Trapezoidal integral of the current, A·s.
    pub fn charge_trapezoid(&self) -> f64 {
        self.t
            .windows(2)
            .zip(self.current.windows(2))
            .map(|(t, i)| 0.5 * (i[0] + i[1]) * (t[1] - t[0]))
            .sum()
    }

    /// Integral of the zero-order-hold current, A·s.
    pub fn charge_held(&self) -> f64 {
        self.t
            .windows(2)
            .zip(&self.current)
            .map(|(t, i)| i * (t[1] - t[0]))
            .sum()
    }

    /// Keeps samples up to and including `t_end`.
    pub fn truncated(&self, t_end: f64) -> Self {
        let n = self.t.partition_point(|&t| t <= t_end).max(1);
        Self {
            t: self.t[..n].to_vec(),
            current: self.current[..n].to_vec(),
            voltage: self.voltage.as_ref().map(|v| v[..n].to_vec()),
            ..self.clone()
        }
    }

    /// Concatenates `times` copies end to end on the same grid.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        if !self.uniform || self.len() < 2 {
            return Err(Error::config("only uniform profiles can be repeated"));
        }
        let n = self.len();
        let mut t = Vec::with_capacity(n * times);
        let mut current = Vec::with_capacity(n * times);
        for r in 0..times {
            for k in 0..n {
                t.push(self.t[0] + (r * n + k) as f64 * self.dt_nominal);
                current.push(self.current[k]);
            }
        }
        Self::new(t, current, None, format!("{} x{times}", self.label))
    }
}

fn uniform_grid(duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("dt must be positive, got {dt}")));
    }
    if !(duration >= 0.0) {
        return Err(Error::config(format!("duration must be non-negative, got {duration}")));
    }
    let n = (duration / dt + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * dt).collect())
}

/// Constant-current discharge at `c_rate` of the 1-hour current of `q_all_as` (A·s).
pub fn constant_current(c_rate: f64, q_all_as: f64, duration: f64, dt: f64) -> Result<CurrentProfile> {
    if !(c_rate > 0.0) {
        return Err(Error::config(format!("C-rate must be positive, got {c_rate}")));
    }
    let amps = c_rate * q_all_as / 3600.0;
    let t = uniform_grid(duration, dt)?;
    let current = vec![amps; t.len()];
    CurrentProfile::new(t, current, None, format!("{c_rate}C constant current"))
}

/// Constant current, ending at the first sample where `cutoff(t, i)` returns true.
pub fn constant_current_until(
    c_rate: f64,
    q_all_as: f64,
    max_duration: f64,
    dt: f64,
    mut cutoff: impl FnMut(f64, f64) -> bool,
) -> Result<CurrentProfile> {
    let full = constant_current(c_rate, q_all_as, max_duration, dt)?;
    let end = full
        .t
        .iter()
        .zip(&full.current)
        .position(|(&t, &i)| cutoff(t, i))
        .unwrap_or(full.len() - 1);
    Ok(full.truncated(full.t[end]))
}

/// C-rate envelope of the synthetic dynamic cycle: `lower <= 0 <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            lower: -2.0,
            upper: 2.0,
        }
    }
}

/// Pulse-train stand-in for an urban drive cycle.
///
/// Pulses last 2-20 s. About 70 % of pulses discharge at up to `upper`,
/// 20 % charge at up to `lower`, the rest are rests. Once the net
/// discharged charge would exceed 80 % of `q_all_as`, discharge pulses are
/// replaced by rests.
pub fn synthetic_dynamic(
    duration: f64,
    dt: f64,
    seed: u64,
    envelope: Envelope,
    q_all_as: f64,
) -> Result<CurrentProfile> {
    if !(envelope.lower >= -3.0 && envelope.lower <= 0.0 && envelope.upper >= 0.0 && envelope.upper <= 3.0) {
        return Err(Error::config(format!(
            "envelope ({}, {}) must satisfy -3 <= lower <= 0 <= upper <= 3",
            envelope.lower, envelope.upper
        )));
    }
    let t = uniform_grid(duration, dt)?;
    let one_c = q_all_as / 3600.0;
    let cap = 0.8 * q_all_as;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = Vec::with_capacity(t.len());
    let mut net = 0.0;
    while current.len() < t.len() {
        let len_s = rng.random_range(2.0..=20.0);
        let steps = ((len_s / dt).round() as usize).max(1);
        let kind: f64 = rng.random();
        let level = if kind < 0.7 {
            envelope.upper * rng.random_range(0.25..=1.0)
        } else if kind < 0.9 {
            envelope.lower * rng.random_range(0.1..=0.6)
        } else {
            0.0
        };
        let mut amps = level * one_c;
        if net + amps * dt * steps as f64 > cap && amps > 0.0 {
            amps = 0.0;
        }
        for _ in 0..steps {
            if current.len() == t.len() {
                break;
            }
            current.push(amps);
            net += amps * dt;
        }
    }
    CurrentProfile::new(t, current, None, format!("synthetic dynamic (seed {seed})"))
}

/// Named built-in profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileSpec {
    ConstantCurrent { c_rate: f64 },
    Dynamic {
        #[serde(default)]
        envelope: Envelope,
        #[serde(default)]
        seed: u64,
    },
    Csv { path: std::path::PathBuf },
}

impl ProfileSpec {
    /// Parses `1c`, `0.5c`, `2C`, `dynamic`, or treats the text as a CSV path.
    pub fn parse_name(name: &str) -> Self {
        let lower = name.trim().to_ascii_lowercase();
        if lower == "dynamic" || lower == "udds" {
            return ProfileSpec::Dynamic {
                envelope: Envelope::default(),
                seed: 0,
            };
        }
        if let Some(rate) = lower.strip_suffix('c').and_then(|r| r.parse::<f64>().ok()) {
            return ProfileSpec::ConstantCurrent { c_rate: rate };
        }
        ProfileSpec::Csv { path: name.into() }
    }

    pub fn build(&self, params: &ModelParams, duration: f64, dt: f64) -> Result<CurrentProfile> {
        match self {
            ProfileSpec::ConstantCurrent { c_rate } => constant_current(*c_rate, params.q_all, duration, dt),
            ProfileSpec::Dynamic { envelope, seed } => {
                synthetic_dynamic(duration, dt, *seed, *envelope, params.q_all)
            }
            ProfileSpec::Csv { path } => ingest_csv(path, &ColumnMap::default()),
        }
    }

    pub fn short_name(&self) -> String {
        match self {
            ProfileSpec::ConstantCurrent { c_rate } => format!("{c_rate}C"),
            ProfileSpec::Dynamic { .. } => "dynamic".into(),
            ProfileSpec::Csv { path } => path.display().to_string(),
        }
    }
}

/// Header names of the CSV columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub current: String,
    pub voltage: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            time: "t_s".into(),
            current: "current_a".into(),
            voltage: "voltage_v".into(),
        }
    }
}

pub fn ingest_csv(path: &Path, columns: &ColumnMap) -> Result<CurrentProfile> {
    let file = std::fs::File::open(path)?;
    let label = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_csv(file, columns, label)
}

/// Reads a profile from CSV text. Line numbers in errors count the header as line 1.
pub fn read_csv(reader: impl Read, columns: &ColumnMap, label: impl Into<String>) -> Result<CurrentProfile> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let ti = find(&columns.time).ok_or_else(|| Error::Ingest {
        line: 1,
        msg: format!("missing column {:?}", columns.time),
    })?;
    let ci = find(&columns.current).ok_or_else(|| Error::Ingest {
        line: 1,
        msg: format!("missing column {:?}", columns.current),
    })?;
    let vi = find(&columns.voltage);
    let (mut t, mut current, mut voltage) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::Ingest { line, msg: e.to_string() })?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).ok_or_else(|| Error::Ingest {
                line,
                msg: format!("missing {name} field"),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Ingest {
                line,
                msg: format!("cannot parse {name} value {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    line,
                    msg: format!("non-finite {name} value"),
                });
            }
            Ok(v)
        };
        let tv = field(ti, "time")?;
        if let Some(&last) = t.last() {
            if !(tv > last) {
                return Err(Error::Ingest {
                    line,
                    msg: format!("time {tv} does not increase after {last}"),
                });
            }
        }
        t.push(tv);
        current.push(field(ci, "current")?);
        if let Some(vi) = vi {
            voltage.push(field(vi, "voltage")?);
        }
    }
    if t.is_empty() {
        return Err(Error::Ingest {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    CurrentProfile::new(t, current, vi.map(|_| voltage), label)
}

pub fn write_csv(profile: &CurrentProfile, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    match &profile.voltage {
        Some(v) => {
            w.write_record(["t_s", "current_a", "voltage_v"])?;
            for k in 0..profile.len() {
                w.write_record([
                    profile.t[k].to_string(),
                    profile.current[k].to_string(),
                    v[k].to_string(),
                ])?;
            }
        }
        None => {
            w.write_record(["t_s", "current_a"])?;
            for k in 0..profile.len() {
                w.write_record([profile.t[k].to_string(), profile.current[k].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(profile: &CurrentProfile, path: &Path) -> Result<()> {
    write_csv(profile, std::fs::File::create(path)?)
}

/// Shape of the additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseShape {
    #[default]
    Gaussian,
    /// Equal-weight mix of a Gaussian and a uniform draw with the same variance.
    UniformMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// V
    #[serde(default)]
    pub sigma_v: f64,
    /// A
    #[serde(default)]
    pub sigma_i: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub shape: NoiseShape,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 0,
            shape: NoiseShape::Gaussian,
        }
    }

    pub fn voltage(sigma_v: f64, seed: u64) -> Self {
        Self {
            sigma_v,
            seed,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_v >= 0.0 && self.sigma_i >= 0.0) {
            return Err(Error::config("noise standard deviations must be non-negative"));
        }
        Ok(())
    }
}

/// Deterministic zero-mean noise source.
pub struct NoiseSource {
    rng: ChaCha8Rng,
    shape: NoiseShape,
}

impl NoiseSource {
    pub fn new(seed: u64, shape: NoiseShape) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            shape,
        }
    }

    pub fn draw(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
        match self.shape {
            NoiseShape::Gaussian => normal.sample(&mut self.rng),
            NoiseShape::UniformMixture => {
                if self.rng.random::<bool>() {
                    normal.sample(&mut self.rng)
                } else {
                    let half = sigma * 3f64.sqrt();
                    self.rng.random_range(-half..=half)
                }
            }
        }
    }

    pub fn add(&mut self, trace: &[f64], sigma: f64) -> Vec<f64> {
        trace.iter().map(|v| v + self.draw(sigma)).collect()
    }
}

/// Noisy copy of `profile`: current noise with `sigma_i`, and voltage noise
/// with `sigma_v` when a voltage column is present.
pub fn add_noise(profile: &CurrentProfile, spec: &NoiseSpec) -> Result<CurrentProfile> {
    spec.validate()?;
    let mut src = NoiseSource::new(spec.seed, spec.shape);
    let current = src.add(&profile.current, spec.sigma_i);
    let voltage = profile.voltage.as_ref().map(|v| src.add(v, spec.sigma_v));
    Ok(CurrentProfile {
        current,
        voltage,
        ..profile.clone()
    })
}

/// Noisy copy of a bare trace.
pub fn add_noise_to_trace(trace: &[f64], sigma: f64, seed: u64, shape: NoiseShape) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::config("noise standard deviation must be non-negative"));
    }
    Ok(NoiseSource::new(seed, shape).add(trace, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: f64 = 2894.1 * 3.6;

    #[test]
    fn constant_current_amplitudes() {
        let p = constant_current(1.0, Q, 10.0, 1.0).unwrap();
        assert!((p.current[0] - 2.8941).abs() < 1e-12);
        assert_eq!(p.len(), 11);
        let p2 = constant_current(2.0, Q, 10.0, 1.0).unwrap();
        assert!((p2.current[0] - 5.7882).abs() < 1e-12);
        assert!(constant_current(0.0, Q, 10.0, 1.0).is_err());
        assert!(constant_current(1.0, Q, 10.0, 0.0).is_err());
    }

    #[test]
    fn cutoff_hook_truncates() {
        let p = constant_current_until(1.0, Q, 100.0, 1.0, |t, _| t >= 42.0).unwrap();
        assert_eq!(p.t.last().copied(), Some(42.0));
    }

    #[test]
    fn dynamic_zero_envelope() {
        let env = Envelope { lower: 0.0, upper: 0.0 };
        let p = synthetic_dynamic(100.0, 1.0, 3, env, Q).unwrap();
        assert!(p.current.iter().all(|&i| i == 0.0));
    }

    #[test]
    fn dynamic_rejects_wide_envelope() {
        let env = Envelope { lower: -4.0, upper: 2.0 };
        assert!(synthetic_dynamic(100.0, 1.0, 3, env, Q).is_err());
    }

    #[test]
    fn dynamic_is_uniform_and_has_both_signs() {
        let p = synthetic_dynamic(1400.0, 1.0, 11, Envelope::default(), Q).unwrap();
        assert!(p.uniform);
        assert!(p.current.iter().any(|&i| i > 0.0));
        assert!(p.current.iter().any(|&i| i < 0.0));
    }

    #[test]
    fn read_rejects_bad_rows() {
        let err = read_csv("t_s,current_a\n0,1\n1,x\n".as_bytes(), &ColumnMap::default(), "x").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 3, .. }), "{err}");
    }

    #[test]
    fn noise_shapes_are_zero_mean() {
        for shape in [NoiseShape::Gaussian, NoiseShape::UniformMixture] {
            let v = add_noise_to_trace(&vec![0.0; 50_000], 0.01, 1, shape).unwrap();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean.abs() < 3e-4, "{shape:?} mean {mean}");
        }
    }

    #[test]
    fn parse_profile_names() {
        assert_eq!(ProfileSpec::parse_name("1c"), ProfileSpec::ConstantCurrent { c_rate: 1.0 });
        assert_eq!(ProfileSpec::parse_name("0.5C"), ProfileSpec::ConstantCurrent { c_rate: 0.5 });
        assert!(matches!(ProfileSpec::parse_name("dynamic"), ProfileSpec::Dynamic { .. }));
        assert!(matches!(ProfileSpec::parse_name("data/run.csv"), ProfileSpec::Csv { .. }));
    }
}
