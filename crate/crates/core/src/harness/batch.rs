//! Batches of independent scenarios and their summary tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OcpCurves;
use crate::observer::Variant;
use crate::par::{self, Execution};
use crate::profiles::{NoiseSpec, ProfileSpec};
use crate::scenarios::{run_scenario, write_log_file, AgingSpec, RunResult, ScenarioConfig};

/// Voltage noise used by the built-in accuracy and aging studies, V.
pub const STUDY_SIGMA_V: f64 = 0.005;
/// Constant-current run length, s.
pub const CC_DURATION: f64 = 1200.0;
/// Dynamic-profile run length, s.
pub const DYNAMIC_DURATION: f64 = 1400.0;
/// Initial SOC error of the convergence study.
pub const INIT_ERROR: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub name: String,
    #[serde(default)]
    pub execution: Execution,
    /// Worker bound; defaults to the core count.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default, rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
}

impl BatchConfig {
    pub fn new(name: impl Into<String>, scenarios: Vec<ScenarioConfig>) -> Self {
        Self {
            name: name.into(),
            execution: Execution::default(),
            threads: None,
            scenarios,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::config(format!("scenario {i} ({:?}): {e}", s.name)))?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("batch serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Replaces every noise and profile seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for s in &mut self.scenarios {
            s.noise.seed = seed;
            if let ProfileSpec::Dynamic { seed: ps, .. } = &mut s.profile {
                *ps = seed;
            }
        }
        self
    }

    /// Built-in study by name: `accuracy`, `convergence` or `aging`.
    pub fn builtin(name: &str, seed: u64) -> Result<Self> {
        match name {
            "accuracy" => Ok(accuracy_study(seed)),
            "convergence" => Ok(convergence_study(seed)),
            "aging" => Ok(aging_study(seed)),
            other => Err(Error::config(format!(
                "unknown study {other:?}; expected accuracy, convergence or aging"
            ))),
        }
    }
}

fn dynamic(seed: u64) -> ProfileSpec {
    ProfileSpec::Dynamic {
        envelope: Default::default(),
        seed,
    }
}

fn scenario(
    name: String,
    condition: &str,
    profile: ProfileSpec,
    variant: Variant,
    duration: f64,
    noise: NoiseSpec,
) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(name, profile, variant, duration);
    s.condition = condition.to_string();
    s.noise = noise;
    s
}

/// Correct initial SOC, 5 mV voltage noise, dynamic and 1C excitation.
pub fn accuracy_study(seed: u64) -> BatchConfig {
    let noise = NoiseSpec::voltage(STUDY_SIGMA_V, seed);
    let mut out = Vec::new();
    for (cond, profile, dur) in [
        ("dynamic", dynamic(seed), DYNAMIC_DURATION),
        ("1C", ProfileSpec::ConstantCurrent { c_rate: 1.0 }, CC_DURATION),
    ] {
        for v in [Variant::AdaptiveDz, Variant::PlainDual] {
            out.push(scenario(format!("accuracy-{cond}-{}", v.key()), cond, profile.clone(), v, dur, noise));
        }
    }
    BatchConfig::new("accuracy", out)
}

/// 30 % initial SOC error, noiseless measurements.
pub fn convergence_study(seed: u64) -> BatchConfig {
    let mut out = Vec::new();
    for (cond, profile, dur) in [
        ("1C", ProfileSpec::ConstantCurrent { c_rate: 1.0 }, CC_DURATION),
        ("dynamic", dynamic(seed), DYNAMIC_DURATION),
    ] {
        for v in [Variant::StateOnly, Variant::PlainDual, Variant::AdaptiveDz] {
            let mut s = scenario(
                format!("convergence-{cond}-{}", v.key()),
                cond,
                profile.clone(),
                v,
                dur,
                NoiseSpec::none(),
            );
            s.init_soc_error = INIT_ERROR;
            out.push(s);
        }
    }
    BatchConfig::new("convergence", out)
}

/// 100- and 400-cycle drift, dynamic excitation, 5 mV voltage noise.
pub fn aging_study(seed: u64) -> BatchConfig {
    let noise = NoiseSpec::voltage(STUDY_SIGMA_V, seed);
    let mut out = Vec::new();
    for cycles in [100.0, 400.0] {
        let cond = format!("{cycles} cycles");
        for v in [Variant::PlainDual, Variant::FixedDz, Variant::AdaptiveDz] {
            let mut s = scenario(
                format!("aging-{cycles}-{}", v.key()),
                &cond,
                dynamic(seed),
                v,
                DYNAMIC_DURATION,
                noise,
            );
            s.aging = Some(AgingSpec::cycles(cycles));
            out.push(s);
        }
    }
    BatchConfig::new("aging", out)
}

/// One summary row; `error` is set when the scenario failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRow {
    pub name: String,
    pub condition: String,
    pub variant: Variant,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub name: String,
    pub rows: Vec<BatchRow>,
}

impl BatchSummary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn get(&self, condition: &str, variant: Variant) -> Option<&RunResult> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && r.variant == variant)
            .and_then(|r| r.result.as_ref())
    }

    /// Aligned plain-text table.
    pub fn table(&self) -> String {
        let header = [
            "condition", "variant", "rmse_%", "max_%", "conv_s", "settled_%", "gate_duty", "ms", "status",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        let opt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let mut cells = vec![r.condition.clone(), r.variant.label().to_string()];
            match (&r.result, &r.error) {
                (Some(res), _) => cells.extend([
                    format!("{:.3}", res.soc_rmse),
                    format!("{:.3}", res.max_abs_err),
                    opt(res.convergence_time_s, 0),
                    opt(res.settled_rmse, 3),
                    format!("{:.3}", res.gate_duty),
                    format!("{:.2}", res.wall_clock_ms),
                    res.terminated.as_ref().map_or("ok".into(), |_| "early stop".into()),
                ]),
                (None, err) => {
                    cells.extend(std::iter::repeat_n("-".to_string(), 6));
                    cells.push(format!("failed: {}", err.as_deref().unwrap_or("unknown")));
                }
            }
            rows.push(cells);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.name);
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Writes `<name>.txt`, `<name>.json` and, when `logs` is set, one
    /// per-step CSV per successful scenario.
    pub fn persist(&self, dir: &Path, logs: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.txt", self.name)), self.table())?;
        std::fs::write(dir.join(format!("{}.json", self.name)), self.to_json())?;
        if logs {
            for r in &self.rows {
                if let Some(res) = &r.result {
                    write_log_file(&res.log, &dir.join(format!("{}.csv", sanitize(&r.name))))?;
                }
            }
        }
        Ok(())
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Runs every scenario; failures are recorded in their row and the batch continues.
pub fn run_batch(cfg: &BatchConfig, curves: &OcpCurves) -> BatchSummary {
    run_batch_with(cfg, curves, cfg.execution)
}

pub fn run_batch_with(cfg: &BatchConfig, curves: &OcpCurves, exec: Execution) -> BatchSummary {
    let rows = par::map(exec, cfg.threads, &cfg.scenarios, |s| {
        let (result, error) = match run_scenario(s, curves) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        BatchRow {
            name: s.name.clone(),
            condition: s.condition.clone(),
            variant: s.variant,
            result,
            error,
        }
    });
    BatchSummary {
        name: cfg.name.clone(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_shapes() {
        assert_eq!(BatchConfig::builtin("accuracy", 1).unwrap().scenarios.len(), 4);
        assert_eq!(BatchConfig::builtin("convergence", 1).unwrap().scenarios.len(), 6);
        assert_eq!(BatchConfig::builtin("aging", 1).unwrap().scenarios.len(), 6);
        assert!(BatchConfig::builtin("unknown", 1).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let b = aging_study(3);
        assert_eq!(BatchConfig::from_toml(&b.to_toml()).unwrap(), b);
    }

    #[test]
    fn empty_batch() {
        let s = run_batch(&BatchConfig::new("empty", vec![]), &OcpCurves::default());
        assert!(s.rows.is_empty());
        assert_eq!(s.table().lines().count(), 2);
    }

    #[test]
    fn failure_is_recorded() {
        let mut bad = ScenarioConfig::new("bad", ProfileSpec::ConstantCurrent { c_rate: 1.0 }, Variant::StateOnly, 5.0);
        bad.dt = -1.0;
        let good = ScenarioConfig::new("good", ProfileSpec::ConstantCurrent { c_rate: 1.0 }, Variant::StateOnly, 5.0);
        let s = run_batch(&BatchConfig::new("mixed", vec![bad, good]), &OcpCurves::default());
        assert_eq!(s.failures(), 1);
        assert!(s.rows[1].result.is_some());
        assert!(s.table().contains("failed"));
    }
}
