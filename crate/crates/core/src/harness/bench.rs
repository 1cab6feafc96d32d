//! Wall-clock comparison of estimator variants on identical measurements.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::OcpCurves;
use crate::observer::Variant;
use crate::scenarios::{prepare, run_estimator, ScenarioConfig};

pub const MIN_REPETITIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub variant: Variant,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub per_step_us: f64,
    pub steps_per_s: f64,
    pub gate_duty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub profile: String,
    pub steps: usize,
    pub repetitions: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, v: Variant) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Variants from fastest to slowest by median.
    pub fn ordering(&self) -> Vec<Variant> {
        let mut rows: Vec<&BenchRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.median_ms.total_cmp(&b.median_ms));
        rows.into_iter().map(|r| r.variant).collect()
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} ({} steps, median of {} repetitions)",
            self.profile, self.steps, self.repetitions
        );
        let _ = writeln!(
            out,
            "{:<34}  {:>10}  {:>10}  {:>10}  {:>11}  {:>12}  {:>9}",
            "variant", "median_ms", "min_ms", "max_ms", "per_step_us", "steps_per_s", "gate_duty"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<34}  {:>10.3}  {:>10.3}  {:>10.3}  {:>11.3}  {:>12.0}  {:>9.3}",
                r.variant.label(),
                r.median_ms,
                r.min_ms,
                r.max_ms,
                r.per_step_us,
                r.steps_per_s,
                r.gate_duty
            );
        }
        let order: Vec<&str> = self.ordering().iter().map(|v| v.key()).collect();
        let _ = writeln!(out, "ordering: {}", order.join(" < "));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Times each variant on the measurements of `base`, serially.
///
/// The plant is simulated once; repetitions are interleaved across variants
/// so slow drifts of the machine affect all variants alike.
pub fn bench_variants(
    base: &ScenarioConfig,
    curves: &OcpCurves,
    variants: &[Variant],
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions < MIN_REPETITIONS {
        return Err(Error::config(format!(
            "at least {MIN_REPETITIONS} repetitions are required, got {repetitions}"
        )));
    }
    if variants.is_empty() {
        return Err(Error::config("no variants to benchmark"));
    }
    let (nominal, meas) = prepare(base, curves)?;
    let configs: Vec<ScenarioConfig> = variants
        .iter()
        .map(|v| ScenarioConfig {
            variant: *v,
            ..base.clone()
        })
        .collect();
    // Warm-up pass, also fixes the step count and duty of each variant.
    let mut duty = Vec::with_capacity(variants.len());
    let mut steps = None;
    for c in &configs {
        let r = run_estimator(c, &nominal, curves, &meas)?;
        match steps {
            None => steps = Some(r.steps),
            Some(s) if s != r.steps => {
                return Err(Error::config(format!(
                    "variant {} stopped after {} of {s} steps",
                    c.variant, r.steps
                )))
            }
            _ => {}
        }
        duty.push(r.gate_duty);
    }
    let steps = steps.unwrap_or(0);
    let mut times = vec![Vec::with_capacity(repetitions); variants.len()];
    for _ in 0..repetitions {
        for (i, c) in configs.iter().enumerate() {
            times[i].push(run_estimator(c, &nominal, curves, &meas)?.wall_clock_ms);
        }
    }
    let rows = variants
        .iter()
        .zip(times.iter_mut())
        .zip(duty)
        .map(|((v, t), gate_duty)| {
            let min_ms = t.iter().copied().fold(f64::INFINITY, f64::min);
            let max_ms = t.iter().copied().fold(0.0, f64::max);
            let median_ms = median(t);
            BenchRow {
                variant: *v,
                median_ms,
                min_ms,
                max_ms,
                per_step_us: median_ms * 1e3 / steps.max(1) as f64,
                steps_per_s: steps as f64 / (median_ms * 1e-3),
                gate_duty,
            }
        })
        .collect();
    Ok(BenchReport {
        profile: base.profile.short_name(),
        steps,
        repetitions,
        rows,
    })
}
