//! Open-circuit potential curves.
//!
//! Each electrode curve is a breakpoint table interpolated with a monotone
//! piecewise-cubic Hermite scheme (Fritsch-Carlson slopes), so monotone data
//! gives a monotone curve with a continuous first derivative.

use std::path::Path;

use crate::error::{Error, Result};

const DEFAULT_POSITIVE: &str = include_str!("../../data/ocp_positive.txt");
const DEFAULT_NEGATIVE: &str = include_str!("../../data/ocp_negative.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(x.len(), y.len()));
        }
        if x.len() < 2 {
            return Err(Error::config("curve needs at least two breakpoints"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("curve abscissae must be strictly increasing"));
        }
        let n = x.len();
        let secant: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut slope = vec![0.0; n];
        slope[0] = secant[0];
        slope[n - 1] = secant[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secant[i - 1], secant[i]);
            if a * b <= 0.0 {
                slope[i] = 0.0;
            } else {
                // weighted harmonic mean
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                slope[i] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        // keep end slopes inside the monotone region
        for (end, sec) in [(0usize, secant[0]), (n - 1, secant[n - 2])] {
            if slope[end] * sec <= 0.0 {
                slope[end] = 0.0;
            } else if slope[end].abs() > 3.0 * sec.abs() {
                slope[end] = 3.0 * sec;
            }
        }
        Ok(Self { x, y, slope })
    }

    /// Parses a two-column whitespace or comma separated table with one header line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|f| !f.is_empty());
            let mut next = |name: &str| -> Result<f64> {
                let raw = fields.next().ok_or_else(|| Error::Ingest {
                    line: idx + 1,
                    msg: format!("missing {name} column"),
                })?;
                raw.parse().map_err(|_| Error::Ingest {
                    line: idx + 1,
                    msg: format!("cannot parse {name} value {raw:?}"),
                })
            };
            let x = next("stoichiometry")?;
            let y = next("volts")?;
            if let Some(&last) = xs.last() {
                if !(x > last) {
                    return Err(Error::Ingest {
                        line: idx + 1,
                        msg: "stoichiometry column must be strictly increasing".into(),
                    });
                }
            }
            xs.push(x);
            ys.push(y);
        }
        Self::new(xs, ys)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    /// Value and derivative at `t`; `None` outside the breakpoint range.
    pub fn eval_with_slope(&self, t: f64) -> Option<(f64, f64)> {
        let (lo, hi) = self.support();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= self.x.len() => self.x.len() - 2,
            k => k - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        let value = h00 * self.y[i]
            + h10 * h * self.slope[i]
            + h01 * self.y[i + 1]
            + h11 * h * self.slope[i + 1];
        let d00 = (6.0 * u2 - 6.0 * u) / h;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = (-6.0 * u2 + 6.0 * u) / h;
        let d11 = 3.0 * u2 - 2.0 * u;
        let deriv = d00 * self.y[i]
            + d10 * self.slope[i]
            + d01 * self.y[i + 1]
            + d11 * self.slope[i + 1];
        Some((value, deriv))
    }

    pub fn eval(&self, t: f64) -> Option<f64> {
        self.eval_with_slope(t).map(|(v, _)| v)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("stoichiometry volts\n");
        for (x, y) in self.breakpoints() {
            out.push_str(&format!("{x} {y}\n"));
        }
        out
    }
}

/// Equilibrium potential curves of both electrodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpCurves {
    pub positive: MonotoneCubic,
    pub negative: MonotoneCubic,
}

impl OcpCurves {
    pub fn new(positive: MonotoneCubic, negative: MonotoneCubic) -> Result<Self> {
        if positive.y.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::config(
                "positive electrode potential must be strictly decreasing",
            ));
        }
        if negative.y.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config(
                "negative electrode potential must be non-increasing",
            ));
        }
        for curve in [&positive, &negative] {
            let (lo, hi) = curve.support();
            if lo <= 0.0 || hi >= 1.0 {
                return Err(Error::config("curve support must lie inside (0, 1)"));
            }
        }
        Ok(Self { positive, negative })
    }

    /// NMC / graphite tables shipped with the crate.
    pub fn default_nmc_graphite() -> Self {
        let positive = MonotoneCubic::parse(DEFAULT_POSITIVE).expect("bundled positive table");
        let negative = MonotoneCubic::parse(DEFAULT_NEGATIVE).expect("bundled negative table");
        Self::new(positive, negative).expect("bundled tables are monotone")
    }

    pub fn load(positive: &Path, negative: &Path) -> Result<Self> {
        let p = MonotoneCubic::parse(&std::fs::read_to_string(positive)?)?;
        let n = MonotoneCubic::parse(&std::fs::read_to_string(negative)?)?;
        Self::new(p, n)
    }

    pub fn u_p(&self, y: f64) -> Result<f64> {
        self.positive.eval(y).ok_or_else(|| {
            Error::domain("U_p", format!("stoichiometry {y} outside curve support"))
        })
    }

    pub fn u_n(&self, x: f64) -> Result<f64> {
        self.negative.eval(x).ok_or_else(|| {
            Error::domain("U_n", format!("stoichiometry {x} outside curve support"))
        })
    }
}

impl Default for OcpCurves {
    fn default() -> Self {
        Self::default_nmc_graphite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interpolates_breakpoints_exactly() {
        let c = OcpCurves::default();
        for (x, y) in c.positive.breakpoints() {
            assert!((c.positive.eval(x).unwrap() - y).abs() < 1e-12);
        }
        assert!(c.positive.eval(0.0).is_none());
        assert!(c.u_n(1.0).is_err());
    }

    #[test]
    fn linear_data_is_reproduced() {
        let c = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        for t in [0.0, 0.25, 1.5, 2.9, 3.0] {
            let (v, d) = c.eval_with_slope(t).unwrap();
            assert!((v - (3.0 - t)).abs() < 1e-12);
            assert!((d + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parse_rejects_non_increasing() {
        let err = MonotoneCubic::parse("x v\n0.1 1\n0.1 0.9\n").unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 3, .. }));
    }

    #[test]
    fn table_round_trip() {
        let c = OcpCurves::default();
        let again = MonotoneCubic::parse(&c.negative.to_table()).unwrap();
        assert_eq!(again, c.negative);
    }

    #[test]
    fn ocv_over_admissible_window_is_in_cell_range() {
        let c = OcpCurves::default();
        let p = crate::model::ModelParams::reference();
        let floor = p.soc_floor() + 2e-3;
        let n = 400;
        for k in 0..=n {
            let soc = floor + (1.0 - floor) * k as f64 / n as f64;
            let s = p.soc0 - soc;
            let e = c.u_p(p.x_sp0 + p.d_p * s).unwrap() - c.u_n(p.x_sn0 - p.d_n * s).unwrap();
            assert!((2.5..=4.2).contains(&e), "E_OCV({soc}) = {e}");
        }
    }

    proptest! {
        #[test]
        fn default_curves_are_monotone(a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let c = OcpCurves::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            prop_assert!(c.positive.eval(hi).unwrap() < c.positive.eval(lo).unwrap());
            if let (Some(n_lo), Some(n_hi)) = (c.negative.eval(lo), c.negative.eval(hi)) {
                prop_assert!(n_hi <= n_lo + 1e-15);
            }
        }
    }
}
