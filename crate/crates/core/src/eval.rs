//! Rate accounting, rate–metric curves and Bjøntegaard delta rate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::EncodeOutcome;
use crate::error::{Error, Result};

const SIMPSON_INTERVALS: usize = 1000;

pub fn bpp(total_bits: f64, width: usize, height: usize, frame_count: usize) -> Result<f64> {
    let pixels = width * height * frame_count;
    if pixels == 0 {
        return Err(Error::invalid("bpp needs positive width, height and frame count"));
    }
    Ok(total_bits / pixels as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bpp: f64,
    pub metric: f64,
}

/// At least four points with strictly increasing, positive bpp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMetricCurve {
    points: Vec<CurvePoint>,
}

impl RateMetricCurve {
    pub const MIN_POINTS: usize = 4;

    /// Sorts by bpp and validates.
    pub fn new(mut points: Vec<CurvePoint>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::invalid(format!(
                "a rate-metric curve needs at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.metric.is_finite())) {
            return Err(Error::invalid(format!("invalid curve point ({}, {})", p.bpp, p.metric)));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(Error::invalid("curve bpp values must be distinct"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(bpp, metric)| CurvePoint { bpp, metric }).collect())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(parse_curve_csv(text)?)
    }

    pub fn to_csv(&self) -> String {
        write_curve_csv(&self.points)
    }

    fn metric_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.metric), hi.max(p.metric)))
    }
}

/// Parses `bpp,metric` CSV. Points are returned in file order.
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "bpp,metric" => {}
        Some((i, h)) => {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected header 'bpp,metric', found '{}'", h.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty curve file".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 2 {
                return Err(err(format!("expected 2 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
            Ok(CurvePoint {
                bpp: num(fields[0])?,
                metric: num(fields[1])?,
            })
        })
        .collect()
}

pub fn write_curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("bpp,metric\n");
    for p in points {
        writeln!(out, "{},{}", p.bpp, p.metric).unwrap();
    }
    out
}

/// Two-column text for gnuplot.
pub fn gnuplot_data(points: &[CurvePoint]) -> String {
    let mut out = String::from("# bpp metric\n");
    for p in points {
        writeln!(out, "{} {}", p.bpp, p.metric).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BdFit {
    /// Monotone piecewise cubic Hermite interpolation.
    #[default]
    Pchip,
    /// Least-squares cubic polynomial.
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdRateResult {
    pub percent: f64,
    pub overlap: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdRateReport {
    pub anchor: String,
    pub test: String,
    pub percent: f64,
    pub overlap: [f64; 2],
}

/// Average bitrate difference of `test` against `anchor` at equal metric.
pub fn bd_rate(anchor: &RateMetricCurve, test: &RateMetricCurve) -> Result<BdRateResult> {
    bd_rate_with(anchor, test, BdFit::Pchip)
}

pub fn bd_rate_with(anchor: &RateMetricCurve, test: &RateMetricCurve, fit: BdFit) -> Result<BdRateResult> {
    let (a_lo, a_hi) = anchor.metric_range();
    let (t_lo, t_hi) = test.metric_range();
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    if lo >= hi {
        return Err(Error::invalid(format!(
            "metric ranges [{a_lo}, {a_hi}] and [{t_lo}, {t_hi}] do not overlap"
        )));
    }
    let integral = |curve: &RateMetricCurve| -> Result<f64> {
        let (x, y) = log_rate_samples(curve)?;
        match fit {
            BdFit::Pchip => {
                let p = Pchip::new(x, y);
                Ok(simpson(|m| p.eval(m), lo, hi, SIMPSON_INTERVALS))
            }
            BdFit::Cubic => Ok(cubic_fit(&x, &y)?.integral(lo, hi)),
        }
    };
    let diff = (integral(test)? - integral(anchor)?) / (hi - lo);
    Ok(BdRateResult {
        percent: (10f64.powf(diff) - 1.0) * 100.0,
        overlap: [lo, hi],
    })
}

/// `(metric, log10 bpp)` sorted by metric.
fn log_rate_samples(curve: &RateMetricCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.metric, p.bpp.log10())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("BD-rate needs distinct metric values per curve"));
    }
    Ok(pts.into_iter().unzip())
}

pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// Fritsch–Carlson monotone cubic interpolant with clamped extrapolation.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` strictly increasing, at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "pchip needs two or more matched samples");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(delta[0]);
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Self { x, y, d }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Cubic polynomial in a centred, scaled variable.
#[derive(Debug, Clone)]
struct Cubic {
    coef: [f64; 4],
    center: f64,
    scale: f64,
}

impl Cubic {
    fn antiderivative(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        let c = &self.coef;
        self.scale * (c[0] * u + c[1] * u * u / 2.0 + c[2] * u.powi(3) / 3.0 + c[3] * u.powi(4) / 4.0)
    }

    fn integral(&self, lo: f64, hi: f64) -> f64 {
        self.antiderivative(hi) - self.antiderivative(lo)
    }
}

fn cubic_fit(x: &[f64], y: &[f64]) -> Result<Cubic> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let center = 0.5 * (lo + hi);
    let scale = (0.5 * (hi - lo)).max(f64::MIN_POSITIVE);
    // Normal equations; the scaled abscissa keeps them well conditioned.
    let mut a = [[0.0f64; 5]; 4];
    for (&xi, &yi) in x.iter().zip(y) {
        let u = (xi - center) / scale;
        let pow = [1.0, u, u * u, u * u * u];
        for r in 0..4 {
            for c in 0..4 {
                a[r][c] += pow[r] * pow[c];
            }
            a[r][4] += pow[r] * yi;
        }
    }
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::invalid("cubic fit is singular"));
        }
        a.swap(col, pivot);
        for r in 0..4 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..5 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let coef = std::array::from_fn(|i| a[i][4] / a[i][i]);
    Ok(Cubic { coef, center, scale })
}

/// `(bpp, -mean task loss)` for one coded run.
pub fn curve_from_run(outcomes: &[EncodeOutcome], width: usize, height: usize) -> Result<CurvePoint> {
    if outcomes.is_empty() {
        return Err(Error::invalid("curve point needs a non-empty run"));
    }
    let bits: f64 = outcomes.iter().map(|o| o.bits).sum();
    let loss: f64 = outcomes.iter().map(|o| o.task_loss).sum();
    Ok(CurvePoint {
        bpp: bpp(bits, width, height, outcomes.len())?,
        metric: -loss / outcomes.len() as f64,
    })
}
