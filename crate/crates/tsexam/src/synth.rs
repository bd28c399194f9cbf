//! Controlled synthetic time series generation.
//!
//! Base patterns, additive/multiplicative composition, SNR-calibrated noise,
//! anomaly injection, and causally coupled pairs. Every generator is a pure
//! function of `(spec, length, seed)`; the full recipe of a series is kept in
//! its [`Provenance`] so any series can be regenerated bit-for-bit with
//! [`regenerate`].

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::rng::{child_seed, rng_for};
use crate::Result;

/// One regime of a [`PatternSpec::RegimeSwitch`] series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// Step index at which the regime begins (first regime starts at 0).
    pub start: usize,
    pub mean: f64,
    pub std: f64,
}

/// Base pattern pool for synthetic series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternSpec {
    LinearTrend { slope: f64, intercept: f64 },
    /// `scale * exp(rate * t)`.
    ExponentialTrend { scale: f64, rate: f64 },
    /// `amplitude * sin(2*pi*t/period + phase)`; period in steps, phase in radians.
    Sine { amplitude: f64, period: f64, phase: f64 },
    /// Square wave with the same parameterization as [`PatternSpec::Sine`].
    SquareWave { amplitude: f64, period: f64, phase: f64 },
    /// AR(p) process driven by Gaussian innovations, with burn-in discarded.
    ArProcess { coeffs: Vec<f64>, noise_std: f64 },
    /// Cumulative sum of Gaussian steps.
    RandomWalk { step_std: f64 },
    /// IID Gaussian noise around zero.
    WhiteNoise { std: f64 },
    /// Discrete Ornstein-Uhlenbeck: `x[t+1] = x[t] + rate*(mean - x[t]) + e`.
    MeanReverting { mean: f64, rate: f64, noise_std: f64 },
    /// Piecewise-stationary segments, each with its own mean and std.
    RegimeSwitch { segments: Vec<Regime> },
}

impl PatternSpec {
    /// Validate kind-specific parameters. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let finite = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(field, "must be finite"))
            }
        };
        match self {
            PatternSpec::LinearTrend { slope, intercept } => {
                finite("slope", *slope)?;
                finite("intercept", *intercept)
            }
            PatternSpec::ExponentialTrend { scale, rate } => {
                finite("scale", *scale)?;
                finite("rate", *rate)
            }
            PatternSpec::Sine {
                amplitude,
                period,
                phase,
            }
            | PatternSpec::SquareWave {
                amplitude,
                period,
                phase,
            } => {
                finite("amplitude", *amplitude)?;
                finite("phase", *phase)?;
                if !period.is_finite() || *period <= 0.0 {
                    return Err(Error::invalid("period", "must be positive and finite"));
                }
                Ok(())
            }
            PatternSpec::ArProcess { coeffs, noise_std } => {
                if coeffs.is_empty() {
                    return Err(Error::invalid("coeffs", "must be non-empty"));
                }
                for (i, c) in coeffs.iter().enumerate() {
                    finite(&format!("coeffs[{i}]"), *c)?;
                }
                if !noise_std.is_finite() || *noise_std < 0.0 {
                    return Err(Error::invalid("noise_std", "must be non-negative"));
                }
                Ok(())
            }
            PatternSpec::RandomWalk { step_std } => {
                if !step_std.is_finite() || *step_std < 0.0 {
                    return Err(Error::invalid("step_std", "must be non-negative"));
                }
                Ok(())
            }
            PatternSpec::WhiteNoise { std } => {
                if !std.is_finite() || *std < 0.0 {
                    return Err(Error::invalid("std", "must be non-negative"));
                }
                Ok(())
            }
            PatternSpec::MeanReverting {
                mean,
                rate,
                noise_std,
            } => {
                finite("mean", *mean)?;
                if !rate.is_finite() || *rate <= 0.0 || *rate >= 2.0 {
                    return Err(Error::invalid("rate", "must lie in (0, 2) for stability"));
                }
                if !noise_std.is_finite() || *noise_std < 0.0 {
                    return Err(Error::invalid("noise_std", "must be non-negative"));
                }
                Ok(())
            }
            PatternSpec::RegimeSwitch { segments } => {
                if segments.is_empty() {
                    return Err(Error::invalid("segments", "must be non-empty"));
                }
                if segments[0].start != 0 {
                    return Err(Error::invalid("segments[0].start", "first regime must start at 0"));
                }
                for w in segments.windows(2) {
                    if w[1].start <= w[0].start {
                        return Err(Error::invalid(
                            "segments",
                            "starts must be strictly increasing",
                        ));
                    }
                }
                for (i, s) in segments.iter().enumerate() {
                    finite(&format!("segments[{i}].mean"), s.mean)?;
                    if !s.std.is_finite() || s.std < 0.0 {
                        return Err(Error::invalid(
                            &format!("segments[{i}].std"),
                            "must be non-negative",
                        ));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Elementwise composition method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    Additive,
    Multiplicative,
}

/// How injected noise is calibrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Noise variance = signal power / 10^(snr_db/10). `+inf` means no noise.
    SnrDb(f64),
    /// Absolute noise standard deviation.
    Std(f64),
}

/// Anomaly kinds supported by [`inject_anomaly`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Spike,
    LevelShift,
    VarianceShift,
    PatternBreak,
}

/// A labeled anomaly window, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyLabel {
    pub kind: AnomalyKind,
    pub start: usize,
    pub end: usize,
    pub magnitude: f64,
}

impl AnomalyLabel {
    pub fn validate(&self, series_len: usize) -> Result<()> {
        if self.start > self.end {
            return Err(Error::invalid("start", "must be <= end"));
        }
        if self.end >= series_len {
            return Err(Error::invalid("end", "window exceeds series length"));
        }
        if self.magnitude == 0.0 || !self.magnitude.is_finite() {
            return Err(Error::invalid("magnitude", "must be non-zero and finite"));
        }
        if self.kind == AnomalyKind::Spike && self.start != self.end {
            return Err(Error::invalid("start", "spike window must be a single step"));
        }
        Ok(())
    }
}

/// Which side of a coupled pair a series is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRole {
    Driver,
    Follower,
}

/// Full generating recipe of a series. Each node carries the seeds it used,
/// so a provenance tree alone reproduces its series via [`regenerate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Provenance {
    Pattern {
        spec: PatternSpec,
        length: usize,
        seed: u64,
    },
    Composite {
        method: Composition,
        parts: Vec<Provenance>,
    },
    Noise {
        source: Box<Provenance>,
        noise: NoiseSpec,
        seed: u64,
    },
    Anomaly {
        source: Box<Provenance>,
        label: AnomalyLabel,
        seed: u64,
    },
    CoupledPair {
        length: usize,
        lag: usize,
        coupling: f64,
        seed: u64,
        role: PairRole,
    },
    /// Marks which template option a question's series was conditioned on.
    Conditioned {
        template_id: String,
        option_index: usize,
        source: Box<Provenance>,
    },
    /// Series imported from an external dataset; not regenerable.
    External { description: String },
}

/// A uniformly sampled real-valued sequence with its generating recipe.
///
/// Invariants: `length == values.len()`, all values finite, and regenerating
/// from `provenance` reproduces `values` bitwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    length: usize,
    values: Vec<f64>,
    seed: u64,
    provenance: Provenance,
}

impl TimeSeries {
    /// Construct a series, enforcing finiteness and the length invariant.
    pub fn new(values: Vec<f64>, seed: u64, provenance: Provenance) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "values",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(TimeSeries {
            length: values.len(),
            values,
            seed,
            provenance,
        })
    }

    /// Wrap an externally sourced series (e.g. a dataset sample).
    pub fn external(values: Vec<f64>, description: impl Into<String>) -> Result<Self> {
        TimeSeries::new(
            values,
            0,
            Provenance::External {
                description: description.into(),
            },
        )
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Re-check the struct invariants (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        if self.length != self.values.len() {
            return Err(Error::invalid(
                "length",
                format!("declared {} but {} values", self.length, self.values.len()),
            ));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "values",
                format!("non-finite value at index {i}"),
            ));
        }
        Ok(())
    }

    /// Wrap this series' provenance with the template option it realizes.
    pub fn conditioned_on(mut self, template_id: impl Into<String>, option_index: usize) -> Self {
        self.provenance = Provenance::Conditioned {
            template_id: template_id.into(),
            option_index,
            source: Box::new(self.provenance),
        };
        self
    }
}

/// Generate a base pattern series. Deterministic per `(spec, length, seed)`.
pub fn gen_base_pattern(spec: &PatternSpec, length: usize, seed: u64) -> Result<TimeSeries> {
    if length < 2 {
        return Err(Error::invalid("length", "must be at least 2"));
    }
    spec.validate()?;
    let mut rng = rng_for(seed);
    let values: Vec<f64> = match spec {
        PatternSpec::LinearTrend { slope, intercept } => (0..length)
            .map(|t| intercept + slope * t as f64)
            .collect(),
        PatternSpec::ExponentialTrend { scale, rate } => {
            (0..length).map(|t| scale * (rate * t as f64).exp()).collect()
        }
        PatternSpec::Sine {
            amplitude,
            period,
            phase,
        } => (0..length)
            .map(|t| amplitude * (std::f64::consts::TAU * t as f64 / period + phase).sin())
            .collect(),
        PatternSpec::SquareWave {
            amplitude,
            period,
            phase,
        } => (0..length)
            .map(|t| {
                let s = (std::f64::consts::TAU * t as f64 / period + phase).sin();
                if s >= 0.0 {
                    *amplitude
                } else {
                    -amplitude
                }
            })
            .collect(),
        PatternSpec::ArProcess { coeffs, noise_std } => {
            let p = coeffs.len();
            let burn_in = 128 + 8 * p;
            let normal = normal(0.0, *noise_std)?;
            let total = burn_in + length;
            let mut x = vec![0.0f64; total];
            for t in 0..total {
                let mut v = normal.sample(&mut rng);
                for (k, c) in coeffs.iter().enumerate() {
                    if t > k {
                        v += c * x[t - 1 - k];
                    }
                }
                x[t] = v;
            }
            x.split_off(burn_in)
        }
        PatternSpec::RandomWalk { step_std } => {
            let normal = normal(0.0, *step_std)?;
            let mut acc = 0.0;
            (0..length)
                .map(|_| {
                    acc += normal.sample(&mut rng);
                    acc
                })
                .collect()
        }
        PatternSpec::WhiteNoise { std } => {
            let normal = normal(0.0, *std)?;
            (0..length).map(|_| normal.sample(&mut rng)).collect()
        }
        PatternSpec::MeanReverting {
            mean,
            rate,
            noise_std,
        } => {
            let normal = normal(0.0, *noise_std)?;
            let mut x = *mean;
            (0..length)
                .map(|_| {
                    x += rate * (mean - x) + normal.sample(&mut rng);
                    x
                })
                .collect()
        }
        PatternSpec::RegimeSwitch { segments } => {
            if segments[0].start >= length {
                return Err(Error::invalid(
                    "segments[0].start",
                    "must be below series length",
                ));
            }
            if let Some(s) = segments.iter().find(|s| s.start >= length) {
                return Err(Error::invalid(
                    "segments",
                    format!("start {} out of range for length {length}", s.start),
                ));
            }
            let mut values = Vec::with_capacity(length);
            for (i, seg) in segments.iter().enumerate() {
                let end = segments.get(i + 1).map_or(length, |n| n.start);
                let normal = normal(seg.mean, seg.std)?;
                for _ in seg.start..end {
                    values.push(normal.sample(&mut rng));
                }
            }
            values
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(
            "spec",
            "parameters produce non-finite values over this length",
        ));
    }
    TimeSeries::new(
        values,
        seed,
        Provenance::Pattern {
            spec: spec.clone(),
            length,
            seed,
        },
    )
}

/// Combine equal-length components elementwise.
pub fn compose(components: &[TimeSeries], method: Composition) -> Result<TimeSeries> {
    let first = components
        .first()
        .ok_or_else(|| Error::invalid("components", "must be non-empty"))?;
    let n = first.len();
    for (i, c) in components.iter().enumerate() {
        if c.len() != n {
            return Err(Error::LengthMismatch(format!(
                "component 0 has {n} steps but component {i} has {}",
                c.len()
            )));
        }
    }
    let mut values = first.values().to_vec();
    for c in &components[1..] {
        for (v, x) in values.iter_mut().zip(c.values()) {
            match method {
                Composition::Additive => *v += x,
                Composition::Multiplicative => *v *= x,
            }
        }
    }
    TimeSeries::new(
        values,
        first.seed(),
        Provenance::Composite {
            method,
            parts: components.iter().map(|c| c.provenance().clone()).collect(),
        },
    )
}

/// Signal power: mean of squared values.
pub fn signal_power(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

/// Add Gaussian noise at the requested signal-to-noise ratio in dB.
///
/// `snr_db = +inf` is the no-noise sentinel and returns the input values
/// unchanged bitwise.
pub fn add_noise(series: &TimeSeries, snr_db: f64, seed: u64) -> Result<TimeSeries> {
    add_noise_spec(series, NoiseSpec::SnrDb(snr_db), seed)
}

/// Add Gaussian noise with an absolute standard deviation.
pub fn add_noise_std(series: &TimeSeries, std: f64, seed: u64) -> Result<TimeSeries> {
    add_noise_spec(series, NoiseSpec::Std(std), seed)
}

/// Add Gaussian noise per a [`NoiseSpec`]. Deterministic per seed.
pub fn add_noise_spec(series: &TimeSeries, noise: NoiseSpec, seed: u64) -> Result<TimeSeries> {
    let std = match noise {
        NoiseSpec::SnrDb(snr_db) => {
            if snr_db.is_nan() {
                return Err(Error::invalid("snr_db", "must not be NaN"));
            }
            if snr_db == f64::INFINITY {
                0.0
            } else {
                let power = signal_power(series.values());
                if power == 0.0 {
                    return Err(Error::invalid(
                        "snr_db",
                        "noise variance is undefined for a zero-power signal",
                    ));
                }
                (power / 10f64.powf(snr_db / 10.0)).sqrt()
            }
        }
        NoiseSpec::Std(std) => {
            if !std.is_finite() || std < 0.0 {
                return Err(Error::invalid("std", "must be non-negative and finite"));
            }
            std
        }
    };
    let provenance = Provenance::Noise {
        source: Box::new(series.provenance().clone()),
        noise,
        seed,
    };
    if std == 0.0 {
        return TimeSeries::new(series.values().to_vec(), seed, provenance);
    }
    let normal = normal(0.0, std)?;
    let mut rng = rng_for(seed);
    let values = series
        .values()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    TimeSeries::new(values, seed, provenance)
}

/// Inject one labeled anomaly. Values outside the window are bitwise unchanged.
pub fn inject_anomaly(series: &TimeSeries, label: &AnomalyLabel, seed: u64) -> Result<TimeSeries> {
    label.validate(series.len())?;
    let mut values = series.values().to_vec();
    let window = label.start..=label.end;
    match label.kind {
        AnomalyKind::Spike => {
            values[label.start] += label.magnitude;
        }
        AnomalyKind::LevelShift => {
            for i in window {
                values[i] += label.magnitude;
            }
        }
        AnomalyKind::VarianceShift => {
            let w = &series.values()[label.start..=label.end];
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            for i in window {
                values[i] = mean + label.magnitude * (values[i] - mean);
            }
        }
        AnomalyKind::PatternBreak => {
            let normal = normal(0.0, label.magnitude.abs())?;
            let mut rng = rng_for(seed);
            for i in window {
                values[i] = normal.sample(&mut rng);
            }
        }
    }
    TimeSeries::new(
        values,
        seed,
        Provenance::Anomaly {
            source: Box::new(series.provenance().clone()),
            label: *label,
            seed,
        },
    )
}

/// Generate a coupled pair `(x, y)` where `y[t] = coupling * x[t-lag] + e[t]`.
///
/// `x` is a unit-variance Gaussian innovation process; `coupling = 0` yields
/// an independent pair.
pub fn gen_granger_pair(
    length: usize,
    lag: usize,
    coupling: f64,
    seed: u64,
) -> Result<(TimeSeries, TimeSeries)> {
    if length < 2 {
        return Err(Error::invalid("length", "must be at least 2"));
    }
    if lag == 0 {
        return Err(Error::invalid("lag", "must be positive"));
    }
    if lag >= length {
        return Err(Error::invalid("lag", "must be below series length"));
    }
    if !coupling.is_finite() {
        return Err(Error::invalid("coupling", "must be finite"));
    }
    let normal = normal(0.0, 1.0)?;
    let mut rng_x = rng_for(child_seed(seed, "granger-x", 0));
    let mut rng_y = rng_for(child_seed(seed, "granger-y", 0));
    let x: Vec<f64> = (0..length).map(|_| normal.sample(&mut rng_x)).collect();
    let y: Vec<f64> = (0..length)
        .map(|t| {
            let driven = if t >= lag { coupling * x[t - lag] } else { 0.0 };
            driven + normal.sample(&mut rng_y)
        })
        .collect();
    let prov = |role| Provenance::CoupledPair {
        length,
        lag,
        coupling,
        seed,
        role,
    };
    Ok((
        TimeSeries::new(x, seed, prov(PairRole::Driver))?,
        TimeSeries::new(y, seed, prov(PairRole::Follower))?,
    ))
}

/// Recompute a series from its provenance tree.
pub fn regenerate(provenance: &Provenance) -> Result<TimeSeries> {
    match provenance {
        Provenance::Pattern { spec, length, seed } => gen_base_pattern(spec, *length, *seed),
        Provenance::Composite { method, parts } => {
            let components: Vec<TimeSeries> =
                parts.iter().map(regenerate).collect::<Result<_>>()?;
            compose(&components, *method)
        }
        Provenance::Noise {
            source,
            noise,
            seed,
        } => add_noise_spec(&regenerate(source)?, *noise, *seed),
        Provenance::Anomaly {
            source,
            label,
            seed,
        } => inject_anomaly(&regenerate(source)?, label, *seed),
        Provenance::CoupledPair {
            length,
            lag,
            coupling,
            seed,
            role,
        } => {
            let (x, y) = gen_granger_pair(*length, *lag, *coupling, *seed)?;
            Ok(match role {
                PairRole::Driver => x,
                PairRole::Follower => y,
            })
        }
        Provenance::Conditioned { source, .. } => regenerate(source),
        Provenance::External { description } => Err(Error::invalid(
            "provenance",
            format!("external series `{description}` cannot be regenerated"),
        )),
    }
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| Error::invalid("std", e.to_string()))
}

/// Draw a uniform value in `[lo, hi)` from a seeded stream; helper for
/// template generators that jitter their parameters.
pub fn uniform_in(seed: u64, tag: &str, lo: f64, hi: f64) -> f64 {
    let mut rng = rng_for(child_seed(seed, tag, 0));
    rng.random_range(lo..hi)
}
