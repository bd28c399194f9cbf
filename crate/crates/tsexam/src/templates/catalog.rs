//! The thirteen shipped templates, one per taxonomy subcategory.
//!
//! Option-conditioned generators enforce separation margins so options are
//! never statistically adjacent: e.g. the "no trend" option draws slope
//! exactly 0 while the weakest nonzero trend is dozens of standard errors
//! away from it at the default lengths.

use crate::exam::{Category, CategoryKind};
use crate::rng::{child_seed, rng_for};
use crate::synth::{
    add_noise, add_noise_std, compose, gen_base_pattern, gen_granger_pair, inject_anomaly,
    uniform_in, AnomalyKind, AnomalyLabel, Composition, PatternSpec, Regime,
};

use super::Template;

use rand::Rng;

pub(super) fn builtin_templates() -> Vec<Template> {
    vec![
        trend(),
        cyclic_amplitude(),
        stationarity(),
        regime_count(),
        mean_stability(),
        mean_reversion(),
        white_noise(),
        random_walk(),
        noise_level(),
        anomaly_pair(),
        shape_similarity(),
        walk_variance(),
        granger_direction(),
    ]
}

fn category(kind: CategoryKind, sub: &str) -> Category {
    Category::new(kind, sub).expect("catalog subcategories are canonical")
}

fn sine_phase(seed: u64) -> f64 {
    uniform_in(seed, "phase", 0.0, std::f64::consts::TAU)
}

/// Slopes conditioned on by the trend template, in option order.
pub const TREND_SLOPES: [f64; 4] = [0.5, 0.1, 0.0, -0.5];

fn trend() -> Template {
    Template::new(
        "trend",
        category(CategoryKind::PatternRecognition, "trend"),
        "Identify the linear trend coefficient of a noisy line",
        "What is the most likely linear trend coefficient of the given time series?",
        vec![
            "Approximately +0.5 per time step".into(),
            "Approximately +0.1 per time step".into(),
            "Approximately 0 (no linear trend)".into(),
            "Approximately -0.5 per time step".into(),
        ],
        1,
        Some("Imagine the best-fitting straight line through all points; its rise per time step is the trend coefficient."),
        Some("A linear trend is a straight-line component: on average the series changes by a fixed amount per step, independent of the noise around it."),
        &["linear trend", "least squares slope"],
        &["mistaking noise wiggles for trend", "confusing slope sign"],
        Box::new(|option, length, seed| {
            let slope = TREND_SLOPES[option];
            let line = gen_base_pattern(
                &PatternSpec::LinearTrend { slope, intercept: 0.0 },
                length,
                0,
            )?;
            Ok(vec![add_noise_std(&line, 1.0, child_seed(seed, "noise", 0))?])
        }),
    )
}

fn cyclic_amplitude() -> Template {
    Template::new(
        "cyclic_amplitude",
        category(CategoryKind::PatternRecognition, "cyclic"),
        "Judge how a sine wave's amplitude evolves",
        "The given time series has a sine wave pattern. How does its amplitude change from the beginning to the end?",
        vec![
            "The amplitude increases over time".into(),
            "The amplitude decreases over time".into(),
            "The amplitude stays roughly constant".into(),
        ],
        1,
        Some("Compare the height of the oscillations near the start with those near the end."),
        Some("Amplitude is the peak height of an oscillation; a changing amplitude shows as an envelope that widens or narrows."),
        &["cyclic pattern", "amplitude modulation"],
        &["confusing period change with amplitude change"],
        Box::new(|option, length, seed| {
            let carrier = gen_base_pattern(
                &PatternSpec::Sine {
                    amplitude: 1.0,
                    period: 16.0,
                    phase: sine_phase(seed),
                },
                length,
                0,
            )?;
            let (start, end) = match option {
                0 => (0.4, 2.4),
                1 => (2.4, 0.4),
                _ => (1.4, 1.4),
            };
            let envelope = gen_base_pattern(
                &PatternSpec::LinearTrend {
                    slope: (end - start) / (length - 1) as f64,
                    intercept: start,
                },
                length,
                0,
            )?;
            let modulated = compose(&[carrier, envelope], Composition::Multiplicative)?;
            Ok(vec![add_noise_std(&modulated, 0.05, child_seed(seed, "noise", 0))?])
        }),
    )
}

fn stationarity() -> Template {
    Template::new(
        "stationarity",
        category(CategoryKind::PatternRecognition, "stationarity"),
        "Stationarity of the residual once the cycle is removed",
        "Is the given time series likely to be stationary after removing the cycle component?",
        vec!["Yes".into(), "No".into()],
        1,
        Some("Mentally subtract the repeating wave. Ask whether what remains keeps a stable level and spread, or wanders off."),
        Some("A stationary series keeps a constant mean, variance, and autocovariance over time. A random walk is not stationary: its variance grows with time."),
        &["stationarity", "random walk", "cycle removal"],
        &["treating the visible cycle itself as non-stationarity"],
        Box::new(|option, length, seed| {
            let cycle = gen_base_pattern(
                &PatternSpec::Sine {
                    amplitude: 2.0,
                    period: 16.0,
                    phase: sine_phase(seed),
                },
                length,
                0,
            )?;
            let residual_spec = match option {
                0 => PatternSpec::WhiteNoise { std: 1.0 },
                _ => PatternSpec::RandomWalk { step_std: 1.0 },
            };
            let residual = gen_base_pattern(&residual_spec, length, child_seed(seed, "residual", 0))?;
            Ok(vec![compose(&[cycle, residual], Composition::Additive)?])
        }),
    )
}

/// Segment means conditioned on by the regime template; consecutive and
/// pairwise gaps stay at least 4 apart against a within-regime std of 0.8.
pub const REGIME_MEANS: [f64; 4] = [0.0, 6.0, -5.0, 10.0];

fn regime_count() -> Template {
    Template::new(
        "regime_count",
        category(CategoryKind::PatternRecognition, "regime_switching"),
        "Count the distinct regimes in a piecewise-stationary series",
        "Based on the given time series, how many different regimes does it contain?",
        vec!["1".into(), "2".into(), "3".into(), "4".into()],
        1,
        Some("A regime is a stretch where the series fluctuates around one stable level; count the distinct levels."),
        Some("Regime switching means the generating process changes abruptly at some time points, e.g. the mean jumps to a new level and stays there."),
        &["regime switching", "structural breaks"],
        &["counting noise excursions as regimes"],
        Box::new(|option, length, seed| {
            let k = option + 1;
            let segments: Vec<Regime> = (0..k)
                .map(|i| Regime {
                    start: i * length / k,
                    mean: REGIME_MEANS[i],
                    std: 0.8,
                })
                .collect();
            Ok(vec![gen_base_pattern(
                &PatternSpec::RegimeSwitch { segments },
                length,
                child_seed(seed, "regimes", 0),
            )?])
        }),
    )
}

fn mean_stability() -> Template {
    Template::new(
        "mean_stability",
        category(CategoryKind::PatternRecognition, "statistical_properties"),
        "Whether the mean stays constant over time",
        "Is the mean stable over time in the given time series?",
        vec!["Yes".into(), "No".into()],
        1,
        Some("Compare the average level of the first part of the series with the last part."),
        Some("A stable mean keeps the series centered on the same level throughout; a drifting mean shows as a systematic rise or fall."),
        &["mean stability", "trend"],
        &["reading random fluctuation as drift"],
        Box::new(|option, length, seed| {
            let noise = gen_base_pattern(
                &PatternSpec::WhiteNoise { std: 1.0 },
                length,
                child_seed(seed, "noise", 0),
            )?;
            match option {
                0 => Ok(vec![noise]),
                _ => {
                    // Total drift of 8 across the series, clearly outside
                    // noise scale at any supported length.
                    let drift = gen_base_pattern(
                        &PatternSpec::LinearTrend {
                            slope: 8.0 / (length - 1) as f64,
                            intercept: 0.0,
                        },
                        length,
                        0,
                    )?;
                    Ok(vec![compose(&[drift, noise], Composition::Additive)?])
                }
            }
        }),
    )
}

fn mean_reversion() -> Template {
    Template::new(
        "mean_reversion",
        category(CategoryKind::PatternRecognition, "random_processes"),
        "Mean reversion versus a free random walk",
        "Does the given time series exhibit a mean reversion property?",
        vec!["Yes".into(), "No".into()],
        1,
        Some("After the series moves away from its typical level, check whether it is pulled back toward that level or keeps wandering."),
        Some("A mean-reverting process is attracted back toward a long-run level after excursions; a random walk has no such pull and drifts freely."),
        &["mean reversion", "Ornstein-Uhlenbeck process", "random walk"],
        &["mistaking short noise reversals for true reversion"],
        Box::new(|option, length, seed| {
            let spec = match option {
                0 => PatternSpec::MeanReverting {
                    mean: 0.0,
                    rate: 0.8,
                    noise_std: 1.0,
                },
                _ => PatternSpec::RandomWalk { step_std: 1.0 },
            };
            Ok(vec![gen_base_pattern(&spec, length, child_seed(seed, "process", 0))?])
        }),
    )
}

fn white_noise() -> Template {
    Template::new(
        "white_noise",
        category(CategoryKind::NoiseUnderstanding, "white_noise"),
        "White noise versus a strongly autocorrelated process",
        "Is the given time series a white noise process?",
        vec!["Yes".into(), "No".into()],
        1,
        Some("In white noise, knowing one value tells you nothing about the next; look for any carry-over from step to step."),
        Some("White noise is a sequence of independent, identically distributed values with constant variance and zero autocorrelation at every lag."),
        &["white noise", "autocorrelation"],
        &["calling any jagged series white noise"],
        Box::new(|option, length, seed| {
            let spec = match option {
                0 => PatternSpec::WhiteNoise { std: 1.0 },
                _ => PatternSpec::ArProcess {
                    coeffs: vec![0.9],
                    noise_std: 1.0,
                },
            };
            Ok(vec![gen_base_pattern(&spec, length, child_seed(seed, "process", 0))?])
        }),
    )
}

fn random_walk() -> Template {
    Template::new(
        "random_walk",
        category(CategoryKind::NoiseUnderstanding, "random_walk"),
        "Random walk versus independent noise",
        "Is the given time series likely to be a random walk process?",
        vec!["Yes".into(), "No".into()],
        1,
        Some("A random walk accumulates its steps, so neighboring values stay close; independent noise jumps freely around a fixed level."),
        Some("A random walk is the running sum of independent steps. Its value today equals yesterday's value plus a fresh shock, so it wanders without a fixed level."),
        &["random walk", "unit root"],
        &["confusing high volatility with a random walk"],
        Box::new(|option, length, seed| {
            let spec = match option {
                0 => PatternSpec::RandomWalk { step_std: 1.0 },
                _ => PatternSpec::WhiteNoise { std: 1.0 },
            };
            Ok(vec![gen_base_pattern(&spec, length, child_seed(seed, "process", 0))?])
        }),
    )
}

/// SNR levels (dB) for the noisy and quiet series of the noise_level template.
pub const SNR_NOISY_DB: f64 = 0.0;
pub const SNR_QUIET_DB: f64 = 20.0;

fn noise_level() -> Template {
    Template::new(
        "noise_level",
        category(CategoryKind::NoiseUnderstanding, "signal_noise_ratio"),
        "Which of two same-signal series is noisier",
        "You are given two time series with the same underlying pattern but different noise levels. Which time series has a higher magnitude of noise?",
        vec!["The first time series".into(), "The second time series".into()],
        2,
        Some("The underlying wave is identical in both; compare how far the points scatter around it."),
        Some("The signal-to-noise ratio compares signal power with noise variance; a lower ratio means the same pattern is buried under stronger noise."),
        &["signal-to-noise ratio", "noise magnitude"],
        &["judging noise by amplitude of the signal instead of the scatter"],
        Box::new(|option, length, seed| {
            let clean = gen_base_pattern(
                &PatternSpec::Sine {
                    amplitude: 2.0,
                    period: 16.0,
                    phase: sine_phase(seed),
                },
                length,
                0,
            )?;
            let noisy = add_noise(&clean, SNR_NOISY_DB, child_seed(seed, "noisy", 0))?;
            let quiet = add_noise(&clean, SNR_QUIET_DB, child_seed(seed, "quiet", 0))?;
            Ok(match option {
                0 => vec![noisy, quiet],
                _ => vec![quiet, noisy],
            })
        }),
    )
}

/// Anomaly strengths used by the anomaly_pair template.
pub const SPIKE_MAGNITUDE: f64 = 6.0;
pub const LEVEL_SHIFT_MAGNITUDE: f64 = 4.0;
pub const VARIANCE_SHIFT_FACTOR: f64 = 5.0;

/// The anomaly pair injected for each option, in option order.
pub const ANOMALY_PAIRS: [(AnomalyKind, AnomalyKind); 4] = [
    (AnomalyKind::Spike, AnomalyKind::LevelShift),
    (AnomalyKind::Spike, AnomalyKind::VarianceShift),
    (AnomalyKind::LevelShift, AnomalyKind::VarianceShift),
    (AnomalyKind::Spike, AnomalyKind::Spike),
];

/// Windows for the two injected anomalies, scaled to the series length:
/// first in `[n/8, n/4)`, second in `[5n/8, 3n/4)`.
pub fn anomaly_windows(length: usize) -> ((usize, usize), (usize, usize)) {
    ((length / 8, length / 4 - 1), (5 * length / 8, 3 * length / 4 - 1))
}

fn anomaly_label(kind: AnomalyKind, window: (usize, usize)) -> AnomalyLabel {
    match kind {
        AnomalyKind::Spike => {
            let center = (window.0 + window.1) / 2;
            AnomalyLabel {
                kind,
                start: center,
                end: center,
                magnitude: SPIKE_MAGNITUDE,
            }
        }
        AnomalyKind::LevelShift => AnomalyLabel {
            kind,
            start: window.0,
            end: window.1,
            magnitude: LEVEL_SHIFT_MAGNITUDE,
        },
        AnomalyKind::VarianceShift => AnomalyLabel {
            kind,
            start: window.0,
            end: window.1,
            magnitude: VARIANCE_SHIFT_FACTOR,
        },
        AnomalyKind::PatternBreak => AnomalyLabel {
            kind,
            start: window.0,
            end: window.1,
            magnitude: 1.0,
        },
    }
}

fn anomaly_pair() -> Template {
    Template::new(
        "anomaly_pair",
        category(CategoryKind::AnomalyDetection, "anomaly_types"),
        "Identify the two anomaly types injected into a clean cycle",
        "The given time series has two types of anomalies appearing at different time points. What are the likely types of these anomalies?",
        vec![
            "A sudden spike and a level shift".into(),
            "A sudden spike and a variance change".into(),
            "A level shift and a variance change".into(),
            "Two sudden spikes".into(),
        ],
        1,
        Some("A spike is one isolated extreme point; a level shift moves a whole stretch up or down; a variance change widens or narrows the scatter over a stretch."),
        Some("Anomalies are departures from the series' normal behavior. A spike affects a single step, a level shift adds a constant over a window, and a variance change rescales the fluctuations inside a window."),
        &["anomaly detection", "spikes", "level shifts", "variance changes"],
        &["matching only one of the two anomalies", "confusing level shift with variance change"],
        Box::new(|option, length, seed| {
            let base_wave = gen_base_pattern(
                &PatternSpec::Sine {
                    amplitude: 1.0,
                    period: 32.0,
                    phase: sine_phase(seed),
                },
                length,
                0,
            )?;
            let noise = gen_base_pattern(
                &PatternSpec::WhiteNoise { std: 0.2 },
                length,
                child_seed(seed, "noise", 0),
            )?;
            let base = compose(&[base_wave, noise], Composition::Additive)?;
            let (w1, w2) = anomaly_windows(length);
            let (first, second) = ANOMALY_PAIRS[option];
            let with_first = inject_anomaly(&base, &anomaly_label(first, w1), child_seed(seed, "anom1", 0))?;
            let with_both =
                inject_anomaly(&with_first, &anomaly_label(second, w2), child_seed(seed, "anom2", 0))?;
            Ok(vec![with_both])
        }),
    )
}

fn shape_similarity() -> Template {
    Template::new(
        "shape_similarity",
        category(CategoryKind::ComparativeAnalysis, "shape"),
        "Same underlying pattern under independent noise, or not",
        "Despite the noise, do the given two time series have similar patterns?",
        vec!["Yes".into(), "No".into()],
        2,
        Some("Ignore the jitter and compare where the two series rise and fall; matching peaks and troughs indicate the same pattern."),
        Some("Two series share a pattern when their systematic components move together even though their noise is independent."),
        &["shape similarity", "correlation"],
        &["declaring noisy copies of one pattern dissimilar"],
        Box::new(|option, length, seed| {
            let first_pattern = gen_base_pattern(
                &PatternSpec::Sine {
                    amplitude: 2.0,
                    period: 16.0,
                    phase: uniform_in(seed, "phase1", 0.0, std::f64::consts::TAU),
                },
                length,
                0,
            )?;
            let second_pattern = match option {
                0 => first_pattern.clone(),
                _ => gen_base_pattern(
                    &PatternSpec::Sine {
                        amplitude: 2.0,
                        period: 9.0,
                        phase: uniform_in(seed, "phase2", 0.0, std::f64::consts::TAU),
                    },
                    length,
                    0,
                )?,
            };
            Ok(vec![
                add_noise(&first_pattern, 10.0, child_seed(seed, "noise1", 0))?,
                add_noise(&second_pattern, 10.0, child_seed(seed, "noise2", 0))?,
            ])
        }),
    )
}

/// Step standard deviations for the walk_variance template (equal vs 1:4).
pub const WALK_STD_BASE: f64 = 1.0;
pub const WALK_STD_LARGE: f64 = 4.0;

fn walk_variance() -> Template {
    Template::new(
        "walk_variance",
        category(CategoryKind::ComparativeAnalysis, "distributional"),
        "Do two random walks share their step variance",
        "You are given two time series which are generated using a random walk. Are they likely to have the same variance?",
        vec!["Yes".into(), "No".into()],
        2,
        Some("Compare the typical size of step-to-step moves in each series, not how far each has drifted."),
        Some("The variance of a random walk's increments sets how violently it moves per step; two walks with equal step variance still follow different paths."),
        &["random walk", "variance comparison"],
        &["comparing total drift instead of step size"],
        Box::new(|option, length, seed| {
            let (std1, std2) = match option {
                0 => (WALK_STD_BASE, WALK_STD_BASE),
                _ => {
                    // Seeded coin for which side carries the larger steps.
                    if rng_for(child_seed(seed, "order", 0)).random_range(0..2) == 0 {
                        (WALK_STD_BASE, WALK_STD_LARGE)
                    } else {
                        (WALK_STD_LARGE, WALK_STD_BASE)
                    }
                }
            };
            Ok(vec![
                gen_base_pattern(
                    &PatternSpec::RandomWalk { step_std: std1 },
                    length,
                    child_seed(seed, "walk1", 0),
                )?,
                gen_base_pattern(
                    &PatternSpec::RandomWalk { step_std: std2 },
                    length,
                    child_seed(seed, "walk2", 0),
                )?,
            ])
        }),
    )
}

/// Coupling and lag conditioned on by the granger_direction template.
pub const GRANGER_COUPLING: f64 = 0.8;
pub const GRANGER_LAG: usize = 2;

fn granger_direction() -> Template {
    Template::new(
        "granger_direction",
        category(CategoryKind::CausalityAnalysis, "granger"),
        "Presence and direction of Granger causality in a pair",
        "Is there Granger causality between the two given time series?",
        vec![
            "Yes, the first series Granger-causes the second".into(),
            "Yes, the second series Granger-causes the first".into(),
            "No, there is no Granger causality between them".into(),
        ],
        2,
        Some("Check whether past values of one series help predict the other beyond its own history; a lagged echo of one series inside the other is the signature."),
        Some("Series X Granger-causes series Y when past values of X improve predictions of Y over using Y's own past alone."),
        &["Granger causality", "lagged regression"],
        &["reading contemporaneous correlation as causality", "reversing the causal direction"],
        Box::new(|option, length, seed| {
            let coupling = if option == 2 { 0.0 } else { GRANGER_COUPLING };
            let (driver, follower) =
                gen_granger_pair(length, GRANGER_LAG, coupling, child_seed(seed, "pair", 0))?;
            Ok(match option {
                1 => vec![follower, driver],
                _ => vec![driver, follower],
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anomaly_windows_are_disjoint_and_in_range() {
        for length in [64usize, 128, 256] {
            let (w1, w2) = anomaly_windows(length);
            assert!(w1.0 <= w1.1);
            assert!(w2.0 <= w2.1);
            assert!(w1.1 < w2.0, "windows overlap for length {length}");
            assert!(w2.1 < length);
        }
    }

    #[test]
    fn trend_positive_option_yields_positive_slope() {
        let registry = super::super::Registry::builtin();
        for seed in 0..5 {
            let q = registry.instantiate("trend", Some(0), seed).unwrap();
            let slope = crate::dsl::functions::ols_slope(q.series[0].values());
            assert!(slope > 0.0, "seed {seed}: slope {slope}");
        }
    }
}
