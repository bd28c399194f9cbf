//! The fixed, versioned feature function library.
//!
//! Every function is total over its declared domain and pure; unsupported
//! inputs produce an [`EvalError`] that skips the current sample rather than
//! aborting evaluation. Unknown names are parse-time feedback, not runtime
//! extension points.

use super::expr::{EvalError, Value};

/// Library version advertised in docs and the generation prompt.
pub const LIBRARY_VERSION: &str = "1";

/// `(name, arity, summary)` for every library function.
pub const CATALOG: &[(&str, usize, &str)] = &[
    ("mean", 1, "arithmetic mean of a series"),
    ("std", 1, "population standard deviation of a series"),
    ("variance", 1, "population variance of a series"),
    ("diff", 1, "first differences (length n-1)"),
    ("returns", 1, "relative changes (x[t]-x[t-1])/x[t-1]"),
    ("rolling_std", 2, "rolling population std with integer window"),
    ("ols_slope", 1, "least-squares slope of the series against step index"),
    ("autocorr", 2, "sample autocorrelation at integer lag"),
    ("max", 1, "largest value of a series"),
    ("min", 1, "smallest value of a series"),
    ("longest_streak_up", 1, "longest run of strictly increasing steps"),
    ("longest_streak_down", 1, "longest run of strictly decreasing steps"),
    ("quantile", 2, "linear-interpolated quantile, q in [0,1]"),
    ("count_above", 2, "number of values strictly above a threshold"),
    ("count_below", 2, "number of values strictly below a threshold"),
    ("len", 1, "number of values in a series"),
    ("first", 1, "first value of a series"),
    ("last", 1, "last value of a series"),
    ("abs", 1, "absolute value of a number"),
];

/// Arity of a library function, if it exists.
pub fn arity(name: &str) -> Option<usize> {
    CATALOG.iter().find(|(n, _, _)| *n == name).map(|(_, a, _)| *a)
}

/// Invoke a library function on evaluated arguments.
pub fn call(name: &str, args: &[Value]) -> Result<Value, EvalError> {
    let expected = arity(name)
        .ok_or_else(|| EvalError(format!("unknown function `{name}`")))?;
    if args.len() != expected {
        return Err(EvalError(format!(
            "`{name}` expects {expected} argument(s), got {}",
            args.len()
        )));
    }
    match name {
        "mean" => Ok(Value::Number(mean(non_empty(name, args[0].as_series()?)?))),
        "std" => Ok(Value::Number(
            variance(non_empty(name, args[0].as_series()?)?).sqrt(),
        )),
        "variance" => Ok(Value::Number(variance(non_empty(name, args[0].as_series()?)?))),
        "diff" => {
            let s = args[0].as_series()?;
            if s.len() < 2 {
                return Err(EvalError("`diff` needs at least 2 values".into()));
            }
            Ok(Value::Series(s.windows(2).map(|w| w[1] - w[0]).collect()))
        }
        "returns" => {
            let s = args[0].as_series()?;
            if s.len() < 2 {
                return Err(EvalError("`returns` needs at least 2 values".into()));
            }
            let mut out = Vec::with_capacity(s.len() - 1);
            for w in s.windows(2) {
                if w[0] == 0.0 {
                    return Err(EvalError("`returns` undefined at a zero value".into()));
                }
                out.push((w[1] - w[0]) / w[0]);
            }
            Ok(Value::Series(out))
        }
        "rolling_std" => {
            let s = args[0].as_series()?;
            let w = int_arg(name, &args[1])?;
            if w < 2 || w > s.len() {
                return Err(EvalError(format!(
                    "`rolling_std` window {w} invalid for series of length {}",
                    s.len()
                )));
            }
            Ok(Value::Series(
                s.windows(w).map(|win| variance(win).sqrt()).collect(),
            ))
        }
        "ols_slope" => {
            let s = args[0].as_series()?;
            if s.len() < 2 {
                return Err(EvalError("`ols_slope` needs at least 2 values".into()));
            }
            Ok(Value::Number(ols_slope(s)))
        }
        "autocorr" => {
            let s = args[0].as_series()?;
            let lag = int_arg(name, &args[1])?;
            if lag == 0 || lag >= s.len() {
                return Err(EvalError(format!(
                    "`autocorr` lag {lag} invalid for series of length {}",
                    s.len()
                )));
            }
            Ok(Value::Number(autocorr(s, lag)))
        }
        "max" => {
            let s = non_empty(name, args[0].as_series()?)?;
            Ok(Value::Number(s.iter().cloned().fold(f64::NEG_INFINITY, f64::max)))
        }
        "min" => {
            let s = non_empty(name, args[0].as_series()?)?;
            Ok(Value::Number(s.iter().cloned().fold(f64::INFINITY, f64::min)))
        }
        "longest_streak_up" => Ok(Value::Number(longest_streak(args[0].as_series()?, true))),
        "longest_streak_down" => Ok(Value::Number(longest_streak(args[0].as_series()?, false))),
        "quantile" => {
            let s = non_empty(name, args[0].as_series()?)?;
            let q = args[1].as_number()?;
            if !(0.0..=1.0).contains(&q) {
                return Err(EvalError("`quantile` q must lie in [0, 1]".into()));
            }
            Ok(Value::Number(quantile(s, q)))
        }
        "count_above" => {
            let s = args[0].as_series()?;
            let t = args[1].as_number()?;
            Ok(Value::Number(s.iter().filter(|v| **v > t).count() as f64))
        }
        "count_below" => {
            let s = args[0].as_series()?;
            let t = args[1].as_number()?;
            Ok(Value::Number(s.iter().filter(|v| **v < t).count() as f64))
        }
        "len" => Ok(Value::Number(args[0].as_series()?.len() as f64)),
        "first" => {
            let s = non_empty(name, args[0].as_series()?)?;
            Ok(Value::Number(s[0]))
        }
        "last" => {
            let s = non_empty(name, args[0].as_series()?)?;
            Ok(Value::Number(*s.last().unwrap()))
        }
        "abs" => Ok(Value::Number(args[0].as_number()?.abs())),
        _ => unreachable!("arity() already filtered unknown names"),
    }
}

fn non_empty<'a>(name: &str, s: &'a [f64]) -> Result<&'a [f64], EvalError> {
    if s.is_empty() {
        Err(EvalError(format!("`{name}` needs a non-empty series")))
    } else {
        Ok(s)
    }
}

fn int_arg(name: &str, v: &Value) -> Result<usize, EvalError> {
    let n = v.as_number()?;
    if n.fract() != 0.0 || n < 0.0 || n > usize::MAX as f64 {
        return Err(EvalError(format!("`{name}` expects a non-negative integer")));
    }
    Ok(n as usize)
}

fn mean(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

fn variance(s: &[f64]) -> f64 {
    let m = mean(s);
    s.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / s.len() as f64
}

pub(crate) fn ols_slope(s: &[f64]) -> f64 {
    let n = s.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = mean(s);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in s.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    num / den
}

fn autocorr(s: &[f64], lag: usize) -> f64 {
    let m = mean(s);
    let denom: f64 = s.iter().map(|v| (v - m) * (v - m)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = s
        .windows(lag + 1)
        .map(|w| (w[0] - m) * (w[lag] - m))
        .sum();
    num / denom
}

fn longest_streak(s: &[f64], up: bool) -> f64 {
    let mut best = 0usize;
    let mut current = 0usize;
    for w in s.windows(2) {
        let step_up = w[1] > w[0];
        let step_down = w[1] < w[0];
        if (up && step_up) || (!up && step_down) {
            current += 1;
            best = best.max(current);
        } else {
            current = 0;
        }
    }
    best as f64
}

fn quantile(s: &[f64], q: f64) -> f64 {
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> Value {
        Value::Series(v.to_vec())
    }

    #[test]
    fn ols_slope_matches_closed_form() {
        // [0,1,2,3] has exact slope 1.
        let v = call("ols_slope", &[series(&[0.0, 1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(v, Value::Number(1.0));
    }

    #[test]
    fn quantile_interpolates() {
        let v = call("quantile", &[series(&[1.0, 2.0, 3.0]), Value::Number(0.5)]).unwrap();
        assert_eq!(v, Value::Number(2.0));
        let v = call("quantile", &[series(&[1.0, 3.0]), Value::Number(0.25)]).unwrap();
        assert_eq!(v, Value::Number(1.5));
    }

    #[test]
    fn streaks_count_consecutive_moves() {
        let s = series(&[1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(call("longest_streak_up", &[s.clone()]).unwrap(), Value::Number(3.0));
        assert_eq!(call("longest_streak_down", &[s]).unwrap(), Value::Number(1.0));
    }

    #[test]
    fn unknown_function_is_rejected() {
        assert!(call("fetch_url", &[Value::Number(1.0)]).is_err());
    }

    #[test]
    fn arity_is_enforced() {
        assert!(call("mean", &[]).is_err());
        assert!(call("autocorr", &[series(&[1.0, 2.0])]).is_err());
    }

    #[test]
    fn returns_rejects_zero_base() {
        assert!(call("returns", &[series(&[0.0, 1.0])]).is_err());
        let v = call("returns", &[series(&[2.0, 3.0])]).unwrap();
        assert_eq!(v, Value::Series(vec![0.5]));
    }

    #[test]
    fn autocorr_of_alternating_series_is_negative() {
        let s: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        match call("autocorr", &[Value::Series(s), Value::Number(1.0)]).unwrap() {
            Value::Number(r) => assert!(r < -0.9),
            other => panic!("unexpected {other:?}"),
        }
    }
}
