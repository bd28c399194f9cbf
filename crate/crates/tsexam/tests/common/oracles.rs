//! Independent statistical oracles.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

pub fn std_dev(values: &[f64]) -> f64 {
    variance(values).sqrt()
}

/// Closed-form least-squares slope of `values` against the step index.
pub fn ols_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = mean(values);
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in values.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    num / den
}

/// Sample autocorrelation at `lag`.
pub fn autocorr(values: &[f64], lag: usize) -> f64 {
    let m = mean(values);
    let denom: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    let num: f64 = values
        .windows(lag + 1)
        .map(|w| (w[0] - m) * (w[lag] - m))
        .sum();
    num / denom
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / (da.sqrt() * db.sqrt())
}

/// Ljung-Box statistic over lags `1..=max_lag`.
pub fn ljung_box_q(values: &[f64], max_lag: usize) -> f64 {
    let n = values.len() as f64;
    let mut q = 0.0;
    for k in 1..=max_lag {
        let r = autocorr(values, k);
        q += r * r / (n - k as f64);
    }
    n * (n + 2.0) * q
}

pub fn chi2_quantile(df: f64, p: f64) -> f64 {
    ChiSquared::new(df).unwrap().inverse_cdf(p)
}

/// Solve the normal equations `X'X b = X'y` by Gaussian elimination and
/// return the residual sum of squares. `None` when singular.
fn ols_rss(rows: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let p = rows[0].len();
    let mut xtx = vec![vec![0.0f64; p]; p];
    let mut xty = vec![0.0f64; p];
    for (row, &target) in rows.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * target;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    let mut a = xtx;
    let mut b = xty;
    for col in 0..p {
        let pivot = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..p {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for k in col..p {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let beta: Vec<f64> = (0..p).map(|i| b[i] / a[i][i]).collect();
    let mut rss = 0.0;
    for (row, &target) in rows.iter().zip(y) {
        let fitted: f64 = row.iter().zip(&beta).map(|(x, c)| x * c).sum();
        rss += (target - fitted) * (target - fitted);
    }
    Some(rss)
}

/// Lagged-regression Granger F-test p-value for "x helps predict y".
///
/// Restricted model: `y[t] ~ 1 + y[t-1..t-order]`;
/// unrestricted adds `x[t-1..t-order]`. Small p-values mean x Granger-causes y.
pub fn granger_p_value(x: &[f64], y: &[f64], order: usize) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = y.len();
    assert!(n > 3 * order + 1, "series too short for order {order}");
    let mut restricted_rows = Vec::with_capacity(n - order);
    let mut unrestricted_rows = Vec::with_capacity(n - order);
    let mut targets = Vec::with_capacity(n - order);
    for t in order..n {
        let mut restricted = vec![1.0];
        let mut unrestricted = vec![1.0];
        for k in 1..=order {
            restricted.push(y[t - k]);
            unrestricted.push(y[t - k]);
        }
        for k in 1..=order {
            unrestricted.push(x[t - k]);
        }
        restricted_rows.push(restricted);
        unrestricted_rows.push(unrestricted);
        targets.push(y[t]);
    }
    let Some(rss_restricted) = ols_rss(&restricted_rows, &targets) else {
        return 1.0;
    };
    let Some(rss_unrestricted) = ols_rss(&unrestricted_rows, &targets) else {
        return 1.0;
    };
    let df1 = order as f64;
    let df2 = (targets.len() - (2 * order + 1)) as f64;
    if rss_unrestricted <= 0.0 || df2 <= 0.0 {
        return 1.0;
    }
    let f_stat = ((rss_restricted - rss_unrestricted) / df1) / (rss_unrestricted / df2);
    if f_stat <= 0.0 {
        return 1.0;
    }
    let dist = FisherSnedecor::new(df1, df2).unwrap();
    1.0 - dist.cdf(f_stat)
}

/// Full dynamic-programming edit-distance table (the textbook O(n*m) form).
pub fn levenshtein_dp(s1: &str, s2: &str) -> usize {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    let mut table = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in table.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        table[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            table[i][j] = (table[i - 1][j] + 1)
                .min(table[i][j - 1] + 1)
                .min(table[i - 1][j - 1] + cost);
        }
    }
    table[a.len()][b.len()]
}
