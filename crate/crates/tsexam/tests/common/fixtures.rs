//! Deterministic dataset fixtures shaped like the real-world sources the
//! golden templates target (quote histories, beat archives, station
//! temperature exports).

use std::path::PathBuf;

use tsexam::datasets::{load_tabular, ColumnMapping, TabularDataset};

fn temp_file(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("tsexam-fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

/// Quote-history-shaped CSV: three tickers with up, choppy, and down drifts.
pub fn prices_dataset() -> TabularDataset {
    let mut csv = String::from("ticker,day,close\n");
    for (t, ticker) in ["UPUP", "CHOP", "DOWN"].iter().enumerate() {
        let mut price = 100.0;
        for day in 0..120 {
            let drift = match t {
                0 => 0.6,
                1 => {
                    if day % 2 == 0 {
                        1.1
                    } else {
                        -1.1
                    }
                }
                _ => -0.4,
            };
            let wiggle = ((day * 37 + t * 11) % 13) as f64 / 13.0 - 0.5;
            price += drift + 0.4 * wiggle;
            csv.push_str(&format!("{ticker},{day},{price:.4}\n"));
        }
    }
    let path = temp_file("prices.csv", &csv);
    load_tabular(
        path,
        &ColumnMapping {
            value_columns: vec!["close".into()],
            metadata_columns: vec!["ticker".into()],
            group_by: Some("ticker".into()),
            sort_by: Some("day".into()),
        },
    )
    .unwrap()
}

/// Beat-archive-shaped JSONL: one row per sample step, grouped by record;
/// even indices are labeled N, odd are labeled V.
pub fn beats_dataset() -> TabularDataset {
    let mut jsonl = String::new();
    for (record, label) in [("r01", "N"), ("r02", "V"), ("r03", "N"), ("r04", "V")] {
        for t in 0..64 {
            let phase = t as f64 / 64.0 * std::f64::consts::TAU;
            let amplitude = if label == "N" { 1.0 } else { 2.4 };
            let signal = amplitude * (phase.sin() + 0.3 * (3.0 * phase).cos());
            jsonl.push_str(&format!(
                "{{\"record\": \"{record}\", \"t\": {t}, \"signal\": {signal:.5}, \"label\": \"{label}\"}}\n"
            ));
        }
    }
    let path = temp_file("beats.jsonl", &jsonl);
    load_tabular(
        path,
        &ColumnMapping {
            value_columns: vec!["signal".into()],
            metadata_columns: vec!["label".into(), "record".into()],
            group_by: Some("record".into()),
            sort_by: Some("t".into()),
        },
    )
    .unwrap()
}

/// Station-temperature-shaped CSV: one calm station, one wildly swinging.
pub fn weather_dataset() -> TabularDataset {
    let mut csv = String::from("station,hour,temperature\n");
    for (s, station) in ["calm-coast", "wild-ridge"].iter().enumerate() {
        let mut temperature = 15.0;
        for hour in 0..96 {
            let swing = if s == 0 { 0.3 } else { 12.0 };
            let step = ((hour * 29 + s * 7) % 11) as f64 / 11.0 - 0.5;
            temperature += swing * step;
            csv.push_str(&format!("{station},{hour},{temperature:.3}\n"));
        }
    }
    let path = temp_file("weather.csv", &csv);
    load_tabular(
        path,
        &ColumnMapping {
            value_columns: vec!["temperature".into()],
            metadata_columns: vec!["station".into()],
            group_by: Some("station".into()),
            sort_by: Some("hour".into()),
        },
    )
    .unwrap()
}

/// The spec'd minimal trend-rule program: slope above one half or not.
pub const TREND_RULE_DOC: &str = r#"
name = "trend_rule_example"
question = "Is the slope above one half?"

[selection]
min_window = 4
max_window = 4

[features]
slope = "ols_slope(window)"

[[options]]
text = "Yes"
[[options]]
text = "No"

[[rules]]
when = "slope > 0.5"
choose = 0
[[rules]]
default = true
choose = 1
"#;
