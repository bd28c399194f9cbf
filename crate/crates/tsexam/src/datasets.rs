//! Dataset adapters: the query-by-index contract the template DSL and agent
//! pipeline run against, plus loaders for delimited text, newline-delimited
//! JSON records, and synthetic recipes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::synth::{regenerate, Provenance};
use crate::Result;

/// A metadata value attached to a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Number(f64),
    Text(String),
}

impl MetaValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            MetaValue::Number(n) => Some(*n),
            MetaValue::Text(t) => t.trim().parse().ok(),
        }
    }

    pub fn as_text(&self) -> String {
        match self {
            MetaValue::Number(n) => format!("{n}"),
            MetaValue::Text(t) => t.clone(),
        }
    }
}

/// One named numeric sequence within a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub values: Vec<f64>,
}

/// The `(x_i, z_i)` pair returned by [`DatasetAdapter::query`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub series: Vec<NamedSeries>,
    pub metadata: BTreeMap<String, MetaValue>,
}

/// Column names and kinds exposed by an adapter; exactly the names usable by
/// DSL selection filters and placeholders.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub value_columns: Vec<String>,
    pub metadata_columns: Vec<String>,
}

/// Read-only, deterministic access to indexed samples.
pub trait DatasetAdapter: Send + Sync {
    fn size(&self) -> usize;
    /// Deterministic: repeated calls with the same index return bitwise
    /// identical samples.
    fn query(&self, index: usize) -> Result<Sample>;
    fn schema(&self) -> &Schema;
}

/// How file columns map onto series values and metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub value_columns: Vec<String>,
    #[serde(default)]
    pub metadata_columns: Vec<String>,
    /// Rows sharing a value of this column become one sample.
    #[serde(default)]
    pub group_by: Option<String>,
    /// Row order within a group; numeric when every cell parses as a number.
    #[serde(default)]
    pub sort_by: Option<String>,
}

/// In-memory dataset over grouped, sorted rows of a delimited file.
#[derive(Debug)]
pub struct TabularDataset {
    samples: Vec<Sample>,
    schema: Schema,
}

impl DatasetAdapter for TabularDataset {
    fn size(&self) -> usize {
        self.samples.len()
    }

    fn query(&self, index: usize) -> Result<Sample> {
        self.samples
            .get(index)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("sample index {index} out of range")))
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }
}

/// Load a delimited text file (`.csv`, `.tsv`) or newline-delimited JSON
/// (`.jsonl`, `.ndjson`) into an adapter.
///
/// Value cells that are empty are treated as missing and skipped; non-numeric
/// non-empty cells are an error naming the row. Groups whose series end up
/// empty are dropped with a warning.
pub fn load_tabular(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<TabularDataset> {
    let path = path.as_ref();
    if mapping.value_columns.is_empty() {
        return Err(Error::invalid("value_columns", "must be non-empty"));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let rows: Vec<BTreeMap<String, String>> = match ext.as_str() {
        "jsonl" | "ndjson" => read_jsonl_rows(path)?,
        "tsv" => read_delimited_rows(path, b'\t')?,
        _ => read_delimited_rows(path, b',')?,
    };
    build_tabular(rows, mapping)
}

fn read_delimited_rows(path: &Path, delimiter: u8) -> Result<Vec<BTreeMap<String, String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::invalid("header", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidRecord {
            line: i + 2,
            field: "row".into(),
            message: e.to_string(),
        })?;
        let mut row = BTreeMap::new();
        for (h, cell) in headers.iter().zip(record.iter()) {
            row.insert(h.clone(), cell.trim().to_string());
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_jsonl_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| Error::InvalidRecord {
                line: i + 1,
                field: "record".into(),
                message: e.to_string(),
            })?;
        let mut row = BTreeMap::new();
        for (k, v) in value {
            let cell = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => String::new(),
                other => other.to_string(),
            };
            row.insert(k, cell);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn build_tabular(
    rows: Vec<BTreeMap<String, String>>,
    mapping: &ColumnMapping,
) -> Result<TabularDataset> {
    // Every mapped column must exist in the file.
    let mut required: Vec<&String> = mapping.value_columns.iter().collect();
    required.extend(mapping.metadata_columns.iter());
    required.extend(mapping.group_by.iter());
    required.extend(mapping.sort_by.iter());
    if let Some(first) = rows.first() {
        for col in required {
            if !first.contains_key(col) {
                return Err(Error::invalid(
                    "mapping",
                    format!("column `{col}` not present in file"),
                ));
            }
        }
    }

    // Group rows, remembering the original row number of each for messages.
    let mut groups: BTreeMap<String, Vec<(usize, &BTreeMap<String, String>)>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let key = match &mapping.group_by {
            Some(col) => row.get(col).cloned().unwrap_or_default(),
            None => String::new(),
        };
        groups.entry(key).or_default().push((i, row));
    }

    let mut samples = Vec::new();
    for (key, mut members) in groups {
        if let Some(sort_col) = &mapping.sort_by {
            let all_numeric = members
                .iter()
                .all(|(_, r)| r.get(sort_col).is_some_and(|c| c.parse::<f64>().is_ok()));
            if all_numeric {
                members.sort_by(|a, b| {
                    let av: f64 = a.1[sort_col].parse().unwrap();
                    let bv: f64 = b.1[sort_col].parse().unwrap();
                    av.total_cmp(&bv)
                });
            } else {
                members.sort_by(|a, b| a.1[sort_col].cmp(&b.1[sort_col]));
            }
        }
        let mut series: Vec<NamedSeries> = mapping
            .value_columns
            .iter()
            .map(|c| NamedSeries {
                name: c.clone(),
                values: Vec::new(),
            })
            .collect();
        for (row_idx, row) in &members {
            for (c, out) in mapping.value_columns.iter().zip(series.iter_mut()) {
                let cell = row.get(c).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::InvalidRecord {
                    line: row_idx + 2,
                    field: c.clone(),
                    message: format!("value cell `{cell}` is not numeric"),
                })?;
                out.values.push(v);
            }
        }
        if series.iter().all(|s| s.values.is_empty()) {
            log::warn!("dropping group `{key}`: no numeric values in any value column");
            continue;
        }
        let mut metadata = BTreeMap::new();
        if let Some((_, first)) = members.first() {
            for col in &mapping.metadata_columns {
                let cell = first.get(col).cloned().unwrap_or_default();
                metadata.insert(col.clone(), meta_from_cell(&cell));
            }
        }
        if let Some(col) = &mapping.group_by {
            metadata
                .entry(col.clone())
                .or_insert_with(|| meta_from_cell(&key));
        }
        samples.push(Sample { series, metadata });
    }

    let mut metadata_columns = mapping.metadata_columns.clone();
    if let Some(col) = &mapping.group_by {
        if !metadata_columns.contains(col) {
            metadata_columns.push(col.clone());
        }
    }
    Ok(TabularDataset {
        samples,
        schema: Schema {
            value_columns: mapping.value_columns.clone(),
            metadata_columns,
        },
    })
}

fn meta_from_cell(cell: &str) -> MetaValue {
    match cell.parse::<f64>() {
        Ok(n) => MetaValue::Number(n),
        Err(_) => MetaValue::Text(cell.to_string()),
    }
}

/// Adapter that materializes synthetic recipes on demand; lets the whole
/// agent pipeline run offline and deterministically.
pub struct SyntheticDataset {
    specs: Vec<(Provenance, BTreeMap<String, MetaValue>)>,
    schema: Schema,
}

/// Build an adapter over synthetic recipes. Each recipe is regenerated once
/// up front to reject invalid specs early; queries regenerate lazily.
pub fn synthetic_adapter(
    specs: Vec<(Provenance, BTreeMap<String, MetaValue>)>,
) -> Result<SyntheticDataset> {
    if specs.is_empty() {
        return Err(Error::invalid("specs", "must be non-empty"));
    }
    let mut metadata_columns: Vec<String> = Vec::new();
    for (prov, meta) in &specs {
        regenerate(prov)?;
        for key in meta.keys() {
            if !metadata_columns.contains(key) {
                metadata_columns.push(key.clone());
            }
        }
    }
    metadata_columns.sort();
    Ok(SyntheticDataset {
        specs,
        schema: Schema {
            value_columns: vec!["value".into()],
            metadata_columns,
        },
    })
}

impl DatasetAdapter for SyntheticDataset {
    fn size(&self) -> usize {
        self.specs.len()
    }

    fn query(&self, index: usize) -> Result<Sample> {
        let (prov, meta) = self
            .specs
            .get(index)
            .ok_or_else(|| Error::NotFound(format!("sample index {index} out of range")))?;
        let series = regenerate(prov)?;
        Ok(Sample {
            series: vec![NamedSeries {
                name: "value".into(),
                values: series.values().to_vec(),
            }],
            metadata: meta.clone(),
        })
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::PatternSpec;

    fn write_temp(name: &str, contents: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("tsexam-datasets");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn grouping_produces_one_sample_per_group() {
        let path = write_temp(
            "groups.csv",
            "ticker,day,close\nAAA,1,10.0\nAAA,2,11.0\nAAA,3,12.0\nBBB,1,5.0\nBBB,2,4.0\nBBB,3,3.0\n",
        );
        let mapping = ColumnMapping {
            value_columns: vec!["close".into()],
            metadata_columns: vec![],
            group_by: Some("ticker".into()),
            sort_by: Some("day".into()),
        };
        let ds = load_tabular(&path, &mapping).unwrap();
        assert_eq!(ds.size(), 2);
        let s = ds.query(0).unwrap();
        assert_eq!(s.series[0].values.len(), 3);
        assert_eq!(s.metadata["ticker"].as_text(), "AAA");
    }

    #[test]
    fn no_group_by_gives_single_sample() {
        let path = write_temp("single.csv", "v\n1\n2\n3\n");
        let mapping = ColumnMapping {
            value_columns: vec!["v".into()],
            ..Default::default()
        };
        let ds = load_tabular(&path, &mapping).unwrap();
        assert_eq!(ds.size(), 1);
        assert_eq!(ds.query(0).unwrap().series[0].values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn non_numeric_cell_names_row() {
        let path = write_temp("bad.csv", "v\n1\nabc\n3\n");
        let mapping = ColumnMapping {
            value_columns: vec!["v".into()],
            ..Default::default()
        };
        match load_tabular(&path, &mapping) {
            Err(Error::InvalidRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected InvalidRecord, got {other:?}"),
        }
    }

    #[test]
    fn missing_mapped_column_rejected() {
        let path = write_temp("cols.csv", "a,b\n1,2\n");
        let mapping = ColumnMapping {
            value_columns: vec!["missing".into()],
            ..Default::default()
        };
        assert!(load_tabular(&path, &mapping).is_err());
    }

    #[test]
    fn jsonl_rows_load() {
        let path = write_temp(
            "rows.jsonl",
            "{\"v\": 1.5, \"label\": \"N\"}\n{\"v\": 2.5, \"label\": \"N\"}\n",
        );
        let mapping = ColumnMapping {
            value_columns: vec!["v".into()],
            metadata_columns: vec!["label".into()],
            ..Default::default()
        };
        let ds = load_tabular(&path, &mapping).unwrap();
        assert_eq!(ds.size(), 1);
        assert_eq!(ds.query(0).unwrap().series[0].values, vec![1.5, 2.5]);
        assert_eq!(ds.query(0).unwrap().metadata["label"].as_text(), "N");
    }

    #[test]
    fn synthetic_adapter_is_deterministic() {
        let specs = (0..5)
            .map(|i| {
                let prov = Provenance::Pattern {
                    spec: PatternSpec::WhiteNoise { std: 1.0 },
                    length: 32,
                    seed: i,
                };
                let mut meta = BTreeMap::new();
                meta.insert("label".to_string(), MetaValue::Text("uptrend".into()));
                (prov, meta)
            })
            .collect();
        let ds = synthetic_adapter(specs).unwrap();
        assert_eq!(ds.size(), 5);
        let a = ds.query(3).unwrap();
        let b = ds.query(3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.metadata["label"].as_text(), "uptrend");
        assert_eq!(ds.schema().metadata_columns, vec!["label".to_string()]);
    }

    #[test]
    fn empty_specs_rejected() {
        assert!(synthetic_adapter(vec![]).is_err());
    }
}
