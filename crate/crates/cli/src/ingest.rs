//! CSV loading: one row per data point, one label column.

use std::collections::BTreeMap;
use std::path::Path;

use unlearn_core::fixed::FixedPoint;
use unlearn_core::hashing::DataPoint;
use unlearn_core::training::Dataset;
use unlearn_core::ScaleConfig;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column `{column}`: `{value}` is not numeric")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Numeric,
    Boolean,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnType,
    /// Category codes in order of assignment.
    pub categories: Vec<String>,
}

/// Column declarations. Undeclared feature columns are inferred.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Schema {
    pub label: Option<String>,
    pub uid: Option<String>,
    pub types: BTreeMap<String, ColumnType>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestedDataset {
    pub dataset: Dataset,
    pub features: Vec<Column>,
    pub label: Column,
}

const LABEL_NAMES: [&str; 4] = ["target", "label", "class", "y"];

fn is_bool(v: &str) -> bool {
    matches!(v, "0" | "1" | "true" | "false" | "True" | "False" | "TRUE" | "FALSE")
}

fn infer(values: &[&str]) -> ColumnType {
    if values.iter().all(|v| is_bool(v)) {
        ColumnType::Boolean
    } else if values.iter().all(|v| v.parse::<f64>().is_ok()) {
        ColumnType::Numeric
    } else {
        ColumnType::Categorical
    }
}

fn encode(
    col: &mut Column,
    row: usize,
    v: &str,
    scale: &ScaleConfig,
) -> Result<FixedPoint, IngestError> {
    let non_numeric = || IngestError::NonNumericCell {
        row,
        column: col.name.clone(),
        value: v.to_string(),
    };
    let text = match col.kind {
        ColumnType::Boolean => match v {
            "1" | "true" | "True" | "TRUE" => "1".to_string(),
            "0" | "false" | "False" | "FALSE" => "0".to_string(),
            _ => return Err(non_numeric()),
        },
        ColumnType::Numeric => v.to_string(),
        ColumnType::Categorical => {
            let code = match col.categories.iter().position(|c| c == v) {
                Some(i) => i,
                None => {
                    col.categories.push(v.to_string());
                    col.categories.len() - 1
                }
            };
            code.to_string()
        }
    };
    FixedPoint::from_decimal_str(&text, scale).map_err(|_| non_numeric())
}

/// Loads CSV text. Row order is file order; `uid` is the row index unless a
/// uid column exists.
pub fn ingest_str(text: &str, schema: &Schema, scale: &ScaleConfig) -> Result<IngestedDataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| IngestError::Csv(e.to_string()))?;

    let find = |name: &str| header.iter().position(|h| h == name);
    let label_idx = match &schema.label {
        Some(l) => find(l).ok_or_else(|| IngestError::Schema(format!("label column `{l}` not found")))?,
        None => LABEL_NAMES
            .iter()
            .find_map(|n| find(n))
            .ok_or_else(|| IngestError::Schema(format!("no label column (expected one of {LABEL_NAMES:?})")))?,
    };
    let uid_idx = match &schema.uid {
        Some(u) => Some(find(u).ok_or_else(|| IngestError::Schema(format!("uid column `{u}` not found")))?),
        None => find("uid"),
    };
    if uid_idx == Some(label_idx) {
        return Err(IngestError::Schema("label and uid are the same column".into()));
    }
    for name in schema.types.keys() {
        if find(name).is_none() {
            return Err(IngestError::Schema(format!("declared column `{name}` not found")));
        }
    }

    let column = |i: usize| -> Column {
        let name = header[i].clone();
        let values: Vec<&str> = rows.iter().map(|r| r.get(i).unwrap_or("")).collect();
        let kind = schema.types.get(&name).copied().unwrap_or_else(|| infer(&values));
        Column {
            name,
            kind,
            categories: Vec::new(),
        }
    };
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&i| i != label_idx && Some(i) != uid_idx).collect();
    if feature_idx.is_empty() {
        return Err(IngestError::Schema("no feature columns".into()));
    }
    let mut features: Vec<Column> = feature_idx.iter().map(|&i| column(i)).collect();
    let mut label = column(label_idx);

    let mut points = Vec::with_capacity(rows.len());
    for (r, rec) in rows.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(IngestError::Schema(format!("row {r} has {} cells, header has {}", rec.len(), header.len())));
        }
        let uid = match uid_idx {
            Some(i) => rec[i].parse::<u64>().map_err(|_| IngestError::NonNumericCell {
                row: r,
                column: header[i].clone(),
                value: rec[i].to_string(),
            })?,
            None => r as u64,
        };
        let x = feature_idx
            .iter()
            .zip(features.iter_mut())
            .map(|(&i, col)| encode(col, r, &rec[i], scale))
            .collect::<Result<Vec<_>, _>>()?;
        let y = encode(&mut label, r, &rec[label_idx], scale)?;
        points.push(DataPoint::new(uid, x, y));
    }
    let dataset = Dataset::new(feature_idx.len(), points).map_err(|e| IngestError::Schema(e.to_string()))?;
    Ok(IngestedDataset {
        dataset,
        features,
        label,
    })
}

pub fn ingest_csv(path: &Path, schema: &Schema, scale: &ScaleConfig) -> Result<IngestedDataset, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::Csv(format!("{}: {e}", path.display())))?;
    ingest_str(&text, schema, scale)
}

/// Deterministic split: the first `ratio` share of rows trains, the rest tests.
pub fn train_test_split(d: &Dataset, ratio: f64) -> (Dataset, Dataset) {
    let n = ((d.len() as f64) * ratio).round() as usize;
    let n = n.min(d.len());
    let part = |points: &[DataPoint]| Dataset {
        arity: d.arity,
        points: points.to_vec(),
    };
    (part(&d.points[..n]), part(&d.points[n..]))
}
