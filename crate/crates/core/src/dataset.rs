//! Labelled tabular data and its comma-delimited file form.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::schema::{FeatureKind, FeatureSet, UserProfile, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("row {row}: feature `{feature}` value `{value}` outside its domain")]
    OutOfDomain { row: usize, feature: String, value: String },
    #[error("row {row}: label `{value}` is not 0 or 1")]
    NonBinaryLabel { row: usize, value: String },
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSet,
    pub rows: Vec<(UserProfile, u8)>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|(_, y)| *y == 1).count()
    }
}

/// Parses a header-first CSV table into a dataset. Numeric cells are snapped
/// to the nearest grid point (ties toward `min`).
pub fn ingest_csv(text: &str, schema: &FeatureSet, label_column: &str) -> Result<Dataset, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_owned()).collect();

    let mut columns = Vec::with_capacity(schema.len());
    for f in schema.features() {
        let pos = headers
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| DatasetError::MissingColumn(f.name.clone()))?;
        columns.push(pos);
    }
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingColumn(label_column.to_owned()))?;
    if let Some(extra) = headers.iter().find(|h| *h != label_column && schema.index_of(h).is_none()) {
        return Err(DatasetError::UnexpectedColumn(extra.clone()));
    }

    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut values = BTreeMap::new();
        for (f, &pos) in schema.features().iter().zip(&columns) {
            let cell = record.get(pos).unwrap_or("").trim();
            let out_of_domain = || DatasetError::OutOfDomain {
                row,
                feature: f.name.clone(),
                value: cell.to_owned(),
            };
            let value = match &f.kind {
                FeatureKind::Numeric { min, max, .. } => {
                    let v: f64 = cell.parse().map_err(|_| out_of_domain())?;
                    if !v.is_finite() || v < *min || v > *max {
                        return Err(out_of_domain());
                    }
                    Value::Num(f.snap(v).ok_or_else(out_of_domain)?)
                }
                FeatureKind::Categorical { .. } => {
                    if f.option_index(cell).is_none() {
                        return Err(out_of_domain());
                    }
                    Value::Cat(cell.to_owned())
                }
            };
            values.insert(f.name.clone(), value);
        }
        let label_cell = record.get(label_pos).unwrap_or("").trim();
        let label = match label_cell {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DatasetError::NonBinaryLabel {
                    row,
                    value: other.to_owned(),
                })
            }
        };
        let profile = UserProfile::new(values, schema).map_err(|e| DatasetError::InvalidRow {
            row,
            message: e.to_string(),
        })?;
        rows.push((profile, label));
    }
    Ok(Dataset {
        schema: schema.clone(),
        rows,
    })
}

/// Writes the dataset with one column per feature (schema order) followed by the label.
pub fn emit_csv(data: &Dataset, label_column: &str) -> Result<String, DatasetError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = data.schema.features().iter().map(|f| f.name.as_str()).collect();
    header.push(label_column);
    writer.write_record(&header)?;
    for (profile, label) in &data.rows {
        let mut record: Vec<String> = data
            .schema
            .features()
            .iter()
            .map(|f| profile.get(&f.name).map(Value::to_string).unwrap_or_default())
            .collect();
        record.push(label.to_string());
        writer.write_record(&record)?;
    }
    let bytes = writer.into_inner().map_err(|e| DatasetError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use proptest::prelude::*;

    fn schema() -> FeatureSet {
        parse_schema(
            r#"{"features":[
                {"name":"salary","kind":"numeric","actionable":true,"min":1000,"max":10000,"step":100},
                {"name":"job","kind":"categorical","actionable":true,"options":["clerk","nurse","chef"]}
            ]}"#,
        )
        .unwrap()
    }

    #[test]
    fn ingests_valid_rows() {
        let d = ingest_csv("salary,job,label\n1000,clerk,0\n2500,nurse,1\n10000,chef,1\n", &schema(), "label").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.positives(), 2);
        assert_eq!(d.rows[1].0.get("job"), Some(&Value::from("nurse")));
    }

    #[test]
    fn column_order_is_free() {
        let d = ingest_csv("label,job,salary\n1,chef,3000\n", &schema(), "label").unwrap();
        assert_eq!(d.rows[0].0.get("salary"), Some(&Value::Num(3000.0)));
    }

    #[test]
    fn snaps_numeric_cells() {
        let d = ingest_csv("salary,job,label\n2049,clerk,0\n2050,clerk,0\n2051,clerk,1\n", &schema(), "label").unwrap();
        let salaries: Vec<_> = d.rows.iter().map(|(p, _)| p.get("salary").unwrap().as_num().unwrap()).collect();
        assert_eq!(salaries, vec![2000.0, 2000.0, 2100.0]);
    }

    #[test]
    fn errors_name_row_and_feature() {
        let s = schema();
        assert_eq!(
            ingest_csv("salary,job,label\n1000,clerk,0\n1000,pilot,1\n", &s, "label"),
            Err(DatasetError::OutOfDomain {
                row: 1,
                feature: "job".into(),
                value: "pilot".into()
            })
        );
        assert_eq!(
            ingest_csv("salary,label\n1000,0\n", &s, "label"),
            Err(DatasetError::MissingColumn("job".into()))
        );
        assert_eq!(
            ingest_csv("salary,job,label\n1000,clerk,2\n", &s, "label"),
            Err(DatasetError::NonBinaryLabel {
                row: 0,
                value: "2".into()
            })
        );
        assert!(matches!(
            ingest_csv("salary,job,label\n99999,clerk,1\n", &s, "label"),
            Err(DatasetError::OutOfDomain { .. })
        ));
        assert_eq!(
            ingest_csv("salary,job,label,zip\n1000,clerk,1,123\n", &s, "label"),
            Err(DatasetError::UnexpectedColumn("zip".into()))
        );
    }

    proptest! {
        #[test]
        fn emit_then_ingest_round_trips(rows in proptest::collection::vec((1000.0f64..10000.0, 0usize..3, 0u8..2), 0..40)) {
            let s = schema();
            let jobs = ["clerk", "nurse", "chef"];
            let text = {
                let mut t = String::from("salary,job,label\n");
                for (sal, j, y) in &rows {
                    t.push_str(&format!("{sal},{},{y}\n", jobs[*j]));
                }
                t
            };
            let first = ingest_csv(&text, &s, "label").unwrap();
            let emitted = emit_csv(&first, "label").unwrap();
            let second = ingest_csv(&emitted, &s, "label").unwrap();
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(emit_csv(&second, "label").unwrap(), emitted);
        }
    }
}
