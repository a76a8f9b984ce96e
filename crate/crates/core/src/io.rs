//! CSV ingestion and export of combined samples.
//!
//! Columns are matched by name. `V` is declared by listing column names that
//! also appear among the `X` names; `V` is stored in `X` column order.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CombinedSample, SourceRecord, SurveyInfo, TargetRecord, Treatment};

/// Column names for the source and target files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub treatment: String,
    pub outcome: String,
    pub x: Vec<String>,
    pub v: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
}

impl CsvSchema {
    /// Schema with columns `a`, `y`, `x1..xd`; `V` named after its `X` columns.
    pub fn generic(d: usize, v_index_map: &[usize], survey: bool) -> Self {
        let x: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
        let v = v_index_map.iter().map(|&j| x[j].clone()).collect();
        let (stratum, cluster, weight) = if survey {
            (
                Some("stratum".into()),
                Some("cluster".into()),
                Some("weight".into()),
            )
        } else {
            (None, None, None)
        };
        Self {
            treatment: "a".into(),
            outcome: "y".into(),
            x,
            v,
            stratum,
            cluster,
            weight,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("invalid schema: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read schema {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn has_survey(&self) -> bool {
        self.stratum.is_some() || self.cluster.is_some() || self.weight.is_some()
    }

    /// Positions of the `V` columns within `X`, sorted ascending.
    pub fn v_index_map(&self) -> Result<Vec<usize>> {
        if self.x.is_empty() {
            return Err(Error::Config("schema lists no X columns".into()));
        }
        if self.v.is_empty() {
            return Err(Error::Config("schema lists no V columns".into()));
        }
        check_distinct("X", &self.x)?;
        check_distinct("V", &self.v)?;
        let mut map = Vec::with_capacity(self.v.len());
        for name in &self.v {
            match self.x.iter().position(|c| c == name) {
                Some(j) => map.push(j),
                None => {
                    return Err(Error::Schema(format!(
                        "V column '{name}' is not among the X columns"
                    )))
                }
            }
        }
        map.sort_unstable();
        Ok(map)
    }

    fn validate_survey(&self) -> Result<()> {
        let set = [&self.stratum, &self.cluster, &self.weight]
            .iter()
            .filter(|c| c.is_some())
            .count();
        if set != 0 && set != 3 {
            return Err(Error::Config(
                "survey columns must name all of stratum, cluster and weight, or none".into(),
            ));
        }
        Ok(())
    }
}

fn check_distinct(label: &str, names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::Config(format!("{label} column '{a}' listed twice")));
        }
    }
    Ok(())
}

fn column_positions(
    headers: &csv::StringRecord,
    wanted: &[&str],
    file: &str,
) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let missing: Vec<&str> = wanted
        .iter()
        .copied()
        .filter(|w| !index.contains_key(w))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "{file} file is missing column(s): {}",
            missing.join(", ")
        )));
    }
    Ok(wanted.iter().map(|w| index[w]).collect())
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn parse_real(field: &str) -> std::result::Result<f64, String> {
    if is_missing(field) {
        return Err("missing".into());
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("'{field}' is not a finite number")),
    }
}

fn parse_int(field: &str) -> std::result::Result<i64, String> {
    if is_missing(field) {
        return Err("missing".into());
    }
    field
        .parse::<i64>()
        .map_err(|_| format!("'{field}' is not an integer"))
}

struct Problems {
    file: &'static str,
    items: Vec<String>,
}

impl Problems {
    fn push(&mut self, row: usize, column: &str, what: String) {
        self.items
            .push(format!("row {row}, column '{column}': {what}"));
    }

    fn into_result(self) -> Result<()> {
        if self.items.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "{} file has {} invalid field(s): {}",
                self.file,
                self.items.len(),
                self.items.join("; ")
            )))
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads a source file (`A`, `Y`, `X` columns) and a target file (`V`
/// columns, plus survey columns when the schema names them).
///
/// Rows are numbered from 1, excluding the header. Every invalid field is
/// reported in a single data error; no row is dropped silently.
pub fn load_combined_csv(
    source_path: &Path,
    target_path: &Path,
    schema: &CsvSchema,
) -> Result<CombinedSample> {
    schema.validate_survey()?;
    let v_index_map = schema.v_index_map()?;
    let d = schema.x.len();

    let mut src = reader(source_path)?;
    let mut wanted: Vec<&str> = vec![schema.treatment.as_str(), schema.outcome.as_str()];
    wanted.extend(schema.x.iter().map(String::as_str));
    let pos = column_positions(src.headers()?, &wanted, "source")?;
    let mut problems = Problems {
        file: "source",
        items: Vec::new(),
    };
    let mut source = Vec::new();
    for (r, rec) in src.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let field = |k: usize| rec.get(pos[k]).unwrap_or("");
        let a = match parse_real(field(0)) {
            Ok(0.0) => Some(Treatment::Control),
            Ok(1.0) => Some(Treatment::Treated),
            Ok(v) => {
                problems.push(
                    row,
                    &schema.treatment,
                    format!("treatment value {v} is not 0 or 1"),
                );
                None
            }
            Err(e) => {
                problems.push(row, &schema.treatment, e);
                None
            }
        };
        let y = parse_real(field(1))
            .map_err(|e| problems.push(row, &schema.outcome, e))
            .ok();
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            match parse_real(field(2 + j)) {
                Ok(v) => x.push(v),
                Err(e) => problems.push(row, &schema.x[j], e),
            }
        }
        if let (Some(a), Some(y), true) = (a, y, x.len() == d) {
            source.push(SourceRecord { x, a, y });
        }
    }
    problems.into_result()?;

    let mut tgt = reader(target_path)?;
    let v_names: Vec<&str> = v_index_map.iter().map(|&j| schema.x[j].as_str()).collect();
    let mut wanted = v_names.clone();
    let survey_cols: Option<[&str; 3]> = match (&schema.stratum, &schema.cluster, &schema.weight) {
        (Some(s), Some(c), Some(w)) => Some([s.as_str(), c.as_str(), w.as_str()]),
        _ => None,
    };
    if let Some(cols) = survey_cols {
        wanted.extend(cols);
    }
    let pos = column_positions(tgt.headers()?, &wanted, "target")?;
    let dv = v_names.len();
    let mut problems = Problems {
        file: "target",
        items: Vec::new(),
    };
    let mut target = Vec::new();
    for (r, rec) in tgt.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let field = |k: usize| rec.get(pos[k]).unwrap_or("");
        let mut v = Vec::with_capacity(dv);
        for (j, name) in v_names.iter().enumerate() {
            match parse_real(field(j)) {
                Ok(val) => v.push(val),
                Err(e) => problems.push(row, name, e),
            }
        }
        let mut ok = v.len() == dv;
        let survey = if let Some(cols) = survey_cols {
            let stratum = parse_int(field(dv))
                .map_err(|e| problems.push(row, cols[0], e))
                .ok();
            let cluster = parse_int(field(dv + 1))
                .map_err(|e| problems.push(row, cols[1], e))
                .ok();
            let weight = match parse_real(field(dv + 2)) {
                Ok(w) if w > 0.0 => Some(w),
                Ok(w) => {
                    problems.push(row, cols[2], format!("weight {w} is not positive"));
                    None
                }
                Err(e) => {
                    problems.push(row, cols[2], e);
                    None
                }
            };
            match (stratum, cluster, weight) {
                (Some(stratum), Some(cluster), Some(weight)) => Some(SurveyInfo {
                    stratum,
                    cluster,
                    weight,
                }),
                _ => {
                    ok = false;
                    None
                }
            }
        } else {
            None
        };
        if ok {
            target.push(TargetRecord { v, survey });
        }
    }
    problems.into_result()?;

    CombinedSample::with_dimension(source, target, v_index_map, d)
}

/// Writes a sample in the layout read by [`load_combined_csv`]. Reals are
/// written in shortest round-trip form, so a reload reproduces the sample
/// exactly.
pub fn write_combined_csv(
    sample: &CombinedSample,
    schema: &CsvSchema,
    source_path: &Path,
    target_path: &Path,
) -> Result<()> {
    schema.validate_survey()?;
    if schema.x.len() != sample.d() {
        return Err(Error::Config(format!(
            "schema has {} X columns but the sample has d = {}",
            schema.x.len(),
            sample.d()
        )));
    }
    if schema.v_index_map()? != sample.v_index_map() {
        return Err(Error::Config(
            "schema V columns do not match the sample".into(),
        ));
    }
    let mut w = csv::Writer::from_path(source_path)?;
    let mut header = vec![schema.treatment.clone(), schema.outcome.clone()];
    header.extend(schema.x.iter().cloned());
    w.write_record(&header)?;
    for r in sample.source() {
        let mut row = vec![r.a.index().to_string(), r.y.to_string()];
        row.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let survey = sample.has_survey_design() && schema.has_survey();
    let mut w = csv::Writer::from_path(target_path)?;
    let mut header: Vec<String> = sample
        .v_index_map()
        .iter()
        .map(|&j| schema.x[j].clone())
        .collect();
    if survey {
        header.push(schema.stratum.clone().unwrap_or_default());
        header.push(schema.cluster.clone().unwrap_or_default());
        header.push(schema.weight.clone().unwrap_or_default());
    }
    w.write_record(&header)?;
    for r in sample.target() {
        let mut row: Vec<String> = r.v.iter().map(|v| v.to_string()).collect();
        if survey {
            let s = r.survey.expect("survey design present");
            row.push(s.stratum.to_string());
            row.push(s.cluster.to_string());
            row.push(s.weight.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn schema_xy() -> CsvSchema {
        CsvSchema {
            treatment: "a".into(),
            outcome: "y".into(),
            x: vec!["age".into(), "bmi".into()],
            v: vec!["age".into(), "bmi".into()],
            stratum: None,
            cluster: None,
            weight: None,
        }
    }

    #[test]
    fn loads_identity_v() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.csv",
            "a,y,age,bmi\n1,2.5,30,22\n0,1.0,40,25\n",
        );
        let t = write(dir.path(), "t.csv", "bmi,age\n21,35\n");
        let sample = load_combined_csv(&s, &t, &schema_xy()).unwrap();
        assert_eq!((sample.n1(), sample.n2()), (2, 1));
        assert_eq!(sample.v_index_map(), &[0, 1]);
        assert_eq!(sample.target()[0].v, vec![35.0, 21.0]);
        assert!(sample.v_equals_x());
    }

    #[test]
    fn survey_columns_populate() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "a,y,age,bmi\n1,2.5,30,22\n");
        let t = write(dir.path(), "t.csv", "age,bmi,h,c,w\n35,21,1,7,2.5\n");
        let mut schema = schema_xy();
        schema.stratum = Some("h".into());
        schema.cluster = Some("c".into());
        schema.weight = Some("w".into());
        let sample = load_combined_csv(&s, &t, &schema).unwrap();
        assert_eq!(
            sample.target()[0].survey,
            Some(SurveyInfo {
                stratum: 1,
                cluster: 7,
                weight: 2.5
            })
        );
    }

    #[test]
    fn non_binary_treatment_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.csv",
            "a,y,age,bmi\n1,2.5,30,22\n2,1.0,40,25\n",
        );
        let t = write(dir.path(), "t.csv", "age,bmi\n35,21\n");
        let err = load_combined_csv(&s, &t, &schema_xy()).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_fields_reported_together() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(
            dir.path(),
            "s.csv",
            "a,y,age,bmi\n1,,30,22\n0,1.0,NA,25\n1,1,1,1\n",
        );
        let t = write(dir.path(), "t.csv", "age,bmi\n35,21\n");
        let msg = load_combined_csv(&s, &t, &schema_xy())
            .unwrap_err()
            .to_string();
        assert!(
            msg.contains("row 1") && msg.contains("row 2") && !msg.contains("row 3"),
            "{msg}"
        );
    }

    #[test]
    fn missing_column_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "a,y,age\n1,2,3\n");
        let t = write(dir.path(), "t.csv", "age,bmi\n35,21\n");
        assert!(matches!(
            load_combined_csv(&s, &t, &schema_xy()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn v_outside_x_is_schema_error() {
        let mut schema = schema_xy();
        schema.v = vec!["height".into()];
        assert!(matches!(schema.v_index_map(), Err(Error::Schema(_))));
    }

    #[test]
    fn v_sorted_by_x_position() {
        let mut schema = schema_xy();
        schema.x.push("z".into());
        schema.v = vec!["z".into(), "age".into()];
        assert_eq!(schema.v_index_map().unwrap(), vec![0, 2]);
    }

    #[test]
    fn schema_toml_round_trip() {
        let schema = CsvSchema::generic(3, &[0, 2], true);
        let back = CsvSchema::from_toml_str(&schema.to_toml_string()).unwrap();
        assert_eq!(schema, back);
    }
}
