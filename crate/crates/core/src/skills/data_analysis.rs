//! Record filtering, sorting and descriptive statistics.
//!
//! Records come from the context (`records`, a list of maps) or from a CSV
//! file (`csv_path`). Operations run in declared order; the analysis summary
//! lands under `analysis`, and transformed records replace `records` when
//! any filtering or sorting operation is present.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};

use super::params::ParamReader;
use crate::backend::Backend;
use crate::registry::{FnFactory, SkillFactory};
use crate::skill::{Params, SkillBehavior, SkillDef, SkillError};
use crate::value::{Context, Value};

pub const NAME: &str = "data_analysis";
const DESCRIPTION: &str = "Filters, sorts and summarizes tabular records";

pub type Record = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub enum Operation {
    Describe,
    FilterByDate {
        field: Option<String>,
        since: Option<String>,
    },
    SortBy {
        field: String,
        descending: bool,
    },
    SortByRelevance,
    TopK(usize),
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Describe => "describe",
            Operation::FilterByDate { .. } => "filter_by_date",
            Operation::SortBy { .. } => "sort_by",
            Operation::SortByRelevance => "sort_by_relevance",
            Operation::TopK(_) => "top_k",
        }
    }

    fn transforms_records(&self) -> bool {
        !matches!(self, Operation::Describe)
    }

    /// Accepts `"describe"`, `{"sort_by": {"field": "x", "descending": true}}`,
    /// `{"top_k": 5}` and `{"top_k": {"k": 5}}`.
    pub fn parse(value: &Value) -> Result<Self, String> {
        let (name, args) = match value {
            Value::Text(name) => (name.as_str(), None),
            Value::Map(m) if m.len() == 1 => {
                let (k, v) = m.iter().next().expect("one entry");
                (k.as_str(), Some(v))
            }
            other => return Err(format!("operation must be a name or a one-key map, got {other}")),
        };
        let arg_map = |args: Option<&Value>| -> Result<BTreeMap<String, Value>, String> {
            match args {
                None | Some(Value::Null) => Ok(BTreeMap::new()),
                Some(Value::Map(m)) => Ok(m.clone()),
                Some(other) => Err(format!("arguments of `{name}` must be a map, got {other}")),
            }
        };
        let text_arg = |m: &BTreeMap<String, Value>, key: &str| -> Result<Option<String>, String> {
            match m.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Text(s)) => Ok(Some(s.clone())),
                Some(other) => Err(format!("`{name}.{key}` must be text, got {other}")),
            }
        };
        let reject_extra = |m: &BTreeMap<String, Value>, allowed: &[&str]| -> Result<(), String> {
            match m.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(format!("unknown argument `{k}` for `{name}`")),
                None => Ok(()),
            }
        };
        match name {
            "describe" | "sort_by_relevance" => {
                let m = arg_map(args)?;
                reject_extra(&m, &[])?;
                Ok(if name == "describe" {
                    Operation::Describe
                } else {
                    Operation::SortByRelevance
                })
            }
            "filter_by_date" => {
                let m = arg_map(args)?;
                reject_extra(&m, &["field", "since"])?;
                Ok(Operation::FilterByDate {
                    field: text_arg(&m, "field")?,
                    since: text_arg(&m, "since")?,
                })
            }
            "sort_by" => {
                let m = match args {
                    Some(Value::Text(field)) => {
                        BTreeMap::from([("field".to_string(), Value::Text(field.clone()))])
                    }
                    other => arg_map(other)?,
                };
                reject_extra(&m, &["field", "descending"])?;
                let field = text_arg(&m, "field")?.ok_or("`sort_by` requires a `field`")?;
                let descending = match m.get("descending") {
                    None | Some(Value::Null) => false,
                    Some(Value::Bool(b)) => *b,
                    Some(other) => return Err(format!("`sort_by.descending` must be boolean, got {other}")),
                };
                Ok(Operation::SortBy { field, descending })
            }
            "top_k" => {
                let k = match args {
                    Some(Value::Int(k)) => *k,
                    Some(Value::Map(m)) => {
                        reject_extra(m, &["k"])?;
                        m.get("k").and_then(Value::as_i64).ok_or("`top_k` requires an integer `k`")?
                    }
                    _ => return Err("`top_k` requires an integer `k`".into()),
                };
                usize::try_from(k)
                    .map(Operation::TopK)
                    .map_err(|_| format!("`top_k.k` must be non-negative, got {k}"))
            }
            other => Err(format!("unknown operation `{other}`")),
        }
    }
}

/// Sample statistics of one numeric field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldStats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); `None` below two values.
    pub std: Option<f64>,
    pub min: Value,
    pub max: Value,
}

impl FieldStats {
    fn to_value(&self) -> Value {
        Value::Map(BTreeMap::from([
            ("count".to_string(), Value::Int(self.count as i64)),
            ("mean".to_string(), Value::Float(self.mean)),
            (
                "std".to_string(),
                self.std.map(Value::Float).unwrap_or(Value::Null),
            ),
            ("min".to_string(), self.min.clone()),
            ("max".to_string(), self.max.clone()),
        ]))
    }
}

/// Fields whose non-null values are all numeric, with their statistics.
pub fn describe(records: &[Record]) -> BTreeMap<String, FieldStats> {
    let fields: BTreeSet<&String> = records.iter().flat_map(|r| r.keys()).collect();
    let mut out = BTreeMap::new();
    'fields: for field in fields {
        let mut values: Vec<&Value> = Vec::new();
        for r in records {
            match r.get(field.as_str()) {
                None | Some(Value::Null) => {}
                Some(v @ (Value::Int(_) | Value::Float(_))) => values.push(v),
                Some(_) => continue 'fields,
            }
        }
        if values.is_empty() {
            continue;
        }
        let xs: Vec<f64> = values.iter().map(|v| v.as_f64().expect("numeric")).collect();
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        let by_num = |a: &&&Value, b: &&&Value| {
            a.as_f64()
                .partial_cmp(&b.as_f64())
                .unwrap_or(Ordering::Equal)
        };
        let min = (*values.iter().min_by(by_num).expect("nonempty")).clone();
        let max = (*values.iter().max_by(by_num).expect("nonempty")).clone();
        out.insert(
            field.clone(),
            FieldStats {
                count: n,
                mean,
                std,
                min,
                max,
            },
        );
    }
    out
}

/// Parses RFC 3339 timestamps, RFC 2822 dates and plain `YYYY-MM-DD`.
pub fn parse_date(text: &str) -> Option<DateTime<Utc>> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.with_timezone(&Utc));
    }
    if let Ok(dt) = DateTime::parse_from_rfc2822(text) {
        return Some(dt.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
}

/// Total order used by `sort_by`: numbers, then text, then everything else
/// (which compares equal).
fn compare_values(a: &Value, b: &Value) -> Ordering {
    fn rank(v: &Value) -> u8 {
        match v {
            Value::Int(_) | Value::Float(_) => 0,
            Value::Text(_) => 1,
            _ => 2,
        }
    }
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => x.cmp(y),
        _ => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            _ => rank(a).cmp(&rank(b)),
        },
    }
}

fn require_field<'r>(record: &'r Record, field: &str, index: usize) -> Result<&'r Value, SkillError> {
    record
        .get(field)
        .ok_or_else(|| SkillError::field(field, format!("absent from record {index}")))
}

fn apply(op: &Operation, records: &mut Vec<Record>) -> Result<(), SkillError> {
    match op {
        Operation::Describe => {}
        Operation::FilterByDate { field, since } => {
            let field = field.as_deref().ok_or_else(|| {
                SkillError::Failed("filter_by_date requires a `field` argument".into())
            })?;
            let since_text = since.as_deref().ok_or_else(|| {
                SkillError::Failed("filter_by_date requires a `since` argument".into())
            })?;
            let since = parse_date(since_text)
                .ok_or_else(|| SkillError::Failed(format!("cannot parse date `{since_text}`")))?;
            let mut kept = Vec::with_capacity(records.len());
            for (i, r) in records.drain(..).enumerate() {
                let raw = require_field(&r, field, i)?;
                let when = raw
                    .as_str()
                    .and_then(parse_date)
                    .ok_or_else(|| SkillError::field(field, format!("record {i} has no parseable date: {raw}")))?;
                if when >= since {
                    kept.push(r);
                }
            }
            *records = kept;
        }
        Operation::SortBy { field, descending } => sort(records, field, *descending)?,
        Operation::SortByRelevance => sort(records, "relevance", true)?,
        Operation::TopK(k) => records.truncate(*k),
    }
    Ok(())
}

fn sort(records: &mut [Record], field: &str, descending: bool) -> Result<(), SkillError> {
    for (i, r) in records.iter().enumerate() {
        require_field(r, field, i)?;
    }
    records.sort_by(|a, b| {
        let ord = compare_values(&a[field], &b[field]);
        if descending {
            ord.reverse()
        } else {
            ord
        }
    });
    Ok(())
}

/// Runs `operations` over `records`, returning the analysis summary.
pub fn analyze(records: &mut Vec<Record>, operations: &[Operation]) -> Result<Value, SkillError> {
    let mut analysis = BTreeMap::new();
    for op in operations {
        apply(op, records)?;
        if matches!(op, Operation::Describe) {
            analysis.retain(|k: &String, _| k == "count");
            for (field, stats) in describe(records) {
                analysis.insert(field, stats.to_value());
            }
        }
    }
    analysis
        .entry("count".to_string())
        .or_insert(Value::Int(records.len() as i64));
    Ok(Value::Map(analysis))
}

fn records_from_value(value: &Value) -> Result<Vec<Record>, SkillError> {
    let items = value
        .as_list()
        .ok_or_else(|| SkillError::invalid("records", "must be a list of maps"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            item.as_map()
                .cloned()
                .ok_or_else(|| SkillError::invalid("records", format!("item {i} is not a map")))
        })
        .collect()
}

/// Reads a headed CSV file. Cells parseable as decimal floats become
/// floats, empty cells become null, everything else stays text.
pub fn read_csv(path: &Path) -> Result<Vec<Record>, SkillError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| SkillError::invalid("csv_path", format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| SkillError::invalid("csv_path", e.to_string()))?
        .clone();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| SkillError::invalid("csv_path", e.to_string()))?;
        let record = headers
            .iter()
            .zip(row.iter())
            .map(|(h, cell)| {
                let value = if cell.is_empty() {
                    Value::Null
                } else {
                    match cell.trim().parse::<f64>() {
                        Ok(f) if f.is_finite() => Value::Float(f),
                        _ => Value::Text(cell.to_string()),
                    }
                };
                (h.to_string(), value)
            })
            .collect();
        records.push(record);
    }
    Ok(records)
}

struct DataAnalysis {
    operations: Vec<Operation>,
    default_records: Option<Value>,
    default_csv: Option<String>,
    emits_records: bool,
}

impl DataAnalysis {
    fn load(&self, context: &Context) -> Result<Vec<Record>, SkillError> {
        if let Some(v) = context.get("records") {
            return records_from_value(v);
        }
        if let Some(v) = context.get("csv_path") {
            let path = v
                .as_str()
                .ok_or_else(|| SkillError::invalid("csv_path", "must be text"))?;
            return read_csv(Path::new(path));
        }
        if let Some(v) = &self.default_records {
            return records_from_value(v);
        }
        if let Some(path) = &self.default_csv {
            return read_csv(Path::new(path));
        }
        Err(SkillError::invalid("records", "neither `records` nor `csv_path` given"))
    }
}

impl SkillBehavior for DataAnalysis {
    fn run(&self, context: &Context, _llm: Option<&dyn Backend>) -> Result<Context, SkillError> {
        let mut records = self.load(context)?;
        let analysis = analyze(&mut records, &self.operations)?;
        let mut out = context.clone().with("analysis", analysis);
        if self.emits_records {
            out.insert(
                "records",
                Value::List(records.into_iter().map(Value::Map).collect()),
            );
        }
        Ok(out)
    }
}

pub fn create(params: &Params) -> Result<SkillDef, String> {
    let mut reader = ParamReader::new(params);
    let operations = match reader.raw("operations") {
        None => vec![Operation::Describe],
        Some(Value::List(items)) => items.iter().map(Operation::parse).collect::<Result<_, _>>()?,
        Some(single @ (Value::Text(_) | Value::Map(_))) => vec![Operation::parse(single)?],
        Some(other) => return Err(format!("`operations` must be a list, got {}", other.type_name())),
    };
    let default_records = reader.raw("records").cloned();
    if let Some(v) = &default_records {
        records_from_value(v).map_err(|e| e.to_string())?;
    }
    let default_csv = reader.string("csv_path")?;
    reader.finish()?;
    let emits_records = operations.iter().any(Operation::transforms_records);
    let mut outputs = vec!["analysis"];
    if emits_records {
        outputs.push("records");
    }
    SkillDef::builder(NAME)
        .description(DESCRIPTION)
        .outputs(outputs)
        .params(params.clone())
        .behavior(DataAnalysis {
            operations,
            default_records,
            default_csv,
            emits_records,
        })
        .map_err(|e| e.to_string())
}

pub fn factory() -> impl SkillFactory {
    FnFactory::new(DESCRIPTION, false, create)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skill::execute_skill;
    use std::io::Write;

    fn rec(pairs: &[(&str, Value)]) -> Record {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn ops(values: &[Value]) -> Vec<Operation> {
        values.iter().map(|v| Operation::parse(v).unwrap()).collect()
    }

    #[test]
    fn describe_two_values() {
        // Sample deviation of {1, 3}: sqrt(((1-2)^2 + (3-2)^2) / 1).
        let mut records = vec![rec(&[("x", 1.into())]), rec(&[("x", 3.into())])];
        let analysis = analyze(&mut records, &[Operation::Describe]).unwrap();
        let x = &analysis.as_map().unwrap()["x"];
        let expected = Value::Map(BTreeMap::from([
            ("count".to_string(), Value::Int(2)),
            ("mean".to_string(), Value::Float(2.0)),
            ("std".to_string(), Value::Float(2f64.sqrt())),
            ("min".to_string(), Value::Int(1)),
            ("max".to_string(), Value::Int(3)),
        ]));
        assert_eq!(x, &expected);
    }

    #[test]
    fn describe_empty() {
        let analysis = analyze(&mut Vec::new(), &[Operation::Describe]).unwrap();
        assert_eq!(
            analysis,
            Value::Map(BTreeMap::from([("count".to_string(), Value::Int(0))]))
        );
    }

    #[test]
    fn describe_skips_non_numeric_and_single_value_std() {
        let records = vec![
            rec(&[("x", 5.into()), ("name", "a".into()), ("mixed", 1.into())]),
            rec(&[("name", "b".into()), ("mixed", "z".into())]),
        ];
        let stats = describe(&records);
        assert_eq!(stats.keys().collect::<Vec<_>>(), ["x"]);
        assert_eq!(stats["x"].count, 1);
        assert_eq!(stats["x"].std, None);
    }

    #[test]
    fn sort_by_relevance_descending() {
        let mut records = vec![
            rec(&[("relevance", 0.2.into())]),
            rec(&[("relevance", 0.9.into())]),
        ];
        analyze(&mut records, &ops(&["sort_by_relevance".into()])).unwrap();
        let order: Vec<f64> = records.iter().map(|r| r["relevance"].as_f64().unwrap()).collect();
        assert_eq!(order, [0.9, 0.2]);
    }

    #[test]
    fn sort_filter_top_k() {
        let mut records = vec![
            rec(&[("d", "2024-01-05".into()), ("n", 3.into())]),
            rec(&[("d", "2023-12-31".into()), ("n", 1.into())]),
            rec(&[("d", "2024-02-01T10:00:00Z".into()), ("n", 2.into())]),
            rec(&[("d", "Mon, 01 Jan 2024 09:00:00 +0000".into()), ("n", 9.into())]),
        ];
        let pipeline = ops(&[
            Value::Map(BTreeMap::from([(
                "filter_by_date".to_string(),
                Value::Map(BTreeMap::from([
                    ("field".to_string(), "d".into()),
                    ("since".to_string(), "2024-01-01".into()),
                ])),
            )])),
            Value::Map(BTreeMap::from([("sort_by".to_string(), "n".into())])),
            Value::Map(BTreeMap::from([("top_k".to_string(), 2.into())])),
        ]);
        let analysis = analyze(&mut records, &pipeline).unwrap();
        let ns: Vec<i64> = records.iter().map(|r| r["n"].as_i64().unwrap()).collect();
        assert_eq!(ns, [2, 3]);
        assert_eq!(analysis.as_map().unwrap()["count"], Value::Int(2));
    }

    #[test]
    fn field_errors() {
        let mut records = vec![rec(&[("a", 1.into())])];
        let err = analyze(
            &mut records,
            &[Operation::SortBy {
                field: "b".into(),
                descending: false,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, SkillError::Field { field, .. } if field == "b"));
        let err = analyze(&mut records, &[Operation::SortByRelevance]).unwrap_err();
        assert!(matches!(err, SkillError::Field { field, .. } if field == "relevance"));
    }

    #[test]
    fn bare_filter_by_date_builds_but_fails_at_run() {
        let params = Params::from([(
            "operations".to_string(),
            Value::List(vec!["filter_by_date".into(), "sort_by_relevance".into()]),
        )]);
        let skill = create(&params).unwrap();
        let ctx = Context::new().with("records", Value::List(vec![]));
        // No records to check and no field argument: still an error.
        assert!(matches!(
            execute_skill(&skill, &ctx, None),
            Err(SkillError::Failed(_))
        ));
    }

    #[test]
    fn unknown_operation() {
        assert!(Operation::parse(&"pivot".into()).unwrap_err().contains("pivot"));
        let params = Params::from([(
            "operations".to_string(),
            Value::List(vec!["pivot".into()]),
        )]);
        assert!(create(&params).is_err());
    }

    #[test]
    fn needs_records_or_csv() {
        let skill = create(&Params::new()).unwrap();
        assert!(matches!(
            execute_skill(&skill, &Context::new(), None),
            Err(SkillError::Input { key, .. }) if key == "records"
        ));
    }

    #[test]
    fn csv_input() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "name,score,note\na,1.5,\nb,2.5,\"x, y\"").unwrap();
        let skill = create(&Params::new()).unwrap();
        let ctx = Context::new().with("csv_path", file.path().to_str().unwrap());
        let out = execute_skill(&skill, &ctx, None).unwrap();
        let analysis = out.get("analysis").unwrap().as_map().unwrap();
        assert_eq!(analysis["count"], Value::Int(2));
        let score = analysis["score"].as_map().unwrap();
        assert_eq!(score["mean"], Value::Float(2.0));
        assert!(!analysis.contains_key("name"));
        assert!(!analysis.contains_key("note"));
        assert!(!out.contains_key("records"));
    }

    #[test]
    fn preserves_context_and_emits_records_when_transforming() {
        let params = Params::from([(
            "operations".to_string(),
            Value::List(vec!["sort_by_relevance".into()]),
        )]);
        let skill = create(&params).unwrap();
        let records = Value::List(vec![
            Value::Map(rec(&[("relevance", 1.into())])),
            Value::Map(rec(&[("relevance", 2.into())])),
        ]);
        let ctx = Context::new().with("records", records).with("other", "kept");
        let out = execute_skill(&skill, &ctx, None).unwrap();
        assert_eq!(out.get("other"), ctx.get("other"));
        let first = &out.get("records").unwrap().as_list().unwrap()[0];
        assert_eq!(first.as_map().unwrap()["relevance"], Value::Int(2));
    }
}
