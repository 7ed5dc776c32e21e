//! Report data model and the CSV/JSON serializers. Output is byte-stable:
//! floats carry 17 significant digits in CSV and round-trip exactly in
//! JSON; field order is deterministic.

use serde_json::json;

/// A single report cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl Value {
    fn csv_string(&self) -> String {
        match self {
            Value::F(x) => fmt_f64(*x),
            Value::U(x) => x.to_string(),
            Value::B(x) => x.to_string(),
            Value::S(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    fn json_value(&self) -> serde_json::Value {
        match self {
            Value::F(x) => serde_json::Number::from_f64(*x)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            Value::U(x) => json!(*x),
            Value::B(x) => json!(*x),
            Value::S(s) => json!(s),
        }
    }
}

/// 17 significant digits, '.' decimal separator, no locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One output row: ordered field/value pairs.
#[derive(Clone, Debug, Default)]
pub struct Row {
    fields: Vec<(String, Value)>,
}

impl Row {
    pub fn new() -> Self {
        Row { fields: Vec::new() }
    }

    pub fn push(&mut self, name: &str, value: Value) -> &mut Self {
        self.fields.push((name.to_string(), value));
        self
    }

    pub fn f(&mut self, name: &str, value: f64) -> &mut Self {
        self.push(name, Value::F(value))
    }

    pub fn u(&mut self, name: &str, value: u64) -> &mut Self {
        self.push(name, Value::U(value))
    }

    pub fn b(&mut self, name: &str, value: bool) -> &mut Self {
        self.push(name, Value::B(value))
    }

    pub fn s(&mut self, name: &str, value: &str) -> &mut Self {
        self.push(name, Value::S(value.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn fields(&self) -> &[(String, Value)] {
        &self.fields
    }
}

/// A command report: echoed parameters plus data rows.
#[derive(Clone, Debug)]
pub struct Report {
    pub command: String,
    pub params: Vec<(String, Value)>,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.to_string(), params: Vec::new(), rows: Vec::new() }
    }

    pub fn param(&mut self, name: &str, value: Value) -> &mut Self {
        self.params.push((name.to_string(), value));
        self
    }

    /// Header columns: union of row field names in first-appearance order.
    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for row in &self.rows {
            for (name, _) in row.fields() {
                if !cols.iter().any(|c| c == name) {
                    cols.push(name.clone());
                }
            }
        }
        cols
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# command={}\n", self.command));
        for (name, value) in &self.params {
            out.push_str(&format!("# {}={}\n", name, value.csv_string()));
        }
        let cols = self.columns();
        out.push_str(&cols.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = cols
                .iter()
                .map(|c| row.get(c).map(|v| v.csv_string()).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let params: serde_json::Map<String, serde_json::Value> = self
            .params
            .iter()
            .map(|(n, v)| (n.clone(), v.json_value()))
            .collect();
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let map: serde_json::Map<String, serde_json::Value> = row
                    .fields()
                    .iter()
                    .map(|(n, v)| (n.clone(), v.json_value()))
                    .collect();
                serde_json::Value::Object(map)
            })
            .collect();
        let doc = json!({
            "command": self.command,
            "params": serde_json::Value::Object(params),
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_has_17_significant_digits() {
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_f64(-0.25), "-2.5000000000000000e-1");
        let x = 0.1234567890123456789;
        let formatted = fmt_f64(x);
        let back: f64 = formatted.parse().unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn csv_and_json_agree_field_for_field() {
        let mut report = Report::new("gap");
        report.param("t", Value::U(2));
        let mut row = Row::new();
        row.f("gap", 0.375).u("iterations", 12).s("family", "local1d").b("passed", true);
        report.rows.push(row);

        let csv = report.to_csv();
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[0], "gap,iterations,family,passed");
        let cells: Vec<&str> = lines[1].split(',').collect();
        let jrow = &json["rows"][0];
        assert_eq!(cells[0].parse::<f64>().unwrap(), jrow["gap"].as_f64().unwrap());
        assert_eq!(cells[1].parse::<u64>().unwrap(), jrow["iterations"].as_u64().unwrap());
        assert_eq!(cells[2], jrow["family"].as_str().unwrap());
        assert_eq!(cells[3].parse::<bool>().unwrap(), jrow["passed"].as_bool().unwrap());
    }

    #[test]
    fn missing_fields_render_empty() {
        let mut report = Report::new("sweep");
        let mut r1 = Row::new();
        r1.u("value", 1).f("metric_value", 0.5);
        let mut r2 = Row::new();
        r2.u("value", 2);
        report.rows.push(r1);
        report.rows.push(r2);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines[2], "2,");
    }
}
