use std::fs;
use std::path::{Path, PathBuf};

use exploratory_lq::config::OutputFormat;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::commands::Failure;

/// Writes artifacts into one directory.
pub struct Artifacts {
    dir: PathBuf,
    format: OutputFormat,
}

impl Artifacts {
    pub fn new(dir: &Path, format: OutputFormat) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), format })
    }

    fn write(&self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    /// A table given as CSV text; written as `<stem>.csv`, or as `<stem>.json`
    /// (an array of row objects) when the JSON format is selected.
    pub fn table(&self, stem: &str, csv: &str) -> Result<(), Failure> {
        match self.format {
            OutputFormat::Csv => self.write(&format!("{stem}.csv"), csv),
            OutputFormat::Json => self.json(&format!("{stem}.json"), &csv_to_json(csv)),
        }
    }

    pub fn text(&self, name: &str, contents: &str) -> Result<(), Failure> {
        self.write(name, contents)
    }
}

/// Rows of a headed CSV as JSON objects; numeric fields become numbers.
pub fn csv_to_json(csv: &str) -> Value {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().map(|h| h.split(',').collect()).unwrap_or_default();
    let rows = lines
        .map(|line| {
            let mut row = Map::new();
            for (key, field) in header.iter().zip(line.split(',')) {
                let value = match field.parse::<f64>() {
                    Ok(x) if x.is_finite() => serde_json::Number::from_f64(x).map(Value::Number).unwrap(),
                    _ => Value::String(field.to_string()),
                };
                row.insert(key.to_string(), value);
            }
            Value::Object(row)
        })
        .collect();
    Value::Array(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_become_objects() {
        let v = csv_to_json("t,x,tag\n0,1.5,a\n1,-2,b\n");
        assert_eq!(v[0]["x"], 1.5);
        assert_eq!(v[1]["tag"], "b");
        assert_eq!(v.as_array().unwrap().len(), 2);
    }
}
