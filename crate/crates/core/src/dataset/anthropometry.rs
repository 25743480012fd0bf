use std::path::Path;

use crate::error::{Error, Result};

use super::archive::write_atomic;

pub const MEASUREMENTS: usize = 27;

/// Column names in file order: head and torso x1..x17, pinna d1..d8, pinna angles t1, t2.
pub const MEASUREMENT_NAMES: [&str; MEASUREMENTS] = [
    "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "x11", "x12", "x13", "x14", "x15",
    "x16", "x17", "d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8", "t1", "t2",
];

/// Expected unit per column. x16 and x17 are circumferences.
pub const MEASUREMENT_UNITS: [&str; MEASUREMENTS] = [
    "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm",
    "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "cm", "deg", "deg",
];

pub fn measurement_index(name: &str) -> Option<usize> {
    MEASUREMENT_NAMES.iter().position(|n| *n == name)
}

/// Per-subject anthropometric measurements; missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct AnthropometryTable {
    subjects: Vec<String>,
    rows: Vec<[f64; MEASUREMENTS]>,
}

impl AnthropometryTable {
    pub fn new(subjects: Vec<String>, rows: Vec<[f64; MEASUREMENTS]>) -> Result<Self> {
        if subjects.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} subject ids for {} rows",
                subjects.len(),
                rows.len()
            )));
        }
        for (i, s) in subjects.iter().enumerate() {
            if subjects[..i].contains(s) {
                return Err(Error::SubjectMismatch(format!("duplicate subject '{s}'")));
            }
        }
        for row in &rows {
            if row.iter().any(|v| v.is_infinite()) {
                return Err(Error::Config("anthropometry values must be finite or NaN".into()));
            }
        }
        Ok(Self { subjects, rows })
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn rows(&self) -> &[[f64; MEASUREMENTS]] {
        &self.rows
    }

    pub fn get(&self, subject: &str) -> Option<&[f64; MEASUREMENTS]> {
        self.subjects
            .iter()
            .position(|s| s == subject)
            .map(|i| &self.rows[i])
    }

    pub fn is_missing(&self, subject: usize, column: usize) -> bool {
        self.rows[subject][column].is_nan()
    }

    /// Rows for `subjects` in that order; every subject must be present.
    pub fn rows_for(&self, subjects: &[String]) -> Result<Vec<[f64; MEASUREMENTS]>> {
        subjects
            .iter()
            .map(|s| {
                self.get(s).copied().ok_or_else(|| {
                    Error::SubjectMismatch(format!("subject '{s}' has no anthropometry row"))
                })
            })
            .collect()
    }

    /// Selected feature values for one subject, erroring on missing entries.
    pub fn features(&self, subject: &str, indices: &[usize]) -> Result<Vec<f64>> {
        let row = self.get(subject).ok_or_else(|| {
            Error::SubjectMismatch(format!("subject '{subject}' has no anthropometry row"))
        })?;
        indices
            .iter()
            .map(|&i| {
                let v = row[i];
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::MissingFeature {
                        subject: subject.to_string(),
                        feature: MEASUREMENT_NAMES[i].to_string(),
                    })
                }
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes, path)
    }

    fn parse(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Anthropometry {
            path: path.to_path_buf(),
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let mut records = reader.records();
        let mut next = |what: &str| -> Result<Option<csv::StringRecord>> {
            records
                .next()
                .transpose()
                .map_err(|e| bad(format!("{what}: {e}")))
        };

        let header = next("header")?.ok_or_else(|| bad("missing header row".into()))?;
        if header.len() != MEASUREMENTS + 1 {
            return Err(bad(format!(
                "wrong column count: header has {} columns, expected {}",
                header.len(),
                MEASUREMENTS + 1
            )));
        }
        if &header[0] != "subject" {
            return Err(bad(format!("first header cell must be 'subject', found '{}'", &header[0])));
        }
        for (i, name) in MEASUREMENT_NAMES.iter().enumerate() {
            if &header[i + 1] != *name {
                return Err(bad(format!(
                    "header column {} must be '{name}', found '{}'",
                    i + 2,
                    &header[i + 1]
                )));
            }
        }

        let units = next("units")?.ok_or_else(|| bad("missing units row".into()))?;
        if units.len() != MEASUREMENTS + 1 {
            return Err(bad(format!(
                "wrong column count: units row has {} columns, expected {}",
                units.len(),
                MEASUREMENTS + 1
            )));
        }
        for (i, expected) in MEASUREMENT_UNITS.iter().enumerate() {
            let found = &units[i + 1];
            if !found.eq_ignore_ascii_case(expected) {
                return Err(Error::Unit {
                    column: MEASUREMENT_NAMES[i].to_string(),
                    expected: expected.to_string(),
                    found: found.to_string(),
                });
            }
        }

        let mut subjects = Vec::new();
        let mut rows = Vec::new();
        let mut line = 2;
        while let Some(rec) = next("row")? {
            line += 1;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != MEASUREMENTS + 1 {
                return Err(bad(format!(
                    "wrong column count on line {line}: {} columns, expected {}",
                    rec.len(),
                    MEASUREMENTS + 1
                )));
            }
            let mut row = [0.0; MEASUREMENTS];
            for (i, cell) in rec.iter().skip(1).enumerate() {
                row[i] = parse_cell(cell).ok_or_else(|| {
                    bad(format!(
                        "line {line}, column {}: cannot parse '{cell}'",
                        MEASUREMENT_NAMES[i]
                    ))
                })?;
            }
            subjects.push(rec[0].to_string());
            rows.push(row);
        }
        if subjects.is_empty() {
            return Err(bad("no subject rows".into()));
        }
        Self::new(subjects, rows).map_err(|e| bad(e.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject");
        for n in MEASUREMENT_NAMES {
            out.push(',');
            out.push_str(n);
        }
        out.push_str("\nunit");
        for u in MEASUREMENT_UNITS {
            out.push(',');
            out.push_str(u);
        }
        out.push('\n');
        for (s, row) in self.subjects.iter().zip(&self.rows) {
            out.push_str(s);
            for v in row {
                out.push(',');
                if v.is_nan() {
                    out.push_str("nan");
                } else {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    if cell.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}
