//! Cohort CSV: header row with `subject_id, age, sex, dx, site?, volume, cv?,
//! mc_dice?` in any order. Empty or `NA` cells in `cv`/`mc_dice` mark an
//! absent weight.

use std::io::Read;
use std::path::Path;

use super::staging::write_atomic;
use crate::error::{Error, Result};
use crate::stats::{CohortRow, CohortTable};

const REQUIRED: [&str; 5] = ["subject_id", "age", "sex", "dx", "volume"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        column: String::new(),
        message: e.to_string(),
    }
}

fn is_absent(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Parses a cohort table; errors carry the 1-based file line and column name.
pub fn parse_cohort_csv(reader: impl Read) -> Result<CohortTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    for name in REQUIRED {
        if col(name).is_none() {
            return Err(Error::Csv {
                line: 1,
                column: name.into(),
                message: "required column missing".into(),
            });
        }
    }
    let [id, age, sex, dx, volume] = REQUIRED.map(|n| col(n).unwrap());
    let (site, cv, mc_dice) = (col("site"), col("cv"), col("mc_dice"));
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let err = |i: usize, message: String| Error::Csv {
            line,
            column: headers[i].to_string(),
            message,
        };
        let real = |i: usize| -> Result<f64> {
            let c = cell(i);
            match c.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(err(i, format!("{c:?} is not a finite number"))),
            }
        };
        let code = |i: usize| -> Result<u8> {
            match cell(i) {
                "0" => Ok(0),
                "1" => Ok(1),
                c => Err(err(i, format!("{c:?} is not 0 or 1"))),
            }
        };
        let optional = |i: Option<usize>| -> Result<Option<f64>> {
            match i {
                Some(i) if !is_absent(cell(i)) => real(i).map(Some),
                _ => Ok(None),
            }
        };
        rows.push(CohortRow {
            subject_id: cell(id).to_string(),
            age: real(age)?,
            sex: code(sex)?,
            dx: code(dx)?,
            site: site.map(|i| cell(i).to_string()),
            volume: real(volume)?,
            cv: optional(cv)?,
            mc_dice: optional(mc_dice)?,
        });
    }
    CohortTable::new(rows, cv.is_some(), mc_dice.is_some())
}

pub fn read_cohort_csv(path: impl AsRef<Path>) -> Result<CohortTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_cohort_csv(file).map_err(|e| match e {
        Error::Csv { line, column, message } => Error::Csv {
            line,
            column,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Serializes with shortest round-trip floats; absent weights are written as `NA`.
pub fn cohort_csv_string(table: &CohortTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id", "age", "sex", "dx"];
    if table.has_site() {
        header.push("site");
    }
    header.push("volume");
    if table.has_cv() {
        header.push("cv");
    }
    if table.has_mc_dice() {
        header.push("mc_dice");
    }
    w.write_record(&header).expect("in-memory write");
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for r in table.rows() {
        let mut rec = vec![r.subject_id.clone(), r.age.to_string(), r.sex.to_string(), r.dx.to_string()];
        if let Some(s) = &r.site {
            rec.push(s.clone());
        }
        rec.push(r.volume.to_string());
        if table.has_cv() {
            rec.push(opt(r.cv));
        }
        if table.has_mc_dice() {
            rec.push(opt(r.mc_dice));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn write_cohort_csv(table: &CohortTable, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, cohort_csv_string(table).as_bytes())
}
