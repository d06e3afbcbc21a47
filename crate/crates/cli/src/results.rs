//! The results table: one CSV row per (seed, config).

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use per_core::{Error, Result};

pub const COLUMNS: [&str; 13] = [
    "seed",
    "task",
    "error_type",
    "error_scale",
    "model",
    "groups",
    "test_metric",
    "lambda",
    "regularizer",
    "model_equiv",
    "data_equiv",
    "wall_time",
    "status",
];

/// Per-group quantities are listed in the order of `groups`. Missing values
/// are NaN and written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub seed: u64,
    pub task: String,
    pub error_type: u8,
    pub error_scale: f64,
    pub model: String,
    pub groups: Vec<String>,
    pub test_metric: f64,
    pub lambda: Vec<f64>,
    pub regularizer: Vec<f64>,
    pub model_equiv: Vec<f64>,
    pub data_equiv: Vec<f64>,
    pub wall_time: f64,
    pub status: String,
}

fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:e}")
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(";")
}

fn parse_num(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::InvalidValue(format!("bad number `{s}` in results table")))
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let xs = s.split(';').map(parse_num).collect::<Result<Vec<_>>>()?;
    if xs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: xs.len(),
        });
    }
    Ok(xs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn fields(&self) -> [String; 13] {
        [
            self.seed.to_string(),
            self.task.clone(),
            self.error_type.to_string(),
            fmt_num(self.error_scale),
            self.model.clone(),
            self.groups.join(";"),
            fmt_num(self.test_metric),
            fmt_list(&self.lambda),
            fmt_list(&self.regularizer),
            fmt_list(&self.model_equiv),
            fmt_list(&self.data_equiv),
            fmt_num(self.wall_time),
            self.status.clone(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Result<Self> {
        if r.len() != COLUMNS.len() {
            return Err(Error::DimensionMismatch {
                expected: COLUMNS.len(),
                actual: r.len(),
            });
        }
        let groups: Vec<String> = if r[5].is_empty() {
            Vec::new()
        } else {
            r[5].split(';').map(str::to_string).collect()
        };
        let n = groups.len();
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::InvalidValue(format!("bad integer `{s}` in results table")))
        };
        Ok(ResultRow {
            seed: int(&r[0])?,
            task: r[1].to_string(),
            error_type: u8::try_from(int(&r[2])?)
                .map_err(|_| Error::InvalidValue(format!("bad error type `{}`", &r[2])))?,
            error_scale: parse_num(&r[3])?,
            model: r[4].to_string(),
            test_metric: parse_num(&r[6])?,
            lambda: parse_list(&r[7], n)?,
            regularizer: parse_list(&r[8], n)?,
            model_equiv: parse_list(&r[9], n)?,
            data_equiv: parse_list(&r[10], n)?,
            groups,
            wall_time: parse_num(&r[11])?,
            status: r[12].to_string(),
        })
    }

    /// The row as one CSV line, without the timing column, for comparing
    /// runs that must agree exactly.
    pub fn deterministic_key(&self) -> String {
        let mut f = self.fields().to_vec();
        f.remove(11);
        f.join(",")
    }
}

fn encode(rows: &[&[String]]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(*r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Append one row. The header (for a new file) and the record go out in a
/// single write, so an interrupted run never leaves half a line.
pub fn append_row(path: &Path, row: &ResultRow) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
    let fields = row.fields();
    let bytes = if file.metadata()?.len() == 0 {
        encode(&[&header, &fields])?
    } else {
        encode(&[&fields])?
    };
    file.write_all(&bytes)?;
    file.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(COLUMNS) {
        return Err(Error::InvalidValue(format!(
            "{}: unexpected results header",
            path.display()
        )));
    }
    rdr.records()
        .map(|r| ResultRow::from_record(&r.map_err(csv_err)?))
        .collect()
}
