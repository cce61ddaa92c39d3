//! CSV and JSON artifacts. Numbers are written like C's `%.12e`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{QmeError, Result};

/// `%.12e` formatting: 13 significant digits, signed exponent of at least two digits.
pub fn format_sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Column-oriented numeric table with a header row.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(header.len(), columns.len());
        Table { header, columns }
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in 0..self.n_rows() {
            w.write_record(self.columns.iter().map(|c| format_sci(c[r]))).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| QmeError::Io(e.into_error()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(bytes);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); header.len()];
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            for (c, field) in columns.iter_mut().zip(rec.iter()) {
                let v = field
                    .parse::<f64>()
                    .map_err(|_| QmeError::Numerical(format!("unreadable CSV number `{field}`")))?;
                c.push(v);
            }
        }
        Ok(Table { header, columns })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Table::from_csv(&fs::read(path)?)
    }
}

fn csv_err(e: csv::Error) -> QmeError {
    QmeError::Io(std::io::Error::other(e))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| QmeError::Io(e.error))?;
    Ok(())
}

/// gnuplot script that draws every series file of a run.
pub fn gnuplot_script(files: &[(String, Vec<String>)], floquet: bool) -> String {
    let mut s = String::from("# gnuplot -p plot.gp\nset datafile separator ','\nset key outside\n");
    s.push_str(if floquet { "set xlabel 'period'\n" } else { "set xlabel 't'\n" });
    for (file, labels) in files {
        let stem = file.trim_end_matches(".csv");
        s.push_str(&format!("set term push\nset title '{stem}'\nset ylabel '{stem}'\n"));
        let plots: Vec<String> =
            labels.iter().map(|l| format!("'{file}' using 1:'{l}' with lines title '{l}'")).collect();
        s.push_str(&format!("plot {}\npause -1\n", plots.join(", \\\n     ")));
    }
    s
}
