//! Numeric CSV tables with a header row.

use std::io::{Read, Write};
use std::path::Path;

use itr_core::Dataset;

use crate::{CliError, CliResult};

/// Offending rows listed in an error message before truncating.
const MAX_LISTED: usize = 10;

/// Selected columns of a CSV file, parsed as numbers.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    /// Row-major values, one inner vector per data row.
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn values(&self, name: &str) -> Vec<f64> {
        let j = self.column(name).expect("column was requested at load time");
        self.rows.iter().map(|r| r[j]).collect()
    }
}

fn listed(problems: &[String]) -> String {
    let mut s = problems.iter().take(MAX_LISTED).cloned().collect::<Vec<_>>().join("\n  ");
    if problems.len() > MAX_LISTED {
        s.push_str(&format!("\n  ... and {} more", problems.len() - MAX_LISTED));
    }
    s
}

/// Reads `wanted` columns (in that order) from CSV text. Cells must be finite
/// numbers; rows with empty or unparseable cells are rejected together.
pub fn read_columns<R: Read>(source: R, wanted: &[String], origin: &str) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = rdr
        .headers()
        .map_err(|e| CliError::input(format!("{origin}: {e}")))?
        .clone();
    let mut idx = Vec::with_capacity(wanted.len());
    let missing: Vec<&str> = wanted
        .iter()
        .filter_map(|w| match header.iter().position(|h| h == w) {
            Some(j) => {
                idx.push(j);
                None
            }
            None => Some(w.as_str()),
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::input(format!("{origin}: missing column(s) {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let mut vals = Vec::with_capacity(idx.len());
        for (&j, name) in idx.iter().zip(wanted) {
            let cell = rec.get(j).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => vals.push(v),
                _ if cell.is_empty() => problems.push(format!("row {row}: column '{name}' is empty")),
                _ => problems.push(format!("row {row}: column '{name}' has non-numeric value '{cell}'")),
            }
        }
        if vals.len() == idx.len() {
            rows.push(vals);
        }
    }
    if !problems.is_empty() {
        return Err(CliError::input(format!("{origin}: rejected rows\n  {}", listed(&problems))));
    }
    Ok(Table {
        columns: wanted.to_vec(),
        rows,
    })
}

pub fn read_file(path: &Path, wanted: &[String]) -> CliResult<Table> {
    let f = std::fs::File::open(path).map_err(|e| CliError::input(format!("cannot open {}: {e}", path.display())))?;
    read_columns(f, wanted, &path.display().to_string())
}

/// Rejects treatment values other than 0 and 1, naming the rows.
pub fn check_binary(values: &[f64], name: &str) -> CliResult<()> {
    let bad: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0 && v != 1.0)
        .map(|(i, v)| format!("row {}: {name} = {v}", i + 1))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::input(format!("{name} must be 0 or 1\n  {}", listed(&bad))))
    }
}

/// Writes covariates, treatment and outcome with the given covariate names.
pub fn write_dataset<W: Write>(sink: W, data: &Dataset, names: &[String]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError::input(e.to_string());
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.extend(["a", "y"]);
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = (0..data.p()).map(|j| data.x()[(i, j)].to_string()).collect();
        rec.push(data.a()[i].to_string());
        rec.push(data.y()[i].to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn reads_requested_columns_in_order() {
        let t = read_columns("a,b,c\n1,2,3\n4,5,6\n".as_bytes(), &names(&["c", "a"]), "t").unwrap();
        assert_eq!(t.rows, vec![vec![3.0, 1.0], vec![6.0, 4.0]]);
        assert_eq!(t.values("a"), vec![1.0, 4.0]);
    }

    #[test]
    fn rejects_bad_cells_and_missing_columns() {
        let e = read_columns("a,b\n1,\n2,x\n3,4\n".as_bytes(), &names(&["a", "b"]), "t").unwrap_err();
        assert!(e.message.contains("row 1") && e.message.contains("row 2") && !e.message.contains("row 3"));
        let e = read_columns("a,b\n1,2\n".as_bytes(), &names(&["z"]), "t").unwrap_err();
        assert!(e.message.contains("missing column(s) z"));
        assert!(check_binary(&[0.0, 1.0, 2.0], "a").unwrap_err().message.contains("row 3"));
    }
}
