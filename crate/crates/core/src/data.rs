//! Rectangular numeric datasets and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named columns of `f64`, stored by row. The generating seed is recorded
/// when the data was simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>, seed: Option<u64>) -> Result<Dataset> {
        if let Some(r) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(Error::InvalidArgument(format!(
                "row of length {} in a dataset with {} columns",
                r.len(),
                columns.len()
            )));
        }
        Ok(Dataset { columns, rows, seed })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.column(self.column_index(name)?))
    }

    /// Columns as separate vectors, in column order.
    pub fn columns_major(&self) -> Vec<Vec<f64>> {
        (0..self.n_columns()).map(|j| self.column(j)).collect()
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n.as_ref()))
            .collect::<Result<_>>()?;
        Ok(Dataset {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
            seed: self.seed,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        for r in &self.rows {
            wr.write_record(r.iter().map(|v| format_number(*v)))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Dataset> {
        let mut rd = csv::Reader::from_reader(r);
        let columns: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (k, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row: Vec<f64> = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidArgument(format!("row {}: `{f}` is not a number", k + 1))
                    })
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Dataset::new(columns, rows, None)
    }
}

/// Shortest representation that parses back to the same value; integers
/// print without a fractional part.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let d = Dataset::new(
            vec!["a".into(), "b c".into()],
            vec![vec![1.0, -2.5], vec![3.0, 0.1]],
            Some(4),
        )
        .unwrap();
        let s = d.to_csv_string().unwrap();
        assert_eq!(s, "a,b c\n1,-2.5\n3,0.1\n");
        let back = Dataset::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back.rows, d.rows);
        assert!(Dataset::read_csv("a\nx\n".as_bytes()).is_err());
        assert!(Dataset::new(vec!["a".into()], vec![vec![1.0, 2.0]], None).is_err());
    }
}
