//! Rectangular numeric tables with named columns.
//!
//! A [`Table`] holds i.i.d. observations row-major; it is the in-memory form
//! of both CSV datasets and samples drawn from a finite law.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    data: Vec<f64>,
    nrows: usize,
}

impl Table {
    pub fn new(columns: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidData("table needs at least one column".into()));
        }
        if data.len() % columns.len() != 0 {
            return Err(Error::InvalidData(format!(
                "data length {} is not a multiple of the column count {}",
                data.len(),
                columns.len()
            )));
        }
        let nrows = data.len() / columns.len();
        Ok(Table {
            columns,
            data,
            nrows,
        })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = columns.len();
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} values, expected {ncols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Table::new(columns, data)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.columns.len())
    }

    pub fn col_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Indices of `names` within this table, or the first missing name.
    pub fn resolve(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.col_index(n)
                    .ok_or_else(|| Error::MissingColumn(n.clone()))
            })
            .collect()
    }

    /// A new table with the given columns in the given order.
    pub fn select(&self, names: &[String]) -> Result<Table> {
        let idx = self.resolve(names)?;
        let mut data = Vec::with_capacity(self.nrows * idx.len());
        for r in self.rows() {
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Table::new(names.to_vec(), data)
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Table {
        let w = self.columns.len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Table {
            columns: self.columns.clone(),
            data,
            nrows: indices.len(),
        }
    }

    pub fn from_csv_path(path: &Path) -> Result<Table> {
        let file = std::fs::File::open(path)?;
        Table::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.to_string())
            .collect();
        if columns.is_empty() {
            return Err(Error::InvalidData("CSV has no header row".into()));
        }
        let mut data = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != columns.len() {
                return Err(Error::InvalidData(format!(
                    "row {i}: {} fields, expected {}",
                    record.len(),
                    columns.len()
                )));
            }
            for (field, col) in record.iter().zip(&columns) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidData(format!(
                        "row {i}, column `{col}`: cannot parse `{field}` as a number"
                    ))
                })?;
                data.push(v);
            }
        }
        Table::new(columns, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let csv = "z,d,dy\n1,1,1\n0,0,0\n1,1,0\n";
        let t = Table::from_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(t.nrows(), 3);
        assert_eq!(t.columns(), &["z", "d", "dy"]);
        assert_eq!(t.row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn csv_bad_number_names_column() {
        let csv = "z,d\n1,x\n";
        let err = Table::from_csv_reader(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("column `d`"), "{err}");
    }

    #[test]
    fn select_reorders() {
        let t = Table::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![1.0, 2.0], vec![3.0, 4.0]],
        )
        .unwrap();
        let s = t.select(&["b".into(), "a".into()]).unwrap();
        assert_eq!(s.row(0), &[2.0, 1.0]);
    }

    #[test]
    fn missing_column_is_an_input_error() {
        let t = Table::from_rows(vec!["a".into()], &[vec![1.0]]).unwrap();
        match t.select(&["q".into()]) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "q"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }
}
