use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type ClientId = usize;

/// A nonempty set of equal-length gradient rows, each tagged with a unique client id.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBatch {
    ids: Vec<ClientId>,
    rows: Vec<Vec<f64>>,
}

impl GradientBatch {
    pub fn new(ids: Vec<ClientId>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("gradient batch is empty".into()));
        }
        if ids.len() != rows.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let dim = rows[0].len();
        if let Some(pos) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "row {pos} has length {}, expected {dim}",
                rows[pos].len()
            )));
        }
        if let Some(pos) = rows.iter().position(|r| r.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "row {pos} contains a non-finite entry"
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::InvalidInput(format!("duplicate client id {dup}")));
        }
        Ok(Self { ids, rows })
    }

    /// Builds a batch whose ids are the row positions `0..n`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..rows.len()).collect();
        Self::new(ids, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn ids(&self) -> &[ClientId] {
        &self.ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        &self.rows[pos]
    }

    pub fn row_slices(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClientId, &[f64])> + '_ {
        self.ids.iter().copied().zip(self.row_slices())
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    /// Rows at the given positions, keeping their ids.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let ids = positions.iter().map(|&p| self.ids[p]).collect();
        let rows = positions.iter().map(|&p| self.rows[p].clone()).collect();
        Self::new(ids, rows)
    }

    /// Same ids, rows replaced by `f(row)`.
    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(self.ids.clone(), self.row_slices().map(f).collect())
    }

    /// Reads the `client_id,g0,g1,...` CSV interchange format.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        Self::read_csv_inner(reader).map_err(|m| Error::InvalidInput(m))
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv_inner(file).map_err(|m| Error::format(path, m))
    }

    fn read_csv_inner<R: Read>(reader: R) -> std::result::Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        if headers.get(0) != Some("client_id") {
            return Err("first column must be `client_id`".into());
        }
        for (k, h) in headers.iter().skip(1).enumerate() {
            if h != format!("g{k}") {
                return Err(format!("column {} must be `g{k}`, found `{h}`", k + 1));
            }
        }
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let id = record[0]
                .trim()
                .parse::<ClientId>()
                .map_err(|e| format!("data row {}: client_id: {e}", line + 1))?;
            let row = record
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("data row {}: {e}", line + 1))?;
            ids.push(id);
            rows.push(row);
        }
        Self::new(ids, rows).map_err(|e| e.to_string())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["client_id".to_string()];
        header.extend((0..self.dim()).map(|k| format!("g{k}")));
        wtr.write_record(&header)?;
        for (id, row) in self.iter() {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()
    }
}
