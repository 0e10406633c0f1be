//! Row-major point sets and labeled datasets, with the CSV exchange format
//! (`f0,...,f{d-1}[,label]`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n x d` matrix of points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    data: Vec<f64>,
    dim: usize,
}

impl Points {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::input("point dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::input(format!(
                "buffer of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Points { data, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Points { data: Vec::new(), dim: dim.max(1) }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::input("no rows"))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::Dimension { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Points::new(data, dim)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: row.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Points {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Points { data, dim: self.dim }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Dimension { expected: dim, got: self.dim });
        }
        Ok(())
    }
}

// JSON form is a list of rows, matching the `Z` field of the spec file.
impl Serialize for Points {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for r in self.rows() {
            seq.serialize_element(r)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Points {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        Points::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Feature matrix with optional per-row labels (class index or real target).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Points,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Points, y: Option<Vec<f64>>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::input("dataset has no rows"));
        }
        if !x.is_finite() {
            return Err(Error::input("dataset contains non-finite values"));
        }
        if let Some(y) = &y {
            if y.len() != x.len() {
                return Err(Error::input(format!(
                    "{} labels for {} rows",
                    y.len(),
                    x.len()
                )));
            }
        }
        Ok(Dataset { x, y })
    }

    pub fn unlabeled(x: Points) -> Result<Self> {
        Dataset::new(x, None)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }

    pub fn labels(&self) -> Result<&[f64]> {
        self.y.as_deref().ok_or_else(|| Error::input("dataset has no label column"))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader<R: Read>(reader: R, name: &str) -> Result<Self> {
        let csv_err = |source| Error::Csv { path: name.to_string(), source };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let has_label = headers.iter().next_back().is_some_and(|h| h.trim() == "label");
        let dim = headers.len() - usize::from(has_label);
        for (j, h) in headers.iter().take(dim).enumerate() {
            if h.trim() != format!("f{j}") {
                return Err(Error::input(format!(
                    "{name}: expected header column `f{j}`, found `{h}`"
                )));
            }
        }
        if dim == 0 {
            return Err(Error::input(format!("{name}: no feature columns")));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let parse = |j: usize| -> Result<f64> {
                let field = rec.get(j).unwrap_or("").trim();
                field.parse::<f64>().map_err(|_| {
                    Error::input(format!("{name}: row {}: cannot parse `{field}`", line + 2))
                })
            };
            for j in 0..dim {
                data.push(parse(j)?);
            }
            if has_label {
                labels.push(parse(dim)?);
            }
        }
        Dataset::new(Points::new(data, dim)?, has_label.then_some(labels))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.to_writer(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut header: Vec<String> = (0..self.dim()).map(|j| format!("f{j}")).collect();
        if self.y.is_some() {
            header.push("label".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for (i, row) in self.x.rows().enumerate() {
            let mut fields: Vec<String> = row.iter().map(f64::to_string).collect();
            if let Some(y) = &self.y {
                fields.push(y[i].to_string());
            }
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    }
}
