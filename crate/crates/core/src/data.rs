//! The observed sample: outcome block `y`, first-step response `r`, first-step covariates `Z`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observation as seen by a moment function.
#[derive(Clone, Copy, Debug)]
pub struct Obs<'a> {
    pub index: usize,
    pub y: &'a [f64],
    pub r: f64,
}

/// Observed sample `{(y_i, r_i, z_i)}`.
///
/// All blocks share the row count `n >= 2` and contain only finite values.
/// The outcome block is kept row-major so moment functions get a contiguous slice.
#[derive(Clone, Debug)]
pub struct Dataset {
    y: Vec<f64>,
    dim_y: usize,
    r: DVector<f64>,
    z: DMatrix<f64>,
}

fn check_finite(block: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(Error::NonFinite { block, row, col });
            }
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, r: DVector<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = r.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if y.nrows() != n || z.nrows() != n {
            return Err(Error::Shape(format!(
                "row counts differ: y has {}, r has {n}, Z has {}",
                y.nrows(),
                z.nrows()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::InvalidInput("Z has no columns".into()));
        }
        check_finite("y", &y)?;
        check_finite("Z", &z)?;
        if let Some(row) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: "r",
                row,
                col: 0,
            });
        }
        let dim_y = y.ncols();
        let mut flat = Vec::with_capacity(n * dim_y);
        for i in 0..n {
            flat.extend(y.row(i).iter());
        }
        Ok(Self {
            y: flat,
            dim_y,
            r,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.r.len()
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    /// Number of first-step covariates.
    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.dim_y..(i + 1) * self.dim_y]
    }

    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.dim_y, &self.y)
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn obs(&self, i: usize) -> Obs<'_> {
        Obs {
            index: i,
            y: self.y_row(i),
            r: self.r[i],
        }
    }

    /// Same sample with a different first-step response.
    pub fn with_response(&self, r: DVector<f64>) -> Result<Self> {
        Self::new(self.y_matrix(), r, self.z.clone())
    }

    /// Same sample keeping only the first `k` covariate columns.
    pub fn leading_covariates(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(Error::InvalidInput(format!(
                "cannot keep {k} of {} covariates",
                self.k()
            )));
        }
        Ok(Self {
            y: self.y.clone(),
            dim_y: self.dim_y,
            r: self.r.clone(),
            z: self.z.columns(0, k).into_owned(),
        })
    }

    /// Subsample with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n();
        if let Some(&bad) = rows.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        let y = DMatrix::from_fn(rows.len(), self.dim_y, |i, j| self.y_row(rows[i])[j]);
        let r = DVector::from_fn(rows.len(), |i, _| self.r[rows[i]]);
        let z = DMatrix::from_fn(rows.len(), self.k(), |i, j| self.z[(rows[i], j)]);
        Self::new(y, r, z)
    }

    /// Reads a headed CSV file, selecting columns by name.
    pub fn from_csv(path: impl AsRef<Path>, columns: &ColumnSelection) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string(), columns)
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        source: &str,
        columns: &ColumnSelection,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(parse_err(1, "missing header row".into()));
        }
        let find = |name: &str| -> Result<usize> {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    name: name.to_string(),
                    header: header.join(", "),
                })
        };
        let y_idx = columns
            .y
            .iter()
            .map(|c| find(c))
            .collect::<Result<Vec<_>>>()?;
        let r_idx = find(&columns.r)?;
        let z_idx = columns
            .z
            .iter()
            .map(|c| find(c))
            .collect::<Result<Vec<_>>>()?;

        let mut y_rows = Vec::new();
        let mut r_vals = Vec::new();
        let mut z_rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |idx: usize| -> Result<f64> {
                let raw = record.get(idx).unwrap_or("");
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                    return Err(parse_err(line, format!("missing value in column '{}'", header[idx])));
                }
                let v: f64 = raw.parse().map_err(|_| {
                    parse_err(line, format!("cannot parse '{raw}' in column '{}'", header[idx]))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite value in column '{}'", header[idx])));
                }
                Ok(v)
            };
            for &j in &y_idx {
                y_rows.push(field(j)?);
            }
            r_vals.push(field(r_idx)?);
            if columns.intercept {
                z_rows.push(1.0);
            }
            for &j in &z_idx {
                z_rows.push(field(j)?);
            }
        }
        let n = r_vals.len();
        let kz = z_idx.len() + usize::from(columns.intercept);
        if kz == 0 {
            return Err(Error::InvalidInput("no first-step covariates selected".into()));
        }
        let y = DMatrix::from_row_slice(n, y_idx.len(), &y_rows);
        let z = DMatrix::from_row_slice(n, kz, &z_rows);
        Self::new(y, DVector::from_vec(r_vals), z)
    }
}

/// Column names to pull from a CSV file.
#[derive(Clone, Debug, Default)]
pub struct ColumnSelection {
    pub y: Vec<String>,
    pub r: String,
    pub z: Vec<String>,
    /// Prepend a column of ones to `Z`.
    pub intercept: bool,
}

/// Expands a column list such as `z1..z5,w` into individual names.
///
/// A `prefixA..prefixB` item expands to the numeric range with a shared prefix.
pub fn expand_columns(spec: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let split = |s: &str| {
                    let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
                    let (p, d) = s.split_at(s.len() - digits);
                    (p.to_string(), d.parse::<usize>().ok())
                };
                let (p1, a) = split(lo);
                let (p2, b) = split(hi);
                match (a, b) {
                    (Some(a), Some(b)) if p1 == p2 && a <= b => {
                        out.extend((a..=b).map(|i| format!("{p1}{i}")));
                    }
                    _ => {
                        return Err(Error::Config(format!("bad column range '{item}'")));
                    }
                }
            }
            None => out.push(item.to_string()),
        }
    }
    Ok(out)
}
