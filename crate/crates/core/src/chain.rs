//! Chain containers, CSV ingestion and mean computations.
//!
//! A [`Chain`] holds `n` time-ordered evaluations of a `d`-dimensional
//! function of a Markov chain. Storage is column-major so every coordinate is
//! a contiguous slice, which is what the autocovariance kernels consume.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{compensated_sum, Matrix};

/// One Markov chain run: rows are time steps, columns are coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    data: Matrix,
}

impl Chain {
    pub const MIN_LEN: usize = 2;

    pub fn new(data: Matrix) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::Empty);
        }
        if data.nrows() < Self::MIN_LEN {
            return Err(Error::TooShort {
                n: data.nrows(),
                min: Self::MIN_LEN,
            });
        }
        for j in 0..data.ncols() {
            for t in 0..data.nrows() {
                if !data[(t, j)].is_finite() {
                    return Err(Error::NonFinite {
                        row: t + 1,
                        column: j + 1,
                    });
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a chain from per-coordinate series of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::Empty);
        }
        let n = columns[0].len();
        if let Some(bad) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} has length {}, expected {n}",
                columns[bad].len()
            )));
        }
        let flat: Vec<f64> = columns.into_iter().flatten().collect();
        Self::new(Matrix::from_vec(n, d, flat))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        for (t, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::RaggedRow {
                    row: t + 1,
                    expected: d,
                    found: r.len(),
                });
            }
        }
        Self::new(Matrix::from_fn(n, d, |t, j| rows[t][j]))
    }

    /// Univariate chain.
    pub fn from_series(values: Vec<f64>) -> Result<Self> {
        Self::from_columns(vec![values])
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    /// Contiguous slice of coordinate `j` in time order.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.data.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        (0..self.d()).map(|j| self.data[(t, j)]).collect()
    }

    /// Single-coordinate chain for coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Chain {
        Chain {
            data: Matrix::from_column_slice(self.n(), 1, self.column(j)),
        }
    }

    /// The first `len` time steps.
    pub fn head(&self, len: usize) -> Result<Chain> {
        if len > self.n() {
            return Err(Error::Range {
                what: "prefix length",
                detail: format!("{len} > n = {}", self.n()),
            });
        }
        if len == self.n() {
            return Ok(self.clone());
        }
        Chain::new(self.data.rows(0, len).into_owned())
    }

    /// Columns with `center[j]` subtracted from coordinate `j`.
    pub fn centered_columns(&self, center: &[f64]) -> Vec<Vec<f64>> {
        (0..self.d())
            .map(|j| self.column(j).iter().map(|x| x - center[j]).collect())
            .collect()
    }

    /// Writes the chain as headerless CSV using shortest round-trip float
    /// formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::new();
        for t in 0..self.n() {
            line.clear();
            for j in 0..self.d() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", self.data[(t, j)]));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

/// Parses a CSV chain. Every row must have the same number of numeric fields.
pub fn load_chain<R: Read>(reader: R, has_header: bool) -> Result<Chain> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        // Blank lines are skipped by the csv reader; a lone empty field is not data.
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: rec.len(),
            });
        }
        let mut values = Vec::with_capacity(expected);
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, column: c + 1 });
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.len() < Chain::MIN_LEN {
        return Err(Error::TooShort {
            n: rows.len(),
            min: Chain::MIN_LEN,
        });
    }
    Chain::from_rows(&rows)
}

pub fn load_chain_path(path: impl AsRef<Path>, has_header: bool) -> Result<Chain> {
    let f = std::fs::File::open(path)?;
    load_chain(std::io::BufReader::new(f), has_header)
}

/// Coordinate-wise mean vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanVector(pub Vec<f64>);

impl MeanVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn d(&self) -> usize {
        self.0.len()
    }
}

/// Compensated coordinate-wise mean of the rows.
pub fn chain_mean(chain: &Chain) -> MeanVector {
    let n = chain.n() as f64;
    MeanVector(
        (0..chain.d())
            .map(|j| compensated_sum(chain.column(j).iter().copied()) / n)
            .collect(),
    )
}

/// `M` equal-shape chains from the same kernel.
#[derive(Debug, Clone)]
pub struct MultiChain {
    chains: Vec<Chain>,
}

impl MultiChain {
    pub fn new(chains: Vec<Chain>) -> Result<Self> {
        let first = chains.first().ok_or(Error::InsufficientChains { min: 1, got: 0 })?;
        let (n, d) = (first.n(), first.d());
        for (m, c) in chains.iter().enumerate() {
            if c.n() != n || c.d() != d {
                return Err(Error::DimensionMismatch(format!(
                    "chain {m} is {}x{}, chain 0 is {n}x{d}",
                    c.n(),
                    c.d()
                )));
            }
        }
        Ok(Self { chains })
    }

    pub fn single(chain: Chain) -> Self {
        Self {
            chains: vec![chain],
        }
    }

    pub fn chains(&self) -> &[Chain] {
        &self.chains
    }

    pub fn m(&self) -> usize {
        self.chains.len()
    }

    pub fn n(&self) -> usize {
        self.chains[0].n()
    }

    pub fn d(&self) -> usize {
        self.chains[0].d()
    }

    /// Same prefix of every chain.
    pub fn head(&self, len: usize) -> Result<MultiChain> {
        let chains = self
            .chains
            .iter()
            .map(|c| c.head(len))
            .collect::<Result<Vec<_>>>()?;
        MultiChain::new(chains)
    }

    pub(crate) fn require_chains(&self, min: usize) -> Result<()> {
        if self.m() < min {
            return Err(Error::InsufficientChains {
                min,
                got: self.m(),
            });
        }
        Ok(())
    }
}

/// Mean of the per-chain means. With one chain this is that chain's mean
/// bit for bit.
pub fn global_mean(mc: &MultiChain) -> MeanVector {
    let means: Vec<MeanVector> = mc.chains().iter().map(chain_mean).collect();
    let m = mc.m() as f64;
    MeanVector(
        (0..mc.d())
            .map(|j| compensated_sum(means.iter().map(|mv| mv.0[j])) / m)
            .collect(),
    )
}
