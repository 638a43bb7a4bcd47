//! Time-gridded vector paths: the discrete carrier for inputs, constrained
//! paths, pushing processes and Brownian sums.

use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("times must be strictly increasing (violation at index {0})")]
    NonIncreasingTimes(usize),
    #[error("value count {values} does not match grid length {times}")]
    LengthMismatch { times: usize, values: usize },
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("csv parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A path sampled on a strictly increasing time grid. Values are stored flat,
/// `dim` entries per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl DiscretePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self, PathError> {
        if values.len() != times.len() * dim {
            return Err(PathError::LengthMismatch {
                times: times.len() * dim,
                values: values.len(),
            });
        }
        for k in 1..times.len() {
            if times[k] <= times[k - 1] {
                return Err(PathError::NonIncreasingTimes(k));
            }
        }
        Ok(DiscretePath { times, values, dim })
    }

    /// Scalar path convenience constructor.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        Self::new(times, values, 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn same_grid(&self, other: &DiscretePath) -> bool {
        self.times == other.times
    }

    /// Largest index k with t_k <= t (grid lookup for time pairs).
    pub fn index_at(&self, t: f64) -> usize {
        match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k,
            Err(k) => k.saturating_sub(1),
        }
    }

    pub fn sup_distance(&self, other: &DiscretePath) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes the `t,x1,...,xJ` CSV representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PathError> {
        write!(w, "t")?;
        for j in 0..self.dim {
            write!(w, ",x{}", j + 1)?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", self.times[k])?;
            for v in self.value(k) {
                write!(w, ",{}", v)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Parses the `t,x1,...,xJ` CSV representation.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, PathError> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                let cols = line.split(',').count();
                if cols < 2 || !line.starts_with('t') {
                    return Err(PathError::Csv {
                        line: 1,
                        msg: "expected header t,x1,...".into(),
                    });
                }
                dim = Some(cols - 1);
                continue;
            }
            let dim = dim.ok_or(PathError::Csv { line: lineno + 1, msg: "missing header".into() })?;
            let mut fields = line.split(',');
            let t: f64 = fields
                .next()
                .unwrap()
                .parse()
                .map_err(|e| PathError::Csv { line: lineno + 1, msg: format!("bad time: {e}") })?;
            times.push(t);
            let mut count = 0;
            for f in fields {
                let v: f64 = f.parse().map_err(|e| PathError::Csv {
                    line: lineno + 1,
                    msg: format!("bad value: {e}"),
                })?;
                values.push(v);
                count += 1;
            }
            if count != dim {
                return Err(PathError::Csv {
                    line: lineno + 1,
                    msg: format!("expected {dim} coordinates, found {count}"),
                });
            }
        }
        let dim = dim.ok_or(PathError::Csv { line: 1, msg: "empty file".into() })?;
        DiscretePath::new(times, values, dim)
    }
}
