//! Labeled design samples, the feasibility rule, Z-standardization,
//! train/test splits, k-fold partitions and CSV persistence.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::converter::{DesignPoint, N_PARAMS};
use crate::rng;
use crate::{Error, Result};

/// Junction temperature limit of a feasible design [degC].
pub const MAX_TEMPERATURE: f64 = 125.0;

pub const CSV_HEADER: [&str; 12] = [
    "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "y1", "y2", "feasible",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: DesignPoint,
    /// Efficiency.
    pub y1: f64,
    /// Junction temperature [degC].
    pub y2: f64,
    pub feasible: bool,
}

/// A design is feasible when its efficiency lies in [0, 1] and its junction
/// temperature does not exceed 125 degC.
pub fn label_feasibility(y1: f64, y2: f64) -> Result<bool> {
    if y1.is_nan() || y2.is_nan() {
        return Err(Error::domain("feasibility label of NaN quantities"));
    }
    Ok((0.0..=1.0).contains(&y1) && y2 <= MAX_TEMPERATURE)
}

/// Feature matrix (rows x 9) in physical units.
pub fn features(samples: &[LabeledSample]) -> Array2<f64> {
    let mut out = Array2::zeros((samples.len(), N_PARAMS));
    for (mut row, s) in out.outer_iter_mut().zip(samples) {
        row.assign(&Array1::from(s.x.to_array().to_vec()));
    }
    out
}

/// Target matrix (rows x 2): efficiency, temperature.
pub fn targets(samples: &[LabeledSample]) -> Array2<f64> {
    let mut out = Array2::zeros((samples.len(), 2));
    for (i, s) in samples.iter().enumerate() {
        out[[i, 0]] = s.y1;
        out[[i, 1]] = s.y2;
    }
    out
}

pub fn labels(samples: &[LabeledSample]) -> Vec<f64> {
    samples.iter().map(|s| if s.feasible { 1.0 } else { 0.0 }).collect()
}

pub fn feasible_only(samples: &[LabeledSample]) -> Vec<LabeledSample> {
    samples.iter().filter(|s| s.feasible).copied().collect()
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns whose values were all identical at fit time.
    pub constant: Vec<bool>,
}

impl ScalerParams {
    pub fn fit(data: ArrayView2<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::domain("cannot fit a scaler on an empty dataset"));
        }
        let n = data.nrows() as f64;
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        let mut constant = Vec::with_capacity(data.ncols());
        for col in data.axis_iter(Axis(1)) {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite value in scaler input"));
            }
            let first = col[0];
            if col.iter().all(|v| *v == first) {
                mean.push(first);
                std.push(0.0);
                constant.push(true);
                continue;
            }
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(var.sqrt());
            constant.push(false);
        }
        Ok(ScalerParams { mean, std, constant })
    }

    pub fn ncols(&self) -> usize {
        self.mean.len()
    }

    /// Scaler restricted to the columns in `range`.
    pub fn select(&self, range: std::ops::Range<usize>) -> ScalerParams {
        ScalerParams {
            mean: self.mean[range.clone()].to_vec(),
            std: self.std[range.clone()].to_vec(),
            constant: self.constant[range].to_vec(),
        }
    }

    pub fn apply_value(&self, col: usize, v: f64) -> f64 {
        if self.constant[col] {
            0.0
        } else {
            (v - self.mean[col]) / self.std[col]
        }
    }

    pub fn invert_value(&self, col: usize, z: f64) -> f64 {
        if self.constant[col] {
            self.mean[col]
        } else {
            z * self.std[col] + self.mean[col]
        }
    }

    fn check_width(&self, ncols: usize) -> Result<()> {
        if ncols != self.ncols() {
            return Err(Error::domain(format!(
                "scaler fitted on {} columns, data has {ncols}",
                self.ncols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(data.ncols())?;
        let mut out = data.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| self.apply_value(j, v));
        }
        Ok(out)
    }

    pub fn invert(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_width(data.ncols())?;
        let mut out = data.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|z| self.invert_value(j, z));
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        Ok(row.iter().enumerate().map(|(j, v)| self.apply_value(j, *v)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub k: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            k: 5,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::domain("test fraction must lie in (0, 1)"));
        }
        if self.k < 2 {
            return Err(Error::domain("k must be at least 2"));
        }
        Ok(())
    }
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    idx
}

/// Shuffled train/test index split; the test part holds
/// `round(n * test_fraction)` rows (at least one, leaving at least one for
/// training).
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::domain("need at least 2 rows to split"));
    }
    let idx = shuffled_indices(n, spec.seed);
    let n_test = ((n as f64 * spec.test_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = idx.split_at(n_test);
    Ok((train.to_vec(), test.to_vec()))
}

pub fn split<T: Clone>(data: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(data.len(), spec)?;
    Ok((
        train.iter().map(|&i| data[i].clone()).collect(),
        test.iter().map(|&i| data[i].clone()).collect(),
    ))
}

/// `k` disjoint folds covering `0..n`; sizes differ by at most one, with the
/// remainder going to the first folds.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::domain("k must be at least 2"));
    }
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds row count {n}")));
    }
    let idx = shuffled_indices(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(idx[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Writes the dataset with full round-trip float precision.
pub fn save_csv(path: impl AsRef<Path>, data: &[LabeledSample]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_io(path, e))?;
    let mut record: Vec<String> = Vec::with_capacity(12);
    for s in data {
        record.clear();
        record.extend(s.x.to_array().iter().map(|v| format!("{v:?}")));
        record.push(format!("{:?}", s.y1));
        record.push(format!("{:?}", s.y2));
        record.push(if s.feasible { "1" } else { "0" }.to_string());
        w.write_record(&record).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}

/// Parses dataset CSV from any reader. The header must match exactly.
pub fn read_csv(reader: impl std::io::Read) -> Result<Vec<LabeledSample>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = r.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| parse_err(1, e))?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "header must be `{}`, got `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, got {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let mut vals = [0.0; 11];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = rec[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column {} is not numeric: `{}`", CSV_HEADER[j], &rec[j]),
            })?;
        }
        let feasible = match rec[11].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("feasible must be 0 or 1, got `{other}`"),
                })
            }
        };
        let mut x = [0.0; N_PARAMS];
        x.copy_from_slice(&vals[..N_PARAMS]);
        out.push(LabeledSample {
            x: DesignPoint::from_array(x),
            y1: vals[9],
            y2: vals[10],
            feasible,
        });
    }
    Ok(out)
}

fn parse_err(line: u64, e: csv::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
