//! Synthetic datasets and the CSV dataset format (`label,f0,f1,...`).

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::Dataset;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Isotropic Gaussian clusters on a circle; linearly separable at low noise.
    Blobs,
    /// Two interleaved half circles.
    Moons,
    /// Interleaved spiral arms, one per class.
    Spirals,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Blobs => "blobs",
            SyntheticKind::Moons => "moons",
            SyntheticKind::Spirals => "spirals",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub noise: f64,
    /// Ignored for moons, which always has two classes.
    #[serde(default = "default_classes")]
    pub n_classes: usize,
}

fn default_classes() -> usize {
    3
}

impl SyntheticSpec {
    pub fn classes(&self) -> usize {
        match self.kind {
            SyntheticKind::Moons => 2,
            _ => self.n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("data.n must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("data.noise must be non-negative, got {}", self.noise)));
        }
        if self.classes() < 2 {
            return Err(Error::Config("data.n_classes must be at least 2".into()));
        }
        Ok(())
    }
}

/// Samples are assigned to classes round-robin, so class sizes differ by at
/// most one.
pub fn generate(spec: &SyntheticSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.classes();
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut x = Array2::zeros((spec.n, 2));
    let mut y = Vec::with_capacity(spec.n);
    let per_class = spec.n.div_ceil(k) as f64;
    for i in 0..spec.n {
        let c = i % k;
        let (a, b) = match spec.kind {
            SyntheticKind::Blobs => {
                let angle = 2.0 * PI * c as f64 / k as f64;
                (2.0 * angle.cos(), 2.0 * angle.sin())
            }
            SyntheticKind::Moons => {
                let s: f64 = rng.random_range(0.0..PI);
                if c == 0 {
                    (s.cos(), s.sin())
                } else {
                    (1.0 - s.cos(), 0.5 - s.sin())
                }
            }
            SyntheticKind::Spirals => {
                let r = ((i / k) as f64 + 0.5) / per_class;
                let angle = 2.0 * PI * c as f64 / k as f64 + 1.75 * PI * r;
                (r * angle.cos(), r * angle.sin())
            }
        };
        x[[i, 0]] = a + noise.sample(rng);
        x[[i, 1]] = b + noise.sample(rng);
        y.push(c);
    }
    Dataset::new(x, y, k)
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..data.n_features()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for (row, &label) in data.features.outer_iter().zip(&data.labels) {
        let mut rec = vec![label.to_string()];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset; `n_classes` defaults to one more than the largest label.
pub fn read_csv(path: &Path, n_classes: Option<usize>) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(malformed("header must be `label,f0,f1,...`".into()));
    }
    let d = header.len() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != d + 1 {
            return Err(malformed(format!("row {} has {} fields, expected {}", line + 2, rec.len(), d + 1)));
        }
        labels.push(rec[0].trim().parse::<usize>().map_err(|e| malformed(format!("row {}: label: {e}", line + 2)))?);
        for field in rec.iter().skip(1) {
            values.push(field.trim().parse::<f64>().map_err(|e| malformed(format!("row {}: {e}", line + 2)))?);
        }
    }
    if labels.is_empty() {
        return Err(malformed("no samples".into()));
    }
    let k = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let x = Array2::from_shape_vec((labels.len(), d), values).map_err(|e| malformed(e.to_string()))?;
    Dataset::new(x, labels, k)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Malformed {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    }
}
