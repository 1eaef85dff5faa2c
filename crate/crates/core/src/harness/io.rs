//! Versioned JSON artifacts, CSV tables and stage manifests.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::BlockPermutation;
use crate::curve::BezierCurve;
use crate::nn::{Network, NetworkSpec};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub spec: NetworkSpec,
    /// Row-major, one matrix per layer.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_network(net: &Network) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            spec: net.spec.clone(),
            weights: net.weights.iter().map(|w| w.outer_iter().map(|r| r.to_vec()).collect()).collect(),
            biases: net.biases.iter().map(|b| b.to_vec()).collect(),
        }
    }

    pub fn into_network(self) -> Result<Network> {
        check_version(self.format_version)?;
        let weights = self
            .weights
            .into_iter()
            .map(|rows| {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(Error::InvalidSpec("ragged weight matrix".into()));
                }
                Array2::from_shape_vec((r, c), rows.concat()).map_err(|e| Error::InvalidSpec(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let biases = self.biases.into_iter().map(Array1::from).collect();
        Network::from_parts(self.spec, weights, biases)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationFile {
    pub format_version: u32,
    pub permutation: BlockPermutation,
    pub cost_per_layer: Vec<f64>,
    pub signature_before: Vec<f64>,
    pub signature_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFile {
    pub format_version: u32,
    pub mode: String,
    pub permutation: BlockPermutation,
    pub theta1: ModelFile,
    pub theta2: ModelFile,
    pub control: ModelFile,
}

impl CurveFile {
    pub fn new(mode: &str, curve: &BezierCurve, permutation: &BlockPermutation) -> Self {
        CurveFile {
            format_version: FORMAT_VERSION,
            mode: mode.to_string(),
            permutation: permutation.clone(),
            theta1: ModelFile::from_network(&curve.theta1),
            theta2: ModelFile::from_network(&curve.theta2),
            control: ModelFile::from_network(&curve.control),
        }
    }

    pub fn into_curve(self) -> Result<(BezierCurve, BlockPermutation)> {
        check_version(self.format_version)?;
        let curve = BezierCurve::new(self.theta1.into_network()?, self.theta2.into_network()?, self.control.into_network()?)?;
        Ok((curve, self.permutation))
    }
}

pub fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            found,
        });
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| not_found(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn not_found(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingArtifact(path.to_path_buf())
    } else {
        Error::Io(e)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| not_found(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_model(path: &Path, net: &Network) -> Result<()> {
    write_json(path, &ModelFile::from_network(net))
}

pub fn read_model(path: &Path) -> Result<Network> {
    read_json::<ModelFile>(path)?.into_network()
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Write a CSV table with LF line endings.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV table written by [`write_table`] as header plus string rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let malformed = |e: csv::Error| Error::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(malformed)?;
    let header = r.headers().map_err(malformed)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(malformed))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<ArtifactRef>,
    pub outputs: Vec<ArtifactRef>,
}

impl Manifest {
    pub fn path(run_dir: &Path, stage: &str) -> PathBuf {
        run_dir.join("manifests").join(format!("{stage}.json"))
    }

    pub fn load(run_dir: &Path, stage: &str) -> Result<Manifest> {
        let m: Manifest = read_json(&Self::path(run_dir, stage))?;
        check_version(m.format_version)?;
        Ok(m)
    }

    /// Every referenced artifact exists and hashes to its recorded digest.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        for a in self.inputs.iter().chain(&self.outputs) {
            verify_artifact(run_dir, a)?;
        }
        Ok(())
    }

    /// One line per output artifact, prefixed by the stage name.
    pub fn summary(&self) -> String {
        let mut s = format!("{}: {} artifact(s)", self.stage, self.outputs.len());
        for a in &self.outputs {
            s += &format!("\n  {}  {}", &a.sha256[..12], a.path.display());
        }
        s
    }

    /// The recorded output entry for `rel`.
    pub fn output(&self, rel: &Path) -> Option<&ArtifactRef> {
        self.outputs.iter().find(|a| a.path == rel)
    }
}

pub fn verify_artifact(run_dir: &Path, a: &ArtifactRef) -> Result<()> {
    let path = run_dir.join(&a.path);
    let found = sha256_file(&path)?;
    if found != a.sha256 {
        return Err(Error::HashMismatch {
            path,
            expected: a.sha256.clone(),
            found,
        });
    }
    Ok(())
}

pub fn artifact_ref(run_dir: &Path, rel: &Path) -> Result<ArtifactRef> {
    Ok(ArtifactRef {
        path: rel.to_path_buf(),
        sha256: sha256_file(&run_dir.join(rel))?,
    })
}
