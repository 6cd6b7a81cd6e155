//! Artifact files. Every file carries the config hash and seed that made it:
//! a leading `#` line in CSV, a header object on the first JSONL line, and
//! top-level fields in JSON.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::contact::{ContactObservation, ManifoldSet};
use crate::error::{Error, Result};
use crate::projection::{MlpModel, ModelFile, ProjectionSample, TrainReport};
use crate::se3::{format_row, Pose6};

pub const MANIFOLD_HEADER: &str = "x,y,z,alpha,beta,gamma";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn csv_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    fn parse_csv_line(line: &str) -> Option<Self> {
        let rest = line.strip_prefix('#')?.trim();
        let mut hash = None;
        let mut seed = None;
        for field in rest.split_whitespace() {
            if let Some(v) = field.strip_prefix("config_hash=") {
                hash = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("seed=") {
                seed = v.parse().ok();
            }
        }
        Some(Provenance {
            config_hash: hash?,
            seed: seed?,
        })
    }
}

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.display().to_string()))
    }
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(fs::File::create(path)?)
}

fn write_csv(path: &Path, prov: &Provenance, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&prov.csv_line());
    out.push('\n');
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Provenance (if present) and data rows of a CSV artifact.
fn read_csv(path: &Path, header: &str) -> Result<(Option<Provenance>, Vec<String>)> {
    require(path)?;
    let text = fs::read_to_string(path)?;
    let mut prov = None;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            prov = prov.or_else(|| Provenance::parse_csv_line(line));
            continue;
        }
        if !seen_header {
            seen_header = true;
            if line != header {
                return Err(Error::Parse(format!("{}:{}: expected header `{}`", path.display(), i + 1, header)));
            }
            continue;
        }
        rows.push(line.to_string());
    }
    Ok((prov, rows))
}

pub fn write_manifold(path: &Path, manifold: &ManifoldSet, prov: &Provenance) -> Result<()> {
    write_csv(path, prov, MANIFOLD_HEADER, manifold.poses.iter().map(|p| p.to_csv_row()))
}

pub fn read_manifold(path: &Path) -> Result<ManifoldSet> {
    let (_, rows) = read_csv(path, MANIFOLD_HEADER)?;
    let poses = rows.iter().map(|r| r.parse::<Pose6>()).collect::<Result<Vec<_>>>()?;
    if poses.is_empty() {
        return Err(Error::EmptyManifold);
    }
    Ok(ManifoldSet { poses })
}

pub fn write_dataset(path: &Path, samples: &[ProjectionSample], prov: &Provenance) -> Result<()> {
    write_csv(
        path,
        prov,
        crate::projection::dataset::DATASET_HEADER,
        samples.iter().map(|s| s.to_csv_row()),
    )
}

pub fn read_dataset(path: &Path) -> Result<Vec<ProjectionSample>> {
    let (_, rows) = read_csv(path, crate::projection::dataset::DATASET_HEADER)?;
    rows.iter().map(|r| ProjectionSample::from_csv_row(r)).collect()
}

pub const LOSS_CURVE_HEADER: &str = "epoch,train_mse,holdout_mse";

pub fn write_loss_curve(path: &Path, report: &TrainReport, prov: &Provenance) -> Result<()> {
    let rows = report.train_loss.iter().enumerate().map(|(e, t)| {
        let h = report.holdout_loss.get(e).copied().unwrap_or(f64::NAN);
        format!("{},{}", e, format_row(&[*t, h]))
    });
    write_csv(path, prov, LOSS_CURVE_HEADER, rows)
}

pub fn write_model(path: &Path, model: &MlpModel, prov: &Provenance) -> Result<()> {
    let mut file = model.to_file();
    file.config_hash = Some(prov.config_hash.clone());
    file.seed = Some(prov.seed);
    write_json(path, &file)
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_file(read_json::<ModelFile>(path)?)
}

pub fn write_observations(path: &Path, obs: &[ContactObservation], prov: &Provenance) -> Result<()> {
    let mut out = serde_json::to_string(prov).map_err(|e| Error::Parse(e.to_string()))?;
    out.push('\n');
    for o in obs {
        out.push_str(&serde_json::to_string(o).map_err(|e| Error::Parse(e.to_string()))?);
        out.push('\n');
    }
    create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<ContactObservation>> {
    require(path)?;
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && serde_json::from_str::<Provenance>(&line).is_ok() {
            continue;
        }
        let o: ContactObservation = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {}", path.display(), i + 1, e)))?;
        out.push(o);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{} holds no observations", path.display())));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    create(path)?.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    require(path)?;
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))
}

/// Provenance recorded in a CSV artifact's comment line.
pub fn csv_provenance(path: &Path) -> Result<Option<Provenance>> {
    require(path)?;
    let text = fs::read_to_string(path)?;
    Ok(text.lines().find_map(Provenance::parse_csv_line))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::JointVector;

    fn prov() -> Provenance {
        Provenance {
            config_hash: "abc123".into(),
            seed: 9,
        }
    }

    #[test]
    fn manifold_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = ManifoldSet {
            poses: vec![Pose6::new(0.1, -1.0 / 3.0, 29.999999999, 1e-17, -0.5, 2.0f64.sqrt())],
        };
        write_manifold(&path, &m, &prov()).unwrap();
        assert_eq!(read_manifold(&path).unwrap(), m);
        assert_eq!(csv_provenance(&path).unwrap(), Some(prov()));
    }

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.jsonl");
        let obs = vec![
            ContactObservation {
                q: JointVector(vec![0.1, 0.2, -1.0 / 7.0]),
            },
            ContactObservation {
                q: JointVector(vec![3.0, 4.0, 5.0]),
            },
        ];
        write_observations(&path, &obs, &prov()).unwrap();
        assert_eq!(read_observations(&path).unwrap(), obs);
        let first = fs::read_to_string(&path).unwrap();
        assert!(first.lines().next().unwrap().contains("abc123"));
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        let err = read_manifold(Path::new("/nonexistent/m.csv")).unwrap_err();
        assert_eq!(err.kind(), "MissingArtifact");
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_manifold(&path), Err(Error::Parse(_))));
    }
}
