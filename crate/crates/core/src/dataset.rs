//! On-disk evidence: one JSONL file per realization plus a manifest.
//!
//! Each line is one record, e.g.
//! `{"t": 1.5, "task": 3, "kind": "arrival", "class": "c1"}` or
//! `{"t": 2.0, "task": 3, "kind": "service", "station": 1}`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, NetworkSpec, Observation, ObservationSequence, StepConstraint, TaskId};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: PathBuf, line: usize, msg: String },
    #[error("{file}:{line}: time {t} ties with the previous record (enable a tie offset to separate ties)")]
    Tie { file: PathBuf, line: usize, t: f64 },
    #[error("bad manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("{file}: {source}")]
    Model {
        file: PathBuf,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Arrival,
    Departure,
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub t: f64,
    pub task: TaskId,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub horizon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub realizations: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn total_horizon(&self) -> f64 {
        self.realizations.iter().map(|r| r.horizon).sum()
    }
}

fn io_err(path: &FsPath) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_record(o: &Observation, spec: &NetworkSpec) -> Record {
    let (task, kind, station, class) = match o.constraint {
        StepConstraint::ArrivalOf { task, class } => (
            task,
            RecordKind::Arrival,
            None,
            class.map(|c| spec.class_name(c).to_string()),
        ),
        StepConstraint::DepartureOf { task } => (task, RecordKind::Departure, None, None),
        StepConstraint::ServiceAt { station, task } => (task, RecordKind::Service, Some(station), None),
        other => unreachable!("observation sequences hold only evidence records, found {other:?}"),
    };
    Record {
        t: o.time,
        task,
        kind,
        station,
        class,
    }
}

fn from_record(r: &Record, spec: &NetworkSpec) -> Result<StepConstraint, String> {
    if r.kind != RecordKind::Service && r.station.is_some() {
        return Err("only service records carry a station".into());
    }
    if r.kind != RecordKind::Arrival && r.class.is_some() {
        return Err("only arrival records carry a class".into());
    }
    Ok(match r.kind {
        RecordKind::Arrival => {
            let class = match &r.class {
                Some(name) => Some(spec.class_by_name(name).ok_or_else(|| format!("unknown class {name:?}"))?),
                None => None,
            };
            StepConstraint::ArrivalOf { task: r.task, class }
        }
        RecordKind::Departure => StepConstraint::DepartureOf { task: r.task },
        RecordKind::Service => {
            let station = r.station.ok_or("service record without a station")?;
            if station == 0 || station > spec.station_count() {
                return Err(format!("unknown station {station}"));
            }
            StepConstraint::ServiceAt { station, task: r.task }
        }
    })
}

fn file_name(k: usize) -> String {
    format!("realization_{k:05}.jsonl")
}

/// Writes one JSONL file per sequence and the manifest into `dir`.
pub fn write_dataset(dir: &FsPath, spec: &NetworkSpec, data: &[ObservationSequence]) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest::default();
    for (k, seq) in data.iter().enumerate() {
        let name = file_name(k);
        let path = dir.join(&name);
        let f = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(f);
        for o in seq.records() {
            let line = serde_json::to_string(&to_record(o, spec)).expect("record serializes");
            writeln!(w, "{line}").map_err(io_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
        manifest.realizations.push(ManifestEntry {
            file: name,
            horizon: seq.horizon(),
        });
    }
    let mpath = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(io_err(&mpath))?;
    Ok(manifest)
}

pub fn read_manifest(path: &FsPath) -> Result<Manifest, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if let Some(e) = m.realizations.iter().find(|e| !(e.horizon.is_finite() && e.horizon >= 0.0)) {
        return Err(DatasetError::Manifest {
            path: path.to_path_buf(),
            msg: format!("{} has horizon {}", e.file, e.horizon),
        });
    }
    Ok(m)
}

/// Reads one realization. Equal consecutive times are an error unless
/// `tie_offset` is given, in which case each tied record is pushed that far
/// past its predecessor.
pub fn read_sequence(
    path: &FsPath,
    horizon: f64,
    spec: &NetworkSpec,
    tie_offset: Option<f64>,
) -> Result<ObservationSequence, DatasetError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |msg: String| DatasetError::Parse {
            file: path.to_path_buf(),
            line: lineno,
            msg,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let constraint = from_record(&rec, spec).map_err(parse)?;
        let mut t = rec.t;
        if !t.is_finite() {
            return Err(parse(format!("time {t} is not finite")));
        }
        if t == last {
            match tie_offset {
                Some(eps) => t = last + eps,
                None => {
                    return Err(DatasetError::Tie {
                        file: path.to_path_buf(),
                        line: lineno,
                        t,
                    })
                }
            }
        } else if t < last {
            return Err(parse(format!("time {t} precedes the previous record at {last}")));
        }
        last = t;
        records.push(Observation { time: t, constraint });
    }
    ObservationSequence::new(horizon, records).map_err(|source| DatasetError::Model {
        file: path.to_path_buf(),
        source,
    })
}

/// Reads every realization named in the manifest at `manifest_path`; file
/// names are relative to the manifest's directory.
pub fn read_dataset(
    manifest_path: &FsPath,
    spec: &NetworkSpec,
    tie_offset: Option<f64>,
) -> Result<Vec<ObservationSequence>, DatasetError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(FsPath::new("."));
    manifest
        .realizations
        .iter()
        .map(|e| read_sequence(&base.join(&e.file), e.horizon, spec, tie_offset))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks;
    use crate::rng::Streams;
    use crate::simulate::simulate_realizations;

    #[test]
    fn round_trip() {
        let spec = networks::bottleneck(0.5);
        let reals = simulate_realizations(spec.declared_params(), &spec, &[40.0; 5], 0.5, &Streams::new(1)).unwrap();
        let data: Vec<_> = reals.into_iter().map(|r| r.observations).collect();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &spec, &data).unwrap();
        assert_eq!(m.realizations.len(), 5);
        let back = read_dataset(&dir.path().join(MANIFEST_FILE), &spec, None).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn empty_dataset() {
        let spec = networks::tandem();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &spec, &[]).unwrap();
        assert!(read_dataset(&dir.path().join(MANIFEST_FILE), &spec, None).unwrap().is_empty());
    }

    fn write(dir: &FsPath, body: &str) -> PathBuf {
        let p = dir.join("r.jsonl");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn corrupt_line_names_file_and_line() {
        let spec = networks::tandem();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"t\":1.0,\"task\":1,\"kind\":\"arrival\"}\n{\"t\":2.0,\"task\":1,\"kind\":\"sideways\"}\n",
        );
        let err = read_sequence(&p, 10.0, &spec, None).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }), "{msg}");
        assert!(msg.contains("r.jsonl:2"), "{msg}");
    }

    #[test]
    fn ties_fail_unless_offset() {
        let spec = networks::tandem();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "{\"t\":1.0,\"task\":1,\"kind\":\"arrival\"}\n{\"t\":1.0,\"task\":2,\"kind\":\"arrival\"}\n",
        );
        assert!(matches!(
            read_sequence(&p, 10.0, &spec, None).unwrap_err(),
            DatasetError::Tie { line: 2, .. }
        ));
        let seq = read_sequence(&p, 10.0, &spec, Some(1e-9)).unwrap();
        assert_eq!(seq.records()[1].time, 1.0 + 1e-9);
    }

    #[test]
    fn service_record_needs_known_station() {
        let spec = networks::tandem();
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "{\"t\":1.0,\"task\":1,\"kind\":\"service\",\"station\":7}\n");
        assert!(matches!(read_sequence(&p, 10.0, &spec, None).unwrap_err(), DatasetError::Parse { .. }));
    }
}
