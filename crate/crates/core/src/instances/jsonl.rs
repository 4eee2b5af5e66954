use super::{DistanceKind, Instance, Kind, Tour};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// Dataset line schema. Generated corpora always use exact Euclidean
/// distances, so the distance kind is not stored.
#[derive(Serialize, Deserialize)]
struct DatasetLine {
    name: String,
    kind: Kind,
    coords: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    demands: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    capacity: Option<u32>,
}

pub fn write_dataset(path: &Path, instances: &[Instance]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for inst in instances {
        let line = DatasetLine {
            name: inst.name.clone(),
            kind: inst.kind,
            coords: inst.coords.clone(),
            demands: inst.demands.clone(),
            capacity: inst.capacity,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<Instance>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let inst = Instance {
            name: parsed.name,
            kind: parsed.kind,
            coords: parsed.coords,
            demands: parsed.demands,
            capacity: parsed.capacity,
            distance_kind: DistanceKind::ExactEuclidean,
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct LabelLine {
    instance_name: String,
    order: Vec<usize>,
}

pub fn write_labels(path: &Path, labels: &[(String, Tour)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for (name, tour) in labels {
        let line = LabelLine { instance_name: name.clone(), order: tour.order.clone() };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Labels keyed by instance name.
pub fn read_labels(path: &Path) -> Result<HashMap<String, Tour>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = HashMap::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.insert(parsed.instance_name, Tour::new(parsed.order));
    }
    Ok(out)
}

/// One solved instance: a tour order (TSP) or routes (CVRP) plus objective.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routes: Option<Vec<Vec<usize>>>,
    pub objective: f64,
}

pub fn write_solutions(path: &Path, solutions: &[Solution]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for s in solutions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_solutions(path: &Path) -> Result<Vec<Solution>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Solution = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

/// Best-known-solution lookup: two whitespace-separated columns,
/// instance name and objective.
pub fn read_bks(path: &Path) -> Result<HashMap<String, f64>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = HashMap::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let name = parts.next().unwrap().to_string();
        let value = parts
            .next()
            .ok_or_else(|| Error::Parse { line: idx + 1, msg: "missing objective column".into() })?
            .parse::<f64>()
            .map_err(|e| Error::Parse { line: idx + 1, msg: e.to_string() })?;
        out.insert(name, value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_uniform_many, DemandConfig};

    #[test]
    fn dataset_round_trip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let insts =
            gen_uniform_many(Kind::Cvrp, 12, 5, 31, &DemandConfig::default()).unwrap();
        write_dataset(&path, &insts).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), insts.len());
        for (a, b) in insts.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.coords, b.coords); // exact, via JSON f64 round-trip
            assert_eq!(a.demands, b.demands);
            assert_eq!(a.capacity, b.capacity);
        }
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let labels = vec![
            ("a".to_string(), Tour::new(vec![0, 2, 1])),
            ("b".to_string(), Tour::new(vec![1, 0, 2])),
        ];
        write_labels(&path, &labels).unwrap();
        let back = read_labels(&path).unwrap();
        assert_eq!(back["a"].order, vec![0, 2, 1]);
        assert_eq!(back["b"].order, vec![1, 0, 2]);
    }

    #[test]
    fn bks_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bks.txt");
        std::fs::write(&path, "# comment\neil51 426\nX-n101-k25  27591.0\n").unwrap();
        let bks = read_bks(&path).unwrap();
        assert_eq!(bks["eil51"], 426.0);
        assert_eq!(bks["X-n101-k25"], 27591.0);
        std::fs::write(&path, "eil51\n").unwrap();
        assert!(read_bks(&path).is_err());
    }
}
