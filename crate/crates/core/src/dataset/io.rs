use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::DatasetManifest;
use crate::types::{validate_trajectory, CampaignConfig, Step, Trajectory};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StepRecord {
    t: usize,
    state: Vec<f64>,
    action: f64,
    reward: f64,
    cost: f64,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRecord {
    version: u32,
    campaign: CampaignConfig,
    steps: Vec<StepRecord>,
}

fn to_record(t: &Trajectory) -> TrajectoryRecord {
    TrajectoryRecord {
        version: SCHEMA_VERSION,
        campaign: t.campaign,
        steps: t
            .steps
            .iter()
            .map(|s| StepRecord {
                t: s.index,
                state: s.state.clone(),
                action: s.action,
                reward: s.reward,
                cost: s.cost,
            })
            .collect(),
    }
}

/// One JSON object per line; reals use the shortest round-trip decimal form.
pub fn write_trajectories<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        serde_json::to_writer(&mut *out, &to_record(t))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: Read>(input: R, path: &Path) -> Result<Vec<Trajectory>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if rec.version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: rec.version,
                expected: SCHEMA_VERSION,
            });
        }
        let steps = rec
            .steps
            .into_iter()
            .map(|s| Step {
                index: s.t,
                state: s.state,
                action: s.action,
                reward: s.reward,
                cost: s.cost,
            })
            .collect();
        let traj = Trajectory::new(rec.campaign, steps);
        if let Err(v) = validate_trajectory(&traj) {
            return Err(parse_err(lineno, format!("invalid trajectory: {}", v[0])));
        }
        out.push(traj);
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    write_trajectories(&mut w, trajectories).map_err(|e| Error::io(ctx(), e))?;
    w.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn load_dataset(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_trajectories(file, path)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, BehaviorPolicy, CampaignRanges, DatasetSpec};
    use crate::sim::MarketModel;
    use crate::types::RewardMode;

    fn sample() -> Vec<Trajectory> {
        let spec = DatasetSpec {
            n: 4,
            seed_base: 9,
            campaigns: CampaignRanges {
                budget_lo: 20.0,
                budget_hi: 40.0,
                cpa_lo: 6.0,
                cpa_hi: 12.0,
                horizon: 48,
                reward_mode: RewardMode::Sparse,
            },
            mixture: vec![(BehaviorPolicy::constant(1.3), 1.0)],
        };
        generate_dataset(&spec, &MarketModel::desk(48)).unwrap().trajectories
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let trajs = sample();
        let mut a = Vec::new();
        write_trajectories(&mut a, &trajs).unwrap();
        let back = read_trajectories(&a[..], Path::new("mem")).unwrap();
        assert_eq!(back, trajs);
        let mut b = Vec::new();
        write_trajectories(&mut b, &back).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_line_names_the_line() {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &sample()).unwrap();
        buf.truncate(buf.len() - 40);
        let err = read_trajectories(&buf[..], Path::new("d.jsonl")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn future_schema_is_rejected() {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &sample()[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            read_trajectories(text.as_bytes(), Path::new("x")),
            Err(Error::SchemaVersion { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn record_layout_is_stable() {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &sample()[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("{\"version\":1,\"campaign\":{\"budget\":"));
        assert!(text.contains("\"reward_mode\":\"sparse\"},\"steps\":[{\"t\":1,\"state\":["));
    }
}
