//! JSON Lines dataset files.
//!
//! The first line is a header `{"version":1,"d_s":..,"d_a":..,"env":".."}`
//! (optionally with a `manifest` object). Every following line is one
//! trajectory. Paired datasets carry the prompt, the per-step flags and the
//! pair bookkeeping; raw datasets carry only states and actions.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::traj::{
    ActionVec, AvoidBox, DatasetInfo, EpisodeMeta, LabeledTrajectory, PairedDataset, PromptSpec,
    StateVec, Trajectory,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    d_s: usize,
    d_a: usize,
    env: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    manifest: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptRecord {
    z: u8,
    boxes: Vec<AvoidBox>,
    goal: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum PairRole {
    Orig,
    Copy,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairedRecord {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    prompt: PromptRecord,
    per_step_ok: Vec<u8>,
    pair_id: u64,
    pair_role: PairRole,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    #[serde(default)]
    seed: u64,
}

/// Unlabeled trajectories as produced by data generation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub info: DatasetInfo,
    pub trajectories: Vec<Trajectory>,
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *w, value).map_err(|e| CoreError::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}

fn header_for(info: &DatasetInfo, manifest: Option<&serde_json::Value>) -> Header {
    Header {
        version: FORMAT_VERSION,
        d_s: info.d_s,
        d_a: info.d_a,
        env: info.env.clone(),
        manifest: manifest.cloned(),
    }
}

fn bits(flags: &[bool]) -> Vec<u8> {
    flags.iter().map(|&b| u8::from(b)).collect()
}

pub fn write_paired<W: Write>(
    w: &mut W,
    data: &PairedDataset,
    manifest: Option<&serde_json::Value>,
) -> Result<()> {
    write_line(w, &header_for(&data.info, manifest))?;
    for (id, (orig, copy)) in data.pairs().iter().enumerate() {
        for (role, lt) in [(PairRole::Orig, orig), (PairRole::Copy, copy)] {
            let t = lt.trajectory();
            let rec = PairedRecord {
                states: t.states().iter().map(|s| s.0.clone()).collect(),
                actions: t.actions().iter().map(|a| a.0.clone()).collect(),
                prompt: PromptRecord {
                    z: u8::from(lt.z()),
                    boxes: lt.prompt().boxes.clone(),
                    goal: lt.prompt().goal.0.clone(),
                },
                per_step_ok: bits(lt.per_step_ok()),
                pair_id: id as u64,
                pair_role: role,
                seed: t.meta.seed,
            };
            write_line(w, &rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw<W: Write>(w: &mut W, data: &RawDataset, manifest: Option<&serde_json::Value>) -> Result<()> {
    write_line(w, &header_for(&data.info, manifest))?;
    for t in &data.trajectories {
        let rec = RawRecord {
            states: t.states().iter().map(|s| s.0.clone()).collect(),
            actions: t.actions().iter().map(|a| a.0.clone()).collect(),
            seed: t.meta.seed,
        };
        write_line(w, &rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_paired(path: &Path, data: &PairedDataset, manifest: Option<&serde_json::Value>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_paired(&mut w, data, manifest)
}

pub fn save_raw(path: &Path, data: &RawDataset, manifest: Option<&serde_json::Value>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_raw(&mut w, data, manifest)
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_nonempty(&mut self) -> Result<Option<(usize, String)>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some((self.line, l)));
            }
        }
        Ok(None)
    }
}

fn parse<T: for<'de> Deserialize<'de>>(line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CoreError::Parse { line, msg: e.to_string() })
}

fn read_header<R: BufRead>(lines: &mut Lines<R>) -> Result<(DatasetInfo, Option<serde_json::Value>)> {
    let (line, text) = lines
        .next_nonempty()?
        .ok_or(CoreError::Parse { line: 1, msg: "missing header record".into() })?;
    let h: Header = parse(line, &text)?;
    if h.version != FORMAT_VERSION {
        return Err(CoreError::Schema { line, msg: format!("unsupported format version {}", h.version) });
    }
    Ok((DatasetInfo { d_s: h.d_s, d_a: h.d_a, env: h.env }, h.manifest))
}

fn build_trajectory(
    line: usize,
    info: &DatasetInfo,
    states: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    seed: u64,
) -> Result<Trajectory> {
    let schema = |msg: String| CoreError::Schema { line, msg };
    if let Some(s) = states.iter().find(|s| s.len() != info.d_s) {
        return Err(schema(format!("state of dimension {} in a d_s={} dataset", s.len(), info.d_s)));
    }
    if let Some(a) = actions.iter().find(|a| a.len() != info.d_a) {
        return Err(schema(format!("action of dimension {} in a d_a={} dataset", a.len(), info.d_a)));
    }
    let meta = EpisodeMeta { seed, env: info.env.clone() };
    Trajectory::new(
        states.into_iter().map(StateVec).collect(),
        actions.into_iter().map(ActionVec).collect(),
        meta,
    )
    .map_err(|e| schema(e.to_string()))
}

/// Reads a paired dataset. Records may appear in any order; both roles of
/// every `pair_id` must be present.
pub fn read_paired<R: BufRead>(r: R) -> Result<(PairedDataset, Option<serde_json::Value>)> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    let (info, manifest) = read_header(&mut lines)?;
    let mut order: Vec<u64> = Vec::new();
    let mut slots: HashMap<u64, [Option<LabeledTrajectory>; 2]> = HashMap::new();
    let mut last_line = lines.line;
    while let Some((line, text)) = lines.next_nonempty()? {
        last_line = line;
        let rec: PairedRecord = parse(line, &text)?;
        let schema = |msg: String| CoreError::Schema { line, msg };
        let traj = build_trajectory(line, &info, rec.states, rec.actions, rec.seed)?;
        if rec.prompt.z > 1 || rec.per_step_ok.iter().any(|&b| b > 1) {
            return Err(schema("z and per_step_ok entries must be 0 or 1".into()));
        }
        if rec.prompt.goal.len() != info.d_s {
            return Err(schema(format!("goal of dimension {} in a d_s={} dataset", rec.prompt.goal.len(), info.d_s)));
        }
        let prompt = PromptSpec::new(rec.prompt.z == 1, rec.prompt.boxes, StateVec(rec.prompt.goal))
            .map_err(|e| schema(e.to_string()))?;
        let ok = rec.per_step_ok.iter().map(|&b| b == 1).collect();
        let lt = LabeledTrajectory::from_parts(traj, prompt, ok).map_err(|e| schema(e.to_string()))?;
        let slot = slots.entry(rec.pair_id).or_insert_with(|| {
            order.push(rec.pair_id);
            [None, None]
        });
        let idx = match rec.pair_role {
            PairRole::Orig => 0,
            PairRole::Copy => 1,
        };
        if slot[idx].replace(lt).is_some() {
            return Err(schema(format!("duplicate {:?} record for pair {}", rec.pair_role, rec.pair_id)));
        }
    }
    let mut data = PairedDataset::new(info);
    for id in order {
        let [orig, copy] = slots.remove(&id).expect("pair id recorded");
        match (orig, copy) {
            (Some(o), Some(c)) => data.push(o, c).map_err(|e| CoreError::Schema {
                line: last_line,
                msg: format!("pair {id}: {e}"),
            })?,
            _ => {
                return Err(CoreError::Schema { line: last_line, msg: format!("pair {id} is incomplete") });
            }
        }
    }
    Ok((data, manifest))
}

pub fn read_raw<R: BufRead>(r: R) -> Result<(RawDataset, Option<serde_json::Value>)> {
    let mut lines = Lines { inner: r.lines(), line: 0 };
    let (info, manifest) = read_header(&mut lines)?;
    let mut trajectories = Vec::new();
    while let Some((line, text)) = lines.next_nonempty()? {
        let rec: RawRecord = parse(line, &text)?;
        trajectories.push(build_trajectory(line, &info, rec.states, rec.actions, rec.seed)?);
    }
    Ok((RawDataset { info, trajectories }, manifest))
}

pub fn load_paired(path: &Path) -> Result<(PairedDataset, Option<serde_json::Value>)> {
    read_paired(BufReader::new(File::open(path)?))
}

pub fn load_raw(path: &Path) -> Result<(RawDataset, Option<serde_json::Value>)> {
    read_raw(BufReader::new(File::open(path)?))
}
