//! The pipeline commands. Each writes its outputs with a manifest block and
//! returns what it wrote, so the binary and the tests share one code path.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use reachavoid_core::dataset::{load_paired, load_raw, save_paired, save_raw, RawDataset};
use reachavoid_core::envs::{random_rollout, CardioEnv, Env};
use reachavoid_core::relabel::{build_paired_dataset, verify_paired, RelabelReport, Relabeler};
use reachavoid_core::seed::{child_rng, derive};
use reachavoid_core::traj::DatasetInfo;
use reachavoid_core::StateVec;
use reachavoid_eval::{
    cardio_case_study, evaluate, mean, std_dev, CaseReport, CaseStudyConfig, EvalConfig, EvalReport, ModelPolicy,
    Policy, RandomPolicy,
};
use reachavoid_nn::checkpoint::load_model;
use reachavoid_nn::model::prompt_len;
use reachavoid_nn::Model;
use reachavoid_train::{resume_loop, train_loop, CheckpointRecord, TrainError, TrainOutput, MODEL_FILE, SELECTED_FILE};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{build_env, EnvKind, EnvSection, RunConfig};
use crate::error::{CliError, Result};

pub const RAW_FILE: &str = "raw.jsonl";
pub const PAIRED_FILE: &str = "paired.jsonl";
pub const RELABEL_REPORT_FILE: &str = "relabel_report.json";
pub const TRAIN_DIR: &str = "train";
pub const EVAL_DIR: &str = "eval";
pub const STUDY_DIR: &str = "study";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.csv";
pub const CASE_REPORT_FILE: &str = "case_report.json";
pub const CASE_SUMMARY_FILE: &str = "case_summary.txt";

pub fn manifest(cfg: &RunConfig, command: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("tool".into(), json!("reachavoid"));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m.insert("command".into(), json!(command));
    m.insert("config_sha256".into(), json!(cfg.hash()));
    m.insert("seed".into(), json!(cfg.seed));
    m
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn check_schema(info: &DatasetInfo, env: &dyn Env, path: &Path) -> Result<()> {
    let spec = env.spec();
    if info.env != spec.env_id || info.d_s != spec.d_s || info.d_a != spec.d_a {
        return Err(CliError::Config(format!(
            "{} holds {} data (d_s {}, d_a {}) but the config describes {} (d_s {}, d_a {})",
            path.display(),
            info.env,
            info.d_s,
            info.d_a,
            spec.env_id,
            spec.d_s,
            spec.d_a
        )));
    }
    Ok(())
}

pub fn cmd_gen_data(cfg: &RunConfig, out_path: &Path) -> Result<RawDataset> {
    let mut env = build_env(&cfg.env)?;
    let trajectories = random_rollout(env.as_mut(), derive(cfg.seed, "gen-data", 0), cfg.data.steps)?;
    let spec = env.spec();
    let data = RawDataset { info: DatasetInfo { d_s: spec.d_s, d_a: spec.d_a, env: spec.env_id.clone() }, trajectories };
    let mut m = manifest(cfg, "gen-data");
    m.insert("env".into(), json!(spec.env_id));
    m.insert("steps".into(), json!(cfg.data.steps));
    ensure_parent(out_path)?;
    save_raw(out_path, &data, Some(&Value::Object(m)))?;
    log::info!("wrote {} trajectories ({} steps) to {}", data.trajectories.len(), cfg.data.steps, out_path.display());
    Ok(data)
}

pub fn cmd_relabel(cfg: &RunConfig, in_path: &Path, out_path: &Path, report_path: &Path, verify: bool) -> Result<RelabelReport> {
    let env = build_env(&cfg.env)?;
    let (raw, _) = load_raw(in_path)?;
    check_schema(&raw.info, env.as_ref(), in_path)?;
    let relabeler = Relabeler::new(cfg.relabel.clone(), env.spec().state_bounds.clone(), &raw.trajectories)?;
    let (paired, report) = build_paired_dataset(&relabeler, &raw.trajectories, raw.info.clone(), derive(cfg.seed, "relabel", 0))?;
    if verify {
        verify_paired(&paired)?;
        log::info!("pairing invariant verified on {} pairs", paired.len());
    }
    let m = Value::Object(manifest(cfg, "relabel"));
    ensure_parent(out_path)?;
    save_paired(out_path, &paired, Some(&m))?;
    write_json(report_path, &json!({ "manifest": m, "report": report }))?;
    log::info!(
        "relabeled {} trajectories: {} pairs kept, {} dropped, first-pass z balance {:.3}",
        report.input_trajectories,
        report.retained_pairs,
        report.dropped_pairs,
        report.first_pass_z_balance
    );
    Ok(report)
}

fn eval_error(e: reachavoid_eval::EvalError) -> TrainError {
    TrainError::Eval(e.to_string())
}

/// Trains from scratch, or from the checkpoint after `resume_from` steps.
pub fn cmd_train(cfg: &RunConfig, data_path: &Path, run_dir: &Path, resume_from: Option<usize>) -> Result<TrainOutput> {
    let env = build_env(&cfg.env)?;
    let (data, _) = load_paired(data_path)?;
    check_schema(&data.info, env.as_ref(), data_path)?;
    let env_section = cfg.env.clone();
    let make = move || build_env(&env_section);
    let eval_cfg = EvalConfig { n_episodes: cfg.train.eval_episodes, seed: derive(cfg.seed, "train-eval", 0), fixed_boxes: None };
    let mut evaluator = |m: &Model, _step: usize| -> reachavoid_train::Result<(f64, f64)> {
        let r = evaluate(&make, &mut ModelPolicy(m), &eval_cfg).map_err(eval_error)?;
        Ok((r.sr, r.mnc))
    };
    let train_seed = derive(cfg.seed, "train", 0);
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let out = match resume_from {
        Some(step) => {
            let text = fs::read_to_string(&manifest_path)?;
            let prev: Value = serde_json::from_str(&text)?;
            if prev["config_sha256"] != json!(cfg.hash()) {
                return Err(CliError::Config(format!("{} was trained with a different config", run_dir.display())));
            }
            resume_loop(run_dir, step, &data, &cfg.train, train_seed, &mut evaluator)?.1
        }
        None => {
            fs::create_dir_all(run_dir)?;
            let mut m = manifest(cfg, "train");
            m.insert("config".into(), serde_json::to_value(cfg)?);
            write_json(&manifest_path, &Value::Object(m))?;
            let mut model = Model::new(cfg.model.clone(), &mut child_rng(cfg.seed, "model-init", 0))?;
            log::info!("training {} parameters for {} steps", model.num_params(), cfg.train.total_steps);
            train_loop(&mut model, &data, &cfg.train, train_seed, Some(run_dir), &mut evaluator)?
        }
    };
    if let Some(sel) = &out.selected {
        log::info!("selected step {}: sr {:.3} mnc {:.4}", sel.step, sel.sr, sel.mnc);
    }
    Ok(out)
}

/// A model file, a checkpoint directory, or a run directory holding a
/// selection.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    if path.join(MODEL_FILE).is_file() {
        return Ok(path.join(MODEL_FILE));
    }
    let sel = path.join(SELECTED_FILE);
    if sel.is_file() {
        let rec: CheckpointRecord = serde_json::from_str(&fs::read_to_string(&sel)?)?;
        let rel = rec.path.ok_or_else(|| CliError::Runtime(format!("{} names no checkpoint directory", sel.display())))?;
        return Ok(path.join(rel).join(MODEL_FILE));
    }
    Err(CliError::Config(format!("no checkpoint at {}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    None,
    BoxWidth(Vec<f64>),
    NAvoid(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub sr: f64,
    pub mnc: f64,
}

/// One evaluation setting aggregated over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReport {
    pub axis: String,
    pub value: f64,
    pub policy: String,
    pub n_boxes: usize,
    pub prompt_len: usize,
    pub seeds: Vec<SeedResult>,
    pub sr_mean: f64,
    pub sr_std: f64,
    pub mnc_mean: f64,
    pub mnc_std: f64,
    pub reports: Vec<EvalReport>,
}

fn apply_setting(env: &EnvSection, axis: &str, value: f64) -> Result<EnvSection> {
    let mut env = env.clone();
    match (axis, env.kind) {
        ("default", _) => {}
        ("box_width", EnvKind::Reach) => env.reach.box_width = value,
        ("box_width", EnvKind::Maze) => env.maze.avoid_radius = 0.5 * value,
        ("n_avoid", EnvKind::Reach) => env.reach.n_avoid = value as usize,
        ("n_avoid", EnvKind::Maze) => env.maze.n_avoid = value as usize,
        (_, EnvKind::Cardio) => {
            return Err(CliError::Config(format!("the {axis} sweep applies to continuous environments only")));
        }
        _ => unreachable!("unknown sweep axis"),
    }
    Ok(env)
}

fn eval_setting(cfg: &RunConfig, model: Option<&Model>, env: &EnvSection, axis: &str, value: f64, seeds: usize) -> Result<SettingReport> {
    let probe = build_env(env)?;
    let spec = probe.spec().clone();
    let n_boxes = probe.avoid_boxes().len().max(match env.kind {
        EnvKind::Reach => env.reach.n_avoid,
        EnvKind::Maze => env.maze.n_avoid,
        EnvKind::Cardio => 0,
    });
    if let Some(m) = model {
        let mc = m.config();
        if mc.d_s != spec.d_s || mc.d_a != spec.d_a {
            return Err(CliError::Runtime(format!(
                "checkpoint has d_s {}, d_a {} but env {} has d_s {}, d_a {}",
                mc.d_s, mc.d_a, spec.env_id, spec.d_s, spec.d_a
            )));
        }
        if m.max_states(n_boxes) == 0 {
            return Err(CliError::Runtime(format!("a prompt with {n_boxes} boxes does not fit max_seq_len {}", mc.max_seq_len)));
        }
    }
    let make = || build_env(env);
    let mut results = Vec::with_capacity(seeds);
    let mut reports = Vec::with_capacity(seeds);
    for i in 0..seeds {
        let seed = derive(cfg.seed, "eval", i as u64);
        let ecfg = EvalConfig { n_episodes: cfg.eval.n_episodes, seed, fixed_boxes: None };
        let mut policy: Box<dyn Policy> = match model {
            Some(m) => Box::new(ModelPolicy(m)),
            None => Box::new(RandomPolicy),
        };
        let r = evaluate(&make, policy.as_mut(), &ecfg)?;
        log::info!("{axis}={value} seed {i}: sr {:.3} mnc {:.4}", r.sr, r.mnc);
        results.push(SeedResult { seed, sr: r.sr, mnc: r.mnc });
        reports.push(r);
    }
    let srs: Vec<f64> = results.iter().map(|r| r.sr).collect();
    let mncs: Vec<f64> = results.iter().map(|r| r.mnc).collect();
    Ok(SettingReport {
        axis: axis.into(),
        value,
        policy: if model.is_some() { "model".into() } else { "random".into() },
        n_boxes,
        prompt_len: prompt_len(n_boxes),
        sr_mean: mean(&srs),
        sr_std: std_dev(&srs),
        mnc_mean: mean(&mncs),
        mnc_std: std_dev(&mncs),
        seeds: results,
        reports,
    })
}

fn setting_file(axis: &str, value: f64) -> String {
    format!("eval_{axis}_{value}.json")
}

/// Evaluates one checkpoint (or the random policy when `checkpoint` is
/// `None`) on every sweep setting without retraining. Writes one JSON report
/// per setting and a CSV summary into `out_dir`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, sweep: &Sweep, seeds: usize, out_dir: &Path) -> Result<Vec<SettingReport>> {
    let model = match checkpoint {
        Some(p) => Some(load_model(&resolve_checkpoint(p)?)?),
        None => None,
    };
    let settings: Vec<(&str, f64)> = match sweep {
        Sweep::None => vec![("default", 0.0)],
        Sweep::BoxWidth(ws) => ws.iter().map(|&w| ("box_width", w)).collect(),
        Sweep::NAvoid(ns) => ns.iter().map(|&n| ("n_avoid", n as f64)).collect(),
    };
    if seeds == 0 || settings.is_empty() {
        return Err(CliError::Config("eval needs at least one seed and one setting".into()));
    }
    let mut envs = Vec::with_capacity(settings.len());
    for &(axis, value) in &settings {
        envs.push(apply_setting(&cfg.env, axis, value)?);
    }
    fs::create_dir_all(out_dir)?;
    let m = Value::Object(manifest(cfg, "eval"));
    let mut out = Vec::with_capacity(settings.len());
    let mut csv = csv::Writer::from_path(out_dir.join(EVAL_SUMMARY_FILE))?;
    csv.write_record(["axis", "value", "seed", "sr", "mnc"])?;
    for (&(axis, value), env) in settings.iter().zip(&envs) {
        let rep = eval_setting(cfg, model.as_ref(), env, axis, value, seeds)?;
        for s in &rep.seeds {
            csv.write_record([axis.to_string(), value.to_string(), s.seed.to_string(), s.sr.to_string(), s.mnc.to_string()])?;
        }
        let mut body = serde_json::to_value(&rep)?;
        body["manifest"] = m.clone();
        write_json(&out_dir.join(setting_file(axis, value)), &body)?;
        out.push(rep);
    }
    csv.flush()?;
    write_json(&out_dir.join(format!("{EVAL_SUMMARY_FILE}.manifest.json")), &m)?;
    Ok(out)
}

/// `bits` as a state of `n` genes.
pub fn parse_state(bits: &str, n: usize, what: &str) -> Result<StateVec> {
    if bits.chars().count() != n {
        return Err(CliError::Config(format!("{what} must have {n} bits, got {}", bits.chars().count())));
    }
    StateVec::from_bitstring(bits).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

pub fn cmd_cardio_study(
    cfg: &RunConfig,
    checkpoint: &Path,
    avoid_state: Option<&str>,
    start: Option<&str>,
    out_dir: &Path,
) -> Result<CaseReport> {
    if cfg.env.kind != EnvKind::Cardio {
        return Err(CliError::Config("cardio-study needs env.kind = \"cardio\"".into()));
    }
    let mut cardio = cfg.env.cardio.clone();
    let n = cardio.load_network()?.n_genes();
    if let Some(s) = start {
        parse_state(s, n, "start state")?;
        cardio.start = Some(s.to_string());
    }
    if cardio.start.is_none() {
        return Err(CliError::Config("cardio-study needs a fixed start state (--start or env.cardio.start)".into()));
    }
    let avoid_override = avoid_state.map(|s| parse_state(s, n, "avoid state")).transpose()?;
    let model = load_model(&resolve_checkpoint(checkpoint)?)?;
    if model.config().d_s != n {
        return Err(CliError::Runtime(format!("checkpoint has d_s {} but the network has {n} genes", model.config().d_s)));
    }
    let make = || -> reachavoid_core::Result<Box<dyn Env>> { Ok(Box::new(CardioEnv::new(cardio.clone())?)) };
    let study = CaseStudyConfig {
        n_episodes: cfg.study.n_episodes,
        seed: derive(cfg.seed, "study", 0),
        epsilon: cfg.study.epsilon,
        avoid_override,
    };
    let report = cardio_case_study(&make, &mut ModelPolicy(&model), &study)?;
    let m = Value::Object(manifest(cfg, "cardio-study"));
    write_json(&out_dir.join(CASE_REPORT_FILE), &json!({ "manifest": m, "report": report }))?;
    let mut f = fs::File::create(out_dir.join(CASE_SUMMARY_FILE))?;
    f.write_all(case_summary(&report).as_bytes())?;
    Ok(report)
}

pub fn case_summary(r: &CaseReport) -> String {
    let bits = |s: &StateVec| s.to_bitstring();
    let mut out = String::new();
    match &r.avoid_state {
        Some(s) => out.push_str(&format!("avoid state: {}{}\n", bits(s), if r.from_override { " (override)" } else { "" })),
        None => out.push_str("avoid state: none (no intermediate state visited)\n"),
    }
    out.push_str(&format!("{:<12}{:>8}{:>10}{:>10}{:>12}{:>10}\n", "phase", "sr", "visited", "length", "collapsed", "in-state"));
    let mut row = |name: &str, p: &reachavoid_eval::PhaseStats| {
        out.push_str(&format!(
            "{:<12}{:>8.3}{:>10.3}{:>10.2}{:>12.2}{:>10.2}\n",
            name, p.sr, p.percent_visited, p.mean_length, p.mean_collapsed_length, p.mean_steps_in_state
        ));
    };
    row("no avoid", &r.before);
    if let Some(a) = &r.after {
        row("with avoid", a);
    }
    out
}

/// Flattens every eval report in `reports_dir` into rows of
/// `(run, axis, value, seed, sr, mnc)`. Returns the number of rows.
pub fn cmd_export_metrics(reports_dir: &Path, out_csv: &Path) -> Result<usize> {
    let mut files: Vec<PathBuf> = match fs::read_dir(reports_dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "json")).collect(),
        Err(_) => {
            log::warn!("no reports directory at {}", reports_dir.display());
            Vec::new()
        }
    };
    files.sort();
    ensure_parent(out_csv)?;
    let mut w = csv::Writer::from_path(out_csv)?;
    w.write_record(["run", "axis", "value", "seed", "sr", "mnc"])?;
    let mut rows = 0;
    for path in files {
        let Ok(rep) = serde_json::from_str::<SettingReport>(&fs::read_to_string(&path)?) else {
            continue;
        };
        let run = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for s in &rep.seeds {
            w.write_record([run.clone(), rep.axis.clone(), rep.value.to_string(), s.seed.to_string(), s.sr.to_string(), s.mnc.to_string()])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
