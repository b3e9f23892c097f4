//! Plain-text trajectory files and the CSV artifacts written by the tools.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ctp_core::data::{build_windows, parse_observations, BiasReport, BiasThresholds, RawObservation, SceneWindow};
use ctp_core::forge::{AgentLabel, Behavior, Context, FRAME_ID_STEP};
use ctp_core::harness::{LogRecord, MetricsRecord};

use crate::error::{in_file, io_err, CtpError, Result};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `bytes` to `path`; a failed write removes whatever was created.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let r = fs::File::create(path).and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()));
    if let Err(e) = r {
        let _ = fs::remove_file(path);
        return Err(io_err(path)(e));
    }
    Ok(())
}

pub fn read_observations(path: &Path) -> Result<Vec<RawObservation>> {
    parse_observations(&read_text(path)?).map_err(in_file(path))
}

/// One `frame_id pedestrian_id x y` row per observation, six decimals.
pub fn observations_text(obs: &[RawObservation]) -> String {
    let mut s = String::with_capacity(obs.len() * 32);
    for o in obs {
        s.push_str(&format!("{} {} {:.6} {:.6}\n", o.frame_id, o.pedestrian_id, o.x, o.y));
    }
    s
}

/// Flattens windows back into rows. Frame `t` of a window gets id
/// `start_frame + t * FRAME_ID_STEP`.
pub fn windows_to_observations(windows: &[SceneWindow]) -> Vec<RawObservation> {
    let mut out = Vec::new();
    for w in windows {
        for t in 0..ctp_core::data::WINDOW_LEN {
            for (i, id) in w.pedestrian_ids.iter().enumerate() {
                let p = w.track_of(i)[t];
                out.push(RawObservation {
                    frame_id: w.start_frame + t as i64 * FRAME_ID_STEP,
                    pedestrian_id: *id,
                    x: p[0],
                    y: p[1],
                });
            }
        }
    }
    out.sort_by_key(|o| (o.frame_id, o.pedestrian_id));
    out
}

/// Trajectory files named by `path`: the file itself, or every `*.txt`
/// directly inside a directory, sorted by name.
pub fn scene_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(io_err(path))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CtpError::Input {
            path: path.to_path_buf(),
            detail: "no .txt trajectory files found".into(),
        });
    }
    Ok(files)
}

pub fn scene_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Windows of one trajectory file; the scene is named after the file stem.
pub fn load_scene(path: &Path, stride: usize) -> Result<Vec<SceneWindow>> {
    let obs = read_observations(path)?;
    build_windows(&scene_name(path), &obs, stride).map_err(in_file(path))
}

/// Windows of every file under `path`, in file-name order.
pub fn load_windows(path: &Path, stride: usize) -> Result<Vec<SceneWindow>> {
    let mut out = Vec::new();
    for f in scene_files(path)? {
        out.extend(load_scene(&f, stride)?);
    }
    Ok(out)
}

pub const LABELS_HEADER: [&str; 4] = ["agent_id", "scene", "context", "behavior"];

pub fn labels_csv(labels: &[AgentLabel]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABELS_HEADER)?;
    for l in labels {
        w.write_record([
            l.agent_id.to_string(),
            l.scene.to_string(),
            l.context.name().to_string(),
            l.behavior.name().to_string(),
        ])?;
    }
    finish(w)
}

pub fn parse_labels(text: &str) -> Result<Vec<AgentLabel>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    expect_header(r.headers()?, &LABELS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CtpError::Format(format!("labels row {}: bad {what}", i + 2));
        let context = match &rec[2] {
            "A" => Context::A,
            "B" => Context::B,
            _ => return Err(bad("context")),
        };
        let behavior = [Behavior::Left, Behavior::Right, Behavior::Obstacle, Behavior::Gather]
            .into_iter()
            .find(|b| b.name() == &rec[3])
            .ok_or_else(|| bad("behavior"))?;
        out.push(AgentLabel {
            agent_id: rec[0].parse().map_err(|_| bad("agent_id"))?,
            scene: rec[1].parse().map_err(|_| bad("scene"))?,
            context,
            behavior,
        });
    }
    Ok(out)
}

pub const BIAS_HEADER: [&str; 5] = ["environment", "neighbors_avg", "parallel_avg", "meet_avg", "gather_avg"];

fn thresholds_line(t: &BiasThresholds) -> String {
    format!(
        "# thresholds neighbor_radius={} parallel_heading_deg={} parallel_distance={} meet_far={} meet_near={} gather_distance={} parallel_min_frames={}",
        t.neighbor_radius,
        t.parallel_heading_deg,
        t.parallel_distance,
        t.meet_far,
        t.meet_near,
        t.gather_distance,
        t.parallel_min_frames
    )
}

fn parse_thresholds(line: &str) -> Result<BiasThresholds> {
    let body = line
        .strip_prefix("# thresholds")
        .ok_or_else(|| CtpError::Format("bias report must start with a `# thresholds` line".into()))?;
    let mut t = BiasThresholds::default();
    for kv in body.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CtpError::Format(format!("bad threshold entry `{kv}`")))?;
        let num = || v.parse::<f64>().map_err(|_| CtpError::Format(format!("bad threshold value `{kv}`")));
        match k {
            "neighbor_radius" => t.neighbor_radius = num()?,
            "parallel_heading_deg" => t.parallel_heading_deg = num()?,
            "parallel_distance" => t.parallel_distance = num()?,
            "meet_far" => t.meet_far = num()?,
            "meet_near" => t.meet_near = num()?,
            "gather_distance" => t.gather_distance = num()?,
            "parallel_min_frames" => {
                t.parallel_min_frames = v.parse().map_err(|_| CtpError::Format(format!("bad threshold value `{kv}`")))?
            }
            _ => return Err(CtpError::Format(format!("unknown threshold `{k}`"))),
        }
    }
    Ok(t)
}

/// Reports sharing one threshold set; the thresholds go in a leading
/// `#` comment line.
pub fn bias_csv(reports: &[BiasReport]) -> Result<Vec<u8>> {
    let th = reports.first().map(|r| r.thresholds).unwrap_or_default();
    if reports.iter().any(|r| r.thresholds != th) {
        return Err(CtpError::Format("bias reports with different thresholds cannot share a file".into()));
    }
    let mut out = thresholds_line(&th).into_bytes();
    out.push(b'\n');
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BIAS_HEADER)?;
    for r in reports {
        w.write_record([
            r.environment.clone(),
            r.neighbors_avg.to_string(),
            r.parallel_avg.to_string(),
            r.meet_avg.to_string(),
            r.gather_avg.to_string(),
        ])?;
    }
    finish(w)
}

pub fn parse_bias(text: &str) -> Result<Vec<BiasReport>> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let thresholds = parse_thresholds(first.trim_end())?;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    expect_header(r.headers()?, &BIAS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| CtpError::Format(format!("bias row {}: bad {}", i + 3, BIAS_HEADER[k])))
        };
        out.push(BiasReport {
            environment: rec[0].to_string(),
            neighbors_avg: num(1)?,
            parallel_avg: num(2)?,
            meet_avg: num(3)?,
            gather_avg: num(4)?,
            thresholds,
            pedestrians: 0,
        });
    }
    Ok(out)
}

pub const METRICS_HEADER: [&str; 7] = ["scene", "split", "k", "ade", "fde", "seed", "sec_per_window"];

pub fn metrics_csv(records: &[MetricsRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in records {
        w.write_record([
            r.scene.clone(),
            r.split.clone(),
            r.k.to_string(),
            r.ade.to_string(),
            r.fde.to_string(),
            r.seed.to_string(),
            r.sec_per_window.to_string(),
        ])?;
    }
    finish(w)
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    expect_header(r.headers()?, &METRICS_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |k: usize| CtpError::Format(format!("metrics row {}: bad {}", i + 2, METRICS_HEADER[k]));
        out.push(MetricsRecord {
            scene: rec[0].to_string(),
            split: rec[1].to_string(),
            k: rec[2].parse().map_err(|_| bad(2))?,
            ade: rec[3].parse().map_err(|_| bad(3))?,
            fde: rec[4].parse().map_err(|_| bad(4))?,
            seed: rec[5].parse().map_err(|_| bad(5))?,
            sec_per_window: rec[6].parse().map_err(|_| bad(6))?,
        });
    }
    Ok(out)
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_ade,val_fde";

pub fn log_line(r: &LogRecord) -> String {
    format!("{},{},{},{}", r.epoch, r.train_loss, r.val_ade, r.val_fde)
}

pub fn parse_log(text: &str) -> Result<Vec<LogRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(CtpError::Format(format!("training log must start with `{LOG_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || CtpError::Format(format!("log line {}: `{l}`", i + 2));
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LogRecord {
                epoch: f[0].parse().map_err(|_| bad())?,
                train_loss: f[1].parse().map_err(|_| bad())?,
                val_ade: f[2].parse().map_err(|_| bad())?,
                val_fde: f[3].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

fn expect_header(found: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if found.iter().ne(want.iter().copied()) {
        return Err(CtpError::Format(format!(
            "expected header `{}`, found `{}`",
            want.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CtpError::Format(e.to_string()))
}
