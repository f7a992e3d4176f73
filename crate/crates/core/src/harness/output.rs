//! File emission: metrics and per-trial CSVs plus a run manifest with a
//! config hash and per-file checksums. All output is deterministic —
//! timestamps and wall-clock fields never reach disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::sweep::SweepTable;
use super::HarnessError;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct EmittedFiles {
    pub metrics: PathBuf,
    pub trials: PathBuf,
    pub trajectories: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Shortest round-trip decimal; infinities print as `inf`.
fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn metrics_csv(table: &SweepTable) -> String {
    let mut out = String::from("axis,value,seeds,safe_pct,mean_goal_time,mean_backup_pct\n");
    for row in &table.rows {
        let goal = row.mean_goal_time.map_or("inf".into(), fmt_f64);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            table.axis,
            fmt_f64(row.value),
            row.seeds,
            fmt_f64(row.safe_pct),
            goal,
            fmt_f64(row.mean_backup_pct),
        );
    }
    out
}

fn trials_csv(table: &SweepTable) -> String {
    let mut out =
        String::from("axis,value,seed,safe,goal_reached,goal_time,backup_ratio,steps\n");
    for (row, trials) in table.rows.iter().zip(&table.trials) {
        for t in trials {
            let goal = t.goal_time.map_or("inf".into(), fmt_f64);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                table.axis,
                fmt_f64(row.value),
                t.seed,
                t.safe,
                t.goal_reached,
                goal,
                fmt_f64(t.backup_ratio),
                t.steps,
            );
        }
    }
    out
}

fn trajectory_csv(log: &super::trial::TrajectoryLog) -> String {
    let state_dim = log.final_state.len();
    let control_dim = log.controls.first().map_or(0, |c| c.len());
    let mut out = String::from("time");
    for i in 0..state_dim {
        let _ = write!(out, ",x{i}");
    }
    for i in 0..control_dim {
        let _ = write!(out, ",u{i}");
    }
    out.push_str(",backup_active,committed_switch\n");
    for i in 0..log.times.len() {
        let _ = write!(out, "{}", fmt_f64(log.times[i]));
        for v in &log.states[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        for v in &log.controls[i] {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        let _ = writeln!(out, ",{},{}", log.backup_active[i], log.committed_switch[i]);
    }
    // terminal state: no control applied, policy flags carry over
    let _ = write!(out, "{}", fmt_f64(log.final_time));
    for v in &log.final_state {
        let _ = write!(out, ",{}", fmt_f64(*v));
    }
    for _ in 0..control_dim {
        out.push(',');
    }
    let _ = writeln!(
        out,
        ",{},{}",
        log.backup_active.last().copied().unwrap_or(false),
        log.committed_switch.last().copied().unwrap_or(0),
    );
    out
}

/// Write metrics.csv, trials.csv, optional trajectory files and
/// manifest.toml into `dir`, creating it if needed.
pub fn emit_outputs(
    dir: &Path,
    cfg: &RunConfig,
    table: &SweepTable,
) -> Result<EmittedFiles, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut files: Vec<(String, String)> = vec![
        ("metrics.csv".to_string(), metrics_csv(table)),
        ("trials.csv".to_string(), trials_csv(table)),
    ];

    let mut trajectories = vec![];
    for (row, trials) in table.rows.iter().zip(&table.trials) {
        for t in trials {
            if let Some(log) = &t.trajectory {
                let name = format!("traj_{}_{}.csv", fmt_f64(row.value), t.seed);
                trajectories.push(dir.join(&name));
                files.push((name, trajectory_csv(log)));
            }
        }
    }

    for (name, contents) in &files {
        write_file(&dir.join(name), contents)?;
    }

    let config_text = cfg.to_toml_string();
    let mut seeds: Vec<u64> = vec![];
    if let Some(sweep) = &cfg.sweep {
        seeds = sweep.seeds.clone();
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "artifact_version = {:?}", ARTIFACT_VERSION);
    let _ = writeln!(manifest, "config_sha256 = {:?}", sha256_hex(config_text.as_bytes()));
    let _ = writeln!(manifest, "seeds = {seeds:?}");
    let _ = writeln!(manifest, "config = '''\n{config_text}'''");
    let _ = writeln!(manifest, "\n[checksums]");
    for (name, contents) in &files {
        let _ = writeln!(manifest, "{:?} = {:?}", name, sha256_hex(contents.as_bytes()));
    }
    let manifest_path = dir.join("manifest.toml");
    write_file(&manifest_path, &manifest)?;

    Ok(EmittedFiles {
        metrics: dir.join("metrics.csv"),
        trials: dir.join("trials.csv"),
        trajectories,
        manifest: manifest_path,
    })
}
