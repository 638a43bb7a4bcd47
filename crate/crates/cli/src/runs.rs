//! Run-directory layout and IO.
//!
//! A run directory holds `run.json` (the resolved config), one combined CSV
//! per path under `paths/`, the per-path metadata index `paths.json`,
//! aggregate `stats.json`, stage reports, and finally `manifest.json` —
//! written last as the completion marker.

use serde::{Deserialize, Serialize};
use sklab_core::path::DiscretePath;
use sklab_core::simulate::SimOutput;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct PathMeta {
    pub index: usize,
    pub file: String,
    pub tau_v: Option<usize>,
    pub boundary_step_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub created_unix_ms: u128,
    pub outputs: Vec<String>,
}

pub fn path_file_name(index: usize) -> String {
    format!("paths/path_{index:05}.csv")
}

/// Combined per-path CSV: t, z, y, w coordinates then per-face local-time
/// increments.
pub fn write_path_csv(out: &SimOutput, w: &mut impl Write) -> std::io::Result<()> {
    let j = out.z_path.dim();
    let f = out.face_count;
    write!(w, "t")?;
    for d in 1..=j {
        write!(w, ",z{d}")?;
    }
    for d in 1..=j {
        write!(w, ",y{d}")?;
    }
    for d in 1..=j {
        write!(w, ",w{d}")?;
    }
    for i in 1..=f {
        write!(w, ",l{i}")?;
    }
    writeln!(w)?;
    for k in 0..out.z_path.len() {
        write!(w, "{}", out.z_path.time(k))?;
        for v in out.z_path.value(k) {
            write!(w, ",{v}")?;
        }
        for v in out.y_path.value(k) {
            write!(w, ",{v}")?;
        }
        for v in out.w_path.value(k) {
            write!(w, ",{v}")?;
        }
        for i in 0..f {
            write!(w, ",{}", out.local_time_increment(k, i))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_path_csv(
    r: impl BufRead,
    meta: &PathMeta,
    dim: usize,
    faces: usize,
) -> Result<SimOutput, CliError> {
    let mut times = Vec::new();
    let mut zs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut ls = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| CliError::input(format!("read error: {e}")))?;
        if lineno == 0 {
            let cols = line.split(',').count();
            if cols != 1 + 3 * dim + faces {
                return Err(CliError::input(format!(
                    "path csv has {cols} columns, expected {}",
                    1 + 3 * dim + faces
                )));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let fields = fields
            .map_err(|e| CliError::input(format!("path csv line {}: {e}", lineno + 1)))?;
        times.push(fields[0]);
        zs.extend_from_slice(&fields[1..1 + dim]);
        ys.extend_from_slice(&fields[1 + dim..1 + 2 * dim]);
        ws.extend_from_slice(&fields[1 + 2 * dim..1 + 3 * dim]);
        ls.extend_from_slice(&fields[1 + 3 * dim..]);
    }
    let mk = |vals: Vec<f64>| {
        DiscretePath::new(times.clone(), vals, dim)
            .map_err(|e| CliError::input(format!("bad path grid: {e}")))
    };
    let mut local_times = vec![0.0; faces];
    for (i, v) in ls.iter().enumerate() {
        local_times[i % faces] += v;
    }
    Ok(SimOutput {
        path_index: meta.index,
        z_path: mk(zs)?,
        y_path: mk(ys)?,
        w_path: mk(ws)?,
        local_time_increments: ls,
        face_count: faces,
        local_times,
        tau_v: meta.tau_v,
        tau_v_approximate: meta.tau_v.is_some(),
        boundary_step_count: meta.boundary_step_count,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::internal(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::internal(format!("write {}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("cannot parse {}: {e}", path.display())))
}

/// Writes the ensemble into `dir` and returns the list of files written.
pub fn write_ensemble(dir: &Path, ensemble: &[SimOutput]) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir.join("paths"))
        .map_err(|e| CliError::internal(format!("create {}: {e}", dir.display())))?;
    let mut outputs = Vec::new();
    let mut metas = Vec::new();
    for out in ensemble {
        let rel = path_file_name(out.path_index);
        let file = dir.join(&rel);
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(&file)
                .map_err(|e| CliError::internal(format!("create {}: {e}", file.display())))?,
        );
        write_path_csv(out, &mut w)
            .map_err(|e| CliError::internal(format!("write {}: {e}", file.display())))?;
        outputs.push(rel.clone());
        metas.push(PathMeta {
            index: out.path_index,
            file: rel,
            tau_v: out.tau_v,
            boundary_step_count: out.boundary_step_count,
        });
    }
    write_json(&dir.join("paths.json"), &metas)?;
    outputs.push("paths.json".into());
    Ok(outputs)
}

pub fn read_ensemble(dir: &Path, dim: usize, faces: usize) -> Result<Vec<SimOutput>, CliError> {
    let metas: Vec<PathMeta> = read_json(&dir.join("paths.json"))?;
    metas
        .iter()
        .map(|meta| {
            let file = dir.join(&meta.file);
            let reader = std::io::BufReader::new(std::fs::File::open(&file).map_err(|e| {
                CliError::input(format!("cannot open {}: {e}", file.display()))
            })?);
            read_path_csv(reader, meta, dim, faces)
        })
        .collect()
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn now_unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
