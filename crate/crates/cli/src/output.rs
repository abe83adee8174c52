//! Output directory, run manifest and trajectory directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pfno_core::field::{read_meta, snapshot_read, snapshot_write, write_meta};
use pfno_core::metrics::{Frame, TrajectoryRecord};
use pfno_core::training::{physics_entries, physics_from_entries};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

/// Files under `dir`, relative and sorted.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fn walk(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(root.join(rel))? {
            let entry = entry?;
            let rel = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                walk(root, &rel, out)?;
            } else {
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, Path::new(""), &mut out)?;
    out.sort();
    Ok(out)
}

/// Root of all outputs of one run.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn dir(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(rel);
        fs::create_dir_all(&p)?;
        Ok(p)
    }

    /// Config echo, input digests and the digest of every output file.
    pub fn write_manifest(
        &self,
        command: &str,
        config: &[(String, String)],
        inputs: &[(String, String)],
    ) -> Result<(), CliError> {
        let mut text = format!("# run manifest\ncommand={command}\n");
        for (k, v) in config {
            text.push_str(&format!("{k}={v}\n"));
        }
        for (k, v) in inputs {
            text.push_str(&format!("input.{k}={v}\n"));
        }
        for rel in list_files(&self.root)? {
            if rel == Path::new(MANIFEST) {
                continue;
            }
            let name = rel.to_string_lossy().replace('\\', "/");
            text.push_str(&format!("output.{name}={}\n", file_digest(&self.root.join(&rel))?));
        }
        fs::write(self.root.join(MANIFEST), text)?;
        Ok(())
    }
}

fn frame_name(step: usize) -> String {
    format!("step_{step:07}.snap")
}

/// Writes one frame as a snapshot whose sidecar carries the grid length,
/// step, time and physical parameters.
pub fn write_frame(dir: &Path, frame: &Frame, record: &TrajectoryRecord) -> Result<(), CliError> {
    let path = dir.join(frame_name(frame.step));
    let mut channels = vec![frame.phase.clone()];
    channels.extend(frame.temperature.clone());
    snapshot_write(&channels, &path)?;
    let mut meta: Vec<(&str, String)> = vec![
        ("length", frame.phase.grid().length().to_string()),
        ("step", frame.step.to_string()),
        ("time", frame.time.to_string()),
    ];
    meta.extend(physics_entries(&record.physics));
    write_meta(&path, &meta)?;
    Ok(())
}

pub fn write_trajectory(dir: &Path, record: &TrajectoryRecord) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for f in &record.frames {
        write_frame(dir, f, record)?;
    }
    Ok(())
}

pub fn read_trajectory(dir: &Path) -> Result<TrajectoryRecord, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("trajectory directory {} does not exist", dir.display())));
    }
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "snap"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(CliError::Config(format!("no snapshots in {}", dir.display())));
    }
    let mut physics = None;
    let mut frames = Vec::with_capacity(names.len());
    for path in names {
        let meta: BTreeMap<String, String> = read_meta(&path)?;
        let p = physics_from_entries(&meta).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match physics {
            None => physics = Some(p),
            Some(q) if q != p => {
                return Err(CliError::Config(format!("{}: physical parameters differ within trajectory", path.display())))
            }
            _ => {}
        }
        let num = |k: &str| -> Result<f64, CliError> {
            meta.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Config(format!("{}: missing or bad {k}", path.display())))
        };
        let step = num("step")? as usize;
        let time = num("time")?;
        let mut ch = snapshot_read(&path)?.into_iter();
        let phase = ch.next().expect("at least one channel");
        frames.push(Frame { step, time, phase, temperature: ch.next() });
    }
    Ok(TrajectoryRecord { physics: physics.expect("non-empty"), frames })
}
