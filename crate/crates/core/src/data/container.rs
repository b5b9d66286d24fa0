//! Multi-task directory: `manifest.toml` plus one `task_<id>.txt` per task.
//!
//! ```toml
//! d = 5
//! tasks = ["0", "1"]
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_sparse_text, write_sparse_text, MultiTaskDataset, Provenance, TaskDataset};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub d: usize,
    pub tasks: Vec<String>,
}

fn task_file(id: &str) -> String {
    format!("task_{id}.txt")
}

pub fn read_multitask_dir(dir: &Path) -> Result<MultiTaskDataset> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", mpath.display())))?;
    let mut tasks = Vec::with_capacity(manifest.tasks.len());
    for id in &manifest.tasks {
        let path = dir.join(task_file(id));
        let s = load_sparse_text(&path, Some(manifest.d))?;
        tasks.push(TaskDataset::new(
            id.clone(),
            s.x,
            s.labels,
            Provenance::new(path.display().to_string(), None),
        )?);
    }
    let d = MultiTaskDataset::new(tasks)?;
    if d.dim != manifest.d {
        return Err(Error::DimensionMismatch {
            expected: manifest.d,
            got: d.dim,
        });
    }
    Ok(d)
}

pub fn write_multitask_dir(dir: &Path, data: &MultiTaskDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        d: data.dim,
        tasks: data.tasks.iter().map(|t| t.task_id.clone()).collect(),
    };
    let mpath = dir.join(MANIFEST);
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    for t in &data.tasks {
        write_sparse_text(&dir.join(task_file(&t.task_id)), t.x.view(), &t.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_multitask, SynthSpec};

    #[test]
    fn directory_roundtrip() {
        let data = synth_multitask(&SynthSpec {
            tasks: 3,
            n: 8,
            d: 4,
            similarity: 0.5,
            noise: 0.2,
            seed: 1,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_multitask_dir(dir.path(), &data).unwrap();
        let back = read_multitask_dir(dir.path()).unwrap();
        assert_eq!(back.dim, 4);
        for (a, b) in data.tasks.iter().zip(&back.tasks) {
            assert_eq!(a.task_id, b.task_id);
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_multitask_dir(dir.path()), Err(Error::Io { .. })));
    }
}
