//! Atomic output files, rollback on failure, and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tempfile::NamedTempFile;

/// Files written by one command. Dropping the set without calling
/// [`OutputSet::commit`] deletes everything it wrote.
#[derive(Debug, Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` and any missing parents, remembering the ones it made.
    pub fn create_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        missing.reverse();
        self.created_dirs.extend(missing);
        Ok(())
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let parent = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        self.create_dir(&parent)?;
        let mut tmp = NamedTempFile::new_in(&parent)
            .with_context(|| format!("creating temporary file in {}", parent.display()))?;
        tmp.write_all(bytes)
            .with_context(|| format!("writing {}", path.display()))?;
        tmp.persist(path)
            .with_context(|| format!("renaming into {}", path.display()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn write_str(&mut self, path: &Path, text: &str) -> Result<()> {
        self.write(path, text.as_bytes())
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.written.iter().rev() {
            let _ = fs::remove_file(p);
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Wall-clock stage timer.
#[derive(Debug, Default)]
pub struct Timings {
    stages: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.stages.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.stages
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    /// Records the outputs of `set`, writes the manifest to `path` and
    /// commits everything.
    pub fn finish(mut self, mut set: OutputSet, path: &Path, timings: Timings) -> Result<Vec<PathBuf>> {
        self.outputs = set.paths().iter().map(|p| p.display().to_string()).collect();
        self.timings_ms = timings.into_map();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        set.write_str(path, &text)?;
        Ok(set.commit())
    }
}

/// `<file>.manifest.json` next to a single output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_else(|| "output".into());
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b");
        let file = nested.join("x.txt");
        {
            let mut set = OutputSet::new();
            set.write_str(&file, "hi").unwrap();
            assert!(file.exists());
        }
        assert!(!file.exists());
        assert!(!dir.path().join("a").exists());
    }

    #[test]
    fn committed_outputs_stay() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("x.txt");
        let mut set = OutputSet::new();
        set.write_str(&file, "hi").unwrap();
        assert_eq!(set.commit(), vec![file.clone()]);
        assert_eq!(fs::read_to_string(&file).unwrap(), "hi");
    }

    #[test]
    fn manifest_name() {
        assert_eq!(
            manifest_path_for(Path::new("out/tracks.txt")),
            PathBuf::from("out/tracks.txt.manifest.json")
        );
    }
}
