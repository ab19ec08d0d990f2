use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command};

/// Named random streams, each derived from the master seed.
pub const STREAMS: [&str; 14] = [
    "dgp", "test", "oracle", "run", "train", "split", "anchors", "init", "shuffle", "dropout", "folds", "cv-fold",
    "lipschitz", "gradcheck",
];

/// Everything needed to repeat a run: the invocation with absolute paths,
/// the resolved configuration and the files it produced.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub streams: Vec<String>,
    pub invocation: Cli,
    pub resolved: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(cli: &Cli, resolved: serde_json::Value, outputs: Vec<PathBuf>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cli.global.seed,
            streams: STREAMS.iter().map(|s| s.to_string()).collect(),
            invocation: cli.clone(),
            resolved,
            outputs,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

/// Default manifest location for a run whose main output is `out`.
pub fn manifest_for_file(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// `dir/name.csv` → `dir/name.<suffix>`
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Files written by a command; removed again unless the run commits.
#[derive(Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    created_dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created_dirs.extend(missing.into_iter().rev());
        Ok(())
    }

    /// Registers `path` for cleanup and creates its parent directory.
    pub fn file(&mut self, path: &Path) -> Result<PathBuf> {
        if let Some(parent) = path.parent() {
            self.dir(parent)?;
        }
        if !self.files.iter().any(|f| f == path) {
            self.files.push(path.to_path_buf());
        }
        Ok(path.to_path_buf())
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            if f.exists() {
                log::info!("removing partial output {}", f.display());
                let _ = fs::remove_file(f);
            }
        }
        for d in self.created_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

fn abs(p: &mut PathBuf) -> Result<()> {
    *p = std::path::absolute(&*p).with_context(|| format!("resolving path '{}'", p.display()))?;
    Ok(())
}

fn abs_opt(p: &mut Option<PathBuf>) -> Result<()> {
    p.as_mut().map_or(Ok(()), abs)
}

/// Rewrites every path flag as an absolute path so manifests replay from
/// any working directory.
pub fn resolve_paths(cli: &mut Cli) -> Result<()> {
    abs_opt(&mut cli.global.manifest)?;
    match &mut cli.command {
        Command::Simulate(a) => abs(&mut a.out),
        Command::Train(a) => {
            abs(&mut a.x)?;
            abs(&mut a.y)?;
            abs(&mut a.out)
        }
        Command::Predict(a) => {
            abs(&mut a.model)?;
            abs(&mut a.x)?;
            abs(&mut a.out)?;
            abs_opt(&mut a.weights)
        }
        Command::Evaluate(a) => {
            abs(&mut a.model)?;
            abs(&mut a.x)?;
            abs_opt(&mut a.truth)?;
            abs_opt(&mut a.y)?;
            abs(&mut a.out)
        }
        Command::Gridsearch(a) => {
            abs(&mut a.x)?;
            abs(&mut a.y)?;
            abs(&mut a.out)
        }
        Command::Cv(a) => {
            abs(&mut a.x)?;
            abs(&mut a.y)?;
            abs(&mut a.out)
        }
        Command::BaselineGfr(a) => {
            abs(&mut a.x)?;
            abs(&mut a.y)?;
            abs(&mut a.x_test)?;
            abs_opt(&mut a.truth)?;
            abs(&mut a.out)
        }
        Command::Benchmark(a) => abs(&mut a.out),
        Command::Sensitivity(a) => abs(&mut a.out),
        Command::Audit(a) => abs(&mut a.out),
        Command::Rerun(a) => abs(&mut a.manifest),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(manifest_for_file(Path::new("/a/m.json")), Path::new("/a/m.manifest.json"));
        assert_eq!(sibling(Path::new("/a/p.csv"), "report.json"), Path::new("/a/p.report.json"));
    }

    #[test]
    fn uncommitted_outputs_are_removed() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("x/y");
        let f = nested.join("out.csv");
        {
            let mut out = Outputs::default();
            out.file(&f).unwrap();
            fs::write(&f, "1").unwrap();
        }
        assert!(!f.exists() && !dir.path().join("x").exists());
        let mut out = Outputs::default();
        out.file(&f).unwrap();
        fs::write(&f, "1").unwrap();
        out.commit();
        assert!(f.exists());
    }
}
