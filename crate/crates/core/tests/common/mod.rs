#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use subtrend::config::RunConfig;
use subtrend::pipeline::{cmd_analyze, cmd_ingest, cmd_train, Scope, Task};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let path = entry.unwrap().path();
        let target = to.join(path.file_name().unwrap());
        if path.is_dir() {
            copy_dir(&path, &target);
        } else {
            fs::copy(&path, &target).unwrap();
        }
    }
}

/// A scratch copy of the fixture corpus, training data and config.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for name in ["corpus", "protocol"] {
            copy_dir(&fixtures().join(name), &dir.path().join(name));
        }
        for name in ["fixture.conf", "sentiment_train.csv", "abuse_train.csv"] {
            fs::copy(fixtures().join(name), dir.path().join(name)).unwrap();
        }
        Self { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn config(&self) -> RunConfig {
        RunConfig::load(self.path().join("fixture.conf")).unwrap()
    }

    pub fn out(&self) -> PathBuf {
        self.path().join("out")
    }

    /// ingest, both trainings, corpus analysis and one film analysis per film.
    pub fn run_all(&self) -> RunConfig {
        let config = self.config();
        let manifest = cmd_ingest(&config).unwrap();
        cmd_train(&config, Task::Sentiment, None).unwrap();
        cmd_train(&config, Task::Abuse, None).unwrap();
        cmd_analyze(&config, &Scope::Corpus).unwrap();
        for film in &manifest.films {
            cmd_analyze(&config, &Scope::Film(film.film_id.clone())).unwrap();
        }
        config
    }
}

/// Every file below `root`, relative and sorted.
pub fn list_files(root: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

/// Drops the manifest line carrying the run timestamp.
pub fn without_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"generated_at_unix\""))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Compares run outputs with the stored goldens; `SUBTREND_BLESS=1` rewrites them.
/// Returns the list of mismatching files.
pub fn compare_with_golden(out: &Path) -> Vec<String> {
    let golden = fixtures().join("golden");
    let bless = std::env::var("SUBTREND_BLESS").is_ok_and(|v| v == "1");
    if bless {
        let _ = fs::remove_dir_all(&golden);
    }
    let mut bad = Vec::new();
    let produced = list_files(out);
    for rel in &produced {
        let mut text = fs::read_to_string(out.join(rel)).unwrap();
        if rel.ends_with("manifest.json") {
            text = without_timestamp(&text);
        }
        let target = golden.join(rel);
        if bless {
            fs::create_dir_all(target.parent().unwrap()).unwrap();
            fs::write(&target, &text).unwrap();
        } else if fs::read_to_string(&target).ok().as_deref() != Some(text.as_str()) {
            bad.push(rel.display().to_string());
        }
    }
    if !bless && golden.exists() && list_files(&golden) != produced {
        bad.push("golden file set differs from produced set".into());
    }
    bad
}
