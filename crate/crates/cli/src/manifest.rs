//! Run manifest: what a command read and wrote, with content hashes.
//!
//! Manifests carry no timestamps or absolute output paths, so repeating a
//! run with the same inputs reproduces the manifest byte for byte.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn slash(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Hashes of every file under `root` (or of `root` itself), sorted by path.
/// Paths are given relative to `base`.
fn hash_tree(root: &Path, base: &Path, skip: Option<&Path>) -> Result<Vec<FileHash>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        if !entry.file_type().is_file() || Some(entry.path()) == skip {
            continue;
        }
        let rel = entry.path().strip_prefix(base).unwrap_or(entry.path());
        out.push(FileHash {
            path: slash(rel),
            sha256: sha256_file(entry.path())?,
        });
    }
    Ok(out)
}

/// Collects the description of one command run.
#[derive(Debug)]
pub struct Run {
    command: String,
    seed: Option<u64>,
    parameters: Value,
    inputs: Vec<(PathBuf, String)>,
}

impl Run {
    /// `parameters` is the serialised argument struct; its `out` field is
    /// dropped because it only names where the artifacts go.
    pub fn new(command: &str, seed: Option<u64>, parameters: impl Serialize) -> Self {
        let mut parameters = serde_json::to_value(parameters).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut parameters {
            map.remove("out");
        }
        Run {
            command: command.to_string(),
            seed,
            parameters,
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push((path.to_path_buf(), slash(path)));
        self
    }

    /// Records `path` under `label` instead of its own name.
    pub fn input_named(&mut self, path: &Path, label: &str) -> &mut Self {
        self.inputs.push((path.to_path_buf(), label.to_string()));
        self
    }

    pub fn inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> &mut Self {
        for p in paths {
            self.input(p);
        }
        self
    }

    fn manifest(&self, outputs: Vec<FileHash>) -> Result<Manifest> {
        let mut inputs = Vec::new();
        for (p, label) in &self.inputs {
            if p.is_dir() {
                for mut h in hash_tree(p, p, None)? {
                    h.path = format!("{label}/{}", h.path);
                    inputs.push(h);
                }
            } else {
                inputs.push(FileHash {
                    path: label.clone(),
                    sha256: sha256_file(p)?,
                });
            }
        }
        Ok(Manifest {
            tool: "ethnocode",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            seed: self.seed,
            parameters: self.parameters.clone(),
            inputs,
            outputs,
        })
    }

    /// Writes `manifest.json` into the output directory `dir`, covering
    /// every file below it.
    pub fn finish_dir(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let outputs = hash_tree(dir, dir, Some(&path))?;
        write_json(&path, &self.manifest(outputs)?)
    }

    /// Writes `<file>.manifest.json` next to a single output file.
    pub fn finish_file(&self, file: &Path) -> Result<()> {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let outputs = vec![FileHash {
            path: name.clone(),
            sha256: sha256_file(file)?,
        }];
        write_json(
            &file.with_file_name(format!("{name}.{MANIFEST_FILE}")),
            &self.manifest(outputs)?,
        )
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
