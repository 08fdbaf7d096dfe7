//! Line-delimited JSON instance files and the on-disk instance cache.
//! The directory layout is described in `docs/data-layout.md`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::generate::{generate_set, GeneratorSpec};
use crate::error::{Error, Result};
use crate::routing::{Instance, ProblemKind};

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(inst.validated()?);
    }
    Ok(out)
}

/// File name of a generated set inside the cache directory.
pub fn cache_file_name(spec: &GeneratorSpec, count: usize, seed: u64) -> String {
    match spec.kind {
        ProblemKind::Tsp => format!("tsp{}-seed{seed}-count{count}.jsonl", spec.n),
        ProblemKind::Cvrp => format!(
            "cvrp{}-cap{}-slots{}-seed{seed}-count{count}.jsonl",
            spec.n,
            spec.capacity(),
            spec.slots()
        ),
    }
}

/// Loads a generated set from `dir/instances`, generating and storing it
/// first when missing.
pub fn cached_set(dir: &Path, spec: &GeneratorSpec, count: usize, seed: u64) -> Result<(Vec<Instance>, PathBuf)> {
    let path = dir.join("instances").join(cache_file_name(spec, count, seed));
    if path.exists() {
        let set = read_instances(&path)?;
        if set.len() == count {
            return Ok((set, path));
        }
        log::warn!("ignoring stale cache file {}", path.display());
    }
    let set = generate_set(spec, count, seed);
    write_instances(&path, &set)?;
    Ok((set, path))
}
