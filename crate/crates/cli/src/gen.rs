use std::path::{Path, PathBuf};

use clap::Args;
use routeimprove::io::cache::{cache_file_name, write_instances};
use routeimprove::io::{generate_set, GeneratorSpec};

use crate::failure::CliResult;
use crate::manifest::RunManifest;
use crate::problems::KindArg;

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Tsp)]
    pub kind: KindArg,
    /// Customers (cities for TSP).
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub capacity: Option<u32>,
    /// Padded CVRP solution length.
    #[arg(long)]
    pub slots: Option<usize>,
    /// Output directory; defaults to `<data-dir>/instances`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(a: GenArgs, data_dir: &Path) -> CliResult<()> {
    let spec = GeneratorSpec {
        kind: a.kind.into(),
        n: a.n,
        capacity: a.capacity,
        slots: a.slots,
    };
    spec.validate()?;
    let dir = a.out.unwrap_or_else(|| data_dir.join("instances"));
    let name = cache_file_name(&spec, a.count, a.seed);
    let path = dir.join(&name);
    write_instances(&path, &generate_set(&spec, a.count, a.seed))?;
    let mut m = RunManifest::new("gen", &serde_json::json!({ "spec": spec, "count": a.count }), a.seed)?;
    m.outputs.push(path.clone());
    let stem = name.trim_end_matches(".jsonl");
    m.write(&dir.join(format!("{stem}.manifest.json")))?;
    println!("{}", path.display());
    Ok(())
}
