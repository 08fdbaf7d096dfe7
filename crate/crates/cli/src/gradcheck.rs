use std::path::PathBuf;

use clap::{Args, ValueEnum};
use routeimprove::net::gradcheck::{check, GradCheckConfig};
use routeimprove::net::{NormMode, Role};
use serde::Serialize;

use crate::failure::{CliResult, Failure};
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::problems::KindArg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Eval,
    Train,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Tsp)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 8)]
    pub d_model: usize,
    /// Sequence length of the random probe inputs.
    #[arg(long, default_value_t = 6)]
    pub len: usize,
    /// Sequences per batch.
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Denominator floor of the relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub floor: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

pub fn run(a: GradcheckArgs) -> CliResult<()> {
    let modes: &[NormMode] = match a.mode {
        ModeArg::Eval => &[NormMode::Eval],
        ModeArg::Train => &[NormMode::Train],
        ModeArg::Both => &[NormMode::Eval, NormMode::Train],
    };
    let mut worst: f64 = 0.0;
    let mut summary = Vec::new();
    for &mode in modes {
        for role in [Role::Actor, Role::Critic] {
            let cfg = GradCheckConfig {
                kind: a.kind.into(),
                d_model: a.d_model,
                len: a.len,
                batch: a.batch,
                mode,
                seed: a.seed,
                step: a.step,
                floor: a.floor,
                inject_fault: a.inject_fault,
            };
            let report = check(role, &cfg)?;
            for t in &report.tensors {
                let flag = if t.max_rel_err <= a.tol { "ok" } else { "FAIL" };
                println!(
                    "{role:?} {mode:?} {:<24} entries {:>5} kinks {:>3} max rel {:.3e} max abs {:.3e} {flag}",
                    t.name, t.entries, t.kinks, t.max_rel_err, t.max_abs_err
                );
            }
            worst = worst.max(report.max_rel_err());
            summary.push(serde_json::json!({
                "role": format!("{role:?}"),
                "mode": format!("{mode:?}"),
                "max_rel_err": report.max_rel_err(),
            }));
        }
    }
    println!("max relative error {worst:.3e} (tolerance {:.1e})", a.tol);
    if let Some(out) = &a.out {
        let mut m = RunManifest::new("gradcheck", &a, a.seed)?;
        m.config["results"] = serde_json::Value::Array(summary);
        m.write(&out.join(MANIFEST_FILE))?;
    }
    if worst.is_finite() && worst <= a.tol {
        Ok(())
    } else {
        Err(Failure::numeric(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {:.1e}",
            a.tol
        )))
    }
}
