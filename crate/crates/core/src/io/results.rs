use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance_id: String,
    pub method: String,
    /// Step limit T.
    pub steps: usize,
    pub seed: u64,
    pub cost: f64,
    pub reference: Option<f64>,
    pub gap_pct: Option<f64>,
    pub runtime_ms: f64,
    #[serde(default)]
    pub note: String,
}

/// Percentage gap of `cost` above `reference`.
pub fn gap_pct(cost: f64, reference: f64) -> f64 {
    100.0 * (cost - reference) / reference
}

impl ResultRecord {
    pub fn new(instance_id: impl Into<String>, method: impl Into<String>, steps: usize, seed: u64, cost: f64) -> Self {
        ResultRecord {
            instance_id: instance_id.into(),
            method: method.into(),
            steps,
            seed,
            cost,
            reference: None,
            gap_pct: None,
            runtime_ms: 0.0,
            note: String::new(),
        }
    }

    pub fn with_reference(mut self, reference: Option<f64>) -> Self {
        self.reference = reference;
        self.gap_pct = reference.map(|r| gap_pct(self.cost, r));
        self
    }
}

/// CSV with a header row, records in input order.
pub fn write_results<W: Write>(w: W, records: &[ResultRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}
