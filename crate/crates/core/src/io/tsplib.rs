use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::routing::{default_cvrp_slots, Instance, Metric, Point, ProblemKind};

/// A parsed benchmark file plus its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub name: String,
    pub comment: Option<String>,
    pub dimension: usize,
    pub edge_weight_type: String,
    /// Known optimal (or best known) objective in file units.
    pub optimum: Option<f64>,
    /// Original coordinates with the rounded metric.
    pub instance: Instance,
}

/// Optimal objectives of the benchmark instances used in the evaluation
/// tables, matched case-insensitively by name.
pub const REFERENCE_OPTIMA: &[(&str, f64)] = &[
    ("eil51", 426.0),
    ("berlin52", 7542.0),
    ("st70", 675.0),
    ("eil76", 538.0),
    ("pr76", 108159.0),
    ("rat99", 1211.0),
    ("kroA100", 21282.0),
    ("kroB100", 22141.0),
    ("kroC100", 20749.0),
    ("kroD100", 21294.0),
    ("kroE100", 22068.0),
    ("rd100", 7910.0),
    ("eil101", 629.0),
    ("lin105", 14379.0),
    ("pr107", 44303.0),
    ("pr124", 59030.0),
    ("bier127", 118282.0),
    ("ch130", 6110.0),
    ("pr136", 96772.0),
    ("pr144", 58537.0),
    ("ch150", 6528.0),
    ("kroA150", 26524.0),
    ("kroB150", 26130.0),
    ("pr152", 73682.0),
    ("u159", 42080.0),
    ("rat195", 2323.0),
    ("d198", 15780.0),
    ("kroA200", 29368.0),
    ("kroB200", 29437.0),
    ("ts225", 126643.0),
    ("tsp225", 3916.0),
    ("pr226", 80369.0),
    ("gil262", 2378.0),
    ("pr264", 49135.0),
    ("a280", 2579.0),
    ("pr299", 48191.0),
    ("X-n101-k25", 27591.0),
    ("X-n106-k14", 26362.0),
    ("X-n110-k13", 14971.0),
    ("X-n115-k10", 12747.0),
    ("X-n120-k6", 13332.0),
    ("X-n125-k30", 55539.0),
    ("X-n129-k18", 28940.0),
    ("X-n134-k13", 10916.0),
    ("X-n139-k10", 13590.0),
    ("X-n143-k7", 15700.0),
    ("X-n148-k46", 43448.0),
    ("X-n153-k22", 21220.0),
    ("X-n157-k13", 16876.0),
    ("X-n162-k11", 14138.0),
    ("X-n167-k10", 20557.0),
    ("X-n172-k51", 45607.0),
    ("X-n176-k26", 47812.0),
    ("X-n181-k23", 25569.0),
    ("X-n186-k15", 24145.0),
    ("X-n190-k8", 16980.0),
    ("X-n195-k51", 44225.0),
    ("X-n200-k36", 58578.0),
];

pub fn reference_optimum(name: &str) -> Option<f64> {
    REFERENCE_OPTIMA
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|&(_, v)| v)
}

struct Raw {
    headers: BTreeMap<String, (usize, String)>,
    sections: BTreeMap<String, (usize, Vec<(usize, Vec<String>)>)>,
    last_line: usize,
}

fn tokenize(text: &str) -> Result<Raw> {
    let mut headers = BTreeMap::new();
    let mut sections: BTreeMap<String, (usize, Vec<(usize, Vec<String>)>)> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        let first = line.split_whitespace().next().unwrap_or("");
        let keyword = first.trim_end_matches(':');
        if keyword.ends_with("_SECTION") {
            if sections.contains_key(keyword) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate {keyword}"),
                });
            }
            sections.insert(keyword.to_string(), (line_no, Vec::new()));
            current = Some(keyword.to_string());
            continue;
        }
        let looks_numeric = first
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit() || c == '-' || c == '+' || c == '.');
        if let (Some(sec), true) = (&current, looks_numeric) {
            let tokens = line.split_whitespace().map(str::to_string).collect();
            sections.get_mut(sec).expect("open section").1.push((line_no, tokens));
            continue;
        }
        match line.split_once(':') {
            Some((k, v)) => {
                current = None;
                headers.insert(k.trim().to_ascii_uppercase(), (line_no, v.trim().to_string()));
            }
            None => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unexpected line `{line}`"),
                })
            }
        }
    }
    Ok(Raw {
        headers,
        sections,
        last_line,
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{tok}`"),
    })
}

impl Raw {
    fn header(&self, key: &str) -> Option<&str> {
        self.headers.get(key).map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<(usize, &str)> {
        self.headers
            .get(key)
            .map(|(l, v)| (*l, v.as_str()))
            .ok_or_else(|| Error::Parse {
                line: self.last_line,
                message: format!("missing {key}"),
            })
    }

    fn section(&self, name: &str) -> Result<&(usize, Vec<(usize, Vec<String>)>)> {
        self.sections.get(name).ok_or_else(|| Error::Parse {
            line: self.last_line,
            message: format!("missing {name}"),
        })
    }

    /// Rows of an `id value...` section, reordered by node id (1-based).
    fn indexed<T: std::str::FromStr + Clone>(&self, name: &str, dim: usize, width: usize) -> Result<Vec<Vec<T>>> {
        let (start, rows) = self.section(name)?;
        if rows.len() != dim {
            let line = rows.get(dim).map_or(rows.last().map_or(*start, |r| r.0), |r| r.0);
            return Err(Error::Parse {
                line,
                message: format!("{name} has {} entries but DIMENSION is {dim}", rows.len()),
            });
        }
        let mut out: Vec<Option<Vec<T>>> = vec![None; dim];
        for (line, tokens) in rows {
            if tokens.len() != width + 1 {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("expected {} fields, found {}", width + 1, tokens.len()),
                });
            }
            let id: usize = parse_num(&tokens[0], *line, "node id")?;
            if id == 0 || id > dim {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("node id {id} outside 1..={dim}"),
                });
            }
            if out[id - 1].is_some() {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("node id {id} repeated"),
                });
            }
            let vals = tokens[1..]
                .iter()
                .map(|t| parse_num(t, *line, "value"))
                .collect::<Result<Vec<T>>>()?;
            out[id - 1] = Some(vals);
        }
        Ok(out.into_iter().map(|v| v.expect("all ids seen")).collect())
    }

    fn common(&self, expected: ProblemKind) -> Result<(String, usize, Vec<Point>)> {
        let name = self.header("NAME").unwrap_or("unnamed").to_string();
        let type_ok = match self.header("TYPE") {
            None => true,
            Some(t) => {
                let t = t.to_ascii_uppercase();
                match expected {
                    ProblemKind::Tsp => t == "TSP",
                    ProblemKind::Cvrp => t == "CVRP",
                }
            }
        };
        if !type_ok {
            return Err(Error::UnsupportedProblemType(self.header("TYPE").unwrap_or("").to_string()));
        }
        let ewt = self.header("EDGE_WEIGHT_TYPE").unwrap_or("");
        if !ewt.eq_ignore_ascii_case("EUC_2D") {
            return Err(Error::UnsupportedEdgeWeight(ewt.to_string()));
        }
        let (line, dim) = self.require("DIMENSION")?;
        let dim: usize = parse_num(dim, line, "DIMENSION")?;
        if dim == 0 {
            return Err(Error::Parse {
                line,
                message: "DIMENSION must be positive".into(),
            });
        }
        let coords = self
            .indexed::<f64>("NODE_COORD_SECTION", dim, 2)?
            .into_iter()
            .map(|v| [v[0], v[1]])
            .collect();
        Ok((name, dim, coords))
    }

    fn optimum(&self, name: &str) -> Option<f64> {
        reference_optimum(name).or_else(|| {
            let comment = self.header("COMMENT")?;
            let idx = comment.find("Optimal value:")?;
            let rest = &comment[idx + "Optimal value:".len()..];
            let num: String = rest
                .trim_start()
                .chars()
                .take_while(|c| c.is_ascii_digit() || *c == '.')
                .collect();
            num.parse().ok()
        })
    }
}

/// Parses a TSPLIB `TYPE: TSP` file with `EUC_2D` weights.
pub fn parse_tsplib(text: &str) -> Result<BenchmarkInstance> {
    let raw = tokenize(text)?;
    let (name, dim, coords) = raw.common(ProblemKind::Tsp)?;
    let instance = Instance::tsp(coords)?.with_metric(Metric::RoundedEuclidean);
    Ok(BenchmarkInstance {
        optimum: raw.optimum(&name),
        comment: raw.header("COMMENT").map(str::to_string),
        edge_weight_type: "EUC_2D".into(),
        dimension: dim,
        name,
        instance,
    })
}

/// Padded length for a benchmark CVRP: the usual default, widened so that
/// at least twice the trivial vehicle lower bound fits.
pub fn benchmark_slots(n: usize, total_demand: u64, capacity: u32) -> usize {
    let lower = total_demand.div_ceil(u64::from(capacity)) as usize;
    default_cvrp_slots(n).max(n + 2 * lower.max(1))
}

/// Parses a CVRPLIB `TYPE: CVRP` file with `EUC_2D` weights and one depot.
pub fn parse_cvrplib(text: &str) -> Result<BenchmarkInstance> {
    let raw = tokenize(text)?;
    let (name, dim, coords) = raw.common(ProblemKind::Cvrp)?;
    let (line, cap) = raw.require("CAPACITY")?;
    let capacity: u32 = parse_num(cap, line, "CAPACITY")?;
    let demands: Vec<u32> = raw
        .indexed::<u32>("DEMAND_SECTION", dim, 1)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    let (start, rows) = raw.section("DEPOT_SECTION")?;
    let mut depots = Vec::new();
    for (line, tokens) in rows {
        for t in tokens {
            let id: i64 = parse_num(t, *line, "depot id")?;
            if id < 0 {
                break;
            }
            if id == 0 || id as usize > dim {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("depot id {id} outside 1..={dim}"),
                });
            }
            depots.push(id as usize - 1);
        }
    }
    let depot = match depots.as_slice() {
        [d] => *d,
        [] => {
            return Err(Error::Parse {
                line: *start,
                message: "no depot listed".into(),
            })
        }
        _ => return Err(Error::UnsupportedProblemType("multi-depot CVRP".into())),
    };
    let total: u64 = demands.iter().map(|&d| u64::from(d)).sum();
    let slots = benchmark_slots(dim - 1, total, capacity.max(1));
    let instance = Instance::cvrp(coords, demands, capacity, depot, slots)?.with_metric(Metric::RoundedEuclidean);
    Ok(BenchmarkInstance {
        optimum: raw.optimum(&name),
        comment: raw.header("COMMENT").map(str::to_string),
        edge_weight_type: "EUC_2D".into(),
        dimension: dim,
        name,
        instance,
    })
}

/// Dispatches on the `TYPE` header (TSP unless it says CVRP).
pub fn parse_benchmark(text: &str) -> Result<BenchmarkInstance> {
    let raw = tokenize(text)?;
    match raw.header("TYPE").map(str::to_ascii_uppercase).as_deref() {
        Some("TSP") => parse_tsplib(text),
        Some("CVRP") => parse_cvrplib(text),
        Some(other) => Err(Error::UnsupportedProblemType(other.to_string())),
        None if raw.headers.contains_key("CAPACITY") => parse_cvrplib(text),
        None => parse_tsplib(text),
    }
}

pub fn load_benchmark(path: &Path) -> Result<BenchmarkInstance> {
    parse_benchmark(&std::fs::read_to_string(path)?)
}

impl BenchmarkInstance {
    /// Serializes back into TSPLIB/CVRPLIB text.
    pub fn to_text(&self) -> String {
        let inst = &self.instance;
        let mut out = String::new();
        let _ = writeln!(out, "NAME : {}", self.name);
        if let Some(c) = &self.comment {
            let _ = writeln!(out, "COMMENT : {c}");
        }
        let kind = match inst.kind() {
            ProblemKind::Tsp => "TSP",
            ProblemKind::Cvrp => "CVRP",
        };
        let _ = writeln!(out, "TYPE : {kind}");
        let _ = writeln!(out, "DIMENSION : {}", inst.num_locations());
        let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
        if inst.kind() == ProblemKind::Cvrp {
            let _ = writeln!(out, "CAPACITY : {}", inst.capacity());
        }
        out.push_str("NODE_COORD_SECTION\n");
        for (i, [x, y]) in inst.coords().iter().enumerate() {
            let _ = writeln!(out, "{} {x} {y}", i + 1);
        }
        if let Some(depot) = inst.depot() {
            out.push_str("DEMAND_SECTION\n");
            for (i, d) in inst.demands().iter().enumerate() {
                let _ = writeln!(out, "{} {d}", i + 1);
            }
            let _ = writeln!(out, "DEPOT_SECTION\n{}\n-1", depot + 1);
        }
        out.push_str("EOF\n");
        out
    }
}
