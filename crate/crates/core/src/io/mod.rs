//! Instance generation, initial solutions, benchmark files, the exact
//! small-instance oracle and result persistence.

pub mod cache;
mod exact;
mod generate;
mod initial;
mod results;
mod scale;
mod tsplib;

pub use exact::{exact_tsp, EXACT_MAX_NODES};
pub use generate::{capacity_for, generate_set, GeneratorSpec};
pub use initial::{initial_nearest_insertion, initial_random};
pub use results::{gap_pct, read_results, write_results, ResultRecord};
pub use scale::{scale_to_unit, UnitScaling};
pub use tsplib::{
    benchmark_slots, load_benchmark, parse_benchmark, parse_cvrplib, parse_tsplib, reference_optimum,
    BenchmarkInstance, REFERENCE_OPTIMA,
};
