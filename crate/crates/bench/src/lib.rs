//! Shared fixtures for the criterion benches.

use dpl_core::{generate, parse_rules, validate_program, Dataset, Program, SynthSpec};

pub const BENCHMARK_PROGRAM: &str = include_str!("../../cli/fixtures/benchmark.dpl");

/// The standard synthetic benchmark at `n` instances with its rule program.
pub fn benchmark(n: usize) -> (Program, Dataset) {
    let ds = generate(&SynthSpec { n, ..SynthSpec::standard_benchmark(0) }).expect("benchmark spec is valid");
    let rules = parse_rules(BENCHMARK_PROGRAM).expect("fixture parses");
    let program = validate_program(rules, ds.schema()).expect("fixture matches the schema");
    (program, ds)
}
