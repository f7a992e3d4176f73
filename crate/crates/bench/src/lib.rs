//! Shared fixtures for the benchmark targets.

use drsf_core::filter::GatekeeperConfig;
use drsf_core::harness::RunConfig;

pub const BENCH_CONFIG: &str = r#"
[scenario]
name = "dubins"
start = [0.0, 0.0, 0.0, 15.0]
goal = [120.0, 0.0]
target_speed = 15.0
k_heading = 2.0
k_speed = 1.0
clearance = 28.0
obstacles = [[45.0, 6.0, 8.0], [80.0, -7.0, 8.0]]

[gatekeeper]
candidates = 10
horizon = 20
samples = 1000
delta = 0.01
epsilon = 0.05
beta = 0.01
gradient_subsample = 8
"#;

pub fn bench_config() -> RunConfig {
    RunConfig::from_toml_str(BENCH_CONFIG).expect("benchmark config parses")
}

pub fn small_gatekeeper() -> GatekeeperConfig {
    let mut gk = bench_config().gatekeeper;
    gk.samples = 100;
    gk
}
