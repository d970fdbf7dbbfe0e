//! Shared fixtures for the benchmarks.

use skylink::beam::build_tables;
use skylink::channel::generate_dataset;
use skylink::{AntennaModel, AnnealConfig, BeamGainTable, Scenario, SceneConfig};

/// One scenario and its beam table on the four-cell site.
pub fn reference_instance(num_uavs: usize) -> (SceneConfig, Scenario, BeamGainTable) {
    let scene = SceneConfig::reference_site(num_uavs, 80.0);
    let scenarios = generate_dataset(&scene, 1, 42).expect("valid scene");
    let tables = build_tables(&scenarios, &scene, &AntennaModel::default(), &AnnealConfig::default()).expect("tables");
    let scenario = scenarios.into_iter().next().expect("one scenario");
    (scene, scenario, tables.into_iter().next().expect("one table"))
}
