//! Simulation harness: the 203-cell hexagonal map, built-in scenarios, risk
//! calibration, case generation, and power / type-I studies.

mod calibrate;
mod hexmap;
mod scenario;
mod study;

pub use calibrate::{binomial_test_critical, binomial_test_power, calibrate_relative_risk, calibrate_risks, TEST_LEVEL};
pub use hexmap::{build_hex_map, build_hex_map_with_jitter, hex_cell_id, hex_cells, HEX_CELLS, HEX_JITTER, HEX_POPULATION};
pub use scenario::{
    builtin_scenario, draw_cases, null_scenario, sensitivity_ppv, Scenario, ScenarioSpec, BUILTIN_SCENARIOS,
};
pub use study::{power_study, type_i_study, MethodResult, StudyConfig, StudyReport, StudyRunner};
