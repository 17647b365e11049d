//! Shipped example models.

use crate::diagnostics::Scenario;
use crate::model_spec::{parse_model, ModelSpec};

pub const VEHICLE_JSON: &str = include_str!("../data/models/vehicle.json");
pub const MURDER_PLOT_JSON: &str = include_str!("../data/models/murder_plot.json");

/// Five-state vehicle attacker model (N, A, T, P, M).
pub fn vehicle() -> ModelSpec {
    parse_model(VEHICLE_JSON).expect("shipped vehicle model parses")
}

/// Six-state political murder plot (w0..w5).
pub fn murder_plot() -> ModelSpec {
    parse_model(MURDER_PLOT_JSON).expect("shipped murder plot model parses")
}

pub const ESCALATION_CSV: &str = include_str!("../data/scenarios/escalation.csv");
pub const DEESCALATION_CSV: &str = include_str!("../data/scenarios/deescalation.csv");

/// 26 weeks on the vehicle model: quiet, then radicalisation and
/// preparation signals, then mobilisation signals ramping up.
pub fn escalation_scenario() -> Scenario {
    Scenario::from_csv("escalation", ESCALATION_CSV).expect("shipped scenario parses")
}

/// 26 weeks on the vehicle model: eight elevated weeks, then every
/// observable at zero.
pub fn deescalation_scenario() -> Scenario {
    Scenario::from_csv("deescalation", DEESCALATION_CSV).expect("shipped scenario parses")
}
