use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_scenario, DiagnosticsError, Scenario};
use crate::inference::{Model, PosteriorTimeline};
use crate::model_spec::ModelSpec;

/// Periods tabulated by default.
pub const DEFAULT_CHECKPOINTS: [u64; 6] = [0, 5, 10, 15, 20, 26];

/// Off-target prior weight used for extreme priors unless given.
const EXTREME_FLOOR: f64 = 0.01;

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum SweepTarget {
    /// Add each value to the state's prior, then rescale all priors to sum
    /// to one.
    PriorShift(String),
    /// Weight one on the state and each value on every other state, then
    /// rescale.
    PriorExtreme(String),
    /// Uniform prior; values are ignored.
    AllEqual,
    /// Common holding parameter for every active state.
    Zeta,
    /// Holding parameter of one state.
    ZetaState(String),
}

impl FromStr for SweepTarget {
    type Err = DiagnosticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a.to_string())),
            None => (s, None),
        };
        match (head, arg) {
            ("prior", Some(st)) => Ok(SweepTarget::PriorShift(st)),
            ("extreme", Some(st)) => Ok(SweepTarget::PriorExtreme(st)),
            ("equal", None) => Ok(SweepTarget::AllEqual),
            ("zeta", None) => Ok(SweepTarget::Zeta),
            ("zeta", Some(st)) => Ok(SweepTarget::ZetaState(st)),
            _ => Err(DiagnosticsError::InvalidSetting(format!(
                "unknown target `{s}` (expected prior:<state>, extreme:<state>, equal, zeta or zeta:<state>)"
            ))),
        }
    }
}

impl SweepTarget {
    pub fn is_prior(&self) -> bool {
        matches!(self, SweepTarget::PriorShift(_) | SweepTarget::PriorExtreme(_) | SweepTarget::AllEqual)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub target: SweepTarget,
    pub values: Vec<f64>,
}

/// One sweep setting and its timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub setting: String,
    pub value: Option<f64>,
    pub priors: Vec<f64>,
    pub timeline: PosteriorTimeline,
}

fn renormalise(mut w: Vec<f64>) -> Result<Vec<f64>, DiagnosticsError> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(DiagnosticsError::InvalidSetting(format!("prior weights {w:?} include a negative value")));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(DiagnosticsError::InvalidSetting("prior weights sum to zero".into()));
    }
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(w)
}

fn open_unit(v: f64) -> Result<f64, DiagnosticsError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(DiagnosticsError::InvalidSetting(format!("holding parameter {v} outside (0, 1)")))
    }
}

/// The spec with one sweep setting applied.
pub fn apply_setting(spec: &ModelSpec, target: &SweepTarget, value: f64) -> Result<ModelSpec, DiagnosticsError> {
    let mut out = spec.clone();
    match target {
        SweepTarget::PriorShift(id) => {
            let s = spec.state_index(id)?;
            let mut w = spec.priors.clone();
            w[s] += value;
            out.priors = renormalise(w)?;
        }
        SweepTarget::PriorExtreme(id) => {
            let s = spec.state_index(id)?;
            let mut w = vec![value; spec.n_states()];
            w[s] = 1.0;
            out.priors = renormalise(w)?;
        }
        SweepTarget::AllEqual => {
            out.priors = vec![1.0 / spec.n_states() as f64; spec.n_states()];
        }
        SweepTarget::Zeta => {
            let v = open_unit(value)?;
            for s in spec.active_states() {
                out.holding[s] = v;
            }
        }
        SweepTarget::ZetaState(id) => {
            let s = spec.state_index(id)?;
            if s == crate::model_spec::NEUTRAL {
                return Err(DiagnosticsError::InvalidSetting("the neutral state has no holding parameter".into()));
            }
            out.holding[s] = open_unit(value)?;
        }
    }
    Ok(out)
}

fn label(target: &SweepTarget, value: Option<f64>) -> String {
    let v = value.map(|v| v.to_string()).unwrap_or_default();
    match target {
        SweepTarget::PriorShift(s) => format!("prior:{s}{}{v}", if value.is_some_and(|x| x < 0.0) { "" } else { "+" }),
        SweepTarget::PriorExtreme(s) => format!("extreme:{s}@{v}"),
        SweepTarget::AllEqual => "equal".into(),
        SweepTarget::Zeta => format!("zeta={v}"),
        SweepTarget::ZetaState(s) => format!("zeta:{s}={v}"),
    }
}

/// One timeline per setting, computed in parallel and returned in setting
/// order.
pub fn run_sweep(spec: &ModelSpec, scenario: &Scenario, sweep: &SweepSpec) -> Result<Vec<SweepPoint>, DiagnosticsError> {
    let settings: Vec<Option<f64>> = match (&sweep.target, sweep.values.is_empty()) {
        (SweepTarget::AllEqual, _) => vec![None],
        (SweepTarget::PriorExtreme(_), true) => vec![Some(EXTREME_FLOOR)],
        (_, true) => return Err(DiagnosticsError::InvalidSetting("no sweep values given".into())),
        _ => sweep.values.iter().copied().map(Some).collect(),
    };
    settings
        .into_par_iter()
        .map(|value| {
            let variant = apply_setting(spec, &sweep.target, value.unwrap_or(0.0))?;
            let model = Arc::new(Model::new(variant)?);
            let timeline = run_scenario(&model, scenario)?;
            Ok(SweepPoint {
                setting: label(&sweep.target, value),
                value,
                priors: model.spec().priors.clone(),
                timeline,
            })
        })
        .collect()
}

pub fn prior_sensitivity(spec: &ModelSpec, scenario: &Scenario, sweep: &SweepSpec) -> Result<Vec<SweepPoint>, DiagnosticsError> {
    if !sweep.target.is_prior() {
        return Err(DiagnosticsError::InvalidSetting("prior sensitivity needs a prior target".into()));
    }
    run_sweep(spec, scenario, sweep)
}

pub fn zeta_sensitivity(spec: &ModelSpec, scenario: &Scenario, settings: &[f64]) -> Result<Vec<SweepPoint>, DiagnosticsError> {
    run_sweep(
        spec,
        scenario,
        &SweepSpec {
            target: SweepTarget::Zeta,
            values: settings.to_vec(),
        },
    )
}

/// Table with one row per (setting, state): the prior, then the posterior
/// at each checkpoint. Checkpoints missing from a timeline are left blank.
pub fn checkpoint_csv(points: &[SweepPoint], checkpoints: &[u64]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["setting".to_string(), "state".into(), "prior".into()];
    header.extend(checkpoints.iter().map(|c| format!("t{c}")));
    w.write_record(&header).expect("in-memory write");
    for p in points {
        for (s, state) in p.timeline.states.iter().enumerate() {
            let mut row = vec![p.setting.clone(), state.clone(), p.priors[s].to_string()];
            row.extend(
                checkpoints
                    .iter()
                    .map(|&c| p.timeline.at(c).map(|pt| pt.posterior[s].to_string()).unwrap_or_default()),
            );
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
