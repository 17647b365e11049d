use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagnosticsError;
use crate::model_spec::{ModelSpec, NEUTRAL};
use crate::rdceg::{
    build_transition_matrix, evolve, evolve_to_convergence, make_absorbing, StateDistribution, TransitionMatrix,
    CONVERGENCE_TOL, DEFAULT_PERIOD_CAP,
};

/// Which states absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LongrunVariant {
    /// Only neutral absorbs.
    SingleAbsorbing,
    /// `state` absorbs as well as neutral.
    MobilisedAbsorbing { state: usize },
}

/// Grid of jump-chain probabilities of moving to neutral on leaving a
/// transient state: `steps` evenly spaced values from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralRateSweep {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl NeutralRateSweep {
    pub fn rates(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n)
                .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

impl std::str::FromStr for NeutralRateSweep {
    type Err = DiagnosticsError;

    /// `lo:hi:steps`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DiagnosticsError::InvalidSetting(format!("sweep `{s}` is not lo:hi:steps"));
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(bad());
        };
        let sweep = Self {
            lo: lo.parse().map_err(|_| bad())?,
            hi: hi.parse().map_err(|_| bad())?,
            steps: steps.parse().map_err(|_| bad())?,
        };
        if !(0.0..=1.0).contains(&sweep.lo) || !(0.0..=1.0).contains(&sweep.hi) || sweep.steps == 0 {
            return Err(bad());
        }
        Ok(sweep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub neutral: f64,
    pub absorbing: f64,
    pub periods: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongrunReport {
    pub states: Vec<String>,
    pub variant: LongrunVariant,
    /// Distributions at periods `0..=horizon`.
    pub trajectory: Vec<Vec<f64>>,
    /// Distribution once successive periods stop moving (or at the cap).
    pub terminal: Vec<f64>,
    pub periods_to_converge: usize,
    pub converged: bool,
    pub sweep: Vec<SweepRow>,
}

impl LongrunReport {
    pub fn trajectory_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend(self.states.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (t, row) in self.trajectory.iter().enumerate() {
            let mut r = vec![t.to_string()];
            r.extend(row.iter().map(f64::to_string));
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn sweep_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rate", "neutral", "absorbing", "periods", "converged"])
            .expect("in-memory write");
        for r in &self.sweep {
            w.write_record([
                r.rate.to_string(),
                r.neutral.to_string(),
                r.absorbing.to_string(),
                r.periods.to_string(),
                r.converged.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Sets every transient state's jump-chain probability of moving to neutral
/// to `rate`, rescaling its other edges to share `1 - rate`. States without
/// explicit edges keep moving to neutral with certainty.
fn with_neutral_rate(spec: &ModelSpec, absorbing: usize, rate: f64) -> ModelSpec {
    let mut out = spec.clone();
    for s in spec.active_states().filter(|&s| s != absorbing) {
        let explicit: f64 = spec.edges.iter().filter(|e| e.from == s).map(|e| e.prob).sum();
        if explicit <= 0.0 {
            continue;
        }
        for e in out.edges.iter_mut().filter(|e| e.from == s) {
            e.prob *= (1.0 - rate) / explicit;
        }
    }
    out
}

fn matrix_for(spec: &ModelSpec, variant: LongrunVariant) -> Result<TransitionMatrix, DiagnosticsError> {
    let m = build_transition_matrix(spec);
    Ok(match variant {
        LongrunVariant::SingleAbsorbing => m,
        LongrunVariant::MobilisedAbsorbing { state } => make_absorbing(&m, state).map_err(|e| {
            DiagnosticsError::InvalidSetting(e.to_string())
        })?,
    })
}

/// Evolves the priors `horizon` periods, then on to convergence; with a
/// sweep and an absorbing escalation state, reports the terminal split
/// between neutral and that state for each transient-to-neutral rate.
pub fn longrun_report(
    spec: &ModelSpec,
    horizon: usize,
    variant: LongrunVariant,
    sweep: Option<NeutralRateSweep>,
) -> Result<LongrunReport, DiagnosticsError> {
    if horizon == 0 {
        return Err(DiagnosticsError::InvalidSetting("horizon must be at least 1".into()));
    }
    let start = StateDistribution::new(spec.priors.clone())
        .map_err(|e| DiagnosticsError::InvalidSetting(e.to_string()))?;
    let m = matrix_for(spec, variant)?;
    let trajectory = evolve(&start, &m, horizon)
        .expect("dimensions agree")
        .into_iter()
        .map(StateDistribution::into_vec)
        .collect();
    let limit = evolve_to_convergence(&start, &m, CONVERGENCE_TOL, DEFAULT_PERIOD_CAP).expect("dimensions agree");

    let absorbing = match variant {
        LongrunVariant::MobilisedAbsorbing { state } => state,
        LongrunVariant::SingleAbsorbing => NEUTRAL,
    };
    let rows = match sweep {
        None => Vec::new(),
        Some(sw) => sw
            .rates()
            .into_par_iter()
            .map(|rate| {
                let m = matrix_for(&with_neutral_rate(spec, absorbing, rate), variant)?;
                let c = evolve_to_convergence(&start, &m, CONVERGENCE_TOL, DEFAULT_PERIOD_CAP).expect("dimensions agree");
                Ok(SweepRow {
                    rate,
                    neutral: c.terminal[NEUTRAL],
                    absorbing: c.terminal[absorbing],
                    periods: c.periods,
                    converged: c.converged,
                })
            })
            .collect::<Result<_, DiagnosticsError>>()?,
    };
    Ok(LongrunReport {
        states: spec.states.iter().map(|s| s.id.clone()).collect(),
        variant,
        trajectory,
        terminal: limit.terminal.into_vec(),
        periods_to_converge: limit.periods,
        converged: limit.converged,
        sweep: rows,
    })
}
