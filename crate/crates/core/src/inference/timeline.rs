use serde::{Deserialize, Serialize};

use crate::serde_float;

/// One period of a case: the predicted distribution, the posterior after the
/// period's data, and derived summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    /// Period index; absent for the starting distribution.
    pub t: Option<u64>,
    pub predicted: Vec<f64>,
    pub posterior: Vec<f64>,
    pub score: f64,
    /// `ρ_i = ln p(w_i) − ln p(w_0)` under the predicted distribution.
    #[serde(with = "serde_float::vec")]
    pub prior_log_odds: Vec<f64>,
    /// `λ_i(Z)`, the evidence log likelihood ratio against neutral.
    #[serde(with = "serde_float::vec")]
    pub log_lr: Vec<f64>,
    /// `ρ*_i = ρ_i + λ_i(Z)`.
    #[serde(with = "serde_float::vec")]
    pub log_odds: Vec<f64>,
    /// True when direct task evidence was applied in this period.
    #[serde(default)]
    pub evidence: bool,
}

pub(crate) fn log_odds(probs: &[f64]) -> Vec<f64> {
    let p0 = probs[0];
    probs
        .iter()
        .map(|&p| {
            if p == 0.0 {
                f64::NEG_INFINITY
            } else if p0 == 0.0 {
                f64::INFINITY
            } else {
                p.ln() - p0.ln()
            }
        })
        .collect()
}

impl TimelinePoint {
    pub(crate) fn initial(probs: Vec<f64>, score: f64) -> Self {
        let odds = log_odds(&probs);
        Self {
            t: None,
            predicted: probs.clone(),
            posterior: probs,
            score,
            log_lr: vec![0.0; odds.len()],
            prior_log_odds: odds.clone(),
            log_odds: odds,
            evidence: false,
        }
    }
}

/// Starting distribution plus one point per processed period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTimeline {
    pub states: Vec<String>,
    pub initial: TimelinePoint,
    pub steps: Vec<TimelinePoint>,
}

impl PosteriorTimeline {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The most recent posterior point (the initial one if nothing was
    /// processed).
    pub fn last(&self) -> &TimelinePoint {
        self.steps.last().unwrap_or(&self.initial)
    }

    /// Steps with `from <= t <= to`; the initial point is kept.
    pub fn slice(&self, from: Option<u64>, to: Option<u64>) -> PosteriorTimeline {
        let from = from.unwrap_or(0);
        let to = to.unwrap_or(u64::MAX);
        PosteriorTimeline {
            states: self.states.clone(),
            initial: self.initial.clone(),
            steps: self
                .steps
                .iter()
                .filter(|p| p.t.is_some_and(|t| from <= t && t <= to))
                .cloned()
                .collect(),
        }
    }

    /// Point for checkpoint `c`: the initial distribution for 0, otherwise
    /// the step stamped `c`.
    pub fn at(&self, c: u64) -> Option<&TimelinePoint> {
        if c == 0 && self.steps.first().is_none_or(|p| p.t != Some(0)) {
            return Some(&self.initial);
        }
        self.steps.iter().find(|p| p.t == Some(c))
    }

    /// CSV: `t`, one probability column per state, `score`, then `rho_<id>`
    /// per active state. The starting row has `t` = `init`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend(self.states.iter().cloned());
        header.push("score".into());
        header.extend(self.states.iter().skip(1).map(|s| format!("rho_{s}")));
        w.write_record(&header).expect("in-memory write");
        for p in std::iter::once(&self.initial).chain(&self.steps) {
            let mut row = vec![p.t.map_or_else(|| "init".to_string(), |t| t.to_string())];
            row.extend(p.posterior.iter().map(|x| x.to_string()));
            row.push(p.score.to_string());
            row.extend(p.log_odds.iter().skip(1).map(|&x| serde_float::format(x)));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}
