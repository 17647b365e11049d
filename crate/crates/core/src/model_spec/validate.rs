use serde::{Deserialize, Serialize};

use super::{ModelSpec, NEUTRAL};

const PRIOR_TOL: f64 = 1e-9;
const EDGE_TOL: f64 = 1e-12;
/// Elicitation floor on the all-positive probability; below it the task set
/// discriminates poorly.
pub const P_PLUS_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingCode {
    PriorSum,
    PriorRange,
    EdgeSum,
    EdgeRange,
    SelfEdge,
    DuplicateEdge,
    EdgeToNeutral,
    NeutralEdge,
    NeutralTask,
    StateNoTask,
    NeutralProbRange,
    PPlusRange,
    PPlusLow,
    SdNonpositive,
    NonFinite,
    ZetaRange,
    LogisticRate,
    TaskNoObservable,
    ScoreWeights,
    /// Emitted when building tables for a model, not by [`validate_model`].
    TableNoRoot,
}

impl FindingCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingCode::PriorSum => "PRIOR_SUM",
            FindingCode::PriorRange => "PRIOR_RANGE",
            FindingCode::EdgeSum => "EDGE_SUM",
            FindingCode::EdgeRange => "EDGE_RANGE",
            FindingCode::SelfEdge => "SELF_EDGE",
            FindingCode::DuplicateEdge => "DUPLICATE_EDGE",
            FindingCode::EdgeToNeutral => "EDGE_TO_NEUTRAL",
            FindingCode::NeutralEdge => "NEUTRAL_EDGE",
            FindingCode::NeutralTask => "NEUTRAL_TASK",
            FindingCode::StateNoTask => "STATE_NO_TASK",
            FindingCode::NeutralProbRange => "NEUTRAL_PROB_RANGE",
            FindingCode::PPlusRange => "P_PLUS_RANGE",
            FindingCode::PPlusLow => "P_PLUS_LOW",
            FindingCode::SdNonpositive => "SD_NONPOSITIVE",
            FindingCode::NonFinite => "NON_FINITE",
            FindingCode::ZetaRange => "ZETA_RANGE",
            FindingCode::LogisticRate => "LOGISTIC_RATE",
            FindingCode::TaskNoObservable => "TASK_NO_OBSERVABLE",
            FindingCode::ScoreWeights => "SCORE_WEIGHTS",
            FindingCode::TableNoRoot => "TABLE_NO_ROOT",
        }
    }
}

impl std::fmt::Display for FindingCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub message: String,
    /// Dotted path to the offending document element.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    /// True when no error-severity finding is present.
    pub fn is_valid(&self) -> bool {
        !self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn has_code(&self, code: FindingCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }

    pub fn push(&mut self, severity: Severity, code: FindingCode, path: impl Into<String>, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            code,
            message: message.into(),
            path: path.into(),
        });
    }

    fn error(&mut self, code: FindingCode, path: impl Into<String>, message: impl Into<String>) {
        self.push(Severity::Error, code, path, message);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for finding in &self.findings {
            let sev = match finding.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{sev} {} at {}: {}", finding.code, finding.path, finding.message)?;
        }
        Ok(())
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Checks every structural and numeric invariant of `spec`; violations are
/// reported as findings rather than failures.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let sid = |i: usize| spec.states[i].id.as_str();
    let tid = |t: usize| spec.tasks[t].id.as_str();

    // priors
    let mut prior_sum = 0.0;
    for (i, &p) in spec.priors.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            report.error(FindingCode::PriorRange, format!("priors.{}", sid(i)), format!("prior {p} outside [0, 1]"));
        }
        prior_sum += p;
    }
    if (prior_sum - 1.0).abs() > PRIOR_TOL || !prior_sum.is_finite() {
        report.error(FindingCode::PriorSum, "priors", format!("priors sum to {prior_sum}, expected 1"));
    }

    // edges
    let mut row_sums = vec![0.0; spec.n_states()];
    for (k, e) in spec.edges.iter().enumerate() {
        let path = format!("edges[{k}]");
        if !e.prob.is_finite() || !(0.0..=1.0).contains(&e.prob) {
            report.error(FindingCode::EdgeRange, &path, format!("edge probability {} outside [0, 1]", e.prob));
        }
        if e.from == NEUTRAL {
            report.error(FindingCode::NeutralEdge, &path, "the neutral state has no outgoing edges");
        }
        if e.to == NEUTRAL && e.from != NEUTRAL {
            report.error(
                FindingCode::EdgeToNeutral,
                &path,
                "edges into the neutral state are implied by the remainder and must not be listed",
            );
        }
        if e.from == e.to {
            report.error(FindingCode::SelfEdge, &path, format!("self edge on `{}`", sid(e.from)));
        }
        if spec.edges[..k].iter().any(|o| o.from == e.from && o.to == e.to) {
            report.error(
                FindingCode::DuplicateEdge,
                &path,
                format!("edge `{}` -> `{}` listed twice", sid(e.from), sid(e.to)),
            );
        }
        row_sums[e.from] += e.prob;
    }
    for s in spec.active_states() {
        if row_sums[s] > 1.0 + EDGE_TOL {
            report.error(
                FindingCode::EdgeSum,
                format!("edges.{}", sid(s)),
                format!("outgoing edge probabilities sum to {}, exceeding 1", row_sums[s]),
            );
        }
    }

    // task layer
    if !spec.incidence[NEUTRAL].is_empty() {
        report.error(
            FindingCode::NeutralTask,
            format!("task_state_incidence.{}", sid(NEUTRAL)),
            "the neutral state has no associated tasks",
        );
    }
    for s in spec.active_states() {
        if spec.incidence[s].is_empty() {
            report.error(
                FindingCode::StateNoTask,
                format!("task_state_incidence.{}", sid(s)),
                format!("active state `{}` has no incident task", sid(s)),
            );
        }
        let p = spec.p_plus[s];
        if !open_unit(p) {
            report.error(FindingCode::PPlusRange, format!("p_plus.{}", sid(s)), format!("p_plus {p} outside (0, 1)"));
        } else if p < P_PLUS_FLOOR {
            report.push(
                Severity::Warning,
                FindingCode::PPlusLow,
                format!("p_plus.{}", sid(s)),
                format!("p_plus {p} below the elicitation floor {P_PLUS_FLOOR}"),
            );
        }
        let z = spec.holding[s];
        if !open_unit(z) {
            report.error(
                FindingCode::ZetaRange,
                format!("holding_params.{}", sid(s)),
                format!("holding parameter {z} outside (0, 1)"),
            );
        }
    }
    for (t, &p) in spec.neutral_task_probs.iter().enumerate() {
        if !open_unit(p) {
            report.error(
                FindingCode::NeutralProbRange,
                format!("neutral_task_probs.{}", tid(t)),
                format!("neutral task probability {p} outside (0, 1)"),
            );
        }
    }
    for (t, params) in spec.likelihood_params.iter().enumerate() {
        if !(params.k0 > 0.0 && params.k1 > 0.0 && params.k0.is_finite() && params.k1.is_finite()) {
            report.error(
                FindingCode::LogisticRate,
                format!("likelihood_params.{}", tid(t)),
                "growth rates k0 and k1 must be positive and finite",
            );
        }
        if !params.x0.is_finite() {
            report.error(FindingCode::NonFinite, format!("likelihood_params.{}.x0", tid(t)), "shift must be finite");
        }
    }

    // observables
    for o in &spec.observables {
        if !o.mean.is_finite() {
            report.error(FindingCode::NonFinite, format!("observables.{}.mean", o.id), "mean must be finite");
        }
        if !(o.sd > 0.0 && o.sd.is_finite()) {
            report.error(
                FindingCode::SdNonpositive,
                format!("observables.{}.sd", o.id),
                format!("standard deviation {} must be positive", o.sd),
            );
        }
    }
    for (t, task) in spec.tasks.iter().enumerate() {
        if !task.evidence_only && !spec.observable_tasks.iter().any(|ts| ts.contains(&t)) {
            report.error(
                FindingCode::TaskNoObservable,
                format!("observable_task_incidence.{}", task.id),
                format!("task `{}` has no observable and is not flagged evidence_only", task.id),
            );
        }
    }

    if let Some(w) = &spec.score_weights {
        if w.len() != spec.n_states() || w.iter().any(|x| !x.is_finite()) {
            report.error(FindingCode::ScoreWeights, "score_weights", "one finite weight per state is required");
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn vehicle_spec_is_clean() {
        let report = validate_model(&fixtures::vehicle());
        assert!(report.is_empty(), "{report}");
    }

    #[test]
    fn prior_sum_is_reported() {
        let mut spec = fixtures::vehicle();
        spec.priors[1] += 0.2;
        let report = validate_model(&spec);
        assert!(report.has_code(FindingCode::PriorSum));
        assert!(!report.is_valid());
    }

    #[test]
    fn edge_sum_is_reported() {
        let mut spec = fixtures::vehicle();
        // A -> T 0.4, A -> P 0.3; push the row to 1.05
        for e in spec.edges.iter_mut().filter(|e| e.from == 1) {
            e.prob += 0.175;
        }
        let report = validate_model(&spec);
        assert!(report.has_code(FindingCode::EdgeSum), "{report}");
        assert_eq!(report.errors().count(), 1);
    }

    #[test]
    fn low_p_plus_is_only_a_warning() {
        let mut spec = fixtures::vehicle();
        spec.p_plus[2] = 0.1;
        let report = validate_model(&spec);
        assert!(report.has_code(FindingCode::PPlusLow));
        assert!(report.is_valid());
    }

    #[test]
    fn structural_findings() {
        let mut spec = fixtures::vehicle();
        spec.incidence[0] = spec.incidence[1].clone();
        spec.incidence[3].members.clear();
        spec.observables[0].sd = 0.0;
        spec.holding[4] = 1.0;
        let report = validate_model(&spec);
        for code in [
            FindingCode::NeutralTask,
            FindingCode::StateNoTask,
            FindingCode::SdNonpositive,
            FindingCode::ZetaRange,
        ] {
            assert!(report.has_code(code), "missing {code}: {report}");
        }
    }
}
