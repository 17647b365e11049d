use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{run_scenario, DiagnosticsError, Scenario};
use crate::inference::Model;

/// Per-period signed differences `variant − base` after grouping both
/// models' states onto the coarser model's states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSeries {
    pub groups: Vec<String>,
    /// Period of each row; the first row (`None`) is the starting
    /// distribution.
    pub t: Vec<Option<u64>>,
    pub diffs: Vec<Vec<f64>>,
}

impl DifferenceSeries {
    /// Largest absolute difference in `group` over all periods.
    pub fn max_abs(&self, group: &str) -> Option<f64> {
        let g = self.groups.iter().position(|x| x == group)?;
        Some(self.diffs.iter().map(|row| row[g].abs()).fold(0.0, f64::max))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string()];
        header.extend(self.groups.iter().map(|g| format!("d_{g}")));
        w.write_record(&header).expect("in-memory write");
        for (t, row) in self.t.iter().zip(&self.diffs) {
            let mut r = vec![t.map_or_else(|| "init".to_string(), |t| t.to_string())];
            r.extend(row.iter().map(f64::to_string));
            w.write_record(&r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Index of each state of `fine` among `coarse`'s states: through `mapping`
/// when listed, by identical id otherwise.
fn grouping(fine: &Model, coarse: &Model, mapping: &BTreeMap<String, String>) -> Result<Vec<usize>, DiagnosticsError> {
    fine.spec()
        .states
        .iter()
        .map(|s| {
            let target = mapping.get(&s.id).unwrap_or(&s.id);
            coarse
                .spec()
                .state_index(target)
                .map_err(|_| DiagnosticsError::UnmatchedState(s.id.clone()))
        })
        .collect()
}

/// Runs `scenario` on both models and differences the matched state
/// probabilities. `mapping` sends state ids of the model with more states
/// to ids of the other; unlisted states match by id.
pub fn structure_robustness(
    base: &Arc<Model>,
    variant: &Arc<Model>,
    mapping: &BTreeMap<String, String>,
    scenario: &Scenario,
) -> Result<DifferenceSeries, DiagnosticsError> {
    let obs = |m: &Model| m.spec().observables.iter().map(|o| o.id.clone()).collect::<Vec<_>>();
    if obs(base) != obs(variant) {
        return Err(DiagnosticsError::ObservablesDiffer);
    }
    let base_is_fine = base.spec().n_states() >= variant.spec().n_states();
    let (fine, coarse) = if base_is_fine { (base, variant) } else { (variant, base) };
    let to_group = grouping(fine, coarse, mapping)?;
    let n_groups = coarse.spec().n_states();

    let fine_tl = run_scenario(fine, scenario)?;
    let coarse_tl = run_scenario(coarse, scenario)?;
    let points = |tl: &crate::inference::PosteriorTimeline| {
        std::iter::once(tl.initial.clone()).chain(tl.steps.clone()).collect::<Vec<_>>()
    };
    let (fine_pts, coarse_pts) = (points(&fine_tl), points(&coarse_tl));

    let mut t = Vec::with_capacity(fine_pts.len());
    let mut diffs = Vec::with_capacity(fine_pts.len());
    for (f, c) in fine_pts.iter().zip(&coarse_pts) {
        let mut grouped = vec![0.0; n_groups];
        for (s, p) in f.posterior.iter().enumerate() {
            grouped[to_group[s]] += p;
        }
        let row = grouped
            .iter()
            .zip(&c.posterior)
            .map(|(g, c)| if base_is_fine { c - g } else { g - c })
            .collect();
        t.push(f.t);
        diffs.push(row);
    }
    Ok(DifferenceSeries {
        groups: coarse.spec().states.iter().map(|s| s.id.clone()).collect(),
        t,
        diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn identical_models_have_zero_differences() {
        let m = Model::new(fixtures::vehicle()).unwrap().into_shared();
        let sc = Scenario::from_csv("x", "t,RadWebVisits,VisitsToTargetLocations\n1,5,\n2,,4\n").unwrap();
        let d = structure_robustness(&m, &m, &BTreeMap::new(), &sc).unwrap();
        assert_eq!(d.diffs.len(), 3);
        assert!(d.diffs.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn unmatched_state() {
        let base = Model::new(fixtures::vehicle()).unwrap().into_shared();
        let map: BTreeMap<String, String> = [("T".to_string(), "P".to_string())].into();
        let full: BTreeMap<String, String> = [("N", "N"), ("A", "A"), ("T", "P"), ("P", "P"), ("M", "M")]
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .into();
        let coarse = Model::new(crate::model_spec::coarsen(base.spec(), &full).unwrap())
            .unwrap()
            .into_shared();
        assert!(matches!(
            structure_robustness(&base, &coarse, &BTreeMap::new(), &Scenario::default()),
            Err(DiagnosticsError::UnmatchedState(s)) if s == "T"
        ));
        assert!(structure_robustness(&base, &coarse, &map, &Scenario::default()).is_ok());
    }
}
