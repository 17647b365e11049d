//! Task-configuration probabilities given a position.
//!
//! Only two numbers are elicited per active state: `p_plus`, the probability
//! that every positive indicator task and no negative one is enacted, and the
//! per-task neutral probabilities. Every other configuration of the state's
//! task set is filled in by interpolating on the log-odds scale between the
//! all-positive probability and the naive-Bayes neutral probability of that
//! same configuration:
//!
//! ```text
//! φ(A, B) = α_K φ⁺ + (1 − α_K) φ₀,   α_K = (K / (r⁺ + r⁻))^ξ
//! ```
//!
//! where `K` counts enacted positive tasks plus non-enacted negative tasks.
//! The exponent `ξ` is solved by bisection so the table sums to one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_spec::{ModelSpec, Polarity, NEUTRAL};

/// Bisection bracket and iteration cap for the normalising exponent.
pub const XI_BRACKET: (f64, f64) = (1e-6, 1e3);
pub const XI_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskModelError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task `{0}` is not in the index set it was assigned to")]
    Membership(String),
    #[error("state has an empty task set")]
    EmptyTaskSet,
    #[error("state index {0} is not an active state")]
    NotActive(usize),
    #[error("more than 30 tasks in one state's task set")]
    TooManyTasks,
    #[error(
        "no exponent in [{lo:e}, {hi:e}] normalises the table: total mass is {mass_lo} at the lower end and {mass_hi} at the upper end"
    )]
    NoRoot {
        lo: f64,
        hi: f64,
        mass_lo: f64,
        mass_hi: f64,
    },
}

/// Positive and negative indicator tasks of one active state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskIndexSets {
    pub state: usize,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl TaskIndexSets {
    pub fn for_state(spec: &ModelSpec, state: usize) -> Self {
        let inc = &spec.incidence[state];
        Self {
            state,
            positive: inc.positive().collect(),
            negative: inc.negative().collect(),
        }
    }

    pub fn r_plus(&self) -> usize {
        self.positive.len()
    }

    pub fn r_minus(&self) -> usize {
        self.negative.len()
    }
}

/// `K = |A| + r⁻ − |B|` for enacted positive tasks `A` and enacted negative
/// tasks `B`.
pub fn k_statistic(sets: &TaskIndexSets, enacted_positive: &[usize], enacted_negative: &[usize]) -> Result<usize, TaskModelError> {
    for t in enacted_positive {
        if !sets.positive.contains(t) {
            return Err(TaskModelError::Membership(t.to_string()));
        }
    }
    for t in enacted_negative {
        if !sets.negative.contains(t) {
            return Err(TaskModelError::Membership(t.to_string()));
        }
    }
    let distinct = |xs: &[usize]| {
        let mut v = xs.to_vec();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    Ok(distinct(enacted_positive) + sets.r_minus() - distinct(enacted_negative))
}

/// Naive-Bayes probability of a task assignment under the neutral state.
pub fn neutral_joint(spec: &ModelSpec, assignment: &[(&str, bool)]) -> Result<f64, TaskModelError> {
    assignment.iter().try_fold(1.0, |acc, &(id, enacted)| {
        let t = spec
            .task_index(id)
            .map_err(|_| TaskModelError::UnknownTask(id.to_string()))?;
        let p = spec.neutral_task_probs[t];
        Ok(acc * if enacted { p } else { 1.0 - p })
    })
}

/// Neutral probability of configuration `mask` over `members` (bit `j` set
/// means `members[j]` is enacted).
pub(crate) fn neutral_joint_mask(neutral_probs: &[f64], members: &[(usize, Polarity)], mask: u32) -> f64 {
    members
        .iter()
        .enumerate()
        .map(|(j, &(t, _))| {
            let p = neutral_probs[t];
            if mask >> j & 1 == 1 {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

pub fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

pub fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Interpolation weight for a configuration with statistic `k` out of `r`.
fn alpha(k: usize, r: usize, xi: f64) -> f64 {
    (k as f64 / r as f64).powf(xi)
}

/// Probability of a configuration with statistic `k`; the endpoints are the
/// elicited values themselves.
fn interpolated(k: usize, r: usize, xi: f64, p_plus: f64, p_zero: f64) -> f64 {
    if k == r {
        p_plus
    } else if k == 0 {
        p_zero
    } else {
        let a = alpha(k, r, xi);
        inv_logit(a * logit(p_plus) + (1.0 - a) * logit(p_zero))
    }
}

fn total_mass(xi: f64, r: usize, p_plus: f64, p_zero: f64) -> f64 {
    (0..=r)
        .map(|k| binomial(r, k) * interpolated(k, r, xi, p_plus, p_zero))
        .sum()
}

/// Solves for the exponent that makes the interpolated table sum to one.
///
/// `neutral_probs` lists the neutral probabilities of the positive tasks
/// followed by those of the negative tasks. Every `α_K` with `K < r` is
/// monotone in `ξ`, hence so is the total mass, and bisection over
/// [`XI_BRACKET`] is sound.
pub fn solve_xi(p_plus: f64, neutral_probs: &[f64], r_plus: usize, r_minus: usize) -> Result<f64, TaskModelError> {
    let r = r_plus + r_minus;
    if r == 0 {
        return Err(TaskModelError::EmptyTaskSet);
    }
    assert_eq!(neutral_probs.len(), r, "one neutral probability per task");
    let p_zero: f64 = neutral_probs[..r_plus].iter().product::<f64>()
        * neutral_probs[r_plus..].iter().map(|p| 1.0 - p).product::<f64>();
    bisect_xi(p_plus, p_zero, r)
}

fn bisect_xi(p_plus: f64, p_zero: f64, r: usize) -> Result<f64, TaskModelError> {
    let (mut lo, mut hi) = XI_BRACKET;
    let excess = |xi: f64| total_mass(xi, r, p_plus, p_zero) - 1.0;
    let f_lo = excess(lo);
    let f_hi = excess(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(TaskModelError::NoRoot {
            lo,
            hi,
            mass_lo: f_lo + 1.0,
            mass_hi: f_hi + 1.0,
        });
    }
    let lo_sign = f_lo.signum();
    for _ in 0..XI_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = excess(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Probability of every configuration of one state's task set.
///
/// Configurations are bit masks over `members` (task declaration order):
/// bit `j` set means `members[j]` is enacted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConditionalTable {
    pub state: usize,
    pub members: Vec<(usize, Polarity)>,
    pub probs: Vec<f64>,
    /// Normalising exponent; absent for single-task states, whose table is
    /// fixed by `p_plus` alone.
    pub xi: Option<f64>,
    pub p_plus: f64,
    /// Neutral naive-Bayes probability of the all-positive configuration.
    pub p_zero: f64,
}

impl TaskConditionalTable {
    pub fn r(&self) -> usize {
        self.members.len()
    }

    pub fn n_configs(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, mask: u32) -> f64 {
        self.probs[mask as usize]
    }

    pub fn k_of(&self, mask: u32) -> usize {
        config_k(&self.members, mask)
    }

    /// Mask with every positive task enacted and no negative one.
    pub fn target_mask(&self) -> u32 {
        target_mask(&self.members)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Bitstring label, first member leftmost.
    pub fn label(&self, mask: u32) -> String {
        (0..self.r())
            .map(|j| if mask >> j & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Mask from a per-member enacted flag slice.
    pub fn mask_of(&self, enacted: &[bool]) -> u32 {
        assert_eq!(enacted.len(), self.r());
        enacted
            .iter()
            .enumerate()
            .fold(0, |m, (j, &e)| if e { m | 1 << j } else { m })
    }
}

pub(crate) fn config_k(members: &[(usize, Polarity)], mask: u32) -> usize {
    members
        .iter()
        .enumerate()
        .filter(|&(j, &(_, pol))| {
            let on = mask >> j & 1 == 1;
            match pol {
                Polarity::Positive => on,
                Polarity::Negative => !on,
            }
        })
        .count()
}

fn target_mask(members: &[(usize, Polarity)]) -> u32 {
    members
        .iter()
        .enumerate()
        .filter(|(_, (_, pol))| *pol == Polarity::Positive)
        .fold(0, |m, (j, _)| m | 1 << j)
}

/// Builds the full configuration table for an active state.
pub fn conditional_table(spec: &ModelSpec, state: usize) -> Result<TaskConditionalTable, TaskModelError> {
    if state == NEUTRAL || state >= spec.n_states() {
        return Err(TaskModelError::NotActive(state));
    }
    let members = spec.incidence[state].members.clone();
    let r = members.len();
    if r == 0 {
        return Err(TaskModelError::EmptyTaskSet);
    }
    if r > 30 {
        return Err(TaskModelError::TooManyTasks);
    }
    let p_plus = spec.p_plus[state];
    let target = target_mask(&members);
    let p_zero = neutral_joint_mask(&spec.neutral_task_probs, &members, target);

    let (xi, probs) = if r == 1 {
        let mut probs = vec![0.0; 2];
        probs[target as usize] = p_plus;
        probs[(target ^ 1) as usize] = 1.0 - p_plus;
        (None, probs)
    } else {
        let xi = bisect_xi(p_plus, p_zero, r)?;
        let probs = (0..1u32 << r)
            .map(|mask| interpolated(config_k(&members, mask), r, xi, p_plus, p_zero))
            .collect();
        (Some(xi), probs)
    };
    Ok(TaskConditionalTable {
        state,
        members,
        probs,
        xi,
        p_plus,
        p_zero,
    })
}

/// Tables for every active state, indexed by state (neutral slot empty).
pub fn all_tables(spec: &ModelSpec) -> Vec<Result<TaskConditionalTable, TaskModelError>> {
    spec.active_states()
        .map(|s| conditional_table(spec, s))
        .collect()
}

/// `log p(θ|w) − log p(θ|w₀)` for configuration `mask` of the table's task
/// set.
pub fn task_loglikelihood_ratio(table: &TaskConditionalTable, spec: &ModelSpec, mask: u32) -> f64 {
    table.prob(mask).ln() - neutral_joint_mask(&spec.neutral_task_probs, &table.members, mask).ln()
}

/// The same ratio split over the negative and positive indicator subsets,
/// each computed from marginals: `(λ₋, λ₊)`. Their sum equals
/// [`task_loglikelihood_ratio`] when the two subsets are independent given
/// the state, in particular when either is empty.
pub fn split_loglikelihood_ratio(table: &TaskConditionalTable, spec: &ModelSpec, mask: u32) -> (f64, f64) {
    let members = &table.members;
    let subset = |pol: Polarity| -> u32 {
        members
            .iter()
            .enumerate()
            .filter(|(_, (_, p))| *p == pol)
            .fold(0, |m, (j, _)| m | 1 << j)
    };
    let part = |bits: u32| -> f64 {
        if bits == 0 {
            return 0.0;
        }
        let marginal: f64 = (0..table.n_configs() as u32)
            .filter(|c| c & bits == mask & bits)
            .map(|c| table.prob(c))
            .sum();
        let neutral: f64 = members
            .iter()
            .enumerate()
            .filter(|(j, _)| bits >> j & 1 == 1)
            .map(|(j, &(t, _))| {
                let p = spec.neutral_task_probs[t];
                if mask >> j & 1 == 1 {
                    p
                } else {
                    1.0 - p
                }
            })
            .product();
        marginal.ln() - neutral.ln()
    };
    (part(subset(Polarity::Negative)), part(subset(Polarity::Positive)))
}

/// CSV with one row per configuration bitstring and one column per active
/// state, followed by the column totals (`ntp`) and the solved exponents.
/// The all-zero row is labelled `np_0` when every state has the same number
/// of tasks.
pub fn tables_to_csv(spec: &ModelSpec, tables: &[TaskConditionalTable]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["config".to_string()];
    header.extend(tables.iter().map(|t| spec.states[t.state].name.clone()));
    w.write_record(&header).expect("in-memory write");

    let mut widths: Vec<usize> = tables.iter().map(TaskConditionalTable::r).collect();
    widths.sort_unstable();
    widths.dedup();
    let short_zero = widths.len() == 1;
    for r in widths {
        for printed in 0..1u32 << r {
            // printed bitstring reads members left to right, leftmost most significant
            let mask = (0..r).fold(0u32, |m, j| if printed >> (r - 1 - j) & 1 == 1 { m | 1 << j } else { m });
            let label: String = (0..r).map(|j| if mask >> j & 1 == 1 { '1' } else { '0' }).collect();
            let label = if short_zero && mask == 0 { "0".to_string() } else { label };
            let mut row = vec![format!("np_{label}")];
            row.extend(tables.iter().map(|t| {
                if t.r() == r {
                    t.prob(mask).to_string()
                } else {
                    String::new()
                }
            }));
            w.write_record(&row).expect("in-memory write");
        }
    }
    let mut ntp = vec!["ntp".to_string()];
    ntp.extend(tables.iter().map(|t| t.total().to_string()));
    w.write_record(&ntp).expect("in-memory write");
    let mut xi = vec!["xi".to_string()];
    xi.extend(tables.iter().map(|t| t.xi.map(|x| x.to_string()).unwrap_or_default()));
    w.write_record(&xi).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn sets(pos: &[usize], neg: &[usize]) -> TaskIndexSets {
        TaskIndexSets {
            state: 1,
            positive: pos.to_vec(),
            negative: neg.to_vec(),
        }
    }

    #[test]
    fn k_statistic_range() {
        let s = sets(&[0, 1], &[2]);
        assert_eq!(k_statistic(&s, &[], &[2]).unwrap(), 0);
        assert_eq!(k_statistic(&s, &[0, 1], &[]).unwrap(), 3);
        assert_eq!(k_statistic(&s, &[1], &[]).unwrap(), 2);
        assert!(matches!(k_statistic(&s, &[2], &[]), Err(TaskModelError::Membership(_))));
    }

    #[test]
    fn neutral_joint_products() {
        let spec = fixtures::vehicle();
        let all = |ids: &[&'static str]| ids.iter().map(|&i| (i, true)).collect::<Vec<_>>();
        let ac = neutral_joint(
            &spec,
            &all(&["EngageWithRadicalisers", "RedPubEngInRad", "RedCntctWthFmlyFrnds", "ObtainResources"]),
        )
        .unwrap();
        assert!((ac - 0.00108).abs() < 1e-15);
        assert!(matches!(neutral_joint(&spec, &[("nope", true)]), Err(TaskModelError::UnknownTask(_))));
    }

    #[test]
    fn two_task_toy_solves() {
        let xi = solve_xi(0.4, &[0.1, 0.1], 2, 0).unwrap();
        assert!((xi - 0.170).abs() < 5e-4, "xi = {xi}");
        let mid = interpolated(1, 2, xi, 0.4, 0.01);
        assert!((mid - 0.295).abs() < 1e-12);
    }

    #[test]
    fn two_task_toy_without_root() {
        match solve_xi(0.4, &[0.5, 0.5], 2, 0) {
            Err(TaskModelError::NoRoot { mass_lo, mass_hi, .. }) => {
                assert!(mass_lo >= 1.15 && mass_hi >= 1.15, "{mass_lo} {mass_hi}");
            }
            other => panic!("expected NoRoot, got {other:?}"),
        }
    }

    #[test]
    fn single_task_table_is_the_complement_pair() {
        let spec = fixtures::murder_plot();
        let w3 = spec.state_index("w3").unwrap();
        let t = conditional_table(&spec, w3).unwrap();
        assert_eq!(t.xi, None);
        assert_eq!(t.probs, vec![0.6, 0.4]);
    }

    #[test]
    fn negative_indicators_flip_k() {
        let mut spec = fixtures::vehicle();
        spec.incidence[1].members[1].1 = Polarity::Negative;
        let t = conditional_table(&spec, 1).unwrap();
        let target = t.target_mask();
        assert_eq!(target, 0b1101);
        assert_eq!(t.prob(target), 0.4);
        assert!((t.total() - 1.0).abs() < 1e-10);
        assert_eq!(t.k_of(target ^ 0b0010), 3);
    }

    #[test]
    fn lambda_matches_table_values() {
        let spec = fixtures::vehicle();
        let t = conditional_table(&spec, 1).unwrap();
        let lam = task_loglikelihood_ratio(&t, &spec, 0b1111);
        assert!((lam - (0.4f64.ln() - 0.00108f64.ln())).abs() < 1e-12);
        assert!((lam - 5.914).abs() < 1e-3);
    }

    #[test]
    fn split_ratio_without_negatives() {
        let spec = fixtures::vehicle();
        let t = conditional_table(&spec, 2).unwrap();
        for mask in 0..16 {
            let (neg, pos) = split_loglikelihood_ratio(&t, &spec, mask);
            assert_eq!(neg, 0.0);
            assert!((pos - task_loglikelihood_ratio(&t, &spec, mask)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_layout() {
        let spec = fixtures::vehicle();
        let tables: Vec<_> = all_tables(&spec).into_iter().map(Result::unwrap).collect();
        let csv = tables_to_csv(&spec, &tables);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "config,ActiveConvert,Training,Preparing,Mobilised");
        assert!(lines[1].starts_with("np_0,0.00108"));
        assert!(lines[2].starts_with("np_0001,"));
        assert!(lines[16].starts_with("np_1111,0.4,0.4"));
        assert!(lines[17].starts_with("ntp,"));
        assert_eq!(lines.len(), 19);
    }
}
