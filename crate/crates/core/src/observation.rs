//! From routine observations to task likelihoods.
//!
//! Each observable is standardised with its declared mean and standard
//! deviation, then every task's intensity `Z_j` is the mean of the
//! standardised observables incident on it. Intensities are scored against
//! each task state by a shifted asymmetric logistic: the enacted curve rises
//! gently below the shift `x0` (rate `k0`) and sharply above it (rate `k1`);
//! the not-enacted curve is its complement. The scores are bounded and not
//! normalised in `Z`, which is harmless because only their ratios across task
//! configurations enter the position update.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_spec::{LikelihoodMode, LogisticParams, LookupError, ModelSpec};

#[derive(Debug, Error, PartialEq)]
pub enum ObservationError {
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("{0}")]
    Lookup(#[from] LookupError),
    #[error("line {line}: {message}")]
    Stream { line: usize, message: String },
}

/// Observable values for one period, indexed like `spec.observables`;
/// `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub t: u64,
    pub values: Vec<Option<f64>>,
}

impl ObservationRecord {
    /// A record with every observable missing.
    pub fn missing(t: u64, n_observables: usize) -> Self {
        Self {
            t,
            values: vec![None; n_observables],
        }
    }
}

/// Observation keyed by observable id, as received from files or clients.
/// Observables absent from `values` are missing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObservation {
    pub t: u64,
    #[serde(default)]
    pub values: BTreeMap<String, Option<f64>>,
}

impl RawObservation {
    pub fn resolve(&self, spec: &ModelSpec) -> Result<ObservationRecord, ObservationError> {
        let mut record = ObservationRecord::missing(self.t, spec.observables.len());
        for (id, v) in &self.values {
            let o = spec.observable_index(id)?;
            record.values[o] = v.filter(|x| x.is_finite());
        }
        Ok(record)
    }
}

/// Standardised observable values `(y - mean) / sd`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub t: u64,
    pub values: Vec<Option<f64>>,
}

pub fn normalize(record: &ObservationRecord, spec: &ModelSpec) -> NormalizedRecord {
    let values = record
        .values
        .iter()
        .zip(&spec.observables)
        .map(|(v, o)| v.map(|y| (y - o.mean) / o.sd))
        .collect();
    NormalizedRecord { t: record.t, values }
}

/// Per-task intensity; `None` where every incident observable is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityVector(pub Vec<Option<f64>>);

impl IntensityVector {
    pub fn missing(n_tasks: usize) -> Self {
        Self(vec![None; n_tasks])
    }

    pub fn get(&self, task: usize) -> Option<f64> {
        self.0[task]
    }
}

/// Mean of the present standardised observables incident on each task.
pub fn filter_tau(record: &NormalizedRecord, spec: &ModelSpec) -> IntensityVector {
    let mut sums = vec![0.0; spec.n_tasks()];
    let mut counts = vec![0usize; spec.n_tasks()];
    for (o, tasks) in spec.observable_tasks.iter().enumerate() {
        if let Some(y) = record.values[o] {
            for &t in tasks {
                sums[t] += y;
                counts[t] += 1;
            }
        }
    }
    IntensityVector(
        sums.into_iter()
            .zip(counts)
            .map(|(s, c)| (c > 0).then(|| s / c as f64))
            .collect(),
    )
}

/// Signed logistic exponent `k (x - x0)` with the rate picked by side.
fn exponent(x: f64, params: &LogisticParams) -> f64 {
    let d = x - params.x0;
    if x < params.x0 {
        params.k0 * d
    } else {
        params.k1 * d
    }
}

/// `ln(1 + e^v)` without overflow.
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Score of intensity `x` given the task is (`enacted`) or is not enacted.
pub fn logistic_g(x: f64, enacted: bool, params: &LogisticParams) -> f64 {
    let u = exponent(x, params);
    let u = if enacted { u } else { -u };
    1.0 / (1.0 + (-u).exp())
}

/// `ln logistic_g(x, enacted, params)`, accurate in the saturated tails.
pub fn log_logistic_g(x: f64, enacted: bool, params: &LogisticParams) -> f64 {
    let u = exponent(x, params);
    let u = if enacted { u } else { -u };
    -softplus(-u)
}

pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Likelihood of intensities `z` for one task configuration.
///
/// `config[j]` says whether the task scored by `params[j]` is enacted.
pub fn task_set_likelihood(
    z: &[f64],
    config: &[bool],
    params: &[LogisticParams],
    mode: LikelihoodMode,
) -> Result<f64, ObservationError> {
    if z.is_empty() {
        return Err(ObservationError::EmptyTaskSet);
    }
    assert!(z.len() == config.len() && z.len() == params.len());
    let g = z.iter().zip(config).zip(params).map(|((&x, &e), p)| logistic_g(x, e, p));
    Ok(match mode {
        LikelihoodMode::Average => g.sum::<f64>() / z.len() as f64,
        LikelihoodMode::Product => g.product(),
    })
}

/// Per-task log scores for the enacted and not-enacted states, the unit
/// the position update consumes. Tasks without an intensity score `ln 0.5`
/// both ways.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLikelihoods {
    pub log_on: Vec<f64>,
    pub log_off: Vec<f64>,
}

impl TaskLikelihoods {
    pub fn from_intensities(z: &IntensityVector, spec: &ModelSpec) -> Self {
        let half = 0.5f64.ln();
        let (log_on, log_off) = z
            .0
            .iter()
            .zip(&spec.likelihood_params)
            .map(|(z, p)| match z {
                Some(x) => (log_logistic_g(*x, true, p), log_logistic_g(*x, false, p)),
                None => (half, half),
            })
            .unzip();
        Self { log_on, log_off }
    }

    /// No information about any task.
    pub fn flat(n_tasks: usize) -> Self {
        let half = 0.5f64.ln();
        Self {
            log_on: vec![half; n_tasks],
            log_off: vec![half; n_tasks],
        }
    }

    /// From explicit `(p(Z|θ=1), p(Z|θ=0))` pairs.
    pub fn from_probs(pairs: &[(f64, f64)]) -> Self {
        Self {
            log_on: pairs.iter().map(|p| p.0.ln()).collect(),
            log_off: pairs.iter().map(|p| p.1.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_on.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_on.is_empty()
    }

    pub fn log(&self, task: usize, enacted: bool) -> f64 {
        if enacted {
            self.log_on[task]
        } else {
            self.log_off[task]
        }
    }
}

/// Full pipeline from a resolved record to task likelihoods.
pub fn record_likelihoods(record: &ObservationRecord, spec: &ModelSpec) -> TaskLikelihoods {
    TaskLikelihoods::from_intensities(&filter_tau(&normalize(record, spec), spec), spec)
}

fn parse_cell(cell: &str, line: usize) -> Result<Option<f64>, ObservationError> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|e| ObservationError::Stream {
            line,
            message: format!("`{cell}`: {e}"),
        })
}

fn parse_t(cell: &str, line: usize) -> Result<u64, ObservationError> {
    cell.trim().parse::<u64>().map_err(|e| ObservationError::Stream {
        line,
        message: format!("timestamp `{cell}`: {e}"),
    })
}

/// CSV stream: header `t` plus observable ids, one row per period, blank
/// cells missing.
pub fn parse_csv_stream(text: &str) -> Result<Vec<RawObservation>, ObservationError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ObservationError::Stream {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let t_col = headers
        .iter()
        .position(|h| h == "t")
        .ok_or_else(|| ObservationError::Stream {
            line: 1,
            message: "missing `t` column".into(),
        })?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| ObservationError::Stream {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let mut raw = RawObservation {
            t: parse_t(&row[t_col], line)?,
            values: BTreeMap::new(),
        };
        for (i, h) in headers.iter().enumerate() {
            if i != t_col {
                raw.values.insert(h.to_string(), parse_cell(&row[i], line)?);
            }
        }
        out.push(raw);
    }
    Ok(out)
}

/// JSON-lines stream: one flat object per line with key `t` and observable
/// ids; `null` values are missing. Blank lines are skipped.
pub fn parse_jsonl_stream(text: &str) -> Result<Vec<RawObservation>, ObservationError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| ObservationError::Stream { line: line_no, message };
        let obj: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        let mut raw = RawObservation::default();
        let mut seen_t = false;
        for (k, v) in obj {
            if k == "t" {
                raw.t = v.as_u64().ok_or_else(|| err(format!("timestamp {v} is not a non-negative integer")))?;
                seen_t = true;
            } else if v.is_null() {
                raw.values.insert(k, None);
            } else {
                let x = v.as_f64().ok_or_else(|| err(format!("value of `{k}` is not a number")))?;
                raw.values.insert(k, Some(x));
            }
        }
        if !seen_t {
            return Err(err("missing `t`".into()));
        }
        out.push(raw);
    }
    Ok(out)
}
