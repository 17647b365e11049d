//! Semi-Markov transition matrices on the observation grid.
//!
//! Over one base interval at most one transition happens: state `i` stays put
//! with probability `1 - ζ_i` and otherwise jumps along its edges, with the
//! remainder of the jump-chain row going to the neutral state. The neutral
//! row is absorbing. Observation intervals spanning `k` base intervals use
//! the `k`-th power.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_spec::{ModelSpec, NEUTRAL};

const DIST_TOL: f64 = 1e-9;
/// Default L-infinity threshold between successive distributions used to
/// declare convergence.
pub const CONVERGENCE_TOL: f64 = 1e-12;
/// Default cap on the number of periods evolved when looking for a limit.
pub const DEFAULT_PERIOD_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdcegError {
    #[error("matrix power must be at least 1")]
    ZeroPower,
    #[error("distribution has {got} entries, matrix has {expected} states")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Row-stochastic square matrix over the model states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
    /// Number of base intervals this matrix spans.
    periods: u32,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.into_iter().flatten().collect(),
            periods: 1,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data, periods: 1 }
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn periods(&self) -> u32 {
        self.periods
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// True when every row is non-negative and sums to one within `tol`.
    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.data.chunks(self.n).all(|row| {
            row.iter().all(|&x| x >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.row(i)
            .iter()
            .enumerate()
            .all(|(j, &x)| if j == i { x == 1.0 } else { x == 0.0 })
    }

    fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        TransitionMatrix {
            n,
            data,
            periods: self.periods + other.periods,
        }
    }
}

/// Builds the single-interval matrix: `1 - ζ_i` on the diagonal, `ζ_i m_ij`
/// off it, with `m_i0` the implied neutral remainder.
pub fn build_transition_matrix(spec: &ModelSpec) -> TransitionMatrix {
    let n = spec.n_states();
    let mut data = vec![0.0; n * n];
    data[NEUTRAL * n + NEUTRAL] = 1.0;
    for i in spec.active_states() {
        let zeta = spec.holding[i];
        data[i * n + i] = 1.0 - zeta;
        data[i * n + NEUTRAL] = zeta * spec.implied_neutral_prob(i).max(0.0);
        for e in spec.edges.iter().filter(|e| e.from == i && e.to != i) {
            data[i * n + e.to] += zeta * e.prob;
        }
    }
    TransitionMatrix { n, data, periods: 1 }
}

/// `m` multiplied by itself `k` times.
pub fn matrix_power(m: &TransitionMatrix, k: u32) -> Result<TransitionMatrix, RdcegError> {
    if k == 0 {
        return Err(RdcegError::ZeroPower);
    }
    let mut acc = m.clone();
    for _ in 1..k {
        acc = acc.mul(m);
    }
    Ok(acc)
}

/// Replaces row `state` with its unit vector.
pub fn make_absorbing(m: &TransitionMatrix, state: usize) -> Result<TransitionMatrix, RdcegError> {
    if state >= m.n {
        return Err(RdcegError::StateOutOfRange(state));
    }
    let mut out = m.clone();
    for j in 0..m.n {
        out.data[state * m.n + j] = if j == state { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Probability distribution over model states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDistribution(Vec<f64>);

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, RdcegError> {
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(RdcegError::InvalidDistribution(format!("negative or non-finite entry in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DIST_TOL {
            return Err(RdcegError::InvalidDistribution(format!("entries sum to {total}")));
        }
        Ok(Self(probs))
    }

    pub(crate) fn new_unchecked(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// One step forward: `dist · m`.
    pub fn propagate(&self, m: &TransitionMatrix) -> Result<StateDistribution, RdcegError> {
        if self.0.len() != m.n {
            return Err(RdcegError::DimensionMismatch {
                expected: m.n,
                got: self.0.len(),
            });
        }
        let n = m.n;
        let mut out = vec![0.0; n];
        for (i, &p) in self.0.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += p * m.data[i * n + j];
            }
        }
        Ok(StateDistribution(out))
    }

    pub fn linf_distance(&self, other: &StateDistribution) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<usize> for StateDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Trajectory `[dist, dist·M, …, dist·Mⁿ]`.
pub fn evolve(dist: &StateDistribution, m: &TransitionMatrix, n: usize) -> Result<Vec<StateDistribution>, RdcegError> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(dist.clone());
    for _ in 0..n {
        let next = out.last().expect("non-empty").propagate(m)?;
        out.push(next);
    }
    Ok(out)
}

/// Outcome of evolving until successive distributions stop moving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub terminal: StateDistribution,
    pub periods: usize,
    pub converged: bool,
}

/// Evolves until the L-infinity step falls below `tol` or `cap` periods have
/// elapsed.
pub fn evolve_to_convergence(
    dist: &StateDistribution,
    m: &TransitionMatrix,
    tol: f64,
    cap: usize,
) -> Result<Convergence, RdcegError> {
    let mut current = dist.clone();
    for period in 1..=cap {
        let next = current.propagate(m)?;
        let moved = next.linf_distance(&current);
        current = next;
        if moved < tol {
            return Ok(Convergence {
                terminal: current,
                periods: period,
                converged: true,
            });
        }
    }
    Ok(Convergence {
        terminal: current,
        periods: cap,
        converged: false,
    })
}
