//! Random small models and a brute-force filter over the full (W, θ)
//! lattice, written without the engine's update code.

#![allow(dead_code)]

use escalate_core::model_spec::{parse_model, LikelihoodMode, ModelSpec, Polarity};
use escalate_core::observation::ObservationRecord;
use escalate_core::task_model::solve_xi;
use escalate_core::Model;
use rand::Rng;
use serde_json::json;

pub fn random_model<R: Rng>(rng: &mut R) -> ModelSpec {
    loop {
        let spec = random_candidate(rng);
        if Model::new(spec.clone()).is_ok() {
            return spec;
        }
    }
}

fn random_candidate<R: Rng>(rng: &mut R) -> ModelSpec {
    let n_active = rng.gen_range(1..=3);
    let n_tasks = rng.gen_range(1..=3);
    let n_obs = rng.gen_range(1..=3);
    let states: Vec<String> = (0..=n_active).map(|i| format!("w{i}")).collect();
    let tasks: Vec<String> = (0..n_tasks).map(|j| format!("t{j}")).collect();
    let observables: Vec<String> = (0..n_obs).map(|o| format!("o{o}")).collect();

    let mut edges = Vec::new();
    for i in 1..=n_active {
        let targets: Vec<usize> = (1..=n_active).filter(|&j| j != i && rng.gen_bool(0.6)).collect();
        if targets.is_empty() {
            continue;
        }
        let weights: Vec<f64> = targets.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mass = rng.gen_range(0.2..0.95);
        for (j, w) in targets.iter().zip(weights) {
            edges.push(json!({"from": states[i], "to": states[*j], "prob": mass * w / total}));
        }
    }

    let raw: Vec<f64> = (0..=n_active).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let priors: serde_json::Map<_, _> = states.iter().zip(&raw).map(|(s, p)| (s.clone(), json!(p / total))).collect();

    let mut incidence = serde_json::Map::new();
    for s in &states[1..] {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for t in &tasks {
            if rng.gen_bool(0.6) {
                if rng.gen_bool(0.25) {
                    neg.push(t.clone());
                } else {
                    pos.push(t.clone());
                }
            }
        }
        if pos.is_empty() && neg.is_empty() {
            pos.push(tasks[rng.gen_range(0..n_tasks)].clone());
        }
        incidence.insert(s.clone(), json!({"positive": pos, "negative": neg}));
    }

    let mut obs_inc = serde_json::Map::new();
    let mut assigned: Vec<Vec<String>> = vec![Vec::new(); n_obs];
    for t in &tasks {
        assigned[rng.gen_range(0..n_obs)].push(t.clone());
        for a in assigned.iter_mut() {
            if rng.gen_bool(0.3) && !a.contains(t) {
                a.push(t.clone());
            }
        }
    }
    for (o, ts) in observables.iter().zip(assigned) {
        obs_inc.insert(o.clone(), json!(ts));
    }

    let doc = json!({
        "format": 1,
        "states": states.iter().map(|s| json!({"id": s})).collect::<Vec<_>>(),
        "edges": edges,
        "priors": priors,
        "tasks": tasks.iter().map(|t| json!({"id": t})).collect::<Vec<_>>(),
        "task_state_incidence": incidence,
        "neutral_task_probs": tasks.iter().map(|t| (t.clone(), json!(rng.gen_range(0.02..0.5)))).collect::<serde_json::Map<_, _>>(),
        "p_plus": states[1..].iter().map(|s| (s.clone(), json!(rng.gen_range(0.25..0.9)))).collect::<serde_json::Map<_, _>>(),
        "observables": observables.iter().map(|o| json!({"id": o, "mean": rng.gen_range(-1.0..1.0), "sd": rng.gen_range(0.5..2.0)})).collect::<Vec<_>>(),
        "observable_task_incidence": obs_inc,
        "likelihood_params": tasks.iter().map(|t| (t.clone(), json!({
            "x0": rng.gen_range(-1.0..1.5), "k0": rng.gen_range(0.3..2.0), "k1": rng.gen_range(1.0..6.0)
        }))).collect::<serde_json::Map<_, _>>(),
        "likelihood_mode": if rng.gen_bool(0.5) { "average" } else { "product" },
        "holding_params": states[1..].iter().map(|s| (s.clone(), json!(rng.gen_range(0.02..0.5)))).collect::<serde_json::Map<_, _>>(),
        "substeps_k": rng.gen_range(1..=3),
    });
    parse_model(&doc.to_string()).expect("random document parses")
}

pub fn random_record<R: Rng>(rng: &mut R, spec: &ModelSpec, t: u64) -> ObservationRecord {
    ObservationRecord {
        t,
        values: spec
            .observables
            .iter()
            .map(|o| (!rng.gen_bool(0.15)).then(|| o.mean + o.sd * rng.gen_range(-2.5..3.5)))
            .collect(),
    }
}

/// Random clamp of a non-empty task subset, as `(task id, value)` pairs.
pub fn random_clamp<R: Rng>(rng: &mut R, spec: &ModelSpec) -> Vec<(String, bool)> {
    loop {
        let mut c = Vec::new();
        for t in &spec.tasks {
            if rng.gen_bool(0.5) {
                c.push((t.id.clone(), rng.gen_bool(0.5)));
            }
        }
        if !c.is_empty() {
            return c;
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Brute-force filter with its own transition matrix and task tables.
pub struct Oracle {
    spec: ModelSpec,
    step: Vec<Vec<f64>>,
    xi: Vec<Option<f64>>,
}

impl Oracle {
    pub fn new(spec: &ModelSpec) -> Self {
        let n = spec.states.len();
        let mut m = vec![vec![0.0; n]; n];
        m[0][0] = 1.0;
        for i in 1..n {
            let z = spec.holding[i];
            let mut out = 0.0;
            for e in spec.edges.iter().filter(|e| e.from == i) {
                m[i][e.to] += z * e.prob;
                out += e.prob;
            }
            m[i][0] += z * (1.0 - out);
            m[i][i] += 1.0 - z;
        }
        let mut step = m.clone();
        for _ in 1..spec.substeps_k {
            step = matmul(&step, &m);
        }
        let xi = (0..n)
            .map(|s| {
                if s == 0 {
                    return None;
                }
                let inc = &spec.incidence[s];
                let pos: Vec<f64> = inc.positive().map(|t| spec.neutral_task_probs[t]).collect();
                let neg: Vec<f64> = inc.negative().map(|t| spec.neutral_task_probs[t]).collect();
                if pos.len() + neg.len() < 2 {
                    return None;
                }
                let probs: Vec<f64> = pos.iter().chain(&neg).copied().collect();
                Some(solve_xi(spec.p_plus[s], &probs, pos.len(), neg.len()).expect("model was accepted"))
            })
            .collect();
        Self {
            spec: spec.clone(),
            step,
            xi,
        }
    }

    fn neutral_task(&self, t: usize, on: bool) -> f64 {
        let p = self.spec.neutral_task_probs[t];
        if on {
            p
        } else {
            1.0 - p
        }
    }

    /// `p(θ restricted to the state's tasks | w_s)` for a full task vector.
    fn state_table(&self, s: usize, theta: &[bool]) -> f64 {
        let members = &self.spec.incidence[s].members;
        let r = members.len();
        let k = members
            .iter()
            .filter(|&&(t, pol)| match pol {
                Polarity::Positive => theta[t],
                Polarity::Negative => !theta[t],
            })
            .count();
        let p_plus = self.spec.p_plus[s];
        if r == 1 {
            return if k == 1 { p_plus } else { 1.0 - p_plus };
        }
        let p0: f64 = members
            .iter()
            .map(|&(t, pol)| self.neutral_task(t, pol == Polarity::Positive))
            .product();
        if k == r {
            return p_plus;
        }
        if k == 0 {
            return p0;
        }
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let a = (k as f64 / r as f64).powf(self.xi[s].expect("multi-task state"));
        sigmoid(a * logit(p_plus) + (1.0 - a) * logit(p0))
    }

    /// Full generative `p(θ | w_s)`: the state's table on its own tasks,
    /// neutral naive Bayes elsewhere.
    fn joint(&self, s: usize, theta: &[bool]) -> f64 {
        let own = |t: usize| s != 0 && self.spec.incidence[s].contains(t);
        let rest: f64 = (0..theta.len())
            .filter(|&t| !own(t))
            .map(|t| self.neutral_task(t, theta[t]))
            .product();
        if s == 0 {
            rest
        } else {
            self.state_table(s, theta) * rest
        }
    }

    /// Per-task `(p(Z|θ=1), p(Z|θ=0))`, flat when no observable is present.
    pub fn task_scores(&self, record: &ObservationRecord) -> Vec<(f64, f64)> {
        let spec = &self.spec;
        (0..spec.tasks.len())
            .map(|t| {
                let zs: Vec<f64> = spec
                    .observable_tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, ts)| ts.contains(&t))
                    .filter_map(|(o, _)| record.values[o].map(|y| (y - spec.observables[o].mean) / spec.observables[o].sd))
                    .collect();
                if zs.is_empty() {
                    return (0.5, 0.5);
                }
                let z = zs.iter().sum::<f64>() / zs.len() as f64;
                let p = spec.likelihood_params[t];
                let k = if z < p.x0 { p.k0 } else { p.k1 };
                let u = k * (z - p.x0);
                (sigmoid(u), sigmoid(-u))
            })
            .collect()
    }

    pub fn predict(&self, dist: &[f64]) -> Vec<f64> {
        let n = dist.len();
        (0..n).map(|j| (0..n).map(|i| dist[i] * self.step[i][j]).sum()).collect()
    }

    /// Posterior over states given per-task scores and clamped tasks.
    pub fn update(&self, pred: &[f64], scores: &[(f64, f64)], clamp: &[Option<bool>]) -> Vec<f64> {
        let n_tasks = self.spec.tasks.len();
        let lattice: Vec<Vec<bool>> = (0..1u32 << n_tasks)
            .map(|m| (0..n_tasks).map(|t| m >> t & 1 == 1).collect())
            .filter(|theta: &Vec<bool>| (0..n_tasks).all(|t| clamp[t].is_none_or(|v| v == theta[t])))
            .collect();
        let score = |t: usize, on: bool| if on { scores[t].0 } else { scores[t].1 };
        let n = pred.len();
        let weights: Vec<f64> = match self.spec.likelihood_mode {
            LikelihoodMode::Product => (0..n)
                .map(|s| {
                    let lik: f64 = lattice
                        .iter()
                        .map(|th| self.joint(s, th) * (0..n_tasks).map(|t| score(t, th[t])).product::<f64>())
                        .sum();
                    pred[s] * lik
                })
                .collect(),
            LikelihoodMode::Average => (0..n)
                .map(|s| {
                    if s == 0 {
                        return pred[0];
                    }
                    let free: Vec<usize> = self.spec.incidence[s]
                        .task_ids()
                        .filter(|&t| clamp[t].is_none())
                        .collect();
                    let h = |th: &[bool]| {
                        if free.is_empty() {
                            1.0
                        } else {
                            free.iter().map(|&t| score(t, th[t])).sum::<f64>() / free.len() as f64
                        }
                    };
                    let num: f64 = lattice.iter().map(|th| self.joint(s, th) * h(th)).sum();
                    let den: f64 = lattice.iter().map(|th| self.joint(0, th) * h(th)).sum();
                    pred[s] * num / den
                })
                .collect(),
        };
        let total: f64 = weights.iter().sum();
        weights.iter().map(|w| w / total).collect()
    }
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
