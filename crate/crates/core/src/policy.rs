//! Nonstationary stochastic policies and composable wrappers.
//!
//! Steps are 1-based (h in {1..H}) in every public signature; internal tables
//! index [h-1]. Mixtures are trajectory-level: a component is drawn once at
//! episode start. That convention is forced by the covariance-additivity
//! requirement (the covariance of a mixture is the weight-average of component
//! covariances), and it makes exact evaluation of a mixture the weight-average
//! of its components' evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::QFunction;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Policy {
    /// Action probabilities indexed [h][s][a].
    StochasticTable(Vec<Vec<Vec<f64>>>),
    /// Action index per (h, s).
    Deterministic(Vec<Vec<usize>>),
    /// Trajectory-level mixture of (weight, policy).
    Mixture(Vec<(f64, Policy)>),
    /// Play base w.p. 1-zeta, a uniform action otherwise, independently per step.
    ZetaGreedy { base: Box<Policy>, zeta: f64 },
    /// Delegate to base for h <= switch_step, uniform for h > switch_step.
    RandomizeAfter { base: Box<Policy>, switch_step: usize },
    /// Per-(h,s) argmax of a Q table; ties break to the lowest action index.
    GreedyOfQ(QFunction),
}

/// Lowest-index argmax — the crate-wide tie-breaking rule.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Policy {
    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Policy {
        let p = 1.0 / num_actions as f64;
        Policy::StochasticTable(vec![vec![vec![p; num_actions]; num_states]; horizon])
    }

    pub fn always_action(action: usize, horizon: usize, num_states: usize) -> Policy {
        Policy::Deterministic(vec![vec![action; num_states]; horizon])
    }

    /// Check shapes and distribution invariants against (H, S, A).
    pub fn validate(&self, horizon: usize, num_states: usize, num_actions: usize) -> Result<()> {
        match self {
            Policy::StochasticTable(t) => {
                if t.len() < horizon {
                    return Err(Error::Config(format!(
                        "policy horizon {} < mdp horizon {}",
                        t.len(),
                        horizon
                    )));
                }
                for (h, per_s) in t.iter().enumerate() {
                    if per_s.len() != num_states {
                        return Err(Error::Config(format!("step {}: wrong state count", h + 1)));
                    }
                    for (s, row) in per_s.iter().enumerate() {
                        if row.len() != num_actions {
                            return Err(Error::Config(format!(
                                "step {} state {s}: wrong action count",
                                h + 1
                            )));
                        }
                        let sum: f64 = row.iter().sum();
                        if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                            return Err(Error::Config(format!(
                                "step {} state {s}: action distribution sums to {sum}",
                                h + 1
                            )));
                        }
                    }
                }
                Ok(())
            }
            Policy::Deterministic(t) => {
                if t.len() < horizon {
                    return Err(Error::Config("deterministic policy horizon too short".into()));
                }
                for per_s in t {
                    if per_s.len() != num_states {
                        return Err(Error::Config("deterministic policy state count".into()));
                    }
                    if per_s.iter().any(|&a| a >= num_actions) {
                        return Err(Error::Config("deterministic policy action out of range".into()));
                    }
                }
                Ok(())
            }
            Policy::Mixture(list) => {
                if list.is_empty() {
                    return Err(Error::Config("empty mixture".into()));
                }
                let wsum: f64 = list.iter().map(|(w, _)| *w).sum();
                if (wsum - 1.0).abs() > 1e-9 || list.iter().any(|(w, _)| *w < 0.0) {
                    return Err(Error::Config(format!("mixture weights sum to {wsum}")));
                }
                for (_, p) in list {
                    p.validate(horizon, num_states, num_actions)?;
                }
                Ok(())
            }
            Policy::ZetaGreedy { base, zeta } => {
                if !(0.0..=1.0).contains(zeta) {
                    return Err(Error::Config(format!("zeta {zeta} outside [0,1]")));
                }
                base.validate(horizon, num_states, num_actions)
            }
            Policy::RandomizeAfter { base, switch_step } => {
                if *switch_step > horizon {
                    return Err(Error::Config(format!(
                        "switch_step {switch_step} > horizon {horizon}"
                    )));
                }
                base.validate(horizon, num_states, num_actions)
            }
            Policy::GreedyOfQ(q) => {
                if q.values.len() < horizon {
                    return Err(Error::Config("Q table horizon too short".into()));
                }
                for per_s in &q.values {
                    if per_s.len() != num_states || per_s.iter().any(|r| r.len() != num_actions) {
                        return Err(Error::Config("Q table shape mismatch".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Trajectory-level decomposition into weighted leaves, each of which has
    /// a well-defined per-(h,s) action distribution.
    pub fn components(&self) -> Vec<(f64, Leaf<'_>)> {
        match self {
            Policy::StochasticTable(t) => vec![(1.0, Leaf::Table(t))],
            Policy::Deterministic(t) => vec![(1.0, Leaf::Det(t))],
            Policy::GreedyOfQ(q) => vec![(1.0, Leaf::Greedy(q))],
            Policy::Mixture(list) => {
                let mut out = Vec::new();
                for (w, p) in list {
                    for (wi, leaf) in p.components() {
                        out.push((w * wi, leaf));
                    }
                }
                out
            }
            Policy::ZetaGreedy { base, zeta } => base
                .components()
                .into_iter()
                .map(|(w, leaf)| (w, Leaf::Zeta { base: Box::new(leaf), zeta: *zeta }))
                .collect(),
            Policy::RandomizeAfter { base, switch_step } => base
                .components()
                .into_iter()
                .map(|(w, leaf)| {
                    (w, Leaf::RandAfter { base: Box::new(leaf), switch_step: *switch_step })
                })
                .collect(),
        }
    }
}

/// A mixture-free policy view; evaluation and sampling work on these.
#[derive(Clone, Debug)]
pub enum Leaf<'a> {
    Table(&'a Vec<Vec<Vec<f64>>>),
    Det(&'a Vec<Vec<usize>>),
    Greedy(&'a QFunction),
    Zeta { base: Box<Leaf<'a>>, zeta: f64 },
    RandAfter { base: Box<Leaf<'a>>, switch_step: usize },
}

impl Leaf<'_> {
    /// Action distribution at 1-based step h in state s.
    pub fn action_probs(&self, h: usize, s: usize, num_actions: usize) -> Vec<f64> {
        match self {
            Leaf::Table(t) => t[h - 1][s].clone(),
            Leaf::Det(t) => {
                let mut row = vec![0.0; num_actions];
                row[t[h - 1][s]] = 1.0;
                row
            }
            Leaf::Greedy(q) => {
                let mut row = vec![0.0; num_actions];
                row[argmax_lowest(&q.values[h - 1][s])] = 1.0;
                row
            }
            Leaf::Zeta { base, zeta } => {
                let mut row = base.action_probs(h, s, num_actions);
                let u = zeta / num_actions as f64;
                for p in row.iter_mut() {
                    *p = (1.0 - zeta) * *p + u;
                }
                row
            }
            Leaf::RandAfter { base, switch_step } => {
                if h > *switch_step {
                    vec![1.0 / num_actions as f64; num_actions]
                } else {
                    base.action_probs(h, s, num_actions)
                }
            }
        }
    }
}
