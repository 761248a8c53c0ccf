//! Finite-horizon tabular MDPs and exact dynamic programming.
//!
//! Conventions, fixed once here and used everywhere:
//! - Steps are h in {1..H}; a reward is collected at every step including H,
//!   and f_{H+1} == 0 (nothing is collected at step H+1).
//! - V_0 denotes V_1(s_init), the value of a policy from the start state.
//! - Argmax ties always resolve to the lowest action index.
//! - Transition rows are renormalized at construction when within 1e-9 of
//!   summing to 1; larger deviations are a hard error.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{argmax_lowest, Leaf, Policy};
use crate::regression::QFunction;
use crate::rng::StreamKey;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LowRankFactorization {
    /// Feature dimension.
    pub d: usize,
    /// phi[s][a] in R^d, each with 2-norm at most 1.
    pub phi: Vec<Vec<Vec<f64>>>,
    /// mu[h][j][s'] so that P_h(s'|s,a) = sum_j phi[s][a][j] * mu[h][j][s'].
    pub mu: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TabularMDP {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub init_state: usize,
    /// transitions[h][s][a][s'], h 0-indexed internally.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// rewards[h][s][a] in [0,1], deterministic and known.
    pub rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factorization: Option<LowRankFactorization>,
}

impl TabularMDP {
    /// Validate and normalize; the only way to obtain a trusted instance.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        init_state: usize,
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        factorization: Option<LowRankFactorization>,
    ) -> Result<Self> {
        let mut mdp = TabularMDP {
            num_states,
            num_actions,
            horizon,
            init_state,
            transitions,
            rewards,
            factorization,
        };
        mdp.validate_and_normalize()?;
        Ok(mdp)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut mdp: TabularMDP = serde_json::from_str(text)?;
        mdp.validate_and_normalize()?;
        Ok(mdp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn validate_and_normalize(&mut self) -> Result<()> {
        let (ns, na, h) = (self.num_states, self.num_actions, self.horizon);
        if ns == 0 || na == 0 || h == 0 {
            return Err(Error::Config("S, A, H must all be positive".into()));
        }
        if self.init_state >= ns {
            return Err(Error::Config(format!("init_state {} out of range", self.init_state)));
        }
        if self.transitions.len() != h || self.rewards.len() != h {
            return Err(Error::Config("transition/reward tensors must have H outer entries".into()));
        }
        for hh in 0..h {
            if self.transitions[hh].len() != ns || self.rewards[hh].len() != ns {
                return Err(Error::Config(format!("step {}: state dimension mismatch", hh + 1)));
            }
            for s in 0..ns {
                if self.transitions[hh][s].len() != na || self.rewards[hh][s].len() != na {
                    return Err(Error::Config(format!(
                        "step {} state {s}: action dimension mismatch",
                        hh + 1
                    )));
                }
                for a in 0..na {
                    let r = self.rewards[hh][s][a];
                    if !(0.0..=1.0).contains(&r) {
                        return Err(Error::Config(format!(
                            "reward[{}][{s}][{a}] = {r} outside [0,1]",
                            hh + 1
                        )));
                    }
                    let row = &mut self.transitions[hh][s][a];
                    if row.len() != ns {
                        return Err(Error::Config(format!(
                            "transition row [{}][{s}][{a}] has wrong length",
                            hh + 1
                        )));
                    }
                    if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                        return Err(Error::Config(format!(
                            "transition row [{}][{s}][{a}] has a negative or non-finite entry",
                            hh + 1
                        )));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "transition row [{}][{s}][{a}] sums to {sum}",
                            hh + 1
                        )));
                    }
                    // Renormalize only when needed so reloading a clean file
                    // is bitwise idempotent.
                    if (sum - 1.0).abs() > 1e-12 {
                        for p in row.iter_mut() {
                            *p /= sum;
                        }
                    }
                }
            }
        }
        if let Some(f) = &self.factorization {
            if f.phi.len() != ns || f.mu.len() != h {
                return Err(Error::Config("factorization outer dimensions mismatch".into()));
            }
            for s in 0..ns {
                if f.phi[s].len() != na {
                    return Err(Error::Config("phi action dimension mismatch".into()));
                }
                for a in 0..na {
                    if f.phi[s][a].len() != f.d {
                        return Err(Error::Config("phi feature dimension mismatch".into()));
                    }
                    let norm: f64 = f.phi[s][a].iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1.0 + 1e-9 {
                        return Err(Error::Config(format!("|phi({s},{a})| = {norm} > 1")));
                    }
                }
            }
            for hh in 0..h {
                if f.mu[hh].len() != f.d || f.mu[hh].iter().any(|row| row.len() != ns) {
                    return Err(Error::Config("mu dimension mismatch".into()));
                }
                // || sum_s |mu_h(s)| ||_2 <= sqrt(d)
                let mut abs_sum = vec![0.0; f.d];
                for j in 0..f.d {
                    for s in 0..ns {
                        abs_sum[j] += f.mu[hh][j][s].abs();
                    }
                }
                let norm: f64 = abs_sum.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > (f.d as f64).sqrt() + 1e-9 {
                    return Err(Error::Config(format!(
                        "mu total-variation norm {norm} exceeds sqrt(d) at step {}",
                        hh + 1
                    )));
                }
                for s in 0..ns {
                    for a in 0..na {
                        for sp in 0..ns {
                            let dot: f64 =
                                (0..f.d).map(|j| f.phi[s][a][j] * f.mu[hh][j][sp]).sum();
                            if (dot - self.transitions[hh][s][a][sp]).abs() > 1e-9 {
                                return Err(Error::Config(format!(
                                    "factorization mismatch at (h={},s={s},a={a},s'={sp}): {dot} vs {}",
                                    hh + 1,
                                    self.transitions[hh][s][a][sp]
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// 1-based accessor for a transition row.
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h - 1][s][a]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[h - 1][s][a]
    }

    pub fn v_max(&self) -> f64 {
        self.horizon as f64
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        policy.validate(self.horizon, self.num_states, self.num_actions)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub total_return: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    /// w[h][s][a], each step summing to 1.
    pub w: Vec<Vec<Vec<f64>>>,
}

impl OccupancyMeasure {
    /// Probability mass on a set of (s,a) pairs at 1-based step h.
    pub fn mass(&self, h: usize, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(s, a)| self.w[h - 1][s][a]).sum()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CovarianceSummary {
    pub step: usize,
    /// Row-major d x d symmetric PSD matrix.
    pub lambda: Vec<Vec<f64>>,
    pub min_eig: f64,
    /// True when computed from exact occupancancies rather than samples.
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u64>,
}

/// Smallest eigenvalue of a symmetric matrix given as nested rows.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (m[i][j] + m[j][i]));
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Roll one episode. The per-step stream draws the action then the next
/// state; stream 0 of the episode picks the mixture component, so identical
/// (mdp, policy, key) triples reproduce the trajectory bit-for-bit.
pub fn sample_trajectory(mdp: &TabularMDP, policy: &Policy, key: &StreamKey) -> Result<Trajectory> {
    mdp.check_policy(policy)?;
    let leaves = policy.components();
    let leaf: &Leaf = if leaves.len() == 1 {
        &leaves[0].1
    } else {
        let weights: Vec<f64> = leaves.iter().map(|(w, _)| *w).collect();
        let idx = key.stream(0).sample_index(&weights);
        &leaves[idx].1
    };
    let mut s = mdp.init_state;
    let mut steps = Vec::with_capacity(mdp.horizon);
    let mut total = 0.0;
    for h in 1..=mdp.horizon {
        let mut rng = key.stream(h as u64);
        let probs = leaf.action_probs(h, s, mdp.num_actions);
        let a = rng.sample_index(&probs);
        let r = mdp.reward(h, s, a);
        let next = rng.sample_index(mdp.row(h, s, a));
        steps.push(TrajectoryStep { h, state: s, action: a, reward: r, next_state: next });
        total += r;
        s = next;
    }
    Ok(Trajectory { steps, total_return: total })
}

fn leaf_values(mdp: &TabularMDP, leaf: &Leaf) -> Vec<Vec<f64>> {
    let (h_max, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut v = vec![vec![0.0; ns]; h_max + 1];
    for h in (1..=h_max).rev() {
        for s in 0..ns {
            let probs = leaf.action_probs(h, s, na);
            let mut val = 0.0;
            for a in 0..na {
                if probs[a] == 0.0 {
                    continue;
                }
                let mut q = mdp.reward(h, s, a);
                for (sp, &p) in mdp.row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        q += p * v[h][sp];
                    }
                }
                val += probs[a] * q;
            }
            v[h - 1][s] = val;
        }
    }
    v.truncate(h_max);
    v
}

/// Exact policy value: V_0 plus per-step state-value tables. For mixtures the
/// tables are component-weighted averages (V_0 is exact by linearity).
pub fn policy_value_exact(mdp: &TabularMDP, policy: &Policy) -> Result<(f64, Vec<Vec<f64>>)> {
    mdp.check_policy(policy)?;
    let mut v = vec![vec![0.0; mdp.num_states]; mdp.horizon];
    let mut v0 = 0.0;
    for (w, leaf) in policy.components() {
        let vl = leaf_values(mdp, &leaf);
        v0 += w * vl[0][mdp.init_state];
        for h in 0..mdp.horizon {
            for s in 0..mdp.num_states {
                v[h][s] += w * vl[h][s];
            }
        }
    }
    Ok((v0, v))
}

/// Q_h^pi(s,a) = r + P V_{h+1}^pi; mixtures give component-weighted tables.
pub fn q_values_exact(mdp: &TabularMDP, policy: &Policy) -> Result<QFunction> {
    mdp.check_policy(policy)?;
    let (hm, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut q = vec![vec![vec![0.0; na]; ns]; hm];
    for (w, leaf) in policy.components() {
        let v = leaf_values(mdp, &leaf);
        for h in 1..=hm {
            for s in 0..ns {
                for a in 0..na {
                    let mut val = mdp.reward(h, s, a);
                    if h < hm {
                        for (sp, &p) in mdp.row(h, s, a).iter().enumerate() {
                            if p > 0.0 {
                                val += p * v[h][sp];
                            }
                        }
                    }
                    q[h - 1][s][a] += w * val;
                }
            }
        }
    }
    Ok(QFunction { values: q, v_max: mdp.v_max() })
}

/// Exact value iteration; `reward_override` (entries in [0, R_max]) replaces
/// the MDP's reward tensor. Greedy ties break to the lowest action index.
pub fn optimal_policy_vi(
    mdp: &TabularMDP,
    reward_override: Option<&Vec<Vec<Vec<f64>>>>,
) -> Result<(Policy, QFunction, f64)> {
    let (hm, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    if let Some(r) = reward_override {
        if r.len() != hm || r.iter().any(|x| x.len() != ns || x.iter().any(|y| y.len() != na)) {
            return Err(Error::Config("reward override shape mismatch".into()));
        }
    }
    let reward = |h: usize, s: usize, a: usize| match reward_override {
        Some(r) => r[h - 1][s][a],
        None => mdp.reward(h, s, a),
    };
    let mut r_max = 0.0f64;
    for h in 1..=hm {
        for s in 0..ns {
            for a in 0..na {
                r_max = r_max.max(reward(h, s, a));
            }
        }
    }
    let mut q = vec![vec![vec![0.0; na]; ns]; hm];
    let mut v_next = vec![0.0; ns];
    let mut actions = vec![vec![0usize; ns]; hm];
    for h in (1..=hm).rev() {
        let mut v_here = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let mut val = reward(h, s, a);
                for (sp, &p) in mdp.row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        val += p * v_next[sp];
                    }
                }
                q[h - 1][s][a] = val;
            }
            let best = argmax_lowest(&q[h - 1][s]);
            actions[h - 1][s] = best;
            v_here[s] = q[h - 1][s][best];
        }
        v_next = v_here;
    }
    let v_star = v_next[mdp.init_state];
    let v_max = (hm as f64) * r_max.max(1.0);
    Ok((Policy::Deterministic(actions), QFunction { values: q, v_max }, v_star))
}

fn leaf_occupancy(mdp: &TabularMDP, leaf: &Leaf) -> Vec<Vec<Vec<f64>>> {
    let (hm, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut w = vec![vec![vec![0.0; na]; ns]; hm];
    let mut state_occ = vec![0.0; ns];
    state_occ[mdp.init_state] = 1.0;
    for h in 1..=hm {
        let mut next_occ = vec![0.0; ns];
        for s in 0..ns {
            if state_occ[s] == 0.0 {
                continue;
            }
            let probs = leaf.action_probs(h, s, na);
            for a in 0..na {
                let mass = state_occ[s] * probs[a];
                if mass == 0.0 {
                    continue;
                }
                w[h - 1][s][a] = mass;
                for (sp, &p) in mdp.row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        next_occ[sp] += mass * p;
                    }
                }
            }
        }
        state_occ = next_occ;
    }
    w
}

/// Forward DP for w_h^pi(s,a); mixtures are weight-averaged (trajectory-level).
pub fn occupancy_measures(mdp: &TabularMDP, policy: &Policy) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let (hm, ns, na) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut w = vec![vec![vec![0.0; na]; ns]; hm];
    for (weight, leaf) in policy.components() {
        let wl = leaf_occupancy(mdp, &leaf);
        for h in 0..hm {
            for s in 0..ns {
                for a in 0..na {
                    w[h][s][a] += weight * wl[h][s][a];
                }
            }
        }
    }
    Ok(OccupancyMeasure { w })
}

/// Lambda_h = sum_{s,a} w_h(s,a) phi phi^T from exact occupancies.
pub fn feature_covariance(mdp: &TabularMDP, policy: &Policy, h: usize) -> Result<CovarianceSummary> {
    let f = mdp
        .factorization
        .as_ref()
        .ok_or_else(|| Error::Config("feature_covariance requires a factorization".into()))?;
    if h == 0 || h > mdp.horizon {
        return Err(Error::Config(format!("step {h} out of range")));
    }
    let occ = occupancy_measures(mdp, policy)?;
    let mut lambda = vec![vec![0.0; f.d]; f.d];
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let mass = occ.w[h - 1][s][a];
            if mass == 0.0 {
                continue;
            }
            let phi = &f.phi[s][a];
            for i in 0..f.d {
                if phi[i] == 0.0 {
                    continue;
                }
                for j in 0..f.d {
                    lambda[i][j] += mass * phi[i] * phi[j];
                }
            }
        }
    }
    let min_eig = min_eigenvalue(&lambda);
    Ok(CovarianceSummary { step: h, lambda, min_eig, exact: true, sample_count: None })
}

/// Max over (s,a,h) of the TV distance between transition rows, plus where.
pub fn tv_gap(a: &TabularMDP, b: &TabularMDP) -> Result<(f64, (usize, usize, usize))> {
    if a.num_states != b.num_states || a.num_actions != b.num_actions || a.horizon != b.horizon {
        return Err(Error::Config("tv_gap requires matching (S, A, H)".into()));
    }
    let mut best = 0.0;
    let mut loc = (1, 0, 0);
    for h in 1..=a.horizon {
        for s in 0..a.num_states {
            for ac in 0..a.num_actions {
                let tv: f64 = a
                    .row(h, s, ac)
                    .iter()
                    .zip(b.row(h, s, ac))
                    .map(|(x, y)| (x - y).abs())
                    .sum::<f64>()
                    / 2.0;
                if tv > best {
                    best = tv;
                    loc = (h, s, ac);
                }
            }
        }
    }
    Ok((best, loc))
}

/// One Bellman backup: (T f)(s,a) = r_h(s,a) + sum_s' P_h(s'|s,a) max_a' f_next(s',a').
/// Pass an empty or zero table for f_{H+1}.
pub fn bellman_apply(mdp: &TabularMDP, f_next: &[Vec<f64>], h: usize) -> Vec<Vec<f64>> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let v_next: Vec<f64> = (0..ns)
        .map(|s| {
            if f_next.is_empty() {
                0.0
            } else {
                f_next[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    let mut out = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            let mut val = mdp.reward(h, s, a);
            for (sp, &p) in mdp.row(h, s, a).iter().enumerate() {
                if p > 0.0 {
                    val += p * v_next[sp];
                }
            }
            out[s][a] = val;
        }
    }
    out
}

/// Tightest constant R with: every realizable (s,a) sequence in either MDP has
/// total reward <= R. Support-restricted DP from every start cell.
pub fn max_achievable_return(a: &TabularMDP, b: &TabularMDP) -> f64 {
    let one = |m: &TabularMDP| -> f64 {
        let (hm, ns, na) = (m.horizon, m.num_states, m.num_actions);
        let mut best = vec![0.0f64; ns];
        let mut overall = 0.0f64;
        for h in (1..=hm).rev() {
            let mut here = vec![f64::NEG_INFINITY; ns];
            for s in 0..ns {
                for ac in 0..na {
                    let cont = if h == hm {
                        0.0
                    } else {
                        m.row(h, s, ac)
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(sp, _)| best[sp])
                            .fold(f64::NEG_INFINITY, f64::max)
                    };
                    let val = m.reward(h, s, ac) + cont;
                    here[s] = here[s].max(val);
                    overall = overall.max(val);
                }
            }
            best = here;
        }
        overall
    };
    one(a).max(one(b))
}
