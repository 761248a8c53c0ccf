//! Exploration design inside the simulator: a Frank-Wolfe style
//! min-eigenvalue policy design, staged reward-free data collection, and
//! exact coverage diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::error::{Error, Result};
use crate::mdp::{
    feature_covariance, min_eigenvalue, optimal_policy_vi, sample_trajectory, TabularMDP,
};
use crate::policy::Policy;
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// Stop when the min-eigenvalue stops improving (or hits a known target).
    Practical,
    /// Doubling schedule with the large-constant termination test; nearly
    /// always runs to the budget cap on desk-scale instances.
    Faithful,
}

#[derive(Clone, Debug)]
pub struct DesignConfig {
    pub mode: DesignMode,
    pub delta: f64,
    /// Practical mode: minimum min-eig improvement per patience window.
    pub improvement_tol: f64,
    pub patience: usize,
    /// Optional known optimum; practical mode also stops at (1-1e-3) of it.
    pub target_bound: Option<f64>,
    /// Hard cap on design-loop rounds (policies in the mixture).
    pub max_rounds: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            mode: DesignMode::Practical,
            delta: 0.05,
            improvement_tol: 1e-4,
            patience: 5,
            target_bound: None,
            max_rounds: 400,
        }
    }
}

/// The design for one step: a uniform mixture of deterministic policies whose
/// step-h feature covariance has large minimum eigenvalue.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepDesign {
    pub step: usize,
    pub policies: Vec<Policy>,
    /// Uniform by construction; kept explicit for serialization.
    pub weights: Vec<f64>,
    pub achieved_min_eig: f64,
    pub mode: DesignMode,
    pub warnings: Vec<String>,
}

impl StepDesign {
    pub fn mixture(&self) -> Policy {
        Policy::Mixture(
            self.weights.iter().cloned().zip(self.policies.iter().cloned()).collect(),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplorationPolicySet {
    pub per_step: Vec<StepDesign>,
}

fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let d = m.len();
    DMatrix::from_fn(d, d, |i, j| m[i][j])
}

fn feature_dim(sim: &TabularMDP) -> Result<usize> {
    sim.factorization
        .as_ref()
        .map(|f| f.d)
        .ok_or_else(|| Error::Config("operation requires a low-rank factorization".into()))
}

/// Coordinates never activated by any feature vector; such directions are
/// unreachable and cap the achievable min-eigenvalue at zero.
fn dead_coordinates(sim: &TabularMDP) -> Vec<usize> {
    let f = sim.factorization.as_ref().unwrap();
    (0..f.d)
        .filter(|&j| {
            f.phi.iter().flatten().all(|phi| phi[j] == 0.0)
        })
        .collect()
}

/// Reward tensor that is phi' M phi at step h and zero elsewhere.
fn quadratic_reward(sim: &TabularMDP, h: usize, m: &DMatrix<f64>) -> Vec<Vec<Vec<f64>>> {
    let f = sim.factorization.as_ref().unwrap();
    let mut reward = vec![vec![vec![0.0; sim.num_actions]; sim.num_states]; sim.horizon];
    for s in 0..sim.num_states {
        for a in 0..sim.num_actions {
            let phi = &f.phi[s][a];
            let mut val = 0.0;
            for i in 0..f.d {
                if phi[i] == 0.0 {
                    continue;
                }
                for j in 0..f.d {
                    val += phi[i] * m[(i, j)] * phi[j];
                }
            }
            reward[h - 1][s][a] = val.max(0.0);
        }
    }
    reward
}

/// Iterative min-eigenvalue design at step h: repeatedly best-respond to the
/// gradient of tr((Lambda + zeta I)^-1) via exact policy optimization and
/// average the responder into the mixture.
pub fn learn_exp_policies(
    sim: &TabularMDP,
    h: usize,
    zeta: f64,
    config: &DesignConfig,
) -> Result<StepDesign> {
    let d = feature_dim(sim)?;
    if zeta <= 0.0 {
        return Err(Error::Config(format!("zeta {zeta} must be positive")));
    }
    if h == 0 || h > sim.horizon {
        return Err(Error::Config(format!("design step {h} out of range")));
    }
    let mut warnings = Vec::new();
    let dead = dead_coordinates(sim);
    if !dead.is_empty() {
        warnings.push(format!(
            "unreachable feature coordinate(s) {dead:?}: min eigenvalue is 0; returning best effort"
        ));
    }

    let mut lambda = DMatrix::<f64>::zeros(d, d);
    let mut policies: Vec<Policy> = Vec::new();
    let mut min_eig = 0.0;
    // The mixture is uniform over a prefix of the responders; keep the best
    // prefix seen, since the iterates oscillate around the optimum.
    let mut best_k = 0usize;
    let mut best_min = f64::NEG_INFINITY;
    let mut rounds_since_gain = 0usize;

    let round_budget = match config.mode {
        DesignMode::Practical => config.max_rounds,
        DesignMode::Faithful => config.max_rounds,
    };
    // Faithful-mode doubling schedule bookkeeping.
    let mut faithful_j = 0usize;
    let mut faithful_t = 0usize;

    for k in 0..round_budget {
        let reg = &lambda + DMatrix::identity(d, d) * zeta;
        let inv = reg.clone().try_inverse().ok_or_else(|| {
            Error::Numerical("design gradient: covariance + zeta I not invertible".into())
        })?;
        let grad = &inv * &inv; // -d/dLambda tr((Lambda + zeta I)^-1)
        let reward = quadratic_reward(sim, h, &grad);
        let (pi, _, _) = optimal_policy_vi(sim, Some(&reward))?;
        let cov = feature_covariance(sim, &pi, h)?;
        let cov_m = to_dmatrix(&cov.lambda);
        let kf = k as f64;
        lambda = lambda * (kf / (kf + 1.0)) + cov_m / (kf + 1.0);
        policies.push(pi);
        min_eig = {
            let sym = DMatrix::from_fn(d, d, |i, j| 0.5 * (lambda[(i, j)] + lambda[(j, i)]));
            sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let improved = min_eig > best_min + config.improvement_tol;
        if min_eig > best_min {
            best_min = min_eig;
            best_k = k + 1;
        }
        match config.mode {
            DesignMode::Practical => {
                if let Some(target) = config.target_bound {
                    if min_eig >= (1.0 - 1e-3) * target {
                        break;
                    }
                }
                if improved {
                    rounds_since_gain = 0;
                } else {
                    rounds_since_gain += 1;
                    if rounds_since_gain >= config.patience && k + 1 >= config.patience {
                        break;
                    }
                }
            }
            DesignMode::Faithful => {
                // T_j = (N_j + 1) K_j with N_j = ceil(2^{j/3}) - 1,
                // K_j = ceil(2^{2j/3}); test the epoch once its rounds elapse.
                if faithful_t == 0 {
                    faithful_j += 1;
                    let j = faithful_j as f64;
                    let n_j = (2f64.powf(j / 3.0)).ceil() as usize - 1;
                    let k_j = (2f64.powf(2.0 * j / 3.0)).ceil() as usize;
                    faithful_t = (n_j + 1) * k_j;
                }
                faithful_t -= 1;
                if faithful_t == 0 {
                    let t_total = (k + 1) as f64;
                    let threshold =
                        12544.0 * d as f64 * ((4.0 + 64.0 * t_total) / config.delta).ln();
                    if min_eig * t_total >= threshold {
                        break;
                    }
                }
            }
        }
        if k + 1 == round_budget && config.mode == DesignMode::Faithful {
            warnings.push(format!(
                "faithful-mode termination test never passed within {round_budget} rounds; \
                 returning best-effort design"
            ));
        }
    }
    if config.mode == DesignMode::Faithful || best_k == 0 {
        best_k = policies.len();
        best_min = min_eig;
    }
    policies.truncate(best_k);
    Ok(StepDesign {
        step: h,
        policies,
        weights: vec![1.0 / best_k as f64; best_k],
        achieved_min_eig: best_min,
        mode: config.mode,
        warnings,
    })
}

/// Wrap a policy to act as given through step h0 and uniformly afterwards.
pub fn randomize_after(base: Policy, h0: usize) -> Policy {
    Policy::RandomizeAfter { base: Box::new(base), switch_step: h0 }
}

/// Exact supremum over policies of the step-h occupancancy of the complement
/// of `covered`: value iteration on the indicator reward.
pub fn uncovered_mass(sim: &TabularMDP, h: usize, covered: &[(usize, usize)]) -> Result<f64> {
    let mut reward = vec![vec![vec![0.0; sim.num_actions]; sim.num_states]; sim.horizon];
    for s in 0..sim.num_states {
        for a in 0..sim.num_actions {
            if !covered.contains(&(s, a)) {
                reward[h - 1][s][a] = 1.0;
            }
        }
    }
    let (_, _, v) = optimal_policy_vi(sim, Some(&reward))?;
    Ok(v)
}

/// One stage of CoverTraj output.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverStage {
    pub stage: usize,
    pub gamma: f64,
    pub episodes: usize,
    /// Regularized cumulative covariance snapshot at the end of the stage
    /// (realized features through this stage, plus the identity).
    pub lambda: Vec<Vec<f64>>,
    /// (s,a) pairs first covered at this stage (ellipsoid test against
    /// `lambda` passes).
    pub covered: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverTrajOutput {
    pub step: usize,
    pub beta: f64,
    pub stages: Vec<CoverStage>,
    /// Distinct collection policies with episode counts, in first-use order.
    pub policies: Vec<(Policy, u64)>,
    pub dataset: TransitionDataset,
    pub total_episodes: usize,
    pub uncovered: Vec<(usize, usize)>,
}

/// Staged reward-free collection at step h: per episode, best-respond to the
/// uncertainty reward phi' (Lambda + I)^-1 phi at step h, roll out with
/// uniform actions from step h on, and accumulate the realized feature.
pub fn cover_traj(
    sim: &TabularMDP,
    h: usize,
    beta: f64,
    key: &StreamKey,
    episode_cap: usize,
) -> Result<CoverTrajOutput> {
    let d = feature_dim(sim)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("beta {beta} outside (0, 1]")));
    }
    if h == 0 || h > sim.horizon {
        return Err(Error::Config(format!("coverage step {h} out of range")));
    }
    let m = (1.0 / beta).log2().ceil().max(1.0) as usize;
    let stage_sizes: Vec<usize> = (1..=m)
        .map(|i| {
            let pow = 2f64.powi(i as i32);
            let base = 24.0 * d as f64 / (pow * beta * beta);
            (base * (2.0 * base).ln()).ceil() as usize
        })
        .collect();
    let total: usize = stage_sizes.iter().sum();
    if total > episode_cap {
        return Err(Error::Budget(format!(
            "cover_traj needs {total} episodes at beta={beta}, cap is {episode_cap}"
        )));
    }
    let fact = sim.factorization.as_ref().unwrap();
    let mut inv = DMatrix::<f64>::identity(d, d); // (Lambda_sum + I)^-1
    let mut dataset = TransitionDataset::new(sim.num_states, sim.num_actions, sim.horizon);
    let mut policies: Vec<(Policy, u64)> = Vec::new();
    let mut stages = Vec::new();
    let mut assigned = vec![vec![false; sim.num_actions]; sim.num_states];
    let mut episode: u64 = 0;
    for (i0, &k_i) in stage_sizes.iter().enumerate() {
        let stage = i0 + 1;
        for _ in 0..k_i {
            episode += 1;
            let reward = quadratic_reward(sim, h, &inv);
            let (pi, _, _) = optimal_policy_vi(sim, Some(&reward))?;
            let collect = randomize_after(pi, h.saturating_sub(1));
            match policies.last_mut() {
                Some((last, count)) if policy_tables_equal(last, &collect) => *count += 1,
                _ => policies.push((collect.clone(), 1)),
            }
            let traj =
                sample_trajectory(sim, &collect, &StreamKey::new(key.master_seed, key.trial, episode))?;
            dataset.push_trajectory(&traj);
            let visited = &traj.steps[h - 1];
            let phi = &fact.phi[visited.state][visited.action];
            sherman_morrison_update(&mut inv, phi);
        }
        // Assign newly covered pairs: ellipsoid test against the regularized
        // cumulative covariance snapshot.
        let gamma = 2f64.powi(stage as i32) * beta;
        let mut covered = Vec::new();
        for s in 0..sim.num_states {
            for a in 0..sim.num_actions {
                if assigned[s][a] {
                    continue;
                }
                let phi = &fact.phi[s][a];
                if quad_form(&inv, phi) <= gamma * gamma {
                    assigned[s][a] = true;
                    covered.push((s, a));
                }
            }
        }
        let lambda_snapshot = inv
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("cover_traj covariance inversion failed".into()))?;
        stages.push(CoverStage {
            stage,
            gamma,
            episodes: k_i,
            lambda: (0..d).map(|i| (0..d).map(|j| lambda_snapshot[(i, j)]).collect()).collect(),
            covered,
        });
    }
    let uncovered: Vec<(usize, usize)> = (0..sim.num_states)
        .flat_map(|s| (0..sim.num_actions).map(move |a| (s, a)))
        .filter(|&(s, a)| !assigned[s][a])
        .collect();
    Ok(CoverTrajOutput {
        step: h,
        beta,
        stages,
        policies,
        dataset,
        total_episodes: total,
        uncovered,
    })
}

fn policy_tables_equal(a: &Policy, b: &Policy) -> bool {
    // Collection policies are RandomizeAfter over deterministic tables;
    // serde_json gives a cheap structural comparison.
    serde_json::to_string(a).ok() == serde_json::to_string(b).ok()
}

fn quad_form(m: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let d = phi.len();
    let mut val = 0.0;
    for i in 0..d {
        if phi[i] == 0.0 {
            continue;
        }
        for j in 0..d {
            val += phi[i] * m[(i, j)] * phi[j];
        }
    }
    val
}

/// inv <- (M + phi phi')^-1 given inv = M^-1 (rank-one update).
fn sherman_morrison_update(inv: &mut DMatrix<f64>, phi: &[f64]) {
    let d = phi.len();
    let v = DMatrix::from_fn(d, 1, |i, _| phi[i]);
    let iv = &*inv * &v;
    let denom = 1.0 + (v.transpose() * &iv)[(0, 0)];
    let outer = &iv * iv.transpose();
    *inv -= outer / denom;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepCoverage {
    pub step: usize,
    /// Min eigenvalue achieved by the designed mixture (certified lower bound
    /// on the best achievable).
    pub reachability: f64,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_step: Vec<StepCoverage>,
}

/// Per-step certified lower bounds on the best achievable covariance
/// min-eigenvalue, via the design loop.
pub fn reachability_estimate(sim: &TabularMDP) -> Result<CoverageReport> {
    let d = feature_dim(sim)?;
    let config = DesignConfig::default();
    let mut per_step = Vec::new();
    for h in 1..=sim.horizon {
        let design = learn_exp_policies(sim, h, 1e-4 * (d as f64).recip().max(1e-6), &config)?;
        per_step.push(StepCoverage {
            step: h,
            reachability: design.achieved_min_eig,
            warnings: design.warnings,
        });
    }
    Ok(CoverageReport { per_step })
}

/// Brute-force optimum of the mixture min-eigenvalue at step h: enumerate all
/// deterministic policies over steps <= h, dedupe their covariance matrices,
/// and grid-search mixture weights on the simplex. Returns (optimum on the
/// grid, soundness tolerance): the true optimum lies within tolerance above
/// the returned value (min-eig is 1-Lipschitz in the weights for unit-norm
/// features).
pub fn brute_force_min_eig(sim: &TabularMDP, h: usize) -> Result<(f64, f64)> {
    feature_dim(sim)?;
    let (ns, na) = (sim.num_states, sim.num_actions);
    let slots = h * ns;
    let combos = (na as u128).checked_pow(slots as u32).ok_or_else(|| {
        Error::Config(format!("brute force infeasible: A^{slots} deterministic policies"))
    })?;
    if combos > 1 << 20 {
        return Err(Error::Config(format!(
            "brute force infeasible: {combos} deterministic policies"
        )));
    }
    // Covariances of all deterministic policies, deduped.
    let mut mats: Vec<Vec<Vec<f64>>> = Vec::new();
    for code in 0..combos {
        let mut c = code;
        let mut table = vec![vec![0usize; ns]; sim.horizon];
        for hh in 0..h {
            for s in 0..ns {
                table[hh][s] = (c % na as u128) as usize;
                c /= na as u128;
            }
        }
        let cov = feature_covariance(sim, &Policy::Deterministic(table), h)?;
        let dup = mats.iter().any(|m| {
            m.iter()
                .flatten()
                .zip(cov.lambda.iter().flatten())
                .all(|(x, y)| (x - y).abs() <= 1e-12)
        });
        if !dup {
            mats.push(cov.lambda);
        }
    }
    let k = mats.len();
    // Pick the finest simplex resolution keeping the grid enumerable.
    let mut resolution = 64usize;
    while resolution > 4 && simplex_grid_size(resolution, k) > 3_000_000 {
        resolution /= 2;
    }
    if simplex_grid_size(resolution, k) > 3_000_000 {
        return Err(Error::Config(format!(
            "brute force infeasible: {k} distinct covariances"
        )));
    }
    let d = mats[0].len();
    // Flattened matrices and a closed-form 2x2 eigenvalue keep the grid sweep
    // cheap; general d falls back to the eigensolver.
    let flat: Vec<Vec<f64>> =
        mats.iter().map(|m| m.iter().flatten().cloned().collect()).collect();
    let mut best = f64::NEG_INFINITY;
    let mut weights = vec![0usize; k];
    let mut mix = vec![0.0; d * d];
    enumerate_simplex(&mut weights, 0, resolution, &mut |w| {
        mix.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &cnt) in w.iter().enumerate() {
            if cnt == 0 {
                continue;
            }
            let frac = cnt as f64 / resolution as f64;
            for (x, y) in mix.iter_mut().zip(&flat[idx]) {
                *x += frac * y;
            }
        }
        let eig = if d == 2 {
            let (a, b, c) = (mix[0], 0.5 * (mix[1] + mix[2]), mix[3]);
            0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
        } else {
            let rows: Vec<Vec<f64>> =
                (0..d).map(|i| mix[i * d..(i + 1) * d].to_vec()).collect();
            min_eigenvalue(&rows)
        };
        if eig > best {
            best = eig;
        }
    });
    Ok((best, k as f64 / resolution as f64))
}

fn simplex_grid_size(resolution: usize, k: usize) -> u128 {
    // C(resolution + k - 1, k - 1)
    let mut num: u128 = 1;
    for i in 0..(k - 1) {
        num = num.saturating_mul((resolution + k - 1 - i) as u128) / (i as u128 + 1);
    }
    num
}

fn enumerate_simplex(w: &mut Vec<usize>, idx: usize, remaining: usize, f: &mut impl FnMut(&[usize])) {
    if idx + 1 == w.len() {
        w[idx] = remaining;
        f(w);
        return;
    }
    for take in 0..=remaining {
        w[idx] = take;
        enumerate_simplex(w, idx + 1, remaining - take, f);
    }
}
