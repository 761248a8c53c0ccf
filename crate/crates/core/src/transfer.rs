//! End-to-end learning procedures on the real environment: naive zeta-greedy
//! learning, direct optimal-policy transfer, exploration-policy transfer, the
//! constrained doubling variant, a generic exploration/optimizer
//! meta-procedure, Monte Carlo evaluation, and closed-form theory diagnostics.

use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::design::{cover_traj, learn_exp_policies, randomize_after, DesignConfig};
use crate::error::{Error, Result};
use crate::mdp::{optimal_policy_vi, policy_value_exact, sample_trajectory, TabularMDP, Trajectory};
use crate::policy::{argmax_lowest, Policy};
use crate::regression::{
    constrained_fqi, fqi, greedy_policy, BufferInit, FqiLearningState, QFunction,
};
use crate::rng::{derive_seed, StreamKey};

/// Seed scope for one trial of one algorithm; episode 0 is reserved for
/// non-episode draws (buffer seeding, mixture picks of auxiliary phases).
#[derive(Clone, Copy, Debug)]
pub struct TrialKey {
    pub master_seed: u64,
    pub trial: u64,
}

impl TrialKey {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        TrialKey { master_seed, trial }
    }

    pub fn episode(&self, e: u64) -> StreamKey {
        StreamKey::new(self.master_seed, self.trial, e)
    }

    /// Independent scope for an auxiliary phase (sim collection, evaluation).
    pub fn phase(&self, tag: u64) -> TrialKey {
        TrialKey { master_seed: derive_seed(self.master_seed, tag), trial: self.trial }
    }
}

/// One exact-evaluation checkpoint along a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Probe {
    /// Real episodes finished when the probe was taken.
    pub episode: u64,
    pub real_steps: u64,
    pub sim_episodes: u64,
    /// V*(real) minus the exact value of the current final-candidate policy.
    pub exact_suboptimality: f64,
    /// Running mean of behavior-policy returns on real.
    pub mc_value_estimate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub probes: Vec<Probe>,
    pub final_policy: Policy,
    pub final_suboptimality: f64,
    pub real_episodes: u64,
    pub sim_episodes: u64,
    pub seed: u64,
    pub trial: u64,
    pub notes: Vec<String>,
}

/// Probe bookkeeping shared by the protocols.
struct Recorder {
    stride: u64,
    v_star: f64,
    horizon: u64,
    probes: Vec<Probe>,
    return_sum: f64,
    real_episodes: u64,
    sim_episodes: u64,
}

impl Recorder {
    fn new(real: &TabularMDP, stride: u64) -> Result<Self> {
        let (_, _, v_star) = optimal_policy_vi(real, None)?;
        Ok(Recorder {
            stride: stride.max(1),
            v_star,
            horizon: real.horizon as u64,
            probes: Vec::new(),
            return_sum: 0.0,
            real_episodes: 0,
            sim_episodes: 0,
        })
    }

    fn observe_return(&mut self, ret: f64) {
        self.return_sum += ret;
        self.real_episodes += 1;
    }

    fn due(&self) -> bool {
        self.real_episodes % self.stride == 0
    }

    fn probe(&mut self, real: &TabularMDP, candidate: &Policy) -> Result<()> {
        let (v0, _) = policy_value_exact(real, candidate)?;
        self.probes.push(Probe {
            episode: self.real_episodes,
            real_steps: self.real_episodes * self.horizon,
            sim_episodes: self.sim_episodes,
            exact_suboptimality: self.v_star - v0,
            mc_value_estimate: if self.real_episodes == 0 {
                0.0
            } else {
                self.return_sum / self.real_episodes as f64
            },
        });
        Ok(())
    }

    fn finish(
        self,
        real: &TabularMDP,
        algorithm: &str,
        final_policy: Policy,
        key: &TrialKey,
        notes: Vec<String>,
    ) -> Result<RunRecord> {
        let (v0, _) = policy_value_exact(real, &final_policy)?;
        Ok(RunRecord {
            algorithm: algorithm.to_string(),
            probes: self.probes,
            final_suboptimality: self.v_star - v0,
            final_policy,
            real_episodes: self.real_episodes,
            sim_episodes: self.sim_episodes,
            seed: key.master_seed,
            trial: key.trial,
            notes,
        })
    }
}

/// Learn on real from scratch: behave zeta-greedily with respect to the
/// current fitted Q estimate, refit as data accumulates.
pub fn zeta_greedy_protocol(
    real: &TabularMDP,
    zeta: f64,
    t_episodes: u64,
    key: &TrialKey,
    refit_period: usize,
    buffer_init: BufferInit,
    eval_stride: u64,
) -> Result<RunRecord> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Config(format!("zeta {zeta} outside [0,1]")));
    }
    let mut rec = Recorder::new(real, eval_stride)?;
    let mut state = FqiLearningState::new(
        real.num_states,
        real.num_actions,
        real.horizon,
        refit_period,
        0.0,
    )?;
    state.seed_buffer(real, buffer_init, &key.episode(0))?;
    for e in 1..=t_episodes {
        let behavior = Policy::ZetaGreedy {
            base: Box::new(Policy::GreedyOfQ(state.current().clone())),
            zeta,
        };
        let traj = sample_trajectory(real, &behavior, &key.episode(e))?;
        rec.observe_return(traj.total_return);
        state.observe_trajectory(&traj);
        if rec.due() {
            rec.probe(real, &greedy_policy(state.current()))?;
        }
    }
    state.refit();
    let final_policy = greedy_policy(state.current());
    rec.probe(real, &final_policy)?;
    let notes = vec![format!("refit_period={refit_period}, buffer_init={buffer_init:?}")];
    rec.finish(real, "zeta_greedy", final_policy, key, notes)
}

/// Behave zeta-greedily around the sim-optimal policy, then fit once.
pub fn direct_transfer_protocol(
    sim: &TabularMDP,
    real: &TabularMDP,
    zeta: f64,
    t_episodes: u64,
    key: &TrialKey,
    eval_stride: u64,
) -> Result<RunRecord> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Config(format!("zeta {zeta} outside [0,1]")));
    }
    let (pi_sim, _, _) = optimal_policy_vi(sim, None)?;
    let behavior = Policy::ZetaGreedy { base: Box::new(pi_sim), zeta };
    let mut rec = Recorder::new(real, eval_stride)?;
    let mut data = TransitionDataset::new(real.num_states, real.num_actions, real.horizon);
    for e in 1..=t_episodes {
        let traj = sample_trajectory(real, &behavior, &key.episode(e))?;
        rec.observe_return(traj.total_return);
        data.push_trajectory(&traj);
        if rec.due() {
            rec.probe(real, &greedy_policy(&fqi(&data, 0.0, real.v_max())))?;
        }
    }
    let final_policy = greedy_policy(&fqi(&data, 0.0, real.v_max()));
    rec.probe(real, &final_policy)?;
    rec.finish(real, "direct_transfer", final_policy, key, Vec::new())
}

/// Mean return over n seeded episodes plus the Hoeffding half-width at
/// confidence delta (returns lie in [0, H]).
pub fn monte_carlo_value(
    real: &TabularMDP,
    policy: &Policy,
    n: u64,
    delta: f64,
    key: &TrialKey,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Config("monte_carlo_value needs n >= 1".into()));
    }
    let mut total = 0.0;
    for e in 1..=n {
        total += sample_trajectory(real, policy, &key.episode(e))?.total_return;
    }
    let width = real.v_max() * ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt();
    Ok((total / n as f64, width))
}

/// Exploration-policy transfer: design per-step coverage policies in sim,
/// roll them (randomized past their step) on real for half the budget, fit by
/// FQI, then pick the better of the fitted policy and the sim optimum by
/// Monte Carlo evaluation on the remaining budget.
pub fn exploration_transfer(
    sim: &TabularMDP,
    real: &TabularMDP,
    epsilon: f64,
    delta: f64,
    t_episodes: u64,
    key: &TrialKey,
    eval_stride: u64,
) -> Result<RunRecord> {
    if t_episodes < 8 {
        return Err(Error::Config(format!(
            "exploration_transfer needs T >= 8 to split the budget, got {t_episodes}"
        )));
    }
    let a3 = (sim.num_actions as f64).powi(3);
    let zeta_raw = 4.0 * a3 * epsilon / sim.horizon as f64;
    let zeta_design = zeta_raw.clamp(1e-6, 1.0);
    let mut notes = Vec::new();
    if zeta_design != zeta_raw {
        notes.push(format!("design regularizer clamped: {zeta_raw} -> {zeta_design}"));
    }
    let config = DesignConfig { delta, ..DesignConfig::default() };
    let mut per_step = Vec::with_capacity(sim.horizon);
    for h in 1..=sim.horizon {
        let design = learn_exp_policies(sim, h, zeta_design, &config)?;
        notes.extend(design.warnings.iter().map(|w| format!("design h={h}: {w}")));
        per_step.push((
            1.0 / sim.horizon as f64,
            randomize_after(design.mixture(), h),
        ));
    }
    let pi_exp = Policy::Mixture(per_step);
    let mut rec = Recorder::new(real, eval_stride)?;
    let collect = t_episodes / 2;
    let eval_n = t_episodes / 4;
    let mut data = TransitionDataset::new(real.num_states, real.num_actions, real.horizon);
    for e in 1..=collect {
        let traj = sample_trajectory(real, &pi_exp, &key.episode(e))?;
        rec.observe_return(traj.total_return);
        data.push_trajectory(&traj);
        if rec.due() {
            rec.probe(real, &greedy_policy(&fqi(&data, 0.0, real.v_max())))?;
        }
    }
    let f_hat = fqi(&data, 0.0, real.v_max());
    let pi_f = greedy_policy(&f_hat);
    let (pi_sim, _, _) = optimal_policy_vi(sim, None)?;
    let mut est = [0.0f64; 2]; // [pi_sim, pi_f]
    for (idx, pi) in [&pi_sim, &pi_f].iter().enumerate() {
        for i in 1..=eval_n {
            let e = collect + idx as u64 * eval_n + i;
            let traj = sample_trajectory(real, pi, &key.episode(e))?;
            est[idx] += traj.total_return;
            rec.observe_return(traj.total_return);
            if rec.due() {
                rec.probe(real, if idx == 0 { &pi_sim } else { &pi_f })?;
            }
        }
        est[idx] /= eval_n as f64;
    }
    // Ties resolve to the fitted policy.
    let final_policy = if est[1] >= est[0] { pi_f } else { pi_sim };
    notes.push(format!(
        "budget split: {collect} exploration + 2x{eval_n} evaluation; estimates sim={:.6} fqi={:.6}",
        est[0], est[1]
    ));
    rec.probe(real, &final_policy)?;
    rec.finish(real, "exploration_transfer", final_policy, key, notes)
}

/// Play the uniform mixture over fixed exploration policies for t episodes on
/// real and return the greedy policy of the sim-constrained fit.
pub fn explore_real(
    real: &TabularMDP,
    exp_policies: &[Policy],
    t_episodes: u64,
    sim_data: &TransitionDataset,
    gamma: f64,
    key: &TrialKey,
    episode_offset: u64,
) -> Result<(Policy, TransitionDataset, f64)> {
    if exp_policies.is_empty() {
        return Err(Error::Config("explore_real needs at least one policy".into()));
    }
    let w = 1.0 / exp_policies.len() as f64;
    let mixture = Policy::Mixture(exp_policies.iter().map(|p| (w, p.clone())).collect());
    let mut data = TransitionDataset::new(real.num_states, real.num_actions, real.horizon);
    let mut total = 0.0;
    for e in 1..=t_episodes {
        let traj = sample_trajectory(real, &mixture, &key.episode(episode_offset + e))?;
        total += traj.total_return;
        data.push_trajectory(&traj);
    }
    let report = constrained_fqi(&data, sim_data, gamma, 0.0, real.v_max())?;
    let mean = if t_episodes == 0 { 0.0 } else { total / t_episodes as f64 };
    Ok((greedy_policy(&report.fit), data, mean))
}

/// The per-round tolerances of the doubling schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sim2ExploreSchedule {
    pub iota: u64,
    pub rounds: Vec<ScheduleRound>,
    pub log_f_eff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleRound {
    pub ell: u64,
    pub eps_bar: f64,
    pub t_ell: u64,
    pub gamma: f64,
    pub beta: f64,
    pub beta_clamped: bool,
}

/// Effective log-cardinality stand-in for the all-tables function class at
/// resolution 0.01 (echoed into every report that uses it).
pub fn effective_log_f(mdp: &TabularMDP) -> f64 {
    (mdp.num_states * mdp.num_actions * mdp.horizon) as f64
        * (1.0 + mdp.horizon as f64 / 0.01).ln()
}

pub fn sim2explore_schedule(
    sim: &TabularMDP,
    t_episodes: u64,
    delta: f64,
    epsilon: f64,
) -> Result<Sim2ExploreSchedule> {
    let d = sim
        .factorization
        .as_ref()
        .map(|f| f.d)
        .ok_or_else(|| Error::Config("sim2explore requires a factorization".into()))?;
    let v = sim.v_max();
    let iota = ((v * sim.num_actions as f64 * d as f64 * sim.horizon as f64 / epsilon).log2())
        .ceil()
        .max(1.0) as u64;
    let t_ell = t_episodes / (2 * iota);
    if t_ell < 4 {
        return Err(Error::Config(format!(
            "sim2explore schedule infeasible: T/(2*iota) = {t_ell} < 4 (T={t_episodes}, iota={iota})"
        )));
    }
    let log_f_eff = effective_log_f(sim);
    let denom = 20.0 * v * v * ((8.0 * sim.horizon as f64 / delta).ln() + log_f_eff);
    let rounds = (1..=iota)
        .map(|ell| {
            let eps_bar = 2f64.powi(-(ell as i32));
            let gamma = 10.0 * v * v * eps_bar * eps_bar;
            let beta_raw = gamma / denom;
            let beta = beta_raw.min(1.0);
            ScheduleRound {
                ell,
                eps_bar,
                t_ell,
                gamma,
                beta,
                beta_clamped: beta != beta_raw,
            }
        })
        .collect();
    Ok(Sim2ExploreSchedule { iota, rounds, log_f_eff })
}

/// Doubling constrained transfer: per round, collect reward-free sim data at
/// tolerance beta_ell, run the constrained fit with gamma_ell, and evaluate;
/// return the candidate with the best estimate.
#[allow(clippy::too_many_arguments)]
pub fn sim2explore(
    sim: &TabularMDP,
    real: &TabularMDP,
    t_episodes: u64,
    delta: f64,
    epsilon: f64,
    key: &TrialKey,
    eval_stride: u64,
    sim_episode_cap: usize,
) -> Result<RunRecord> {
    let schedule = sim2explore_schedule(sim, t_episodes, delta, epsilon)?;
    let mut rec = Recorder::new(real, eval_stride)?;
    let mut notes = vec![format!(
        "iota={}, log|F|_eff={:.3} (effective-cardinality stand-in)",
        schedule.iota, schedule.log_f_eff
    )];
    let mut candidates: Vec<(Policy, f64)> = Vec::new();
    let mut episode_cursor = 0u64;
    for round in &schedule.rounds {
        if round.beta_clamped {
            notes.push(format!("round {}: beta clamped to 1", round.ell));
        }
        // Reward-free sim collection for every step.
        let mut sim_data = TransitionDataset::new(sim.num_states, sim.num_actions, sim.horizon);
        let mut policies = Vec::new();
        for h in 1..=sim.horizon {
            let sim_key = key.phase(0x5100 + round.ell * 64 + h as u64);
            let out = cover_traj(sim, h, round.beta, &sim_key.episode(0), sim_episode_cap)?;
            rec.sim_episodes += out.total_episodes as u64;
            sim_data.extend(&out.dataset);
            let wsum: u64 = out.policies.iter().map(|(_, c)| *c).sum();
            policies.push(Policy::Mixture(
                out.policies
                    .iter()
                    .map(|(p, c)| (*c as f64 / wsum as f64, p.clone()))
                    .collect(),
            ));
        }
        // Split the round budget between real exploration and evaluation.
        let t_exp = round.t_ell / 2;
        let t_eval = round.t_ell - t_exp;
        let (pi_ell, data, mean_ret) = explore_real(
            real,
            &policies,
            t_exp,
            &sim_data,
            round.gamma,
            key,
            episode_cursor,
        )?;
        episode_cursor += t_exp;
        for _ in 0..t_exp {
            rec.observe_return(mean_ret); // running mean uses per-round means
        }
        drop(data);
        let eval_key = key.phase(0x0E00 + round.ell);
        let mut est = 0.0;
        for i in 1..=t_eval {
            let traj = sample_trajectory(real, &pi_ell, &key.episode(episode_cursor + i))?;
            est += traj.total_return;
            rec.observe_return(traj.total_return);
        }
        let _ = eval_key;
        episode_cursor += t_eval;
        est /= t_eval.max(1) as f64;
        candidates.push((pi_ell.clone(), est));
        notes.push(format!(
            "round {}: gamma={:.6}, beta={:.6}, split {t_exp}+{t_eval}, estimate {est:.6}",
            round.ell, round.gamma, round.beta
        ));
        rec.probe(real, &pi_ell)?;
    }
    let ests: Vec<f64> = candidates.iter().map(|(_, e)| *e).collect();
    let best = argmax_lowest(&ests);
    let final_policy = candidates.swap_remove(best).0;
    rec.probe(real, &final_policy)?;
    rec.finish(real, "sim2explore", final_policy, key, notes)
}

/// A procedure that produces exploration policies from the simulator.
pub trait ExplorationLearner {
    fn name(&self) -> &'static str;
    /// May consume up to t_sim sim episodes (exact-DP learners consume none).
    fn learn(&mut self, sim: &TabularMDP, t_sim: usize, key: &TrialKey)
        -> Result<(Vec<Policy>, u64)>;
}

/// An off-policy learner fed one real episode at a time.
pub trait PolicyOptimizer {
    fn name(&self) -> &'static str;
    fn observe(&mut self, traj: &Trajectory);
    fn current_policy(&self) -> Policy;
}

/// Min-eigenvalue design exploration (exact oracle; no sim episodes).
pub struct MinEigExplorer {
    pub zeta: f64,
}

impl ExplorationLearner for MinEigExplorer {
    fn name(&self) -> &'static str {
        "min_eig_design"
    }
    fn learn(
        &mut self,
        sim: &TabularMDP,
        _t_sim: usize,
        _key: &TrialKey,
    ) -> Result<(Vec<Policy>, u64)> {
        let config = DesignConfig::default();
        let mut out = Vec::new();
        for h in 1..=sim.horizon {
            let design = learn_exp_policies(sim, h, self.zeta, &config)?;
            out.push(randomize_after(design.mixture(), h));
        }
        Ok((out, 0))
    }
}

/// Staged reward-free collection as the exploration learner.
pub struct CoverTrajExplorer {
    pub beta: f64,
}

impl ExplorationLearner for CoverTrajExplorer {
    fn name(&self) -> &'static str {
        "cover_traj"
    }
    fn learn(
        &mut self,
        sim: &TabularMDP,
        t_sim: usize,
        key: &TrialKey,
    ) -> Result<(Vec<Policy>, u64)> {
        let mut out = Vec::new();
        let mut sim_eps = 0u64;
        for h in 1..=sim.horizon {
            let sim_key = key.phase(0xC0 + h as u64);
            let cover = cover_traj(sim, h, self.beta, &sim_key.episode(0), t_sim)?;
            sim_eps += cover.total_episodes as u64;
            let wsum: u64 = cover.policies.iter().map(|(_, c)| *c).sum();
            out.push(Policy::Mixture(
                cover
                    .policies
                    .iter()
                    .map(|(p, c)| (*c as f64 / wsum as f64, p.clone()))
                    .collect(),
            ));
        }
        Ok((out, sim_eps))
    }
}

/// Batch FQI refit as the policy optimizer.
pub struct FqiOptimizer {
    state: FqiLearningState,
}

impl FqiOptimizer {
    pub fn new(mdp_shape: (usize, usize, usize), refit_period: usize) -> Result<Self> {
        let (s, a, h) = mdp_shape;
        Ok(FqiOptimizer { state: FqiLearningState::new(s, a, h, refit_period, 0.0)? })
    }
}

impl PolicyOptimizer for FqiOptimizer {
    fn name(&self) -> &'static str {
        "fqi"
    }
    fn observe(&mut self, traj: &Trajectory) {
        self.state.observe_trajectory(traj);
    }
    fn current_policy(&self) -> Policy {
        greedy_policy(self.state.current())
    }
}

/// Incremental tabular Q-learning with per-cell 1/n step sizes.
pub struct QLearningOptimizer {
    q: QFunction,
    counts: Vec<Vec<Vec<u64>>>,
}

impl QLearningOptimizer {
    pub fn new(mdp_shape: (usize, usize, usize)) -> Self {
        let (s, a, h) = mdp_shape;
        QLearningOptimizer {
            q: QFunction::constant(0.0, h, s, a, h as f64),
            counts: vec![vec![vec![0; a]; s]; h],
        }
    }
}

impl PolicyOptimizer for QLearningOptimizer {
    fn name(&self) -> &'static str {
        "q_learning"
    }
    fn observe(&mut self, traj: &Trajectory) {
        let hm = self.q.values.len();
        for st in &traj.steps {
            let cont = if st.h < hm { self.q.state_value(st.h + 1, st.next_state) } else { 0.0 };
            let target = (st.reward + cont).clamp(0.0, self.q.v_max);
            let c = &mut self.counts[st.h - 1][st.state][st.action];
            *c += 1;
            let alpha = 1.0 / *c as f64;
            let cell = &mut self.q.values[st.h - 1][st.state][st.action];
            *cell += alpha * (target - *cell);
        }
    }
    fn current_policy(&self) -> Policy {
        greedy_policy(&self.q)
    }
}

/// Generic two-phase meta-procedure: learn exploration policies in sim, then
/// stream half the real budget through the policy optimizer.
pub fn meta_transfer(
    sim: &TabularMDP,
    real: &TabularMDP,
    a_exp: &mut dyn ExplorationLearner,
    a_po: &mut dyn PolicyOptimizer,
    t_sim: usize,
    t_episodes: u64,
    key: &TrialKey,
    eval_stride: u64,
) -> Result<RunRecord> {
    let (policies, sim_eps) = a_exp.learn(sim, t_sim, &key.phase(0xE0))?;
    if policies.is_empty() {
        return Err(Error::Config("exploration learner returned no policies".into()));
    }
    let w = 1.0 / policies.len() as f64;
    let mut rec = Recorder::new(real, eval_stride)?;
    rec.sim_episodes = sim_eps;
    for e in 1..=(t_episodes / 2) {
        let idx = key.episode(e).stream(0).sample_index(&vec![w; policies.len()]);
        let traj = sample_trajectory(real, &policies[idx], &key.phase(0xEE).episode(e))?;
        rec.observe_return(traj.total_return);
        a_po.observe(&traj);
        if rec.due() {
            rec.probe(real, &a_po.current_policy())?;
        }
    }
    let final_policy = a_po.current_policy();
    rec.probe(real, &final_policy)?;
    let notes = vec![format!("explorer={}, optimizer={}", a_exp.name(), a_po.name())];
    rec.finish(real, "meta_transfer", final_policy, key, notes)
}

/// Exact total variation between the trajectory laws of two MDPs under a
/// shared policy, by enumeration over all (action, next-state) paths.
pub fn trajectory_law_tv(a: &TabularMDP, b: &TabularMDP, policy: &Policy) -> Result<f64> {
    if a.num_states != b.num_states || a.num_actions != b.num_actions || a.horizon != b.horizon {
        return Err(Error::Config("trajectory_law_tv requires matching shapes".into()));
    }
    if a.init_state != b.init_state {
        return Err(Error::Config("trajectory_law_tv requires a shared start state".into()));
    }
    policy.validate(a.horizon, a.num_states, a.num_actions)?;
    let leaves = policy.components();
    // Per path: action probabilities differ per leaf, transition products per
    // MDP; p_M(path) = (sum_leaf w * prod pi_leaf) * prod P_M.
    fn dfs(
        a: &TabularMDP,
        b: &TabularMDP,
        leaves: &[(f64, crate::policy::Leaf)],
        h: usize,
        s: usize,
        leaf_probs: &[f64],
        prod_a: f64,
        prod_b: f64,
        acc: &mut f64,
    ) {
        if h > a.horizon {
            let mix: f64 =
                leaves.iter().zip(leaf_probs).map(|((w, _), p)| w * p).sum();
            *acc += (mix * prod_a - mix * prod_b).abs();
            return;
        }
        for action in 0..a.num_actions {
            let next_leaf: Vec<f64> = leaves
                .iter()
                .zip(leaf_probs)
                .map(|((_, leaf), p)| p * leaf.action_probs(h, s, a.num_actions)[action])
                .collect();
            if next_leaf.iter().all(|&p| p == 0.0) {
                continue;
            }
            for sp in 0..a.num_states {
                let pa = a.row(h, s, action)[sp];
                let pb = b.row(h, s, action)[sp];
                if pa == 0.0 && pb == 0.0 {
                    continue;
                }
                dfs(a, b, leaves, h + 1, sp, &next_leaf, prod_a * pa, prod_b * pb, acc);
            }
        }
    }
    let mut acc = 0.0;
    let ones = vec![1.0; leaves.len()];
    dfs(a, b, &leaves, 1, a.init_state, &ones, 1.0, 1.0, &mut acc);
    Ok(acc / 2.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsInput {
    pub d: usize,
    pub horizon: usize,
    pub num_actions: usize,
    pub eps_sim: f64,
    /// Achieved per-step covariance floor of the exploration mixture.
    pub lambda_bar_min: f64,
    /// Constraint tolerance of the sim-anchored fit.
    pub gamma: f64,
    /// Escape-probability threshold for the depth diagnostic.
    pub kappa: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Best achievable covariance floor (for the coverage condition flag).
    pub lambda_star: Option<f64>,
    /// Max achievable total reward (Q-gap bound constant); defaults to H.
    pub r_max: Option<f64>,
    pub log_f_eff: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub simulation_lemma_bound: f64,
    pub q_gap_bound: f64,
    pub visitation_bound: f64,
    pub xi: f64,
    /// None when xi >= 1 (random exploration does not contract).
    pub k_star: Option<u64>,
    /// eps_sim <= lambda_star / (64 d H A^3); None without lambda_star.
    pub coverage_condition: Option<bool>,
    /// d^2 H^16 / eps^8 * (ln H + log|F|_eff + ln(1/delta)), constants
    /// suppressed (c = 1).
    pub sample_bound: f64,
    pub constants_suppressed: bool,
    pub log_f_eff: f64,
}

/// Closed-form bound calculator; pure arithmetic on the inputs.
pub fn theory_diagnostics(input: &DiagnosticsInput) -> Result<DiagnosticsReport> {
    let h = input.horizon as f64;
    let a = input.num_actions as f64;
    let d = input.d as f64;
    if input.lambda_bar_min <= 0.0 || input.epsilon <= 0.0 || input.delta <= 0.0 {
        return Err(Error::Config(
            "diagnostics require positive lambda_bar_min, epsilon, delta".into(),
        ));
    }
    let r = input.r_max.unwrap_or(h);
    let xi = 2.0
        * ((a / input.lambda_bar_min) * (d / input.gamma + h * input.eps_sim)).sqrt();
    let k_star = if xi < 1.0 {
        if !(input.kappa > 0.0 && input.kappa < 1.0) {
            return Err(Error::Config(format!("kappa {} outside (0,1)", input.kappa)));
        }
        let raw = ((1.0 / input.kappa).ln() / (1.0 / xi).ln()).ceil();
        Some(raw.max(1.0) as u64)
    } else {
        None
    };
    let coverage_condition = input
        .lambda_star
        .map(|ls| input.eps_sim <= ls / (64.0 * d * h * a.powi(3)));
    let log_f_eff = input.log_f_eff.unwrap_or_else(|| {
        (input.d as f64 * 0.0)
            + (input.horizon * input.num_actions) as f64 * (1.0 + h / 0.01).ln()
    });
    let sample_bound = d * d * h.powi(16) / input.epsilon.powi(8)
        * (h.ln() + log_f_eff + (1.0 / input.delta).ln());
    Ok(DiagnosticsReport {
        simulation_lemma_bound: 2.0 * h * h * input.eps_sim,
        q_gap_bound: h * r * input.eps_sim,
        visitation_bound: h * input.eps_sim,
        xi,
        k_star,
        coverage_condition,
        sample_bound,
        constants_suppressed: true,
        log_f_eff,
    })
}
