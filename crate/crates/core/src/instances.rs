//! Benchmark environments: the two-state combination locks, the four-action
//! randomized-exploration counterexample, and a random low-rank generator.
//!
//! Conventions shared by all constructors:
//! - Action indices: a1 = 0, a2 = 1, ...; states: s1 = 0, s2 = 1, ....
//! - Unspecified transition rows extend the h < H-1 rule (combination locks)
//!   or the factorization (counterexample), so every tensor is complete.
//! - Every bundle's declared misspecification equals the realized tv_gap.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::mdp::{tv_gap, LowRankFactorization, TabularMDP};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D1Variant {
    /// Rewards exactly as the defining formulas (terminal rule wins at h = H).
    AsWritten,
    /// r_{H-1}(s1,a2) zeroed so the optimal real value is exactly 1/2 + eps
    /// and sim/real optima genuinely disagree at every earlier step.
    Zeroed,
}

#[derive(Clone, Debug)]
pub struct InstanceBundle {
    pub sim: TabularMDP,
    pub reals: Vec<TabularMDP>,
    pub declared_eps_sim: f64,
    /// Instance family identifier (e.g. "comb-lock", "didactic", "rand-exp").
    pub provenance: String,
    pub variant: Option<D1Variant>,
}

/// One-hot tabular featurization: d = S*A, phi(s,a) = e_{s*A+a},
/// mu_h(j, s') = P_h(s' | s_j, a_j). Valid for any tabular MDP.
pub fn one_hot_factorization(mdp: &TabularMDP) -> LowRankFactorization {
    let (ns, na, hm) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let d = ns * na;
    let mut phi = vec![vec![vec![0.0; d]; na]; ns];
    for s in 0..ns {
        for a in 0..na {
            phi[s][a][s * na + a] = 1.0;
        }
    }
    let mut mu = vec![vec![vec![0.0; ns]; d]; hm];
    for h in 0..hm {
        for s in 0..ns {
            for a in 0..na {
                mu[h][s * na + a] = mdp.transitions[h][s][a].clone();
            }
        }
    }
    LowRankFactorization { d, phi, mu }
}

fn with_one_hot(mut mdp: TabularMDP) -> Result<TabularMDP> {
    let f = one_hot_factorization(&mdp);
    mdp.factorization = Some(f);
    TabularMDP::new(
        mdp.num_states,
        mdp.num_actions,
        mdp.horizon,
        mdp.init_state,
        mdp.transitions,
        mdp.rewards,
        mdp.factorization,
    )
}

/// Two-state combination lock with a coin-flip step at H-1 (sim fair, reals
/// biased by eps toward a1 or a2 respectively) and a decaying early-exit
/// reward on a2.
pub fn make_comb_lock_d1(h: usize, eps_sim: f64, variant: D1Variant) -> Result<InstanceBundle> {
    if h <= 2 {
        return Err(Error::Config(format!("combination lock requires H > 2, got {h}")));
    }
    if !(eps_sim > 0.0 && eps_sim <= 1.0 / 6.0) {
        return Err(Error::Config(format!("eps_sim {eps_sim} outside (0, 1/6]")));
    }
    // Base: a1 keeps s1, a2 exits to s2, s2 absorbing; coin-flip rows at H-1.
    let chain_row = |to: usize| -> Vec<f64> {
        let mut row = vec![0.0, 0.0];
        row[to] = 1.0;
        row
    };
    let coin = |p_s1: f64| vec![p_s1, 1.0 - p_s1];
    let build = |p_a1_s1: f64, p_a2_s1: f64| -> Vec<Vec<Vec<Vec<f64>>>> {
        (1..=h)
            .map(|step| {
                let s1_rows = if step == h - 1 {
                    vec![coin(p_a1_s1), coin(p_a2_s1)]
                } else {
                    vec![chain_row(0), chain_row(1)]
                };
                vec![s1_rows, vec![chain_row(1), chain_row(1)]]
            })
            .collect()
    };
    let mut rewards = vec![vec![vec![0.0; 2]; 2]; h];
    for step in 1..=h {
        rewards[step - 1][0][1] = 0.5 + eps_sim * (0.5 - step as f64 / (4.0 * h as f64));
    }
    rewards[h - 1][0][0] = 1.0;
    rewards[h - 1][0][1] = 1.0; // terminal rule overrides the a2 formula at h = H
    if variant == D1Variant::Zeroed {
        rewards[h - 2][0][1] = 0.0;
    }
    let sim = with_one_hot(TabularMDP::new(2, 2, h, 0, build(0.5, 0.5), rewards.clone(), None)?)?;
    let m1 = with_one_hot(TabularMDP::new(
        2,
        2,
        h,
        0,
        build(0.5 + eps_sim, 0.5 - eps_sim),
        rewards.clone(),
        None,
    )?)?;
    let m2 = with_one_hot(TabularMDP::new(
        2,
        2,
        h,
        0,
        build(0.5 - eps_sim, 0.5 + eps_sim),
        rewards,
        None,
    )?)?;
    Ok(InstanceBundle {
        sim,
        reals: vec![m1, m2],
        declared_eps_sim: eps_sim,
        provenance: "comb-lock".into(),
        variant: Some(variant),
    })
}

/// Didactic two-state lock: sim ends the a1 chain in s1 with probability 1/4,
/// real with 3/4; small decaying reward on a2, terminal reward 1/5 in s1.
pub fn make_didactic_f1(h: usize) -> Result<InstanceBundle> {
    if h <= 2 {
        return Err(Error::Config(format!("didactic instance requires H > 2, got {h}")));
    }
    let build = |p_a1_s1: f64| -> Vec<Vec<Vec<Vec<f64>>>> {
        (1..=h)
            .map(|step| {
                let a1_row = if step == h - 1 { vec![p_a1_s1, 1.0 - p_a1_s1] } else { vec![1.0, 0.0] };
                vec![vec![a1_row, vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]]
            })
            .collect()
    };
    let mut rewards = vec![vec![vec![0.0; 2]; 2]; h];
    for step in 1..=h {
        rewards[step - 1][0][1] = 0.125 - step as f64 / (8.0 * h as f64);
    }
    rewards[h - 1][0][0] = 0.2;
    rewards[h - 1][0][1] = 0.2;
    let sim = with_one_hot(TabularMDP::new(2, 2, h, 0, build(0.25), rewards.clone(), None)?)?;
    let real = with_one_hot(TabularMDP::new(2, 2, h, 0, build(0.75), rewards, None)?)?;
    Ok(InstanceBundle {
        sim,
        reals: vec![real],
        declared_eps_sim: 0.5,
        provenance: "didactic".into(),
        variant: None,
    })
}

/// Two-step, four-action linear instance (d = 2) where the best-coverage
/// exploration policy (half a1, half a4) cannot distinguish the two reals.
pub fn make_rand_exp_counterexample(eps_sim: f64) -> Result<InstanceBundle> {
    if !(eps_sim > 0.0 && eps_sim <= 0.5) {
        return Err(Error::Config(format!("eps_sim {eps_sim} outside (0, 1/2]")));
    }
    let e1 = vec![1.0, 0.0];
    let e2 = vec![0.0, 1.0];
    // Features are state-independent, so rows from s1 and s2 coincide. Step-2
    // dynamics are unconstrained by the two-step returns; each instance reuses
    // its step-1 measure there, which completes a valid factorization without
    // enlarging the sim/real gap.
    let from_factorization = |phi_a: &[Vec<f64>], mu: &[Vec<Vec<f64>>]| -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..2)
            .map(|h| {
                (0..2)
                    .map(|_s| {
                        (0..4)
                            .map(|a| {
                                (0..2)
                                    .map(|sp| {
                                        (0..2).map(|j| phi_a[a][j] * mu[h][j][sp]).sum::<f64>()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let mut rewards = vec![vec![vec![0.0; 4]; 2]; 2];
    for a in 0..4 {
        rewards[1][1][a] = 1.0;
    }

    // Sim: phi(s,a1) = e1, phi(s,a) = e2 otherwise; mu_1 = ([1,1/2],[0,1/2]).
    let phi_sim = vec![e1.clone(), e2.clone(), e2.clone(), e2.clone()];
    let mu_sim_step = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
    let mu_sim = vec![mu_sim_step.clone(), mu_sim_step];
    let sim_t = from_factorization(&phi_sim, &mu_sim);
    let sim_f = LowRankFactorization {
        d: 2,
        phi: vec![phi_sim.clone(), phi_sim],
        mu: mu_sim,
    };
    let sim = TabularMDP::new(2, 4, 2, 0, sim_t, rewards.clone(), Some(sim_f))?;

    // Reals: phi(s,a1) = e1, phi(s,a4) = [1/2,1/2], mu_1(s1) = [1,0],
    // mu_1(s2) = [0,1]; the biased action has phi = [1/2-eps, 1/2+eps].
    let biased = vec![0.5 - eps_sim, 0.5 + eps_sim];
    let half = vec![0.5, 0.5];
    let mu_real_step = vec![e1.clone(), e2.clone()];
    let mu_real = vec![mu_real_step.clone(), mu_real_step];
    let make_real = |phi_a: Vec<Vec<f64>>| -> Result<TabularMDP> {
        let t = from_factorization(&phi_a, &mu_real);
        let f = LowRankFactorization { d: 2, phi: vec![phi_a.clone(), phi_a], mu: mu_real.clone() };
        TabularMDP::new(2, 4, 2, 0, t, rewards.clone(), Some(f))
    };
    let m1 = make_real(vec![e1.clone(), biased.clone(), half.clone(), half.clone()])?;
    let m2 = make_real(vec![e1, half.clone(), biased, half])?;
    Ok(InstanceBundle {
        sim,
        reals: vec![m1, m2],
        declared_eps_sim: eps_sim,
        provenance: "rand-exp".into(),
        variant: None,
    })
}

/// Random rank-d instance: phi rows on the simplex (so rows of P are convex
/// combinations of the mu rows, themselves distributions), and a real MDP
/// obtained by a TV-bounded perturbation of sim. Declared eps is the realized
/// tv_gap; eps_sim = 0 returns real identical to sim.
pub fn make_random_lowrank(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    d: usize,
    eps_sim: f64,
    seed: u64,
) -> Result<InstanceBundle> {
    if d == 0 || d > num_states * num_actions {
        return Err(Error::Config(format!("d = {d} must be in 1..=S*A")));
    }
    if num_states < 2 {
        return Err(Error::Generation("need at least 2 states to perturb".into()));
    }
    if !(0.0..=1.0).contains(&eps_sim) {
        return Err(Error::Config(format!("eps_sim {eps_sim} outside [0,1]")));
    }
    let key = StreamKey::new(seed, 0, 0);
    let mut rng = key.stream(1);
    let mut dirichletish = |n: usize| -> Vec<f64> {
        // Exponential draws normalized to the simplex (flat Dirichlet).
        let draws: Vec<f64> = (0..n).map(|_| -((1.0 - rng.next_f64()).ln())).collect();
        let total: f64 = draws.iter().sum();
        draws.iter().map(|x| x / total).collect()
    };
    let mut phi = vec![vec![vec![0.0; d]; num_actions]; num_states];
    for s in 0..num_states {
        for a in 0..num_actions {
            phi[s][a] = dirichletish(d);
        }
    }
    let mut mu = vec![vec![vec![0.0; num_states]; d]; horizon];
    for h in 0..horizon {
        for j in 0..d {
            mu[h][j] = dirichletish(num_states);
        }
    }
    let transitions: Vec<Vec<Vec<Vec<f64>>>> = (0..horizon)
        .map(|h| {
            (0..num_states)
                .map(|s| {
                    (0..num_actions)
                        .map(|a| {
                            (0..num_states)
                                .map(|sp| (0..d).map(|j| phi[s][a][j] * mu[h][j][sp]).sum())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut rewards = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    for h in 0..horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                rewards[h][s][a] = rng.next_f64();
            }
        }
    }
    // phi rows are on the simplex so |phi|_2 <= 1 and the mu TV norm is
    // <= sqrt(d) automatically; mu rows are distributions.
    let fact = LowRankFactorization { d, phi, mu };
    let sim = TabularMDP::new(
        num_states,
        num_actions,
        horizon,
        0,
        transitions.clone(),
        rewards.clone(),
        Some(fact),
    )?;
    if eps_sim == 0.0 {
        let real = sim.clone();
        return Ok(InstanceBundle {
            sim,
            reals: vec![real],
            declared_eps_sim: 0.0,
            provenance: "random-lowrank".into(),
            variant: None,
        });
    }
    // Per-row perturbation: move mass delta <= eps from one state to another,
    // which changes the row by exactly delta in TV.
    let mut perturbed = transitions;
    for h in 0..horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &mut perturbed[h][s][a];
                let from = rng.sample_index(row);
                let mut to = (from + 1 + (rng.next_u64() as usize % (num_states - 1))) % num_states;
                if to == from {
                    to = (to + 1) % num_states;
                }
                let delta = (rng.next_f64() * eps_sim).min(row[from]);
                row[from] -= delta;
                row[to] += delta;
            }
        }
    }
    // The perturbed kernel is generally not rank-d; no factorization claimed.
    let real = TabularMDP::new(num_states, num_actions, horizon, 0, perturbed, rewards, None)?;
    let (gap, _) = tv_gap(&sim, &real)?;
    Ok(InstanceBundle {
        sim,
        reals: vec![real],
        declared_eps_sim: gap,
        provenance: "random-lowrank".into(),
        variant: None,
    })
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Re-run every MDP/factorization invariant plus the bundle's tv_gap claim.
/// Content failures are reported, never thrown.
pub fn validate_instance(bundle: &InstanceBundle) -> ValidationReport {
    let mut failures = Vec::new();
    let revalidate = |mdp: &TabularMDP, name: &str, failures: &mut Vec<String>| {
        let copy = TabularMDP::new(
            mdp.num_states,
            mdp.num_actions,
            mdp.horizon,
            mdp.init_state,
            mdp.transitions.clone(),
            mdp.rewards.clone(),
            mdp.factorization.clone(),
        );
        if let Err(e) = copy {
            failures.push(format!("{name}: {e}"));
        }
    };
    revalidate(&bundle.sim, "sim", &mut failures);
    for (i, real) in bundle.reals.iter().enumerate() {
        revalidate(real, &format!("real[{i}]"), &mut failures);
        match tv_gap(&bundle.sim, real) {
            Ok((gap, loc)) => {
                if gap > bundle.declared_eps_sim + 1e-12 {
                    failures.push(format!(
                        "real[{i}]: tv_gap {gap} exceeds declared {} at (h={},s={},a={})",
                        bundle.declared_eps_sim, loc.0, loc.1, loc.2
                    ));
                }
            }
            Err(e) => failures.push(format!("real[{i}]: {e}")),
        }
    }
    ValidationReport { pass: failures.is_empty(), failures }
}

/// Parse CLI instance specifiers like `d1:H=12,eps=0.125,variant=zeroed,real=0`,
/// `f1:H=10`, `d2:eps=0.25`, `rand:S=6,A=3,H=8,d=4,eps=0.05,seed=7`.
pub fn parse_instance_spec(spec: &str) -> Result<(InstanceBundle, usize)> {
    let (family, rest) = match spec.split_once(':') {
        Some((f, r)) => (f.trim(), r.trim()),
        None => (spec.trim(), ""),
    };
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("bad instance parameter '{part}'")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get_f64 = |kv: &BTreeMap<String, String>, k: &str| -> Result<Option<f64>> {
        kv.get(k)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("bad {k} '{v}'"))))
            .transpose()
    };
    let get_usize = |kv: &BTreeMap<String, String>, k: &str| -> Result<Option<usize>> {
        kv.get(k)
            .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("bad {k} '{v}'"))))
            .transpose()
    };
    let real_index = get_usize(&kv, "real")?.unwrap_or(0);
    let known = |allowed: &[&str]| -> Result<()> {
        for k in kv.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown parameter '{k}' for '{family}'")));
            }
        }
        Ok(())
    };
    let bundle = match family {
        "d1" => {
            known(&["H", "eps", "variant", "real"])?;
            let h = get_usize(&kv, "H")?.ok_or_else(|| Error::Config("d1 requires H".into()))?;
            let eps =
                get_f64(&kv, "eps")?.ok_or_else(|| Error::Config("d1 requires eps".into()))?;
            let variant = match kv.get("variant").map(|s| s.as_str()) {
                None | Some("as_written") => D1Variant::AsWritten,
                Some("zeroed") => D1Variant::Zeroed,
                Some(other) => {
                    return Err(Error::Config(format!("unknown d1 variant '{other}'")))
                }
            };
            make_comb_lock_d1(h, eps, variant)?
        }
        "f1" => {
            known(&["H", "real"])?;
            let h = get_usize(&kv, "H")?.ok_or_else(|| Error::Config("f1 requires H".into()))?;
            make_didactic_f1(h)?
        }
        "d2" => {
            known(&["eps", "real"])?;
            let eps =
                get_f64(&kv, "eps")?.ok_or_else(|| Error::Config("d2 requires eps".into()))?;
            make_rand_exp_counterexample(eps)?
        }
        "rand" => {
            known(&["S", "A", "H", "d", "eps", "seed", "real"])?;
            let need =
                |k: &str| get_usize(&kv, k)?.ok_or_else(|| Error::Config(format!("rand requires {k}")));
            make_random_lowrank(
                need("S")?,
                need("A")?,
                need("H")?,
                need("d")?,
                get_f64(&kv, "eps")?.ok_or_else(|| Error::Config("rand requires eps".into()))?,
                need("seed")? as u64,
            )?
        }
        other => return Err(Error::Config(format!("unknown instance family '{other}'"))),
    };
    if real_index >= bundle.reals.len() {
        return Err(Error::Config(format!(
            "real index {real_index} out of range (bundle has {})",
            bundle.reals.len()
        )));
    }
    Ok((bundle, real_index))
}
