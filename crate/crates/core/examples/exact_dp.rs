//! Exact dynamic programming on the combination-lock instance: optimal
//! values, a fixed policy's value, occupancy measures, and the sim/real gap.

use s2rlab::instances::{make_comb_lock_d1, D1Variant};
use s2rlab::mdp::{occupancy_measures, optimal_policy_vi, policy_value_exact, tv_gap};
use s2rlab::policy::Policy;

fn main() -> s2rlab::Result<()> {
    let bundle = make_comb_lock_d1(12, 0.125, D1Variant::Zeroed)?;
    let sim = &bundle.sim;
    let real = &bundle.reals[0];

    let (pi_sim, _, v_sim) = optimal_policy_vi(sim, None)?;
    let (pi_real, _, v_real) = optimal_policy_vi(real, None)?;
    println!("sim  optimal value: {v_sim:.6}");
    println!("real optimal value: {v_real:.6}");

    let (v_transfer, _) = policy_value_exact(real, &pi_sim)?;
    println!("sim-optimal policy on real: {v_transfer:.6} (gap {:.6})", v_real - v_transfer);

    let (eps, argmax) = tv_gap(sim, real)?;
    println!("kernel TV gap: {eps:.6} attained at (h, s, a) = {argmax:?}");

    // Where does the real optimum spend its time at the last step?
    let w = occupancy_measures(real, &pi_real)?;
    let h = real.horizon;
    for s in 0..real.num_states {
        for a in 0..real.num_actions {
            println!("w_{h}(s{s}, a{a}) = {:.6}", w.w[h - 1][s][a]);
        }
    }

    // A hand-written policy for comparison: always take the second action.
    let naive = Policy::always_action(1, real.horizon, real.num_states);
    let (v_naive, _) = policy_value_exact(real, &naive)?;
    println!("always-a2 value on real: {v_naive:.6}");
    Ok(())
}
