//! Head-to-head comparison of the transfer protocols on the combination-lock
//! pair: learning from scratch, playing the sim optimum, and exploration
//! transfer, each over a few seeded trials.

use s2rlab::instances::{make_comb_lock_d1, D1Variant};
use s2rlab::regression::BufferInit;
use s2rlab::transfer::{
    direct_transfer_protocol, exploration_transfer, zeta_greedy_protocol, TrialKey,
};

fn main() -> s2rlab::Result<()> {
    let bundle = make_comb_lock_d1(8, 0.125, D1Variant::Zeroed)?;
    let sim = &bundle.sim;
    let real = &bundle.reals[0];
    let t = 4000;
    let trials = 3;

    for trial in 0..trials {
        let key = TrialKey::new(99, trial);
        let zg = zeta_greedy_protocol(real, 0.1, t, &key, 10, BufferInit::OnePerSah, t)?;
        let dt = direct_transfer_protocol(sim, real, 0.1, t, &key, t)?;
        let et = exploration_transfer(sim, real, bundle.declared_eps_sim, 0.05, t, &key, t)?;
        println!(
            "trial {trial}: zeta-greedy {:.4} | direct {:.4} | exploration {:.4}",
            zg.final_suboptimality, dt.final_suboptimality, et.final_suboptimality
        );
        for note in &et.notes {
            println!("  exploration note: {note}");
        }
    }
    println!("(suboptimality vs the exact real optimum; budget {t} episodes each)");
    Ok(())
}
