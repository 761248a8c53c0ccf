//! Closed-form transfer diagnostics: value-transfer and gap bounds, the
//! random-exploration escape factor, the coverage condition, and the sample
//! bound, evaluated on three parameter settings.

use s2rlab::transfer::{theory_diagnostics, DiagnosticsInput};

fn main() -> s2rlab::Result<()> {
    let base = DiagnosticsInput {
        d: 4,
        horizon: 10,
        num_actions: 2,
        eps_sim: 0.0,
        lambda_bar_min: 0.125,
        gamma: f64::INFINITY,
        kappa: 0.5,
        epsilon: 0.1,
        delta: 0.05,
        lambda_star: None,
        r_max: None,
        log_f_eff: None,
    };

    // Perfect simulator, unconstrained fit: everything collapses.
    let report = theory_diagnostics(&base)?;
    println!("perfect sim: xi = {:.4}, k* = {:?}", report.xi, report.k_star);

    // Coverage condition at its boundary: eps_sim = lambda* / (64 d H A^3).
    let boundary = DiagnosticsInput {
        eps_sim: 0.25 / (64.0 * 4.0 * 10.0 * 8.0),
        lambda_star: Some(0.25),
        gamma: 1.0,
        ..base.clone()
    };
    let report = theory_diagnostics(&boundary)?;
    println!(
        "boundary case: coverage condition {:?}, xi = {:.4}",
        report.coverage_condition, report.xi
    );

    // Poorly covered regime: xi exceeds 1, so no finite exploration depth.
    let poor = DiagnosticsInput { eps_sim: 0.01, gamma: 32.0, ..base };
    let report = theory_diagnostics(&poor)?;
    println!(
        "poor coverage: xi = {:.4}, k* = {:?}, sample bound {:.3e} (constants suppressed)",
        report.xi, report.k_star, report.sample_bound
    );
    Ok(())
}
