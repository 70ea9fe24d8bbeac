//! Why the classical DiD regression is biased under staggered adoption with
//! dynamic effects, and how the two-stage estimator avoids it.
//!
//! Run with: cargo run --example two_stage_vs_did

use panel_did::estimators::{did_regression, two_stage_did, Estimand, TwoStageOptions};
use panel_did::report::render_estimate;
use panel_did::simulation::{simulate_panel, true_estimands, SimConfig};

fn main() -> panel_did::Result<()> {
    // 50 units over 10 periods; cohorts adopt at 4, 5, 6 with effects that
    // grow in treatment duration
    let config = SimConfig::sim1();
    let truth = true_estimands(&config);
    let panel = simulate_panel(&config, 0)?;

    println!("true overall effect: {:.4}\n", truth.overall);

    // the regression y ~ unit + time + D places distorted (possibly
    // negative) weights on cell effects and is biased here
    let did = did_regression(&panel)?;
    print!("{}", render_estimate(&did));

    // stage 1: fixed effects from untreated observations only;
    // stage 2: adjusted outcomes compared across treatment status
    let two_stage = two_stage_did(&panel, &TwoStageOptions::default())?;
    print!("\n{}", render_estimate(&two_stage));

    // effects averaged over each cohort's first 4 treated periods instead of
    // all observed ones
    let capped = two_stage_did(
        &panel,
        &TwoStageOptions { estimand: Estimand::Capped(4), ..Default::default() },
    )?;
    print!("\n{}", render_estimate(&capped));
    println!("\ntrue capped(4) effect: {:.4}", truth.capped_at(4).unwrap());
    Ok(())
}
