//! Stacked difference in differences: per-cohort event windows with a shared
//! control pool, and the implicit cohort weights that explain why its
//! estimand differs from a size-weighted average.
//!
//! Run with: cargo run --example stacked_estimation

use panel_did::diagnostics::stacked_weights;
use panel_did::estimators::{stacked_did, two_stage_did, Estimand, StackedOptions, TwoStageOptions};
use panel_did::report::render_estimate;
use panel_did::simulation::{simulate_panel, true_estimands, SimConfig};

fn main() -> panel_did::Result<()> {
    // unequal cohorts: 5, 15, 10 treated units and 20 never-treated controls
    let config = SimConfig::sim2();
    let panel = simulate_panel(&config, 0)?;
    let truth = true_estimands(&config);

    // window of 3 pre and 4 post periods per cohort
    let stacked = stacked_did(&panel, &StackedOptions::new(3, 4))?;
    print!("{}", render_estimate(&stacked));

    let two_stage = two_stage_did(
        &panel,
        &TwoStageOptions { estimand: Estimand::Capped(4), ..Default::default() },
    )?;
    print!("\n{}", render_estimate(&two_stage));
    println!("\ntrue capped(4) effect: {:.3}", truth.capped_at(4).unwrap());

    // stacking weights cohorts by (1 - pi) * pi * rho, not by size, so the
    // small early cohort with large effects is over-weighted
    let sizes: Vec<f64> = config.cohorts.iter().map(|c| c.n_units as f64).collect();
    let w = stacked_weights(&sizes, config.n_never_treated as f64, 3, 4)?;
    println!("\ncohort weights per duration (tau = {:.3}):", w.tau);
    for (c, cohort) in config.cohorts.iter().enumerate() {
        println!(
            "  adoption {}: pi = {:.3}, rho = {:.3}, weight = {:.4}",
            cohort.adoption, w.pi[c], w.rho[c], w.per_cohort[c]
        );
    }
    let effects: Vec<Vec<f64>> = config
        .cohorts
        .iter()
        .map(|c| (0..4).map(|r| config.effect(c.adoption, c.adoption + r)).collect())
        .collect();
    println!(
        "implied stacked estimand {:.3} vs size-weighted truth {:.3}",
        w.implied_estimand(&effects),
        truth.capped_at(4).unwrap()
    );
    Ok(())
}
