//! Parallel Monte Carlo over all estimators on a simulated design, with
//! reproducible per-replication random streams.
//!
//! Run with: cargo run --release --example monte_carlo

use panel_did::estimators::{
    aggregated_att, did_regression, stacked_did, two_stage_did, Estimand, StackedOptions,
    TwoStageOptions,
};
use panel_did::report::{render_mc_suite, McSuiteRow};
use panel_did::simulation::{monte_carlo, true_estimands, SimConfig};

fn main() -> panel_did::Result<()> {
    let config = SimConfig::sim1();
    let truth = true_estimands(&config);
    let reps = 250;

    let capped = TwoStageOptions { estimand: Estimand::Capped(4), ..Default::default() };
    let rows = vec![
        McSuiteRow {
            method: "did".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, reps, |p| did_regression(p))?,
            truth: Some(truth.overall),
        },
        McSuiteRow {
            method: "two-stage".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, reps, |p| {
                two_stage_did(p, &TwoStageOptions::default())
            })?,
            truth: Some(truth.overall),
        },
        McSuiteRow {
            method: "aggregated".into(),
            estimand: "overall-att".into(),
            result: monte_carlo(&config, reps, |p| {
                aggregated_att(p, Estimand::Overall).map(|(e, _)| e)
            })?,
            truth: Some(truth.overall),
        },
        McSuiteRow {
            method: "two-stage".into(),
            estimand: "capped-att(4)".into(),
            result: monte_carlo(&config, reps, |p| two_stage_did(p, &capped))?,
            truth: truth.capped_at(4),
        },
        McSuiteRow {
            method: "stacked".into(),
            estimand: "capped-att(4)".into(),
            result: monte_carlo(&config, reps, |p| {
                stacked_did(p, &StackedOptions::new(3, 4))
            })?,
            truth: truth.capped_at(4),
        },
    ];
    print!("{}", render_mc_suite(&rows));
    Ok(())
}
