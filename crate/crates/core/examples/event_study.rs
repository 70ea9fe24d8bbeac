//! Lead and duration coefficients: a naive event study shows spurious
//! pre-trends under heterogeneous dynamic effects, the two-stage version
//! does not.
//!
//! Run with: cargo run --example event_study

use panel_did::estimators::{
    naive_event_study, two_stage_event_study, EventStudySpec, TwoStageOptions,
};
use panel_did::report::render_estimate;
use panel_did::simulation::{simulate_panel, SimConfig};

fn main() -> panel_did::Result<()> {
    let panel = simulate_panel(&SimConfig::sim1(), 0)?;

    // leads r = -1..=0 and durations r = 1.. (r = time - adoption + 1);
    // untreated observations further than 1 period before adoption are the
    // reference category
    let spec = EventStudySpec::new(1, 4);

    // all indicators in one regression with unit and time effects: the
    // heterogeneous effect paths contaminate the lead coefficients
    let naive = naive_event_study(&panel, &spec)?;
    print!("{}", render_estimate(&naive));

    // two-stage: leads estimated from outcomes adjusted by first-stage fixed
    // effects, so they are centered at zero under parallel trends
    let two_stage = two_stage_event_study(&panel, &spec, &TwoStageOptions::default())?;
    print!("\n{}", render_estimate(&two_stage));

    let lead = |est: &panel_did::estimators::Estimate| est.coefficient("r=-1").unwrap();
    println!(
        "\nlead at r=-1: naive {:.3} vs two-stage {:.3}",
        lead(&naive),
        lead(&two_stage)
    );
    Ok(())
}
