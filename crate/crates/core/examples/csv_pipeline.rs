//! End-to-end CSV workflow: export a panel, read it back, estimate, and
//! serialize machine-readable results.
//!
//! Run with: cargo run --example csv_pipeline

use panel_did::estimators::{two_stage_event_study, EventStudySpec, TwoStageOptions};
use panel_did::panel::{read_csv, write_csv};
use panel_did::report::{estimate_json, write_event_study_csv};
use panel_did::simulation::{simulate_panel, SimConfig};
use panel_did::{validate_panel, ValidationFlags};

fn main() -> panel_did::Result<()> {
    // export a simulated panel to the CSV schema the tool reads:
    // unit,time,y,first_treat[,cluster][,weight]
    let panel = simulate_panel(&SimConfig::sim1(), 0)?;
    let observations: Vec<_> = panel
        .rows()
        .iter()
        .map(|r| {
            let mut o = panel_did::Observation::new(
                panel.units()[r.unit_idx].clone(),
                r.time,
                r.outcome,
            );
            if let Some(a) = r.adoption {
                o = o.with_adoption(a);
            }
            o
        })
        .collect();
    let mut csv_bytes = Vec::new();
    write_csv(&mut csv_bytes, &observations)?;
    println!("exported {} rows of CSV", observations.len());

    // read it back and validate (always-treated units would be dropped with
    // a warning count; unknown columns are ignored)
    let parsed = read_csv(csv_bytes.as_slice())?;
    let reloaded = validate_panel(&parsed, ValidationFlags::default())?;

    let estimate = two_stage_event_study(
        &reloaded,
        &EventStudySpec::new(1, 4),
        &TwoStageOptions::default(),
    )?;

    // machine outputs: JSON document and plot-ready CSV with 95% CI bounds
    println!("{}", serde_json::to_string_pretty(&estimate_json(&estimate)).unwrap());
    let mut out = Vec::new();
    write_event_study_csv(&mut out, &estimate)?;
    print!("{}", String::from_utf8(out).unwrap());
    Ok(())
}
