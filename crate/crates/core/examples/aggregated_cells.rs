//! Unrestricted group-by-period effect estimates, aggregated into overall,
//! capped, and per-duration summaries with delta-method standard errors.
//!
//! Run with: cargo run --example aggregated_cells

use panel_did::estimators::{aggregated_att, aggregated_event_study, Estimand, EventStudySpec};
use panel_did::report::render_estimate;
use panel_did::simulation::{simulate_panel, SimConfig};

fn main() -> panel_did::Result<()> {
    let panel = simulate_panel(&SimConfig::sim1(), 0)?;

    // one coefficient per treated (group, period) cell
    let (overall, grid) = aggregated_att(&panel, Estimand::Overall)?;
    println!("cell effects:");
    for cell in &grid.cells {
        println!(
            "  group {} period {:>2} (r={}): {:>7.3} (se {:.3})",
            cell.adoption,
            cell.time,
            cell.rel_time,
            cell.effect,
            cell.variance.sqrt()
        );
    }

    println!("\nduration averages:");
    for (r, avg) in grid.duration_averages() {
        println!("  r={r}: {avg:.3}");
    }

    print!("\n{}", render_estimate(&overall));
    let (capped, _) = aggregated_att(&panel, Estimand::Capped(4))?;
    print!("{}", render_estimate(&capped));

    // cohort-by-duration cells including leads, aggregated per duration
    let es = aggregated_event_study(&panel, &EventStudySpec::new(1, 4), &[])?;
    print!("\n{}", render_estimate(&es));
    Ok(())
}
