//! Cross-estimator consistency checks on simulated panels.

use panel_did::estimators::{
    aggregated_att, did_regression, two_stage_did, Estimand, SeMethod, TwoStageOptions,
};
use panel_did::simulation::{simulate_panel, SimConfig};
use panel_did::{validate_panel, Observation, Panel, ValidationFlags};
use proptest::prelude::*;

fn sim_panel(rep: u64) -> Panel {
    simulate_panel(&SimConfig::sim1(), rep).unwrap()
}

fn rescale(panel: &Panel, a: f64, b: f64) -> Panel {
    let raw: Vec<Observation> = panel
        .rows()
        .iter()
        .map(|r| {
            let mut o = Observation::new(
                panel.units()[r.unit_idx].clone(),
                r.time,
                a + b * r.outcome,
            );
            if let Some(ad) = r.adoption {
                o = o.with_adoption(ad);
            }
            o
        })
        .collect();
    validate_panel(&raw, ValidationFlags::default()).unwrap()
}

#[test]
fn corrected_and_naive_standard_errors_genuinely_differ() {
    let panel = sim_panel(0);
    let gmm = two_stage_did(&panel, &TwoStageOptions::default()).unwrap();
    let naive = two_stage_did(
        &panel,
        &TwoStageOptions { se: SeMethod::Naive, ..Default::default() },
    )
    .unwrap();
    assert_eq!(gmm.point_scalar(), naive.point_scalar());
    assert!(
        (gmm.se_scalar() - naive.se_scalar()).abs() > 1e-12,
        "correction had no effect: {} vs {}",
        gmm.se_scalar(),
        naive.se_scalar()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // affine outcome transforms shift nothing and scale everything: the
    // treatment coefficient maps beta -> b * beta exactly
    #[test]
    fn estimates_are_affine_equivariant(
        rep in 0u64..32,
        a in -50.0f64..50.0,
        b in prop_oneof![0.05f64..20.0, -20.0f64..-0.05],
    ) {
        let panel = sim_panel(rep);
        let scaled = rescale(&panel, a, b);

        let did = did_regression(&panel).unwrap().point_scalar();
        let did_s = did_regression(&scaled).unwrap().point_scalar();
        prop_assert!((did_s - b * did).abs() < 1e-8 * (1.0 + did.abs() * b.abs()));

        let ts = two_stage_did(&panel, &TwoStageOptions::default()).unwrap();
        let ts_s = two_stage_did(&scaled, &TwoStageOptions::default()).unwrap();
        prop_assert!(
            (ts_s.point_scalar() - b * ts.point_scalar()).abs()
                < 1e-8 * (1.0 + ts.point_scalar().abs() * b.abs())
        );
        // standard errors scale by |b|
        prop_assert!(
            (ts_s.se_scalar() - b.abs() * ts.se_scalar()).abs()
                < 1e-8 * (1.0 + ts.se_scalar() * b.abs())
        );
    }
}

#[test]
fn capped_estimand_is_invariant_to_post_cap_outcomes() {
    // outcomes beyond the duration cap are dropped from the second stage, so
    // corrupting them must not move the capped point estimate
    let panel = sim_panel(5);
    let options = TwoStageOptions { estimand: Estimand::Capped(3), ..Default::default() };
    let base = two_stage_did(&panel, &options).unwrap();

    let raw: Vec<Observation> = panel
        .rows()
        .iter()
        .map(|r| {
            let corrupt = r.rel_time.is_some_and(|rel| rel > 3);
            let y = if corrupt { r.outcome + 1000.0 } else { r.outcome };
            let mut o = Observation::new(panel.units()[r.unit_idx].clone(), r.time, y);
            if let Some(ad) = r.adoption {
                o = o.with_adoption(ad);
            }
            o
        })
        .collect();
    let corrupted = validate_panel(&raw, ValidationFlags::default()).unwrap();
    let moved = two_stage_did(&corrupted, &options).unwrap();
    assert!((base.point_scalar() - moved.point_scalar()).abs() < 1e-9);
}

#[test]
fn aggregated_and_two_stage_agree_on_both_estimands() {
    for rep in 0..5 {
        let panel = sim_panel(rep);
        for estimand in [Estimand::Overall, Estimand::Capped(4)] {
            let ts = two_stage_did(
                &panel,
                &TwoStageOptions { estimand, ..Default::default() },
            )
            .unwrap();
            let (agg, _) = aggregated_att(&panel, estimand).unwrap();
            assert!(
                (ts.point_scalar() - agg.point_scalar()).abs() < 1e-8,
                "{estimand:?} rep {rep}: {} vs {}",
                ts.point_scalar(),
                agg.point_scalar()
            );
        }
    }
}
