mod common;

use theseus_core::calibration::{
    all_satisfied, calibrate, check_conditions, CalibrationRequest, ConditionInputs, Scenario, ThresholdChoice,
    Thresholds,
};
use theseus_core::population::{bne_profile_incomplete, check_profile, Strategy};
use theseus_core::QualityDistribution;

use common::{bounds, population, prior, targets};

#[test]
fn incomplete_equilibrium_has_no_profitable_deviation() {
    let dist = prior();
    for i in 0..100u64 {
        let count = 3 + (i as usize * 29) % 148;
        let workers = population(count, 500 + i);
        let report = calibrate(&CalibrationRequest {
            scenario: Scenario::Incomplete,
            workers: &workers,
            dist: &dist,
            targets: targets(),
            budget: 1e9,
            bounds: bounds(),
            thresholds: ThresholdChoice::Draw { seed: 900 + i },
        })
        .unwrap();
        assert!(report.feasible);
        let Thresholds::Incomplete { delta_l, delta_h } = report.thresholds else {
            unreachable!()
        };
        let params = report.params().unwrap();
        let profile = bne_profile_incomplete(&workers, delta_l, delta_h, params, &dist).unwrap();
        let ref_m2 = dist.truncated_second_moment(delta_h).unwrap();
        for c in check_profile(&workers, &profile, params, ref_m2, 100).unwrap() {
            assert!(c.gain() <= 1e-9, "trial {i}: {c:?}");
            if let Strategy::Participate(d) = c.chosen {
                assert!(d <= delta_h);
            }
        }
        let verdicts = check_conditions(
            params,
            ConditionInputs::Incomplete {
                bounds: bounds(),
                delta_l,
                delta_h,
            },
            &dist,
        )
        .unwrap();
        assert!(all_satisfied(&verdicts));
    }
}
