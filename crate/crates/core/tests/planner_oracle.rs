//! Speed planner against exhaustive enumeration of primitive sequences.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{compare, occupancy_ok, random_chain, random_intervals, TOL};
use winktpg::grid::Cell;
use winktpg::kinodynamics::{build_primitives, plan_speed_profile, KinematicState, ReservedInterval, RobotModel};

#[test]
fn omnidirectional_matches_enumeration() {
    let (f, i) = compare(RobotModel::omnidirectional(), 11, 600).unwrap();
    assert!(f > 300 && i > 10, "feasible {f}, infeasible {i}");
}

#[test]
fn differential_drive_matches_enumeration() {
    let (f, i) = compare(RobotModel::differential_drive(), 12, 600).unwrap();
    assert!(f > 300 && i > 10, "feasible {f}, infeasible {i}");
}

fn any_interval_case() -> impl Strategy<Value = (Vec<Cell>, Vec<ReservedInterval>, bool)> {
    (2usize..=7, any::<u64>(), any::<bool>()).prop_map(|(len, seed, diff)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_chain(&mut rng, len), random_intervals(&mut rng, len), diff)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn profiles_are_well_formed((chain, intervals, diff) in any_interval_case()) {
        let model = if diff { RobotModel::differential_drive() } else { RobotModel::omnidirectional() };
        let prims = build_primitives(&model).unwrap();
        if let Ok(p) = plan_speed_profile(&chain, &intervals, KinematicState::at_rest(0.0), &prims) {
            prop_assert_eq!(p.len(), chain.len());
            prop_assert!(p.vertex_times.windows(2).all(|w| w[1] > w[0]));
            prop_assert_eq!(p.vertex_speeds[0], 0.0);
            prop_assert_eq!(*p.vertex_speeds.last().unwrap(), 0.0);
            prop_assert!(p.waits_only_at_rest());
            prop_assert!(occupancy_ok(&p.vertex_times, &intervals));
            // Never faster than the unconstrained optimum.
            let free = vec![ReservedInterval::full(); chain.len()];
            let solo = plan_speed_profile(&chain, &free, KinematicState::at_rest(0.0), &prims).unwrap();
            prop_assert!(p.end_time() >= solo.end_time() - TOL);
        }
    }

    #[test]
    fn later_start_never_finishes_earlier(
        (chain, intervals, diff) in any_interval_case(),
        delay in 0.0f64..3.0,
    ) {
        let model = if diff { RobotModel::differential_drive() } else { RobotModel::omnidirectional() };
        let prims = build_primitives(&model).unwrap();
        let a = plan_speed_profile(&chain, &intervals, KinematicState::at_rest(0.0), &prims);
        let b = plan_speed_profile(&chain, &intervals, KinematicState::at_rest(delay), &prims);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!(b.end_time() >= a.end_time() - TOL);
        }
    }
}
