//! Small hand-built instances with known graphs and outcomes.

mod common;

use common::{diff, corner_plan, passing_plan, merge_plan, omni};
use winktpg::grid::Cell;
use winktpg::ktpg::{
    init_state, run_ktpg, satisfy_edges, select_agent, unlocked_prefix, EdgeStatus,
};
use winktpg::kinodynamics::{plan_speed_profile, KinematicState, ReservedInterval};
use winktpg::plan::validate_plan;
use winktpg::sim::{check_trace, execute_profiles, run_adg_baseline, AdgConfig, NoiseModel};
use winktpg::tpg::{build_tpg, VertexId};
use winktpg::window::{run_execution_loop, LoopLimits, WindowConfig};

#[test]
fn corner_graph_has_single_edge() {
    let plan = corner_plan();
    assert!(validate_plan(&plan).is_collision_free());
    let g = build_tpg(&plan).unwrap();
    assert_eq!(g.type2_edges().len(), 1);
    let e = g.edge(0);
    assert_eq!((e.from, e.to), (VertexId::new(1, 2), VertexId::new(0, 1)));
    assert_eq!(e.location, Cell::new(1, 1));
    assert_eq!(g.incoming_ids(VertexId::new(0, 1)).len(), 1);
}

#[test]
fn corner_profiles_are_disjoint_and_replayed_exactly() {
    let g = build_tpg(&corner_plan()).unwrap();
    for prims in [omni(), diff()] {
        let out = run_ktpg(&g, &prims, None, None).unwrap();
        assert!(out.profiles[0].reach_time(1) > out.profiles[1].reach_time(2));
        let trace = execute_profiles(g.chains().to_vec(), &out.profiles, NoiseModel::noiseless(2)).unwrap();
        for (a, p) in out.profiles.iter().enumerate() {
            for (x, y) in trace.reach_times[a].iter().zip(&p.vertex_times) {
                assert!((x - y).abs() < 1e-6);
            }
        }
        assert!(check_trace(&trace, &g).is_clean());
    }
}

#[test]
fn corner_windowed_execution_is_clean() {
    let g = build_tpg(&corner_plan()).unwrap();
    for prims in [omni(), diff()] {
        for cfg in [
            WindowConfig::unbounded(),
            WindowConfig::new(0.5, 1, 1).unwrap(),
            WindowConfig::new(2.0, 2, 2).unwrap(),
        ] {
            let (trace, _) =
                run_execution_loop(&g, &prims, None, cfg, NoiseModel::noiseless(2), LoopLimits::default()).unwrap();
            assert!(trace.is_complete());
            let report = check_trace(&trace, &g);
            assert!(report.is_clean(), "{cfg:?}: {report:?}");
        }
    }
}

#[test]
fn passing_edge_points_at_r2_b2() {
    let g = build_tpg(&passing_plan()).unwrap();
    assert_eq!(g.type2_edges().len(), 1);
    let e = g.edge(0);
    assert_eq!(e.from, VertexId::new(0, 2));
    assert_eq!(e.to, VertexId::new(1, 3));
    assert_eq!(e.location, Cell::new(1, 2));
}

#[test]
fn passing_adg_is_slower_than_ktpg() {
    let g = build_tpg(&passing_plan()).unwrap();
    let prims = omni();
    let out = run_ktpg(&g, &prims, None, None).unwrap();
    let (adg, _) = run_adg_baseline(&g, &prims, NoiseModel::noiseless(2), AdgConfig::default()).unwrap();
    let ktpg_finish = out.profiles[1].end_time();
    let adg_finish = adg.finish_time(1).unwrap();
    assert!(adg_finish > ktpg_finish + 0.1, "adg {adg_finish} vs ktpg {ktpg_finish}");
    // Under ADG, R2 comes to a stop before B2 since it may not plan past B3 yet.
    let b3 = adg.reach_times[1][2];
    let (_, leave_b3) = adg.occupancy(1, 2).unwrap();
    assert!(leave_b3 - b3 > 1.0);
    // With the whole graph known, R2 never stops between start and goal.
    assert!(out.profiles[1].vertex_speeds[1..4].iter().all(|v| *v > 0.0));
}

#[test]
fn merge_both_edges_conflicting_then_satisfied() {
    let g = build_tpg(&merge_plan()).unwrap();
    assert_eq!(g.type2_edges().len(), 2);
    let mut s = init_state(&g).unwrap();
    assert!(s.status.iter().all(|st| *st == EdgeStatus::Conflicting));
    // Agent 1's chain is fully unlocked; agent 0 is locked past its start.
    assert_eq!(unlocked_prefix(&g, &s, 1), g.chain_len(1));
    assert_eq!(unlocked_prefix(&g, &s, 0), 1);
    // Selecting agent 1 unlocks three of agent 0's vertices; agent 0 none.
    assert_eq!(select_agent(&g, &s), Some(1));

    let prims = omni();
    let p = plan_speed_profile(
        g.chain(1),
        &vec![ReservedInterval::full(); g.chain_len(1)],
        KinematicState::at_rest(0.0),
        &prims,
    )
    .unwrap();
    let leave_first = p.vertex_times[2];
    assert_eq!(satisfy_edges(&g, &mut s, 1, p, None).unwrap(), 2);
    assert!(s.is_terminal());
    // Split at agent 1's leave time.
    assert_eq!(s.interval(&g, VertexId::new(1, 1)).upper, leave_first);
    assert!(s.interval(&g, VertexId::new(0, 1)).lower > leave_first);
    assert_eq!(unlocked_prefix(&g, &s, 0), g.chain_len(0));
}

#[test]
fn merge_full_run_respects_order() {
    let g = build_tpg(&merge_plan()).unwrap();
    let out = run_ktpg(&g, &diff(), None, None).unwrap();
    assert_eq!(out.iterations, 1);
    for e in g.type2_edges() {
        let leave = out.profiles[e.from.agent].reach_time(e.from.seq);
        assert!(out.profiles[e.to.agent].reach_time(e.to.seq) > leave);
    }
}
