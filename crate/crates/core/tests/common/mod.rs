//! Shared oracles and hand-built instances for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use winktpg::grid::{Cell, Direction};
use winktpg::kinodynamics::{
    build_primitives, plan_speed_profile, KinematicState, PlanError, PrimitiveSet,
    ReservedInterval, RobotModel,
};
use winktpg::plan::{MapfPlan, TimedPath};

pub const TOL: f64 = 1e-6;

/// Occupancy of vertex `k` is `[reach_k, reach_{k+1}]` and must lie in
/// `intervals[k]`.
pub fn occupancy_ok(reach: &[f64], intervals: &[ReservedInterval]) -> bool {
    (0..reach.len()).all(|k| {
        let leave = reach.get(k + 1).copied().unwrap_or(f64::INFINITY);
        let iv = intervals[k];
        let lower_ok = k == 0 || reach[k] >= iv.lower - 1e-9;
        lower_ok && (k + 1 == reach.len() || leave <= iv.upper + 1e-9)
    })
}

struct Oracle<'a> {
    dirs: Vec<Direction>,
    intervals: &'a [ReservedInterval],
    prims: &'a PrimitiveSet,
    best: f64,
}

/// Primitives chained without stopping: crossing offsets relative to the
/// departure, the vertex reached and the exit speed.
#[derive(Clone)]
struct Run {
    offsets: Vec<f64>,
    end: usize,
    speed: usize,
}

impl Oracle<'_> {
    fn last(&self) -> usize {
        self.dirs.len()
    }

    /// Every run from `vertex` entered at speed index `speed` that ends at rest.
    fn runs(&self, vertex: usize, speed: usize, dir: Direction, acc: Run, out: &mut Vec<Run>) {
        if !acc.offsets.is_empty() && speed == 0 {
            out.push(acc);
            return;
        }
        let t0 = acc.offsets.last().copied().unwrap_or(0.0);
        for (_, p) in self.prims.from_speed(speed) {
            let end = vertex + p.cells;
            if end > self.last() || (end == self.last() && p.exit_speed != 0) {
                continue;
            }
            // Differential drive moves straight while not at rest.
            if self.prims.model.is_differential() && self.dirs[vertex..end].iter().any(|d| *d != dir) {
                continue;
            }
            let mut next = acc.clone();
            next.offsets.extend(p.crossing_offsets.iter().map(|o| t0 + o));
            next.end = end;
            next.speed = p.exit_speed;
            self.runs(end, p.exit_speed, dir, next, out);
        }
    }

    /// Departure window of a run leaving `vertex`: every crossed vertex is
    /// reached after its lower bound, and every vertex is left before its
    /// upper bound.
    fn departure(&self, vertex: usize, run: &Run) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (j, off) in run.offsets.iter().enumerate() {
            let k = vertex + j + 1;
            lo = lo.max(self.intervals[k].lower - off);
            hi = hi.min(self.intervals[k - 1].upper - off);
        }
        (lo, hi)
    }

    /// `t` is the earliest departure; `fixed` forbids delaying it.
    fn search(&mut self, vertex: usize, speed: usize, heading: Option<Direction>, t: f64, fixed: bool) {
        if vertex == self.last() {
            self.best = self.best.min(t);
            return;
        }
        let model = &self.prims.model;
        let dir = self.dirs[vertex];
        let turn = match (model.is_differential(), heading, fixed) {
            (true, Some(h), false) => model.turn_time(h, dir),
            (true, Some(h), true) if h != dir => return,
            _ => 0.0,
        };
        let mut runs = Vec::new();
        let empty = Run { offsets: Vec::new(), end: vertex, speed };
        self.runs(vertex, speed, dir, empty, &mut runs);
        for run in runs {
            let (lo, hi) = self.departure(vertex, &run);
            let d = if fixed { t } else { lo.max(t + turn) };
            if d < lo - 1e-9 || d > hi + 1e-9 {
                continue;
            }
            let arrive = d + run.offsets.last().unwrap();
            let heading = Some(self.dirs[run.end - 1]);
            self.search(run.end, run.speed, heading, arrive, false);
        }
    }
}

/// Minimum reach time of the last vertex, or infinity if infeasible.
pub fn brute_force(chain: &[Cell], intervals: &[ReservedInterval], start: KinematicState, prims: &PrimitiveSet) -> f64 {
    let dirs: Vec<Direction> = chain.windows(2).map(|w| w[0].direction_to(w[1]).unwrap()).collect();
    let heading = if prims.model.is_differential() {
        start.heading.or(dirs.first().copied())
    } else {
        start.heading
    };
    let mut o = Oracle {
        dirs,
        intervals,
        prims,
        best: f64::INFINITY,
    };
    o.search(0, start.speed, heading, start.time, start.speed != 0);
    o.best
}

pub fn random_chain(rng: &mut impl Rng, len: usize) -> Vec<Cell> {
    let mut chain = vec![Cell::new(10, 10)];
    while chain.len() < len {
        let last = *chain.last().unwrap();
        let d = Direction::ALL[rng.random_range(0..4)];
        let next = d.step(last).unwrap();
        if chain.len() >= 2 && chain[chain.len() - 2] == next {
            continue;
        }
        chain.push(next);
    }
    chain
}

pub fn random_intervals(rng: &mut impl Rng, len: usize) -> Vec<ReservedInterval> {
    let mut iv = vec![ReservedInterval::full(); len];
    for _ in 0..rng.random_range(0..=3) {
        let k = rng.random_range(0..len);
        let lower = if k == 0 { 0.0 } else { rng.random_range(0.0..8.0) };
        let upper = if k + 1 == len {
            f64::INFINITY
        } else {
            lower + rng.random_range(0.3..8.0)
        };
        iv[k] = ReservedInterval::new(lower, upper);
    }
    iv
}

/// Planner versus enumeration on random chains of up to six cells with up to
/// three bounded intervals. Returns feasible and infeasible counts, or the
/// first disagreement.
pub fn compare(model: RobotModel, seed: u64, cases: usize) -> Result<(usize, usize), String> {
    let prims = build_primitives(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut feasible, mut infeasible) = (0, 0);
    for case in 0..cases {
        let len = rng.random_range(2..=6);
        let chain = random_chain(&mut rng, len);
        let intervals = random_intervals(&mut rng, len);
        let start = if rng.random_bool(0.2) {
            KinematicState {
                speed: rng.random_range(1..prims.speeds().len()),
                heading: chain[0].direction_to(chain[1]),
                time: 0.0,
            }
        } else {
            KinematicState::at_rest(0.0)
        };
        let expected = brute_force(&chain, &intervals, start, &prims);
        match plan_speed_profile(&chain, &intervals, start, &prims) {
            Ok(p) => {
                if (p.end_time() - expected).abs() >= TOL {
                    return Err(format!(
                        "case {case}: planner {} vs enumeration {expected}\nchain {chain:?}\nintervals {intervals:?}\nstart {start:?}",
                        p.end_time()
                    ));
                }
                if !occupancy_ok(&p.vertex_times, &intervals) {
                    return Err(format!("case {case}: occupancy outside intervals"));
                }
                feasible += 1;
            }
            Err(PlanError::Infeasible) => {
                if expected.is_finite() {
                    return Err(format!(
                        "case {case}: planner infeasible, enumeration {expected}\nchain {chain:?}\nintervals {intervals:?}\nstart {start:?}"
                    ));
                }
                infeasible += 1;
            }
            Err(e) => return Err(format!("case {case}: {e}")),
        }
    }
    Ok((feasible, infeasible))
}


fn c(x: u32, y: u32) -> Cell {
    Cell::new(x, y)
}

/// Two agents sharing one cell; agent 0 waits one step so agent 1 passes first.
pub fn corner_plan() -> MapfPlan {
    MapfPlan::new(vec![
        TimedPath::from_cells(0, &[c(1, 0), c(1, 0), c(1, 1), c(1, 2)]),
        TimedPath::from_cells(1, &[c(0, 1), c(1, 1), c(2, 1)]),
    ])
}

/// Columns A, B, C are x = 0, 1, 2; rows 1..5 are y = 1..5. R1 goes
/// C2 -> B2 -> A2, R2 goes B5 -> B1 and passes B2 after R1.
pub fn passing_plan() -> MapfPlan {
    MapfPlan::new(vec![
        TimedPath::from_cells(0, &[c(2, 2), c(1, 2), c(0, 2)]),
        TimedPath::from_cells(1, &[c(1, 5), c(1, 4), c(1, 3), c(1, 2), c(1, 1)]),
    ])
}

/// Agent 1 crosses two cells that agent 0 visits afterwards, giving two
/// conflicting Type-2 edges into agent 0's chain.
pub fn merge_plan() -> MapfPlan {
    MapfPlan::new(vec![
        TimedPath::from_cells(0, &[c(0, 1), c(0, 1), c(0, 1), c(1, 1), c(2, 1), c(2, 2)]),
        TimedPath::from_cells(1, &[c(1, 0), c(1, 1), c(2, 1), c(3, 1)]),
    ])
}

pub fn omni() -> PrimitiveSet {
    build_primitives(&RobotModel::omnidirectional()).unwrap()
}

pub fn diff() -> PrimitiveSet {
    build_primitives(&RobotModel::differential_drive()).unwrap()
}

/// Standard normal CDF through the error function.
pub fn phi(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Quantile by bisection on [`phi`].
pub fn quantile_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Agent 1 crosses (5,5) along row 5 without stopping; agent 0 comes down
/// column 5 and passes the same cell afterwards, also at speed.
pub fn crossing_at_speed() -> MapfPlan {
    let row: Vec<Cell> = (0..11).map(|x| c(x, 5)).collect();
    let mut col: Vec<Cell> = vec![c(5, 0); 3];
    col.extend((1..11).map(|y| c(5, y)));
    MapfPlan::new(vec![TimedPath::from_cells(0, &col), TimedPath::from_cells(1, &row)])
}

/// Order violations of the single Type-2 edge of [`crossing_at_speed`] over
/// `trials` noisy executions of the kTPGu plan.
pub fn single_edge_violations(trials: u64, eps: f64, p_d: f64) -> usize {
    use winktpg::ktpg::{run_ktpg, UncertaintyModel};
    use winktpg::sim::{check_trace, execute_profiles, NoiseModel};
    let g = winktpg::tpg::build_tpg(&crossing_at_speed()).unwrap();
    assert_eq!(g.type2_edges().len(), 1);
    let u = UncertaintyModel::uniform(2, eps, p_d).unwrap();
    let out = run_ktpg(&g, &omni(), Some(&u), None).unwrap();
    let e = *g.edge(0);
    // Both agents are moving at the edge's endpoints.
    assert!(out.profiles[e.to.agent].vertex_speeds[e.to.seq] > 0.0);
    assert!(out.profiles[e.from.agent].vertex_speeds[e.from.seq] > 0.0);
    (0..trials)
        .filter(|&seed| {
            let trace = execute_profiles(g.chains().to_vec(), &out.profiles, NoiseModel::uniform(2, eps, seed)).unwrap();
            !check_trace(&trace, &g).order_violations.is_empty()
        })
        .count()
}
