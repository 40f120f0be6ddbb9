//! Benchmark maps and MAPF instances planned with prioritized space-time A*.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, GridMap};
use crate::plan::{validate_plan, MapfPlan, TimedPath};
use crate::scenario::AgentTask;

/// Priority orders tried before giving up on an instance.
pub const MAX_ORDERS: usize = 20;

/// Node expansions allowed per single-agent search.
const MAX_EXPANSIONS: usize = 2_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("{requested} agents do not fit on {free} free cells")]
    TooManyAgents { requested: usize, free: usize },
    #[error("no collision-free plan after {0} priority orders")]
    NoPlan(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapClass {
    /// 32x32 without obstacles.
    Empty,
    /// 32x32 with 10% random obstacles, restricted to the largest component.
    Random,
    /// Rows of 5x1 shelves separated by two-cell aisles.
    Warehouse,
}

impl MapClass {
    pub fn generate(self, seed: u64) -> GridMap {
        match self {
            MapClass::Empty => GridMap::empty(32, 32),
            MapClass::Random => random_map(32, 32, 0.1, seed),
            MapClass::Warehouse => warehouse_map(6, 8),
        }
    }
}

/// Cells reachable from `from`.
fn component(map: &GridMap, from: Cell) -> Vec<Cell> {
    let mut seen = vec![false; (map.width() * map.height()) as usize];
    let mut queue = VecDeque::from([from]);
    seen[map.index(from)] = true;
    let mut out = Vec::new();
    while let Some(c) = queue.pop_front() {
        out.push(c);
        for n in map.neighbors(c) {
            if !seen[map.index(n)] {
                seen[map.index(n)] = true;
                queue.push_back(n);
            }
        }
    }
    out
}

/// Random obstacles at `density`; free cells outside the largest connected
/// component are blocked as well.
pub fn random_map(width: u32, height: u32, density: f64, seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (width * height) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut blocked = vec![false; n];
    for &i in &idx[..(density * n as f64).round() as usize] {
        blocked[i] = true;
    }
    let mut map = GridMap::from_blocked(width, height, blocked);
    let mut best: Vec<Cell> = Vec::new();
    let mut seen = HashSet::new();
    for c in map.free_cells().collect::<Vec<_>>() {
        if seen.contains(&c) {
            continue;
        }
        let comp = component(&map, c);
        seen.extend(comp.iter().copied());
        if comp.len() > best.len() {
            best = comp;
        }
    }
    let keep: HashSet<Cell> = best.into_iter().collect();
    for c in map.free_cells().collect::<Vec<_>>() {
        if !keep.contains(&c) {
            map.set_blocked(c, true);
        }
    }
    map
}

/// `cols` x `rows` shelves of 5x1 cells with two-cell aisles and borders.
pub fn warehouse_map(cols: u32, rows: u32) -> GridMap {
    let width = 7 * cols + 2;
    let height = 3 * rows + 2;
    let mut map = GridMap::empty(width, height);
    for r in 0..rows {
        for c in 0..cols {
            for dx in 0..5 {
                map.set_blocked(Cell::new(2 + 7 * c + dx, 2 + 3 * r), true);
            }
        }
    }
    map
}

/// `n` tasks with distinct starts and distinct goals drawn from the free cells.
pub fn sample_tasks(map: &GridMap, n: usize, rng: &mut impl Rng) -> Result<Vec<AgentTask>, InstanceError> {
    let free: Vec<Cell> = map.free_cells().collect();
    if n > free.len() {
        return Err(InstanceError::TooManyAgents {
            requested: n,
            free: free.len(),
        });
    }
    let starts: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
    let goals: Vec<Cell> = free.choose_multiple(rng, n).copied().collect();
    Ok((0..n)
        .map(|i| AgentTask {
            agent_id: i,
            start: starts[i],
            goal: goals[i],
        })
        .collect())
}

/// Space-time occupancy of already planned agents.
#[derive(Default)]
struct Reservations {
    vertices: HashSet<(Cell, u32)>,
    /// Start cells of agents not planned yet, held at `t = 0`.
    starts: HashSet<Cell>,
    /// Time from which a cell is held by an agent parked at its goal.
    parked: HashMap<Cell, u32>,
    /// Latest reserved timestep per cell.
    last: HashMap<Cell, u32>,
    horizon: u32,
}

impl Reservations {
    fn occupied(&self, c: Cell, t: u32) -> bool {
        self.vertices.contains(&(c, t)) || (t == 0 && self.starts.contains(&c))
    }

    fn free(&self, c: Cell, t: u32) -> bool {
        !self.occupied(c, t) && self.parked.get(&c).map_or(true, |&p| t < p)
    }

    fn add(&mut self, path: &[Cell]) {
        for (t, &c) in path.iter().enumerate() {
            let t = t as u32;
            self.vertices.insert((c, t));
            let last = self.last.entry(c).or_insert(0);
            *last = (*last).max(t);
        }
        let end = path.len() as u32 - 1;
        self.parked.insert(path[end as usize], end);
        self.horizon = self.horizon.max(end);
    }
}

fn distances_to(map: &GridMap, goal: Cell) -> Vec<u32> {
    let mut dist = vec![u32::MAX; (map.width() * map.height()) as usize];
    dist[map.index(goal)] = 0;
    let mut queue = VecDeque::from([goal]);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for n in map.neighbors(c) {
            if dist[map.index(n)] == u32::MAX {
                dist[map.index(n)] = d + 1;
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest path in space-time avoiding `res`, ending at a goal the agent can
/// hold forever.
fn space_time_astar(map: &GridMap, task: AgentTask, res: &Reservations) -> Option<Vec<Cell>> {
    let h = distances_to(map, task.goal);
    let h0 = h[map.index(task.start)];
    if h0 == u32::MAX || !res.free(task.start, 0) {
        return None;
    }
    let goal_after = res.last.get(&task.goal).copied();
    let t_max = res.horizon + h0 + map.width() * map.height();
    let mut open = BinaryHeap::new();
    let mut parent: HashMap<(Cell, u32), Cell> = HashMap::new();
    let mut closed: HashSet<(Cell, u32)> = HashSet::new();
    open.push(Reverse((h0, 0u32, task.start)));
    let mut expansions = 0;
    while let Some(Reverse((_, t, c))) = open.pop() {
        if !closed.insert((c, t)) {
            continue;
        }
        if c == task.goal && goal_after.map_or(true, |g| t > g) {
            let mut path = vec![c];
            let (mut cur, mut ct) = (c, t);
            while ct > 0 {
                cur = parent[&(cur, ct)];
                ct -= 1;
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS || t >= t_max {
            if expansions > MAX_EXPANSIONS {
                return None;
            }
            continue;
        }
        for n in std::iter::once(c).chain(map.neighbors(c)) {
            let nt = t + 1;
            if closed.contains(&(n, nt)) || !res.free(n, nt) {
                continue;
            }
            // No entering a cell another agent occupied one step earlier, and
            // no leaving a cell another agent enters. Rules out rotations,
            // whose precedence graph would be cyclic.
            if n != c && (res.occupied(n, t) || res.occupied(c, nt)) {
                continue;
            }
            let hn = h[map.index(n)];
            if hn == u32::MAX {
                continue;
            }
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry((n, nt)) {
                e.insert(c);
                open.push(Reverse((nt + hn, nt, n)));
            }
        }
    }
    None
}

/// Plans agents one at a time in `order`, each avoiding the earlier ones.
pub fn plan_prioritized(map: &GridMap, tasks: &[AgentTask], order: &[usize]) -> Option<MapfPlan> {
    let mut res = Reservations {
        starts: tasks.iter().map(|t| t.start).collect(),
        ..Reservations::default()
    };
    let mut paths: Vec<Option<Vec<Cell>>> = vec![None; tasks.len()];
    for &i in order {
        res.starts.remove(&tasks[i].start);
        let path = space_time_astar(map, tasks[i], &res)?;
        res.add(&path);
        paths[i] = Some(path);
    }
    let plan = MapfPlan::new(
        paths
            .into_iter()
            .enumerate()
            .map(|(i, p)| TimedPath::from_cells(i, &p.expect("every agent planned")))
            .collect(),
    );
    debug_assert!(validate_plan(&plan).is_collision_free());
    Some(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub tasks: Vec<AgentTask>,
    pub plan: MapfPlan,
}

/// Samples tasks and plans them, reshuffling the priority order on failure.
pub fn generate_instance(map: &GridMap, n_agents: usize, seed: u64) -> Result<Instance, InstanceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = sample_tasks(map, n_agents, &mut rng)?;
    plan_tasks(map, tasks, &mut rng)
}

/// Plans given tasks, trying up to [`MAX_ORDERS`] priority orders.
pub fn plan_tasks(map: &GridMap, tasks: Vec<AgentTask>, rng: &mut impl Rng) -> Result<Instance, InstanceError> {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    for attempt in 0..MAX_ORDERS {
        order.shuffle(rng);
        if let Some(plan) = plan_prioritized(map, &tasks, &order) {
            return Ok(Instance { tasks, plan });
        }
        log::debug!("priority order {attempt} failed");
    }
    Err(InstanceError::NoPlan(MAX_ORDERS))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: u32, y: u32) -> Cell {
        Cell::new(x, y)
    }

    #[test]
    fn single_agent_takes_shortest_path() {
        let map = GridMap::empty(8, 8);
        let tasks = vec![AgentTask {
            agent_id: 0,
            start: c(0, 0),
            goal: c(5, 3),
        }];
        let plan = plan_prioritized(&map, &tasks, &[0]).unwrap();
        assert_eq!(plan.paths[0].end_time(), 8);
    }

    #[test]
    fn ten_agents_on_empty_map() {
        let map = MapClass::Empty.generate(0);
        let inst = generate_instance(&map, 10, 7).unwrap();
        assert!(validate_plan(&inst.plan).is_collision_free());
    }

    #[test]
    fn corridor_swap_uses_pocket() {
        // Corridor y=0 with one side pocket at (4,1).
        let mut map = GridMap::empty(7, 2);
        for x in [0, 1, 2, 3, 5, 6] {
            map.set_blocked(c(x, 1), true);
        }
        let tasks = vec![
            AgentTask {
                agent_id: 0,
                start: c(0, 0),
                goal: c(6, 0),
            },
            AgentTask {
                agent_id: 1,
                start: c(6, 0),
                goal: c(0, 0),
            },
        ];
        let plan = plan_prioritized(&map, &tasks, &[0, 1]).unwrap();
        assert!(validate_plan(&plan).is_collision_free());
        assert!(plan.paths[1].collapsed().contains(&c(4, 1)));
    }

    #[test]
    fn random_map_is_connected() {
        let map = MapClass::Random.generate(3);
        let free: Vec<Cell> = map.free_cells().collect();
        assert_eq!(component(&map, free[0]).len(), free.len());
        assert!(map.blocked_count() >= 102);
    }

    #[test]
    fn warehouse_hosts_hundred_agents() {
        let map = MapClass::Warehouse.generate(0);
        assert_eq!((map.width(), map.height()), (44, 26));
        let inst = generate_instance(&map, 100, 1).unwrap();
        assert!(validate_plan(&inst.plan).is_collision_free());
    }

    #[test]
    fn generation_is_deterministic() {
        let map = MapClass::Random.generate(1);
        assert_eq!(generate_instance(&map, 20, 5), generate_instance(&map, 20, 5));
    }
}
