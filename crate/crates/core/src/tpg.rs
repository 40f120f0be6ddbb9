//! Temporal plan graph: per-agent location chains plus cross-agent passing
//! order at shared locations.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Cell;
use crate::plan::{validate_plan, MapfPlan, PlanCollision};

#[derive(Debug, Error, PartialEq)]
pub enum TpgError {
    #[error("plan has {} collision(s), first: {first:?}", .count)]
    Collisions { count: usize, first: PlanCollision },
    #[error("unknown vertex a{agent}:{seq}")]
    UnknownVertex { agent: usize, seq: usize },
    #[error("edge {from:?} -> {to:?} does not join two agents at a shared location")]
    InvalidEdge { from: VertexId, to: VertexId },
    #[error("consecutive chain vertices of agent {agent} share location {cell}")]
    RepeatedLocation { agent: usize, cell: Cell },
    #[error("graph contains a cycle")]
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub agent: usize,
    pub seq: usize,
}

impl VertexId {
    pub fn new(agent: usize, seq: usize) -> Self {
        Self { agent, seq }
    }
}

/// `to` may only be reached after `from` has been reached, i.e. after the
/// agent of `from` has left `location`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Type2Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub location: Cell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tpg {
    chains: Vec<Vec<Cell>>,
    type2: Vec<Type2Edge>,
    offsets: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl Tpg {
    /// Builds a graph from explicit chains and Type-2 edges. Cycles are
    /// allowed here; see [`Tpg::is_acyclic`].
    pub fn from_parts(chains: Vec<Vec<Cell>>, mut type2: Vec<Type2Edge>) -> Result<Self, TpgError> {
        for (agent, chain) in chains.iter().enumerate() {
            for w in chain.windows(2) {
                if w[0] == w[1] {
                    return Err(TpgError::RepeatedLocation { agent, cell: w[0] });
                }
            }
        }
        let mut offsets = Vec::with_capacity(chains.len() + 1);
        let mut total = 0;
        for c in &chains {
            offsets.push(total);
            total += c.len();
        }
        offsets.push(total);
        let loc = |v: VertexId| chains.get(v.agent).and_then(|c| c.get(v.seq)).copied();
        for e in &type2 {
            for v in [e.from, e.to] {
                if loc(v).is_none() {
                    return Err(TpgError::UnknownVertex {
                        agent: v.agent,
                        seq: v.seq,
                    });
                }
            }
            let shared = e.from.seq > 0 && loc(VertexId::new(e.from.agent, e.from.seq - 1)) == Some(e.location);
            if e.from.agent == e.to.agent || !shared || loc(e.to) != Some(e.location) {
                return Err(TpgError::InvalidEdge {
                    from: e.from,
                    to: e.to,
                });
            }
        }
        type2.sort_by_key(|e| (e.from, e.to));
        type2.dedup();
        let mut incoming = vec![Vec::new(); total];
        let mut outgoing = vec![Vec::new(); total];
        for (i, e) in type2.iter().enumerate() {
            outgoing[offsets[e.from.agent] + e.from.seq].push(i);
            incoming[offsets[e.to.agent] + e.to.seq].push(i);
        }
        for list in incoming.iter_mut() {
            list.sort_by_key(|&i| type2[i].from);
        }
        for list in outgoing.iter_mut() {
            list.sort_by_key(|&i| type2[i].to);
        }
        Ok(Self {
            chains,
            type2,
            offsets,
            incoming,
            outgoing,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.chains.len()
    }

    pub fn num_vertices(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn chain(&self, agent: usize) -> &[Cell] {
        &self.chains[agent]
    }

    pub fn chains(&self) -> &[Vec<Cell>] {
        &self.chains
    }

    pub fn chain_len(&self, agent: usize) -> usize {
        self.chains[agent].len()
    }

    pub fn location(&self, v: VertexId) -> Cell {
        self.chains[v.agent][v.seq]
    }

    pub fn type2_edges(&self) -> &[Type2Edge] {
        &self.type2
    }

    pub fn edge(&self, i: usize) -> &Type2Edge {
        &self.type2[i]
    }

    pub fn contains(&self, v: VertexId) -> bool {
        v.agent < self.chains.len() && v.seq < self.chains[v.agent].len()
    }

    /// Dense index of a vertex in `0..num_vertices()`.
    pub fn index(&self, v: VertexId) -> usize {
        self.offsets[v.agent] + v.seq
    }

    fn checked_index(&self, v: VertexId) -> Result<usize, TpgError> {
        if self.contains(v) {
            Ok(self.index(v))
        } else {
            Err(TpgError::UnknownVertex {
                agent: v.agent,
                seq: v.seq,
            })
        }
    }

    /// Indices of Type-2 edges entering `v`, ordered by source vertex.
    pub fn incoming_ids(&self, v: VertexId) -> &[usize] {
        &self.incoming[self.index(v)]
    }

    /// Indices of Type-2 edges leaving `v`, ordered by target vertex.
    pub fn outgoing_ids(&self, v: VertexId) -> &[usize] {
        &self.outgoing[self.index(v)]
    }

    pub fn incoming_type2(&self, v: VertexId) -> Result<Vec<Type2Edge>, TpgError> {
        let i = self.checked_index(v)?;
        Ok(self.incoming[i].iter().map(|&e| self.type2[e]).collect())
    }

    pub fn outgoing_type2(&self, v: VertexId) -> Result<Vec<Type2Edge>, TpgError> {
        let i = self.checked_index(v)?;
        Ok(self.outgoing[i].iter().map(|&e| self.type2[e]).collect())
    }

    /// Kahn's algorithm over Type-1 and Type-2 edges.
    pub fn topological_order(&self) -> Option<Vec<VertexId>> {
        let n = self.num_vertices();
        let mut indeg = vec![0usize; n];
        for (agent, chain) in self.chains.iter().enumerate() {
            for seq in 1..chain.len() {
                indeg[self.offsets[agent] + seq] += 1;
            }
        }
        for e in &self.type2 {
            indeg[self.index(e.to)] += 1;
        }
        let mut stack: Vec<VertexId> = Vec::new();
        for (agent, chain) in self.chains.iter().enumerate().rev() {
            if !chain.is_empty() && indeg[self.offsets[agent]] == 0 {
                stack.push(VertexId::new(agent, 0));
            }
        }
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            let mut release = |u: VertexId, stack: &mut Vec<VertexId>| {
                let i = self.index(u);
                indeg[i] -= 1;
                if indeg[i] == 0 {
                    stack.push(u);
                }
            };
            if v.seq + 1 < self.chains[v.agent].len() {
                release(VertexId::new(v.agent, v.seq + 1), &mut stack);
            }
            for &e in self.outgoing_ids(v) {
                release(self.type2[e].to, &mut stack);
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Graphviz dump; vertices are labelled `a{agent}:{seq}@({x},{y})`.
    pub fn to_dot(&self) -> String {
        let label = |v: VertexId| {
            let c = self.location(v);
            format!("\"a{}:{}@({},{})\"", v.agent, v.seq, c.x, c.y)
        };
        let mut out = String::from("digraph tpg {\n  rankdir=LR;\n");
        for (agent, chain) in self.chains.iter().enumerate() {
            for seq in 0..chain.len() {
                let _ = writeln!(out, "  {};", label(VertexId::new(agent, seq)));
            }
            for seq in 1..chain.len() {
                let _ = writeln!(
                    out,
                    "  {} -> {};",
                    label(VertexId::new(agent, seq - 1)),
                    label(VertexId::new(agent, seq))
                );
            }
        }
        for e in &self.type2 {
            let _ = writeln!(out, "  {} -> {} [color=red];", label(e.from), label(e.to));
        }
        out.push_str("}\n");
        out
    }
}

/// Returns `true` iff the graph admits a topological order.
pub fn assert_acyclic(tpg: &Tpg) -> bool {
    tpg.is_acyclic()
}

/// Builds the graph of a collision-free plan. Repeated cells are collapsed;
/// every pair of visits to the same location by different agents yields one
/// Type-2 edge oriented by visit time.
pub fn build_tpg(plan: &MapfPlan) -> Result<Tpg, TpgError> {
    let report = validate_plan(plan);
    if let Some(first) = report.collisions.first() {
        return Err(TpgError::Collisions {
            count: report.collisions.len(),
            first: first.clone(),
        });
    }
    let mut chains = Vec::with_capacity(plan.num_agents());
    // location -> (first timestep, agent, seq)
    let mut visits: HashMap<Cell, Vec<(u32, usize, usize)>> = HashMap::new();
    for (agent, path) in plan.paths.iter().enumerate() {
        let mut chain: Vec<Cell> = Vec::new();
        for &(cell, t) in &path.steps {
            if chain.last() != Some(&cell) {
                visits.entry(cell).or_default().push((t, agent, chain.len()));
                chain.push(cell);
            }
        }
        chains.push(chain);
    }
    let mut type2 = Vec::new();
    for (cell, mut list) in visits {
        list.sort_unstable();
        for (i, &(_, a_early, s_early)) in list.iter().enumerate() {
            for &(_, a_late, s_late) in &list[i + 1..] {
                if a_early == a_late {
                    continue;
                }
                // A collision-free plan never revisits another agent's goal.
                debug_assert!(s_early + 1 < chains[a_early].len());
                type2.push(Type2Edge {
                    from: VertexId::new(a_early, s_early + 1),
                    to: VertexId::new(a_late, s_late),
                    location: cell,
                });
            }
        }
    }
    Tpg::from_parts(chains, type2)
}
