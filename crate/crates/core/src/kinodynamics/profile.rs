use serde::{Deserialize, Serialize};

use crate::grid::Direction;

/// Gap used to realise open lower bounds `(t, ∞)` as closed `[t + δ, ∞)`.
pub const OPEN_BOUND_DELTA: f64 = 1e-6;

/// Slack for floating-point interval membership inside the planner.
pub const TIME_TOL: f64 = 1e-9;

/// Time window in which an agent may occupy a vertex: it must reach the
/// vertex no earlier than `lower` and reach the next vertex no later than
/// `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservedInterval {
    pub lower: f64,
    #[serde(with = "infinite_f64")]
    pub upper: f64,
}

impl Default for ReservedInterval {
    fn default() -> Self {
        Self::full()
    }
}

impl ReservedInterval {
    /// `[0, ∞)`
    pub const fn full() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn is_empty(&self) -> bool {
        self.lower > self.upper + TIME_TOL
    }

    /// Intersects with `[0, t]`.
    pub fn cap_upper(&mut self, t: f64) {
        self.upper = self.upper.min(t);
    }

    /// Intersects with `(t, ∞)`.
    pub fn raise_lower_open(&mut self, t: f64) {
        self.lower = self.lower.max(t + OPEN_BOUND_DELTA);
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lower - TIME_TOL && t <= self.upper + TIME_TOL
    }

    /// True if the two intervals share more than a single instant.
    pub fn overlaps(&self, other: &ReservedInterval) -> bool {
        self.lower.max(other.lower) < self.upper.min(other.upper)
    }
}

/// Serializes infinity as `null` so profiles round-trip through JSON.
pub(crate) mod infinite_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Where an agent is, how fast it goes and which way it faces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicState {
    /// Index into the model's discrete speeds.
    pub speed: usize,
    pub heading: Option<Direction>,
    pub time: f64,
}

impl KinematicState {
    pub fn at_rest(time: f64) -> Self {
        Self {
            speed: 0,
            heading: None,
            time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SegmentKind {
    Move {
        /// Index into the primitive set's moves.
        primitive: usize,
        entry_speed: f64,
        exit_speed: f64,
        cells: usize,
    },
    Wait,
    Turn { quarter_turns: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    /// Chain index (relative to the profile's first vertex) where the segment starts.
    pub vertex: usize,
    pub start: f64,
    pub duration: f64,
    pub kind: SegmentKind,
}

/// Continuous-time motion of one agent along a contiguous piece of its chain.
///
/// All per-vertex vectors are indexed relative to `first_vertex`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub agent: usize,
    /// Chain position of the profile's first vertex.
    pub first_vertex: usize,
    pub segments: Vec<ProfileSegment>,
    /// Reach time of every vertex.
    pub vertex_times: Vec<f64>,
    /// Time the agent starts moving away from each vertex (equal to the reach
    /// time when it passes through at speed; equal to the reach time for the
    /// final vertex).
    pub departure_times: Vec<f64>,
    /// In-place rotation performed at each vertex before departing.
    pub turn_times: Vec<f64>,
    /// Speed at each vertex.
    pub vertex_speeds: Vec<f64>,
    /// Discrete speed index where a primitive starts or ends; `None` for
    /// vertices crossed in the middle of a multi-cell primitive.
    pub boundary_speed: Vec<Option<usize>>,
    /// Heading when the vertex is reached.
    pub arrival_heading: Vec<Option<Direction>>,
}

impl SpeedProfile {
    /// Standing still at `vertex` from `time` on.
    pub fn stationary(agent: usize, vertex: usize, time: f64, heading: Option<Direction>) -> Self {
        Self {
            agent,
            first_vertex: vertex,
            segments: Vec::new(),
            vertex_times: vec![time],
            departure_times: vec![time],
            turn_times: vec![0.0],
            vertex_speeds: vec![0.0],
            boundary_speed: vec![Some(0)],
            arrival_heading: vec![heading],
        }
    }

    pub fn len(&self) -> usize {
        self.vertex_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_times.is_empty()
    }

    pub fn last_vertex(&self) -> usize {
        self.first_vertex + self.len() - 1
    }

    pub fn covers(&self, vertex: usize) -> bool {
        vertex >= self.first_vertex && vertex <= self.last_vertex()
    }

    /// Reach time of the chain vertex `vertex` (absolute chain index).
    pub fn reach_time(&self, vertex: usize) -> f64 {
        self.vertex_times[vertex - self.first_vertex]
    }

    pub fn start_time(&self) -> f64 {
        self.vertex_times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.vertex_times.last().expect("empty profile")
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    /// Kinematic state at `vertex` if it is a primitive boundary.
    pub fn state_at(&self, vertex: usize) -> Option<KinematicState> {
        let i = vertex - self.first_vertex;
        self.boundary_speed[i].map(|speed| KinematicState {
            speed,
            heading: self.arrival_heading[i],
            time: self.vertex_times[i],
        })
    }

    /// First chain vertex at or after `vertex` where a primitive starts or
    /// ends.
    pub fn boundary_at_or_after(&self, vertex: usize) -> Option<usize> {
        let start = vertex.max(self.first_vertex) - self.first_vertex;
        (start..self.len())
            .find(|&i| self.boundary_speed[i].is_some())
            .map(|i| i + self.first_vertex)
    }

    /// Keeps this profile up to `next.first_vertex` and continues with `next`.
    /// `next` must start at a boundary covered by this profile.
    pub fn splice(&self, next: &SpeedProfile) -> SpeedProfile {
        assert!(
            next.first_vertex >= self.first_vertex && next.first_vertex <= self.last_vertex(),
            "splice leaves a gap"
        );
        let cut = next.first_vertex - self.first_vertex;
        let mut segments: Vec<ProfileSegment> = self
            .segments
            .iter()
            .filter(|s| s.vertex < cut)
            .cloned()
            .collect();
        segments.extend(next.segments.iter().map(|s| ProfileSegment {
            vertex: s.vertex + cut,
            ..s.clone()
        }));
        let join = |a: &[f64], b: &[f64]| [&a[..cut], b].concat();
        // The join vertex keeps its planned reach time; `next` only decides
        // when the agent leaves it.
        let mut vertex_times = join(&self.vertex_times, &next.vertex_times);
        vertex_times[cut] = self.vertex_times[cut];
        SpeedProfile {
            agent: self.agent,
            first_vertex: self.first_vertex,
            segments,
            vertex_times,
            departure_times: join(&self.departure_times, &next.departure_times),
            turn_times: join(&self.turn_times, &next.turn_times),
            vertex_speeds: join(&self.vertex_speeds, &next.vertex_speeds),
            boundary_speed: [&self.boundary_speed[..cut], &next.boundary_speed[..]].concat(),
            arrival_heading: [&self.arrival_heading[..cut], &next.arrival_heading[..]].concat(),
        }
    }

    /// Re-anchors the planned times at an observed reach time: stops hold
    /// until their planned departure, moves keep their nominal duration.
    /// Returns estimated reach times for `anchor..=last_vertex()`.
    pub fn estimate_from(&self, anchor: usize, anchor_time: f64) -> Vec<f64> {
        let mut out = vec![anchor_time];
        let mut t = anchor_time;
        for k in anchor..self.last_vertex() {
            let i = k - self.first_vertex;
            let dep = if self.vertex_speeds[i] == 0.0 {
                (t + self.turn_times[i]).max(self.departure_times[i])
            } else {
                t
            };
            t = dep + (self.vertex_times[i + 1] - self.departure_times[i]);
            out.push(t);
        }
        out
    }

    /// True if no wait segment starts at a vertex passed at nonzero speed.
    pub fn waits_only_at_rest(&self) -> bool {
        self.segments.iter().all(|s| match s.kind {
            SegmentKind::Wait | SegmentKind::Turn { .. } => self.vertex_speeds[s.vertex] == 0.0,
            SegmentKind::Move { .. } => true,
        })
    }
}
