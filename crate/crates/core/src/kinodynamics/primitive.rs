//! Motion primitives: precomputed accelerate-cruise-decelerate segments
//! between discrete vertex speeds.

use serde::{Deserialize, Serialize};

use super::model::{ModelError, RobotModel};
use crate::grid::CELL_SIZE;

const KIN_TOL: f64 = 1e-9;

/// Piecewise constant-acceleration speed trace: accelerate from `v_entry` to
/// `v_peak`, cruise, decelerate to `v_exit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPhases {
    pub v_entry: f64,
    pub v_peak: f64,
    pub v_exit: f64,
    /// Positive acceleration used in the first phase.
    pub accel: f64,
    /// Positive magnitude of the deceleration in the last phase.
    pub decel: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
    pub t_decel: f64,
}

impl SpeedPhases {
    /// Trace covering `distance` with the given peak speed. Returns `None` if
    /// the acceleration and deceleration ramps do not fit.
    pub fn with_peak(
        v_entry: f64,
        v_exit: f64,
        v_peak: f64,
        distance: f64,
        accel: f64,
        decel: f64,
    ) -> Option<Self> {
        if v_peak + KIN_TOL < v_entry.max(v_exit) || v_peak <= 0.0 {
            return None;
        }
        let d_acc = (v_peak * v_peak - v_entry * v_entry) / (2.0 * accel);
        let d_dec = (v_peak * v_peak - v_exit * v_exit) / (2.0 * decel);
        let d_cruise = distance - d_acc - d_dec;
        if d_cruise < -KIN_TOL {
            return None;
        }
        Some(Self {
            v_entry,
            v_peak,
            v_exit,
            accel,
            decel,
            t_accel: ((v_peak - v_entry) / accel).max(0.0),
            t_cruise: (d_cruise.max(0.0)) / v_peak,
            t_decel: ((v_peak - v_exit) / decel).max(0.0),
        })
    }

    /// Fastest trace over `distance` between the two speeds under a speed cap.
    pub fn fastest(
        v_entry: f64,
        v_exit: f64,
        distance: f64,
        v_max: f64,
        accel: f64,
        decel: f64,
    ) -> Option<Self> {
        let inv = 1.0 / (2.0 * accel) + 1.0 / (2.0 * decel);
        let rhs = distance + v_entry * v_entry / (2.0 * accel) + v_exit * v_exit / (2.0 * decel);
        let peak = (rhs / inv).sqrt().min(v_max);
        Self::with_peak(v_entry, v_exit, peak, distance, accel, decel)
    }

    pub fn duration(&self) -> f64 {
        self.t_accel + self.t_cruise + self.t_decel
    }

    fn d_accel(&self) -> f64 {
        self.v_entry * self.t_accel + 0.5 * self.accel * self.t_accel * self.t_accel
    }

    fn d_cruise(&self) -> f64 {
        self.v_peak * self.t_cruise
    }

    pub fn distance(&self) -> f64 {
        self.d_accel()
            + self.d_cruise()
            + self.v_peak * self.t_decel
            - 0.5 * self.decel * self.t_decel * self.t_decel
    }

    /// Speed and acceleration at time `t` into the trace.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        if t < self.t_accel {
            (self.v_entry + self.accel * t, self.accel)
        } else if t < self.t_accel + self.t_cruise {
            (self.v_peak, 0.0)
        } else {
            let td = (t - self.t_accel - self.t_cruise).min(self.t_decel);
            (self.v_peak - self.decel * td, -self.decel)
        }
    }

    /// Time and speed at which the trace has covered `x` meters.
    pub fn crossing(&self, x: f64) -> (f64, f64) {
        let d_acc = self.d_accel();
        let d_cru = self.d_cruise();
        if x <= d_acc && self.t_accel > 0.0 {
            let v = (self.v_entry * self.v_entry + 2.0 * self.accel * x).sqrt();
            ((v - self.v_entry) / self.accel, v)
        } else if x <= d_acc + d_cru + KIN_TOL {
            (self.t_accel + (x - d_acc).max(0.0) / self.v_peak, self.v_peak)
        } else {
            let xd = x - d_acc - d_cru;
            let disc = (self.v_peak * self.v_peak - 2.0 * self.decel * xd).max(0.0);
            let v = disc.sqrt();
            (
                self.t_accel + self.t_cruise + (self.v_peak - v) / self.decel,
                v,
            )
        }
    }

    /// Analytic check of the speed and acceleration bounds of every phase.
    pub fn respects(&self, model: &RobotModel) -> bool {
        let speeds_ok = [self.v_entry, self.v_peak, self.v_exit]
            .iter()
            .all(|v| *v >= model.v_min - KIN_TOL && *v <= model.v_max + KIN_TOL);
        let accel_ok = (self.t_accel <= 0.0 || self.accel <= model.a_max + KIN_TOL)
            && (self.t_decel <= 0.0 || -self.decel >= model.a_min - KIN_TOL);
        let times_ok = self.t_accel >= 0.0 && self.t_cruise >= 0.0 && self.t_decel >= 0.0;
        speeds_ok && accel_ok && times_ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Move,
    /// Hold position at zero speed; the duration is chosen by the planner.
    Wait,
    /// Rotate in place by the given number of quarter turns.
    Turn { quarter_turns: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: PrimitiveKind,
    /// Index into the model's discrete speeds.
    pub entry_speed: usize,
    pub exit_speed: usize,
    pub cells: usize,
    pub duration: f64,
    /// Time at which each spanned cell boundary is reached; the last equals `duration`.
    pub crossing_offsets: Vec<f64>,
    /// Speed at each crossing.
    pub crossing_speeds: Vec<f64>,
    pub phases: Option<SpeedPhases>,
}

impl MotionPrimitive {
    fn movement(entry: usize, exit: usize, cells: usize, phases: SpeedPhases) -> Self {
        let mut crossing_offsets = Vec::with_capacity(cells);
        let mut crossing_speeds = Vec::with_capacity(cells);
        for j in 1..=cells {
            if j == cells {
                crossing_offsets.push(phases.duration());
                crossing_speeds.push(phases.v_exit);
            } else {
                let (t, v) = phases.crossing(j as f64 * CELL_SIZE);
                crossing_offsets.push(t);
                crossing_speeds.push(v);
            }
        }
        Self {
            kind: PrimitiveKind::Move,
            entry_speed: entry,
            exit_speed: exit,
            cells,
            duration: phases.duration(),
            crossing_offsets,
            crossing_speeds,
            phases: Some(phases),
        }
    }

    fn in_place(kind: PrimitiveKind, duration: f64) -> Self {
        Self {
            kind,
            entry_speed: 0,
            exit_speed: 0,
            cells: 0,
            duration,
            crossing_offsets: Vec::new(),
            crossing_speeds: Vec::new(),
            phases: None,
        }
    }
}

/// Complete primitive library for one robot model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    pub model: RobotModel,
    pub moves: Vec<MotionPrimitive>,
    /// Wait and turn primitives.
    pub in_place: Vec<MotionPrimitive>,
    by_entry: Vec<Vec<usize>>,
}

impl PrimitiveSet {
    pub fn speeds(&self) -> &[f64] {
        &self.model.discrete_speeds
    }

    pub fn speed(&self, idx: usize) -> f64 {
        self.model.discrete_speeds[idx]
    }

    /// Move primitives whose entry speed is `speed`.
    pub fn from_speed(&self, speed: usize) -> impl Iterator<Item = (usize, &MotionPrimitive)> {
        self.by_entry[speed].iter().map(|&i| (i, &self.moves[i]))
    }

    pub fn max_cells(&self) -> usize {
        self.moves.iter().map(|p| p.cells).max().unwrap_or(0)
    }
}

/// Builds the primitive library for `model`:
///
/// * for each ordered pair of distinct discrete speeds, one speed-change
///   primitive over the fewest whole cells that fit the ramp, padded with a
///   cruise at the higher of the two speeds;
/// * a one-cell cruise at every nonzero discrete speed;
/// * a one-cell stop-to-stop primitive at the fastest feasible peak;
/// * a wait primitive, and quarter/half turns for differential-drive robots.
pub fn build_primitives(model: &RobotModel) -> Result<PrimitiveSet, ModelError> {
    model.validate()?;
    let speeds = &model.discrete_speeds;
    let accel = model.a_max;
    let decel = -model.a_min;
    let mut moves = Vec::new();

    for (ui, &u) in speeds.iter().enumerate() {
        for (wi, &w) in speeds.iter().enumerate() {
            if ui == wi {
                continue;
            }
            let a = if w > u { accel } else { decel };
            let ramp = (w * w - u * u).abs() / (2.0 * a);
            let cells = ((ramp / CELL_SIZE) - 1e-9).ceil().max(1.0) as usize;
            let peak = u.max(w);
            if let Some(ph) =
                SpeedPhases::with_peak(u, w, peak, cells as f64 * CELL_SIZE, accel, decel)
            {
                moves.push(MotionPrimitive::movement(ui, wi, cells, ph));
            }
        }
    }
    for (vi, &v) in speeds.iter().enumerate().skip(1) {
        if let Some(ph) = SpeedPhases::with_peak(v, v, v, CELL_SIZE, accel, decel) {
            moves.push(MotionPrimitive::movement(vi, vi, 1, ph));
        }
    }
    if let Some(ph) = SpeedPhases::fastest(0.0, 0.0, CELL_SIZE, model.v_max, accel, decel) {
        moves.push(MotionPrimitive::movement(0, 0, 1, ph));
    }

    let mut by_entry = vec![Vec::new(); speeds.len()];
    for (i, p) in moves.iter().enumerate() {
        by_entry[p.entry_speed].push(i);
    }
    if by_entry[0].is_empty() {
        return Err(ModelError::NoPrimitives);
    }

    let mut in_place = vec![MotionPrimitive::in_place(PrimitiveKind::Wait, 0.0)];
    if model.is_differential() {
        in_place.push(MotionPrimitive::in_place(
            PrimitiveKind::Turn { quarter_turns: 1 },
            model.turn_time_90,
        ));
        in_place.push(MotionPrimitive::in_place(
            PrimitiveKind::Turn { quarter_turns: 2 },
            model.turn_time_180,
        ));
    }

    Ok(PrimitiveSet {
        model: model.clone(),
        moves,
        in_place,
        by_entry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn find(set: &PrimitiveSet, u: usize, w: usize) -> &MotionPrimitive {
        set.moves
            .iter()
            .find(|p| p.entry_speed == u && p.exit_speed == w)
            .unwrap()
    }

    #[test]
    fn cruise_at_top_speed() {
        let set = build_primitives(&RobotModel::omnidirectional()).unwrap();
        let p = find(&set, 2, 2);
        assert_eq!(p.cells, 1);
        assert!((p.duration - 0.5).abs() < 1e-12);
    }

    #[test]
    fn standstill_to_sqrt2_in_one_cell() {
        // v² = 2ad with a = 1 gives exactly 1 m, t = v / a.
        let set = build_primitives(&RobotModel::omnidirectional()).unwrap();
        let p = find(&set, 0, 1);
        assert_eq!(p.cells, 1);
        assert!((p.duration - SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn stop_to_stop_in_one_cell() {
        // Half a meter up at 1 m/s², half a meter down: peak 1 m/s, 2 s.
        let set = build_primitives(&RobotModel::omnidirectional()).unwrap();
        let p = find(&set, 0, 0);
        assert_eq!(p.cells, 1);
        assert!((p.duration - 2.0).abs() < 1e-12);
        assert!((p.phases.unwrap().v_peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standstill_to_top_speed_spans_two_cells() {
        let set = build_primitives(&RobotModel::omnidirectional()).unwrap();
        let p = find(&set, 0, 2);
        assert_eq!(p.cells, 2);
        assert!((p.duration - 2.0).abs() < 1e-12);
        assert!((p.crossing_offsets[0] - SQRT_2).abs() < 1e-12);
        assert!((p.crossing_speeds[0] - SQRT_2).abs() < 1e-12);
        let p = find(&set, 2, 0);
        assert_eq!(p.cells, 2);
        assert!((p.crossing_offsets[0] - (2.0 - SQRT_2)).abs() < 1e-12);
    }

    #[test]
    fn library_shape() {
        let set = build_primitives(&RobotModel::omnidirectional()).unwrap();
        // 6 speed changes, 2 cruises, 1 stop-to-stop.
        assert_eq!(set.moves.len(), 9);
        assert_eq!(set.in_place.len(), 1);
        let dd = build_primitives(&RobotModel::differential_drive()).unwrap();
        assert_eq!(dd.in_place.len(), 3);
    }

    #[test]
    fn every_primitive_is_kinematically_valid() {
        let model = RobotModel::omnidirectional();
        let set = build_primitives(&model).unwrap();
        for p in &set.moves {
            let ph = p.phases.unwrap();
            assert!(ph.respects(&model), "{p:?}");
            assert!((ph.distance() - p.cells as f64).abs() < 1e-9);
            assert!(p.crossing_offsets.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(*p.crossing_offsets.last().unwrap(), p.duration);
            assert!((ph.v_entry - set.speed(p.entry_speed)).abs() < 1e-12);
            assert!((ph.v_exit - set.speed(p.exit_speed)).abs() < 1e-12);
            // Sample the trace densely as well.
            for i in 0..=200 {
                let t = p.duration * i as f64 / 200.0;
                let (v, a) = ph.state_at(t);
                assert!(v >= -1e-9 && v <= model.v_max + 1e-9);
                assert!(a >= model.a_min - 1e-9 && a <= model.a_max + 1e-9);
            }
        }
    }
}
