use serde::{Deserialize, Serialize};

use super::ExecutionTrace;

/// Planner effort over one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Planning rounds (windows for the windowed executor, replans for ADG).
    pub rounds: usize,
    pub planner_calls: usize,
    pub ktpg_iterations: usize,
    /// Wall-clock seconds per planning round.
    pub round_runtimes: Vec<f64>,
}

impl RunStats {
    pub fn total_runtime(&self) -> f64 {
        self.round_runtimes.iter().sum()
    }

    pub fn max_round_runtime(&self) -> f64 {
        self.round_runtimes.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean_round_runtime(&self) -> f64 {
        if self.round_runtimes.is_empty() {
            0.0
        } else {
            self.total_runtime() / self.round_runtimes.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub success: bool,
    /// Sum of goal reach times over agents that reached their goal.
    pub t_sum: f64,
    pub t_ideal: f64,
    /// `(t_sum - t_ideal) / t_ideal`; NaN unless successful.
    pub suboptimality: f64,
    pub makespan: f64,
}

pub fn compute_metrics(trace: &ExecutionTrace, t_ideal: f64) -> Metrics {
    let finishes: Vec<f64> = (0..trace.chains.len())
        .filter_map(|a| trace.finish_time(a))
        .collect();
    let success = finishes.len() == trace.chains.len();
    let t_sum: f64 = finishes.iter().sum();
    let suboptimality = if !success {
        f64::NAN
    } else if t_ideal > 0.0 {
        (t_sum - t_ideal) / t_ideal
    } else {
        0.0
    };
    Metrics {
        success,
        t_sum,
        t_ideal,
        suboptimality,
        makespan: finishes.iter().copied().fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn trace(finishes: &[f64]) -> ExecutionTrace {
        ExecutionTrace {
            chains: finishes
                .iter()
                .map(|_| vec![Cell::new(0, 0), Cell::new(1, 0)])
                .collect(),
            reach_times: finishes.iter().map(|f| vec![0.0, *f]).collect(),
            end_time: 0.0,
        }
    }

    #[test]
    fn ratios() {
        assert_eq!(compute_metrics(&trace(&[4.0]), 4.0).suboptimality, 0.0);
        assert_eq!(compute_metrics(&trace(&[6.0]), 4.0).suboptimality, 0.5);
        let m = compute_metrics(&trace(&[10.0, 20.0]), 24.0);
        assert_eq!(m.suboptimality, 0.25);
        assert_eq!(m.makespan, 20.0);
    }

    #[test]
    fn incomplete_trace_fails() {
        let mut t = trace(&[3.0, 5.0]);
        t.reach_times[1].pop();
        let m = compute_metrics(&t, 6.0);
        assert!(!m.success);
        assert!(m.suboptimality.is_nan());
        assert_eq!(m.t_sum, 3.0);
    }
}
