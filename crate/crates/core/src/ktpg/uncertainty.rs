//! Gaussian move-time uncertainty and the safety margins derived from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Cell, CELL_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum UncertaintyError {
    #[error("probability must lie in (0, 1), got {0}")]
    Probability(f64),
    #[error("safety threshold must lie in (0.5, 1), got {0}")]
    Threshold(f64),
    #[error("variance coefficient of agent {agent} is negative ({k})")]
    NegativeK { agent: usize, k: f64 },
}

/// Inverse CDF of the standard normal distribution (Wichura, AS 241,
/// PPND16; relative accuracy about 1e-16).
pub fn normal_quantile(p: f64) -> Result<f64, UncertaintyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(UncertaintyError::Probability(p));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((((2509.080_928_730_122_7 * r + 33430.575_583_588_13) * r
            + 67265.770_927_008_7)
            * r
            + 45921.953_931_549_87)
            * r
            + 13731.693_765_509_461)
            * r
            + 1971.590_950_306_551_4)
            * r
            + 133.141_667_891_784_38)
            * r)
            + 3.387_132_872_796_366_5)
            * q;
        let den = (((((((5226.495_278_852_546 * r + 28729.085_735_721_943) * r
            + 39307.895_800_092_71)
            * r
            + 21213.794_301_586_597)
            * r
            + 5394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r)
            + 1.0;
        return Ok(num / den);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = (((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r)
            + 1.423_437_110_749_683_5;
        let den = (((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r)
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = (((((((2.010_334_399_292_288e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r)
            + 6.657_904_643_501_103_5;
        let den = (((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_887_9)
            * r)
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Per-agent variance coefficients `K_i` (s²/m) and the probability
/// threshold `P_d` with which each passing order must hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    pub k: Vec<f64>,
    pub p_d: f64,
    z: f64,
}

impl UncertaintyModel {
    pub fn new(k: Vec<f64>, p_d: f64) -> Result<Self, UncertaintyError> {
        if !(p_d > 0.5 && p_d < 1.0) {
            return Err(UncertaintyError::Threshold(p_d));
        }
        if let Some((agent, &k)) = k.iter().enumerate().find(|(_, k)| !(**k >= 0.0)) {
            return Err(UncertaintyError::NegativeK { agent, k });
        }
        Ok(Self {
            k,
            p_d,
            z: normal_quantile(p_d)?,
        })
    }

    /// Every agent with standard deviation `eps` per meter, i.e. `K = eps²`.
    pub fn uniform(num_agents: usize, eps: f64, p_d: f64) -> Result<Self, UncertaintyError> {
        Self::new(vec![eps * eps; num_agents], p_d)
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Variance of the accumulated noise over `moves` unit moves of `agent`.
    pub fn variance(&self, agent: usize, moves: usize) -> f64 {
        self.k[agent] * moves as f64 * CELL_SIZE
    }

    /// Gap that keeps a passing order with probability `P_d` when the two
    /// reach times carry the given variances.
    pub fn margin(&self, var_source: f64, var_target: f64) -> f64 {
        let var = var_source + var_target;
        if var <= 0.0 {
            0.0
        } else {
            self.z * var.sqrt()
        }
    }
}

/// Mean and variance of reach times from an observed anchor onward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTimeBelief {
    pub anchor: usize,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl ReachTimeBelief {
    /// `(mean, variance)` at chain vertex `k`, if it is not before the anchor.
    pub fn at(&self, k: usize) -> Option<(f64, f64)> {
        let i = k.checked_sub(self.anchor)?;
        Some((*self.mean.get(i)?, self.variance[i]))
    }
}

/// Accumulates expected move times and per-move variances `K·d` along
/// `chain` starting from the observed reach time at `anchor`.
/// `move_times[j]` is the expected duration of the move `j -> j + 1`.
pub fn propagate_belief(
    chain: &[Cell],
    move_times: &[f64],
    k: f64,
    anchor: usize,
    anchor_time: f64,
) -> ReachTimeBelief {
    let mut mean = vec![anchor_time];
    let mut variance = vec![0.0];
    for j in anchor..chain.len().saturating_sub(1) {
        let d = chain[j].manhattan(chain[j + 1]) as f64 * CELL_SIZE;
        mean.push(mean[mean.len() - 1] + move_times[j]);
        variance.push(variance[variance.len() - 1] + k * d);
    }
    ReachTimeBelief {
        anchor,
        mean,
        variance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_symmetry_and_domain() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        for p in [0.01, 0.2, 0.4, 1e-4] {
            let a = normal_quantile(p).unwrap();
            let b = normal_quantile(1.0 - p).unwrap();
            assert!((a + b).abs() < 1e-9, "{p}");
        }
        // Deep tail.
        assert!((normal_quantile(1e-10).unwrap() + 6.361_340_902_404_056).abs() < 1e-9);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn margin_example() {
        let u = UncertaintyModel::uniform(2, 0.1, 0.99).unwrap();
        let m = u.margin(0.02, 0.02);
        assert!((m - 2.326_347_874 * 0.2).abs() < 1e-8);
        assert!((m - 0.4653).abs() < 1e-4);
        let zero = UncertaintyModel::uniform(2, 0.0, 0.99).unwrap();
        assert_eq!(zero.margin(zero.variance(0, 5), zero.variance(1, 9)), 0.0);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(UncertaintyModel::uniform(1, 0.1, 0.4).is_err());
        assert!(UncertaintyModel::new(vec![-1.0], 0.9).is_err());
    }

    #[test]
    fn belief_accumulates_from_anchor() {
        let chain: Vec<Cell> = (0..6).map(|x| Cell::new(x, 0)).collect();
        let times = [0.5; 5];
        let b = propagate_belief(&chain, &times, 0.0009, 2, 7.0);
        assert_eq!(b.at(2), Some((7.0, 0.0)));
        assert_eq!(b.at(1), None);
        let (mu, var) = b.at(5).unwrap();
        assert!((mu - 8.5).abs() < 1e-12);
        assert!((var - 0.0027).abs() < 1e-15);
        let flat = propagate_belief(&chain, &times, 0.0, 0, 0.0);
        assert!(flat.variance.iter().all(|v| *v == 0.0));
        assert!(flat.mean.windows(2).all(|w| w[0] < w[1]));
    }
}
