//! Geometric rounding of distances.
//!
//! Levels are `D_-2 = -1`, `D_-1 = 0` and `D_l = tau^(l + b)` for `l >= 0`; a
//! distance `c` rounds up to the smallest level that covers it. The result is
//! generally not a metric.

use alloc::vec::Vec;

use crate::instance::MetricSpace;
use crate::math;

/// Relative slack when comparing a level against a distance, so that a
/// distance sitting exactly on a level is not pushed one level up by rounding
/// noise in `tau^(l + b)`.
pub const LEVEL_TOL: f64 = 1e-12;

/// Fractional parts this close to 1 are read as 0.
const FRAC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizedMetric {
    pub tau: f64,
    pub b: f64,
}

impl DiscretizedMetric {
    pub fn new(tau: f64, b: f64) -> Self {
        Self { tau, b }
    }

    /// Level value `D_l`.
    pub fn d(&self, level: i32) -> f64 {
        match level {
            l if l <= -2 => -1.0,
            -1 => 0.0,
            l => math::powf(self.tau, l as f64 + self.b),
        }
    }

    /// Smallest `l` with `D_l >= c`; -1 for `c = 0`.
    pub fn level_of(&self, c: f64) -> i32 {
        if c <= 0.0 {
            return -1;
        }
        let covers = |l: i32| self.d(l) >= c * (1.0 - LEVEL_TOL);
        let guess = math::ceil(math::ln(c) / math::ln(self.tau) - self.b).max(0.0) as i32;
        let mut l = guess;
        while !covers(l) {
            l += 1;
        }
        while l > 0 && covers(l - 1) {
            l -= 1;
        }
        l
    }

    /// `c-hat`: `c` rounded up to its level.
    pub fn round(&self, c: f64) -> f64 {
        self.d(self.level_of(c))
    }
}

/// A metric with every distance rounded up to its level.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedTable {
    pub levels: DiscretizedMetric,
    n: usize,
    level: Vec<i32>,
    chat: Vec<f64>,
}

impl DiscretizedTable {
    pub fn chat(&self, p: usize, q: usize) -> f64 {
        self.chat[p * self.n + q]
    }

    pub fn level(&self, p: usize, q: usize) -> i32 {
        self.level[p * self.n + q]
    }
}

/// Rounds a normalized metric with base `tau > 1` and offset `b` in `[0, 1)`.
pub fn discretize(metric: &MetricSpace, tau: f64, b: f64) -> DiscretizedTable {
    let levels = DiscretizedMetric::new(tau, b);
    let n = metric.len();
    let mut level = Vec::with_capacity(n * n);
    let mut chat = Vec::with_capacity(n * n);
    for row in metric.rows() {
        for &c in row {
            let l = levels.level_of(c);
            level.push(l);
            chat.push(levels.d(l));
        }
    }
    DiscretizedTable { levels, n, level, chat }
}

/// One support pair of a fractional solution: distance, discount, and mass
/// (opening times client weight).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairInput {
    pub c: f64,
    pub r: f64,
    pub mass: f64,
}

/// `sum mass * (c-hat - tau r)^+` at offset `b`.
pub fn auxiliary_objective(pairs: &[PairInput], tau: f64, b: f64) -> f64 {
    let disc = DiscretizedMetric::new(tau, b);
    pairs.iter().map(|p| p.mass * math::pos(disc.round(p.c) - tau * p.r)).sum()
}

/// `frac(log_tau c)` with values within [`FRAC_TOL`] of 1 mapped to 0.
pub fn breakpoint(c: f64, tau: f64) -> f64 {
    let v = math::ln(c) / math::ln(tau);
    let f = v - math::floor(v);
    if f >= 1.0 - FRAC_TOL || f < 0.0 {
        0.0
    } else {
        f
    }
}

/// Offset minimizing the auxiliary objective, found by evaluating every
/// breakpoint (each pair's term is nondecreasing and right-continuous between
/// consecutive breakpoints). Ties go to the smallest offset.
pub fn choose_offset(pairs: &[PairInput], tau: f64) -> (f64, f64) {
    let mut cands: Vec<f64> = pairs.iter().filter(|p| p.c > 0.0).map(|p| breakpoint(p.c, tau)).collect();
    cands.push(0.0);
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best = (0.0, f64::INFINITY);
    for b in cands {
        let v = auxiliary_objective(pairs, tau, b);
        if v < best.1 {
            best = (b, v);
        }
    }
    best
}

/// `(tau - 1) / ln tau`, the expected stretch of the rounding under a uniform offset.
pub fn stretch(tau: f64) -> f64 {
    (tau - 1.0) / math::ln(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_is_level_minus_one() {
        let d = DiscretizedMetric::new(2.0, 0.3);
        assert_eq!(d.level_of(0.0), -1);
        assert_eq!(d.round(0.0), 0.0);
        assert_eq!(d.d(-2), -1.0);
    }

    #[test]
    fn exact_boundary() {
        let d = DiscretizedMetric::new(2.0, 0.0);
        assert_eq!(d.level_of(1.0), 0);
        assert_eq!(d.round(1.0), 1.0);
    }

    #[test]
    fn half_offset() {
        let d = DiscretizedMetric::new(2.0, 0.5);
        assert_eq!(d.level_of(3.0), 2);
        assert!((d.round(3.0) - 5.656854249492381).abs() < 1e-12);
    }

    #[test]
    fn powers_of_tau_keep_offset_zero() {
        let pairs: Vec<PairInput> =
            [1.0, 3.0, 9.0].iter().map(|&c| PairInput { c, r: 0.0, mass: 0.5 }).collect();
        let (b, v) = choose_offset(&pairs, 3.0);
        assert_eq!(b, 0.0);
        assert!((v - 6.5).abs() < 1e-9);
    }

    #[test]
    fn empty_support() {
        assert_eq!(choose_offset(&[], 2.0), (0.0, 0.0));
    }

    #[test]
    fn table_matches_pointwise() {
        let m = MetricSpace::euclidean(&[(0.0, 0.0), (3.0, 4.0), (6.0, 0.0)]);
        let t = discretize(&m, 1.5, 0.25);
        assert_eq!(t.chat(0, 1), t.levels.round(5.0));
        assert_eq!(t.level(1, 1), -1);
    }
}
