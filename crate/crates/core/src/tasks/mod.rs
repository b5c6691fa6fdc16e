//! Per-family reward, score, observation, success and sampling logic.
//!
//! Everything here is a pure function of value inputs; the environment
//! wires these to a backend.

pub mod dclaw;
pub mod dkitty;

use std::f64::consts::{PI, TAU};

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

pub(crate) fn norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    norm(a.iter().zip(b).map(|(x, y)| x - y))
}

pub fn mean_abs_error(goal: &[f64], actual: &[f64]) -> f64 {
    debug_assert_eq!(goal.len(), actual.len());
    goal.iter().zip(actual).map(|(g, a)| (g - a).abs()).sum::<f64>() / goal.len() as f64
}

/// Uniform draw on the closed interval; a degenerate interval returns its
/// single point without consuming randomness.
pub(crate) fn uniform(rng: &mut impl rand::Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
