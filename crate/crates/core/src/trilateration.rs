//! 2-D trilateration: minimizes `Σ (d̃ᵢ − ‖x − aᵢ‖)²` over the planar
//! position with Levenberg-damped Gauss-Newton, started from the closed-form
//! linearized multilateration solution.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AnchorId, AnchorSet, DistanceEstimate, Point2, PositionFix};
use crate::geometry;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum TrilaterationError {
    #[error("{valid} anchors with valid distances, need at least 3")]
    InsufficientAnchors { valid: usize },
    #[error("anchors are collinear")]
    DegenerateGeometry,
    #[error("position coincides with anchor {0}")]
    SingularPoint(AnchorId),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Meters.
    pub step_tolerance: f64,
    /// Square meters.
    pub cost_tolerance: f64,
    pub damping_initial: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { max_iterations: 50, step_tolerance: 1e-6, cost_tolerance: 1e-12, damping_initial: 1e-3 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), TrilaterationError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0 {
            return Err(TrilaterationError::InvalidConfig("max_iterations must be positive"));
        }
        if !positive(self.step_tolerance) || !positive(self.cost_tolerance) || !positive(self.damping_initial) {
            return Err(TrilaterationError::InvalidConfig("tolerances and damping must be positive"));
        }
        Ok(())
    }
}

/// Planar anchor positions paired with their measured distances.
fn valid_ranges(distances: &DistanceEstimate, anchor_set: &AnchorSet) -> Vec<(AnchorId, Point2, f64)> {
    anchor_set
        .iter()
        .filter_map(|a| distances.get(a.id).map(|d| (a.id, a.planar(), d)))
        .collect()
}

/// Sum of squared range residuals at `position`, m².
pub fn objective(position: &Point2, distances: &DistanceEstimate, anchor_set: &AnchorSet) -> f64 {
    cost(position, &valid_ranges(distances, anchor_set))
}

fn cost(position: &Point2, ranges: &[(AnchorId, Point2, f64)]) -> f64 {
    ranges
        .iter()
        .map(|(_, a, d)| (d - (position - a).norm()).powi(2))
        .sum()
}

/// Rows are the unit vectors from each anchor towards `position`.
pub fn jacobian(position: &Point2, anchor_set: &AnchorSet) -> Result<DMatrix<f64>, TrilaterationError> {
    let mut j = DMatrix::zeros(anchor_set.len(), 2);
    for (i, anchor) in anchor_set.iter().enumerate() {
        let diff = position - anchor.planar();
        let norm = diff.norm();
        if norm == 0.0 {
            return Err(TrilaterationError::SingularPoint(anchor.id));
        }
        j[(i, 0)] = diff.x / norm;
        j[(i, 1)] = diff.y / norm;
    }
    Ok(j)
}

/// Closed-form initial guess: subtract the first range equation from the
/// others and solve the resulting linear system in the least-squares sense.
/// Falls back to the anchor centroid when that system is ill conditioned.
pub fn linear_initial_guess(ranges: &[(Point2, f64)]) -> Point2 {
    let anchors: Vec<Point2> = ranges.iter().map(|(a, _)| *a).collect();
    let centroid = geometry::centroid(&anchors);
    let (a0, d0) = ranges[0];
    let rows = ranges.len() - 1;
    let mut m = DMatrix::zeros(rows, 2);
    let mut b = DVector::zeros(rows);
    for (k, (ai, di)) in ranges[1..].iter().enumerate() {
        let diff = 2.0 * (ai - a0);
        m[(k, 0)] = diff.x;
        m[(k, 1)] = diff.y;
        b[k] = d0 * d0 - di * di + ai.norm_squared() - a0.norm_squared();
    }
    let svd = m.svd(true, true);
    let (max, min) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(min > 0.0 && max / min < 1e8) {
        return centroid;
    }
    match svd.solve(&b, 1e-12) {
        Ok(x) if x.iter().all(|v| v.is_finite()) => Point2::new(x[0], x[1]),
        _ => centroid,
    }
}

/// Output of [`solve_traced`]: the fix plus the objective value of every
/// accepted iterate, starting with the initial guess.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub fix: PositionFix,
    pub accepted_costs: Vec<f64>,
    pub initial: Point2,
}

pub fn solve(
    distances: &DistanceEstimate,
    anchor_set: &AnchorSet,
    config: &SolverConfig,
    initial: Option<Point2>,
) -> Result<PositionFix, TrilaterationError> {
    solve_traced(distances, anchor_set, config, initial).map(|trace| trace.fix)
}

pub fn solve_traced(
    distances: &DistanceEstimate,
    anchor_set: &AnchorSet,
    config: &SolverConfig,
    initial: Option<Point2>,
) -> Result<SolveTrace, TrilaterationError> {
    config.validate()?;
    let ranges = valid_ranges(distances, anchor_set);
    if ranges.len() < 3 {
        return Err(TrilaterationError::InsufficientAnchors { valid: ranges.len() });
    }
    let planar: Vec<Point2> = ranges.iter().map(|(_, a, _)| *a).collect();
    let span = planar
        .iter()
        .flat_map(|a| planar.iter().map(move |b| (a - b).norm()))
        .fold(0.0, f64::max);
    if geometry::collinear(&planar, 1e-9 * span.max(1.0)) {
        return Err(TrilaterationError::DegenerateGeometry);
    }

    let start = initial.unwrap_or_else(|| {
        linear_initial_guess(&ranges.iter().map(|(_, a, d)| (*a, *d)).collect::<Vec<_>>())
    });
    let mut x = start;
    let mut current = cost(&x, &ranges);
    let mut accepted_costs = vec![current];
    let mut lambda = config.damping_initial;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut jtj = Matrix2::zeros();
        let mut jtr = Point2::zeros();
        for (_, a, d) in &ranges {
            let diff = x - a;
            let norm = diff.norm();
            // exactly on an anchor the gradient of that term is undefined;
            // leave it out of this step
            if norm == 0.0 {
                continue;
            }
            let row = diff / norm;
            jtj += row * row.transpose();
            jtr += row * (norm - d);
        }
        let damped = jtj + Matrix2::from_diagonal(&jtj.diagonal()) * lambda + Matrix2::identity() * (lambda * 1e-9);
        let Some(step) = damped.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let step_norm = step.norm();
        let candidate = x + step;
        let candidate_cost = cost(&candidate, &ranges);

        if candidate_cost <= current {
            let decrease = current - candidate_cost;
            x = candidate;
            current = candidate_cost;
            accepted_costs.push(current);
            lambda = (lambda / 10.0).max(1e-15);
            if step_norm < config.step_tolerance || decrease < config.cost_tolerance {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if step_norm < config.step_tolerance {
                // the damped step no longer moves the point: stationary
                converged = true;
                break;
            }
        }
    }

    Ok(SolveTrace {
        fix: PositionFix {
            x: x.x,
            y: x.y,
            timestamp: 0.0,
            iterations,
            final_cost: current,
            converged,
        },
        accepted_costs,
        initial: start,
    })
}
