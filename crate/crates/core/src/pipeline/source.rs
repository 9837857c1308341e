//! Where the simulated visitor is at a given time.

use std::sync::Mutex;

use thiserror::Error;

use crate::domain::Point2;

/// Default walking-speed cap for steered visitors, m/s.
pub const WALKING_SPEED: f64 = 1.2;

pub trait PositionSource: Send + Sync {
    /// True receiver position at pipeline time `t` (seconds).
    fn position_at(&self, t: f64) -> Point2;
}

impl<F> PositionSource for F
where
    F: Fn(f64) -> Point2 + Send + Sync,
{
    fn position_at(&self, t: f64) -> Point2 {
        self(t)
    }
}

/// A visitor standing still.
#[derive(Debug, Clone, Copy)]
pub struct Stationary(pub Point2);

impl PositionSource for Stationary {
    fn position_at(&self, _t: f64) -> Point2 {
        self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trajectory has no rows")]
    Empty,
    #[error("line {0}: timestamps must be strictly increasing")]
    NonMonotone(usize),
}

/// Piecewise-linear trajectory through `(t, x, y)` waypoints. Before the
/// first and after the last waypoint the position is held.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, Point2)>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Point2)>) -> Result<Self, TrajectoryError> {
        if waypoints.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if let Some(i) = waypoints.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(TrajectoryError::NonMonotone(i + 2));
        }
        Ok(Trajectory { waypoints })
    }

    /// Parses rows `t_seconds x_m y_m`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TrajectoryError> {
        let mut waypoints = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| TrajectoryError::Parse { line: i + 1, reason };
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<_>>()
                .ok_or_else(|| parse_err(format!("bad number in `{line}`")))?;
            let [t, x, y] = fields[..] else {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            };
            if let Some(&(prev, _)) = waypoints.last() {
                if t <= prev {
                    return Err(TrajectoryError::NonMonotone(i + 1));
                }
            }
            waypoints.push((t, Point2::new(x, y)));
        }
        Self::new(waypoints)
    }

    pub fn waypoints(&self) -> &[(f64, Point2)] {
        &self.waypoints
    }

    /// Time of the last waypoint.
    pub fn end_time(&self) -> f64 {
        self.waypoints.last().map(|w| w.0).unwrap_or(0.0)
    }
}

impl PositionSource for Trajectory {
    fn position_at(&self, t: f64) -> Point2 {
        let idx = self.waypoints.partition_point(|w| w.0 <= t);
        if idx == 0 {
            return self.waypoints[0].1;
        }
        if idx == self.waypoints.len() {
            return self.waypoints[idx - 1].1;
        }
        let (t0, p0) = self.waypoints[idx - 1];
        let (t1, p1) = self.waypoints[idx];
        p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Steering {
    /// Walk towards a point.
    Target(Point2),
    /// Walk with a constant velocity, m/s.
    Velocity(Point2),
}

#[derive(Debug)]
struct VisitorState {
    position: Point2,
    steering: Steering,
    last_t: Option<f64>,
}

/// Visitor driven by live steering input. Moves towards the latest target
/// (or along the latest velocity) no faster than `max_speed`, and never
/// leaves `bounds`.
#[derive(Debug)]
pub struct SteeredVisitor {
    state: Mutex<VisitorState>,
    max_speed: f64,
    bounds: (Point2, Point2),
}

impl SteeredVisitor {
    pub fn new(start: Point2, bounds: (Point2, Point2)) -> Self {
        let start = clamp(start, &bounds);
        SteeredVisitor {
            state: Mutex::new(VisitorState { position: start, steering: Steering::Target(start), last_t: None }),
            max_speed: WALKING_SPEED,
            bounds,
        }
    }

    pub fn with_max_speed(mut self, speed: f64) -> Self {
        self.max_speed = speed;
        self
    }

    pub fn steer(&self, steering: Steering) {
        let steering = match steering {
            Steering::Target(p) => Steering::Target(clamp(p, &self.bounds)),
            Steering::Velocity(v) => {
                let speed = v.norm();
                Steering::Velocity(if speed > self.max_speed { v * (self.max_speed / speed) } else { v })
            }
        };
        self.state.lock().expect("visitor lock").steering = steering;
    }

    pub fn current(&self) -> Point2 {
        self.state.lock().expect("visitor lock").position
    }

    pub fn bounds(&self) -> (Point2, Point2) {
        self.bounds
    }
}

impl PositionSource for SteeredVisitor {
    fn position_at(&self, t: f64) -> Point2 {
        let mut state = self.state.lock().expect("visitor lock");
        let dt = state.last_t.map_or(0.0, |last| (t - last).max(0.0));
        state.last_t = Some(t.max(state.last_t.unwrap_or(t)));
        let next = match state.steering {
            Steering::Target(target) => {
                let to_go = target - state.position;
                let reach = self.max_speed * dt;
                if to_go.norm() <= reach {
                    target
                } else {
                    state.position + to_go * (reach / to_go.norm())
                }
            }
            Steering::Velocity(v) => state.position + v * dt,
        };
        state.position = clamp(next, &self.bounds);
        state.position
    }
}

fn clamp(p: Point2, (lo, hi): &(Point2, Point2)) -> Point2 {
    Point2::new(p.x.clamp(lo.x, hi.x), p.y.clamp(lo.y, hi.y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_interpolates_and_holds() {
        let tr = Trajectory::parse("# t x y\n0 0 0\n2 2 4\n4 2 0\n").unwrap();
        assert_eq!(tr.position_at(-1.0), Point2::new(0.0, 0.0));
        assert_eq!(tr.position_at(1.0), Point2::new(1.0, 2.0));
        assert_eq!(tr.position_at(3.0), Point2::new(2.0, 2.0));
        assert_eq!(tr.position_at(9.0), Point2::new(2.0, 0.0));
        assert_eq!(tr.end_time(), 4.0);
    }

    #[test]
    fn trajectory_errors() {
        assert_eq!(Trajectory::parse("# nothing\n"), Err(TrajectoryError::Empty));
        assert_eq!(Trajectory::parse("0 0 0\n0 1 1\n"), Err(TrajectoryError::NonMonotone(2)));
        assert!(matches!(Trajectory::parse("0 0\n"), Err(TrajectoryError::Parse { line: 1, .. })));
        assert!(matches!(Trajectory::parse("0 a 0\n"), Err(TrajectoryError::Parse { .. })));
    }

    #[test]
    fn steered_visitor_walks_at_capped_speed() {
        let bounds = (Point2::new(0.0, 0.0), Point2::new(3.0, 5.0));
        let v = SteeredVisitor::new(Point2::new(0.0, 0.0), bounds);
        assert_eq!(v.position_at(0.0), Point2::new(0.0, 0.0));
        v.steer(Steering::Target(Point2::new(3.0, 0.0)));
        let p = v.position_at(1.0);
        assert!((p.x - WALKING_SPEED).abs() < 1e-12);
        assert_eq!(v.position_at(10.0), Point2::new(3.0, 0.0));

        v.steer(Steering::Target(Point2::new(10.0, 10.0)));
        assert_eq!(v.position_at(100.0), Point2::new(3.0, 5.0));

        v.steer(Steering::Velocity(Point2::new(-5.0, 0.0)));
        let p = v.position_at(101.0);
        assert!((p.x - (3.0 - WALKING_SPEED)).abs() < 1e-12);
        assert_eq!(v.position_at(200.0).x, 0.0);
    }

    #[test]
    fn stationary_without_input() {
        let v = SteeredVisitor::new(Point2::new(1.0, 1.0), (Point2::zeros(), Point2::new(2.0, 2.0)));
        for t in 0..10 {
            assert_eq!(v.position_at(t as f64 * 0.5), Point2::new(1.0, 1.0));
        }
    }
}
