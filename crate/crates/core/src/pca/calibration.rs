//! Bounds calibration: the visitor is asked to walk to each of the four
//! sides of the play area in turn, and the extreme coordinate seen during a
//! short recording window becomes that side's bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::mapping::CanvasCalibration;
use crate::domain::Point2;

/// Length of the recording window at each side, seconds.
pub const SIDE_WINDOW: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Minimum x.
    Left,
    /// Maximum x.
    Right,
    /// Minimum y.
    Bottom,
    /// Maximum y.
    Top,
}

impl Side {
    pub const ORDER: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn extreme(self, p: &Point2, current: Option<f64>) -> f64 {
        let (v, take_max) = match self {
            Side::Left => (p.x, false),
            Side::Right => (p.x, true),
            Side::Bottom => (p.y, false),
            Side::Top => (p.y, true),
        };
        match current {
            None => v,
            Some(c) if take_max => c.max(v),
            Some(c) => c.min(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "prompt", rename_all = "snake_case")]
pub enum CalibrationPrompt {
    MoveTo { side: Side },
    /// The recorded bounds along `axis` collapsed; both sides are redone.
    Rejected { axis: Axis },
    Done { calibration: CanvasCalibration },
}

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationAppError {
    #[error("position stream ended before calibration finished ({rejections} rejected attempts)")]
    Incomplete { rejections: usize },
}

/// Incremental calibration state machine fed with timestamped positions.
#[derive(Debug, Clone)]
pub struct CalibrationProcedure {
    width: u32,
    height: u32,
    window: f64,
    bounds: [Option<f64>; 4],
    side: usize,
    window_start: Option<f64>,
    extreme: Option<f64>,
    rejections: usize,
    result: Option<CanvasCalibration>,
}

impl CalibrationProcedure {
    pub fn new(width: u32, height: u32) -> Self {
        CalibrationProcedure {
            width,
            height,
            window: SIDE_WINDOW,
            bounds: [None; 4],
            side: 0,
            window_start: None,
            extreme: None,
            rejections: 0,
            result: None,
        }
    }

    pub fn with_window(mut self, seconds: f64) -> Self {
        self.window = seconds;
        self
    }

    /// The prompt to show right now.
    pub fn prompt(&self) -> CalibrationPrompt {
        match self.result {
            Some(calibration) => CalibrationPrompt::Done { calibration },
            None => CalibrationPrompt::MoveTo { side: Side::ORDER[self.side] },
        }
    }

    pub fn current_side(&self) -> Option<Side> {
        self.result.is_none().then(|| Side::ORDER[self.side])
    }

    /// Fraction of the current side's window elapsed at time `t`.
    pub fn progress(&self, t: f64) -> f64 {
        self.window_start.map_or(0.0, |s| ((t - s) / self.window).clamp(0.0, 1.0))
    }

    pub fn rejections(&self) -> usize {
        self.rejections
    }

    pub fn result(&self) -> Option<CanvasCalibration> {
        self.result
    }

    /// Feeds one position. Returns the prompts raised by it, in order.
    pub fn feed(&mut self, t: f64, position: Point2) -> Vec<CalibrationPrompt> {
        if self.result.is_some() {
            return Vec::new();
        }
        let start = *self.window_start.get_or_insert(t);
        if t - start <= self.window {
            self.extreme = Some(Side::ORDER[self.side].extreme(&position, self.extreme));
        }
        if t - start < self.window {
            return Vec::new();
        }

        self.bounds[self.side] = self.extreme.take();
        self.window_start = None;
        if let Some(next) = self.bounds.iter().position(Option::is_none) {
            self.side = next;
            return vec![self.prompt()];
        }

        let [x_min, x_max, y_min, y_max] = self.bounds.map(|b| b.expect("every side recorded"));
        let mut prompts = Vec::new();
        if x_min >= x_max {
            prompts.push(CalibrationPrompt::Rejected { axis: Axis::X });
            self.bounds[0] = None;
            self.bounds[1] = None;
        }
        if y_min >= y_max {
            prompts.push(CalibrationPrompt::Rejected { axis: Axis::Y });
            self.bounds[2] = None;
            self.bounds[3] = None;
        }
        match CanvasCalibration::new(x_min, x_max, y_min, y_max, self.width, self.height) {
            Ok(cal) if prompts.is_empty() => self.result = Some(cal),
            _ => {
                self.rejections += 1;
                self.side = self.bounds.iter().position(Option::is_none).unwrap_or(0);
            }
        }
        prompts.push(self.prompt());
        prompts
    }
}

/// Runs the calibration over a stream of `(t, position)` pairs, reporting
/// every prompt to `prompt_sink`. Redone sides keep consuming the stream.
pub fn run_calibration_app(
    positions: impl IntoIterator<Item = (f64, Point2)>,
    width: u32,
    height: u32,
    prompt_sink: &mut dyn FnMut(&CalibrationPrompt),
) -> Result<CanvasCalibration, CalibrationAppError> {
    let mut procedure = CalibrationProcedure::new(width, height);
    prompt_sink(&procedure.prompt());
    for (t, p) in positions {
        for prompt in procedure.feed(t, p) {
            prompt_sink(&prompt);
        }
        if let Some(cal) = procedure.result() {
            return Ok(cal);
        }
    }
    Err(CalibrationAppError::Incomplete { rejections: procedure.rejections() })
}
