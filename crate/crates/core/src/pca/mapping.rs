//! Physical-to-canvas coordinate mapping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Point2;

#[derive(Debug, Error, PartialEq)]
pub enum CanvasError {
    #[error("physical bounds are degenerate: {0}")]
    DegenerateBounds(&'static str),
    #[error("canvas size must be positive")]
    EmptyCanvas,
    #[error("calibration file: {0}")]
    Parse(String),
}

/// Physical bounds of the play area and the canvas they map onto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasCalibration {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub width: u32,
    pub height: u32,
}

impl CanvasCalibration {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, width: u32, height: u32) -> Result<Self, CanvasError> {
        let cal = CanvasCalibration { x_min, x_max, y_min, y_max, width, height };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<(), CanvasError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite());
        if !finite {
            return Err(CanvasError::DegenerateBounds("bounds must be finite"));
        }
        if self.x_max <= self.x_min {
            return Err(CanvasError::DegenerateBounds("x_max must exceed x_min"));
        }
        if self.y_max <= self.y_min {
            return Err(CanvasError::DegenerateBounds("y_max must exceed y_min"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CanvasError::EmptyCanvas);
        }
        Ok(())
    }

    /// Flat key-value text (`x_min = 0.0`, ...).
    pub fn from_text(text: &str) -> Result<Self, CanvasError> {
        let cal: CanvasCalibration = toml::from_str(text).map_err(|e| CanvasError::Parse(e.message().to_string()))?;
        cal.validate()?;
        Ok(cal)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    /// Inverse mapping of a pixel back to physical meters.
    pub fn to_physical(&self, pixel: Pixel) -> Point2 {
        Point2::new(
            self.x_min + f64::from(pixel.x) * (self.x_max - self.x_min) / f64::from(self.width),
            self.y_min + f64::from(pixel.y) * (self.y_max - self.y_min) / f64::from(self.height),
        )
    }

    /// Unrounded canvas coordinates.
    pub fn scale(&self, position: &Point2) -> (f64, f64) {
        (
            f64::from(self.width) / (self.x_max - self.x_min) * (position.x - self.x_min),
            f64::from(self.height) / (self.y_max - self.y_min) * (position.y - self.y_min),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub const fn new(x: u32, y: u32) -> Self {
        Pixel { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mapped {
    pub pixel: Pixel,
    /// The physical position fell outside the calibrated bounds.
    pub clamped: bool,
}

/// `x' = W/(x_max − x_min)·(x − x_min)`, likewise for y; rounded to the
/// nearest pixel and clamped to `[0, W] × [0, H]`.
pub fn map_to_canvas(position: &Point2, cal: &CanvasCalibration) -> Mapped {
    let (sx, sy) = cal.scale(position);
    let round_clamp = |v: f64, max: u32| -> (u32, bool) {
        let r = v.round();
        if r.is_nan() || r < 0.0 {
            (0, true)
        } else if r > f64::from(max) {
            (max, true)
        } else {
            (r as u32, false)
        }
    };
    let (x, cx) = round_clamp(sx, cal.width);
    let (y, cy) = round_clamp(sy, cal.height);
    Mapped { pixel: Pixel { x, y }, clamped: cx || cy }
}
