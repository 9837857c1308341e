//! Run configuration file, error mapping and shared loaders.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use magpos::config::load_scenario;
use magpos::domain::{load_survey_table, Point2, SurveyTable};
use magpos::eval::{calibrate_from_survey, CALIBRATION_REPEATS};
use magpos::ranging::CalibrationResult;
use magpos::signal_sim::SimScenario;

use crate::args::ScenarioArgs;

pub const DEFAULT_ENDPOINT: &str = "127.0.0.1:5005";
pub const DEFAULT_BRIDGE: &str = "127.0.0.1:5006";
pub const DEFAULT_CANVAS: (u32, u32) = (1280, 720);

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

pub fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn runtime_err(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Values shared by all subcommands. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub canvas_calibration: Option<PathBuf>,
    pub trajectory: Option<String>,
    pub endpoint: Option<String>,
    pub listen: Option<String>,
    pub bridge: Option<String>,
    pub canvas: Option<String>,
    pub seed: Option<u64>,
    pub verbosity: Option<String>,
    pub duration: Option<f64>,
    pub period: Option<f64>,
    pub repeats: Option<usize>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Relative paths inside the file are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read(path)?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.scenario, &mut config.calibration, &mut config.canvas_calibration, &mut config.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(t) = &mut config.trajectory {
            if t != "live" && Path::new(t).is_relative() {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
        Ok(config)
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

pub fn scenario(args: &ScenarioArgs, config: &RunConfig) -> Result<SimScenario, CliError> {
    let seed = args.seed.or(config.seed);
    match args.scenario.as_ref().or(config.scenario.as_ref()) {
        Some(path) => {
            load_scenario(&read(path)?, seed).map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
        None => load_scenario("", seed).map_err(config_err),
    }
}

pub fn survey() -> SurveyTable {
    load_survey_table().expect("embedded survey table is valid")
}

/// Reads a calibration file, or calibrates from the simulated survey points.
pub fn calibration(path: Option<&PathBuf>, scenario: &SimScenario) -> Result<CalibrationResult, CliError> {
    match path {
        Some(path) => {
            let cal = CalibrationResult::from_text(&read(path)?)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if let Some(missing) = scenario.anchor_set.ids().into_iter().find(|id| cal.get(*id).is_none()) {
                return Err(config_err(format!("{}: no constants for anchor {missing}", path.display())));
            }
            Ok(cal)
        }
        None => calibrate_from_survey(scenario, &survey(), CALIBRATION_REPEATS).map_err(runtime_err),
    }
}

pub fn parse_point(text: &str) -> Result<Point2, CliError> {
    let bad = || config_err(format!("position `{text}` must be `x,y` in meters"));
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    let x: f64 = x.trim().parse().map_err(|_| bad())?;
    let y: f64 = y.trim().parse().map_err(|_| bad())?;
    if !(x.is_finite() && y.is_finite()) {
        return Err(bad());
    }
    Ok(Point2::new(x, y))
}

pub fn parse_canvas(text: &str) -> Result<(u32, u32), CliError> {
    let bad = || config_err(format!("canvas `{text}` must be `WxH` with positive sizes"));
    let (w, h) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: u32 = w.trim().parse().map_err(|_| bad())?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// The central calibration point, a safe default receiver position.
pub fn default_position() -> Point2 {
    let survey = survey();
    survey.get("C5").map_or(Point2::new(1.367, 2.360), |p| p.position.xy())
}
