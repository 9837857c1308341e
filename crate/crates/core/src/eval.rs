//! Accuracy evaluation against the surveyed control points.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::Matrix2;
use rayon::prelude::*;
use thiserror::Error;

use crate::domain::{project_to_reference_plane, AnchorSet, Point2, Point3, SurveyTable};
use crate::geometry;
use crate::pipeline::{simulate_calibration, ChainError, PositionEstimator};
use crate::ranging::{self, CalibrationResult, RangingError};
use crate::signal_sim::SimScenario;
use crate::trilateration::{self, SolverConfig};

pub const BORDER_THRESHOLD: f64 = 0.10;
pub const DEFAULT_REPEATS: usize = 10;
/// Records taken at each calibration point.
pub const CALIBRATION_REPEATS: usize = 10;
/// Spacing of simulated records, seconds.
pub const TRIAL_SPACING: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("GDOP needs at least 3 anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("grid resolution must be positive and finite")]
    InvalidResolution,
    #[error("repeat count must be positive")]
    NoRepeats,
    #[error("survey has no calibration points")]
    NoCalibrationPoints,
    #[error("calibration failed: {0}")]
    Calibration(#[from] RangingError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Planar distance between an estimate and a surveyed reference.
pub fn positioning_error(estimate: &Point2, reference: &Point3, anchor_set: &AnchorSet) -> f64 {
    (estimate - project_to_reference_plane(reference, anchor_set)).norm()
}

/// Control points within `threshold` of the anchor quadrilateral's boundary.
pub fn classify_border_points(survey: &SurveyTable, anchor_set: &AnchorSet, threshold: f64) -> BTreeSet<String> {
    let polygon = anchor_set.polygon();
    survey
        .control
        .iter()
        .filter(|p| geometry::distance_to_boundary(&anchor_set.project(&p.position), &polygon) <= threshold)
        .map(|p| p.label.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub point_id: String,
    pub trial: usize,
    /// `None` when the chain could not produce a fix.
    pub estimate: Option<Point2>,
    pub reference: Point2,
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub point_id: String,
    pub reference: Point2,
    pub border: bool,
    /// Successful trials.
    pub repeats: usize,
    pub failures: usize,
    pub mean_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub trials: Vec<Trial>,
    pub points: Vec<PointSummary>,
    pub border_points: BTreeSet<String>,
    pub calibration: CalibrationResult,
    pub mean_all: Option<f64>,
    pub mean_interior: Option<f64>,
    pub mean_border: Option<f64>,
    pub failed_trials: usize,
    /// Points without a single successful trial.
    pub failed_points: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl ErrorReport {
    fn errors(&self, interior_only: bool) -> Vec<f64> {
        let mut errors: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| !interior_only || !self.border_points.contains(&t.point_id))
            .filter_map(|t| t.error)
            .collect();
        errors.sort_by(f64::total_cmp);
        errors
    }

    /// Empirical CDF of the per-trial errors as `(error, F(error))` steps.
    pub fn cdf(&self, interior_only: bool) -> Vec<(f64, f64)> {
        let errors = self.errors(interior_only);
        let n = errors.len() as f64;
        let mut steps: Vec<(f64, f64)> = Vec::new();
        for (i, e) in errors.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match steps.last_mut() {
                Some(last) if last.0 == *e => last.1 = f,
                _ => steps.push((*e, f)),
            }
        }
        steps
    }

    /// Fraction of trial errors at or below `x`.
    pub fn cdf_at(&self, x: f64, interior_only: bool) -> f64 {
        let errors = self.errors(interior_only);
        if errors.is_empty() {
            return 0.0;
        }
        errors.partition_point(|e| *e <= x) as f64 / errors.len() as f64
    }

    /// One row per trial; failed trials leave the estimate and error empty.
    pub fn errors_csv(&self) -> String {
        let mut out = String::from("point_id,trial,x_est,y_est,x_ref,y_ref,error_m\n");
        for t in &self.trials {
            let (xe, ye, e) = match (t.estimate, t.error) {
                (Some(p), Some(e)) => (format!("{:.6}", p.x), format!("{:.6}", p.y), format!("{e:.6}")),
                _ => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{xe},{ye},{:.6},{:.6},{e}", t.point_id, t.trial, t.reference.x, t.reference.y);
        }
        out
    }

    /// CDF of all and of interior trials, evaluated at every observed error.
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("error_m,cdf_all,cdf_interior\n");
        for (e, f) in self.cdf(false) {
            let _ = writeln!(out, "{e:.6},{f:.6},{:.6}", self.cdf_at(e, true));
        }
        out
    }

    pub fn summary(&self) -> String {
        let cm = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1} cm", v * 100.0));
        let mut out = String::new();
        let _ = writeln!(out, "control points: {}", self.points.len());
        let _ = writeln!(out, "trials: {} ({} failed)", self.trials.len(), self.failed_trials);
        let _ = writeln!(
            out,
            "border points: {}",
            self.border_points.iter().cloned().collect::<Vec<_>>().join(" ")
        );
        let _ = writeln!(out, "mean error, all points: {}", cm(self.mean_all));
        let _ = writeln!(out, "mean error, interior points: {}", cm(self.mean_interior));
        let _ = writeln!(out, "mean error, border points: {}", cm(self.mean_border));
        let _ = writeln!(out, "interior trials within 25 cm: {:.1} %", 100.0 * self.cdf_at(0.25, true));
        if !self.failed_points.is_empty() {
            let _ = writeln!(out, "failed points: {}", self.failed_points.join(" "));
        }
        let _ = writeln!(out, "\npoint   border  mean error");
        for p in &self.points {
            let _ = writeln!(out, "{:<7} {:<7} {}", p.point_id, if p.border { "yes" } else { "" }, cm(p.mean_error));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub repeats: usize,
    pub border_threshold: f64,
    pub calibration_repeats: usize,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            repeats: DEFAULT_REPEATS,
            border_threshold: BORDER_THRESHOLD,
            calibration_repeats: CALIBRATION_REPEATS,
            solver: SolverConfig::default(),
        }
    }
}

/// Fits the power-law constants from simulated records at the survey's
/// calibration points.
pub fn calibrate_from_survey(
    scenario: &SimScenario,
    survey: &SurveyTable,
    repeats: usize,
) -> Result<CalibrationResult, EvalError> {
    if survey.calibration.is_empty() {
        return Err(EvalError::NoCalibrationPoints);
    }
    let points: Vec<Point2> = survey.calibration.iter().map(|p| scenario.anchor_set.project(&p.position)).collect();
    let observations = simulate_calibration(scenario, &points, repeats.max(1), TRIAL_SPACING)?;
    Ok(ranging::calibrate(&observations)?)
}

pub fn run_accuracy_experiment(
    scenario: &SimScenario,
    repeats: usize,
    survey: &SurveyTable,
) -> Result<ErrorReport, EvalError> {
    run_accuracy_experiment_with(scenario, survey, &ExperimentConfig { repeats, ..ExperimentConfig::default() })
}

/// Calibrates, then places the simulated receiver at every control point for
/// `repeats` records. Trial `k` is recorded at `t0 = k · TRIAL_SPACING`.
pub fn run_accuracy_experiment_with(
    scenario: &SimScenario,
    survey: &SurveyTable,
    config: &ExperimentConfig,
) -> Result<ErrorReport, EvalError> {
    if config.repeats == 0 {
        return Err(EvalError::NoRepeats);
    }
    let calibration = calibrate_from_survey(scenario, survey, config.calibration_repeats)?;
    let set = &scenario.anchor_set;
    let estimator = PositionEstimator::new(set, &scenario.adc, calibration.clone(), config.solver)?;
    let border_points = classify_border_points(survey, set, config.border_threshold);

    let trials: Vec<Vec<Trial>> = survey
        .control
        .par_iter()
        .map(|point| {
            let reference = set.project(&point.position);
            (0..config.repeats)
                .map(|k| {
                    let estimate = match estimator.fix_at(scenario, &reference, k as f64 * TRIAL_SPACING) {
                        Ok(fix) => Some(fix.position()),
                        Err(e) => {
                            log::debug!("{} trial {k}: {e}", point.label);
                            None
                        }
                    };
                    Trial {
                        point_id: point.label.clone(),
                        trial: k,
                        estimate,
                        reference,
                        error: estimate.map(|p| positioning_error(&p, &point.position, set)),
                    }
                })
                .collect()
        })
        .collect();

    let points: Vec<PointSummary> = trials
        .iter()
        .zip(&survey.control)
        .map(|(ts, point)| {
            let repeats = ts.iter().filter(|t| t.error.is_some()).count();
            PointSummary {
                point_id: point.label.clone(),
                reference: set.project(&point.position),
                border: border_points.contains(&point.label),
                repeats,
                failures: ts.len() - repeats,
                mean_error: mean(ts.iter().filter_map(|t| t.error)),
            }
        })
        .collect();
    let trials: Vec<Trial> = trials.into_iter().flatten().collect();
    let trial_mean = |keep: &dyn Fn(&Trial) -> bool| mean(trials.iter().filter(|t| keep(t)).filter_map(|t| t.error));
    let mean_all = trial_mean(&|_| true);
    let mean_interior = trial_mean(&|t| !border_points.contains(&t.point_id));
    let mean_border = trial_mean(&|t| border_points.contains(&t.point_id));

    Ok(ErrorReport {
        failed_trials: trials.iter().filter(|t| t.error.is_none()).count(),
        failed_points: points.iter().filter(|p| p.repeats == 0).map(|p| p.point_id.clone()).collect(),
        trials,
        points,
        border_points,
        calibration,
        mean_all,
        mean_interior,
        mean_border,
    })
}

/// `√trace((JᵀJ)⁻¹)` with `J` the unit-vector range Jacobian. Infinite where
/// `JᵀJ` is singular, including on an anchor.
pub fn gdop(position: &Point2, anchor_set: &AnchorSet) -> f64 {
    let Ok(j) = trilateration::jacobian(position, anchor_set) else {
        return f64::INFINITY;
    };
    let jtj = j.transpose() * &j;
    let m = Matrix2::new(jtj[(0, 0)], jtj[(0, 1)], jtj[(1, 0)], jtj[(1, 1)]);
    // relative determinant test: unit rows give trace = N
    if m.determinant().abs() <= 1e-12 * m.trace().powi(2) {
        return f64::INFINITY;
    }
    match m.try_inverse() {
        Some(inv) => inv.trace().sqrt(),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdopGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[iy][ix]`.
    pub values: Vec<Vec<f64>>,
}

impl GdopGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy][ix]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,gdop\n");
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                let _ = writeln!(out, "{x:.4},{y:.4},{:.6}", self.values[iy][ix]);
            }
        }
        out
    }
}

/// GDOP over the anchors' bounding box, sampled every `resolution` meters
/// starting at the lower-left corner.
pub fn gdop_map(anchor_set: &AnchorSet, resolution: f64) -> Result<GdopGrid, EvalError> {
    if anchor_set.len() < 3 {
        return Err(EvalError::TooFewAnchors(anchor_set.len()));
    }
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(EvalError::InvalidResolution);
    }
    let polygon = anchor_set.polygon();
    let (lo, hi) = polygon.iter().fold(
        (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let axis = |a: f64, b: f64| -> Vec<f64> {
        let n = ((b - a) / resolution + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * resolution).collect()
    };
    let xs = axis(lo.x, hi.x);
    let ys = axis(lo.y, hi.y);
    let values = ys
        .iter()
        .map(|&y| xs.iter().map(|&x| gdop(&Point2::new(x, y), anchor_set)).collect())
        .collect();
    Ok(GdopGrid { xs, ys, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{load_survey_table, Anchor, AnchorId, TONE_FREQUENCIES};
    use crate::signal_sim::DEFAULT_CONSTANTS;

    fn table_set() -> AnchorSet {
        AnchorSet::surveyed(DEFAULT_CONSTANTS)
    }

    pub(crate) fn square_set(side: f64) -> AnchorSet {
        let corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)];
        let anchors = corners
            .iter()
            .zip(['A', 'B', 'C', 'D'])
            .zip(TONE_FREQUENCIES)
            .map(|((&(x, y), id), f)| Anchor::new(AnchorId(id), Point3::new(x, y, 0.0), f, 0.5, 3.0).unwrap())
            .collect();
        AnchorSet::new(anchors).unwrap()
    }

    #[test]
    fn error_examples() {
        let set = table_set();
        let c5 = Point3::new(1.367, 2.360, 1.235);
        assert_eq!(positioning_error(&Point2::new(1.367, 2.360), &c5, &set), 0.0);
        assert!((positioning_error(&Point2::new(1.467, 2.360), &c5, &set) - 0.1).abs() < 1e-12);
        assert!((positioning_error(&Point2::new(1.367, 2.460), &c5, &set) - 0.1).abs() < 1e-12);
        let high = Point3::new(1.367, 2.360, 9.0);
        assert_eq!(
            positioning_error(&Point2::new(1.0, 2.0), &c5, &set),
            positioning_error(&Point2::new(1.0, 2.0), &high, &set)
        );
    }

    #[test]
    fn border_thresholds() {
        let survey = load_survey_table().unwrap();
        let set = table_set();
        let six: BTreeSet<String> = ["P01", "P02", "P03", "P25", "P26", "P27"].iter().map(|s| s.to_string()).collect();
        assert_eq!(classify_border_points(&survey, &set, BORDER_THRESHOLD), six);
        assert_eq!(classify_border_points(&survey, &set, 10.0).len(), survey.control.len());
        assert!(classify_border_points(&survey, &set, 0.0).is_empty());
    }

    #[test]
    fn gdop_matches_monte_carlo_amplification() {
        use crate::domain::DistanceEstimate;
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let set = square_set(3.0);
        let centre = Point2::new(1.5, 1.5);
        let g = gdop(&centre, &set);
        let eps = 1e-4;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 4000;
        let mut sq = 0.0;
        for _ in 0..n {
            let pairs: Vec<(AnchorId, f64)> = set
                .iter()
                .map(|a| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (a.id, (a.planar() - centre).norm() + eps * z)
                })
                .collect();
            let d = DistanceEstimate::from_pairs(pairs).unwrap();
            let fix = trilateration::solve(&d, &set, &SolverConfig::default(), Some(centre)).unwrap();
            sq += (fix.position() - centre).norm_squared();
        }
        let amplification = (sq / n as f64).sqrt() / eps;
        assert!((amplification - g).abs() / g < 0.10, "gdop {g} vs monte carlo {amplification}");
    }

    #[test]
    fn square_edge_midpoint_exceeds_centre() {
        let set = square_set(3.0);
        assert!(gdop(&Point2::new(1.5, 0.0), &set) > gdop(&Point2::new(1.5, 1.5), &set));
    }

    #[test]
    fn gdop_singular_and_underdetermined() {
        let set = table_set();
        assert!(gdop(&set.anchors()[0].planar(), &set).is_infinite());
        let two = AnchorSet::new(set.anchors()[..2].to_vec()).unwrap();
        assert_eq!(gdop_map(&two, 0.1).err(), Some(EvalError::TooFewAnchors(2)));
        let grid = gdop_map(&set, 0.25).unwrap();
        assert!(grid.values.iter().flatten().all(|v| *v >= 1.0 || v.is_infinite()));
        assert_eq!(grid.to_csv().lines().count(), 1 + grid.xs.len() * grid.ys.len());
    }

    #[test]
    fn exact_chain_report() {
        let survey = load_survey_table().unwrap();
        let report = run_accuracy_experiment(&SimScenario::exact(), 2, &survey).unwrap();
        assert_eq!(report.trials.len(), 2 * survey.control.len());
        assert_eq!(report.failed_trials, 0);
        assert!(report.mean_all.unwrap() < 1e-3);
        let cdf = report.cdf(false);
        assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert_eq!(report.errors_csv().lines().count(), 1 + report.trials.len());
        assert!(report.summary().contains("P01"));
    }

    #[test]
    fn noisy_report_is_deterministic() {
        let survey = load_survey_table().unwrap();
        let scenario = SimScenario::paper_like(5);
        let a = run_accuracy_experiment(&scenario, 2, &survey).unwrap();
        let b = run_accuracy_experiment(&scenario, 2, &survey).unwrap();
        assert_eq!(a, b);
    }
}
