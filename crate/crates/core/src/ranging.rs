//! Power-law ranging: amplitude to distance, and per-anchor fitting of the
//! `V = α·d^(−β)` constants from calibration observations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AmplitudeEstimate, AnchorId, DistanceEstimate};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RangingError {
    #[error("amplitude {0} V is not a valid measurement")]
    InvalidAmplitude(f64),
    #[error("invalid power-law constants alpha={alpha} beta={beta}")]
    InvalidConstants { alpha: f64, beta: f64 },
    #[error("anchor {0}: distance and amplitude must be positive")]
    NonPositiveObservation(AnchorId),
    #[error("anchor {0}: need at least two distinct distances")]
    Underdetermined(AnchorId),
    #[error("anchor {0}: fit produced non-physical constants")]
    FitFailed(AnchorId),
    #[error("no calibration for anchor {0}")]
    MissingCalibration(AnchorId),
    #[error("only {valid} valid anchors, need {required}")]
    InsufficientAnchors { valid: usize, required: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Inverts the power law: `d = (α / V)^(1/β)`.
pub fn invert_power_law(amplitude: f64, alpha: f64, beta: f64) -> Result<f64, RangingError> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(RangingError::InvalidConstants { alpha, beta });
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(RangingError::InvalidAmplitude(amplitude));
    }
    Ok((alpha / amplitude).powf(beta.recip()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationObservation {
    pub anchor_id: AnchorId,
    /// Meters.
    pub known_distance: f64,
    /// Volts.
    pub measured_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorFit {
    pub alpha: f64,
    pub beta: f64,
    /// RMS of `ln V − ln(α d^−β)` over the observations.
    pub rms_log_residual: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub per_anchor: BTreeMap<AnchorId, AnchorFit>,
}

/// Domain in which the calibration residuals are minimized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FitDomain {
    /// Ordinary least squares on `ln V = ln α − β ln d`.
    #[default]
    LogLog,
    /// Nonlinear least squares on `V − α d^−β`, started from the log-log fit.
    Linear,
}

pub fn calibrate(observations: &[CalibrationObservation]) -> Result<CalibrationResult, RangingError> {
    calibrate_with(observations, FitDomain::LogLog)
}

pub fn calibrate_with(
    observations: &[CalibrationObservation],
    domain: FitDomain,
) -> Result<CalibrationResult, RangingError> {
    let mut grouped: BTreeMap<AnchorId, Vec<(f64, f64)>> = BTreeMap::new();
    for obs in observations {
        let (d, v) = (obs.known_distance, obs.measured_amplitude);
        if !(d > 0.0 && v > 0.0 && d.is_finite() && v.is_finite()) {
            return Err(RangingError::NonPositiveObservation(obs.anchor_id));
        }
        grouped.entry(obs.anchor_id).or_default().push((d, v));
    }

    let mut per_anchor = BTreeMap::new();
    for (id, points) in grouped {
        let (alpha, beta) = fit_log_log(id, &points)?;
        let (alpha, beta) = match domain {
            FitDomain::LogLog => (alpha, beta),
            FitDomain::Linear => refine_linear(&points, alpha, beta),
        };
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(RangingError::FitFailed(id));
        }
        let rms_log_residual = (points
            .iter()
            .map(|&(d, v)| (v.ln() - (alpha.ln() - beta * d.ln())).powi(2))
            .sum::<f64>()
            / points.len() as f64)
            .sqrt();
        per_anchor.insert(id, AnchorFit { alpha, beta, rms_log_residual, count: points.len() });
    }
    Ok(CalibrationResult { per_anchor })
}

fn fit_log_log(id: AnchorId, points: &[(f64, f64)]) -> Result<(f64, f64), RangingError> {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(d, v)| (sx + d.ln(), sy + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy) = points.iter().fold((0.0, 0.0), |(sxx, sxy), &(d, v)| {
        let dx = d.ln() - mx;
        (sxx + dx * dx, sxy + dx * (v.ln() - my))
    });
    // distinct distances give a strictly positive spread of ln d
    if points.len() < 2 || sxx <= 1e-12 * n {
        return Err(RangingError::Underdetermined(id));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok((intercept.exp(), -slope))
}

/// Levenberg-Marquardt on the linear-domain residuals.
fn refine_linear(points: &[(f64, f64)], alpha: f64, beta: f64) -> (f64, f64) {
    let cost = |a: f64, b: f64| -> f64 { points.iter().map(|&(d, v)| (v - a * d.powf(-b)).powi(2)).sum() };
    let (mut a, mut b) = (alpha, beta);
    let mut current = cost(a, b);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(d, v) in points {
            let model = a * d.powf(-b);
            let r = v - model;
            let ja = d.powf(-b);
            let jb = -model * d.ln();
            h00 += ja * ja;
            h01 += ja * jb;
            h11 += jb * jb;
            g0 += ja * r;
            g1 += jb * r;
        }
        let m00 = h00 * (1.0 + lambda);
        let m11 = h11 * (1.0 + lambda);
        let det = m00 * m11 - h01 * h01;
        if det.abs() < f64::MIN_POSITIVE {
            break;
        }
        let da = (m11 * g0 - h01 * g1) / det;
        let db = (m00 * g1 - h01 * g0) / det;
        let (na, nb) = (a + da, b + db);
        let candidate = cost(na, nb);
        if na > 0.0 && nb > 0.0 && candidate < current {
            let converged = (da / a).abs() < 1e-14 && (db / b).abs() < 1e-14;
            a = na;
            b = nb;
            current = candidate;
            lambda = (lambda / 10.0).max(1e-12);
            if converged {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    (a, b)
}

impl CalibrationResult {
    pub fn get(&self, id: AnchorId) -> Option<&AnchorFit> {
        self.per_anchor.get(&id)
    }

    /// `(alpha, beta)` per anchor.
    pub fn constants(&self) -> BTreeMap<AnchorId, (f64, f64)> {
        self.per_anchor.iter().map(|(&id, fit)| (id, (fit.alpha, fit.beta))).collect()
    }

    /// Rows `anchor_id alpha beta rms_log_residual count`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# anchor_id alpha beta rms_log_residual count\n");
        for (id, fit) in &self.per_anchor {
            let _ = writeln!(
                out,
                "{id} {:.17e} {:.17e} {:.6e} {}",
                fit.alpha, fit.beta, fit.rms_log_residual, fit.count
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, RangingError> {
        let mut per_anchor = BTreeMap::new();
        for (line, fields) in data_rows(text) {
            let parse_err = |reason: String| RangingError::Parse { line, reason };
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let id: AnchorId = fields[0].parse().map_err(parse_err)?;
            let num = |s: &str| -> Result<f64, RangingError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(format!("bad number `{s}`")))
            };
            let (alpha, beta) = (num(fields[1])?, num(fields[2])?);
            if !(alpha > 0.0 && beta > 0.0) {
                return Err(RangingError::InvalidConstants { alpha, beta });
            }
            let count = fields[4]
                .parse()
                .map_err(|_| parse_err(format!("bad count `{}`", fields[4])))?;
            per_anchor.insert(id, AnchorFit { alpha, beta, rms_log_residual: num(fields[3])?, count });
        }
        Ok(CalibrationResult { per_anchor })
    }
}

/// Rows `anchor_id distance_m amplitude_v`.
pub fn observations_to_text(observations: &[CalibrationObservation]) -> String {
    let mut out = String::from("# anchor_id distance_m amplitude_v\n");
    for o in observations {
        let _ = writeln!(out, "{} {:.6} {:.9e}", o.anchor_id, o.known_distance, o.measured_amplitude);
    }
    out
}

pub fn observations_from_text(text: &str) -> Result<Vec<CalibrationObservation>, RangingError> {
    data_rows(text)
        .map(|(line, fields)| {
            let parse_err = |reason: String| RangingError::Parse { line, reason };
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number `{s}`")));
            Ok(CalibrationObservation {
                anchor_id: fields[0].parse().map_err(parse_err)?,
                known_distance: num(fields[1])?,
                measured_amplitude: num(fields[2])?,
            })
        })
        .collect()
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then(|| (i + 1, line.split_whitespace().collect()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangingConfig {
    /// Amplitudes above this are flagged near-field unreliable, volts.
    pub saturation_threshold: f64,
    pub min_anchors: usize,
}

impl RangingConfig {
    /// Flags amplitudes above 90 % of the ADC rail (`full_scale / 2`).
    pub fn for_full_scale(full_scale: f64) -> Self {
        RangingConfig { saturation_threshold: 0.9 * full_scale / 2.0, min_anchors: 3 }
    }
}

impl Default for RangingConfig {
    fn default() -> Self {
        Self::for_full_scale(5.0)
    }
}

/// Per-fix ranging result.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranging {
    pub distances: DistanceEstimate,
    /// Anchors whose amplitude exceeded the saturation threshold. They are
    /// still ranged.
    pub near_field: Vec<AnchorId>,
    /// Anchors left out of this fix.
    pub dropped: Vec<(AnchorId, RangingError)>,
}

/// Converts every tone amplitude to a distance, dropping invalid ones.
/// Fails if fewer than `config.min_anchors` remain.
pub fn range_anchors(
    estimate: &AmplitudeEstimate,
    calibration: &CalibrationResult,
    config: &RangingConfig,
) -> Result<Ranging, RangingError> {
    let mut distances = BTreeMap::new();
    let mut near_field = Vec::new();
    let mut dropped = Vec::new();
    for (&id, &amplitude) in &estimate.per_anchor {
        let Some(fit) = calibration.get(id) else {
            dropped.push((id, RangingError::MissingCalibration(id)));
            continue;
        };
        match invert_power_law(amplitude, fit.alpha, fit.beta) {
            Ok(d) if d.is_finite() => {
                if amplitude > config.saturation_threshold {
                    near_field.push(id);
                }
                distances.insert(id, d);
            }
            Ok(_) => dropped.push((id, RangingError::InvalidAmplitude(amplitude))),
            Err(e) => dropped.push((id, e)),
        }
    }
    if distances.len() < config.min_anchors {
        return Err(RangingError::InsufficientAnchors { valid: distances.len(), required: config.min_anchors });
    }
    let distances = DistanceEstimate::new(distances).expect("distances are positive and finite");
    Ok(Ranging { distances, near_field, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_sim::power_law;
    use approx::assert_relative_eq;

    const A: AnchorId = AnchorId('A');

    fn obs(d: f64, v: f64) -> CalibrationObservation {
        CalibrationObservation { anchor_id: A, known_distance: d, measured_amplitude: v }
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_power_law(0.125, 1.0, 3.0).unwrap(), 2.0);
        assert_eq!(invert_power_law(1.0, 1.0, 3.0).unwrap(), 1.0);
        let v = power_law(2.5, 2.8, 1.7).unwrap();
        assert_relative_eq!(invert_power_law(v, 2.5, 2.8).unwrap(), 1.7, max_relative = 1e-12);
        assert_eq!(invert_power_law(0.0, 1.0, 3.0), Err(RangingError::InvalidAmplitude(0.0)));
        assert!(invert_power_law(-1.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn two_point_fit_is_exact() {
        let fit = calibrate(&[obs(1.0, 1.0), obs(2.0, 0.125)]).unwrap().per_anchor[&A];
        assert_relative_eq!(fit.alpha, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.beta, 3.0, max_relative = 1e-12);
        assert_eq!(fit.count, 2);
    }

    #[test]
    fn five_point_recovery() {
        let observations: Vec<_> = [0.8, 1.3, 2.1, 3.4, 4.4]
            .into_iter()
            .map(|d| obs(d, power_law(2.5, 2.8, d).unwrap()))
            .collect();
        for domain in [FitDomain::LogLog, FitDomain::Linear] {
            let fit = calibrate_with(&observations, domain).unwrap().per_anchor[&A];
            assert_relative_eq!(fit.alpha, 2.5, max_relative = 1e-9);
            assert_relative_eq!(fit.beta, 2.8, max_relative = 1e-9);
            assert!(fit.rms_log_residual < 1e-12);
        }
    }

    #[test]
    fn linear_fit_differs_on_noisy_data() {
        let observations = [obs(1.0, 1.05), obs(1.5, 0.28), obs(2.0, 0.13), obs(3.0, 0.04)];
        let log = calibrate_with(&observations, FitDomain::LogLog).unwrap().per_anchor[&A];
        let lin = calibrate_with(&observations, FitDomain::Linear).unwrap().per_anchor[&A];
        let sse = |f: &AnchorFit| -> f64 {
            observations
                .iter()
                .map(|o| (o.measured_amplitude - f.alpha * o.known_distance.powf(-f.beta)).powi(2))
                .sum()
        };
        assert!(sse(&lin) <= sse(&log));
    }

    #[test]
    fn calibration_errors() {
        assert_eq!(calibrate(&[obs(1.0, 1.0)]), Err(RangingError::Underdetermined(A)));
        assert_eq!(calibrate(&[obs(1.0, 1.0), obs(1.0, 0.9)]), Err(RangingError::Underdetermined(A)));
        assert_eq!(
            calibrate(&[obs(1.0, 0.0), obs(2.0, 0.1)]),
            Err(RangingError::NonPositiveObservation(A))
        );
        assert_eq!(
            calibrate(&[obs(-1.0, 1.0), obs(2.0, 0.1)]),
            Err(RangingError::NonPositiveObservation(A))
        );
    }

    #[test]
    fn file_formats_round_trip() {
        let observations = vec![obs(1.0, 1.0), obs(2.0, 0.125), obs(3.0, 1.0 / 27.0)];
        let text = observations_to_text(&observations);
        let parsed = observations_from_text(&text).unwrap();
        assert_eq!(parsed.len(), 3);
        let result = calibrate(&parsed).unwrap();
        let back = CalibrationResult::from_text(&result.to_text()).unwrap();
        assert_eq!(back.per_anchor[&A].alpha, result.per_anchor[&A].alpha);
        assert_eq!(back.per_anchor[&A].beta, result.per_anchor[&A].beta);
        assert!(matches!(
            observations_from_text("A 1.0\n"),
            Err(RangingError::Parse { line: 1, .. })
        ));
        assert!(CalibrationResult::from_text("A 1 2 3\n").is_err());
    }

    #[test]
    fn ranging_drops_invalid_and_flags_near_field() {
        let calibration = calibrate(
            &['A', 'B', 'C', 'D']
                .into_iter()
                .flat_map(|c| {
                    [1.0, 2.0].map(|d| CalibrationObservation {
                        anchor_id: AnchorId(c),
                        known_distance: d,
                        measured_amplitude: d.powi(-3),
                    })
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let estimate = |amps: [f64; 4]| AmplitudeEstimate {
            per_anchor: ['A', 'B', 'C', 'D'].map(AnchorId).into_iter().zip(amps).collect(),
            dc: 0.0,
            residual_rms: 0.0,
            condition_number: 1.0,
        };
        let config = RangingConfig::default();
        let r = range_anchors(&estimate([3.0, 0.125, 1.0, 0.0]), &calibration, &config).unwrap();
        assert_eq!(r.distances.len(), 3);
        assert_eq!(r.near_field, vec![AnchorId('A')]);
        assert_eq!(r.dropped.len(), 1);
        assert_relative_eq!(r.distances.get(AnchorId('B')).unwrap(), 2.0, max_relative = 1e-12);

        assert_eq!(
            range_anchors(&estimate([0.0, 0.125, 0.0, 0.2]), &calibration, &config),
            Err(RangingError::InsufficientAnchors { valid: 2, required: 3 })
        );
    }
}
