use thiserror::Error;

use crate::amp_estimator::{build_basis, estimate_amplitudes, EstimatorError, SinefitBasis};
use crate::domain::{AmplitudeEstimate, AnchorId, AnchorSet, Point2, PositionFix, SampleRecord};
use crate::ranging::{self, CalibrationObservation, CalibrationResult, Ranging, RangingConfig, RangingError};
use crate::signal_sim::{self, saturation_flag, AdcConfig, SimError, SimScenario};
use crate::trilateration::{self, SolverConfig, TrilaterationError};

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Estimation(#[from] EstimatorError),
    #[error(transparent)]
    Ranging(#[from] RangingError),
    #[error(transparent)]
    Trilateration(#[from] TrilaterationError),
}

/// Everything produced while turning one record into a fix.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub fix: PositionFix,
    pub amplitudes: AmplitudeEstimate,
    pub ranging: Ranging,
    pub saturated: bool,
}

/// The record-to-fix chain: sinefit, power-law ranging, trilateration.
#[derive(Debug, Clone)]
pub struct PositionEstimator {
    anchor_set: AnchorSet,
    ids: Vec<AnchorId>,
    basis: SinefitBasis,
    calibration: CalibrationResult,
    ranging: RangingConfig,
    solver: SolverConfig,
}

impl PositionEstimator {
    /// `anchor_set` supplies geometry and tone plan; power-law constants come
    /// from `calibration`.
    pub fn new(
        anchor_set: &AnchorSet,
        adc: &AdcConfig,
        calibration: CalibrationResult,
        solver: SolverConfig,
    ) -> Result<Self, ChainError> {
        let basis = build_basis(&anchor_set.frequencies(), adc.sample_rate, adc.record_length)?;
        if let Some(missing) = anchor_set.ids().into_iter().find(|id| calibration.get(*id).is_none()) {
            return Err(RangingError::MissingCalibration(missing).into());
        }
        Ok(PositionEstimator {
            anchor_set: anchor_set.clone(),
            ids: anchor_set.ids(),
            basis,
            calibration,
            ranging: RangingConfig::for_full_scale(adc.full_scale),
            solver,
        })
    }

    pub fn basis(&self) -> &SinefitBasis {
        &self.basis
    }

    pub fn anchor_set(&self) -> &AnchorSet {
        &self.anchor_set
    }

    pub fn calibration(&self) -> &CalibrationResult {
        &self.calibration
    }

    pub fn amplitudes(&self, record: &SampleRecord) -> Result<AmplitudeEstimate, ChainError> {
        Ok(estimate_amplitudes(record, &self.basis, &self.ids)?)
    }

    pub fn measure(&self, record: &SampleRecord) -> Result<Measurement, ChainError> {
        let amplitudes = self.amplitudes(record)?;
        let ranging = ranging::range_anchors(&amplitudes, &self.calibration, &self.ranging)?;
        let mut fix = trilateration::solve(&ranging.distances, &self.anchor_set, &self.solver, None)?;
        fix.timestamp = record.timestamp;
        Ok(Measurement { fix, amplitudes, ranging, saturated: saturation_flag(record) })
    }

    pub fn fix(&self, record: &SampleRecord) -> Result<PositionFix, ChainError> {
        self.measure(record).map(|m| m.fix)
    }

    /// Synthesizes a record at `position` and runs it through the chain.
    pub fn fix_at(&self, scenario: &SimScenario, position: &Point2, t0: f64) -> Result<PositionFix, ChainError> {
        let record = signal_sim::synthesize_record(scenario, position, t0)?;
        self.fix(&record)
    }
}

/// Simulates the calibration walk: `repeats` records at each point, one
/// observation per anchor and record, with the planar distance as the known
/// distance. Records are `spacing` seconds apart.
pub fn simulate_calibration(
    scenario: &SimScenario,
    points: &[Point2],
    repeats: usize,
    spacing: f64,
) -> Result<Vec<CalibrationObservation>, ChainError> {
    let adc = &scenario.adc;
    let basis = build_basis(&scenario.anchor_set.frequencies(), adc.sample_rate, adc.record_length)?;
    let ids = scenario.anchor_set.ids();
    let mut observations = Vec::with_capacity(points.len() * repeats * ids.len());
    let mut t = 0.0;
    for point in points {
        for _ in 0..repeats {
            let record = signal_sim::synthesize_record(scenario, point, t)?;
            let est = estimate_amplitudes(&record, &basis, &ids)?;
            for anchor in &scenario.anchor_set {
                observations.push(CalibrationObservation {
                    anchor_id: anchor.id,
                    known_distance: signal_sim::true_distance(anchor, point)?,
                    measured_amplitude: est.per_anchor[&anchor.id],
                });
            }
            t += spacing;
        }
    }
    Ok(observations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::load_survey_table;

    fn calibration_points() -> Vec<Point2> {
        load_survey_table().unwrap().calibration.iter().map(|p| p.position.xy()).collect()
    }

    #[test]
    fn exact_chain_recovers_position() {
        let scenario = SimScenario::exact();
        let obs = simulate_calibration(&scenario, &calibration_points(), 1, 0.5).unwrap();
        let calibration = ranging::calibrate(&obs).unwrap();
        for (id, fit) in &calibration.per_anchor {
            let truth = scenario.anchor_set.get(*id).unwrap();
            assert!((fit.alpha / truth.alpha - 1.0).abs() < 1e-9);
            assert!((fit.beta / truth.beta - 1.0).abs() < 1e-9);
        }
        let estimator =
            PositionEstimator::new(&scenario.anchor_set, &scenario.adc, calibration, SolverConfig::default()).unwrap();
        let truth = Point2::new(1.367, 2.360);
        let fix = estimator.fix_at(&scenario, &truth, 3.0).unwrap();
        assert!((fix.position() - truth).norm() < 1e-6, "{fix:?}");
        assert_eq!(fix.timestamp, 3.0);
    }

    #[test]
    fn missing_calibration_is_rejected() {
        let scenario = SimScenario::exact();
        let err = PositionEstimator::new(
            &scenario.anchor_set,
            &scenario.adc,
            CalibrationResult::default(),
            SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ChainError::Ranging(RangingError::MissingCalibration(_))));
    }
}
