//! Multi-tone sinefit: linear least squares on a basis of known-frequency
//! cosine/sine pairs plus one shared DC column.
//!
//! The basis is factored once (QR) and shared read-only; each estimate is a
//! single matrix-vector product against `R⁻¹Qᵀ`, which keeps the conditioning
//! of the design matrix rather than squaring it as normal equations would.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::domain::{AmplitudeEstimate, AnchorId, SampleRecord};

/// Bases whose condition number exceeds this are treated as rank deficient.
pub const MAX_CONDITION_NUMBER: f64 = 1e10;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("basis is rank deficient (condition number {condition_number:e})")]
    RankDeficient { condition_number: f64 },
    #[error("record has {actual} samples, basis expects {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("record sample rate {actual} Hz differs from basis rate {expected} Hz")]
    SampleRateMismatch { expected: f64, actual: f64 },
    #[error("{ids} anchor ids given for {tones} tones")]
    AnchorCountMismatch { ids: usize, tones: usize },
    #[error("record contains non-finite samples")]
    NonFiniteSample,
}

#[derive(Debug, Clone)]
pub struct SinefitBasis {
    frequencies: Vec<f64>,
    sample_rate: f64,
    record_length: usize,
    design: DMatrix<f64>,
    pseudo_inverse: DMatrix<f64>,
    condition_number: f64,
}

/// Builds the `record_length × (2K + 1)` design matrix for `K` tones.
///
/// Column `2i` is `cos(2π fᵢ n / fs)`, column `2i + 1` is `sin(2π fᵢ n / fs)`,
/// and the last column is constant.
pub fn build_basis(
    frequencies: &[f64],
    sample_rate: f64,
    record_length: usize,
) -> Result<SinefitBasis, EstimatorError> {
    let invalid = |msg: String| Err(EstimatorError::InvalidBasis(msg));
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return invalid(format!("sample rate {sample_rate} must be positive"));
    }
    let columns = 2 * frequencies.len() + 1;
    if columns > record_length {
        return invalid(format!("{columns} parameters exceed {record_length} samples"));
    }
    if let Some(f) = frequencies
        .iter()
        .find(|&&f| !(f.is_finite() && f > 0.0 && f < sample_rate / 2.0))
    {
        return invalid(format!("frequency {f} Hz outside (0, fs/2)"));
    }

    let design = DMatrix::from_fn(record_length, columns, |n, col| {
        if col == columns - 1 {
            return 1.0;
        }
        let phase = TAU * frequencies[col / 2] * n as f64 / sample_rate;
        if col % 2 == 0 {
            phase.cos()
        } else {
            phase.sin()
        }
    });

    let singular = design.clone().singular_values();
    let (max, min) = singular
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let condition_number = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition_number.is_nan() || condition_number > MAX_CONDITION_NUMBER {
        return Err(EstimatorError::RankDeficient { condition_number });
    }

    let qr = design.clone().qr();
    let pseudo_inverse = qr
        .r()
        .solve_upper_triangular(&qr.q().transpose())
        .ok_or(EstimatorError::RankDeficient { condition_number })?;

    Ok(SinefitBasis {
        frequencies: frequencies.to_vec(),
        sample_rate,
        record_length,
        design,
        pseudo_inverse,
        condition_number,
    })
}

impl SinefitBasis {
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn record_length(&self) -> usize {
        self.record_length
    }

    pub fn tones(&self) -> usize {
        self.frequencies.len()
    }

    /// `(rows, columns)` of the design matrix.
    pub fn shape(&self) -> (usize, usize) {
        self.design.shape()
    }

    pub fn design_matrix(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    fn check(&self, record: &SampleRecord) -> Result<DVector<f64>, EstimatorError> {
        if record.samples.len() != self.record_length {
            return Err(EstimatorError::LengthMismatch {
                expected: self.record_length,
                actual: record.samples.len(),
            });
        }
        if record.sample_rate != self.sample_rate {
            return Err(EstimatorError::SampleRateMismatch {
                expected: self.sample_rate,
                actual: record.sample_rate,
            });
        }
        if record.samples.iter().any(|s| !s.is_finite()) {
            return Err(EstimatorError::NonFiniteSample);
        }
        Ok(DVector::from_column_slice(&record.samples))
    }

    /// Least-squares coefficients `[a₁ b₁ … a_K b_K dc]`.
    pub fn coefficients(&self, record: &SampleRecord) -> Result<DVector<f64>, EstimatorError> {
        let s = self.check(record)?;
        Ok(&self.pseudo_inverse * s)
    }

    /// `s − Φĉ` for the least-squares fit.
    pub fn residual(&self, record: &SampleRecord) -> Result<DVector<f64>, EstimatorError> {
        let s = self.check(record)?;
        let fitted = &self.design * (&self.pseudo_inverse * &s);
        Ok(s - fitted)
    }
}

/// Fits the record and reports one amplitude per tone, `anchor_ids` giving
/// the anchor of each basis frequency in order.
pub fn estimate_amplitudes(
    record: &SampleRecord,
    basis: &SinefitBasis,
    anchor_ids: &[AnchorId],
) -> Result<AmplitudeEstimate, EstimatorError> {
    if anchor_ids.len() != basis.tones() {
        return Err(EstimatorError::AnchorCountMismatch { ids: anchor_ids.len(), tones: basis.tones() });
    }
    let s = basis.check(record)?;
    let c = &basis.pseudo_inverse * &s;
    let residual = &s - &basis.design * &c;
    let residual_rms = (residual.norm_squared() / s.len() as f64).sqrt();

    let per_anchor: BTreeMap<AnchorId, f64> = anchor_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, c[2 * i].hypot(c[2 * i + 1])))
        .collect();

    Ok(AmplitudeEstimate {
        per_anchor,
        dc: c[c.len() - 1],
        residual_rms,
        condition_number: basis.condition_number,
    })
}
