//! Shared domain types and the embedded survey dataset.
//!
//! Everything here is a plain value: SI units throughout (meters, hertz,
//! volts, seconds), with the unit carried in the field docs rather than the
//! type system.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planar position in the local survey frame, meters.
pub type Point2 = Vector2<f64>;
/// Position in the local survey frame, meters.
pub type Point3 = Vector3<f64>;

/// Transmitter tone frequencies of the deployed anchors, hertz.
pub const TONE_FREQUENCIES: [f64; 4] = [34482.7, 35398.2, 36144.5, 36922.8];

/// Largest allowed difference between a datum point and its repeat
/// measurement, meters.
pub const DATUM_REPEATABILITY: f64 = 0.002;

const SURVEY_TABLE: &str = include_str!("../data/survey_table_v1.txt");

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("anchor {id}: {reason}")]
    InvalidAnchor { id: AnchorId, reason: &'static str },
    #[error("anchor set: {0}")]
    InvalidAnchorSet(String),
    #[error("survey table line {line}: {reason}")]
    MalformedSurvey { line: usize, reason: String },
    #[error("survey table: {0}")]
    InvalidSurvey(String),
    #[error("invalid distance for anchor {0}")]
    InvalidDistance(AnchorId),
}

/// Anchor identifier, a single letter (`A`, `B`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnchorId(pub char);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for AnchorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => Ok(AnchorId(c.to_ascii_uppercase())),
            _ => Err(format!("invalid anchor id `{s}`")),
        }
    }
}

/// A transmitter at a surveyed position emitting a single tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: AnchorId,
    /// Coil center, meters.
    pub position: Point3,
    /// Tone frequency, hertz.
    pub frequency: f64,
    /// Power-law gain, volts·meter^beta.
    pub alpha: f64,
    /// Power-law exponent.
    pub beta: f64,
}

impl Anchor {
    pub fn new(
        id: AnchorId,
        position: Point3,
        frequency: f64,
        alpha: f64,
        beta: f64,
    ) -> Result<Self, DomainError> {
        let anchor = Anchor { id, position, frequency, alpha, beta };
        anchor.validate()?;
        Ok(anchor)
    }

    fn validate(&self) -> Result<(), DomainError> {
        let bad = |reason| Err(DomainError::InvalidAnchor { id: self.id, reason });
        if !self.position.iter().all(|c| c.is_finite()) {
            return bad("position must be finite");
        }
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return bad("frequency must be positive");
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        Ok(())
    }

    /// Anchor position in the 2-D reference plane.
    pub fn planar(&self) -> Point2 {
        self.position.xy()
    }
}

/// Ordered set of anchors sharing one horizontal reference plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
    /// z of the first anchor's plane, meters.
    pub reference_plane_z: f64,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, DomainError> {
        let first = anchors
            .first()
            .ok_or_else(|| DomainError::InvalidAnchorSet("no anchors".into()))?;
        let reference_plane_z = first.position.z;
        for anchor in &anchors {
            anchor.validate()?;
        }
        for (i, a) in anchors.iter().enumerate() {
            for b in &anchors[i + 1..] {
                if a.id == b.id {
                    return Err(DomainError::InvalidAnchorSet(format!("duplicate id {}", a.id)));
                }
                if a.frequency == b.frequency {
                    return Err(DomainError::InvalidAnchorSet(format!(
                        "anchors {} and {} share frequency {}",
                        a.id, b.id, a.frequency
                    )));
                }
                if a.planar() == b.planar() {
                    return Err(DomainError::InvalidAnchorSet(format!(
                        "anchors {} and {} share a planar position",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(AnchorSet { anchors, reference_plane_z })
    }

    /// The four surveyed datum anchors with the deployed tone plan and the
    /// given power-law constants (one `(alpha, beta)` per anchor, A..D).
    pub fn surveyed(constants: [(f64, f64); 4]) -> Self {
        let survey = load_survey_table().expect("embedded survey table is valid");
        let anchors = survey
            .datum
            .iter()
            .zip(TONE_FREQUENCIES)
            .zip(constants)
            .map(|((point, frequency), (alpha, beta))| {
                let id = point.label.parse().expect("datum labels are anchor ids");
                Anchor::new(id, point.position, frequency, alpha, beta)
            })
            .collect::<Result<Vec<_>, _>>()
            .expect("surveyed anchors are valid");
        AnchorSet::new(anchors).expect("surveyed anchor set is valid")
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Anchor> {
        self.anchors.iter()
    }

    pub fn get(&self, id: AnchorId) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.id == id)
    }

    pub fn ids(&self) -> Vec<AnchorId> {
        self.anchors.iter().map(|a| a.id).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| a.frequency).collect()
    }

    /// Planar anchor positions, in set order.
    pub fn polygon(&self) -> Vec<Point2> {
        self.anchors.iter().map(Anchor::planar).collect()
    }

    /// Returns a copy with every anchor's power-law constants replaced.
    pub fn with_constants(&self, constants: &BTreeMap<AnchorId, (f64, f64)>) -> Result<Self, DomainError> {
        let anchors = self
            .anchors
            .iter()
            .map(|a| {
                let (alpha, beta) = constants.get(&a.id).copied().unwrap_or((a.alpha, a.beta));
                Anchor::new(a.id, a.position, a.frequency, alpha, beta)
            })
            .collect::<Result<Vec<_>, _>>()?;
        AnchorSet::new(anchors)
    }

    pub fn project(&self, point: &Point3) -> Point2 {
        project_to_reference_plane(point, self)
    }
}

impl<'a> IntoIterator for &'a AnchorSet {
    type Item = &'a Anchor;
    type IntoIter = std::slice::Iter<'a, Anchor>;

    fn into_iter(self) -> Self::IntoIter {
        self.anchors.iter()
    }
}

/// Projects a surveyed point onto the horizontal plane of the first anchor.
///
/// The plane is taken as horizontal, so this keeps `(x, y)` and drops `z`.
pub fn project_to_reference_plane(point: &Point3, _anchor_set: &AnchorSet) -> Point2 {
    point.xy()
}

/// One digitized acquisition window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Volts.
    pub samples: Vec<f64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// ADC resolution; `None` for an ideal, unquantized converter.
    pub adc_bits: Option<u32>,
    /// Peak-to-peak input range, volts.
    pub full_scale: f64,
    /// Acquisition start, seconds.
    pub timestamp: f64,
}

impl SampleRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Record span, seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    /// Tone amplitude per anchor, volts.
    pub per_anchor: BTreeMap<AnchorId, f64>,
    pub dc: f64,
    pub residual_rms: f64,
    pub condition_number: f64,
}

/// Measured anchor distances, meters. Anchors absent from the map have no
/// valid measurement for this fix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    per_anchor: BTreeMap<AnchorId, f64>,
}

impl DistanceEstimate {
    pub fn new(per_anchor: BTreeMap<AnchorId, f64>) -> Result<Self, DomainError> {
        for (&id, &d) in &per_anchor {
            if !(d.is_finite() && d > 0.0) {
                return Err(DomainError::InvalidDistance(id));
            }
        }
        Ok(DistanceEstimate { per_anchor })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (AnchorId, f64)>) -> Result<Self, DomainError> {
        Self::new(pairs.into_iter().collect())
    }

    pub fn get(&self, id: AnchorId) -> Option<f64> {
        self.per_anchor.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.per_anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_anchor.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AnchorId, f64)> + '_ {
        self.per_anchor.iter().map(|(&id, &d)| (id, d))
    }
}

/// A 2-D position estimate with solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub x: f64,
    pub y: f64,
    pub timestamp: f64,
    pub iterations: usize,
    /// Sum of squared range residuals at the solution, m².
    pub final_cost: f64,
    pub converged: bool,
}

impl PositionFix {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyPoint {
    pub label: String,
    pub position: Point3,
}

/// The geodetic survey of the test area.
///
/// Control points are kept exactly as printed; there is no `P13`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyTable {
    /// A, B, C, D.
    pub datum: Vec<SurveyPoint>,
    /// A*, B*, C*, D*, measured at the end of the survey.
    pub datum_repeat: Vec<SurveyPoint>,
    /// C1..C5.
    pub calibration: Vec<SurveyPoint>,
    /// P01..P27 as printed.
    pub control: Vec<SurveyPoint>,
}

pub fn load_survey_table() -> Result<SurveyTable, DomainError> {
    SurveyTable::parse(SURVEY_TABLE)
}

impl SurveyTable {
    pub fn parse(text: &str) -> Result<Self, DomainError> {
        let mut table = SurveyTable {
            datum: Vec::new(),
            datum_repeat: Vec::new(),
            calibration: Vec::new(),
            control: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| DomainError::MalformedSurvey { line: idx + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(malformed(format!("expected 4 fields, found {}", fields.len())));
            }
            let mut coords = [0.0; 3];
            for (slot, field) in coords.iter_mut().zip(&fields[1..]) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| malformed(format!("bad coordinate `{field}`")))?;
            }
            let label = fields[0].to_string();
            let point = SurveyPoint { position: Point3::from(coords), label };
            let bucket = match point.label.as_bytes() {
                [b'A'..=b'Z'] => &mut table.datum,
                [b'A'..=b'Z', b'*'] => &mut table.datum_repeat,
                [b'C', rest @ ..] if !rest.is_empty() && rest.iter().all(u8::is_ascii_digit) => {
                    &mut table.calibration
                }
                [b'P', rest @ ..] if !rest.is_empty() && rest.iter().all(u8::is_ascii_digit) => {
                    &mut table.control
                }
                _ => return Err(malformed(format!("unknown label `{}`", point.label))),
            };
            bucket.push(point);
        }
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), DomainError> {
        if self.datum.len() < 3 {
            return Err(DomainError::InvalidSurvey("need at least three datum points".into()));
        }
        let mut labels: Vec<&str> = self.points().map(|p| p.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(DomainError::InvalidSurvey("duplicate label".into()));
        }
        for repeat in &self.datum_repeat {
            let base = repeat.label.trim_end_matches('*');
            let original = self
                .get(base)
                .ok_or_else(|| DomainError::InvalidSurvey(format!("{} has no datum point", repeat.label)))?;
            let diff = (repeat.position - original.position).abs().max();
            if diff > DATUM_REPEATABILITY + 1e-9 {
                return Err(DomainError::InvalidSurvey(format!(
                    "datum {base} repeat differs by {diff:.3} m"
                )));
            }
        }
        Ok(())
    }

    /// Largest coordinate difference between a datum point and its repeat.
    pub fn datum_repeatability(&self) -> f64 {
        self.datum_repeat
            .iter()
            .filter_map(|r| {
                let original = self.get(r.label.trim_end_matches('*'))?;
                Some((r.position - original.position).abs().max())
            })
            .fold(0.0, f64::max)
    }

    pub fn points(&self) -> impl Iterator<Item = &SurveyPoint> {
        self.datum
            .iter()
            .chain(&self.calibration)
            .chain(&self.control)
            .chain(&self.datum_repeat)
    }

    pub fn get(&self, label: &str) -> Option<&SurveyPoint> {
        self.points().find(|p| p.label == label)
    }

    /// Serializes in the `label x y z` row format with three decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# format: label x y z\n");
        for p in self.points() {
            out.push_str(&format!(
                "{} {:.3} {:.3} {:.3}\n",
                p.label, p.position.x, p.position.y, p.position.z
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_table_matches_printed_values() {
        let table = load_survey_table().unwrap();
        assert_eq!(table.get("A").unwrap().position, Point3::new(0.000, 0.000, 1.250));
        assert_eq!(table.get("C5").unwrap().position, Point3::new(1.367, 2.360, 1.235));
        assert_eq!(table.get("B").unwrap().position, Point3::new(2.678, 0.000, 1.263));
        assert_eq!(table.datum.len(), 4);
        assert_eq!(table.datum_repeat.len(), 4);
        assert_eq!(table.calibration.len(), 5);
        assert_eq!(table.control.len(), 26);
        assert!(table.get("P13").is_none());
    }

    #[test]
    fn datum_repeatability_within_two_millimeters() {
        let table = load_survey_table().unwrap();
        let a = table.get("A").unwrap().position;
        let a_star = table.get("A*").unwrap().position;
        assert_eq!((a.x - a_star.x).abs(), 0.0);
        assert!(table.datum_repeatability() <= DATUM_REPEATABILITY + 1e-9);
    }

    #[test]
    fn repeatability_violation_is_rejected() {
        let text = "A 0 0 1\nB 1 0 1\nC 1 1 1\nA* 0.010 0 1\n";
        assert!(matches!(SurveyTable::parse(text), Err(DomainError::InvalidSurvey(_))));
    }

    #[test]
    fn malformed_rows_are_rejected() {
        assert!(matches!(
            SurveyTable::parse("A 0 0\n"),
            Err(DomainError::MalformedSurvey { line: 1, .. })
        ));
        assert!(matches!(
            SurveyTable::parse("A 0 x 1\n"),
            Err(DomainError::MalformedSurvey { .. })
        ));
        assert!(matches!(
            SurveyTable::parse("Q7x 0 0 1\n"),
            Err(DomainError::MalformedSurvey { .. })
        ));
    }

    #[test]
    fn projection_drops_height() {
        let set = AnchorSet::surveyed([(1.0, 3.0); 4]);
        assert_eq!(set.project(&Point3::new(1.367, 2.360, 1.235)), Point2::new(1.367, 2.360));
        assert_eq!(set.project(&Point3::new(0.0, 0.0, 1.250)), Point2::new(0.0, 0.0));
        assert_eq!(set.project(&Point3::new(2.678, 0.000, 1.263)), Point2::new(2.678, 0.0));
        assert_eq!(set.reference_plane_z, 1.250);
    }

    #[test]
    fn anchor_set_rejects_duplicates() {
        let a = Anchor::new(AnchorId('A'), Point3::zeros(), 1000.0, 1.0, 3.0).unwrap();
        let mut b = a;
        b.id = AnchorId('B');
        b.position.x = 1.0;
        assert!(AnchorSet::new(vec![a, b]).is_err(), "shared frequency");
        b.frequency = 2000.0;
        b.position.x = 0.0;
        assert!(AnchorSet::new(vec![a, b]).is_err(), "shared position");
        b.position.x = 1.0;
        assert!(AnchorSet::new(vec![a, b]).is_ok());
        let mut c = b;
        c.id = AnchorId('A');
        c.frequency = 3000.0;
        c.position.y = 1.0;
        assert!(AnchorSet::new(vec![a, b, c]).is_err(), "duplicate id");
    }

    #[test]
    fn anchor_constants_must_be_positive() {
        let id = AnchorId('A');
        assert!(Anchor::new(id, Point3::zeros(), 0.0, 1.0, 3.0).is_err());
        assert!(Anchor::new(id, Point3::zeros(), 1.0, -1.0, 3.0).is_err());
        assert!(Anchor::new(id, Point3::zeros(), 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn distance_estimate_rejects_nonpositive() {
        assert!(DistanceEstimate::from_pairs([(AnchorId('A'), 0.0)]).is_err());
        assert!(DistanceEstimate::from_pairs([(AnchorId('A'), f64::NAN)]).is_err());
        assert!(DistanceEstimate::from_pairs([(AnchorId('A'), 1.0)]).is_ok());
    }

    #[test]
    fn anchor_id_parsing() {
        assert_eq!("a".parse::<AnchorId>().unwrap(), AnchorId('A'));
        assert!("AB".parse::<AnchorId>().is_err());
        assert!("".parse::<AnchorId>().is_err());
    }
}
