use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CT code range covered by the presets and by default LUTs: 4096 codes.
pub const CT_DOMAIN: (f64, f64) = (-1024.0, 3071.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransferFunctionError {
    #[error("transfer function needs at least one control point")]
    Empty,
    #[error("control point values must be strictly increasing (index {index})")]
    NotIncreasing { index: usize },
    #[error("control point {index} has a channel outside [0, 1]")]
    ChannelOutOfRange { index: usize },
    #[error("domain must satisfy lo < hi, got ({lo}, {hi})")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub value: f64,
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub opacity: f64,
}

impl ControlPoint {
    pub const fn new(value: f64, r: f64, g: f64, b: f64, opacity: f64) -> Self {
        Self {
            value,
            r,
            g,
            b,
            opacity,
        }
    }

    fn rgba(&self) -> [f64; 4] {
        [self.r, self.g, self.b, self.opacity]
    }
}

/// Piecewise-linear mapping from scalar value to straight-alpha RGBA.
///
/// Opacity is the opacity of one reference-length ray segment; renderers
/// rescale it for other step lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferFunctionDoc", into = "TransferFunctionDoc")]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
    domain: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct TransferFunctionDoc {
    #[serde(default = "default_domain")]
    domain: (f64, f64),
    control_points: Vec<ControlPoint>,
}

fn default_domain() -> (f64, f64) {
    CT_DOMAIN
}

impl TryFrom<TransferFunctionDoc> for TransferFunction {
    type Error = TransferFunctionError;

    fn try_from(doc: TransferFunctionDoc) -> Result<Self, Self::Error> {
        TransferFunction::new(doc.control_points, doc.domain)
    }
}

impl From<TransferFunction> for TransferFunctionDoc {
    fn from(tf: TransferFunction) -> Self {
        Self {
            domain: tf.domain,
            control_points: tf.points,
        }
    }
}

impl TransferFunction {
    pub fn new(points: Vec<ControlPoint>, domain: (f64, f64)) -> Result<Self, TransferFunctionError> {
        if points.is_empty() {
            return Err(TransferFunctionError::Empty);
        }
        if !(domain.0 < domain.1) || !domain.0.is_finite() || !domain.1.is_finite() {
            return Err(TransferFunctionError::InvalidDomain {
                lo: domain.0,
                hi: domain.1,
            });
        }
        for (index, p) in points.iter().enumerate() {
            if !p.value.is_finite() {
                return Err(TransferFunctionError::NotIncreasing { index });
            }
            if p.rgba().iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(TransferFunctionError::ChannelOutOfRange { index });
            }
            if index > 0 && !(points[index - 1].value < p.value) {
                return Err(TransferFunctionError::NotIncreasing { index });
            }
        }
        Ok(Self { points, domain })
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Exact piecewise-linear evaluation, clamped to the end points.
    pub fn eval(&self, s: f64) -> [f64; 4] {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if s <= first.value {
            return first.rgba();
        }
        if s >= last.value {
            return last.rgba();
        }
        let hi = pts.partition_point(|p| p.value <= s);
        let (a, b) = (pts[hi - 1], pts[hi]);
        let t = (s - a.value) / (b.value - a.value);
        let (ca, cb) = (a.rgba(), b.rgba());
        [0, 1, 2, 3].map(|c| ca[c] + t * (cb[c] - ca[c]))
    }

    pub fn preset(name: &str) -> Result<Self, TransferFunctionError> {
        let points: &[ControlPoint] = match name {
            "bone" => &BONE,
            "soft-tissue" => &SOFT_TISSUE,
            "grayscale" => &GRAYSCALE,
            other => return Err(TransferFunctionError::UnknownPreset(other.to_string())),
        };
        Self::new(points.to_vec(), CT_DOMAIN)
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["bone", "soft-tissue", "grayscale"]
    }
}

const BONE: [ControlPoint; 5] = [
    ControlPoint::new(-1024.0, 0.0, 0.0, 0.0, 0.0),
    ControlPoint::new(150.0, 0.55, 0.35, 0.25, 0.0),
    ControlPoint::new(400.0, 0.9, 0.82, 0.66, 0.3),
    ControlPoint::new(800.0, 1.0, 0.97, 0.9, 0.8),
    ControlPoint::new(3071.0, 1.0, 1.0, 1.0, 0.9),
];

const SOFT_TISSUE: [ControlPoint; 7] = [
    ControlPoint::new(-1024.0, 0.0, 0.0, 0.0, 0.0),
    ControlPoint::new(-350.0, 0.55, 0.25, 0.2, 0.0),
    ControlPoint::new(-100.0, 0.75, 0.42, 0.32, 0.015),
    ControlPoint::new(80.0, 0.88, 0.6, 0.5, 0.04),
    ControlPoint::new(300.0, 0.93, 0.85, 0.74, 0.2),
    ControlPoint::new(900.0, 1.0, 0.98, 0.92, 0.8),
    ControlPoint::new(3071.0, 1.0, 1.0, 1.0, 0.9),
];

const GRAYSCALE: [ControlPoint; 2] = [
    ControlPoint::new(-1024.0, 0.0, 0.0, 0.0, 0.0),
    ControlPoint::new(3071.0, 1.0, 1.0, 1.0, 1.0),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let p = |v| ControlPoint::new(v, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            TransferFunction::new(vec![], CT_DOMAIN),
            Err(TransferFunctionError::Empty)
        );
        assert_eq!(
            TransferFunction::new(vec![p(1.0), p(1.0)], CT_DOMAIN),
            Err(TransferFunctionError::NotIncreasing { index: 1 })
        );
        assert_eq!(
            TransferFunction::new(vec![ControlPoint::new(0.0, 1.5, 0.0, 0.0, 0.0)], CT_DOMAIN),
            Err(TransferFunctionError::ChannelOutOfRange { index: 0 })
        );
        assert!(matches!(
            TransferFunction::new(vec![p(0.0)], (3.0, 3.0)),
            Err(TransferFunctionError::InvalidDomain { .. })
        ));
    }

    #[test]
    fn presets_hide_air() {
        for name in ["bone", "soft-tissue"] {
            let tf = TransferFunction::preset(name).unwrap();
            assert_eq!(tf.eval(-1000.0)[3], 0.0, "{name}");
        }
        for name in ["bone", "soft-tissue"] {
            let tf = TransferFunction::preset(name).unwrap();
            assert_eq!(tf.eval(-750.0)[3], 0.0, "{name} shows lung");
            assert!(tf.eval(1000.0)[3] > 0.5);
        }
        assert!(TransferFunction::preset("rainbow").is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let tf = TransferFunction::preset("bone").unwrap();
        let text = serde_json::to_string(&tf).unwrap();
        assert_eq!(serde_json::from_str::<TransferFunction>(&text).unwrap(), tf);
        let bad = r#"{"control_points":[{"value":5,"r":0,"g":0,"b":0,"opacity":0},{"value":1,"r":0,"g":0,"b":0,"opacity":0}]}"#;
        assert!(serde_json::from_str::<TransferFunction>(bad).is_err());
    }

    #[test]
    fn evaluation_interpolates_and_clamps() {
        let tf = TransferFunction::new(
            vec![
                ControlPoint::new(0.0, 0.0, 0.0, 0.0, 0.0),
                ControlPoint::new(100.0, 1.0, 1.0, 1.0, 1.0),
            ],
            (0.0, 100.0),
        )
        .unwrap();
        assert_eq!(tf.eval(25.0), [0.25; 4]);
        assert_eq!(tf.eval(-40.0), [0.0; 4]);
        assert_eq!(tf.eval(400.0), [1.0; 4]);
    }
}
