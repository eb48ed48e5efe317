use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::blockgrid::{DEFAULT_BLOCK_SIZE, DEFAULT_OVERLAP, MIN_BLOCK_SIZE};
use crate::classification::Classification;
use crate::sampling::Interpolation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    #[default]
    Dvr,
    Isosurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub mode: RenderMode,
    /// Sampling distance in mm; half the smallest voxel spacing when absent.
    pub step: Option<f64>,
    pub classification: Classification,
    pub interpolation: Interpolation,
    pub lighting: bool,
    pub early_termination_alpha: f64,
    pub isovalue: Option<f64>,
    /// Straight-alpha RGBA in `[0, 1]`.
    pub background: [f64; 4],
    pub use_blocks: bool,
    pub empty_space_skipping: bool,
    pub block_size: usize,
    pub block_overlap: usize,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            mode: RenderMode::Dvr,
            step: None,
            classification: Classification::Post,
            interpolation: Interpolation::Tricubic,
            lighting: true,
            early_termination_alpha: 0.99,
            isovalue: None,
            background: [0.0, 0.0, 0.0, 1.0],
            use_blocks: false,
            empty_space_skipping: true,
            block_size: DEFAULT_BLOCK_SIZE,
            block_overlap: DEFAULT_OVERLAP,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        let invalid = |field: &'static str, message: String| Err(RenderError::InvalidSettings { field, message });
        if let Some(step) = self.step {
            if !(step.is_finite() && step > 0.0) {
                return invalid("step", format!("must be a positive finite length, got {step}"));
            }
        }
        let et = self.early_termination_alpha;
        if !(et > 0.0 && et <= 1.0) {
            return invalid("early_termination_alpha", format!("must lie in (0, 1], got {et}"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return invalid("background", "channels must lie in [0, 1]".into());
        }
        if self.mode == RenderMode::Isosurface {
            match self.isovalue {
                None => return invalid("isovalue", "required in isosurface mode".into()),
                Some(v) if !v.is_finite() => return invalid("isovalue", "must be finite".into()),
                _ => {}
            }
        }
        if self.use_blocks
            && (self.block_size < MIN_BLOCK_SIZE || self.block_overlap < 1 || self.block_overlap >= self.block_size)
        {
            return invalid(
                "block_size",
                format!(
                    "block size {} with overlap {} (need size ≥ {MIN_BLOCK_SIZE} and 1 ≤ overlap < size)",
                    self.block_size, self.block_overlap
                ),
            );
        }
        Ok(())
    }

    /// Sampling distance for a volume with the given smallest spacing.
    pub fn resolved_step(&self, min_spacing: f64) -> f64 {
        self.step.unwrap_or(0.5 * min_spacing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_json() {
        let s: RenderSettings = serde_json::from_str("{}").unwrap();
        assert_eq!(s, RenderSettings::default());
        assert_eq!(s.resolved_step(0.8), 0.4);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RenderSettings>(r#"{"stepp": 1}"#).is_err());
    }

    #[test]
    fn validation() {
        let bad = |s: RenderSettings| s.validate().unwrap_err();
        let field = |e: RenderError| match e {
            RenderError::InvalidSettings { field, .. } => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(
            field(bad(RenderSettings {
                step: Some(0.0),
                ..Default::default()
            })),
            "step"
        );
        assert_eq!(
            field(bad(RenderSettings {
                early_termination_alpha: 0.0,
                ..Default::default()
            })),
            "early_termination_alpha"
        );
        assert_eq!(
            field(bad(RenderSettings {
                mode: RenderMode::Isosurface,
                ..Default::default()
            })),
            "isovalue"
        );
        assert_eq!(
            field(bad(RenderSettings {
                use_blocks: true,
                block_overlap: 0,
                ..Default::default()
            })),
            "block_size"
        );
        assert!(RenderSettings {
            early_termination_alpha: 1.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
    }
}
