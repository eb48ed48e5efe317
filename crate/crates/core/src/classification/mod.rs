//! Transfer functions and the three classification schemes: post-
//! classification through a lookup table, pre-classified RGBA volumes, and
//! pre-integrated segment tables.

mod lut;
mod preintegrated;
mod transfer;

use serde::{Deserialize, Serialize};

pub use lut::{build_lut, preclassify_volume, ClassifiedLut, RgbaVolume, DEFAULT_LUT_BINS};
pub use preintegrated::{
    build_preintegrated, build_preintegrated_with, PreintegratedTable, DEFAULT_SUBSTEPS, DEFAULT_TABLE_BINS,
};
pub use transfer::{ControlPoint, TransferFunction, TransferFunctionError, CT_DOMAIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    /// Interpolate the scalar, then apply the transfer function.
    #[default]
    Post,
    /// Apply the transfer function per voxel, then interpolate colours.
    Pre,
    /// Look up segment integrals between consecutive samples.
    Preintegrated,
}
