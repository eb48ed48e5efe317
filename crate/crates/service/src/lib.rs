//! Stateless HTTP render service.
//!
//! Volumes are uploaded once and stored by content hash; every render is a
//! pure function of the stored voxels and the JSON request body.

pub mod server;
pub mod store;
pub mod upload;

pub use server::{router, serve, AppState, ServiceConfig, STATS_HEADER};
pub use store::{StoreError, VolumeStore};
pub use upload::UploadError;

use voxcast_core::request::RequestError;
use voxcast_core::{RenderRequest, RenderStats, ScalarVolume};

/// Renders a request to PNG bytes. Shared by the service and the CLI so both
/// paths emit identical files.
pub fn render_png(request: &RenderRequest, vol: &ScalarVolume) -> Result<(Vec<u8>, RenderStats), RequestError> {
    let image = request.execute(vol)?;
    Ok((image.encode_png(), image.stats))
}
