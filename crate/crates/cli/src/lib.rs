//! `voxcast` command line.
//!
//! Exit codes: 0 success, 1 domain error (JSON on stderr), 2 usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use voxcast_core::blockgrid::{cull_empty, decompose, BlockStats, DEFAULT_BLOCK_SIZE, DEFAULT_OVERLAP};
use voxcast_core::classification::{build_lut, DEFAULT_LUT_BINS};
use voxcast_core::image::ImageRgba;
use voxcast_core::ingest::{generate_phantom, load_raw, PhantomKind, SampleFormat};
use voxcast_core::quality::{compare, convergence_study};
use voxcast_core::request::RequestError;
use voxcast_core::{
    Camera, RenderRequest, RenderSettings, RenderStats, Renderer, ScalarVolume, TransferFunctionSpec, VolumeManifest,
    VolumeSource,
};
use voxcast_morphology::{io as mesh_io, svr_field, QueryPoints, SvrParams, TriangleMesh};
use voxcast_service::upload::volume_from_dicom_files;
use voxcast_service::{ServiceConfig, VolumeStore};

#[derive(Debug, Parser)]
#[command(
    name = "voxcast",
    version,
    about = "CT volume ray casting, quality studies and SVR morphology"
)]
pub struct Cli {
    /// Worker threads for rendering and sampling (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load DICOM slices, a raw dump or a phantom into a volume store.
    Ingest(IngestArgs),
    /// Render a stored volume to PNG or PPM.
    Render(RenderArgs),
    /// Compare two images (PSNR, SSIM).
    Quality(QualityArgs),
    /// Block statistics and render timings, or a step-size convergence study.
    Bench(BenchArgs),
    /// Surface-to-volume ratio field of a closed mesh.
    Svr(SvrArgs),
    /// Run the HTTP render service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, group = "input")]
    pub dicom_dir: Option<PathBuf>,
    #[arg(long, group = "input", requires_all = ["dims", "spacing", "format"])]
    pub raw: Option<PathBuf>,
    #[arg(long, group = "input", requires = "dims")]
    pub phantom: Option<PhantomArg>,
    /// `N` for a cube or `NX,NY,NZ`.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<[usize; 3]>,
    /// `S` or `SX,SY,SZ` in mm.
    #[arg(long, value_parser = parse_spacing)]
    pub spacing: Option<[f64; 3]>,
    #[arg(long)]
    pub format: Option<FormatArg>,
    /// Store directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PhantomArg {
    Sphere,
    Shell,
    Torso,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    U8,
    I16,
    U16,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, default_value = "voxcast-data")]
    pub store: PathBuf,
    #[arg(long)]
    pub volume: String,
    /// Complete request document (camera, transfer_function, settings).
    #[arg(long, conflicts_with_all = ["camera", "tf", "settings"])]
    pub request: Option<PathBuf>,
    #[arg(long, required_unless_present = "request")]
    pub camera: Option<PathBuf>,
    /// Preset name or path to a transfer-function JSON file.
    #[arg(long)]
    pub tf: Option<String>,
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Output image; `.ppm` selects PPM, anything else PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QualityArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Study {
    Steps,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "voxcast-data")]
    pub store: PathBuf,
    #[arg(long)]
    pub volume: String,
    #[arg(long)]
    pub study: Option<Study>,
    /// Step multipliers of the minimum voxel spacing, descending.
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 1.0, 0.5, 0.25])]
    pub steps: Vec<f64>,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long, default_value = "bone")]
    pub tf: String,
    #[arg(long)]
    pub settings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block_size: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PointsArg {
    Vertices,
    Centroids,
}

#[derive(Debug, Args)]
pub struct SvrArgs {
    /// Closed triangle mesh (.stl or .off).
    #[arg(long)]
    pub mesh: PathBuf,
    /// Ball radius in mesh units; repeat for a sweep.
    #[arg(long, required = true)]
    pub radius: Vec<f64>,
    /// CSV output; sweeps insert `-r<R>` before the extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ply: Option<PathBuf>,
    #[arg(long, default_value_t = SvrParams::default().samples_per_triangle)]
    pub samples_per_triangle: usize,
    #[arg(long, default_value_t = SvrParams::default().volume_samples)]
    pub volume_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PointsArg::Vertices)]
    pub at: PointsArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VOXCAST_HOST", default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "VOXCAST_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "VOXCAST_DATA_DIR", default_value = "voxcast-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "VOXCAST_CACHE_SIZE", default_value_t = voxcast_service::store::DEFAULT_CACHE_SIZE)]
    pub cache_size: usize,
    /// Upload size cap in bytes.
    #[arg(long, env = "VOXCAST_UPLOAD_CAP", default_value_t = voxcast_service::server::DEFAULT_UPLOAD_CAP)]
    pub upload_cap: usize,
    #[arg(long, env = "VOXCAST_QUEUE_BOUND", default_value_t = voxcast_service::server::DEFAULT_QUEUE_BOUND)]
    pub queue_bound: usize,
}

fn parse_triple<T: std::str::FromStr + Copy>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err("expected one value or three comma-separated values".into()),
    }
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    parse_triple(s)
}

fn parse_spacing(s: &str) -> Result<[f64; 3], String> {
    parse_triple(s)
}

/// A domain failure: a stable code plus a human message.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.code, "message": self.message}).to_string()
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(
    voxcast_core::IngestError,
    voxcast_core::RenderError,
    RequestError,
    voxcast_core::quality::QualityError,
    voxcast_service::StoreError,
    voxcast_service::UploadError,
    voxcast_morphology::MeshError
);

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::new("Io", format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_err(path))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::new("InvalidJson", format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            let _ = std::io::stdout().write_all(text.as_bytes());
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        // Fails only if the pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Render(a) => render(a),
        Command::Quality(a) => quality(a),
        Command::Bench(a) => bench(a),
        Command::Svr(a) => svr(a),
        Command::Serve(a) => serve(a),
    }
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let (vol, source) = if let Some(dir) = &a.dicom_dir {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let files = paths.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
        (volume_from_dicom_files(&files)?, VolumeSource::Dicom)
    } else if let Some(path) = &a.raw {
        let format = match a.format.expect("required by clap") {
            FormatArg::U8 => SampleFormat::U8,
            FormatArg::I16 => SampleFormat::I16,
            FormatArg::U16 => SampleFormat::U16,
        };
        let vol = load_raw(
            &read(path)?,
            a.dims.expect("required"),
            a.spacing.expect("required"),
            format,
        )?;
        (vol, VolumeSource::Raw)
    } else if let Some(kind) = a.phantom {
        let kind = match kind {
            PhantomArg::Sphere => PhantomKind::Sphere,
            PhantomArg::Shell => PhantomKind::Shell,
            PhantomArg::Torso => PhantomKind::Torso,
        };
        let dims = a.dims.expect("required by clap");
        // Validates dims before the generator runs.
        ScalarVolume::new(dims, [1.0; 3], vec![0; dims.iter().product()])?;
        (generate_phantom(kind, dims), VolumeSource::Phantom)
    } else {
        return Err(CliError::new(
            "MissingInput",
            "one of --dicom-dir, --raw or --phantom is required",
        ));
    };
    let manifest = VolumeStore::open(&a.out, 1)?.insert(vol, source)?;
    emit(None, &to_json(&manifest))
}

fn load_volume(store: &Path, id: &str) -> Result<(VolumeManifest, Arc<ScalarVolume>), CliError> {
    let store = VolumeStore::open(store, 1)?;
    Ok((store.manifest(id)?, store.get(id)?))
}

fn tf_spec(arg: &str) -> Result<TransferFunctionSpec, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        read_json(path)
    } else {
        Ok(TransferFunctionSpec::Preset(arg.to_string()))
    }
}

fn render_request(a: &RenderArgs) -> Result<RenderRequest, CliError> {
    if let Some(p) = &a.request {
        return read_json(p);
    }
    Ok(RenderRequest {
        camera: read_json(a.camera.as_deref().expect("required by clap"))?,
        transfer_function: a.tf.as_deref().map(tf_spec).transpose()?.unwrap_or_default(),
        settings: a.settings.as_deref().map(read_json).transpose()?.unwrap_or_default(),
    })
}

fn render(a: RenderArgs) -> Result<(), CliError> {
    let request = render_request(&a)?;
    request.validate()?;
    let (_, vol) = load_volume(&a.store, &a.volume)?;
    let (bytes, stats) = if a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
        let image = request.execute(&vol)?;
        (image.encode_ppm(), image.stats)
    } else {
        voxcast_service::render_png(&request, &vol)?
    };
    write(&a.out, &bytes)?;
    if let Some(p) = &a.stats {
        write(p, to_json(&stats).as_bytes())?;
    }
    Ok(())
}

fn read_image(path: &Path) -> Result<ImageRgba, CliError> {
    let bytes = read(path)?;
    let decoded = if bytes.starts_with(b"P6") {
        ImageRgba::decode_ppm(&bytes)
    } else {
        ImageRgba::decode_png(&bytes)
    };
    decoded.map_err(|e| CliError::new("ImageDecode", format!("{}: {e}", path.display())))
}

fn quality(a: QualityArgs) -> Result<(), CliError> {
    let report = compare(&read_image(&a.reference)?, &read_image(&a.test)?)?;
    emit(a.out.as_deref(), &to_json(&report))
}

/// Three-quarter view of the whole volume.
pub fn default_camera(vol: &ScalarVolume, size: u32) -> Camera {
    let extent = vol.extent_mm();
    let diag = extent.iter().map(|e| e * e).sum::<f64>().sqrt();
    Camera::orbit(vol.center_mm(), [0.4, -0.6, 0.7], 1.6 * diag, 40.0, [size, size])
}

#[derive(Serialize)]
struct BenchTiming {
    wall_time_ms: f64,
    stats: RenderStats,
}

#[derive(Serialize)]
struct BenchReport {
    volume: VolumeManifest,
    transfer_function: String,
    blocks: BlockStats,
    monolithic: BenchTiming,
    blocked: BenchTiming,
}

fn bench(a: BenchArgs) -> Result<(), CliError> {
    let (manifest, vol) = load_volume(&a.store, &a.volume)?;
    let tf = tf_spec(&a.tf)?.resolve().map_err(RequestError::from)?;
    let camera = match &a.camera {
        Some(p) => read_json(p)?,
        None => default_camera(&vol, 256),
    };
    let settings: RenderSettings = a.settings.as_deref().map(read_json).transpose()?.unwrap_or_default();
    if let Some(Study::Steps) = a.study {
        let spacing = vol.min_spacing();
        let steps: Vec<f64> = a.steps.iter().map(|m| m * spacing).collect();
        let table = convergence_study(&vol, &camera, &tf, &settings, &steps)?;
        return emit(a.out.as_deref(), &table.to_csv());
    }
    let grid = decompose(&vol, a.block_size, a.overlap).map_err(voxcast_core::RenderError::from)?;
    let blocks = cull_empty(grid, &build_lut(&tf, DEFAULT_LUT_BINS)).stats();
    let timed = |use_blocks: bool| -> Result<BenchTiming, CliError> {
        let s = RenderSettings {
            use_blocks,
            block_size: a.block_size,
            block_overlap: a.overlap,
            ..settings.clone()
        };
        let image = Renderer::<f32>::new(&vol, &tf, &s)?.render(&camera)?;
        Ok(BenchTiming {
            wall_time_ms: image.stats.wall_time_ms,
            stats: image.stats,
        })
    };
    let report = BenchReport {
        volume: manifest,
        transfer_function: a.tf.clone(),
        blocks,
        monolithic: timed(false)?,
        blocked: timed(true)?,
    };
    emit(a.out.as_deref(), &to_json(&report))
}

fn read_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    let bytes = read(path)?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    Ok(match ext.as_str() {
        "off" => mesh_io::read_off(&String::from_utf8_lossy(&bytes))?,
        "stl" => mesh_io::read_stl(&bytes)?,
        other => {
            return Err(CliError::new(
                "UnsupportedMeshFormat",
                format!("extension {other:?} (expected stl or off)"),
            ))
        }
    })
}

fn with_radius_suffix(path: &Path, radius: f64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-r{radius}.{ext}"),
        None => format!("{stem}-r{radius}"),
    };
    path.with_file_name(name)
}

fn svr(a: SvrArgs) -> Result<(), CliError> {
    let mesh = read_mesh(&a.mesh)?;
    let params = SvrParams {
        samples_per_triangle: a.samples_per_triangle,
        volume_samples: a.volume_samples,
        rng_seed: a.seed,
    };
    let points = match a.at {
        PointsArg::Vertices => QueryPoints::Vertices,
        PointsArg::Centroids => QueryPoints::Centroids,
    };
    let sweep = a.radius.len() > 1;
    for &r in &a.radius {
        let field = svr_field(&mesh, r, params, points)?;
        let out = if sweep {
            with_radius_suffix(&a.out, r)
        } else {
            a.out.clone()
        };
        write(&out, field.to_csv().as_bytes())?;
        if let Some(ply) = &a.ply {
            let ply = if sweep { with_radius_suffix(ply, r) } else { ply.clone() };
            write(&ply, mesh_io::write_ply_with_field(&mesh, &field)?.as_bytes())?;
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        addr: std::net::SocketAddr::new(a.host, a.port),
        data_dir: a.data_dir,
        cache_size: a.cache_size,
        upload_cap: a.upload_cap,
        queue_bound: a.queue_bound,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("Io", e.to_string()))?;
    runtime
        .block_on(voxcast_service::serve(config))
        .map_err(|e| CliError::new("Io", e.to_string()))
}
