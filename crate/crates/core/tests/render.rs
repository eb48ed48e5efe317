use voxcast_core::classification::{ControlPoint, TransferFunction, CT_DOMAIN};
use voxcast_core::ingest::{generate_phantom, sphere_radius, PhantomKind};
use voxcast_core::raycast::{generate_ray, Camera, RenderError, RenderMode, RenderSettings, Renderer};
use voxcast_core::{Classification, ImageRgba, Interpolation, ScalarVolume};

fn camera(vol: &ScalarVolume, dir: [f64; 3], size: u32) -> Camera {
    let ext = vol.extent_mm();
    let diag = (ext[0] * ext[0] + ext[1] * ext[1] + ext[2] * ext[2]).sqrt();
    Camera::orbit(vol.center_mm(), dir, 1.6 * diag, 40.0, [size, size])
}

fn bone() -> TransferFunction {
    TransferFunction::preset("bone").unwrap()
}

fn max_diff(a: &ImageRgba, b: &ImageRgba) -> u8 {
    a.max_channel_diff(b).expect("same dimensions")
}

fn render(vol: &ScalarVolume, cam: &Camera, tf: &TransferFunction, s: &RenderSettings) -> ImageRgba {
    Renderer::<f32>::new(vol, tf, s).unwrap().render(cam).unwrap()
}

#[test]
fn transparent_tf_yields_background() {
    let vol = generate_phantom(PhantomKind::Torso, [40; 3]);
    let tf = TransferFunction::new(vec![ControlPoint::new(0.0, 1.0, 1.0, 1.0, 0.0)], CT_DOMAIN).unwrap();
    let cam = camera(&vol, [0.2, 0.4, 1.0], 24);
    for use_blocks in [false, true] {
        let s = RenderSettings {
            use_blocks,
            block_size: 16,
            background: [0.2, 0.4, 0.6, 1.0],
            ..Default::default()
        };
        let img = render(&vol, &cam, &tf, &s);
        assert!(img.pixels().chunks_exact(4).all(|p| p == [51, 102, 153, 255]));
        if use_blocks {
            assert_eq!(img.stats.blocks_visited, 0);
            assert_eq!(img.stats.samples_taken, 0);
            assert_eq!(img.stats.blocks_empty, img.stats.blocks_total);
        }
    }
}

#[test]
fn isosurface_hit_matches_sphere_radius() {
    let vol = generate_phantom(PhantomKind::Sphere, [48; 3]);
    let cam = camera(&vol, [0.3, -0.5, 1.0], 9);
    for use_blocks in [false, true] {
        for interpolation in [Interpolation::Trilinear, Interpolation::Tricubic] {
            let s = RenderSettings {
                mode: RenderMode::Isosurface,
                isovalue: Some(0.0),
                interpolation,
                use_blocks,
                block_size: 16,
                ..Default::default()
            };
            let r = Renderer::<f64>::new(&vol, &bone(), &s).unwrap();
            let ray = generate_ray::<f64>(&cam, (4, 4));
            let t = r.isosurface_hit(&ray).expect("central ray hits the sphere");
            let c = voxcast_core::Vec3::from(vol.center_mm());
            // Distance from the eye along the ray to the sphere, analytically.
            let oc = ray.origin - c;
            let b = oc.dot(ray.direction);
            let radius = sphere_radius(vol.dims());
            let want = -b - (b * b - (oc.dot(oc) - radius * radius)).sqrt();
            assert!(
                (t - want).abs() <= 0.25,
                "{interpolation:?} blocks={use_blocks}: {t} vs {want}"
            );
        }
    }
}

#[test]
fn isosurface_is_opaque_over_background() {
    let vol = generate_phantom(PhantomKind::Sphere, [32; 3]);
    let cam = camera(&vol, [0.0, 0.0, 1.0], 32);
    let s = RenderSettings {
        mode: RenderMode::Isosurface,
        isovalue: Some(0.0),
        background: [0.0, 0.0, 0.0, 0.0],
        ..Default::default()
    };
    let img = render(&vol, &cam, &bone(), &s);
    assert_eq!(img.pixel(16, 16)[3], 255);
    assert_eq!(img.pixel(0, 0), [0, 0, 0, 0]);
}

#[test]
fn isovalue_out_of_range() {
    let vol = generate_phantom(PhantomKind::Sphere, [16; 3]);
    let s = RenderSettings {
        mode: RenderMode::Isosurface,
        isovalue: Some(2000.0),
        ..Default::default()
    };
    assert!(matches!(
        Renderer::<f32>::new(&vol, &bone(), &s),
        Err(RenderError::IsovalueOutOfRange { .. })
    ));
}

#[test]
fn invalid_camera_is_rejected() {
    let vol = generate_phantom(PhantomKind::Sphere, [16; 3]);
    let mut cam = camera(&vol, [0.0, 0.0, 1.0], 8);
    cam.vertical_fov = 0.0;
    let r = Renderer::<f32>::new(&vol, &bone(), &RenderSettings::default()).unwrap();
    assert!(matches!(r.render(&cam), Err(RenderError::InvalidSettings { .. })));
}

fn all_modes() -> Vec<RenderSettings> {
    let mut out = Vec::new();
    for classification in [Classification::Post, Classification::Pre, Classification::Preintegrated] {
        for interpolation in [Interpolation::Trilinear, Interpolation::Tricubic] {
            out.push(RenderSettings {
                classification,
                interpolation,
                ..Default::default()
            });
        }
    }
    out.push(RenderSettings {
        mode: RenderMode::Isosurface,
        isovalue: Some(300.0),
        ..Default::default()
    });
    out
}

#[test]
fn block_path_matches_monolithic_in_every_mode() {
    let vol = generate_phantom(PhantomKind::Torso, [48; 3]);
    let cam = camera(&vol, [0.5, -0.3, 1.0], 48);
    let tf = TransferFunction::preset("soft-tissue").unwrap();
    for s in all_modes() {
        let mono = render(&vol, &cam, &tf, &s);
        let blocked = render(
            &vol,
            &cam,
            &tf,
            &RenderSettings {
                use_blocks: true,
                block_size: 16,
                ..s.clone()
            },
        );
        let tol = if s.interpolation == Interpolation::Tricubic {
            2
        } else {
            1
        };
        let d = max_diff(&mono, &blocked);
        assert!(d <= tol, "{s:?}: diff {d}");
        assert!(blocked.stats.samples_skipped > 0, "{s:?}");
    }
}

#[test]
fn skipping_is_lossless() {
    let vol = generate_phantom(PhantomKind::Torso, [48; 3]);
    let cam = camera(&vol, [-0.4, 0.2, 1.0], 40);
    for s in all_modes() {
        let base = RenderSettings {
            use_blocks: true,
            block_size: 16,
            ..s
        };
        let skip = render(&vol, &cam, &bone(), &base);
        let full = render(
            &vol,
            &cam,
            &bone(),
            &RenderSettings {
                empty_space_skipping: false,
                ..base.clone()
            },
        );
        assert_eq!(full.stats.samples_skipped, 0);
        assert!(max_diff(&skip, &full) <= 1, "{base:?}");
    }
}

#[test]
fn sub_rectangles_equal_crops() {
    let vol = generate_phantom(PhantomKind::Torso, [32; 3]);
    let cam = camera(&vol, [0.3, 0.3, 1.0], 37);
    for s in [
        RenderSettings::default(),
        RenderSettings {
            use_blocks: true,
            block_size: 12,
            classification: Classification::Preintegrated,
            ..Default::default()
        },
    ] {
        let r = Renderer::<f32>::new(&vol, &bone(), &s).unwrap();
        let full = r.render(&cam).unwrap();
        for rect in [(0, 0, 37, 1), (5, 9, 13, 7), (36, 36, 1, 1), (20, 0, 17, 37)] {
            let part = r.render_region(&cam, rect).unwrap();
            assert_eq!(
                part.pixels(),
                full.crop(rect.0, rect.1, rect.2, rect.3).pixels(),
                "{rect:?}"
            );
        }
        assert!(r.render_region(&cam, (30, 30, 8, 1)).is_err());
    }
}

#[test]
fn deterministic_across_thread_counts() {
    let vol = generate_phantom(PhantomKind::Torso, [32; 3]);
    let cam = camera(&vol, [0.1, 0.7, 1.0], 30);
    let s = RenderSettings {
        use_blocks: true,
        block_size: 12,
        ..Default::default()
    };
    let r = Renderer::<f32>::new(&vol, &bone(), &s).unwrap();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| r.render(&cam).unwrap());
    let four = pool(4).install(|| r.render(&cam).unwrap());
    let again = r.render(&cam).unwrap();
    assert_eq!(one.pixels(), four.pixels());
    assert_eq!(one.pixels(), again.pixels());
    assert_eq!(one.stats.samples_taken, four.stats.samples_taken);
}

#[test]
fn early_termination_is_visually_lossless() {
    for kind in [PhantomKind::Sphere, PhantomKind::Shell, PhantomKind::Torso] {
        let vol = generate_phantom(kind, [40; 3]);
        let cam = camera(&vol, [0.2, -0.1, 1.0], 40);
        for s in all_modes() {
            let on = render(&vol, &cam, &bone(), &s);
            let off = render(
                &vol,
                &cam,
                &bone(),
                &RenderSettings {
                    early_termination_alpha: 1.0,
                    ..s.clone()
                },
            );
            assert!(on.stats.samples_taken <= off.stats.samples_taken);
            assert!(max_diff(&on, &off) <= 3, "{kind:?} {s:?}");
        }
    }
}

#[test]
fn classification_modes_agree_roughly() {
    let vol = generate_phantom(PhantomKind::Torso, [40; 3]);
    let cam = camera(&vol, [0.0, 0.0, 1.0], 40);
    let tf = TransferFunction::preset("soft-tissue").unwrap();
    let post = render(&vol, &cam, &tf, &RenderSettings::default());
    for classification in [Classification::Pre, Classification::Preintegrated] {
        let other = render(
            &vol,
            &cam,
            &tf,
            &RenderSettings {
                classification,
                ..Default::default()
            },
        );
        let db = voxcast_core::quality::psnr(&post, &other).unwrap();
        assert!(db > 20.0, "{classification:?}: {db} dB");
    }
}

#[test]
fn step_independence_of_opacity() {
    // With opacity correction a homogeneous slab looks the same at any step.
    let vol = ScalarVolume::from_fn([20, 20, 20], [1.0; 3], |_, _, _| 500).unwrap();
    let cam = camera(&vol, [0.0, 0.0, 1.0], 6);
    let tf = TransferFunction::new(
        vec![
            ControlPoint::new(-1024.0, 0.0, 0.0, 0.0, 0.0),
            ControlPoint::new(3071.0, 1.0, 1.0, 1.0, 0.02),
        ],
        CT_DOMAIN,
    )
    .unwrap();
    let mk = |step| RenderSettings {
        step: Some(step),
        lighting: false,
        early_termination_alpha: 1.0,
        interpolation: Interpolation::Trilinear,
        background: [0.0, 0.0, 0.0, 0.0],
        ..Default::default()
    };
    // The slab is 19 mm thick along the central ray; steps dividing 19 exactly.
    let a = render(&vol, &cam, &tf, &mk(19.0 / 76.0));
    let b = render(&vol, &cam, &tf, &mk(19.0 / 19.0));
    let (pa, pb) = (a.pixel(3, 3), b.pixel(3, 3));
    assert!(pa[3] > 20);
    assert!((i32::from(pa[3]) - i32::from(pb[3])).abs() <= 2, "{pa:?} vs {pb:?}");
}
