mod oracles;

use voxcast_core::Vec3;
use voxcast_morphology::{
    clipped_area, clipped_volume, io, svr_at_point, svr_field, Estimate, Mesh, QueryPoints, SvrParams, SvrQuery,
    SvrValue, TriangleMesh,
};

type V = Vec3<f64>;

fn query(center: V, radius: f64, seed: u64) -> SvrQuery<f64> {
    SvrQuery {
        rng_seed: seed,
        ..SvrQuery::new(center, radius)
    }
}

fn svr_stderr(s: Estimate<f64>, v: Estimate<f64>) -> f64 {
    (s.value / v.value) * ((s.stderr / s.value).powi(2) + (v.stderr / v.value).powi(2)).sqrt()
}

fn flat_box() -> TriangleMesh {
    Mesh::cuboid(V::new(-10.0, -10.0, -4.0), V::new(10.0, 10.0, 0.0))
}

#[test]
fn enclosing_ball_gives_exact_area() {
    let m = Mesh::icosphere(2, 1.0, V::zero());
    let s = clipped_area(&m, &query(V::new(0.1, 0.0, 0.0), 5.0, 1)).unwrap();
    assert_eq!(s.value, m.area());
    assert_eq!(s.stderr, 0.0);
}

#[test]
fn distant_ball_gives_zero_area() {
    let m = Mesh::icosphere(2, 1.0, V::zero());
    let s = clipped_area(&m, &query(V::new(3.0, 0.0, 0.0), 1.5, 1)).unwrap();
    assert_eq!(s.value, 0.0);
    // Inside the sphere, short of its surface.
    let s = clipped_area(&m, &query(V::zero(), 0.5, 1)).unwrap();
    assert_eq!(s.value, 0.0);
}

#[test]
fn unit_square_disk_area() {
    let verts = vec![
        V::zero(),
        V::new(1.0, 0.0, 0.0),
        V::new(1.0, 1.0, 0.0),
        V::new(0.0, 1.0, 0.0),
    ];
    let square = Mesh::new_open(verts, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
    let want = oracles::disk_area(0.4);
    let mean = (0..10)
        .map(|seed| {
            clipped_area(&square, &query(V::new(0.5, 0.5, 0.0), 0.4, seed))
                .unwrap()
                .value
        })
        .sum::<f64>()
        / 10.0;
    assert!((mean / want - 1.0).abs() < 0.02, "{mean} vs {want}");
    assert!(clipped_volume(&square, &query(V::new(0.5, 0.5, 0.0), 0.4, 0)).is_err());
}

#[test]
fn ball_inside_cube_has_full_volume() {
    let m = Mesh::cuboid(V::splat(-5.0), V::splat(5.0));
    let v = clipped_volume(&m, &query(V::new(0.3, -0.2, 1.0), 2.0, 4)).unwrap();
    assert!((v.value / oracles::ball_volume(2.0) - 1.0).abs() < 0.01);
}

#[test]
fn ball_outside_has_no_volume() {
    let m = Mesh::cuboid(V::splat(-1.0), V::splat(1.0));
    let v = clipped_volume(&m, &query(V::new(4.0, 0.0, 0.0), 1.0, 4)).unwrap();
    assert_eq!(v.value, 0.0);
}

#[test]
fn flat_face_half_ball_and_svr() {
    let m = flat_box();
    let r = 1.0;
    let q = query(V::zero(), r, 21);
    let v = clipped_volume(&m, &q).unwrap();
    let half = 0.5 * oracles::ball_volume(r);
    assert!((v.value / half - 1.0).abs() < 0.02, "{} vs {half}", v.value);
    let p = svr_at_point(&m, &q).unwrap();
    let want = oracles::half_space_svr(r);
    assert!((want - 1.5 / r).abs() < 1e-12);
    let got = p.svr.value().unwrap();
    assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
}

#[test]
fn enclosed_sphere_svr() {
    let a = 1.5;
    let m = Mesh::icosphere(4, a, V::new(2.0, -1.0, 0.5));
    let p = svr_at_point(&m, &query(V::new(2.0, -1.0, 0.5), 2.0 * a, 3)).unwrap();
    let want = oracles::enclosed_sphere_svr(a);
    assert!((want - 3.0 / a).abs() < 1e-12);
    let got = p.svr.value().unwrap();
    assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
}

#[test]
fn spherical_cap_vertex() {
    let (a, r) = (2.0, 0.5);
    let m = Mesh::icosphere(4, a, V::zero());
    let want = oracles::cap_svr(a, r);
    for vertex in [0usize, 100, 2000] {
        let x = m.vertices()[vertex];
        let p = svr_at_point(&m, &query(x, r, vertex as u64)).unwrap();
        let got = p.svr.value().unwrap();
        assert!((got / want - 1.0).abs() < 0.05, "vertex {vertex}: {got} vs {want}");
    }
}

#[test]
fn disjoint_ball_is_undefined() {
    let m = Mesh::icosphere(2, 1.0, V::zero());
    let p = svr_at_point(&m, &query(V::new(0.0, 5.0, 0.0), 1.0, 0)).unwrap();
    assert_eq!(p.svr, SvrValue::Undefined);
}

#[test]
fn scale_covariance() {
    let m = Mesh::icosphere(3, 1.0, V::zero());
    let k = 2.5;
    let scaled = m.map_vertices(|v| v * k).unwrap();
    for vertex in [3usize, 77] {
        let x = m.vertices()[vertex];
        let base = svr_at_point(&m, &query(x, 0.4, 9)).unwrap();
        let big = svr_at_point(&scaled, &query(x * k, 0.4 * k, 9)).unwrap();
        let (b, s) = (base.svr.value().unwrap(), big.svr.value().unwrap());
        let tol = 3.0 * svr_stderr(big.area, big.volume);
        assert!((s - b / k).abs() <= tol, "{s} vs {}", b / k);
    }
}

#[test]
fn deterministic_for_fixed_seed() {
    let m = Mesh::icosphere(2, 1.0, V::zero());
    let q = query(m.vertices()[5], 0.5, 1234);
    assert_eq!(svr_at_point(&m, &q).unwrap(), svr_at_point(&m, &q).unwrap());
    let q2 = query(m.vertices()[5], 0.5, 1235);
    assert_ne!(
        svr_at_point(&m, &q).unwrap().volume,
        svr_at_point(&m, &q2).unwrap().volume
    );
}

#[test]
fn area_is_exact_without_cut_triangles() {
    let m = Mesh::cuboid(V::zero(), V::splat(1.0));
    // A ball that swallows the whole box, then one that touches nothing.
    for (c, r) in [(V::splat(0.5), 1.0), (V::splat(3.0), 0.5)] {
        for seed in 0..3 {
            let s = clipped_area(&m, &query(c, r, seed)).unwrap();
            assert_eq!(s.stderr, 0.0);
            assert_eq!(s.value, clipped_area(&m, &query(c, r, 0)).unwrap().value);
        }
    }
}

#[test]
fn more_samples_stay_consistent() {
    let sphere = Mesh::icosphere(3, 2.0, V::zero());
    let scenes: Vec<(TriangleMesh, V, f64)> = vec![
        (flat_box(), V::zero(), 1.0),
        (sphere.clone(), sphere.vertices()[10], 0.5),
    ];
    for (m, x, r) in scenes {
        let base = SvrQuery {
            samples_per_triangle: 64,
            volume_samples: 20_000,
            ..query(x, r, 5)
        };
        let tripled = SvrQuery {
            samples_per_triangle: 192,
            volume_samples: 60_000,
            rng_seed: 6,
            ..base
        };
        for est in [clipped_area, clipped_volume] {
            let (a, b) = (est(&m, &base).unwrap(), est(&m, &tripled).unwrap());
            let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            assert!((a.value - b.value).abs() <= 5.0 * combined.max(1e-12), "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn sphere_field_is_uniform_and_matches_cap() {
    let (a, r) = (4.0, 1.0);
    let m = Mesh::icosphere(3, a, V::zero());
    let params = SvrParams {
        volume_samples: 20_000,
        ..SvrParams::default()
    };
    let field = svr_field(&m, r, params, QueryPoints::Vertices).unwrap();
    assert_eq!(field.points.len(), m.vertices().len());
    let values = field.defined_values();
    assert_eq!(values.len(), m.vertices().len());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let want = oracles::cap_svr(a, r);
    assert!((mean / want - 1.0).abs() < 0.05, "{mean} vs {want}");
    for p in &field.points {
        let v = p.svr.value().unwrap();
        let tol = 4.0 * svr_stderr(p.area, p.volume) + 0.02 * mean;
        assert!((v - mean).abs() <= tol, "vertex {}: {v} vs mean {mean}", p.index);
    }
    let csv = field.to_csv();
    assert_eq!(csv.lines().count(), m.vertices().len() + 1);
    let ply = io::write_ply_with_field(&m, &field).unwrap();
    assert!(ply.contains("property float svr"));
}

#[test]
fn stderr_scales_with_samples() {
    let m = Mesh::icosphere(2, 4.0, V::zero());
    let run = |spt, vs| {
        let params = SvrParams {
            samples_per_triangle: spt,
            volume_samples: vs,
            rng_seed: 77,
        };
        let f = svr_field(&m, 1.5, params, QueryPoints::Vertices).unwrap();
        f.points.iter().map(|p| svr_stderr(p.area, p.volume)).sum::<f64>() / f.points.len() as f64
    };
    let ratio = run(512, 40_000) / run(256, 20_000);
    assert!(
        (ratio / std::f64::consts::FRAC_1_SQRT_2 - 1.0).abs() < 0.15,
        "ratio {ratio}"
    );
}

#[test]
fn centroid_queries() {
    let m = Mesh::icosphere(1, 1.0, V::zero());
    let params = SvrParams {
        volume_samples: 2_000,
        ..SvrParams::default()
    };
    let f = svr_field(&m, 0.3, params, QueryPoints::Centroids).unwrap();
    assert_eq!(f.points.len(), m.triangles().len());
    assert!(f.defined_values().iter().all(|&v| v > 0.0));
}
