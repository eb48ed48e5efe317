//! Closed-form and brute-force reference values for SVR scenes.
//!
//! Kept independent of the estimator code: nothing here touches meshes.
#![allow(dead_code)]

use std::f64::consts::PI;

pub fn disk_area(r: f64) -> f64 {
    PI * r * r
}

pub fn ball_volume(r: f64) -> f64 {
    4.0 / 3.0 * PI * r.powi(3)
}

/// Ball of radius `r` centred on a plane: flat disk over half the ball.
pub fn half_space_svr(r: f64) -> f64 {
    disk_area(r) / (0.5 * ball_volume(r))
}

/// Whole sphere of radius `a` inside the query ball.
pub fn enclosed_sphere_svr(a: f64) -> f64 {
    (4.0 * PI * a * a) / ball_volume(a)
}

/// Area of a sphere of radius `a` inside a ball of radius `r < 2a` centred
/// on its surface: a cap of height `r²/2a`.
pub fn cap_area(a: f64, r: f64) -> f64 {
    2.0 * PI * a * (r * r / (2.0 * a))
}

/// Intersection volume of balls with radii `a`, `r` and centre distance `d`.
pub fn lens_volume(a: f64, r: f64, d: f64) -> f64 {
    if d >= a + r {
        return 0.0;
    }
    if d <= (a - r).abs() {
        return ball_volume(a.min(r));
    }
    PI * (a + r - d).powi(2) * (d * d + 2.0 * d * r - 3.0 * r * r + 2.0 * d * a + 6.0 * a * r - 3.0 * a * a)
        / (12.0 * d)
}

/// Midpoint-rule count of grid cells inside both balls.
pub fn lens_volume_brute_force(a: f64, r: f64, d: f64, cells: usize) -> f64 {
    // Ball A at the origin, ball B at (d, 0, 0); integrate over B's box.
    let h = 2.0 * r / cells as f64;
    let mut inside = 0u64;
    for i in 0..cells {
        let x = d - r + (i as f64 + 0.5) * h;
        for j in 0..cells {
            let y = -r + (j as f64 + 0.5) * h;
            for k in 0..cells {
                let z = -r + (k as f64 + 0.5) * h;
                let in_a = x * x + y * y + z * z <= a * a;
                let in_b = (x - d).powi(2) + y * y + z * z <= r * r;
                inside += u64::from(in_a && in_b);
            }
        }
    }
    inside as f64 * h.powi(3)
}

/// SVR at a point on a sphere of radius `a` with ball radius `r`, from both
/// the closed form and the brute-force lens, which must agree first.
pub fn cap_svr(a: f64, r: f64) -> f64 {
    let exact = lens_volume(a, r, a);
    let brute = lens_volume_brute_force(a, r, a, 160);
    assert!(
        (exact / brute - 1.0).abs() < 5e-3,
        "lens oracle disagreement: {exact} vs {brute}"
    );
    cap_area(a, r) / exact
}

#[test]
fn lens_limits() {
    assert_eq!(lens_volume(1.0, 0.5, 2.0), 0.0);
    assert!((lens_volume(1.0, 0.5, 0.2) - ball_volume(0.5)).abs() < 1e-12);
    // Equal balls at distance r: 5πr³/12.
    assert!((lens_volume(1.0, 1.0, 1.0) - 5.0 * PI / 12.0).abs() < 1e-12);
    // A huge sphere looks like a plane.
    assert!((cap_svr(1e4, 1.0) / half_space_svr(1.0) - 1.0).abs() < 1e-3);
}
