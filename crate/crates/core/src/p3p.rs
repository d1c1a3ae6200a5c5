//! Grunert's three-point pose solver.

use crate::geometry::{Rotation, Transform, Vec3};
use nalgebra::{Matrix3, Matrix4};

/// Real roots of `c[0] x^4 + c[1] x^3 + c[2] x^2 + c[3] x + c[4]`.
fn quartic_roots(c: [f64; 5]) -> Vec<f64> {
    let lead = c[0];
    if lead.abs() < 1e-14 * c.iter().map(|v| v.abs()).fold(0.0, f64::max) {
        return Vec::new();
    }
    let a = c.map(|v| v / lead);
    let companion = Matrix4::new(
        -a[1], -a[2], -a[3], -a[4], //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0,
    );
    let poly = |x: f64| (((a[1] + x) * x + a[2]) * x + a[3]) * x + a[4];
    let dpoly = |x: f64| ((4.0 * x + 3.0 * a[1]) * x + 2.0 * a[2]) * x + a[3];
    companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..5 {
                let d = dpoly(x);
                if d == 0.0 {
                    break;
                }
                x -= poly(x) / d;
            }
            x
        })
        .collect()
}

/// Candidate `cam_from_world` poses from three world points and their unit
/// bearing vectors in the camera frame.
pub(crate) fn solve(world: [Vec3; 3], bearings: [Vec3; 3]) -> Vec<Transform> {
    let [p1, p2, p3] = world;
    let [j1, j2, j3] = bearings;
    let a2 = (p2 - p3).norm_squared();
    let b2 = (p1 - p3).norm_squared();
    let c2 = (p1 - p2).norm_squared();
    if a2 <= 0.0 || b2 <= 0.0 || c2 <= 0.0 {
        return Vec::new();
    }
    let ca = j2.dot(&j3);
    let cb = j1.dot(&j3);
    let cg = j1.dot(&j2);

    let amc = (a2 - c2) / b2;
    let apc = (a2 + c2) / b2;
    let bmc = (b2 - c2) / b2;
    let bma = (b2 - a2) / b2;
    let coeffs = [
        (amc - 1.0).powi(2) - 4.0 * c2 / b2 * ca * ca,
        4.0 * (amc * (1.0 - amc) * cb - (1.0 - apc) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb),
        2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cb * cb + 2.0 * bmc * ca * ca - 4.0 * apc * ca * cb * cg
            + 2.0 * bma * cg * cg),
        4.0 * (-amc * (1.0 + amc) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - apc) * ca * cg),
        (1.0 + amc).powi(2) - 4.0 * a2 / b2 * cg * cg,
    ];

    let mut out = Vec::new();
    for v in quartic_roots(coeffs) {
        if v <= 0.0 {
            continue;
        }
        let den = 2.0 * (cg - v * ca);
        if den.abs() < 1e-12 {
            continue;
        }
        let u = ((amc - 1.0) * v * v - 2.0 * amc * cb * v + 1.0 + amc) / den;
        if u <= 0.0 {
            continue;
        }
        let q = 1.0 + v * v - 2.0 * v * cb;
        if q <= 0.0 {
            continue;
        }
        let s1 = (b2 / q).sqrt();
        let cam = [j1 * s1, j2 * (u * s1), j3 * (v * s1)];
        if let Some(t) = align_three(&world, &cam) {
            out.push(t);
        }
    }
    out
}

/// Exact rigid motion taking three non-collinear points onto three others
/// with the same pairwise distances.
fn align_three(src: &[Vec3; 3], dst: &[Vec3; 3]) -> Option<Transform> {
    let frame = |p: &[Vec3; 3]| -> Option<Matrix3<f64>> {
        let e1 = (p[1] - p[0]).try_normalize(1e-12)?;
        let e3 = e1.cross(&(p[2] - p[0])).try_normalize(1e-12)?;
        let e2 = e3.cross(&e1);
        Some(Matrix3::from_columns(&[e1, e2, e3]))
    };
    let r = frame(dst)? * frame(src)?.transpose();
    let rot = Rotation::from_matrix(&r);
    Some(Transform::new(rot, dst[0] - rot.apply(&src[0])))
}
