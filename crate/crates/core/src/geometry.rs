//! Member lengths, triangle areas and their closed-form gradients.
//!
//! The length gradient is the pair of unit vectors `±(p − q)/L` attached to
//! the two ends. The area gradient with respect to vertex `p` is
//! `½ n × (r − q)` where `n` is the unit normal of `(q − p) × (r − p)`; the
//! other two blocks follow cyclically. Both are undefined for degenerate
//! input, so the gradient functions refuse lengths/areas at or below
//! [`LENGTH_EPS`] / [`AREA_EPS`].

use crate::model::Point3;

pub const LENGTH_EPS: f64 = 1e-12;
pub const AREA_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Degenerate {
    pub measure: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthGradient {
    pub p: Point3,
    pub q: Point3,
}

impl LengthGradient {
    pub fn components(&self) -> [f64; 6] {
        [self.p.x, self.p.y, self.p.z, self.q.x, self.q.y, self.q.z]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaGradient {
    pub p: Point3,
    pub q: Point3,
    pub r: Point3,
}

impl AreaGradient {
    pub fn blocks(&self) -> [Point3; 3] {
        [self.p, self.q, self.r]
    }

    pub fn components(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for (k, b) in self.blocks().iter().enumerate() {
            out[3 * k..3 * k + 3].copy_from_slice(b.as_slice());
        }
        out
    }
}

#[inline]
pub fn member_length(p: &Point3, q: &Point3) -> f64 {
    (p - q).norm()
}

pub fn member_length_gradient(p: &Point3, q: &Point3) -> Result<LengthGradient, Degenerate> {
    let d = p - q;
    let len = d.norm();
    if len <= LENGTH_EPS {
        return Err(Degenerate { measure: len });
    }
    let u = d / len;
    Ok(LengthGradient { p: u, q: -u })
}

#[inline]
fn area_normal(p: &Point3, q: &Point3, r: &Point3) -> Point3 {
    (q - p).cross(&(r - p))
}

#[inline]
pub fn triangle_area(p: &Point3, q: &Point3, r: &Point3) -> f64 {
    0.5 * area_normal(p, q, r).norm()
}

pub fn triangle_area_gradient(p: &Point3, q: &Point3, r: &Point3) -> Result<AreaGradient, Degenerate> {
    let big_n = area_normal(p, q, r);
    let norm = big_n.norm();
    if 0.5 * norm <= AREA_EPS {
        return Err(Degenerate { measure: 0.5 * norm });
    }
    let n = big_n / norm;
    Ok(AreaGradient { p: 0.5 * n.cross(&(r - q)), q: 0.5 * n.cross(&(p - r)), r: 0.5 * n.cross(&(q - p)) })
}

/// Length at `(p, q)` and its change when the ends move by `(dp, dq)`,
/// formed as `δ·(2d + δ)/(L₀ + L₁)` to avoid cancellation.
pub fn length_change(p: &Point3, q: &Point3, dp: &Point3, dq: &Point3) -> (f64, f64) {
    let d = p - q;
    let delta = dp - dq;
    let l0 = d.norm();
    let l1 = (d + delta).norm();
    let den = l0 + l1;
    (l0, if den > 0.0 { delta.dot(&(2.0 * d + delta)) / den } else { 0.0 })
}

/// Area of `(p, q, r)` and its change under vertex displacements, formed
/// from the change of the normal vector to avoid cancellation.
pub fn area_change(p: &Point3, q: &Point3, r: &Point3, dp: &Point3, dq: &Point3, dr: &Point3) -> (f64, f64) {
    let a = q - p;
    let b = r - p;
    let da = dq - dp;
    let db = dr - dp;
    let n = a.cross(&b);
    let dn = da.cross(&b) + a.cross(&db) + da.cross(&db);
    let n0 = n.norm();
    let n1 = (n + dn).norm();
    let den = 2.0 * (n0 + n1);
    (0.5 * n0, if den > 0.0 { dn.dot(&(2.0 * n + dn)) / den } else { 0.0 })
}

/// Unit normal of a nondegenerate triangle.
pub fn triangle_normal(p: &Point3, q: &Point3, r: &Point3) -> Option<Point3> {
    let big_n = area_normal(p, q, r);
    let norm = big_n.norm();
    (norm > 2.0 * AREA_EPS).then(|| big_n / norm)
}
