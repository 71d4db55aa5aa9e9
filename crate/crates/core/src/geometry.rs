//! Small continuous-geometry helpers shared by the phantom generator, the
//! carving step and the capsule rasterizer.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec3 {
    pub z: f64,
    pub y: f64,
    pub x: f64,
}

impl Vec3 {
    pub const fn new(z: f64, y: f64, x: f64) -> Self {
        Self { z, y, x }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.z * o.z + self.y * o.y + self.x * o.x
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.x - self.x * o.y,
            self.x * o.z - self.z * o.x,
            self.z * o.y - self.y * o.z,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    /// Tilts unit vector `self` by `angle` radians towards the perpendicular
    /// direction selected by `azimuth`.
    pub fn rotate_towards(self, azimuth: f64, angle: f64) -> Vec3 {
        let u = self.normalized();
        let helper = if u.z.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let p1 = u.cross(helper).normalized();
        let p2 = u.cross(p1);
        let p = p1 * azimuth.cos() + p2 * azimuth.sin();
        (u * angle.cos() + p * angle.sin()).normalized()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.z + o.z, self.y + o.y, self.x + o.x)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.z - o.z, self.y - o.y, self.x - o.x)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.z * s, self.y * s, self.x * s)
    }
}

/// Parameter in `[0, 1]` of the point of segment `[a, b]` closest to `p`.
pub fn segment_parameter(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    }
}

pub fn point_segment_distance_sq(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let t = segment_parameter(p, a, b);
    let q = a + (b - a) * t;
    let d = p - q;
    d.dot(d)
}

/// Voxel bounding box of a capsule, or `None` if it comes closer than
/// `margin` voxels to the grid border.
pub fn capsule_bounds(
    a: Vec3,
    b: Vec3,
    radius: f64,
    dims: [usize; 3],
    margin: usize,
) -> Option<([usize; 3], [usize; 3])> {
    let lo = [a.z.min(b.z) - radius, a.y.min(b.y) - radius, a.x.min(b.x) - radius];
    let hi = [a.z.max(b.z) + radius, a.y.max(b.y) + radius, a.x.max(b.x) + radius];
    let mut out_lo = [0usize; 3];
    let mut out_hi = [0usize; 3];
    for k in 0..3 {
        let l = lo[k].floor();
        let h = hi[k].ceil();
        if l < margin as f64 || h > (dims[k] - 1 - margin) as f64 {
            return None;
        }
        out_lo[k] = l as usize;
        out_hi[k] = h as usize;
    }
    Some((out_lo, out_hi))
}

/// Voxel bounding box of a capsule clipped to the grid; `None` when disjoint.
pub fn capsule_bounds_clipped(a: Vec3, b: Vec3, radius: f64, dims: [usize; 3]) -> Option<([usize; 3], [usize; 3])> {
    let lo = [a.z.min(b.z) - radius, a.y.min(b.y) - radius, a.x.min(b.x) - radius];
    let hi = [a.z.max(b.z) + radius, a.y.max(b.y) + radius, a.x.max(b.x) + radius];
    let mut out_lo = [0usize; 3];
    let mut out_hi = [0usize; 3];
    for k in 0..3 {
        let l = lo[k].floor().max(0.0);
        let h = hi[k].ceil().min((dims[k] - 1) as f64);
        if l > h {
            return None;
        }
        out_lo[k] = l as usize;
        out_hi[k] = h as usize;
    }
    Some((out_lo, out_hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_keeps_unit_length_and_angle() {
        let u = Vec3::new(0.3, -0.5, 0.81).normalized();
        for k in 0..8 {
            let v = u.rotate_towards(k as f64 * 0.7, 0.5);
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!((u.dot(v) - 0.5f64.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_distance() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(10.0, 0.0, 0.0);
        assert_eq!(point_segment_distance_sq(Vec3::new(5.0, 3.0, 4.0), a, b), 25.0);
        assert_eq!(point_segment_distance_sq(Vec3::new(-2.0, 0.0, 0.0), a, b), 4.0);
        assert_eq!(point_segment_distance_sq(Vec3::new(13.0, 4.0, 0.0), a, b), 25.0);
        assert_eq!(point_segment_distance_sq(Vec3::new(1.0, 1.0, 1.0), a, a), 3.0);
    }
}
