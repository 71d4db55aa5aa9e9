use super::{squared_distance_to_sites, Volume3D};

/// Union of Euclidean balls of `radius` (voxel units) centered on every
/// foreground voxel. An offset belongs to the ball iff its squared norm is at
/// most `radius²`, so the result is exactly `{v : min_f |v - f|² <= r²}`.
pub fn dilate_ball(vol: &Volume3D, radius: f64) -> Volume3D {
    if radius <= 0.0 || vol.count() == 0 {
        return vol.clone();
    }
    let sq = squared_distance_to_sites(vol.dims(), vol.data(), [1.0; 3]);
    let r2 = radius * radius;
    let mut out = vol.clone();
    for (o, d) in out.data_mut().iter_mut().zip(sq) {
        *o = d <= r2;
    }
    out
}

/// Dual of [`dilate_ball`] on the grid domain: a voxel survives iff every
/// in-domain voxel of its ball is foreground.
pub fn erode_ball(vol: &Volume3D, radius: f64) -> Volume3D {
    if radius <= 0.0 {
        return vol.clone();
    }
    dilate_ball(&vol.complement(), radius).complement()
}
