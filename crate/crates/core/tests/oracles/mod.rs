//! Brute-force reference implementations used by property and acceptance tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use tuberepair::volume::{Volume3D, VoxelCoord};

/// Neighbor offsets with at most `max_nonzero` nonzero components.
pub fn offsets(max_nonzero: usize) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let nz = [dz, dy, dx].iter().filter(|&&d| d != 0).count();
                if nz > 0 && nz <= max_nonzero {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

fn idx(c: [i64; 3], d: [usize; 3]) -> Option<usize> {
    if (0..3).all(|k| c[k] >= 0 && (c[k] as usize) < d[k]) {
        Some((c[0] as usize * d[1] + c[1] as usize) * d[2] + c[2] as usize)
    } else {
        None
    }
}

fn coord(i: usize, d: [usize; 3]) -> [i64; 3] {
    [(i / (d[1] * d[2])) as i64, ((i / d[2]) % d[1]) as i64, (i % d[2]) as i64]
}

/// Components as sorted lists of linear indices, ordered by size descending
/// then by smallest member.
pub fn flood_fill_components(vol: &Volume3D, max_nonzero: usize) -> Vec<Vec<usize>> {
    let d = vol.dims();
    let data = vol.data();
    let offs = offsets(max_nonzero);
    let mut seen = vec![false; data.len()];
    let mut comps = Vec::new();
    for start in 0..data.len() {
        if !data[start] || seen[start] {
            continue;
        }
        let mut comp = vec![];
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = q.pop_front() {
            comp.push(i);
            let c = coord(i, d);
            for o in &offs {
                if let Some(j) = idx([c[0] + o[0], c[1] + o[1], c[2] + o[2]], d) {
                    if data[j] && !seen[j] {
                        seen[j] = true;
                        q.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    comps
}

fn ball(radius: f64) -> Vec<[i64; 3]> {
    let r = radius.floor() as i64;
    let mut out = Vec::new();
    for dz in -r..=r {
        for dy in -r..=r {
            for dx in -r..=r {
                if ((dz * dz + dy * dy + dx * dx) as f64) <= radius * radius {
                    out.push([dz, dy, dx]);
                }
            }
        }
    }
    out
}

/// Union of ball-shaped structuring elements stamped at every foreground voxel.
pub fn set_dilation(vol: &Volume3D, radius: f64) -> Vec<bool> {
    let d = vol.dims();
    let b = ball(radius);
    let mut out = vec![false; vol.len()];
    for (i, &v) in vol.data().iter().enumerate() {
        if v {
            let c = coord(i, d);
            for o in &b {
                if let Some(j) = idx([c[0] + o[0], c[1] + o[1], c[2] + o[2]], d) {
                    out[j] = true;
                }
            }
        }
    }
    out
}

/// Voxels whose whole in-domain ball is foreground.
pub fn set_erosion(vol: &Volume3D, radius: f64) -> Vec<bool> {
    let d = vol.dims();
    let b = ball(radius);
    (0..vol.len())
        .map(|i| {
            let c = coord(i, d);
            vol.data()[i]
                && b.iter().all(|o| match idx([c[0] + o[0], c[1] + o[1], c[2] + o[2]], d) {
                    Some(j) => vol.data()[j],
                    None => true,
                })
        })
        .collect()
}

/// Distance from each foreground voxel to the nearest background voxel by
/// scanning every pair; infinity when there is no background.
pub fn all_pairs_distance(vol: &Volume3D) -> Vec<f64> {
    let d = vol.dims();
    let sp = vol.spacing();
    let bg: Vec<[i64; 3]> = (0..vol.len()).filter(|&i| !vol.data()[i]).map(|i| coord(i, d)).collect();
    (0..vol.len())
        .map(|i| {
            if !vol.data()[i] {
                return 0.0;
            }
            let c = coord(i, d);
            bg.iter()
                .map(|b| {
                    (0..3)
                        .map(|k| ((c[k] - b[k]) as f64 * sp[k]).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

pub fn coord_of(i: usize, d: [usize; 3]) -> VoxelCoord {
    let c = coord(i, d);
    VoxelCoord::new(c[0] as usize, c[1] as usize, c[2] as usize)
}

/// Scores computed record by record with no shared helpers: the OKS of a
/// sample is the plain average over visible keypoints, every AP value counts
/// scores above each threshold one at a time.
pub struct BruteReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub bins: [Option<f64>; 3],
    pub per_kp: [Option<f64>; 2],
    pub e_d: Option<f64>,
    pub e_d_kp: [Option<f64>; 2],
}

pub fn brute_report(recs: &[(Vec<f64>, Vec<bool>, f64, f64)], lambda: f64) -> BruteReport {
    let oks = |d: f64, s: f64| f64::exp(-(d * d) / (2.0 * s * lambda * lambda));
    let ap_of = |scores: &[f64], t: f64| {
        let mut hit = 0usize;
        for &s in scores {
            if s > t {
                hit += 1;
            }
        }
        hit as f64 / scores.len() as f64
    };
    let mean_ap = |scores: &[f64]| -> Option<f64> {
        if scores.is_empty() {
            return None;
        }
        let mut total = 0.0;
        for i in 0..10 {
            total += ap_of(scores, 0.5 + 0.05 * i as f64);
        }
        Some(total / 10.0)
    };
    let avg = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };

    let mut all = Vec::new();
    let mut bins = [Vec::new(), Vec::new(), Vec::new()];
    let mut kps = [Vec::new(), Vec::new()];
    let mut ed = Vec::new();
    let mut edk = [Vec::new(), Vec::new()];
    for (d, v, s, r) in recs {
        let mut parts = Vec::new();
        for k in 0..d.len() {
            if v[k] {
                parts.push(oks(d[k], *s));
                kps[k].push(oks(d[k], *s));
                ed.push((-(d[k] * d[k])).exp());
                edk[k].push((-(d[k] * d[k])).exp());
            }
        }
        if parts.is_empty() {
            continue;
        }
        let score = parts.iter().sum::<f64>() / parts.len() as f64;
        all.push(score);
        let b = if *r <= 2.0 { 0 } else if *r <= 3.0 { 1 } else { 2 };
        bins[b].push(score);
    }
    BruteReport {
        ap: mean_ap(&all).unwrap(),
        ap50: ap_of(&all, 0.5),
        ap75: ap_of(&all, 0.75),
        bins: [mean_ap(&bins[0]), mean_ap(&bins[1]), mean_ap(&bins[2])],
        per_kp: [mean_ap(&kps[0]), mean_ap(&kps[1])],
        e_d: avg(&ed),
        e_d_kp: [avg(&edk[0]), avg(&edk[1])],
    }
}

/// Point-to-segment distance on plain arrays.
pub fn segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1] + (p[2] - a[2]) * ab[2]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
}
