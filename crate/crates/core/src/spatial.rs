//! Exact nearest-point queries over voxel coordinates using a uniform bucket grid.

use crate::volume::VoxelCoord;

const CELL: usize = 8;

pub struct NearestPoints {
    points: Vec<VoxelCoord>,
    keys: Vec<usize>,
    cells: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl NearestPoints {
    /// `keys` are the tie-break order: among equidistant points, the smallest key wins.
    pub fn new(dims: [usize; 3], points: Vec<VoxelCoord>, keys: Vec<usize>) -> Self {
        assert_eq!(points.len(), keys.len());
        let cells = [
            dims[0].div_ceil(CELL).max(1),
            dims[1].div_ceil(CELL).max(1),
            dims[2].div_ceil(CELL).max(1),
        ];
        let mut buckets = vec![Vec::new(); cells[0] * cells[1] * cells[2]];
        for (i, p) in points.iter().enumerate() {
            let c = Self::cell_of(*p);
            buckets[(c[0] * cells[1] + c[1]) * cells[2] + c[2]].push(i as u32);
        }
        Self {
            points,
            keys,
            cells,
            buckets,
        }
    }

    fn cell_of(p: VoxelCoord) -> [usize; 3] {
        [p.z / CELL, p.y / CELL, p.x / CELL]
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> VoxelCoord {
        self.points[i]
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: VoxelCoord) -> Option<(usize, i64)> {
        if self.points.is_empty() {
            return None;
        }
        let qc = Self::cell_of(q);
        let qa = q.as_i64();
        let mut best: Option<(i64, usize, usize)> = None;
        let max_ring = *self.cells.iter().max().unwrap();
        for ring in 0..=max_ring {
            if let Some((d2, _, _)) = best {
                // Every point in ring r is at least (r - 1) * CELL + 1 away along some axis.
                let inner = (ring as i64 - 1) * CELL as i64 + 1;
                if inner > 0 && inner * inner > d2 {
                    break;
                }
            }
            self.visit_ring(qc, ring, |idx| {
                let p = self.points[idx].as_i64();
                let d2 = (0..3).map(|a| (p[a] - qa[a]).pow(2)).sum::<i64>();
                let cand = (d2, self.keys[idx], idx);
                if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                    best = Some(cand);
                }
            });
        }
        best.map(|(d2, _, idx)| (idx, d2))
    }

    fn visit_ring(&self, center: [usize; 3], ring: usize, mut f: impl FnMut(usize)) {
        let r = ring as i64;
        let c = [center[0] as i64, center[1] as i64, center[2] as i64];
        for z in (c[0] - r)..=(c[0] + r) {
            if z < 0 || z >= self.cells[0] as i64 {
                continue;
            }
            for y in (c[1] - r)..=(c[1] + r) {
                if y < 0 || y >= self.cells[1] as i64 {
                    continue;
                }
                for x in (c[2] - r)..=(c[2] + r) {
                    if x < 0 || x >= self.cells[2] as i64 {
                        continue;
                    }
                    let on_shell = (z - c[0]).abs() == r || (y - c[1]).abs() == r || (x - c[2]).abs() == r;
                    if !on_shell {
                        continue;
                    }
                    let b = ((z as usize) * self.cells[1] + y as usize) * self.cells[2] + x as usize;
                    for &i in &self.buckets[b] {
                        f(i as usize);
                    }
                }
            }
        }
    }
}
