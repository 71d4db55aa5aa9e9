//! 3×3×3 convolution kernels over zero-padded copies of the input.
//!
//! Each output row is computed in 8-wide strips for a block of output
//! channels at once. On x86-64 with AVX2 and FMA the same code is compiled a
//! second time with those features enabled and picked at run time.

use std::any::TypeId;

use super::tensor::Real;

const LANES: usize = 8;
/// Output channels per forward block.
const CB: usize = 8;
/// Output channels per weight-gradient block.
const WB: usize = 4;
const TAPS: usize = 27;

fn round8(w: usize) -> usize {
    w.div_ceil(LANES) * LANES
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    n: usize,
    c: usize,
    e: [usize; 3],
    wp: usize,
}

impl Geom {
    fn plane(&self) -> usize {
        (self.e[1] + 2) * self.wp
    }

    fn channel_len(&self) -> usize {
        (self.e[0] + 2) * self.plane()
    }
}

/// `[n][c][d+2][h+2][wp]` copy of a batch with a one-voxel zero border. Rows
/// are widened so every 8-wide strip read stays inside its row.
#[derive(Debug, Clone)]
pub(crate) struct Padded<T> {
    data: Vec<T>,
    geom: Geom,
}

impl<T: Real> Padded<T> {
    pub fn new(x: &[T], n: usize, c: usize, e: [usize; 3]) -> Self {
        let [d, h, w] = e;
        let wp = round8(w) + 2;
        let (dp, hp) = (d + 2, h + 2);
        let mut data = vec![T::ZERO; n * c * dp * hp * wp];
        for sc in 0..n * c {
            for z in 0..d {
                for y in 0..h {
                    let src = &x[((sc * d + z) * h + y) * w..][..w];
                    let o = ((sc * dp + z + 1) * hp + y + 1) * wp + 1;
                    data[o..o + w].copy_from_slice(src);
                }
            }
        }
        Self { data, geom: Geom { n, c, e, wp } }
    }

    /// Batch size, channels and extent of the unpadded tensor.
    pub fn dims(&self) -> (usize, usize, [usize; 3]) {
        (self.geom.n, self.geom.c, self.geom.e)
    }
}

/// Reorders `get(co, ci, tap)` into `[cout/CB][cin][27][CB]`, zero filling the
/// last block.
pub(crate) fn pack_weights<T: Real>(cout: usize, cin: usize, get: impl Fn(usize, usize, usize) -> T) -> Vec<T> {
    let blocks = cout.div_ceil(CB);
    let mut out = vec![T::ZERO; blocks * cin * TAPS * CB];
    for co in 0..cout {
        let (b, c) = (co / CB, co % CB);
        for ci in 0..cin {
            for t in 0..TAPS {
                out[((b * cin + ci) * TAPS + t) * CB + c] = get(co, ci, t);
            }
        }
    }
    out
}

/// Eight lanes of `T` with the handful of operations the kernels need.
trait Lane8<T>: Copy {
    unsafe fn zero() -> Self;
    unsafe fn load(p: *const T) -> Self;
    unsafe fn splat(v: T) -> Self;
    /// `self + a * b`
    unsafe fn fmadd(self, a: Self, b: Self) -> Self;
    unsafe fn store(self, p: *mut T);

    unsafe fn sum(self) -> T
    where
        T: Real,
    {
        let mut t = [T::ZERO; LANES];
        self.store(t.as_mut_ptr());
        t.iter().copied().sum()
    }
}

#[derive(Clone, Copy)]
struct Portable<T>([T; LANES]);

impl<T: Real> Lane8<T> for Portable<T> {
    #[inline(always)]
    unsafe fn zero() -> Self {
        Self([T::ZERO; LANES])
    }
    #[inline(always)]
    unsafe fn load(p: *const T) -> Self {
        Self(std::array::from_fn(|l| *p.add(l)))
    }
    #[inline(always)]
    unsafe fn splat(v: T) -> Self {
        Self([v; LANES])
    }
    #[inline(always)]
    unsafe fn fmadd(self, a: Self, b: Self) -> Self {
        Self(std::array::from_fn(|l| self.0[l] + a.0[l] * b.0[l]))
    }
    #[inline(always)]
    unsafe fn store(self, p: *mut T) {
        for (l, &v) in self.0.iter().enumerate() {
            *p.add(l) = v;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx {
    use super::Lane8;
    use std::arch::x86_64::*;

    #[derive(Clone, Copy)]
    pub(super) struct F32x8(__m256);

    impl Lane8<f32> for F32x8 {
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn zero() -> Self {
            Self(_mm256_setzero_ps())
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn load(p: *const f32) -> Self {
            Self(_mm256_loadu_ps(p))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn splat(v: f32) -> Self {
            Self(_mm256_set1_ps(v))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn fmadd(self, a: Self, b: Self) -> Self {
            Self(_mm256_fmadd_ps(a.0, b.0, self.0))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn store(self, p: *mut f32) {
            _mm256_storeu_ps(p, self.0)
        }
    }

    #[derive(Clone, Copy)]
    pub(super) struct F64x8(__m256d, __m256d);

    impl Lane8<f64> for F64x8 {
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn zero() -> Self {
            Self(_mm256_setzero_pd(), _mm256_setzero_pd())
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn load(p: *const f64) -> Self {
            Self(_mm256_loadu_pd(p), _mm256_loadu_pd(p.add(4)))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn splat(v: f64) -> Self {
            Self(_mm256_set1_pd(v), _mm256_set1_pd(v))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn fmadd(self, a: Self, b: Self) -> Self {
            Self(_mm256_fmadd_pd(a.0, b.0, self.0), _mm256_fmadd_pd(a.1, b.1, self.1))
        }
        #[inline]
        #[target_feature(enable = "avx2,fma")]
        unsafe fn store(self, p: *mut f64) {
            _mm256_storeu_pd(p, self.0);
            _mm256_storeu_pd(p.add(4), self.1);
        }
    }
}

#[inline(always)]
unsafe fn conv_body<T: Real, V: Lane8<T>>(g: Geom, x: &[T], wpk: &[T], cout: usize, out: &mut [T]) {
    let [d, h, w] = g.e;
    let (cin, wp, plane, cs) = (g.c, g.wp, g.plane(), g.channel_len());
    let vol = d * h * w;
    let w8 = round8(w);
    let mut tail = [T::ZERO; LANES];
    for s in 0..g.n {
        let xs = &x[s * cin * cs..(s + 1) * cin * cs];
        let ys = &mut out[s * cout * vol..(s + 1) * cout * vol];
        for cb in 0..cout.div_ceil(CB) {
            let wb = &wpk[cb * cin * TAPS * CB..(cb + 1) * cin * TAPS * CB];
            let nc = CB.min(cout - cb * CB);
            for z in 0..d {
                for y in 0..h {
                    for x0 in (0..w8).step_by(LANES) {
                        let mut acc = [V::zero(); CB];
                        for ci in 0..cin {
                            let base = ci * cs + z * plane + y * wp + x0;
                            for kz in 0..3 {
                                for ky in 0..3 {
                                    let row = xs[base + kz * plane + ky * wp..][..LANES + 2].as_ptr();
                                    let wk = wb[(ci * 9 + kz * 3 + ky) * 3 * CB..][..3 * CB].as_ptr();
                                    for kx in 0..3 {
                                        let xv = V::load(row.add(kx));
                                        for (c, a) in acc.iter_mut().enumerate() {
                                            *a = a.fmadd(V::splat(*wk.add(kx * CB + c)), xv);
                                        }
                                    }
                                }
                            }
                        }
                        let lim = LANES.min(w - x0);
                        for (c, a) in acc.iter().enumerate().take(nc) {
                            let o = (((cb * CB + c) * d + z) * h + y) * w + x0;
                            if lim == LANES {
                                a.store(ys[o..o + LANES].as_mut_ptr());
                            } else {
                                a.store(tail.as_mut_ptr());
                                ys[o..o + lim].copy_from_slice(&tail[..lim]);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline(always)]
unsafe fn wgrad_body<T: Real, V: Lane8<T>>(g: Geom, x: &[T], dyp: &[T], cout: usize, dw: &mut [T]) {
    let [d, h, w] = g.e;
    let (cin, wp, plane, cs) = (g.c, g.wp, g.plane(), g.channel_len());
    let w8 = round8(w);
    let dcs = d * h * w8;
    let coutp = cout.div_ceil(WB) * WB;
    for s in 0..g.n {
        let xs = &x[s * cin * cs..(s + 1) * cin * cs];
        let dys = &dyp[s * coutp * dcs..(s + 1) * coutp * dcs];
        for cb in 0..coutp / WB {
            let nc = WB.min(cout - cb * WB);
            for ci in 0..cin {
                for kz in 0..3 {
                    for ky in 0..3 {
                        let mut acc = [[V::zero(); 3]; WB];
                        for z in 0..d {
                            for y in 0..h {
                                let row = xs[ci * cs + (z + kz) * plane + (y + ky) * wp..][..w8 + 2].as_ptr();
                                let dbase = (cb * WB * d + z) * h * w8 + y * w8;
                                let drow = dys[dbase..dbase + (WB - 1) * dcs + w8].as_ptr();
                                for x0 in (0..w8).step_by(LANES) {
                                    let xv = [V::load(row.add(x0)), V::load(row.add(x0 + 1)), V::load(row.add(x0 + 2))];
                                    for (c, ac) in acc.iter_mut().enumerate() {
                                        let dv = V::load(drow.add(c * dcs + x0));
                                        for (a, &xk) in ac.iter_mut().zip(&xv) {
                                            *a = a.fmadd(dv, xk);
                                        }
                                    }
                                }
                            }
                        }
                        for (c, ac) in acc.iter().enumerate().take(nc) {
                            for (kx, a) in ac.iter().enumerate() {
                                let t = (kz * 3 + ky) * 3 + kx;
                                dw[((cb * WB + c) * cin + ci) * TAPS + t] += a.sum();
                            }
                        }
                    }
                }
            }
        }
    }
}
/// Copies `[n][c][d][h][w]` into `[n][round4(c)][d][h][round8(w)]` with zeros
/// in the added channels and row tails.
pub(crate) fn pad_rows<T: Real>(x: &[T], n: usize, c: usize, e: [usize; 3]) -> Vec<T> {
    let [d, h, w] = e;
    let w8 = round8(w);
    let cp = c.div_ceil(WB) * WB;
    let mut out = vec![T::ZERO; n * cp * d * h * w8];
    for s in 0..n {
        for ch in 0..c {
            for r in 0..d * h {
                let src = &x[((s * c + ch) * d * h + r) * w..][..w];
                out[((s * cp + ch) * d * h + r) * w8..][..w].copy_from_slice(src);
            }
        }
    }
    out
}

fn same<T: 'static, U: 'static>(x: &[T]) -> Option<&[U]> {
    // SAFETY: T and U are the same type.
    (TypeId::of::<T>() == TypeId::of::<U>()).then(|| unsafe { std::slice::from_raw_parts(x.as_ptr().cast(), x.len()) })
}

fn same_mut<T: 'static, U: 'static>(x: &mut [T]) -> Option<&mut [U]> {
    // SAFETY: T and U are the same type.
    (TypeId::of::<T>() == TypeId::of::<U>())
        .then(|| unsafe { std::slice::from_raw_parts_mut(x.as_mut_ptr().cast(), x.len()) })
}

#[cfg(target_arch = "x86_64")]
fn has_fma() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn conv_f32(g: Geom, x: &[f32], w: &[f32], cout: usize, out: &mut [f32]) {
    conv_body::<f32, avx::F32x8>(g, x, w, cout, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn conv_f64(g: Geom, x: &[f64], w: &[f64], cout: usize, out: &mut [f64]) {
    conv_body::<f64, avx::F64x8>(g, x, w, cout, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn wgrad_f32(g: Geom, x: &[f32], dy: &[f32], cout: usize, dw: &mut [f32]) {
    wgrad_body::<f32, avx::F32x8>(g, x, dy, cout, dw)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn wgrad_f64(g: Geom, x: &[f64], dy: &[f64], cout: usize, dw: &mut [f64]) {
    wgrad_body::<f64, avx::F64x8>(g, x, dy, cout, dw)
}

/// Same-padded convolution of every sample of `xp` with packed weights;
/// `out` is `[n][cout][d][h][w]` and is fully overwritten.
pub(crate) fn conv3<T: Real>(xp: &Padded<T>, wpk: &[T], cout: usize, out: &mut [T]) {
    let g = xp.geom;
    assert_eq!(out.len(), g.n * cout * g.e.iter().product::<usize>());
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the CPU features were detected and the casts are identity casts.
        unsafe {
            if let (Some(x), Some(w), Some(o)) = (same(&xp.data), same(wpk), same_mut(out)) {
                return conv_f32(g, x, w, cout, o);
            }
            if let (Some(x), Some(w), Some(o)) = (same(&xp.data), same(wpk), same_mut(out)) {
                return conv_f64(g, x, w, cout, o);
            }
        }
    }
    // SAFETY: every pointer the kernel forms stays inside a bounds-checked row slice.
    unsafe { conv_body::<T, Portable<T>>(g, &xp.data, wpk, cout, out) }
}

/// Accumulates the weight gradient `[cout][cin][27]` given the padded input
/// and the output gradient laid out by [`pad_rows`].
pub(crate) fn wgrad3<T: Real>(xp: &Padded<T>, dyp: &[T], cout: usize, dw: &mut [T]) {
    let g = xp.geom;
    assert_eq!(dw.len(), cout * g.c * TAPS);
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the CPU features were detected and the casts are identity casts.
        unsafe {
            if let (Some(x), Some(dy), Some(o)) = (same(&xp.data), same(dyp), same_mut(dw)) {
                return wgrad_f32(g, x, dy, cout, o);
            }
            if let (Some(x), Some(dy), Some(o)) = (same(&xp.data), same(dyp), same_mut(dw)) {
                return wgrad_f64(g, x, dy, cout, o);
            }
        }
    }
    // SAFETY: every pointer the kernel forms stays inside a bounds-checked row slice.
    unsafe { wgrad_body::<T, Portable<T>>(g, &xp.data, dyp, cout, dw) }
}
