use rand::Rng;
use rand_distr::StandardNormal;

use super::direct::{conv3, pack_weights, pad_rows, wgrad3, Padded};
use super::tensor::{act, gemm, Mat, Real, Tensor};
use crate::error::{Error, Result};

fn shape_err(what: &str, expected: usize, got: usize) -> Error {
    Error::ShapeMismatch(format!("{what}: expected {expected} channels, got {got}"))
}

#[derive(Debug, Clone)]
enum ConvInput<T> {
    Raw(Tensor<T>),
    Padded(Padded<T>),
}

/// Cube-kernel 3D convolution (1 or 3 wide), stride 1, zero "same" padding.
#[derive(Debug, Clone)]
pub struct Conv3d<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub k: usize,
    input: Option<ConvInput<T>>,
}

impl<T: Real> Conv3d<T> {
    /// He-initialized weights from `rng`; bias starts at zero.
    pub fn new<R: Rng>(cin: usize, cout: usize, k: usize, bias: bool, rng: &mut R) -> Self {
        assert!(k == 1 || k == 3, "kernel size {k} is not supported");
        let fan_in = (cin * k * k * k) as f64;
        let std = (2.0 / fan_in).sqrt();
        let n = cout * cin * k * k * k;
        let data = (0..n)
            .map(|_| T::from_f64(rng.sample::<f64, _>(StandardNormal) * std))
            .collect();
        Self {
            weight: Tensor::from_vec(&[cout, cin, k, k, k], data).unwrap().with_grad(),
            bias: bias.then(|| Tensor::zeros(&[cout]).with_grad()),
            k,
            input: None,
        }
    }

    pub fn cin(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn cout(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>, cache: bool) -> Result<Tensor<T>> {
        let (n, cin, e) = x.dims5();
        if cin != self.cin() {
            return Err(shape_err("conv input", self.cin(), cin));
        }
        let cout = self.cout();
        let vol: usize = e.iter().product();
        let mut y = act(n, cout, e);
        if self.k == 3 {
            let xp = Padded::new(&x.data, n, cin, e);
            let w = &self.weight.data;
            let wpk = pack_weights(cout, cin, |co, ci, t| w[(co * cin + ci) * 27 + t]);
            conv3(&xp, &wpk, cout, &mut y.data);
            self.input = cache.then_some(ConvInput::Padded(xp));
        } else {
            let wm = Mat::row_major(&self.weight.data, cout, cin);
            for s in 0..n {
                let xs = Mat::row_major(&x.data[s * cin * vol..(s + 1) * cin * vol], cin, vol);
                gemm(wm, xs, T::ZERO, &mut y.data[s * cout * vol..(s + 1) * cout * vol], vol);
            }
            self.input = cache.then(|| ConvInput::Raw(x.clone()));
        }
        if let Some(bias) = &self.bias {
            for s in 0..n {
                for (c, &b) in bias.data.iter().enumerate() {
                    y.data[(s * cout + c) * vol..][..vol].iter_mut().for_each(|v| *v += b);
                }
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.input.take().ok_or(Error::BackwardBeforeForward)?;
        let (n, cin, e) = match &input {
            ConvInput::Raw(x) => x.dims5(),
            ConvInput::Padded(p) => p.dims(),
        };
        let cout = self.cout();
        if dy.shape != [n, cout, e[0], e[1], e[2]] {
            return Err(Error::ShapeMismatch(format!("conv output grad shape {:?}", dy.shape)));
        }
        let vol: usize = e.iter().product();
        let mut dx = act(n, cin, e);
        match input {
            ConvInput::Padded(xp) => {
                let dyp = pad_rows(&dy.data, n, cout, e);
                wgrad3(&xp, &dyp, cout, self.weight.grad_mut());
                let w = &self.weight.data;
                let wt = pack_weights(cin, cout, |ci, co, t| w[(co * cin + ci) * 27 + 26 - t]);
                conv3(&Padded::new(&dy.data, n, cout, e), &wt, cin, &mut dx.data);
            }
            ConvInput::Raw(x) => {
                let wdata = self.weight.data.clone();
                let wm = Mat::row_major(&wdata, cout, cin);
                let dw = self.weight.grad_mut();
                for s in 0..n {
                    let xs = Mat::row_major(&x.data[s * cin * vol..(s + 1) * cin * vol], cin, vol);
                    let g = Mat::row_major(&dy.data[s * cout * vol..(s + 1) * cout * vol], cout, vol);
                    gemm(g, xs.t(), T::ONE, dw, cin);
                    gemm(wm.t(), g, T::ZERO, &mut dx.data[s * cin * vol..(s + 1) * cin * vol], vol);
                }
            }
        }
        if let Some(bias) = &mut self.bias {
            let db = bias.grad_mut();
            for s in 0..n {
                for (c, g) in db.iter_mut().enumerate() {
                    *g += dy.data[(s * cout + c) * vol..][..vol].iter().copied().sum::<T>();
                }
            }
        }
        Ok(dx)
    }
}

/// Batch normalization over (batch, z, y, x) per channel.
#[derive(Debug, Clone)]
pub struct BatchNorm3d<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Tensor<T>,
    invstd: Vec<T>,
    train: bool,
}

impl<T: Real> BatchNorm3d<T> {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Tensor::from_vec(&[c], vec![T::ONE; c]).unwrap().with_grad(),
            beta: Tensor::zeros(&[c]).with_grad(),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::from_vec(&[c], vec![T::ONE; c]).unwrap(),
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    /// Training mode normalizes with batch statistics and updates the running
    /// estimates; inference mode uses the running estimates only.
    pub fn forward(&mut self, x: &Tensor<T>, train: bool, cache: bool) -> Result<Tensor<T>> {
        let (n, c, e) = x.dims5();
        if c != self.gamma.len() {
            return Err(shape_err("batch norm input", self.gamma.len(), c));
        }
        let vol: usize = e.iter().product();
        let m = (n * vol) as f64;
        let mut xhat = x.clone();
        let mut invstd = Vec::with_capacity(c);
        for ch in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0;
                for s in 0..n {
                    sum += x.data[(s * c + ch) * vol..][..vol].iter().map(|v| v.to_f64()).sum::<f64>();
                }
                let mean = sum / m;
                let mut sq = 0.0;
                for s in 0..n {
                    sq += x.data[(s * c + ch) * vol..][..vol]
                        .iter()
                        .map(|v| {
                            let d = v.to_f64() - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                let var = sq / m;
                let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                let mo = self.momentum;
                let rm = &mut self.running_mean.data[ch];
                *rm = T::from_f64((1.0 - mo) * rm.to_f64() + mo * mean);
                let rv = &mut self.running_var.data[ch];
                *rv = T::from_f64((1.0 - mo) * rv.to_f64() + mo * unbiased);
                (mean, var)
            } else {
                (self.running_mean.data[ch].to_f64(), self.running_var.data[ch].to_f64())
            };
            let is = 1.0 / (var + self.eps).sqrt();
            invstd.push(T::from_f64(is));
            let (mean_t, is_t) = (T::from_f64(mean), T::from_f64(is));
            for s in 0..n {
                for v in &mut xhat.data[(s * c + ch) * vol..][..vol] {
                    *v = (*v - mean_t) * is_t;
                }
            }
        }
        let mut y = xhat.clone();
        for ch in 0..c {
            let (g, b) = (self.gamma.data[ch], self.beta.data[ch]);
            for s in 0..n {
                for v in &mut y.data[(s * c + ch) * vol..][..vol] {
                    *v = *v * g + b;
                }
            }
        }
        self.cache = cache.then_some(BnCache { xhat, invstd, train });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let BnCache { xhat, invstd, train } = self.cache.take().ok_or(Error::BackwardBeforeForward)?;
        let (n, c, e) = xhat.dims5();
        if dy.shape != xhat.shape {
            return Err(Error::ShapeMismatch(format!("batch norm grad shape {:?}, expected {:?}", dy.shape, xhat.shape)));
        }
        let vol: usize = e.iter().product();
        let m = (n * vol) as f64;
        let mut dx = dy.clone();
        for ch in 0..c {
            let mut sdy = 0.0;
            let mut sdyx = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * vol;
                for (g, xh) in dy.data[off..off + vol].iter().zip(&xhat.data[off..off + vol]) {
                    sdy += g.to_f64();
                    sdyx += g.to_f64() * xh.to_f64();
                }
            }
            self.gamma.grad_mut()[ch] += T::from_f64(sdyx);
            self.beta.grad_mut()[ch] += T::from_f64(sdy);
            let gi = self.gamma.data[ch] * invstd[ch];
            if train {
                let (mean_dy, mean_dyx) = (T::from_f64(sdy / m), T::from_f64(sdyx / m));
                for s in 0..n {
                    let off = (s * c + ch) * vol;
                    for (o, xh) in dx.data[off..off + vol].iter_mut().zip(&xhat.data[off..off + vol]) {
                        *o = gi * (*o - mean_dy - *xh * mean_dyx);
                    }
                }
            } else {
                for s in 0..n {
                    dx.data[(s * c + ch) * vol..][..vol].iter_mut().for_each(|o| *o *= gi);
                }
            }
        }
        Ok(dx)
    }
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    for v in &mut x.data {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Real>(dy: &mut Tensor<T>, y: &Tensor<T>) {
    for (g, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::ZERO {
            *g = T::ZERO;
        }
    }
}

/// How a layer makes its discrete choices (ReLU gates, max-pool winners).
#[derive(Debug, Clone, Default)]
pub enum Pattern<P> {
    /// Decided from the current input.
    #[default]
    Live,
    /// Decided live on the next forward pass, then kept.
    Record,
    /// Replayed from a recorded pass.
    Fixed(P),
}

/// 2x2x2 max pooling with stride 2; remembers the winning input offsets.
#[derive(Debug, Clone, Default)]
pub struct MaxPool {
    argmax: Option<(Vec<u32>, Vec<usize>)>,
    pub pattern: Pattern<Vec<u32>>,
}

impl MaxPool {
    pub fn forward<T: Real>(&mut self, x: &Tensor<T>, cache: bool) -> Result<Tensor<T>> {
        let (n, c, e) = x.dims5();
        if e.iter().any(|&d| d % 2 != 0) {
            return Err(Error::ShapeMismatch(format!("pooling needs even extent, got {e:?}")));
        }
        let o = [e[0] / 2, e[1] / 2, e[2] / 2];
        let (vin, vout) = (e.iter().product::<usize>(), o.iter().product::<usize>());
        let mut y = act(n, c, o);
        if let Pattern::Fixed(arg) = &self.pattern {
            if arg.len() == n * c * vout {
                for (k, &a) in arg.iter().enumerate() {
                    y.data[k] = x.data[(k / vout) * vin + a as usize];
                }
                self.argmax = cache.then(|| (arg.clone(), x.shape.clone()));
                return Ok(y);
            }
        }
        let mut arg = vec![0u32; n * c * vout];
        for nc in 0..n * c {
            let src = &x.data[nc * vin..(nc + 1) * vin];
            let dst = &mut y.data[nc * vout..(nc + 1) * vout];
            let am = &mut arg[nc * vout..(nc + 1) * vout];
            let mut i = 0;
            for z in 0..o[0] {
                for yy in 0..o[1] {
                    for xx in 0..o[2] {
                        let mut best = usize::MAX;
                        for dz in 0..2 {
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    let j = ((2 * z + dz) * e[1] + 2 * yy + dy) * e[2] + 2 * xx + dx;
                                    if best == usize::MAX || src[j] > src[best] {
                                        best = j;
                                    }
                                }
                            }
                        }
                        dst[i] = src[best];
                        am[i] = best as u32;
                        i += 1;
                    }
                }
            }
        }
        if matches!(self.pattern, Pattern::Record) {
            self.pattern = Pattern::Fixed(arg.clone());
        }
        self.argmax = cache.then(|| (arg, x.shape.clone()));
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (arg, shape) = self.argmax.take().ok_or(Error::BackwardBeforeForward)?;
        let mut dx = Tensor::zeros(&shape);
        let vin: usize = shape[2..].iter().product();
        let vout = vin / 8;
        for nc in 0..shape[0] * shape[1] {
            for i in 0..vout {
                dx.data[nc * vin + arg[nc * vout + i] as usize] += dy.data[nc * vout + i];
            }
        }
        Ok(dx)
    }
}

/// Nearest-neighbor x2 upsampling.
pub fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (n, c, e) = x.dims5();
    let o = [e[0] * 2, e[1] * 2, e[2] * 2];
    let (vin, vout) = (e.iter().product::<usize>(), o.iter().product::<usize>());
    let mut y = act(n, c, o);
    for nc in 0..n * c {
        let src = &x.data[nc * vin..(nc + 1) * vin];
        let dst = &mut y.data[nc * vout..(nc + 1) * vout];
        for z in 0..o[0] {
            for yy in 0..o[1] {
                let srow = &src[((z / 2) * e[1] + yy / 2) * e[2]..][..e[2]];
                let drow = &mut dst[(z * o[1] + yy) * o[2]..][..o[2]];
                for (xx, d) in drow.iter_mut().enumerate() {
                    *d = srow[xx / 2];
                }
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (n, c, o) = dy.dims5();
    let e = [o[0] / 2, o[1] / 2, o[2] / 2];
    let (vin, vout) = (e.iter().product::<usize>(), o.iter().product::<usize>());
    let mut dx = act(n, c, e);
    for nc in 0..n * c {
        let src = &dy.data[nc * vout..(nc + 1) * vout];
        let dst = &mut dx.data[nc * vin..(nc + 1) * vin];
        for z in 0..o[0] {
            for yy in 0..o[1] {
                let srow = &src[(z * o[1] + yy) * o[2]..][..o[2]];
                let drow = &mut dst[((z / 2) * e[1] + yy / 2) * e[2]..][..e[2]];
                for (xx, &g) in srow.iter().enumerate() {
                    drow[xx / 2] += g;
                }
            }
        }
    }
    dx
}

/// Channel concatenation `[a, b]`.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ca, e) = a.dims5();
    let (nb, cb, eb) = b.dims5();
    if n != nb || e != eb {
        return Err(Error::ShapeMismatch(format!("concat {:?} with {:?}", a.shape, b.shape)));
    }
    let vol: usize = e.iter().product();
    let mut y = act(n, ca + cb, e);
    for s in 0..n {
        let dst = &mut y.data[s * (ca + cb) * vol..(s + 1) * (ca + cb) * vol];
        dst[..ca * vol].copy_from_slice(&a.data[s * ca * vol..(s + 1) * ca * vol]);
        dst[ca * vol..].copy_from_slice(&b.data[s * cb * vol..(s + 1) * cb * vol]);
    }
    Ok(y)
}

/// Splits a gradient of `[a, b]` back into the parts for `a` (first `ca` channels) and `b`.
pub fn split<T: Real>(dy: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let (n, c, e) = dy.dims5();
    let cb = c - ca;
    let vol: usize = e.iter().product();
    let mut a = act(n, ca, e);
    let mut b = act(n, cb, e);
    for s in 0..n {
        let src = &dy.data[s * c * vol..(s + 1) * c * vol];
        a.data[s * ca * vol..(s + 1) * ca * vol].copy_from_slice(&src[..ca * vol]);
        b.data[s * cb * vol..(s + 1) * cb * vol].copy_from_slice(&src[ca * vol..]);
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, k: usize) -> Tensor<f64> {
        let (n, cin, e) = x.dims5();
        let cout = w.shape[0];
        let pad = k as i64 / 2;
        let mut y = act(n, cout, e);
        for s in 0..n {
            for co in 0..cout {
                for z in 0..e[0] {
                    for yy in 0..e[1] {
                        for xx in 0..e[2] {
                            let mut acc = 0.0;
                            for ci in 0..cin {
                                for kz in 0..k {
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            let sz = z as i64 + kz as i64 - pad;
                                            let sy = yy as i64 + ky as i64 - pad;
                                            let sx = xx as i64 + kx as i64 - pad;
                                            if sz < 0 || sy < 0 || sx < 0 {
                                                continue;
                                            }
                                            let (sz, sy, sx) = (sz as usize, sy as usize, sx as usize);
                                            if sz >= e[0] || sy >= e[1] || sx >= e[2] {
                                                continue;
                                            }
                                            let xv = x.data[(((s * cin + ci) * e[0] + sz) * e[1] + sy) * e[2] + sx];
                                            let wv = w.data[(((co * cin + ci) * k + kz) * k + ky) * k + kx];
                                            acc += xv * wv;
                                        }
                                    }
                                }
                            }
                            y.data[(((s * cout + co) * e[0] + z) * e[1] + yy) * e[2] + xx] = acc;
                        }
                    }
                }
            }
        }
        y
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, e) in [(3, [5, 4, 6]), (1, [3, 2, 5]), (3, [1, 1, 1]), (3, [2, 7, 1])] {
            let mut conv = Conv3d::<f64>::new(3, 4, k, false, &mut rng);
            let x = random(&[2, 3, e[0], e[1], e[2]], &mut rng);
            let y = conv.forward(&x, false).unwrap();
            let r = naive_conv(&x, &conv.weight, k);
            for (a, b) in y.data.iter().zip(&r.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <dy, conv(x)> differentiated by x equals conv^T(dy): check <dy, conv(x)> == <conv^T(dy), x>.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = [4, 5, 3];
        let mut conv = Conv3d::<f64>::new(2, 3, 3, false, &mut rng);
        let x = random(&[2, 2, e[0], e[1], e[2]], &mut rng);
        let dy = random(&[2, 3, e[0], e[1], e[2]], &mut rng);
        let y = conv.forward(&x, true).unwrap();
        let dx = conv.backward(&dy).unwrap();
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = dx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
        // Linear in the weights too: <dW, W> == <dy, y>.
        let dw: f64 = conv.weight.grad.as_ref().unwrap().iter().zip(&conv.weight.data).map(|(a, b)| a * b).sum();
        assert!((dw - lhs).abs() < 1e-9);
    }

    #[test]
    fn single_precision_matches_double() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (cin, cout, e) in [(3, 5, [4, 6, 9]), (8, 16, [8, 8, 8]), (2, 9, [3, 3, 17])] {
            let mut c64 = Conv3d::<f64>::new(cin, cout, 3, true, &mut rng);
            let mut c32 = Conv3d::<f32> {
                weight: c64.weight.cast().with_grad(),
                bias: c64.bias.as_ref().map(|b| b.cast().with_grad()),
                k: 3,
                input: None,
            };
            let x = random(&[2, cin, e[0], e[1], e[2]], &mut rng);
            let dy = random(&[2, cout, e[0], e[1], e[2]], &mut rng);
            let y64 = c64.forward(&x, true).unwrap();
            let y32 = c32.forward(&x.cast(), true).unwrap();
            let dx64 = c64.backward(&dy).unwrap();
            let dx32 = c32.backward(&dy.cast()).unwrap();
            let close = |a: &[f64], b: &[f32]| a.iter().zip(b).all(|(&p, &q)| (p - q as f64).abs() < 1e-4 * (1.0 + p.abs()));
            assert!(close(&y64.data, &y32.data));
            assert!(close(&dx64.data, &dx32.data));
            assert!(close(c64.weight.grad.as_ref().unwrap(), c32.weight.grad.as_ref().unwrap()));
        }
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut conv = Conv3d::<f32>::new(1, 1, 3, true, &mut rng);
        assert!(matches!(conv.backward(&act(1, 1, [2, 2, 2])), Err(Error::BackwardBeforeForward)));
        let mut bn = BatchNorm3d::<f32>::new(1);
        assert!(matches!(bn.backward(&act(1, 1, [2, 2, 2])), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn batch_norm_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[3, 2, 2, 3, 4], &mut rng);
        let mut bn = BatchNorm3d::<f64>::new(2);
        let y = bn.forward(&x, true, false).unwrap();
        let vol = 24;
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|s| y.data[(s * 2 + ch) * vol..][..vol].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / 72.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 72.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.data.iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn pool_upsample_concat_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[1, 2, 2, 4, 2], &mut rng);
        let mut pool = MaxPool::default();
        let p = pool.forward(&x, true).unwrap();
        assert_eq!(p.shape, vec![1, 2, 1, 2, 1]);
        for ch in 0..2 {
            for yy in 0..2 {
                let mut m = f64::MIN;
                for z in 0..2 {
                    for y2 in 0..2 {
                        for xx in 0..2 {
                            m = m.max(x.data[((ch * 2 + z) * 4 + 2 * yy + y2) * 2 + xx]);
                        }
                    }
                }
                assert_eq!(p.data[ch * 2 + yy], m);
            }
        }
        let g = pool.backward(&p).unwrap();
        assert_eq!(g.data.iter().filter(|&&v| v != 0.0).count(), 4);

        let u = upsample2(&p);
        assert_eq!(u.shape, x.shape);
        let back = upsample2_backward(&u);
        for (a, b) in back.data.iter().zip(&p.data) {
            assert!((a - 8.0 * b).abs() < 1e-12);
        }

        let c = concat(&x, &u).unwrap();
        let (a, b) = split(&c, 2);
        assert_eq!(a.data, x.data);
        assert_eq!(b.data, u.data);
    }
}
