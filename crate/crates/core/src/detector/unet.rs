use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    concat, relu_backward, relu_inplace, split, upsample2, upsample2_backward, BatchNorm3d, Conv3d, MaxPool, Pattern,
};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const STAGES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
}

impl NetConfig {
    pub fn new(in_channels: usize, base_width: usize) -> Self {
        Self {
            in_channels,
            out_channels: 2,
            base_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.in_channels) {
            return Err(Error::InvalidArgument(format!("in_channels must be 1 or 2, got {}", self.in_channels)));
        }
        if self.out_channels == 0 || self.base_width == 0 {
            return Err(Error::InvalidArgument("out_channels and base_width must be positive".into()));
        }
        Ok(())
    }
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::new(2, 16)
    }
}

/// Convolution, batch norm, ReLU.
#[derive(Debug, Clone)]
struct Cbr<T> {
    conv: Conv3d<T>,
    bn: BatchNorm3d<T>,
    out: Option<Tensor<T>>,
    gate: Pattern<Vec<bool>>,
}

impl<T: Real> Cbr<T> {
    fn new(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv3d::new(cin, cout, 3, false, rng),
            bn: BatchNorm3d::new(cout),
            out: None,
            gate: Pattern::Live,
        }
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool, cache: bool) -> Result<Tensor<T>> {
        let y = self.conv.forward(x, cache)?;
        let mut y = self.bn.forward(&y, train, cache)?;
        match &mut self.gate {
            Pattern::Fixed(on) if on.len() == y.len() => {
                for (v, &on) in y.data.iter_mut().zip(on.iter()) {
                    if !on {
                        *v = T::ZERO;
                    }
                }
            }
            gate => {
                relu_inplace(&mut y);
                if matches!(gate, Pattern::Record) {
                    *gate = Pattern::Fixed(y.data.iter().map(|&v| v > T::ZERO).collect());
                }
            }
        }
        self.out = cache.then(|| y.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let out = self.out.take().ok_or(Error::BackwardBeforeForward)?;
        let mut dy = dy;
        match &self.gate {
            Pattern::Fixed(on) if on.len() == dy.len() => {
                for (g, &on) in dy.data.iter_mut().zip(on.iter()) {
                    if !on {
                        *g = T::ZERO;
                    }
                }
            }
            _ => relu_backward(&mut dy, &out),
        }
        let d = self.bn.backward(&dy)?;
        self.conv.backward(&d)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>, bool)) {
        f(format!("{prefix}.conv.weight"), &mut self.conv.weight, true);
        f(format!("{prefix}.bn.gamma"), &mut self.bn.gamma, true);
        f(format!("{prefix}.bn.beta"), &mut self.bn.beta, true);
        f(format!("{prefix}.bn.running_mean"), &mut self.bn.running_mean, false);
        f(format!("{prefix}.bn.running_var"), &mut self.bn.running_var, false);
    }
}

#[derive(Debug, Clone)]
struct DoubleConv<T> {
    a: Cbr<T>,
    b: Cbr<T>,
}

impl<T: Real> DoubleConv<T> {
    fn new(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            a: Cbr::new(cin, cout, rng),
            b: Cbr::new(cout, cout, rng),
        }
    }

    fn forward(&mut self, x: &Tensor<T>, train: bool, cache: bool) -> Result<Tensor<T>> {
        let y = self.a.forward(x, train, cache)?;
        self.b.forward(&y, train, cache)
    }

    fn backward(&mut self, dy: Tensor<T>) -> Result<Tensor<T>> {
        let d = self.b.backward(dy)?;
        self.a.backward(d)
    }

    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>, bool)) {
        self.a.visit(&format!("{prefix}.a"), f);
        self.b.visit(&format!("{prefix}.b"), f);
    }
}

#[derive(Debug, Clone)]
struct UpStage<T> {
    up: Cbr<T>,
    block: DoubleConv<T>,
    skip_channels: usize,
}

/// Three-stage 3D U-Net producing one heatmap per output channel at input resolution.
#[derive(Debug, Clone)]
pub struct UNet<T> {
    config: NetConfig,
    enc: Vec<DoubleConv<T>>,
    pools: Vec<MaxPool>,
    bottleneck: DoubleConv<T>,
    dec: Vec<UpStage<T>>,
    head: Conv3d<T>,
    cached: bool,
}

impl<T: Real> UNet<T> {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = config.base_width;
        let widths: Vec<usize> = (0..STAGES).map(|i| w << i).collect();
        let mut enc = Vec::new();
        let mut cin = config.in_channels;
        for &c in &widths {
            enc.push(DoubleConv::new(cin, c, &mut rng));
            cin = c;
        }
        let bottleneck = DoubleConv::new(cin, cin, &mut rng);
        let mut dec = Vec::new();
        for &c in widths.iter().rev() {
            dec.push(UpStage {
                up: Cbr::new(cin, c, &mut rng),
                block: DoubleConv::new(2 * c, c, &mut rng),
                skip_channels: c,
            });
            cin = c;
        }
        let head = Conv3d::new(w, config.out_channels, 1, true, &mut rng);
        Ok(Self {
            config,
            enc,
            pools: vec![MaxPool::default(); STAGES],
            bottleneck,
            dec,
            head,
            cached: false,
        })
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    /// `x` is `[n, in_channels, d, h, w]` with every extent divisible by 8.
    /// With `train` set, batch norm uses batch statistics and updates its
    /// running estimates, and activations are kept for [`UNet::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        if x.shape.len() != 5 || x.shape[1] != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "input shape {:?}, expected [n, {}, d, h, w]",
                x.shape, self.config.in_channels
            )));
        }
        let div = 1 << STAGES;
        if x.shape[2..].iter().any(|&d| d == 0 || d % div != 0) {
            return Err(Error::ShapeMismatch(format!("input extent {:?} not divisible by {div}", &x.shape[2..])));
        }
        let cache = train;
        let mut skips = Vec::with_capacity(STAGES);
        let mut h = x.clone();
        for (block, pool) in self.enc.iter_mut().zip(&mut self.pools) {
            let s = block.forward(&h, train, cache)?;
            h = pool.forward(&s, cache)?;
            skips.push(s);
        }
        h = self.bottleneck.forward(&h, train, cache)?;
        for stage in &mut self.dec {
            let u = stage.up.forward(&upsample2(&h), train, cache)?;
            let skip = skips.pop().expect("one skip per stage");
            h = stage.block.forward(&concat(&skip, &u)?, train, cache)?;
        }
        let out = self.head.forward(&h, cache)?;
        self.cached = cache;
        Ok(out)
    }

    /// Accumulates parameter gradients for the last training-mode forward pass.
    pub fn backward(&mut self, dout: &Tensor<T>) -> Result<()> {
        if !self.cached {
            return Err(Error::BackwardBeforeForward);
        }
        self.cached = false;
        let mut g = self.head.backward(dout)?;
        let mut skip_grads = Vec::with_capacity(STAGES);
        for stage in self.dec.iter_mut().rev() {
            let d = stage.block.backward(g)?;
            let (ds, du) = split(&d, stage.skip_channels);
            skip_grads.push(ds);
            let d = stage.up.backward(du)?;
            g = upsample2_backward(&d);
        }
        g = self.bottleneck.backward(g)?;
        for (block, pool) in self.enc.iter_mut().zip(&mut self.pools).rev() {
            let mut d = pool.backward(&g)?;
            let ds = skip_grads.pop().expect("one skip per stage");
            for (a, b) in d.data.iter_mut().zip(ds.data) {
                *a += b;
            }
            g = block.backward(d)?;
        }
        Ok(())
    }

    /// With `true`, the next forward pass records which ReLUs pass and which
    /// max-pool inputs win, and later passes replay those choices. The network
    /// is then smooth in its parameters near the recorded point. `false`
    /// returns to normal evaluation.
    pub fn freeze_activations(&mut self, freeze: bool) {
        let mut cbrs: Vec<&mut Cbr<T>> = Vec::new();
        for b in self.enc.iter_mut().chain(std::iter::once(&mut self.bottleneck)) {
            cbrs.extend([&mut b.a, &mut b.b]);
        }
        for s in &mut self.dec {
            cbrs.extend([&mut s.up, &mut s.block.a, &mut s.block.b]);
        }
        for c in cbrs {
            c.gate = if freeze { Pattern::Record } else { Pattern::Live };
        }
        for p in &mut self.pools {
            p.pattern = if freeze { Pattern::Record } else { Pattern::Live };
        }
    }

    /// Visits every tensor with its checkpoint name; the flag marks trainable
    /// parameters (as opposed to batch-norm running statistics).
    pub fn visit(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>, bool)) {
        for (i, b) in self.enc.iter_mut().enumerate() {
            b.visit(&format!("enc{}", i + 1), f);
        }
        self.bottleneck.visit("bottleneck", f);
        for (i, s) in self.dec.iter_mut().enumerate() {
            let level = STAGES - i;
            s.up.visit(&format!("dec{level}.up"), f);
            s.block.visit(&format!("dec{level}"), f);
        }
        f("head.weight".into(), &mut self.head.weight, true);
        if let Some(b) = &mut self.head.bias {
            f("head.bias".into(), b, true);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, t, _| t.zero_grad());
    }

    pub fn num_parameters(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t, trainable| {
            if trainable {
                n += t.len()
            }
        });
        n
    }

    /// Name and copy of every tensor, in visiting order.
    pub fn named_tensors(&mut self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(&mut |name, t, _| {
            out.push((
                name,
                Tensor {
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                    grad: None,
                },
            ))
        });
        out
    }

    /// Same architecture and weights in another scalar type.
    pub fn cast<U: Real>(&mut self) -> UNet<U> {
        let mut other = UNet::<U>::new(self.config, 0).expect("config already validated");
        let tensors = self.named_tensors();
        let mut i = 0;
        other.visit(&mut |_, t, _| {
            t.data = tensors[i].1.data.iter().map(|v| U::from_f64(v.to_f64())).collect();
            i += 1;
        });
        other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_matches_input_extent() {
        let mut net = UNet::<f32>::new(NetConfig::new(2, 2), 0).unwrap();
        for e in [[8, 8, 8], [16, 8, 24]] {
            let x = Tensor::zeros(&[1, 2, e[0], e[1], e[2]]);
            let y = net.forward(&x, false).unwrap();
            assert_eq!(y.shape, vec![1, 2, e[0], e[1], e[2]]);
        }
        assert!(net.forward(&Tensor::zeros(&[1, 2, 12, 8, 8]), false).is_err());
        assert!(net.forward(&Tensor::zeros(&[1, 1, 8, 8, 8]), false).is_err());
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let mut net = UNet::<f32>::new(NetConfig::new(1, 2), 1).unwrap();
        net.visit(&mut |name, t, _| {
            if name.starts_with("head.") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        });
        let x = Tensor::from_vec(&[1, 1, 8, 8, 8], (0..512).map(|i| (i % 7) as f32).collect()).unwrap();
        let y = net.forward(&x, true).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_needs_training_forward() {
        let mut net = UNet::<f32>::new(NetConfig::new(1, 2), 1).unwrap();
        let dy = Tensor::zeros(&[1, 2, 8, 8, 8]);
        assert!(matches!(net.backward(&dy), Err(Error::BackwardBeforeForward)));
        net.forward(&Tensor::zeros(&[1, 1, 8, 8, 8]), false).unwrap();
        assert!(matches!(net.backward(&dy), Err(Error::BackwardBeforeForward)));
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut net = UNet::<f64>::new(NetConfig::new(1, 2), 5).unwrap();
        let x = Tensor::from_vec(&[2, 1, 8, 8, 8], (0..1024).map(|i| ((i * 37) % 11) as f64 / 11.0).collect()).unwrap();
        net.forward(&x, true).unwrap();
        net.backward(&Tensor::zeros(&[2, 2, 8, 8, 8])).unwrap();
        net.visit(&mut |name, t, trainable| {
            if trainable {
                assert!(t.grad.as_ref().unwrap().iter().all(|&g| g == 0.0), "{name}");
            }
        });
    }

    #[test]
    fn seeded_init_is_stable() {
        let x = Tensor::from_vec(&[1, 2, 8, 8, 8], (0..1024).map(|i| ((i * 13) % 5) as f32).collect()).unwrap();
        let a = UNet::<f32>::new(NetConfig::new(2, 4), 9).unwrap().forward(&x, false).unwrap();
        let b = UNet::<f32>::new(NetConfig::new(2, 4), 9).unwrap().forward(&x, false).unwrap();
        assert_eq!(a.data, b.data);
        let c = UNet::<f32>::new(NetConfig::new(2, 4), 10).unwrap().forward(&x, false).unwrap();
        assert_ne!(a.data, c.data);
    }
}
