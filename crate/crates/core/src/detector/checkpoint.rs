use std::path::Path;

use super::optim::{AdamWConfig, OptimState};
use super::tensor::{Real, Tensor};
use super::unet::{NetConfig, UNet};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

const MAGIC: &[u8; 4] = b"PTRC";
const VERSION: u32 = 1;
const CONFIG_TENSOR: &str = "meta.config";
const STEP_TENSOR: &str = "adam.step";
const OPTIM_TENSOR: &str = "adam.config";

/// Named tensors of a saved network plus optional optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetConfig,
    pub tensors: Vec<(String, Tensor<f32>)>,
    pub optim: Option<OptimState>,
}

impl Checkpoint {
    pub fn from_net<T: Real>(net: &mut UNet<T>, optim: Option<&OptimState>) -> Self {
        Self {
            config: net.config(),
            tensors: net.named_tensors().into_iter().map(|(n, t)| (n, t.cast())).collect(),
            optim: optim.cloned(),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// A network with this checkpoint's architecture and weights.
    pub fn to_net<T: Real>(&self) -> Result<UNet<T>> {
        let mut net = UNet::new(self.config, 0)?;
        load_weights(&mut net, self)?;
        Ok(net)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut records: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        let c = self.config;
        records.push((
            CONFIG_TENSOR.into(),
            vec![3],
            vec![c.in_channels as f32, c.out_channels as f32, c.base_width as f32],
        ));
        for (name, t) in &self.tensors {
            records.push((name.clone(), t.shape.clone(), t.data.clone()));
        }
        if let Some(o) = &self.optim {
            let oc = o.config;
            records.push((
                OPTIM_TENSOR.into(),
                vec![5],
                [oc.lr, oc.beta1, oc.beta2, oc.eps, oc.weight_decay].iter().map(|&v| v as f32).collect(),
            ));
            records.push((STEP_TENSOR.into(), vec![1], vec![o.step as f32]));
            for (name, t) in &self.tensors {
                if let (Some(m), Some(v)) = (o.m.get(name), o.v.get(name)) {
                    records.push((format!("adam.m.{name}"), t.shape.clone(), m.clone()));
                    records.push((format!("adam.v.{name}"), t.shape.clone(), v.clone()));
                }
            }
        }

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        let start = out.len();
        for (name, shape, data) in &records {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(shape.len() as u8);
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let region = (out.len() - start) as u64;
        out.extend_from_slice(&region.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(Error::MalformedHeader("bad checkpoint magic".into()));
        }
        if bytes.len() < 12 + 8 {
            return Err(Error::UnexpectedEndOfCheckpoint);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let declared = u32_at(8) as usize;
        let end = bytes.len() - 8;
        let mut pos = 12;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > end {
                return Err(Error::UnexpectedEndOfCheckpoint);
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let mut records: Vec<(String, Tensor<f32>)> = Vec::new();
        while pos < end {
            let len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, len)?.to_vec())
                .map_err(|_| Error::MalformedHeader("tensor name is not UTF-8".into()))?;
            let rank = take(&mut pos, 1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize);
            }
            let n: usize = shape.iter().product();
            let payload = take(&mut pos, n.checked_mul(4).ok_or(Error::UnexpectedEndOfCheckpoint)?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push((name, Tensor::from_vec(&shape, data)?));
        }
        if records.len() != declared {
            return Err(Error::TensorCountMismatch {
                declared,
                found: records.len(),
            });
        }
        let trailer = u64::from_le_bytes(bytes[end..].try_into().unwrap());
        let actual = (end - 12) as u64;
        if trailer != actual {
            return Err(Error::ChecksumMismatch { declared: trailer, actual });
        }

        let mut config = None;
        let mut optim_cfg = None;
        let mut step = 0;
        let mut m = std::collections::BTreeMap::new();
        let mut v = std::collections::BTreeMap::new();
        let mut tensors = Vec::new();
        for (name, t) in records {
            if name == CONFIG_TENSOR {
                let d = &t.data;
                if d.len() != 3 {
                    return Err(Error::MalformedHeader("meta.config must hold 3 values".into()));
                }
                config = Some(NetConfig {
                    in_channels: d[0] as usize,
                    out_channels: d[1] as usize,
                    base_width: d[2] as usize,
                });
            } else if name == OPTIM_TENSOR {
                let d = &t.data;
                if d.len() != 5 {
                    return Err(Error::MalformedHeader("adam.config must hold 5 values".into()));
                }
                optim_cfg = Some(AdamWConfig {
                    lr: d[0] as f64,
                    beta1: d[1] as f64,
                    beta2: d[2] as f64,
                    eps: d[3] as f64,
                    weight_decay: d[4] as f64,
                });
            } else if name == STEP_TENSOR {
                step = t.data.first().copied().unwrap_or(0.0) as u64;
            } else if let Some(p) = name.strip_prefix("adam.m.") {
                m.insert(p.to_string(), t.data);
            } else if let Some(p) = name.strip_prefix("adam.v.") {
                v.insert(p.to_string(), t.data);
            } else {
                tensors.push((name, t));
            }
        }
        let config = config.ok_or_else(|| Error::MalformedHeader("missing meta.config".into()))?;
        config.validate()?;
        let optim = optim_cfg.map(|c| OptimState { config: c, step, m, v });
        Ok(Self { config, tensors, optim })
    }
}

pub fn save_checkpoint<T: Real>(net: &mut UNet<T>, state: Option<&OptimState>, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &Checkpoint::from_net(net, state).encode())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::decode(&std::fs::read(path)?)
}

/// Copies every tensor of `ckpt` into the same-named tensor of `net`. All
/// names and shapes must match; otherwise nothing is copied and the offending
/// names are reported.
pub fn load_weights<T: Real>(net: &mut UNet<T>, ckpt: &Checkpoint) -> Result<()> {
    let mut bad = Vec::new();
    let mut seen = 0;
    net.visit(&mut |name, t, _| match ckpt.tensor(&name) {
        Some(src) if src.shape == t.shape => seen += 1,
        _ => bad.push(name),
    });
    if seen != ckpt.tensors.len() {
        let mut names = Vec::new();
        net.visit(&mut |name, _, _| names.push(name));
        bad.extend(ckpt.tensors.iter().map(|(n, _)| n.clone()).filter(|n| !names.contains(n)));
    }
    if !bad.is_empty() {
        return Err(Error::IncompatibleTensors(bad));
    }
    net.visit(&mut |name, t, _| {
        let src = ckpt.tensor(&name).expect("checked above");
        t.data = src.data.iter().map(|&v| T::from_f64(v as f64)).collect();
    });
    Ok(())
}
