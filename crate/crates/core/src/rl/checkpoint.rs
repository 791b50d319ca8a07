//! Binary checkpoint: magic, version, hyperparameters, then per network the
//! layer dims followed by each layer's weights (row-major) and biases, all
//! little-endian.

use super::mlp::{Dense, Mlp};
use super::{Hyperparams, PolicyModel, RlError};

pub const MAGIC: &[u8; 4] = b"LCHS";
pub const FORMAT_VERSION: u32 = 1;

pub(super) fn encode(model: &PolicyModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let h = &model.hyper;
    for v in [h.alpha, h.beta, h.gamma, h.slope] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for net in [&model.actor, &model.critic] {
        let dims = net.dims();
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for p in net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], RlError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| RlError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, RlError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, RlError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn mlp(&mut self, slope: f64) -> Result<Mlp, RlError> {
        let n = self.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(RlError::Format(format!("implausible layer count {n}")));
        }
        let dims = (0..n)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.iter().any(|&d| d == 0 || d > 1 << 20) {
            return Err(RlError::Format(format!("implausible dims {dims:?}")));
        }
        let mut layers = Vec::with_capacity(n - 1);
        for w in dims.windows(2) {
            let weights = (0..w[0] * w[1]).map(|_| self.f64()).collect::<Result<_, _>>()?;
            let bias = (0..w[1]).map(|_| self.f64()).collect::<Result<_, _>>()?;
            layers.push(Dense {
                inputs: w[0],
                outputs: w[1],
                weights,
                bias,
            });
        }
        Ok(Mlp { layers, slope })
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<PolicyModel, RlError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(RlError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version > FORMAT_VERSION {
        return Err(RlError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if version == 0 {
        return Err(RlError::Format("version 0".into()));
    }
    let hyper = Hyperparams {
        alpha: r.f64()?,
        beta: r.f64()?,
        gamma: r.f64()?,
        slope: r.f64()?,
    };
    let actor = r.mlp(hyper.slope)?;
    let critic = r.mlp(hyper.slope)?;
    if r.pos != bytes.len() {
        return Err(RlError::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    if actor.input_len() != critic.input_len() || critic.output_len() != 1 {
        return Err(RlError::Format("actor and critic shapes disagree".into()));
    }
    Ok(PolicyModel {
        actor,
        critic,
        hyper,
    })
}
